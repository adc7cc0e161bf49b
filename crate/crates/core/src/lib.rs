//! Random Schrodinger operators on a periodic box: potentials, Fourier
//! multipliers, operator norms, eigenvalue search and probabilistic tools.

pub mod eigsearch;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod io;
pub mod multipliers;
pub mod nufft;
pub mod opnorm;
pub mod potentials;
pub mod probml;
pub mod rng;

pub use error::{Error, Result};
pub use grid::{make_grid, BoxGrid, GridFunction, Space, C64};
