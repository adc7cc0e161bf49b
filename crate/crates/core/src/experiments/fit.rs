use serde::{Deserialize, Serialize};

/// Least-squares line y = slope x + intercept.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    pub slope: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl ScalingFit {
    pub fn fit(xs: Vec<f64>, ys: Vec<f64>) -> Self {
        let n = xs.len().min(ys.len()) as f64;
        let mx = xs.iter().sum::<f64>() / n;
        let my = ys.iter().sum::<f64>() / n;
        let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
        let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
        let slope = if sxx > 0.0 { sxy / sxx } else { f64::NAN };
        let intercept = my - slope * mx;
        let r2 = if syy > 0.0 { (sxy * sxy) / (sxx * syy) } else { 1.0 };
        ScalingFit { xs, ys, slope, intercept, r2 }
    }

    /// Fit of log y against log x.
    pub fn loglog(xs: &[f64], ys: &[f64]) -> Self {
        Self::fit(xs.iter().map(|x| x.ln()).collect(), ys.iter().map(|y| y.ln()).collect())
    }

    pub fn predict(&self, x: f64) -> f64 {
        self.slope * x + self.intercept
    }
}
