//! Monte-Carlo check of the concentration bound behind the intra-class
//! metric: for class data drawn i.i.d. from N(mu, sigma^2), the gap between
//! train and test sample means satisfies
//! `P(|mean_tr - mean_te| >= 2 k sigma / sqrt(n_te)) <= 2 / k^2`
//! for any k > 0 (assuming `n_tr >= n_te`).

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::AnalysisError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChebyshevSimConfig {
    pub sigma: f64,
    pub n_tr: usize,
    pub n_te: usize,
    pub k_values: Vec<f64>,
    pub trials: usize,
    pub seed: u64,
}

impl Default for ChebyshevSimConfig {
    fn default() -> Self {
        Self {
            sigma: 1.0,
            n_tr: 200,
            n_te: 100,
            k_values: vec![1.0, 2.0, 3.0, 4.0],
            trials: 100_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ChebyshevResult {
    pub k: f64,
    /// Gap threshold `2 k sigma / sqrt(n_te)`.
    pub threshold: f64,
    /// Fraction of trials whose |mean_tr - mean_te| reached the threshold.
    pub empirical: f64,
    /// The bound `2 / k^2` (vacuous when above 1).
    pub bound: f64,
    /// Three standard errors of the Monte-Carlo estimate at the bound.
    pub slack: f64,
    pub within_bound: bool,
}

/// Draws `trials` train/test pairs and measures how often the mean gap
/// exceeds each k's threshold.
pub fn chebyshev_simulate(
    cfg: &ChebyshevSimConfig,
) -> Result<Vec<ChebyshevResult>, AnalysisError> {
    if cfg.sigma <= 0.0 {
        return Err(AnalysisError::BadParam("sigma must be positive".into()));
    }
    if cfg.n_tr == 0 || cfg.n_te == 0 {
        return Err(AnalysisError::BadParam("n_tr and n_te must be positive".into()));
    }
    if cfg.n_tr < cfg.n_te {
        return Err(AnalysisError::NTrLessThanNTe { n_tr: cfg.n_tr, n_te: cfg.n_te });
    }
    if cfg.trials == 0 {
        return Err(AnalysisError::BadParam("trials must be positive".into()));
    }
    if cfg.k_values.iter().any(|&k| k <= 0.0) {
        return Err(AnalysisError::BadParam("k values must be positive".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.sigma).expect("validated sigma");
    let mut gaps = Vec::with_capacity(cfg.trials);
    for _ in 0..cfg.trials {
        let mut sum_tr = 0.0;
        for _ in 0..cfg.n_tr {
            sum_tr += normal.sample(&mut rng);
        }
        let mut sum_te = 0.0;
        for _ in 0..cfg.n_te {
            sum_te += normal.sample(&mut rng);
        }
        gaps.push((sum_tr / cfg.n_tr as f64 - sum_te / cfg.n_te as f64).abs());
    }

    let results = cfg
        .k_values
        .iter()
        .map(|&k| {
            let threshold = 2.0 * k * cfg.sigma / (cfg.n_te as f64).sqrt();
            let hits = gaps.iter().filter(|&&g| g >= threshold).count();
            let empirical = hits as f64 / cfg.trials as f64;
            let bound = 2.0 / (k * k);
            let p = bound.min(1.0);
            let slack = 3.0 * (p * (1.0 - p) / cfg.trials as f64).sqrt();
            ChebyshevResult {
                k,
                threshold,
                empirical,
                bound,
                slack,
                within_bound: empirical <= bound + slack,
            }
        })
        .collect();
    Ok(results)
}
