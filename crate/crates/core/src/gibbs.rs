//! Potentials, Gibbs densities `G_N = exp(-F_N)` relative to the Gaussian
//! measure, rejection sampling, and the `F_N` convergence diagnostic.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::dynamics::PhasePoint;
use crate::error::{Error, Result};
use crate::random::{mu_draw, GaussianSource, RngStream, LANES_PER_TRY, LANE_ACCEPT};
use crate::spectral::{smooth_project, to_grid, CutoffPsi, SpectralField};
use crate::stats::{mann_kendall, MannKendall};

/// Nonlinearity `f = F'` with potential `F >= 0`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Potential {
    /// `f(u) = e^u`, `F(u) = e^u`.
    Exp,
    /// `f(u) = u^{2k+1}`, `F(u) = u^{2k+2} / (2k+2)`.
    Power(u32),
}

impl Potential {
    /// `F(u)`.
    pub fn density(&self, u: f64) -> f64 {
        match *self {
            Potential::Exp => u.exp(),
            Potential::Power(k) => {
                let p = 2 * k as i32 + 2;
                u.powi(p) / p as f64
            }
        }
    }

    /// `f(u) = F'(u)`.
    pub fn force(&self, u: f64) -> f64 {
        match *self {
            Potential::Exp => u.exp(),
            Potential::Power(k) => u.powi(2 * k as i32 + 1),
        }
    }

    pub fn power_k(&self) -> Option<u32> {
        match *self {
            Potential::Exp => None,
            Potential::Power(k) => Some(k),
        }
    }
}

impl fmt::Display for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Exp => write!(f, "exp"),
            Potential::Power(k) => write!(f, "power(k={k})"),
        }
    }
}

/// `F_N(u) = int F(pi_N u)` by trapezoidal quadrature on an `M`-point grid.
pub fn potential_f(radius: f64, u: &SpectralField, pot: Potential, points: usize) -> Result<f64> {
    let g = to_grid(&smooth_project(radius, u, &CutoffPsi), points)?;
    Ok(g.integrate(|x| pot.density(x)))
}

/// `G_N(u) = exp(-F_N(u))`, in `(0, 1]`.
pub fn gibbs_weight(radius: f64, u: &SpectralField, pot: Potential, points: usize) -> Result<f64> {
    Ok((-potential_f(radius, u, pot, points)?).exp())
}

/// Accepted sample of the truncated Gibbs measure with bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsDraw {
    pub point: PhasePoint,
    /// Number of proposals consumed (the accepted one included).
    pub tries: usize,
    pub weight: f64,
}

/// Rejection sampler: propose from the truncated Gaussian measure and accept
/// with probability `G_N(u)`. Try `j` reads lanes `3j, 3j+1, 3j+2`.
pub fn sample_gibbs_rejection(
    cfg: &SimConfig,
    radius: f64,
    pot: Potential,
    src: &dyn GaussianSource,
    max_tries: usize,
) -> Result<GibbsDraw> {
    let mut weight_sum = 0.0;
    for j in 0..max_tries {
        let p = mu_draw(cfg.d, cfg.alpha, cfg.maxmode, radius, src, j as u32);
        let w = gibbs_weight(radius, &p.u, pot, cfg.grid_m)?;
        weight_sum += w;
        let u = src.uniform(LANES_PER_TRY * j as u32 + LANE_ACCEPT, 0);
        if u < w {
            return Ok(GibbsDraw {
                point: p,
                tries: j + 1,
                weight: w,
            });
        }
    }
    Err(Error::ExhaustedTries {
        tries: max_tries,
        acceptance_rate: if max_tries == 0 { 0.0 } else { weight_sum / max_tries as f64 },
    })
}

/// Coupled estimates of `||F_{N_i} - F_{N_{i+1}}||_{L^p(d mu)}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FConvergence {
    pub n_list: Vec<f64>,
    pub p: f64,
    /// One entry per consecutive pair `(N_i, N_{i+1})`.
    pub lp_differences: Vec<f64>,
    /// Same estimate on the first half of the samples.
    pub lp_differences_half: Vec<f64>,
    pub trend: MannKendall,
}

/// Every sample is drawn once in the box of `cfg.maxmode` and projected to
/// each `N`, so the differences are coupled through the same `omega`.
pub fn convergence_diagnostic_f(
    cfg: &SimConfig,
    n_list: &[f64],
    p: f64,
    samples: usize,
) -> Result<FConvergence> {
    if n_list.is_empty() {
        return Err(Error::InvalidParameter("empty N list".into()));
    }
    let pot = cfg.potential;
    let rows: Vec<Vec<f64>> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let src = RngStream::new(cfg.seed, i);
            let u = mu_draw(cfg.d, cfg.alpha, cfg.maxmode, f64::INFINITY, &src, 0).u;
            n_list
                .iter()
                .map(|&n| potential_f(n, &u, pot, cfg.grid_m))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    let lp = |rows: &[Vec<f64>]| -> Vec<f64> {
        (0..n_list.len().saturating_sub(1))
            .map(|j| {
                let m = rows
                    .iter()
                    .map(|r| (r[j] - r[j + 1]).abs().powf(p))
                    .sum::<f64>()
                    / rows.len() as f64;
                m.powf(1.0 / p)
            })
            .collect()
    };
    let lp_differences = lp(&rows);
    let lp_differences_half = lp(&rows[..rows.len().div_ceil(2)]);
    let trend = mann_kendall(&lp_differences);
    Ok(FConvergence {
        n_list: n_list.to_vec(),
        p,
        lp_differences,
        lp_differences_half,
        trend,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn cfg() -> SimConfig {
        SimConfig::default()
    }

    #[test]
    fn potential_of_zero_and_constants() {
        let zero = SpectralField::zeros(1, 4);
        assert!((potential_f(4.0, &zero, Potential::Exp, 20).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert_eq!(potential_f(4.0, &zero, Potential::Power(2), 20).unwrap(), 0.0);
        let one = SpectralField::constant(1, 4, 1.0);
        let f = potential_f(4.0, &one, Potential::Exp, 20).unwrap();
        assert!((f - 2.0 * PI * 1f64.exp()).abs() < 1e-10);
        let g = gibbs_weight(4.0, &zero, Potential::Exp, 20).unwrap();
        assert!((g - (-2.0 * PI).exp()).abs() < 1e-15);
        assert!((g - 1.8674e-3).abs() < 1e-7);
        assert_eq!(gibbs_weight(4.0, &zero, Potential::Power(1), 20).unwrap(), 1.0);
    }

    #[test]
    fn shift_multiplies_exp_potential() {
        let u = crate::spectral::test_field(1, 4, 7);
        let c = 0.7;
        let shifted = u.add(&SpectralField::constant(1, 4, c)).unwrap();
        let a = potential_f(8.0, &u, Potential::Exp, 20).unwrap();
        let b = potential_f(8.0, &shifted, Potential::Exp, 20).unwrap();
        assert!((b / a - c.exp()).abs() < 1e-13);
    }

    #[test]
    fn power_potential_with_zero_data_always_accepts() {
        let c = SimConfig { potential: Potential::Power(1), ..cfg() };
        let src = crate::random::ConstantSource(0.0);
        let d = sample_gibbs_rejection(&c, 4.0, Potential::Power(1), &src, 1).unwrap();
        assert_eq!(d.tries, 1);
        assert_eq!(d.weight, 1.0);
    }

    #[test]
    fn exhausted_tries_reports_mean_weight() {
        let err = sample_gibbs_rejection(&cfg(), 4.0, Potential::Exp, &crate::random::ConstantSource(0.0), 3)
            .unwrap_err();
        match err {
            Error::ExhaustedTries { tries, acceptance_rate } => {
                assert_eq!(tries, 3);
                assert!((acceptance_rate - (-2.0 * PI).exp()).abs() < 1e-12);
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn equal_n_gives_zero_difference() {
        let r = convergence_diagnostic_f(&cfg(), &[4.0, 4.0], 2.0, 16).unwrap();
        assert_eq!(r.lp_differences, vec![0.0]);
    }
}
