use rayon::prelude::*;

use super::{Comparison, ExperimentReport, FitRecord, Table};
use crate::config::SimConfig;
use crate::dynamics::{weighted_norm_y, weighted_norm_z, PhasePoint};
use crate::error::{Error, Result};
use crate::random::{sample_mu, RngStream};
use crate::spectral::{apply_d, sharp_complement, to_grid};
use crate::stats::{linear_fit, median, quantile_sorted};

/// Smallest number of exceedances for a threshold to enter the fit.
pub const MIN_HITS: usize = 20;
/// Smallest accepted `R^2` of the tail fit.
pub const MIN_R2: f64 = 0.9;
/// Largest accepted relative error of the fitted decay exponent.
pub const SHIFT_TOL: f64 = 0.3;
/// Points of the automatic threshold grid.
pub const AUTO_POINTS: usize = 20;

const SHIFT_QUANTILES: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

/// Random variable whose tail is measured.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TailStatistic {
    /// `||S(t) p||_{Y^beta}`.
    #[default]
    YNorm,
    /// `||S(t) p||_{Z^beta}`.
    ZNorm,
    /// `||D^theta u||_{L^infinity}`.
    DthetaLinf,
    /// `N^s ||Pi_N^perp p||_{Y^beta}`, paired with the same at `2N`.
    Highfreq,
}

fn complement(radius: f64, p: &PhasePoint) -> PhasePoint {
    p.map(|f| sharp_complement(radius, f))
}

/// Values of the statistic for one sample; `Highfreq` also returns the `2N` value.
fn evaluate(cfg: &SimConfig, stat: TailStatistic, p: &PhasePoint) -> Result<(f64, f64)> {
    Ok(match stat {
        TailStatistic::YNorm => (weighted_norm_y(p, cfg)?, f64::NAN),
        TailStatistic::ZNorm => (weighted_norm_z(p, cfg)?, f64::NAN),
        TailStatistic::DthetaLinf => (to_grid(&apply_d(cfg.theta, &p.u), cfg.grid_m)?.max_abs(), f64::NAN),
        TailStatistic::Highfreq => (
            weighted_norm_y(&complement(cfg.n_cut, p), cfg)?,
            weighted_norm_y(&complement(2.0 * cfg.n_cut, p), cfg)?,
        ),
    })
}

/// [`AUTO_POINTS`] equally spaced thresholds from the median to the
/// [`MIN_HITS`]-th largest value.
pub fn auto_r_grid(values: &[f64]) -> Vec<f64> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    if sorted.len() < MIN_HITS {
        return Vec::new();
    }
    let lo = median(&sorted);
    let hi = sorted[sorted.len() - MIN_HITS];
    (0..AUTO_POINTS)
        .map(|i| lo + (hi - lo) * i as f64 / (AUTO_POINTS - 1) as f64)
        .collect()
}

/// Monte Carlo tail frequencies `P(X >= R)` over the threshold grid and a
/// fit of `log P` against `R^2`. An empty grid selects [`auto_r_grid`].
pub fn run_tail(cfg: &SimConfig, samples: usize, r_grid: &[f64], stat: TailStatistic) -> Result<ExperimentReport> {
    if stat == TailStatistic::Highfreq && !(cfg.n_cut.is_finite() && cfg.n_cut > 0.0) {
        return Err(Error::InvalidParameter("the highfreq statistic needs a finite N > 0".into()));
    }
    let pairs: Vec<(f64, f64)> = (0..samples as u64)
        .into_par_iter()
        .map(|i| evaluate(cfg, stat, &sample_mu(cfg, cfg.maxmode, &RngStream::new(cfg.seed, i))))
        .collect::<Result<_>>()?;
    let scale = if stat == TailStatistic::Highfreq { cfg.n_cut.powf(cfg.s) } else { 1.0 };
    let values: Vec<f64> = pairs.iter().map(|p| scale * p.0).collect();

    let grid = if r_grid.is_empty() { auto_r_grid(&values) } else { r_grid.to_vec() };
    let skip = grid.len().div_ceil(10);
    let mut report = ExperimentReport::new("tail", cfg);
    let mut table = Table::new("tail", &["R", "hits", "frequency", "in_fit"]);
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for (i, &r) in grid.iter().enumerate() {
        let hits = values.iter().filter(|&&x| x >= r).count();
        let freq = hits as f64 / samples as f64;
        let used = i >= skip && hits >= MIN_HITS;
        if i >= skip && hits < MIN_HITS {
            report
                .notes
                .push(format!("too few exceedances: R = {r} has {hits} hits (< {MIN_HITS}), dropped from the fit"));
        }
        if used {
            xs.push(r * r);
            ys.push(freq.ln());
        }
        table.push(vec![r, hits as f64, freq, used as u8 as f64]);
    }
    report.tables.push(table);

    let mut values_table = Table::new("statistic", &["sample", "value", "value_2n"]);
    for (i, (v, p)) in values.iter().zip(&pairs).enumerate() {
        values_table.push(vec![i as f64, *v, scale * p.1]);
    }
    report.tables.push(values_table);

    let fit = if xs.len() >= 2 { linear_fit(&xs, &ys).ok() } else { None };
    if let Some(f) = &fit {
        report.fits.push(FitRecord::linear("log_frequency_vs_r_squared", f));
    }
    report.push_verdict("tail_slope", fit.map_or(f64::NAN, |f| f.slope), Comparison::Lt, 0.0);
    report.push_verdict("tail_fit_r2", fit.map_or(f64::NAN, |f| f.r2), Comparison::Ge, MIN_R2);

    if stat == TailStatistic::Highfreq {
        let mut a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let mut b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        a.sort_by(f64::total_cmp);
        b.sort_by(f64::total_cmp);
        let mut shift = Table::new("highfreq_shift", &["quantile", "q_n", "q_2n", "exponent"]);
        let mut exps = Vec::new();
        for q in SHIFT_QUANTILES {
            let (qa, qb) = (quantile_sorted(&a, q), quantile_sorted(&b, q));
            let e = -(qb / qa).log2();
            exps.push(e);
            shift.push(vec![q, qa, qb, e]);
        }
        report.tables.push(shift);
        let s_hat = median(&exps);
        report.notes.push(format!("fitted decay exponent {s_hat} against s = {}", cfg.s));
        report.push_verdict("highfreq_exponent_rel_error", ((s_hat - cfg.s) / cfg.s).abs(), Comparison::Le, SHIFT_TOL);
    }
    report.notes.push(format!("statistic {stat} over {samples} draws in the box K = {}", cfg.maxmode));
    Ok(report)
}
