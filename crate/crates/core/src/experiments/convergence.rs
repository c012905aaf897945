use rayon::prelude::*;

use super::{Comparison, ExperimentReport, FitRecord, Snapshot, Table};
use crate::config::SimConfig;
use crate::dynamics::{step_count, FlowTruncation, PhasePoint, Propagator, SpatialNorm, TimeWeights};
use crate::error::{Error, Result};
use crate::random::{mu_draw, RngStream};
use crate::spectral::{default_grid_points, sharp_project, sobolev_norm, to_grid};
use crate::stats::linear_fit;

/// Log-log slope required of the truncation errors.
pub const SLOPE_LIMIT: f64 = -0.3;

/// Number of recorded times per run (plus `t = 0`).
const RECORDS: usize = 64;

fn project(radius: f64, p: &PhasePoint) -> PhasePoint {
    p.map(|f| sharp_project(radius, f))
}

fn recorded_states(prop: &Propagator, p: &PhasePoint, h: f64, nsteps: usize, stride: usize) -> Result<Vec<PhasePoint>> {
    let mut out = Vec::new();
    prop.run(p, 0.0, h, nsteps, stride, |_, _, s| {
        out.push(s.clone());
        Ok(())
    })?;
    Ok(out)
}

fn sup_error(states: &[PhasePoint], reference: &[PhasePoint], sigma: f64, alpha: f64) -> Result<f64> {
    let mut sup: f64 = 0.0;
    for (a, b) in states.iter().zip(reference) {
        sup = sup.max(a.sub(b)?.pair_norm(sigma, alpha));
    }
    Ok(sup)
}

fn fit_positive(n: &[f64], e: &[f64]) -> Option<crate::stats::LinearFit> {
    let (x, y): (Vec<f64>, Vec<f64>) = n
        .iter()
        .zip(e)
        .filter(|(_, &e)| e > 0.0 && e.is_finite())
        .map(|(n, e)| (n.ln(), e.ln()))
        .unzip();
    if x.len() < 2 {
        return None;
    }
    linear_fit(&x, &y).ok()
}

fn max_ratio(e: &[f64]) -> f64 {
    e.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max)
}

/// Evolves the sharp projections `Pi_N` of one Gaussian draw and compares
/// them with the reference run at `n_ref`, in the pair norm
/// `H^sigma x H^{sigma-alpha}`, sup over recorded times in `[0, t_final]`.
/// A control run replaces the data at each `N` by an independent draw.
pub fn run_convergence(
    cfg: &SimConfig,
    n_list: &[f64],
    n_ref: f64,
    t_final: f64,
    seed: u64,
) -> Result<ExperimentReport> {
    if !n_ref.is_finite() || n_list.iter().any(|&n| n > n_ref) {
        return Err(Error::InvalidParameter(format!(
            "convergence needs a finite N_ref above every N (N_ref = {n_ref})"
        )));
    }
    let maxmode = n_ref.ceil() as usize;
    let points = cfg.grid_m.max(default_grid_points(maxmode));
    let prop = Propagator::new(cfg.d, maxmode, points, cfg.alpha, cfg.potential, FlowTruncation::Sharp(n_ref))?
        .with_kick(cfg.kick);
    let (nsteps, h) = step_count(t_final, cfg.dt);
    let stride = (nsteps / RECORDS).max(1);

    let draw = |index: u64| mu_draw(cfg.d, cfg.alpha, maxmode, n_ref, &RngStream::new(seed, index), 0);
    let base = draw(0);
    let reference = recorded_states(&prop, &base, h, nsteps, stride)?;

    let runs: Vec<(f64, f64, f64)> = n_list
        .par_iter()
        .enumerate()
        .map(|(i, &n)| {
            let error = sup_error(&recorded_states(&prop, &project(n, &base), h, nsteps, stride)?, &reference, cfg.sigma, cfg.alpha)?;
            let control_data = project(n, &draw(1 + i as u64));
            let control = sup_error(&recorded_states(&prop, &control_data, h, nsteps, stride)?, &reference, cfg.sigma, cfg.alpha)?;
            let tail = base.sub(&project(n, &base))?;
            Ok((error, control, z_norm(cfg, &tail, points)?))
        })
        .collect::<Result<_>>()?;

    let errors: Vec<f64> = runs.iter().map(|r| r.0).collect();
    let controls: Vec<f64> = runs.iter().map(|r| r.1).collect();
    let z: Vec<f64> = runs.iter().map(|r| r.2).collect();

    let mut report = ExperimentReport::new("convergence", cfg);
    let mut table = Table::new("convergence", &["N", "sup_error", "control_error", "z_norm_difference"]);
    for (i, &n) in n_list.iter().enumerate() {
        table.push(vec![n, errors[i], controls[i], z[i]]);
    }
    report.tables.push(table);

    let mut traj = Table::new("reference_trajectory", &["time", "J", "sobolev_sigma", "Linf"]);
    for (j, s) in reference.iter().enumerate() {
        let t = ((j * stride).min(nsteps)) as f64 * h;
        traj.push(vec![t, prop.energy_j(s)?, sobolev_norm(cfg.sigma, &s.u), to_grid(&s.u, points)?.max_abs()]);
    }
    report.tables.push(traj);

    let fit = fit_positive(n_list, &errors);
    let control_fit = fit_positive(n_list, &controls);
    if let Some(f) = &fit {
        report.fits.push(FitRecord::linear("log_error_vs_log_n", f));
    }
    if let Some(f) = &control_fit {
        report.fits.push(FitRecord::linear("control_log_error_vs_log_n", f));
    }
    if let Some(f) = fit_positive(n_list, &z) {
        report.fits.push(FitRecord::linear("log_z_difference_vs_log_n", &f));
    }
    report.push_verdict("errors_strictly_decreasing", max_ratio(&errors), Comparison::Lt, 1.0);
    report.push_verdict("loglog_slope", fit.map_or(f64::NAN, |f| f.slope), Comparison::Lt, SLOPE_LIMIT);
    report.push_verdict("z_difference_decreasing", max_ratio(&z), Comparison::Lt, 1.0);
    report.push_verdict(
        "control_shows_no_decay",
        control_fit.map_or(f64::NAN, |f| f.slope),
        Comparison::Gt,
        SLOPE_LIMIT,
    );
    report.notes.push(format!(
        "box K = {maxmode}, M = {points}, sharp flow at N_ref = {n_ref}, {nsteps} steps of {h:e}, \
         errors sampled every {stride} steps"
    ));
    report.snapshots.push(Snapshot {
        name: "reference_final".into(),
        point: reference.last().cloned().unwrap_or(base),
    });
    Ok(report)
}

/// `Z^beta` norm with time sampling raised to resolve the box when needed.
fn z_norm(cfg: &SimConfig, p: &PhasePoint, points: usize) -> Result<f64> {
    let mut w = TimeWeights::from_config(cfg, points);
    let max_nsq = (p.maxmode() as f64).powi(2) * p.dim() as f64;
    let required = TimeWeights::required_samples((1.0 + max_nsq).powf(cfg.alpha / 2.0));
    w.samples_per_window = w.samples_per_window.max(required);
    w.evaluate(p, SpatialNorm::Linf)
}
