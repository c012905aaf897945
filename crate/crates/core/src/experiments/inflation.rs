use rayon::prelude::*;

use super::{Comparison, ExperimentReport, Snapshot, Table};
use crate::config::SimConfig;
use crate::dynamics::{step_count, FlowTruncation, PhasePoint, Propagator};
use crate::error::{Error, Result};
use crate::inflation::{build_scaled_data, eval_vn_scaled, solve_profile, BumpPhi, InflationParams, OdeProfile, DEFAULT_DT_ODE};
use crate::spectral::{default_grid_points, from_grid, sobolev_norm};

/// Amplitude factor of the linear-regime control.
pub const CONTROL_SCALE: f64 = 1e-6;
/// Accepted window for the control amplification.
pub const CONTROL_WINDOW: (f64, f64) = (0.9, 1.1);
/// Minimum number of steps per `[0, t_n]`.
const MIN_STEPS: f64 = 256.0;
const RECORDS: usize = 64;

/// Parameters for every `n` in `cfg.n_list`.
pub fn inflation_params(cfg: &SimConfig) -> Result<Vec<InflationParams>> {
    let k = cfg
        .k()
        .ok_or_else(|| Error::InvalidParameter("inflation runs need the power potential".into()))?;
    cfg.n_list
        .iter()
        .map(|&n| InflationParams::new(n, cfg.s, cfg.d, k, cfg.alpha, cfg.delta1, cfg.delta2))
        .collect()
}

#[derive(Debug, Clone)]
struct Case {
    data_norm: f64,
    final_norm: f64,
    free_norm: f64,
    pair_ratio: f64,
    residual: f64,
    lower_bound_ratio: f64,
    final_state: PhasePoint,
}

fn run_case(
    cfg: &SimConfig,
    params: &InflationParams,
    base: Option<&PhasePoint>,
    profile: &OdeProfile,
    scale: f64,
) -> Result<Case> {
    let phi = BumpPhi::default();
    let maxmode = cfg.modes_per_n * params.n.round() as usize;
    let points = default_grid_points(maxmode);
    let data = build_scaled_data(params, &phi, maxmode, points, scale)?;
    let base = base.map_or_else(|| PhasePoint::zeros(params.d, maxmode), |b| b.resized(maxmode));
    let p0 = base.add(&data)?;
    let prop = Propagator::new(
        params.d,
        maxmode,
        points,
        params.alpha,
        cfg.potential,
        FlowTruncation::Sharp(f64::INFINITY),
    )?;
    let t_n = params.t_n();
    let (nsteps, h) = step_count(t_n, cfg.dt.min(t_n / MIN_STEPS));
    let stride = (nsteps / RECORDS).max(1);
    let s = params.s;
    let mut residual: f64 = 0.0;
    let last = prop.run(&p0, 0.0, h, nsteps, stride, |_, t, state| {
        let vn = from_grid(&eval_vn_scaled(t, params, &phi, profile, points, scale), maxmode)?;
        let diff = state.u.sub(&prop.free_flow(t, &base)?.u)?.sub(&vn)?;
        residual = residual.max(sobolev_norm(s, &diff));
        Ok(())
    })?;
    let vn_final = from_grid(&eval_vn_scaled(t_n, params, &phi, profile, points, scale), maxmode)?;
    let lower = params.kappa() * (params.lambda() * t_n).powf(s);
    Ok(Case {
        data_norm: sobolev_norm(s, &p0.u),
        final_norm: sobolev_norm(s, &last.u),
        free_norm: sobolev_norm(s, &prop.free_flow(t_n, &p0)?.u),
        pair_ratio: last.pair_norm(s, params.alpha) / p0.pair_norm(s, params.alpha),
        residual,
        lower_bound_ratio: sobolev_norm(s, &vn_final) / (scale * lower),
        final_state: last,
    })
}

fn max_ratio(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] / w[0]).fold(f64::NEG_INFINITY, f64::max)
}

fn min_increment(x: &[f64]) -> f64 {
    x.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min)
}

/// Evolves `u_base + (kappa_n n^{d/2-s} phi(n x), 0)` to `t_n` for every `n`
/// and compares with the ODE profile `v_n`. A second pass with the amplitude
/// scaled by [`CONTROL_SCALE`] measures the linear-regime amplification
/// `||u(t_n)||_{H^s} / ||[S(t_n) p0]_u||_{H^s}`.
pub fn run_inflation(cfg: &SimConfig, params: &[InflationParams], base: Option<&PhasePoint>) -> Result<ExperimentReport> {
    let k = params.first().map_or(1, |p| p.k);
    if params.iter().any(|p| p.k != k) {
        return Err(Error::InvalidParameter("all inflation parameters must share k".into()));
    }
    let profile = solve_profile(k, 1.0, DEFAULT_DT_ODE)?;
    let cases: Vec<(Case, Case)> = params
        .par_iter()
        .map(|p| {
            Ok((
                run_case(cfg, p, base, &profile, cfg.amplitude)?,
                run_case(cfg, p, base, &profile, cfg.amplitude * CONTROL_SCALE)?,
            ))
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new("inflation", cfg);
    let mut table = Table::new(
        "inflation",
        &[
            "n",
            "t_n",
            "data_norm",
            "final_norm",
            "ratio",
            "amplification",
            "pair_ratio",
            "residual",
            "lower_bound_ratio",
            "control_ratio",
            "control_amplification",
        ],
    );
    for (p, (c, l)) in params.iter().zip(&cases) {
        table.push(vec![
            p.n,
            p.t_n(),
            c.data_norm,
            c.final_norm,
            c.final_norm / c.data_norm,
            c.final_norm / c.free_norm,
            c.pair_ratio,
            c.residual,
            c.lower_bound_ratio,
            l.final_norm / l.data_norm,
            l.final_norm / l.free_norm,
        ]);
    }
    let data: Vec<f64> = cases.iter().map(|c| c.0.data_norm).collect();
    let ratio: Vec<f64> = cases.iter().map(|c| c.0.final_norm / c.0.data_norm).collect();
    let residual: Vec<f64> = cases.iter().map(|c| c.0.residual).collect();
    let control: Vec<f64> = cases.iter().map(|c| c.1.final_norm / c.1.free_norm).collect();
    report.tables.push(table);
    report.tables.push(profile_table(&profile));

    report.push_verdict("data_norm_decreasing", max_ratio(&data), Comparison::Lt, 1.0);
    report.push_verdict("ratio_increasing", min_increment(&ratio), Comparison::Gt, 0.0);
    report.push_verdict("residual_decreasing", max_ratio(&residual), Comparison::Lt, 1.0);
    report.push_verdict(
        "control_amplification_min",
        control.iter().copied().fold(f64::INFINITY, f64::min),
        Comparison::Ge,
        CONTROL_WINDOW.0,
    );
    report.push_verdict(
        "control_amplification_max",
        control.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        Comparison::Le,
        CONTROL_WINDOW.1,
    );
    report.notes.push(format!(
        "box K = {} n, M = 4K + 4, sharp flow, dt_n = min(dt, t_n / {MIN_STEPS}); profile period {}",
        cfg.modes_per_n, profile.period
    ));
    for (p, c) in params.iter().zip(&cases) {
        report.snapshots.push(Snapshot {
            name: format!("final_n{}", p.n),
            point: c.0.final_state.clone(),
        });
    }
    Ok(report)
}

fn profile_table(profile: &OdeProfile) -> Table {
    let mut t = Table::new("profile", &["t", "V", "dV"]);
    let stride = (profile.times.len() / 512).max(1);
    for i in (0..profile.times.len()).step_by(stride) {
        t.push(vec![profile.times[i], profile.values[i], profile.derivs[i]]);
    }
    t
}
