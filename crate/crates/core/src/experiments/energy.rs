use num_complex::Complex64;
use rayon::prelude::*;

use super::{Comparison, ExperimentReport, FitRecord, Table};
use crate::config::SimConfig;
use crate::dynamics::{energy_e, step_count, FlowTruncation, PhasePoint, Propagator};
use crate::error::{Error, Result};
use crate::gibbs::Potential;
use crate::random::{sample_general, RngStream};
use crate::spectral::{apply_d, to_grid, SpectralField};
use crate::stats::multilinear_fit;

/// Largest accepted absolute residual of the log-energy fit.
pub const RESIDUAL_BOUND: f64 = 3.0;
/// Horizons `T' = j T / SUBDIVISIONS` entering the fit.
const SUBDIVISIONS: usize = 5;

/// Deterministic data with coefficients `<n>^{-(s + d/2 + 0.05)} (1 - i)/2`
/// for `u0` and the same with `s - alpha` for `v0`: just inside `H^s x H^{s-alpha}`.
pub fn power_law_data(dim: usize, maxmode: usize, s: f64, alpha: f64) -> PhasePoint {
    let fill = |order: f64| {
        let mut f = SpectralField::from_fn(dim, maxmode, |n| {
            let a = (1.0 + n.norm_sq() as f64).powf(-(order + dim as f64 / 2.0 + 0.05) / 2.0);
            if n.norm_sq() == 0 {
                Complex64::new(0.5 * a, 0.0)
            } else if n.is_upper_half() {
                Complex64::new(0.5 * a, -0.5 * a)
            } else {
                Complex64::new(0.5 * a, 0.5 * a)
            }
        });
        f.symmetrize();
        f
    };
    PhasePoint {
        u: fill(s),
        v: fill(s - alpha),
    }
}

struct SampleRun {
    /// `(sup_{t <= T'} E[w], sup_{t <= T'} ||D^{s1} z||_inf)` for each horizon.
    horizons: Vec<(f64, f64)>,
    energy_at_zero: f64,
    blew_up: bool,
}

fn run_sample(cfg: &SimConfig, prop: &Propagator, k: u32, p0: &PhasePoint, h: f64, nsteps: usize) -> Result<SampleRun> {
    let per = nsteps / SUBDIVISIONS;
    let mut sup_e: f64 = 0.0;
    let mut sup_z: f64 = 0.0;
    let mut energy_at_zero = f64::NAN;
    let mut horizons = Vec::with_capacity(SUBDIVISIONS);
    let outcome = prop.run(p0, 0.0, h, nsteps, 1, |j, t, state| {
        let z = prop.free_flow(t, p0)?;
        let e = energy_e(&state.sub(&z)?, cfg.alpha, k, prop.points())?;
        if j == 0 {
            energy_at_zero = e;
        }
        sup_e = sup_e.max(e);
        sup_z = sup_z.max(to_grid(&apply_d(cfg.s1, &z.u), prop.points())?.max_abs());
        if j > 0 && j % per == 0 {
            horizons.push((sup_e, sup_z));
        }
        Ok(())
    });
    match outcome {
        Ok(_) => Ok(SampleRun {
            horizons,
            energy_at_zero,
            blew_up: false,
        }),
        Err(Error::Overflow { .. }) => Ok(SampleRun {
            horizons,
            energy_at_zero,
            blew_up: true,
        }),
        Err(e) => Err(e),
    }
}

/// Randomizes `data`, evolves each sample under the power nonlinearity and
/// splits `u = z + w` with `z` the free evolution. Fits
/// `ln sup E[w] ~ a + b Z^{2k+2} + c T'` over the horizons `T' = jT/5`.
pub fn run_energy_bound(cfg: &SimConfig, data: &PhasePoint, t_final: f64, samples: usize) -> Result<ExperimentReport> {
    let k = match cfg.potential {
        Potential::Power(k) => k,
        Potential::Exp => return Err(Error::InvalidParameter("energy runs need the power potential".into())),
    };
    let maxmode = data.maxmode();
    let points = cfg.grid_m.max(crate::spectral::min_grid_points(maxmode));
    let prop = Propagator::new(cfg.d, maxmode, points, cfg.alpha, cfg.potential, FlowTruncation::Sharp(f64::INFINITY))?
        .with_kick(cfg.kick);
    let (n0, _) = step_count(t_final, cfg.dt);
    let nsteps = n0.div_ceil(SUBDIVISIONS) * SUBDIVISIONS;
    let h = t_final / nsteps as f64;

    let runs: Vec<SampleRun> = (0..samples as u64)
        .into_par_iter()
        .map(|i| {
            let p0 = sample_general(&data.u, &data.v, &RngStream::new(cfg.seed, i))?;
            run_sample(cfg, &prop, k, &p0, h, nsteps)
        })
        .collect::<Result<_>>()?;

    let mut report = ExperimentReport::new("energy", cfg);
    let mut table = Table::new("energy", &["sample", "horizon", "sup_energy", "z_sup"]);
    let (mut rows, mut y) = (Vec::new(), Vec::new());
    let p = 2.0 * k as f64 + 2.0;
    for (i, r) in runs.iter().enumerate() {
        for (j, &(e, z)) in r.horizons.iter().enumerate() {
            let horizon = t_final * (j + 1) as f64 / SUBDIVISIONS as f64;
            table.push(vec![i as f64, horizon, e, z]);
            if !r.blew_up && e > 0.0 {
                rows.push(vec![1.0, z.powf(p), horizon]);
                y.push(e.ln());
            }
        }
    }
    report.tables.push(table);

    let blowups = runs.iter().filter(|r| r.blew_up).count();
    let e0 = runs.iter().map(|r| r.energy_at_zero.abs()).fold(0.0, f64::max);
    report.push_verdict("blowups", blowups as f64, Comparison::Le, 0.0);
    report.push_verdict("max_energy_at_zero", e0, Comparison::Le, 0.0);
    match multilinear_fit(&rows, &y) {
        Ok(fit) => {
            let resid = fit.residuals.iter().map(|r| r.abs()).fold(0.0, f64::max);
            report.fits.push(FitRecord {
                name: "log_sup_energy".into(),
                terms: vec!["a".into(), "b_z_power".into(), "c_time".into()],
                coefficients: fit.coefficients.clone(),
                r2: fit.r2,
            });
            report.push_verdict("coefficient_b", fit.coefficients[1], Comparison::Ge, 0.0);
            report.push_verdict("coefficient_c", fit.coefficients[2], Comparison::Ge, 0.0);
            report.push_verdict("max_abs_residual", resid, Comparison::Le, RESIDUAL_BOUND);
        }
        Err(e) => {
            report.notes.push(format!("fit failed: {e}"));
            report.push_verdict("coefficient_b", f64::NAN, Comparison::Ge, 0.0);
            report.push_verdict("coefficient_c", f64::NAN, Comparison::Ge, 0.0);
        }
    }
    report.notes.push(format!(
        "box K = {maxmode}, M = {points}, {nsteps} steps of {h:e}, Z = sup_t ||D^{} z||_inf over time steps and grid",
        cfg.s1
    ));
    Ok(report)
}
