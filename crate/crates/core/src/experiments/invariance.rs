use rayon::prelude::*;

use super::{Comparison, ExperimentReport, Observable, Snapshot, Table};
use crate::config::SimConfig;
use crate::dynamics::{step_count, FlowTruncation, PhasePoint, Propagator};
use crate::error::{Error, Result};
use crate::gibbs::gibbs_weight;
use crate::random::{sample_mu_truncated, RngStream};
use crate::stats::{effective_sample_size, weighted_ks_test, welch_test};

/// Smallest effective sample size accepted for weighted comparisons.
pub const MIN_ESS: f64 = 100.0;
/// Largest accepted mean shift in combined standard errors.
pub const SHIFT_LIMIT: f64 = 3.0;
/// Smallest accepted KS p-value.
pub const KS_LEVEL: f64 = 0.01;

struct Member {
    weight: f64,
    /// `values[c][o]`: observable `o` at checkpoint `c` (checkpoint 0 is `t = 0`).
    values: Vec<Vec<f64>>,
    blew_up: bool,
    last: PhasePoint,
}

fn evolve_member(
    cfg: &SimConfig,
    prop: &Propagator,
    index: u64,
    times: &[f64],
    observables: &[Observable],
) -> Result<Member> {
    let p0 = sample_mu_truncated(cfg, cfg.n_cut, &RngStream::new(cfg.seed, index));
    let weight = gibbs_weight(cfg.n_cut, &p0.u, cfg.potential, cfg.grid_m)?;
    let eval = |p: &PhasePoint| observables.iter().map(|o| o.eval(p, cfg)).collect::<Result<Vec<_>>>();
    let mut values = vec![eval(&p0)?];
    let mut state = p0;
    let mut t_prev = 0.0;
    let mut blew_up = false;
    for &t in &times[1..] {
        if blew_up {
            values.push(vec![f64::INFINITY; observables.len()]);
            continue;
        }
        let (nsteps, h) = step_count(t - t_prev, cfg.dt);
        match prop.run(&state, t_prev, h, nsteps, usize::MAX, |_, _, _| Ok(())) {
            Ok(next) => {
                values.push(eval(&next)?);
                state = next;
            }
            Err(Error::Overflow { .. }) => {
                blew_up = true;
                values.push(vec![f64::INFINITY; observables.len()]);
            }
            Err(e) => return Err(e),
        }
        t_prev = t;
    }
    Ok(Member {
        weight,
        values,
        blew_up,
        last: state,
    })
}

/// Weighted comparison of the observables at `t = 0` and at each checkpoint
/// for an ensemble drawn from the truncated Gaussian measure and weighted by
/// the Gibbs density.
pub fn run_invariance(
    cfg: &SimConfig,
    samples: usize,
    checkpoints: &[f64],
    observables: &[Observable],
) -> Result<ExperimentReport> {
    if !cfg.n_cut.is_finite() {
        return Err(Error::InvalidParameter("invariance runs need a finite N".into()));
    }
    let prop = Propagator::from_config(cfg, FlowTruncation::Smooth(cfg.n_cut))?;
    let mut times = vec![0.0];
    let mut sorted = checkpoints.to_vec();
    sorted.sort_by(f64::total_cmp);
    times.extend(sorted.iter().copied());

    let members: Vec<Member> = (0..samples as u64)
        .into_par_iter()
        .map(|i| evolve_member(cfg, &prop, i, &times, observables))
        .collect::<Result<_>>()?;

    let weights: Vec<f64> = members.iter().map(|m| m.weight).collect();
    let ess = effective_sample_size(&weights);
    if !(ess >= MIN_ESS) {
        return Err(Error::DegenerateWeights { ess, min: MIN_ESS });
    }
    let blowups = members.iter().filter(|m| m.blew_up).count();

    let mut report = ExperimentReport::new("invariance", cfg);
    let mut summary = Table::new("ensemble", &["samples", "ess", "mean_weight", "blowups"]);
    summary.push(vec![
        samples as f64,
        ess,
        weights.iter().sum::<f64>() / samples as f64,
        blowups as f64,
    ]);
    report.tables.push(summary);
    report.push_verdict("ess", ess, Comparison::Ge, MIN_ESS);
    report.push_verdict("blowups", blowups as f64, Comparison::Le, 0.0);

    for (o, obs) in observables.iter().enumerate() {
        let column = |c: usize| members.iter().map(|m| m.values[c][o]).collect::<Vec<f64>>();
        let base = column(0);
        let mut table = Table::new(
            &format!("invariance_{}", obs.name().replace(':', "_")),
            &[
                "t", "mean_0", "mean_t", "difference", "std_error", "shift_se", "welch_p", "ks_statistic", "ks_p",
            ],
        );
        for (c, &t) in times.iter().enumerate().skip(1) {
            let at = column(c);
            let welch = welch_test(&base, &weights, &at, &weights)?;
            let ks = weighted_ks_test(&base, &weights, &at, &weights)?;
            let shift = if welch.difference == 0.0 {
                0.0
            } else {
                (welch.difference / welch.std_error).abs()
            };
            table.push(vec![
                t,
                welch.mean_x,
                welch.mean_y,
                welch.difference,
                welch.std_error,
                shift,
                welch.p_value,
                ks.statistic,
                ks.p_value,
            ]);
            let tag = format!("{},t={}", obs.name(), t);
            report.push_verdict(format!("mean_shift[{tag}]"), shift, Comparison::Lt, SHIFT_LIMIT);
            report.push_verdict(format!("ks_p[{tag}]"), ks.p_value, Comparison::Gt, KS_LEVEL);
        }
        report.tables.push(table);
    }
    report.notes.push(format!(
        "ensemble of {samples} draws of the truncated Gaussian measure at N = {}, weighted by G_N; \
         flow with the smooth cutoff, kick mode {}",
        cfg.n_cut, cfg.kick
    ));
    if let Some(first) = members.first() {
        report.snapshots.push(Snapshot {
            name: "member0_last".into(),
            point: first.last.clone(),
        });
    }
    Ok(report)
}
