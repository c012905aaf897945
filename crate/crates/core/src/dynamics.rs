//! Free flow, the truncated Hamiltonian flow, conserved quantities, and the
//! time-weighted norms of the free evolution.
//!
//! The equation `u_tt + D^{2 alpha} u + f(u) = 0` is split into the exact
//! linear rotation of each mode at frequency `<lambda_n>^alpha` and a kick
//! `v -= tau * pi_N f(pi_N u)` evaluated by collocation on the grid. The
//! symmetric composition half-kick, rotate, half-kick is second order,
//! time reversible, and volume preserving.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::config::SimConfig;
use crate::error::{Error, Result};
use crate::gibbs::Potential;
use crate::spectral::{
    apply_d, from_grid, grid_lp_norm, in_ball, save_fwf1, sobolev_norm, to_grid, CutoffPsi,
    SpectralField,
};

/// One point `(u, u_t)` of phase space.
#[derive(Debug, Clone, PartialEq)]
pub struct PhasePoint {
    pub u: SpectralField,
    pub v: SpectralField,
}

impl PhasePoint {
    pub fn new(u: SpectralField, v: SpectralField) -> Result<Self> {
        if u.dim() != v.dim() || u.maxmode() != v.maxmode() {
            return Err(Error::ShapeMismatch {
                left_dim: u.dim(),
                left_k: u.maxmode(),
                right_dim: v.dim(),
                right_k: v.maxmode(),
            });
        }
        Ok(PhasePoint { u, v })
    }

    pub fn zeros(dim: usize, maxmode: usize) -> Self {
        PhasePoint {
            u: SpectralField::zeros(dim, maxmode),
            v: SpectralField::zeros(dim, maxmode),
        }
    }

    pub fn dim(&self) -> usize {
        self.u.dim()
    }

    pub fn maxmode(&self) -> usize {
        self.u.maxmode()
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        Ok(PhasePoint {
            u: self.u.sub(&other.u)?,
            v: self.v.sub(&other.v)?,
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        Ok(PhasePoint {
            u: self.u.add(&other.u)?,
            v: self.v.add(&other.v)?,
        })
    }

    pub fn resized(&self, maxmode: usize) -> Self {
        PhasePoint {
            u: self.u.resized(maxmode),
            v: self.v.resized(maxmode),
        }
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(self.u.max_abs_diff(&other.u)?.max(self.v.max_abs_diff(&other.v)?))
    }

    pub fn map(&self, f: impl Fn(&SpectralField) -> SpectralField) -> Self {
        PhasePoint {
            u: f(&self.u),
            v: f(&self.v),
        }
    }

    /// `(||u||_{H^s}^2 + ||v||_{H^{s - alpha}}^2)^{1/2}`.
    pub fn pair_norm(&self, s: f64, alpha: f64) -> f64 {
        (sobolev_norm(s, &self.u).powi(2) + sobolev_norm(s - alpha, &self.v).powi(2)).sqrt()
    }
}

/// Which modes the nonlinearity sees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlowTruncation {
    /// `v' = -D^{2a} u - pi_N f(pi_N u)` with the smooth cutoff `psi`.
    Smooth(f64),
    /// Galerkin flow `v' = -D^{2a} u - Pi_N f(Pi_N u)`; `Sharp(inf)` keeps the whole box.
    Sharp(f64),
}

impl FlowTruncation {
    fn weight(&self, norm_sq: i64) -> f64 {
        match *self {
            FlowTruncation::Smooth(n) => CutoffPsi.weight(norm_sq, n),
            FlowTruncation::Sharp(n) => {
                if in_ball(norm_sq, n) {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Sign of the nonlinear kick. `Off` and `Flipped` are test hooks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum KickMode {
    #[default]
    Normal,
    Off,
    Flipped,
}

impl KickMode {
    fn sign(&self) -> f64 {
        match self {
            KickMode::Normal => 1.0,
            KickMode::Off => 0.0,
            KickMode::Flipped => -1.0,
        }
    }
}

impl fmt::Display for KickMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KickMode::Normal => "normal",
            KickMode::Off => "off",
            KickMode::Flipped => "flipped",
        })
    }
}

impl FromStr for KickMode {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "normal" => Ok(KickMode::Normal),
            "off" => Ok(KickMode::Off),
            "flipped" => Ok(KickMode::Flipped),
            other => Err(format!("unknown kick mode {other:?} (normal, off, flipped)")),
        }
    }
}

/// Precomputed tables for stepping one box and grid.
#[derive(Debug, Clone)]
pub struct Propagator {
    dim: usize,
    maxmode: usize,
    points: usize,
    alpha: f64,
    potential: Potential,
    truncation: FlowTruncation,
    kick: KickMode,
    lambda: Vec<f64>,
    cutoff: Vec<f64>,
}

struct Rotation {
    cos: Vec<f64>,
    sin: Vec<f64>,
}

impl Propagator {
    pub fn new(
        dim: usize,
        maxmode: usize,
        points: usize,
        alpha: f64,
        potential: Potential,
        truncation: FlowTruncation,
    ) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        let required = crate::spectral::min_grid_points(maxmode);
        if points < required {
            return Err(Error::GridTooSmall {
                points,
                maxmode,
                required,
            });
        }
        let table = SpectralField::zeros(dim, maxmode).norm_sq_table();
        Ok(Propagator {
            dim,
            maxmode,
            points,
            alpha,
            potential,
            truncation,
            kick: KickMode::Normal,
            lambda: table.iter().map(|&n| (1.0 + n as f64).powf(alpha / 2.0)).collect(),
            cutoff: table.iter().map(|&n| truncation.weight(n)).collect(),
        })
    }

    /// Uses `d`, `K`, `M`, `alpha`, the potential and the kick mode of `cfg`.
    pub fn from_config(cfg: &SimConfig, truncation: FlowTruncation) -> Result<Self> {
        Ok(Self::new(cfg.d, cfg.maxmode, cfg.grid_m, cfg.alpha, cfg.potential, truncation)?
            .with_kick(cfg.kick))
    }

    pub fn with_kick(mut self, kick: KickMode) -> Self {
        self.kick = kick;
        self
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn maxmode(&self) -> usize {
        self.maxmode
    }

    pub fn potential(&self) -> Potential {
        self.potential
    }

    pub fn truncation(&self) -> FlowTruncation {
        self.truncation
    }

    fn check(&self, p: &PhasePoint) -> Result<()> {
        if p.dim() != self.dim || p.maxmode() != self.maxmode || p.v.maxmode() != self.maxmode {
            return Err(Error::ShapeMismatch {
                left_dim: p.dim(),
                left_k: p.maxmode(),
                right_dim: self.dim,
                right_k: self.maxmode,
            });
        }
        Ok(())
    }

    fn rotation(&self, t: f64) -> Rotation {
        Rotation {
            cos: self.lambda.iter().map(|l| (t * l).cos()).collect(),
            sin: self.lambda.iter().map(|l| (t * l).sin()).collect(),
        }
    }

    fn rotate_with(&self, rot: &Rotation, p: &mut PhasePoint) {
        let (u, v) = (p.u.coeffs_mut(), p.v.coeffs_mut());
        for i in 0..self.lambda.len() {
            let (c, w) = (u[i], v[i]);
            let (cs, sn, l) = (rot.cos[i], rot.sin[i], self.lambda[i]);
            u[i] = c * cs + w * (sn / l);
            v[i] = w * cs - c * (l * sn);
        }
    }

    /// Exact free flow `S(t)`.
    pub fn free_flow(&self, t: f64, p: &PhasePoint) -> Result<PhasePoint> {
        self.check(p)?;
        let mut out = p.clone();
        self.rotate_with(&self.rotation(t), &mut out);
        Ok(out)
    }

    /// `pi_N f(pi_N u)` (or its sharp analogue), scaled by the kick sign.
    pub fn force(&self, u: &SpectralField, time: f64) -> Result<SpectralField> {
        let sign = self.kick.sign();
        if sign == 0.0 {
            return Ok(SpectralField::zeros(self.dim, self.maxmode));
        }
        let mut cut = u.clone();
        for (c, w) in cut.coeffs_mut().iter_mut().zip(&self.cutoff) {
            *c *= *w;
        }
        let mut grid = to_grid(&cut, self.points)?;
        let max_abs_u = grid.max_abs();
        for x in grid.values_mut() {
            *x = self.potential.force(*x);
            if !x.is_finite() {
                return Err(Error::Overflow { time, max_abs_u });
            }
        }
        let mut f = from_grid(&grid, self.maxmode)?;
        for (c, w) in f.coeffs_mut().iter_mut().zip(&self.cutoff) {
            *c *= *w * sign;
        }
        Ok(f)
    }

    fn kick_with(p: &mut PhasePoint, force: &SpectralField, tau: f64) {
        for (v, f) in p.v.coeffs_mut().iter_mut().zip(force.coeffs()) {
            *v -= f * tau;
        }
    }

    /// One Strang step: half kick, exact rotation, half kick.
    pub fn step(&self, dt: f64, p: &PhasePoint, time: f64) -> Result<PhasePoint> {
        self.check(p)?;
        let mut out = p.clone();
        let f0 = self.force(&out.u, time)?;
        Self::kick_with(&mut out, &f0, 0.5 * dt);
        self.rotate_with(&self.rotation(dt), &mut out);
        let f1 = self.force(&out.u, time + dt)?;
        Self::kick_with(&mut out, &f1, 0.5 * dt);
        Ok(out)
    }

    /// Takes `nsteps` steps of size `dt` from time `t0`, calling `observe`
    /// after step `j` whenever `j % stride == 0` and after the last step
    /// (`j = 0` is the initial state). Results match repeated [`step`](Self::step)
    /// calls bit for bit.
    pub fn run(
        &self,
        p: &PhasePoint,
        t0: f64,
        dt: f64,
        nsteps: usize,
        stride: usize,
        mut observe: impl FnMut(usize, f64, &PhasePoint) -> Result<()>,
    ) -> Result<PhasePoint> {
        self.check(p)?;
        let stride = stride.max(1);
        let rot = self.rotation(dt);
        let mut state = p.clone();
        observe(0, t0, &state)?;
        if nsteps == 0 {
            return Ok(state);
        }
        let mut force = self.force(&state.u, t0)?;
        for j in 1..=nsteps {
            let t = t0 + j as f64 * dt;
            Self::kick_with(&mut state, &force, 0.5 * dt);
            self.rotate_with(&rot, &mut state);
            force = self.force(&state.u, t)?;
            Self::kick_with(&mut state, &force, 0.5 * dt);
            if j % stride == 0 || j == nsteps {
                observe(j, t, &state)?;
            }
        }
        Ok(state)
    }

    /// Evolves to time `t` with steps no larger than `dt`.
    pub fn advance(&self, p: &PhasePoint, t: f64, dt: f64) -> Result<PhasePoint> {
        let (nsteps, h) = step_count(t, dt);
        self.run(p, 0.0, h, nsteps, usize::MAX, |_, _, _| Ok(()))
    }

    /// The conserved energy of the discrete truncated flow:
    /// `1/2 (||D^a u||^2 + ||v||^2) + h^d sum_j F((pi_N u)(x_j))`.
    pub fn energy_j(&self, p: &PhasePoint) -> Result<f64> {
        self.check(p)?;
        let mut cut = p.u.clone();
        for (c, w) in cut.coeffs_mut().iter_mut().zip(&self.cutoff) {
            *c *= *w;
        }
        let pot = self.potential;
        let potential = to_grid(&cut, self.points)?.integrate(|x| pot.density(x));
        Ok(quadratic_energy(p, self.alpha) + potential)
    }
}

/// `ceil(t / dt)` steps and the effective step `t / nsteps`.
pub fn step_count(t: f64, dt: f64) -> (usize, f64) {
    if t <= 0.0 {
        return (0, dt);
    }
    let n = (t / dt).ceil().max(1.0) as usize;
    (n, t / n as f64)
}

fn quadratic_energy(p: &PhasePoint, alpha: f64) -> f64 {
    0.5 * (sobolev_norm(alpha, &p.u).powi(2) + sobolev_norm(0.0, &p.v).powi(2))
}

/// Exact free flow `S(t)(u, v) = (cos(t D^a) u + D^{-a} sin(t D^a) v, ...)`.
pub fn free_flow(t: f64, p: &PhasePoint, alpha: f64) -> PhasePoint {
    let lambda: Vec<f64> = p
        .u
        .norm_sq_table()
        .iter()
        .map(|&n| (1.0 + n as f64).powf(alpha / 2.0))
        .collect();
    let mut out = p.clone();
    let (u, v) = (out.u.coeffs_mut(), out.v.coeffs_mut());
    for (i, &l) in lambda.iter().enumerate() {
        let (c, w) = (u[i], v[i]);
        let (sn, cs) = (t * l).sin_cos();
        u[i] = c * cs + w * (sn / l);
        v[i] = w * cs - c * (l * sn);
    }
    out
}

/// One Strang step of the smooth truncated flow of `cfg`.
pub fn step_strang(dt: f64, p: &PhasePoint, cfg: &SimConfig) -> Result<PhasePoint> {
    Propagator::from_config(cfg, FlowTruncation::Smooth(cfg.n_cut))?.step(dt, p, 0.0)
}

/// Recorded states and observables of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<PhasePoint>,
    pub observables: BTreeMap<String, Vec<f64>>,
}

/// Column order of [`Trajectory::to_csv`].
pub const TRAJECTORY_COLUMNS: [&str; 6] = ["time", "H", "J", "sobolev_s", "sobolev_sigma", "Linf"];

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn series(&self, name: &str) -> Option<&[f64]> {
        self.observables.get(name).map(|v| v.as_slice())
    }

    /// CSV with columns `time,H,J,sobolev_s,sobolev_sigma,Linf`.
    pub fn to_csv(&self) -> String {
        let mut out = TRAJECTORY_COLUMNS.join(",");
        out.push('\n');
        for (i, t) in self.times.iter().enumerate() {
            let mut row = vec![t.to_string()];
            for name in &TRAJECTORY_COLUMNS[1..] {
                let v = self.observables.get(*name).map(|s| s[i]).unwrap_or(f64::NAN);
                row.push(v.to_string());
            }
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    /// Writes `u_XXXXXX.fwf` / `v_XXXXXX.fwf` for every `stride`-th state.
    pub fn write_snapshots(&self, dir: &Path, stride: usize) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (i, s) in self.states.iter().enumerate().step_by(stride.max(1)) {
            save_fwf1(&dir.join(format!("u_{i:06}.fwf")), &s.u)?;
            save_fwf1(&dir.join(format!("v_{i:06}.fwf")), &s.v)?;
        }
        Ok(())
    }
}

/// Evolves `p` under the smooth truncated flow of `cfg` for `ceil(T/dt)`
/// steps of size `T / ceil(T/dt)`, recording every `record_every` steps.
pub fn evolve(t_final: f64, p: &PhasePoint, cfg: &SimConfig, record_every: usize) -> Result<Trajectory> {
    let prop = Propagator::from_config(cfg, FlowTruncation::Smooth(cfg.n_cut))?;
    evolve_with(&prop, t_final, cfg.dt, p, cfg, record_every)
}

/// [`evolve`] with an explicit propagator and step bound.
pub fn evolve_with(
    prop: &Propagator,
    t_final: f64,
    dt: f64,
    p: &PhasePoint,
    cfg: &SimConfig,
    record_every: usize,
) -> Result<Trajectory> {
    if !(t_final > 0.0) {
        return Err(Error::InvalidParameter(format!("evolve needs T > 0, got {t_final}")));
    }
    let (nsteps, h) = step_count(t_final, dt);
    let mut traj = Trajectory {
        times: Vec::new(),
        states: Vec::new(),
        observables: TRAJECTORY_COLUMNS[1..]
            .iter()
            .map(|n| (n.to_string(), Vec::new()))
            .collect(),
    };
    prop.run(p, 0.0, h, nsteps, record_every, |_, t, state| {
        let h_val = hamiltonian_h_with(state, prop.alpha(), prop.potential(), prop.points())?;
        let j_val = prop.energy_j(state)?;
        let linf = to_grid(&state.u, prop.points())?.max_abs();
        traj.times.push(t);
        traj.states.push(state.clone());
        let obs = &mut traj.observables;
        obs.get_mut("H").unwrap().push(h_val);
        obs.get_mut("J").unwrap().push(j_val);
        obs.get_mut("sobolev_s").unwrap().push(sobolev_norm(cfg.s, &state.u));
        obs.get_mut("sobolev_sigma").unwrap().push(sobolev_norm(cfg.sigma, &state.u));
        obs.get_mut("Linf").unwrap().push(linf);
        Ok(())
    })?;
    Ok(traj)
}

fn hamiltonian_h_with(p: &PhasePoint, alpha: f64, pot: Potential, points: usize) -> Result<f64> {
    let potential = to_grid(&p.u, points)?.integrate(|x| pot.density(x));
    Ok(quadratic_energy(p, alpha) + potential)
}

/// `H(u, v) = 1/2 int ((D^a u)^2 + v^2) + int F(u)` on an `M`-point grid.
pub fn hamiltonian_h(p: &PhasePoint, cfg: &SimConfig, points: usize) -> Result<f64> {
    hamiltonian_h_with(p, cfg.alpha, cfg.potential, points)
}

/// The truncated energy `J` with the smooth cutoff at `cfg.n_cut`.
pub fn hamiltonian_j(p: &PhasePoint, cfg: &SimConfig, points: usize) -> Result<f64> {
    Propagator::new(
        p.dim(),
        p.maxmode(),
        points,
        cfg.alpha,
        cfg.potential,
        FlowTruncation::Smooth(cfg.n_cut),
    )?
    .energy_j(p)
}

/// `E[w] = 1/2 int (|w_t|^2 + |D^a w|^2) + int w^{2k+2} / (2k+2)`.
pub fn energy_e(w: &PhasePoint, alpha: f64, k: u32, points: usize) -> Result<f64> {
    hamiltonian_h_with(w, alpha, Potential::Power(k), points)
}

/// Spatial norm inside the time-weighted sums.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpatialNorm {
    /// `|| D^eps0 u ||_{L^r0}`.
    Wepsr { eps0: f64, r0: f64 },
    Linf,
}

/// Parameters of `sum_{|l| <= L} (1+|l|)^{-beta} sup_{l <= t < l+1} ||S(t) p||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeWeights {
    pub alpha: f64,
    pub beta: f64,
    pub window_l: usize,
    pub samples_per_window: usize,
    pub points: usize,
}

impl TimeWeights {
    pub fn from_config(cfg: &SimConfig, points: usize) -> Self {
        TimeWeights {
            alpha: cfg.alpha,
            beta: cfg.beta,
            window_l: cfg.window_l,
            samples_per_window: (1.0 / cfg.dt_sup).round().max(1.0) as usize,
            points,
        }
    }

    /// Samples per window needed to resolve frequency `max_frequency`.
    pub fn required_samples(max_frequency: f64) -> usize {
        (4.0 * max_frequency / (2.0 * std::f64::consts::PI)).ceil() as usize
    }

    /// Evaluates the weighted sum; refuses sampling coarser than
    /// `4 max Lambda / (2 pi)` per unit window over the active modes.
    pub fn evaluate(&self, p: &PhasePoint, norm: SpatialNorm) -> Result<f64> {
        let max_nsq = p
            .u
            .max_active_norm_sq()
            .into_iter()
            .chain(p.v.max_active_norm_sq())
            .max();
        let Some(max_nsq) = max_nsq else {
            return Ok(0.0);
        };
        let max_frequency = (1.0 + max_nsq as f64).powf(self.alpha / 2.0);
        let required = Self::required_samples(max_frequency);
        if self.samples_per_window < required {
            return Err(Error::TimeSamplingTooCoarse {
                samples: self.samples_per_window,
                required,
                max_frequency,
            });
        }
        let (a, b, r) = match norm {
            SpatialNorm::Wepsr { eps0, r0 } => (apply_d(eps0, &p.u), apply_d(eps0, &p.v), r0),
            SpatialNorm::Linf => (p.u.clone(), p.v.clone(), f64::INFINITY),
        };
        let lambda: Vec<f64> = a
            .norm_sq_table()
            .iter()
            .map(|&n| (1.0 + n as f64).powf(self.alpha / 2.0))
            .collect();
        let mut field = SpectralField::zeros(a.dim(), a.maxmode());
        let l = self.window_l as i64;
        let mut total = 0.0;
        for window in -l..=l {
            let mut sup: f64 = 0.0;
            for j in 0..self.samples_per_window {
                let t = window as f64 + j as f64 / self.samples_per_window as f64;
                for (i, c) in field.coeffs_mut().iter_mut().enumerate() {
                    let (sn, cs) = (t * lambda[i]).sin_cos();
                    *c = a.coeffs()[i] * cs + b.coeffs()[i] * (sn / lambda[i]);
                }
                sup = sup.max(grid_lp_norm(r, &to_grid(&field, self.points)?));
            }
            total += (1.0 + window.unsigned_abs() as f64).powf(-self.beta) * sup;
        }
        Ok(total)
    }
}

/// `Y^beta` norm with the `W^{eps0, r0}` spatial norm of `cfg`.
pub fn weighted_norm_y(p: &PhasePoint, cfg: &SimConfig) -> Result<f64> {
    TimeWeights::from_config(cfg, cfg.grid_m.max(crate::spectral::min_grid_points(p.maxmode())))
        .evaluate(p, SpatialNorm::Wepsr { eps0: cfg.eps0, r0: cfg.r0 })
}

/// `Z^beta` norm (`L^infinity` in space).
pub fn weighted_norm_z(p: &PhasePoint, cfg: &SimConfig) -> Result<f64> {
    TimeWeights::from_config(cfg, cfg.grid_m.max(crate::spectral::min_grid_points(p.maxmode())))
        .evaluate(p, SpatialNorm::Linf)
}

/// `w(t) = u(t) - [S(t) p0]_u` at every recorded time.
pub fn nonlinear_part(traj: &Trajectory, p0: &PhasePoint, alpha: f64) -> Result<Vec<SpectralField>> {
    traj.times
        .iter()
        .zip(&traj.states)
        .map(|(&t, s)| s.u.sub(&free_flow(t, p0, alpha).u))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::test_field;
    use num_complex::Complex64;
    use std::f64::consts::PI;

    fn smooth_point(maxmode: usize, amp: f64) -> PhasePoint {
        let u = SpectralField::cosine(1, maxmode, &[1], amp)
            .add(&SpectralField::sine(1, maxmode, &[2], 0.5 * amp))
            .unwrap();
        let v = SpectralField::cosine(1, maxmode, &[3], 0.3 * amp);
        PhasePoint { u, v }
    }

    #[test]
    fn free_flow_single_mode_closed_form() {
        let p = PhasePoint {
            u: SpectralField::cosine(1, 3, &[1], 1.0),
            v: SpectralField::zeros(1, 3),
        };
        let out = free_flow(1.0, &p, 1.0);
        let expected = SpectralField::cosine(1, 3, &[1], (2f64.sqrt()).cos());
        assert!(out.u.max_abs_diff(&expected).unwrap() < 1e-15);
        assert_eq!(free_flow(0.0, &p, 1.0), p);
    }

    #[test]
    fn free_flow_group_law_and_invariant() {
        let p = PhasePoint { u: test_field(1, 8, 1), v: test_field(1, 8, 2) };
        let ab = free_flow(0.7, &free_flow(1.9, &p, 1.3), 1.3);
        let direct = free_flow(2.6, &p, 1.3);
        assert!(ab.max_abs_diff(&direct).unwrap() < 1e-13);
        let q = |p: &PhasePoint| quadratic_energy(p, 1.3);
        let later = free_flow(10.0, &p, 1.3);
        assert!((q(&later) - q(&p)).abs() < 1e-12 * q(&p).max(1.0));
    }

    #[test]
    fn propagator_free_flow_agrees() {
        let p = smooth_point(6, 1.0);
        let prop = Propagator::new(1, 6, 28, 1.0, Potential::Exp, FlowTruncation::Sharp(6.0)).unwrap();
        assert!(prop.free_flow(0.37, &p).unwrap().max_abs_diff(&free_flow(0.37, &p, 1.0)).unwrap() < 1e-15);
    }

    #[test]
    fn kick_off_reduces_to_free_flow() {
        let p = smooth_point(6, 1.0);
        let prop = Propagator::new(1, 6, 28, 1.0, Potential::Exp, FlowTruncation::Smooth(6.0))
            .unwrap()
            .with_kick(KickMode::Off);
        let out = prop.step(0.1, &p, 0.0).unwrap();
        assert!(out.max_abs_diff(&free_flow(0.1, &p, 1.0)).unwrap() < 1e-15);
    }

    #[test]
    fn step_is_reversible() {
        let p = smooth_point(6, 1.0);
        let prop = Propagator::new(1, 6, 28, 1.0, Potential::Exp, FlowTruncation::Smooth(6.0)).unwrap();
        let fwd = prop.step(0.05, &p, 0.0).unwrap();
        let back = prop.step(-0.05, &fwd, 0.05).unwrap();
        assert!(back.max_abs_diff(&p).unwrap() < 1e-10);
    }

    #[test]
    fn run_matches_repeated_steps() {
        let p = smooth_point(6, 1.0);
        let prop = Propagator::new(1, 6, 28, 1.0, Potential::Power(1), FlowTruncation::Sharp(6.0)).unwrap();
        let mut q = p.clone();
        for j in 0..7 {
            q = prop.step(0.03, &q, j as f64 * 0.03).unwrap();
        }
        let r = prop.run(&p, 0.0, 0.03, 7, 3, |_, _, _| Ok(())).unwrap();
        assert_eq!(r, q);
    }

    #[test]
    fn truncated_space_is_invariant() {
        let c = SimConfig { n_cut: 3.0, maxmode: 8, grid_m: 36, ..SimConfig::default() };
        let p = PhasePoint {
            u: crate::spectral::sharp_project(3.0, &test_field(1, 8, 3)),
            v: crate::spectral::sharp_project(3.0, &test_field(1, 8, 4)),
        };
        let traj = evolve(0.5, &p, &c, 1).unwrap();
        let last = traj.states.last().unwrap();
        for (i, z) in last.u.coeffs().iter().enumerate() {
            if last.u.mode_at(i).norm_sq() > 9 {
                assert_eq!(*z, Complex64::new(0.0, 0.0));
                assert_eq!(last.v.coeffs()[i], Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn evolve_records_requested_states() {
        let c = SimConfig { dt: 0.01, ..SimConfig::default() };
        let p = PhasePoint::zeros(1, c.maxmode);
        let traj = evolve(0.1, &p, &c, 1).unwrap();
        assert_eq!(traj.len(), 11);
        assert!(traj.times.windows(2).all(|w| w[1] > w[0]));
        let csv = traj.to_csv();
        assert!(csv.starts_with("time,H,J,sobolev_s,sobolev_sigma,Linf\n"));
        assert_eq!(csv.lines().count(), 12);
    }

    #[test]
    fn blow_up_is_reported() {
        let c = SimConfig { kick: KickMode::Flipped, ..SimConfig::default() };
        let p = PhasePoint {
            u: SpectralField::constant(1, c.maxmode, 2.0),
            v: SpectralField::zeros(1, c.maxmode),
        };
        let err = evolve(50.0, &p, &c, 1000).unwrap_err();
        assert!(matches!(err, Error::Overflow { .. }));
    }

    #[test]
    fn hamiltonian_examples() {
        let c = SimConfig::default();
        let zero = PhasePoint::zeros(1, 4);
        assert!((hamiltonian_h(&zero, &c, 20).unwrap() - 2.0 * PI).abs() < 1e-12);
        assert!((hamiltonian_j(&zero, &c, 20).unwrap() - 2.0 * PI).abs() < 1e-12);
        let pc = SimConfig { potential: Potential::Power(1), ..c.clone() };
        assert_eq!(hamiltonian_h(&zero, &pc, 20).unwrap(), 0.0);
        // v = cos(x) / sqrt(pi) has unit L^2 norm
        let p = PhasePoint {
            u: SpectralField::zeros(1, 4),
            v: SpectralField::cosine(1, 4, &[1], 1.0 / PI.sqrt()),
        };
        assert!((hamiltonian_h(&p, &c, 20).unwrap() - (0.5 + 2.0 * PI)).abs() < 1e-12);
        // low mode inside the psi = 1 region: J equals H
        let q = PhasePoint {
            u: SpectralField::cosine(1, 4, &[1], 0.4),
            v: SpectralField::sine(1, 4, &[2], 0.2),
        };
        let h = hamiltonian_h(&q, &c, 20).unwrap();
        assert!((hamiltonian_j(&q, &c, 20).unwrap() - h).abs() < 1e-12);
    }

    #[test]
    fn energy_examples() {
        let zero = PhasePoint::zeros(1, 4);
        assert_eq!(energy_e(&zero, 1.0, 1, 20).unwrap(), 0.0);
        // w = cos(x)/sqrt(pi): ||w||_2 = 1, ||D w||^2 = 2, int w^4 = (3 pi / 4) / pi^2
        let w = PhasePoint {
            u: SpectralField::cosine(1, 4, &[1], 1.0 / PI.sqrt()),
            v: SpectralField::zeros(1, 4),
        };
        let expected = 0.5 * 2.0 + (3.0 * PI / 4.0) / (PI * PI) / 4.0;
        assert!((energy_e(&w, 1.0, 1, 20).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn nonlinear_part_vanishes_without_kick() {
        let c = SimConfig { kick: KickMode::Off, ..SimConfig::default() };
        let p = smooth_point(c.maxmode, 1.0);
        let traj = evolve(1.0, &p, &c, 5).unwrap();
        let w = nonlinear_part(&traj, &p, c.alpha).unwrap();
        assert!(w[0].coeffs().iter().all(|z| z.norm() == 0.0));
        for f in &w {
            assert!(sobolev_norm(0.0, f) < 1e-12);
        }
    }

    #[test]
    fn weighted_norms_examples() {
        let c = SimConfig { window_l: 2, ..SimConfig::default() };
        let zero = PhasePoint::zeros(1, 4);
        assert_eq!(weighted_norm_y(&zero, &c).unwrap(), 0.0);
        let p = PhasePoint {
            u: SpectralField::cosine(1, 4, &[1], 1.0),
            v: SpectralField::zeros(1, 4),
        };
        let y = weighted_norm_y(&p, &c).unwrap();
        let z = weighted_norm_z(&p, &c).unwrap();
        assert!(y > 0.0 && z > 0.0);
        let coarse = SimConfig { dt_sup: 1.0, ..c.clone() };
        let wide = PhasePoint {
            u: SpectralField::cosine(1, 4, &[4], 1.0),
            v: SpectralField::zeros(1, 4),
        };
        assert!(matches!(
            weighted_norm_z(&wide, &coarse),
            Err(Error::TimeSamplingTooCoarse { .. })
        ));
    }

    #[test]
    fn window_truncation_tail_bound() {
        let p = PhasePoint {
            u: SpectralField::cosine(1, 4, &[1], 1.0),
            v: SpectralField::zeros(1, 4),
        };
        let c2 = SimConfig { window_l: 2, ..SimConfig::default() };
        let c4 = SimConfig { window_l: 4, ..c2.clone() };
        let (y2, y4) = (weighted_norm_z(&p, &c2).unwrap(), weighted_norm_z(&p, &c4).unwrap());
        // per-window sup of |cos(sqrt2 t) cos x| is at most 1
        let sup = 1.0;
        let tail: f64 = (3..=4).map(|l| 2.0 * (1.0 + l as f64).powf(-c2.beta) * sup).sum();
        assert!(y4 >= y2 && y4 - y2 <= tail + 1e-12);
    }
}
