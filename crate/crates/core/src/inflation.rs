//! Periodic profiles of `V'' + V^{2k+1} = 0` and the concentrated
//! norm-inflation data built from them.

use std::f64::consts::PI;

use crate::dynamics::PhasePoint;
use crate::error::{Error, Result};
use crate::spectral::{from_grid, sobolev_norm, GridField, SpectralField};

/// Samples per period in the tabulated profile.
pub const TABLE_SAMPLES: usize = 1 << 14;
/// Tolerance of the tabulated first integral and of period closure.
pub const PROFILE_TOL: f64 = 1e-8;
/// First-integral drift during integration that aborts the solve.
pub const DRIFT_ABORT: f64 = 1e-6;
/// Default ODE step.
pub const DEFAULT_DT_ODE: f64 = 1.0 / 32768.0;

fn potential(k: u32, v: f64) -> f64 {
    let p = 2 * k as i32 + 2;
    v.powi(p) / p as f64
}

fn force(k: u32, v: f64) -> f64 {
    v.powi(2 * k as i32 + 1)
}

/// One period of the solution with `V(0) = V0`, `V'(0) = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct OdeProfile {
    pub k: u32,
    pub v0: f64,
    pub period: f64,
    /// `2 F(V0)`.
    pub first_integral: f64,
    /// `TABLE_SAMPLES + 1` uniform times over `[0, period]`.
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub derivs: Vec<f64>,
}

fn hermite(h: f64, s: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> (f64, f64) {
    let s2 = s * s;
    let s3 = s2 * s;
    let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
    let h10 = s3 - 2.0 * s2 + s;
    let h01 = -2.0 * s3 + 3.0 * s2;
    let h11 = s3 - s2;
    let val = h00 * y0 + h10 * h * d0 + h01 * y1 + h11 * h * d1;
    let dh00 = (6.0 * s2 - 6.0 * s) / h;
    let dh10 = 3.0 * s2 - 4.0 * s + 1.0;
    let dh01 = (-6.0 * s2 + 6.0 * s) / h;
    let dh11 = 3.0 * s2 - 2.0 * s;
    let der = dh00 * y0 + dh10 * d0 + dh01 * y1 + dh11 * d1;
    (val, der)
}

impl OdeProfile {
    /// `(V(t), V'(t))` by periodic extension and cubic Hermite interpolation.
    pub fn eval(&self, t: f64) -> (f64, f64) {
        let tau = t.rem_euclid(self.period);
        let h = self.period / TABLE_SAMPLES as f64;
        let i = ((tau / h).floor() as usize).min(TABLE_SAMPLES - 1);
        let s = (tau - i as f64 * h) / h;
        hermite(h, s, self.values[i], self.derivs[i], self.values[i + 1], self.derivs[i + 1])
    }

    pub fn value(&self, t: f64) -> f64 {
        self.eval(t).0
    }

    /// Largest `| V'^2 + 2F(V) - 2F(V0) |` over the table.
    pub fn first_integral_error(&self) -> f64 {
        self.values
            .iter()
            .zip(&self.derivs)
            .map(|(v, d)| (d * d + 2.0 * potential(self.k, *v) - self.first_integral).abs())
            .fold(0.0, f64::max)
    }

    /// `max(|V(period) - V0|, |V'(period)|)`.
    pub fn closure_error(&self) -> f64 {
        let n = self.values.len() - 1;
        (self.values[n] - self.v0).abs().max(self.derivs[n].abs())
    }

    pub fn min_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// CSV `t,V,dV`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,V,dV\n");
        for i in 0..self.times.len() {
            out.push_str(&format!("{},{},{}\n", self.times[i], self.values[i], self.derivs[i]));
        }
        out
    }
}

/// Integrates with velocity Verlet until the first return to `(V0, 0)`,
/// then tabulates one period.
pub fn solve_profile(k: u32, v0: f64, dt_ode: f64) -> Result<OdeProfile> {
    if !(v0 > 0.0) || !(dt_ode > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "profile needs V0 > 0 and dt_ode > 0 (got {v0}, {dt_ode})"
        )));
    }
    let e0 = 2.0 * potential(k, v0);
    let scale = e0.max(1e-300);
    let mut t_hist = vec![0.0];
    let mut v_hist = vec![v0];
    let mut d_hist = vec![0.0];
    let (mut v, mut d) = (v0, 0.0);
    let mut acc = -force(k, v);
    let max_steps = (2.0 * period_quadrature(k, v0) / dt_ode) as usize + 16;
    let mut seen_negative = false;
    for step in 1..=max_steps {
        let d_half = d + 0.5 * dt_ode * acc;
        v += dt_ode * d_half;
        acc = -force(k, v);
        let d_new = d_half + 0.5 * dt_ode * acc;
        let drift = (d_new * d_new + 2.0 * potential(k, v) - e0).abs() / scale;
        if drift > DRIFT_ABORT {
            return Err(Error::NoReturn(format!(
                "first-integral drift {drift:.3e} exceeds {DRIFT_ABORT:e} at step {step}; reduce dt_ode"
            )));
        }
        t_hist.push(step as f64 * dt_ode);
        v_hist.push(v);
        d_hist.push(d_new);
        if d_new > 0.0 {
            seen_negative = true;
        }
        if seen_negative && d > 0.0 && d_new <= 0.0 {
            // V' changes sign from + to -: the orbit is back at V = V0
            let n = t_hist.len() - 1;
            let a0 = -force(k, v_hist[n - 1]);
            let a1 = -force(k, v_hist[n]);
            let period = refine_root(t_hist[n - 1], dt_ode, d_hist[n - 1], a0, d_hist[n], a1);
            return tabulate(k, v0, e0, period, &t_hist, &v_hist, &d_hist);
        }
        d = d_new;
    }
    Err(Error::NoReturn(format!("no return to V0 within {max_steps} steps")))
}

/// Root of the cubic Hermite interpolant of `V'` on one step.
fn refine_root(t0: f64, h: f64, y0: f64, d0: f64, y1: f64, d1: f64) -> f64 {
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..80 {
        let mid = 0.5 * (lo + hi);
        if hermite(h, mid, y0, d0, y1, d1).0 > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    t0 + 0.5 * (lo + hi) * h
}

fn tabulate(
    k: u32,
    v0: f64,
    e0: f64,
    period: f64,
    t_hist: &[f64],
    v_hist: &[f64],
    d_hist: &[f64],
) -> Result<OdeProfile> {
    let h = t_hist[1] - t_hist[0];
    let mut times = Vec::with_capacity(TABLE_SAMPLES + 1);
    let mut values = Vec::with_capacity(TABLE_SAMPLES + 1);
    let mut derivs = Vec::with_capacity(TABLE_SAMPLES + 1);
    for j in 0..=TABLE_SAMPLES {
        let t = period * j as f64 / TABLE_SAMPLES as f64;
        let i = ((t / h).floor() as usize).min(t_hist.len() - 2);
        let s = (t - t_hist[i]) / h;
        // Hermite in V uses V' as slope; Hermite in V' uses V'' = -f(V)
        let (val, _) = hermite(h, s, v_hist[i], d_hist[i], v_hist[i + 1], d_hist[i + 1]);
        let (der, _) = hermite(
            h,
            s,
            d_hist[i],
            -force(k, v_hist[i]),
            d_hist[i + 1],
            -force(k, v_hist[i + 1]),
        );
        times.push(t);
        values.push(val);
        derivs.push(der);
    }
    let profile = OdeProfile {
        k,
        v0,
        period,
        first_integral: e0,
        times,
        values,
        derivs,
    };
    let fi = profile.first_integral_error() / e0.max(1e-300);
    let closure = profile.closure_error() / v0;
    if fi > PROFILE_TOL || closure > PROFILE_TOL {
        return Err(Error::NoReturn(format!(
            "tabulated profile misses tolerance {PROFILE_TOL:e}: first integral {fi:.3e}, closure {closure:.3e}"
        )));
    }
    Ok(profile)
}

/// Period `2 int_{-V0}^{V0} dv / sqrt(2 (F(V0) - F(v)))`.
///
/// With `v = V0 sin(theta)` the integrand becomes
/// `V0^{-k} sqrt(k+1) / sqrt(1 + x + ... + x^k)`, `x = sin^2(theta)`, which is
/// smooth and periodic, so the trapezoidal rule converges geometrically.
pub fn period_quadrature(k: u32, v0: f64) -> f64 {
    let n = 4096;
    let h = PI / n as f64;
    let sum: f64 = (0..n)
        .map(|j| {
            let theta = -0.5 * PI + j as f64 * h;
            let x = theta.sin().powi(2);
            let p: f64 = (0..=k).map(|i| x.powi(i as i32)).sum();
            ((k + 1) as f64).sqrt() / p.sqrt()
        })
        .sum();
    2.0 * v0.powi(-(k as i32)) * sum * h
}

/// Smooth bump `phi(y) = exp(1 - 1/(1 - |y|^2))` on `|y| < 1`, with
/// `y = (x - center) / radius` measured in the periodic distance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BumpPhi {
    pub center: [f64; 2],
    pub radius: f64,
}

impl Default for BumpPhi {
    fn default() -> Self {
        BumpPhi {
            center: [PI, PI],
            radius: 1.0,
        }
    }
}

fn periodic_offset(x: f64, c: f64) -> f64 {
    (x - c + PI).rem_euclid(2.0 * PI) - PI
}

impl BumpPhi {
    pub fn profile(y2: f64) -> f64 {
        if y2 < 1.0 {
            (1.0 - 1.0 / (1.0 - y2)).exp()
        } else {
            0.0
        }
    }

    /// `phi(n (x - center))`.
    pub fn eval_scaled(&self, x: &[f64], n: f64) -> f64 {
        let y2: f64 = x
            .iter()
            .zip(&self.center)
            .map(|(xi, ci)| (n * periodic_offset(*xi, *ci) / self.radius).powi(2))
            .sum();
        Self::profile(y2)
    }
}

/// Scales of the concentrated data at index `n`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InflationParams {
    pub n: f64,
    pub s: f64,
    pub d: usize,
    pub k: u32,
    pub alpha: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl InflationParams {
    /// Validates `0 < s < d/2 - alpha/k`, `delta2 > delta1 > 0`, `n >= 2`.
    pub fn new(n: f64, s: f64, d: usize, k: u32, alpha: f64, delta1: f64, delta2: f64) -> Result<Self> {
        let mut bad = Vec::new();
        if k == 0 {
            bad.push("requires k >= 1".to_string());
        } else {
            let sc = d as f64 / 2.0 - alpha / k as f64;
            if !(s > 0.0 && s < sc) {
                bad.push(format!("requires 0 < s < d/2 - alpha/k = {sc} (got s = {s})"));
            }
        }
        if !(delta1 > 0.0 && delta2 > delta1) {
            bad.push(format!("requires 0 < delta1 < delta2 (got {delta1}, {delta2})"));
        }
        if !(n >= 2.0) {
            bad.push(format!("requires n >= 2 (got {n})"));
        }
        if !bad.is_empty() {
            return Err(Error::Constraints(bad));
        }
        Ok(InflationParams { n, s, d, k, alpha, delta1, delta2 })
    }

    /// `kappa_n = (log n)^{-delta1}`.
    pub fn kappa(&self) -> f64 {
        self.n.ln().powf(-self.delta1)
    }

    /// Data amplitude `kappa_n n^{d/2 - s}`.
    pub fn amplitude(&self) -> f64 {
        self.kappa() * self.n.powf(self.d as f64 / 2.0 - self.s)
    }

    /// `lambda_n = amplitude^k`.
    pub fn lambda(&self) -> f64 {
        self.amplitude().powi(self.k as i32)
    }

    /// `t_n = ((log n)^{delta2} n^{-(d/2 - s)})^k`.
    pub fn t_n(&self) -> f64 {
        (self.n.ln().powf(self.delta2) * self.n.powf(-(self.d as f64 / 2.0 - self.s))).powi(self.k as i32)
    }
}

/// Relative `l^2` mass of the data beyond the box that triggers a resolution error.
pub const RESOLUTION_TOL: f64 = 1e-3;

fn amplitude_grid(params: &InflationParams, phi: &BumpPhi, points: usize, scale: f64) -> GridField {
    let a = params.amplitude() * scale;
    GridField::from_fn(params.d, points, |x| a * phi.eval_scaled(x, params.n))
}

/// Data `(kappa_n n^{d/2-s} phi(n x), 0)` on the box of radius `maxmode`.
/// Refuses boxes that lose more than [`RESOLUTION_TOL`] of the `l^2` mass.
pub fn build_inflation_data(
    params: &InflationParams,
    phi: &BumpPhi,
    maxmode: usize,
    points: usize,
) -> Result<PhasePoint> {
    build_scaled_data(params, phi, maxmode, points, 1.0)
}

/// [`build_inflation_data`] with the amplitude multiplied by `scale`.
pub fn build_scaled_data(
    params: &InflationParams,
    phi: &BumpPhi,
    maxmode: usize,
    points: usize,
    scale: f64,
) -> Result<PhasePoint> {
    let inner = (points - 2) / 2;
    if inner < maxmode {
        return Err(Error::GridTooSmall {
            points,
            maxmode,
            required: crate::spectral::min_grid_points(maxmode),
        });
    }
    let grid = amplitude_grid(params, phi, points, scale);
    let wide = from_grid(&grid, inner)?;
    let u = wide.resized(maxmode);
    let total = sobolev_norm(0.0, &wide);
    let kept = sobolev_norm(0.0, &u);
    let lost = ((total * total - kept * kept).max(0.0)).sqrt() / total.max(1e-300);
    if lost > RESOLUTION_TOL {
        return Err(Error::Resolution(format!(
            "bump at n = {} loses {lost:.2e} of its l2 mass beyond K = {maxmode} (limit {RESOLUTION_TOL:e})",
            params.n
        )));
    }
    Ok(PhasePoint {
        v: SpectralField::zeros(params.d, maxmode),
        u,
    })
}

/// `v_n(t, x) = a(x) V(t a(x)^k)` with `a(x) = kappa_n n^{d/2-s} phi(n x)`.
pub fn eval_vn(t: f64, params: &InflationParams, phi: &BumpPhi, profile: &OdeProfile, points: usize) -> GridField {
    eval_vn_scaled(t, params, phi, profile, points, 1.0)
}

pub fn eval_vn_scaled(
    t: f64,
    params: &InflationParams,
    phi: &BumpPhi,
    profile: &OdeProfile,
    points: usize,
    scale: f64,
) -> GridField {
    let mut g = amplitude_grid(params, phi, points, scale);
    for a in g.values_mut() {
        if *a != 0.0 {
            *a *= profile.value(t * a.powi(params.k as i32));
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::function::gamma::gamma;

    /// `T(k, 1) = 4 sqrt(p/2) B(1/p, 1/2) / p` with `p = 2k + 2`.
    fn beta_period(k: u32) -> f64 {
        let p = 2.0 * k as f64 + 2.0;
        let b = gamma(1.0 / p) * gamma(0.5) / gamma(1.0 / p + 0.5);
        4.0 * (p / 2.0).sqrt() * b / p
    }

    #[test]
    fn linear_profile_is_cosine() {
        let prof = solve_profile(0, 1.0, DEFAULT_DT_ODE).unwrap();
        assert!((prof.period - 2.0 * PI).abs() < 1e-8);
        for t in [0.3, 1.7, 4.0, 9.5] {
            assert!((prof.value(t) - t.cos()).abs() < 1e-6);
        }
    }

    #[test]
    fn cubic_period_reference() {
        assert!((beta_period(1) - 7.4163).abs() < 1e-4);
        assert!((period_quadrature(1, 1.0) - beta_period(1)).abs() < 1e-12);
        assert!((period_quadrature(0, 1.0) - 2.0 * PI).abs() < 1e-12);
    }

    #[test]
    fn quadrature_matches_beta_function() {
        for k in 0..6 {
            assert!((period_quadrature(k, 1.0) - beta_period(k)).abs() < 1e-11, "k={k}");
        }
    }

    #[test]
    fn quadrature_scaling() {
        for k in 1..4 {
            let r = period_quadrature(k, 1.7) / period_quadrature(k, 1.0);
            assert!((r - 1.7f64.powi(-(k as i32))).abs() < 1e-8);
        }
    }

    #[test]
    fn profiles_match_quadrature() {
        for k in 1..=3 {
            let prof = solve_profile(k, 1.0, DEFAULT_DT_ODE).unwrap();
            assert!((prof.period - period_quadrature(k, 1.0)).abs() < 1e-6);
            assert!(prof.first_integral_error() < 1e-8);
            assert!(prof.closure_error() < 1e-8);
            assert!((prof.min_value() + 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn coarse_step_is_refused() {
        assert!(matches!(solve_profile(3, 1.0, 0.2), Err(Error::NoReturn(_))));
    }

    #[test]
    fn bump_normalization_and_support() {
        let phi = BumpPhi::default();
        assert_eq!(phi.eval_scaled(&[PI], 8.0), 1.0);
        assert_eq!(phi.eval_scaled(&[PI + 0.3], 4.0), 0.0);
        assert!(phi.eval_scaled(&[PI + 0.1], 4.0) > 0.0);
    }

    #[test]
    fn params_validation() {
        let p = InflationParams::new(8.0, 0.15, 1, 2, 0.6, 0.25, 0.5).unwrap();
        assert!((p.kappa() - 8f64.ln().powf(-0.25)).abs() < 1e-15);
        assert!((p.lambda() - p.amplitude().powi(2)).abs() < 1e-12);
        assert!(InflationParams::new(8.0, 0.25, 1, 2, 0.6, 0.25, 0.5).is_err());
        assert!(InflationParams::new(8.0, 0.15, 1, 2, 0.6, 0.5, 0.25).is_err());
    }

    #[test]
    fn data_and_profile_agree_at_zero() {
        let p = InflationParams::new(8.0, 0.15, 1, 2, 0.6, 0.25, 0.5).unwrap();
        let phi = BumpPhi::default();
        let prof = solve_profile(2, 1.0, DEFAULT_DT_ODE).unwrap();
        let data = build_inflation_data(&p, &phi, 384, 1540).unwrap();
        assert!(data.v.coeffs().iter().all(|c| c.norm() == 0.0));
        let g0 = eval_vn(0.0, &p, &phi, &prof, 1540);
        let a = amplitude_grid(&p, &phi, 1540, 1.0);
        assert!((a.max_abs() - p.amplitude()).abs() < 1e-12 * p.amplitude());
        for (x, y) in g0.values().iter().zip(a.values()) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!(matches!(
            build_inflation_data(&p, &phi, 40, 1540),
            Err(Error::Resolution(_))
        ));
    }

    #[test]
    fn vn_solves_the_ode_pointwise() {
        let p = InflationParams::new(16.0, 0.15, 1, 2, 0.6, 0.25, 0.5).unwrap();
        let phi = BumpPhi::default();
        let prof = solve_profile(2, 1.0, DEFAULT_DT_ODE).unwrap();
        let x = [PI + 0.01];
        let a = p.amplitude() * phi.eval_scaled(&x, p.n);
        let v = |t: f64| a * prof.value(t * a * a);
        let t = 0.3;
        let residual = |h: f64| {
            let d2 = (v(t + h) - 2.0 * v(t) + v(t - h)) / (h * h);
            (d2 + v(t).powi(5)).abs()
        };
        let (r1, r2) = (residual(1e-2), residual(5e-3));
        assert!(r2 < r1 && r1 / r2 > 3.0, "{r1} {r2}");
    }
}
