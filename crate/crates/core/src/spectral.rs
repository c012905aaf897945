//! Lattice Fourier representation of real fields on the torus `T^d`.
//!
//! A [`SpectralField`] stores the coefficients `c_n` of
//! `u(x) = sum_n c_n e^{i n.x} / (2 pi)^{d/2}` for every lattice mode in the
//! symmetric box `|n_i| <= K`. The exponentials are orthonormal in `L^2(T^d)`,
//! so Sobolev norms are weighted `l^2` sums of the coefficients. Real fields
//! are encoded by Hermitian symmetry `c_{-n} = conj(c_n)`.
//!
//! Grid samples live on the uniform grid `x_j = 2 pi j / M` and are produced
//! by FFT ([`to_grid`], [`from_grid`]).

use std::cell::RefCell;
use std::f64::consts::PI;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

fn plan(len: usize, inverse: bool) -> Arc<dyn Fft<f64>> {
    PLANNER.with(|p| {
        let mut p = p.borrow_mut();
        if inverse {
            p.plan_fft_inverse(len)
        } else {
            p.plan_fft_forward(len)
        }
    })
}

/// One lattice mode `n` in `Z^d` (`d` is 1 or 2).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LatticeMode {
    dim: usize,
    n: [i64; 2],
}

impl LatticeMode {
    pub fn new(n: &[i64]) -> Self {
        assert!(n.len() == 1 || n.len() == 2, "lattice modes are 1d or 2d");
        let mut arr = [0; 2];
        arr[..n.len()].copy_from_slice(n);
        LatticeMode { dim: n.len(), n: arr }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[i64] {
        &self.n[..self.dim]
    }

    /// `|n|^2`, the Laplace eigenvalue of `e^{i n.x}`.
    pub fn norm_sq(&self) -> i64 {
        self.components().iter().map(|v| v * v).sum()
    }

    /// `lambda_n = |n|`.
    pub fn lambda(&self) -> f64 {
        (self.norm_sq() as f64).sqrt()
    }

    /// `<lambda_n> = (1 + |n|^2)^{1/2}`.
    pub fn bracket(&self) -> f64 {
        (1.0 + self.norm_sq() as f64).sqrt()
    }

    pub fn negated(&self) -> Self {
        let mut n = self.n;
        n[0] = -n[0];
        n[1] = -n[1];
        LatticeMode { dim: self.dim, n }
    }

    /// True for the representative half of the lattice: the first nonzero
    /// component is positive. The zero mode is not in either half.
    pub fn is_upper_half(&self) -> bool {
        match self.components().iter().find(|&&c| c != 0) {
            Some(&c) => c > 0,
            None => false,
        }
    }
}

/// `<lambda_n>^sigma = (1 + |n|^2)^{sigma/2}`, the symbol of `D^sigma`.
pub fn fractional_multiplier(sigma: f64, mode: &LatticeMode) -> f64 {
    bracket_pow(mode.norm_sq(), sigma)
}

fn bracket_pow(norm_sq: i64, sigma: f64) -> f64 {
    if sigma == 0.0 {
        1.0
    } else {
        (1.0 + norm_sq as f64).powf(sigma / 2.0)
    }
}

/// Real field on `T^d` as Fourier coefficients over the box `|n_i| <= K`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    dim: usize,
    maxmode: usize,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn zeros(dim: usize, maxmode: usize) -> Self {
        assert!(dim == 1 || dim == 2, "dimension must be 1 or 2");
        let side = 2 * maxmode + 1;
        SpectralField {
            dim,
            maxmode,
            coeffs: vec![Complex64::new(0.0, 0.0); side.pow(dim as u32)],
        }
    }

    /// Builds a field from raw coefficients in lexicographic mode order.
    pub fn from_coeffs(dim: usize, maxmode: usize, coeffs: Vec<Complex64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        let expected = (2 * maxmode + 1).pow(dim as u32);
        if coeffs.len() != expected {
            return Err(Error::Format(format!(
                "expected {expected} coefficients for d={dim}, K={maxmode}, got {}",
                coeffs.len()
            )));
        }
        Ok(SpectralField {
            dim,
            maxmode,
            coeffs,
        })
    }

    /// Builds a field by evaluating `f` on every mode of the box.
    pub fn from_fn(dim: usize, maxmode: usize, mut f: impl FnMut(&LatticeMode) -> Complex64) -> Self {
        let mut out = Self::zeros(dim, maxmode);
        for (i, mode) in out.modes().enumerate().collect::<Vec<_>>() {
            out.coeffs[i] = f(&mode);
        }
        out
    }

    /// The field with a single real cosine `amp * cos(n.x)`.
    pub fn cosine(dim: usize, maxmode: usize, n: &[i64], amp: f64) -> Self {
        let mut out = Self::zeros(dim, maxmode);
        let mode = LatticeMode::new(n);
        let scale = (2.0 * PI).powf(dim as f64 / 2.0);
        if mode.norm_sq() == 0 {
            out.set(&mode, Complex64::new(amp * scale, 0.0));
        } else {
            out.set(&mode, Complex64::new(0.5 * amp * scale, 0.0));
            out.set(&mode.negated(), Complex64::new(0.5 * amp * scale, 0.0));
        }
        out
    }

    /// The field with a single real sine `amp * sin(n.x)`, `n != 0`.
    pub fn sine(dim: usize, maxmode: usize, n: &[i64], amp: f64) -> Self {
        let mut out = Self::zeros(dim, maxmode);
        let mode = LatticeMode::new(n);
        let scale = (2.0 * PI).powf(dim as f64 / 2.0);
        out.set(&mode, Complex64::new(0.0, -0.5 * amp * scale));
        out.set(&mode.negated(), Complex64::new(0.0, 0.5 * amp * scale));
        out
    }

    /// The constant field `value`.
    pub fn constant(dim: usize, maxmode: usize, value: f64) -> Self {
        Self::cosine(dim, maxmode, &vec![0; dim], value)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn maxmode(&self) -> usize {
        self.maxmode
    }

    pub fn side(&self) -> usize {
        2 * self.maxmode + 1
    }

    pub fn len(&self) -> usize {
        self.coeffs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    pub fn mode_at(&self, index: usize) -> LatticeMode {
        let k = self.maxmode as i64;
        let side = self.side();
        match self.dim {
            1 => LatticeMode::new(&[index as i64 - k]),
            _ => LatticeMode::new(&[(index / side) as i64 - k, (index % side) as i64 - k]),
        }
    }

    pub fn index_of(&self, mode: &LatticeMode) -> Option<usize> {
        if mode.dim() != self.dim {
            return None;
        }
        let k = self.maxmode as i64;
        let side = self.side();
        let mut idx = 0usize;
        for &c in mode.components() {
            if c < -k || c > k {
                return None;
            }
            idx = idx * side + (c + k) as usize;
        }
        Some(idx)
    }

    /// Coefficient of mode `n`; zero outside the stored box.
    pub fn coeff(&self, mode: &LatticeMode) -> Complex64 {
        self.index_of(mode)
            .map(|i| self.coeffs[i])
            .unwrap_or_else(|| Complex64::new(0.0, 0.0))
    }

    /// Sets one coefficient. Panics if the mode is outside the box.
    pub fn set(&mut self, mode: &LatticeMode, value: Complex64) {
        let i = self
            .index_of(mode)
            .unwrap_or_else(|| panic!("mode {:?} outside box K={}", mode.components(), self.maxmode));
        self.coeffs[i] = value;
    }

    /// Modes in lexicographic order (first axis slowest).
    pub fn modes(&self) -> impl Iterator<Item = LatticeMode> + '_ {
        (0..self.len()).map(move |i| self.mode_at(i))
    }

    /// `|n|^2` for every stored index.
    pub fn norm_sq_table(&self) -> Vec<i64> {
        self.modes().map(|m| m.norm_sq()).collect()
    }

    /// Multiplies each coefficient by `weight(|n|^2)`.
    pub fn scale_by_norm_sq(&self, weight: impl Fn(i64) -> f64) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            let nsq = self.mode_at(i).norm_sq();
            *c *= weight(nsq);
        }
        out
    }

    /// Index of `-n` for the mode stored at `index`.
    pub fn mirror_index(&self, index: usize) -> usize {
        self.len() - 1 - index
    }

    /// Largest violation of `c_{-n} = conj(c_n)`.
    pub fn hermitian_defect(&self) -> f64 {
        (0..self.len())
            .map(|i| (self.coeffs[i] - self.coeffs[self.mirror_index(i)].conj()).norm())
            .fold(0.0, f64::max)
    }

    /// Replaces the coefficients by their Hermitian-symmetric part.
    pub fn symmetrize(&mut self) {
        let n = self.len();
        for i in 0..=n / 2 {
            let j = n - 1 - i;
            let avg = 0.5 * (self.coeffs[i] + self.coeffs[j].conj());
            self.coeffs[i] = avg;
            self.coeffs[j] = avg.conj();
        }
    }

    /// Copies into a box of radius `maxmode`, dropping or zero-padding modes.
    pub fn resized(&self, maxmode: usize) -> Self {
        let mut out = Self::zeros(self.dim, maxmode);
        for i in 0..out.len() {
            let mode = out.mode_at(i);
            out.coeffs[i] = self.coeff(&mode);
        }
        out
    }

    fn check_shape(&self, other: &Self) -> Result<()> {
        if self.dim != other.dim || self.maxmode != other.maxmode {
            return Err(Error::ShapeMismatch {
                left_dim: self.dim,
                left_k: self.maxmode,
                right_dim: other.dim,
                right_k: other.maxmode,
            });
        }
        Ok(())
    }

    /// `self + a * other`.
    pub fn axpy(&self, a: f64, other: &Self) -> Result<Self> {
        self.check_shape(other)?;
        let mut out = self.clone();
        for (c, o) in out.coeffs.iter_mut().zip(&other.coeffs) {
            *c += o * a;
        }
        Ok(out)
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.axpy(1.0, other)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.axpy(-1.0, other)
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.coeffs.iter_mut().for_each(|c| *c *= a);
        out
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_shape(other)?;
        Ok(self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max))
    }

    /// Largest `|n|^2` carrying a nonzero coefficient (`None` for the zero field).
    pub fn max_active_norm_sq(&self) -> Option<i64> {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(|(i, _)| self.mode_at(i).norm_sq())
            .max()
    }
}

/// Real samples on the uniform grid `2 pi j / M` (row-major for `d = 2`).
#[derive(Debug, Clone, PartialEq)]
pub struct GridField {
    dim: usize,
    points: usize,
    values: Vec<f64>,
}

impl GridField {
    pub fn new(dim: usize, points: usize, values: Vec<f64>) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::UnsupportedDimension(dim));
        }
        if values.len() != points.pow(dim as u32) {
            return Err(Error::InvalidParameter(format!(
                "grid of {points}^{dim} points needs {} values, got {}",
                points.pow(dim as u32),
                values.len()
            )));
        }
        Ok(GridField { dim, points, values })
    }

    /// Samples `f(x)` at every grid node.
    pub fn from_fn(dim: usize, points: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        let h = 2.0 * PI / points as f64;
        let values = match dim {
            1 => (0..points).map(|j| f(&[j as f64 * h])).collect(),
            _ => (0..points * points)
                .map(|idx| f(&[(idx / points) as f64 * h, (idx % points) as f64 * h]))
                .collect(),
        };
        GridField { dim, points, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn points(&self) -> usize {
        self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Coordinates of node `index`.
    pub fn node(&self, index: usize) -> [f64; 2] {
        let h = 2.0 * PI / self.points as f64;
        match self.dim {
            1 => [index as f64 * h, 0.0],
            _ => [(index / self.points) as f64 * h, (index % self.points) as f64 * h],
        }
    }

    /// Quadrature weight `(2 pi / M)^d` of one node.
    pub fn cell_volume(&self) -> f64 {
        (2.0 * PI / self.points as f64).powi(self.dim as i32)
    }

    /// Trapezoidal quadrature of `g(u(x))` over the torus.
    pub fn integrate(&self, g: impl Fn(f64) -> f64) -> f64 {
        self.cell_volume() * self.values.iter().map(|&v| g(v)).sum::<f64>()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Minimum grid size that carries a box of radius `maxmode` without loss.
pub fn min_grid_points(maxmode: usize) -> usize {
    2 * maxmode + 2
}

/// Default oversampled grid `4K + 4` used for nonlinear evaluations.
pub fn default_grid_points(maxmode: usize) -> usize {
    4 * maxmode + 4
}

fn check_grid(points: usize, maxmode: usize) -> Result<()> {
    let required = min_grid_points(maxmode);
    if points < required {
        return Err(Error::GridTooSmall {
            points,
            maxmode,
            required,
        });
    }
    Ok(())
}

fn fft_nd(buf: &mut [Complex64], dim: usize, points: usize, inverse: bool) {
    let fft = plan(points, inverse);
    match dim {
        1 => fft.process(buf),
        _ => {
            for row in buf.chunks_mut(points) {
                fft.process(row);
            }
            let mut col = vec![Complex64::new(0.0, 0.0); points];
            for c in 0..points {
                for r in 0..points {
                    col[r] = buf[r * points + c];
                }
                fft.process(&mut col);
                for r in 0..points {
                    buf[r * points + c] = col[r];
                }
            }
        }
    }
}

fn wrap(n: i64, points: usize) -> usize {
    n.rem_euclid(points as i64) as usize
}

/// Position of box coefficient `index` in the `M^d` FFT buffer.
fn grid_index(dim: usize, maxmode: usize, points: usize, index: usize) -> usize {
    let k = maxmode as i64;
    match dim {
        1 => wrap(index as i64 - k, points),
        _ => {
            let side = 2 * maxmode + 1;
            wrap((index / side) as i64 - k, points) * points + wrap((index % side) as i64 - k, points)
        }
    }
}

/// Evaluates the field at the `M^d` grid nodes (inverse DFT).
pub fn to_grid(field: &SpectralField, points: usize) -> Result<GridField> {
    check_grid(points, field.maxmode())?;
    let dim = field.dim();
    let mut buf = vec![Complex64::new(0.0, 0.0); points.pow(dim as u32)];
    for (i, c) in field.coeffs().iter().enumerate() {
        buf[grid_index(dim, field.maxmode(), points, i)] = *c;
    }
    fft_nd(&mut buf, dim, points, true);
    let norm = (2.0 * PI).powf(-(dim as f64) / 2.0);
    let values = buf.iter().map(|z| z.re * norm).collect();
    Ok(GridField {
        dim,
        points,
        values,
    })
}

/// Projects grid samples onto the box of radius `maxmode` (forward DFT).
pub fn from_grid(grid: &GridField, maxmode: usize) -> Result<SpectralField> {
    check_grid(grid.points(), maxmode)?;
    let dim = grid.dim();
    let points = grid.points();
    let mut buf: Vec<Complex64> = grid.values().iter().map(|&v| Complex64::new(v, 0.0)).collect();
    fft_nd(&mut buf, dim, points, false);
    let scale = (2.0 * PI).powf(dim as f64 / 2.0) / (points.pow(dim as u32) as f64);
    let mut out = SpectralField::zeros(dim, maxmode);
    for i in 0..out.len() {
        out.coeffs[i] = buf[grid_index(dim, maxmode, points, i)] * scale;
    }
    out.symmetrize();
    Ok(out)
}

/// Applies `D^sigma = (1 - Delta)^{sigma/2}`.
pub fn apply_d(sigma: f64, field: &SpectralField) -> SpectralField {
    field.scale_by_norm_sq(|nsq| bracket_pow(nsq, sigma))
}

/// True iff `lambda_n <= N`, compared as `|n|^2 <= N^2`.
pub fn in_ball(norm_sq: i64, radius: f64) -> bool {
    radius.is_infinite() || (norm_sq as f64) <= radius * radius
}

/// Sharp projector onto `E_N = span{ e_n : lambda_n <= N }`.
pub fn sharp_project(radius: f64, field: &SpectralField) -> SpectralField {
    field.scale_by_norm_sq(|nsq| if in_ball(nsq, radius) { 1.0 } else { 0.0 })
}

/// `Id - Pi_N`: keeps the modes with `lambda_n > N`.
pub fn sharp_complement(radius: f64, field: &SpectralField) -> SpectralField {
    field.scale_by_norm_sq(|nsq| if in_ball(nsq, radius) { 0.0 } else { 1.0 })
}

/// Smooth cutoff `psi` with `psi = 1` on `[0, 1/2]` and `psi = 0` on `(1, inf)`.
///
/// On `(1/2, 1)` the bridge is the C-infinity step
/// `g(1 - t) / (g(1 - t) + g(t))` with `t = 2r - 1` and `g(x) = exp(-1/x)`;
/// it is monotone and all its derivatives vanish at both junctions.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct CutoffPsi;

impl CutoffPsi {
    pub fn eval(&self, r: f64) -> f64 {
        if r <= 0.5 {
            1.0
        } else if r >= 1.0 {
            0.0
        } else {
            let t = 2.0 * r - 1.0;
            let g = |x: f64| (-1.0 / x).exp();
            let a = g(1.0 - t);
            let b = g(t);
            a / (a + b)
        }
    }

    /// `psi(lambda_n / N)` with the plateau and the support decided on `|n|^2`.
    pub fn weight(&self, norm_sq: i64, radius: f64) -> f64 {
        if radius.is_infinite() {
            return 1.0;
        }
        let nsq = norm_sq as f64;
        if 4.0 * nsq <= radius * radius {
            1.0
        } else if nsq > radius * radius {
            0.0
        } else {
            self.eval(nsq.sqrt() / radius)
        }
    }
}

/// Smooth projector `pi_N`: coefficient `n` scaled by `psi(lambda_n / N)`.
pub fn smooth_project(radius: f64, field: &SpectralField, psi: &CutoffPsi) -> SpectralField {
    field.scale_by_norm_sq(|nsq| psi.weight(nsq, radius))
}

/// `(sum_n <lambda_n>^{2s} |c_n|^2)^{1/2}`.
pub fn sobolev_norm(s: f64, field: &SpectralField) -> f64 {
    field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(i, c)| bracket_pow(field.mode_at(i).norm_sq(), 2.0 * s) * c.norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Quadrature `L^r` norm of grid samples; `r = inf` gives the max.
pub fn grid_lp_norm(r: f64, grid: &GridField) -> f64 {
    if r.is_infinite() {
        return grid.max_abs();
    }
    let sum: f64 = if r.fract() == 0.0 && r <= 64.0 {
        let n = r as i32;
        grid.values().iter().map(|v| v.abs().powi(n)).sum()
    } else {
        grid.values().iter().map(|v| v.abs().powf(r)).sum()
    };
    (grid.cell_volume() * sum).powf(1.0 / r)
}

/// `W^{eps0, r0}` norm `|| D^{eps0} u ||_{L^{r0}}` on an `M`-point grid.
pub fn wepsr_norm(eps0: f64, r0: f64, field: &SpectralField, points: usize) -> Result<f64> {
    let g = to_grid(&apply_d(eps0, field), points)?;
    Ok(grid_lp_norm(r0, &g))
}

const FWF1_MAGIC: &[u8; 4] = b"FWF1";

/// Serializes a field as FWF1: magic, `u32` d, `u32` K, then
/// `(2K+1)^d` coefficients as little-endian `f64` pairs.
pub fn write_fwf1<W: Write>(mut w: W, field: &SpectralField) -> std::io::Result<()> {
    let mut bytes = Vec::with_capacity(12 + 16 * field.len());
    bytes.extend_from_slice(FWF1_MAGIC);
    bytes.extend_from_slice(&(field.dim() as u32).to_le_bytes());
    bytes.extend_from_slice(&(field.maxmode() as u32).to_le_bytes());
    for c in field.coeffs() {
        bytes.extend_from_slice(&c.re.to_le_bytes());
        bytes.extend_from_slice(&c.im.to_le_bytes());
    }
    w.write_all(&bytes)
}

pub fn read_fwf1<R: Read>(mut r: R) -> Result<SpectralField> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)
        .map_err(|e| Error::Format(e.to_string()))?;
    if bytes.len() < 12 || &bytes[..4] != FWF1_MAGIC {
        return Err(Error::Format("missing FWF1 magic".into()));
    }
    let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize;
    let dim = word(4);
    let maxmode = word(8);
    if dim != 1 && dim != 2 {
        return Err(Error::UnsupportedDimension(dim));
    }
    let count = (2 * maxmode + 1).pow(dim as u32);
    if bytes.len() != 12 + 16 * count {
        return Err(Error::Format(format!(
            "payload holds {} bytes, expected {}",
            bytes.len() - 12,
            16 * count
        )));
    }
    let f = |o: usize| f64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
    let coeffs = (0..count)
        .map(|i| Complex64::new(f(12 + 16 * i), f(20 + 16 * i)))
        .collect();
    SpectralField::from_coeffs(dim, maxmode, coeffs)
}

pub fn save_fwf1(path: &Path, field: &SpectralField) -> Result<()> {
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_fwf1(std::io::BufWriter::new(file), field).map_err(|e| Error::io(path, e))
}

pub fn load_fwf1(path: &Path) -> Result<SpectralField> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_fwf1(std::io::BufReader::new(file))
}

#[cfg(test)]
pub(crate) use tests::test_field;

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    /// Deterministic pseudo-random Hermitian field for tests.
    pub(crate) fn test_field(dim: usize, k: usize, salt: u64) -> SpectralField {
        let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) | 1;
        let mut next = move || {
            state ^= state << 13;
            state ^= state >> 7;
            state ^= state << 17;
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut f = SpectralField::zeros(dim, k);
        for i in 0..f.len() {
            f.coeffs_mut()[i] = c(next(), next());
        }
        f.symmetrize();
        f
    }

    #[test]
    fn multiplier_examples() {
        assert_eq!(fractional_multiplier(0.0, &LatticeMode::new(&[7])), 1.0);
        assert_eq!(fractional_multiplier(2.0, &LatticeMode::new(&[3, 4])), 26.0);
        assert_eq!(fractional_multiplier(-1.0, &LatticeMode::new(&[0])), 1.0);
        let m = LatticeMode::new(&[0, 0]);
        assert_eq!(m.bracket(), 1.0);
        assert!(LatticeMode::new(&[1, 0]).bracket() > 1.0);
    }

    #[test]
    fn apply_d_examples() {
        let f = test_field(1, 6, 3);
        assert_eq!(apply_d(0.0, &f), f);
        let back = apply_d(-1.3, &apply_d(1.3, &f));
        assert!(back.max_abs_diff(&f).unwrap() < 1e-13);
        let mut single = SpectralField::zeros(1, 3);
        single.set(&LatticeMode::new(&[1]), c(1.0, 0.0));
        let out = apply_d(2.0, &single);
        assert!((out.coeff(&LatticeMode::new(&[1])) - c(2.0, 0.0)).norm() < 1e-15);
    }

    #[test]
    fn sharp_projector_examples() {
        let f = test_field(1, 3, 5);
        assert_eq!(sharp_project(10.0, &f), f);
        let p0 = sharp_project(0.0, &f);
        for (i, z) in p0.coeffs().iter().enumerate() {
            if p0.mode_at(i).norm_sq() != 0 {
                assert_eq!(*z, c(0.0, 0.0));
            }
        }
        let p2 = sharp_project(2.0, &f);
        for n in -2..=2 {
            let m = LatticeMode::new(&[n]);
            assert_eq!(p2.coeff(&m), f.coeff(&m));
        }
        assert_eq!(p2.coeff(&LatticeMode::new(&[3])), c(0.0, 0.0));
        let sum = p2.add(&sharp_complement(2.0, &f)).unwrap();
        assert_eq!(sum, f);
    }

    #[test]
    fn psi_profile() {
        let psi = CutoffPsi;
        assert_eq!(psi.eval(0.0), 1.0);
        assert_eq!(psi.eval(0.5), 1.0);
        assert_eq!(psi.eval(1.0), 0.0);
        assert_eq!(psi.eval(1.7), 0.0);
        let mut prev = 1.0;
        for i in 0..=1000 {
            let r = 0.5 + 0.5 * i as f64 / 1000.0;
            let v = psi.eval(r);
            assert!((0.0..=1.0).contains(&v));
            assert!(v <= prev + 1e-15);
            prev = v;
        }
        assert!((psi.eval(0.75) - 0.5).abs() < 1e-14);
    }

    #[test]
    fn smooth_projector_regions() {
        let psi = CutoffPsi;
        let f = test_field(1, 10, 8);
        let p = smooth_project(8.0, &f, &psi);
        for (i, z) in p.coeffs().iter().enumerate() {
            let m = p.mode_at(i);
            if m.lambda() <= 4.0 {
                assert_eq!(*z, f.coeffs()[i]);
            }
            if m.lambda() > 8.0 {
                assert_eq!(*z, c(0.0, 0.0));
            }
        }
        let half = sharp_project(4.0, &f);
        assert_eq!(smooth_project(8.0, &half, &psi), half);
    }

    #[test]
    fn grid_round_trip_and_constant() {
        for dim in [1, 2] {
            let f = test_field(dim, 5, 11);
            let g = to_grid(&f, 12).unwrap();
            let back = from_grid(&g, 5).unwrap();
            assert!(back.max_abs_diff(&f).unwrap() < 1e-12);
        }
        let cst = SpectralField::constant(1, 2, 3.0);
        let g = to_grid(&cst, 8).unwrap();
        assert!(g.values().iter().all(|v| (v - 3.0).abs() < 1e-14));
    }

    #[test]
    fn cosine_samples() {
        let f = SpectralField::cosine(1, 1, &[1], 1.0);
        let g = to_grid(&f, 16).unwrap();
        for (j, v) in g.values().iter().enumerate() {
            let x = 2.0 * PI * j as f64 / 16.0;
            assert!((v - x.cos()).abs() < 1e-14);
        }
    }

    #[test]
    fn grid_too_small_is_rejected() {
        let f = SpectralField::zeros(1, 4);
        assert!(matches!(
            to_grid(&f, 9),
            Err(Error::GridTooSmall { required: 10, .. })
        ));
        assert!(to_grid(&f, 10).is_ok());
    }

    #[test]
    fn sobolev_examples() {
        assert_eq!(sobolev_norm(0.7, &SpectralField::zeros(2, 3)), 0.0);
        let cosx = SpectralField::cosine(1, 2, &[1], 1.0);
        assert!((sobolev_norm(0.0, &cosx) - PI.sqrt()).abs() < 1e-14);
        // direct quadrature of cos^2 on a fine grid
        let quad: f64 = (0..4096)
            .map(|j| (2.0 * PI * j as f64 / 4096.0).cos().powi(2))
            .sum::<f64>()
            * 2.0
            * PI
            / 4096.0;
        assert!((sobolev_norm(0.0, &cosx).powi(2) - quad).abs() < 1e-12);
    }

    #[test]
    fn lp_norm_examples() {
        let ones = GridField::new(1, 8, vec![1.0; 8]).unwrap();
        for r in [1.0, 2.0, 3.5] {
            assert!((grid_lp_norm(r, &ones) - (2.0 * PI).powf(1.0 / r)).abs() < 1e-13);
        }
        let two = GridField::new(1, 2, vec![-3.0, 2.0]).unwrap();
        assert_eq!(grid_lp_norm(f64::INFINITY, &two), 3.0);
    }

    #[test]
    fn wepsr_examples() {
        let f = test_field(1, 4, 2);
        let l2 = wepsr_norm(0.0, 2.0, &f, 10).unwrap();
        assert!((l2 - sobolev_norm(0.0, &f)).abs() < 1e-12);
        assert_eq!(wepsr_norm(0.3, 6.0, &SpectralField::zeros(1, 4), 10).unwrap(), 0.0);
        // constant c: D^eps is the identity on n = 0 and u = c pointwise
        let cst = SpectralField::constant(2, 3, 1.5);
        let val = wepsr_norm(0.4, 5.0, &cst, 8).unwrap();
        let hand = 1.5 * (4.0 * PI * PI).powf(1.0 / 5.0);
        assert!((val - hand).abs() < 1e-12);
    }

    #[test]
    fn fwf1_layout_is_bit_exact() {
        let mut f = SpectralField::zeros(1, 1);
        f.coeffs_mut()[0] = c(1.0, -2.0);
        f.coeffs_mut()[2] = c(1.0, 2.0);
        let mut bytes = Vec::new();
        write_fwf1(&mut bytes, &f).unwrap();
        assert_eq!(&bytes[..4], b"FWF1");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(bytes.len(), 12 + 3 * 16);
        assert_eq!(&bytes[12..20], &1.0f64.to_le_bytes());
        assert_eq!(&bytes[20..28], &(-2.0f64).to_le_bytes());
        let back = read_fwf1(&bytes[..]).unwrap();
        assert_eq!(back, f);
        assert!(read_fwf1(&bytes[..20]).is_err());
        assert!(read_fwf1(&b"FWF2xxxxxxxx"[..]).is_err());
    }
}
