//! Gaussian random data: the measure `mu`, its truncations, and the
//! randomization of deterministic data.
//!
//! Draws are counter based. A stream `(seed, index)` addresses a ChaCha8
//! substream; each Gaussian is read at a fixed word position derived from a
//! lane and a mode key, so a coefficient never depends on the box size,
//! the truncation radius, the thread schedule, or the order of evaluation.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::SimConfig;
use crate::dynamics::PhasePoint;
use crate::error::{Error, Result};
use crate::spectral::{in_ball, load_fwf1, save_fwf1, LatticeMode, SpectralField};

/// Lane of the u-coefficients in the first draw of a sample.
pub const LANE_U: u32 = 0;
/// Lane of the v-coefficients in the first draw of a sample.
pub const LANE_V: u32 = 1;
/// Lane of the accept/reject uniform in the first draw of a sample.
pub const LANE_ACCEPT: u32 = 2;
/// Lanes consumed per rejection try (u, v, accept).
pub const LANES_PER_TRY: u32 = 3;
const LANE_GENERAL_U: u32 = 1 << 20;
const LANE_GENERAL_V: u32 = (1 << 20) + 1;

/// Source of standard normal and uniform draws addressed by `(lane, key)`.
pub trait GaussianSource: Sync {
    fn gaussian(&self, lane: u32, key: u64) -> f64;
    fn uniform(&self, lane: u32, key: u64) -> f64;
}

/// Counter-based substream `(master seed, sample index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RngStream {
    pub seed: u64,
    pub index: u64,
}

impl RngStream {
    pub fn new(seed: u64, index: u64) -> Self {
        RngStream { seed, index }
    }

    fn words(&self, lane: u32, key: u64) -> (u64, u64) {
        assert!(key < (1 << 32), "mode key {key} exceeds the 32-bit key space");
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.index);
        rng.set_word_pos((((lane as u128) << 32) | key as u128) * 4);
        (rng.next_u64(), rng.next_u64())
    }
}

fn unit_open(bits: u64) -> f64 {
    ((bits >> 11) as f64 + 0.5) / (1u64 << 53) as f64
}

impl GaussianSource for RngStream {
    fn gaussian(&self, lane: u32, key: u64) -> f64 {
        let (a, b) = self.words(lane, key);
        let r = (-2.0 * unit_open(a).ln()).sqrt();
        r * (2.0 * PI * unit_open(b)).cos()
    }

    fn uniform(&self, lane: u32, key: u64) -> f64 {
        unit_open(self.words(lane, key).0)
    }
}

/// Degenerate source returning a fixed Gaussian value (test hook).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantSource(pub f64);

impl GaussianSource for ConstantSource {
    fn gaussian(&self, _lane: u32, _key: u64) -> f64 {
        self.0
    }

    fn uniform(&self, _lane: u32, _key: u64) -> f64 {
        0.5
    }
}

fn zigzag(n: i64) -> u64 {
    if n >= 0 {
        2 * n as u64
    } else {
        (-2 * n - 1) as u64
    }
}

/// Box-independent key of a lattice mode.
pub fn mode_key(mode: &LatticeMode) -> u64 {
    match mode.components() {
        [n] => zigzag(*n),
        [a, b] => {
            let (a, b) = (zigzag(*a), zigzag(*b));
            (a + b) * (a + b + 1) / 2 + b
        }
        _ => unreachable!("lattice modes are 1d or 2d"),
    }
}

/// Fills the representative half (zero mode and upper half-lattice) via
/// `draw(mode, key_re, key_im)` and mirrors conjugates onto the rest.
fn hermitian_fill(
    dim: usize,
    maxmode: usize,
    mut draw: impl FnMut(&LatticeMode, u64, u64) -> Complex64,
) -> SpectralField {
    let mut f = SpectralField::zeros(dim, maxmode);
    for i in 0..f.len() {
        let mode = f.mode_at(i);
        if mode.norm_sq() != 0 && !mode.is_upper_half() {
            continue;
        }
        let key = mode_key(&mode);
        let c = draw(&mode, 2 * key, 2 * key + 1);
        f.coeffs_mut()[i] = c;
        let j = f.mirror_index(i);
        f.coeffs_mut()[j] = c.conj();
    }
    f
}

/// Gaussian field `sum_{lambda_n <= radius} g_n <lambda_n>^{-alpha} phi_n`
/// in the box of radius `maxmode`, read from `lane`.
pub fn gaussian_field(
    dim: usize,
    alpha: f64,
    maxmode: usize,
    radius: f64,
    src: &dyn GaussianSource,
    lane: u32,
) -> SpectralField {
    hermitian_fill(dim, maxmode, |mode, kr, ki| {
        let nsq = mode.norm_sq();
        if !in_ball(nsq, radius) {
            return Complex64::new(0.0, 0.0);
        }
        let sd = (1.0 + nsq as f64).powf(-alpha / 2.0);
        if nsq == 0 {
            Complex64::new(sd * src.gaussian(lane, kr), 0.0)
        } else {
            let h = sd / 2f64.sqrt();
            Complex64::new(h * src.gaussian(lane, kr), h * src.gaussian(lane, ki))
        }
    })
}

/// `(u, v)` drawn from the Gaussian measure for rejection try `try_index`.
pub fn mu_draw(
    dim: usize,
    alpha: f64,
    maxmode: usize,
    radius: f64,
    src: &dyn GaussianSource,
    try_index: u32,
) -> PhasePoint {
    let base = LANES_PER_TRY * try_index;
    PhasePoint {
        u: gaussian_field(dim, alpha, maxmode, radius, src, base + LANE_U),
        v: gaussian_field(dim, 0.0, maxmode, radius, src, base + LANE_V),
    }
}

/// Sample of `mu` on the box of radius `maxmode`.
pub fn sample_mu(cfg: &SimConfig, maxmode: usize, src: &dyn GaussianSource) -> PhasePoint {
    mu_draw(cfg.d, cfg.alpha, maxmode, f64::INFINITY, src, 0)
}

/// Sample of the truncated measure: modes with `lambda_n > radius` vanish.
/// Shares every retained coefficient with [`sample_mu`] for the same source.
pub fn sample_mu_truncated(cfg: &SimConfig, radius: f64, src: &dyn GaussianSource) -> PhasePoint {
    mu_draw(cfg.d, cfg.alpha, cfg.maxmode, radius, src, 0)
}

/// Multiplies every real Fourier coefficient (cosine and sine parts) of
/// `(u0, v0)` by an independent standard Gaussian.
pub fn sample_general(
    u0: &SpectralField,
    v0: &SpectralField,
    src: &dyn GaussianSource,
) -> Result<PhasePoint> {
    if u0.dim() != v0.dim() || u0.maxmode() != v0.maxmode() {
        return Err(Error::ShapeMismatch {
            left_dim: u0.dim(),
            left_k: u0.maxmode(),
            right_dim: v0.dim(),
            right_k: v0.maxmode(),
        });
    }
    let randomize = |f: &SpectralField, lane: u32| {
        hermitian_fill(f.dim(), f.maxmode(), |mode, kr, ki| {
            let c = f.coeff(mode);
            if mode.norm_sq() == 0 {
                Complex64::new(c.re * src.gaussian(lane, kr), 0.0)
            } else {
                Complex64::new(c.re * src.gaussian(lane, kr), c.im * src.gaussian(lane, ki))
            }
        })
    };
    Ok(PhasePoint {
        u: randomize(u0, LANE_GENERAL_U),
        v: randomize(v0, LANE_GENERAL_V),
    })
}

/// A set of phase points with their stream indices and optional weights.
#[derive(Debug, Clone, PartialEq)]
pub struct Ensemble {
    pub members: Vec<PhasePoint>,
    pub config: SimConfig,
    pub seeds: Vec<u64>,
    pub weights: Option<Vec<f64>>,
    /// Extra manifest entries (for example potential, k, acceptance-rate).
    pub metadata: BTreeMap<String, String>,
}

impl Ensemble {
    /// Draws `count` samples of `mu` truncated at `cfg.n_cut`, in parallel.
    pub fn sample_mu(cfg: &SimConfig, count: usize) -> Self {
        let seeds: Vec<u64> = (0..count as u64).collect();
        let members = seeds
            .par_iter()
            .map(|&i| sample_mu_truncated(cfg, cfg.n_cut, &RngStream::new(cfg.seed, i)))
            .collect();
        Ensemble {
            members,
            config: cfg.clone(),
            seeds,
            weights: None,
            metadata: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    /// Validates weights: present weights must be positive and finite.
    pub fn check_weights(&self) -> Result<()> {
        if let Some(w) = &self.weights {
            if w.len() != self.members.len() {
                return Err(Error::InvalidParameter(format!(
                    "{} weights for {} members",
                    w.len(),
                    self.members.len()
                )));
            }
            if let Some(bad) = w.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::InvalidParameter(format!("weight {bad} is not positive and finite")));
            }
        }
        Ok(())
    }

    /// Writes `manifest.txt`, `config.cfg`, optional `weights.txt` and
    /// `u_XXXXXX.fwf` / `v_XXXXXX.fwf` pairs under `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        self.check_weights()?;
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut manifest = BTreeMap::new();
        manifest.insert("seed".to_string(), self.config.seed.to_string());
        manifest.insert("alpha".to_string(), self.config.alpha.to_string());
        manifest.insert("N".to_string(), self.config.n_cut.to_string());
        manifest.insert("count".to_string(), self.members.len().to_string());
        manifest.insert("dim".to_string(), self.config.d.to_string());
        manifest.insert("K".to_string(), self.config.maxmode.to_string());
        for (k, v) in &self.metadata {
            manifest.insert(k.clone(), v.clone());
        }
        let text: String = manifest.iter().map(|(k, v)| format!("{k}={v}\n")).collect();
        write_text(&dir.join("manifest.txt"), &text)?;
        write_text(&dir.join("config.cfg"), &self.config.to_config_text())?;
        let indices: String = self.seeds.iter().map(|s| format!("{s}\n")).collect();
        write_text(&dir.join("indices.txt"), &indices)?;
        if let Some(w) = &self.weights {
            let text: String = w.iter().map(|x| format!("{x}\n")).collect();
            write_text(&dir.join("weights.txt"), &text)?;
        }
        for (i, m) in self.members.iter().enumerate() {
            save_fwf1(&member_path(dir, 'u', i), &m.u)?;
            save_fwf1(&member_path(dir, 'v', i), &m.v)?;
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest_path = dir.join("manifest.txt");
        let manifest_text = read_text(&manifest_path)?;
        let mut metadata = BTreeMap::new();
        for (lineno, line) in manifest_text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                path: manifest_path.display().to_string(),
                line: lineno + 1,
                message: "expected key=value".into(),
            })?;
            metadata.insert(k.trim().to_string(), v.trim().to_string());
        }
        let count: usize = metadata
            .get("count")
            .and_then(|c| c.parse().ok())
            .ok_or_else(|| Error::Format("manifest lacks a valid count".into()))?;
        let config = crate::config::parse_config(&read_text(&dir.join("config.cfg"))?, "config.cfg")?;
        let seeds = parse_lines(&read_text(&dir.join("indices.txt"))?)?;
        let weights_path = dir.join("weights.txt");
        let weights = if weights_path.exists() {
            Some(parse_lines(&read_text(&weights_path)?)?)
        } else {
            None
        };
        let members = (0..count)
            .map(|i| {
                Ok(PhasePoint {
                    u: load_fwf1(&member_path(dir, 'u', i))?,
                    v: load_fwf1(&member_path(dir, 'v', i))?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        for key in ["seed", "alpha", "N", "count", "dim", "K"] {
            metadata.remove(key);
        }
        let ens = Ensemble {
            members,
            config,
            seeds,
            weights,
            metadata,
        };
        ens.check_weights()?;
        Ok(ens)
    }
}

fn member_path(dir: &Path, which: char, i: usize) -> PathBuf {
    dir.join(format!("{which}_{i:06}.fwf"))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_lines<T: std::str::FromStr>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| {
            l.trim()
                .parse()
                .map_err(|_| Error::Format(format!("bad numeric line {l:?}")))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{sharp_project, sobolev_norm};

    fn cfg(alpha: f64, maxmode: usize) -> SimConfig {
        SimConfig {
            alpha,
            maxmode,
            ..SimConfig::default()
        }
    }

    #[test]
    fn stream_is_reproducible() {
        let a = RngStream::new(7, 3);
        let b = RngStream::new(7, 3);
        assert_eq!(a.gaussian(0, 11).to_bits(), b.gaussian(0, 11).to_bits());
        assert_ne!(a.gaussian(0, 11), RngStream::new(7, 4).gaussian(0, 11));
        assert_ne!(a.gaussian(0, 11), a.gaussian(1, 11));
        assert_ne!(a.gaussian(0, 11), a.gaussian(0, 12));
    }

    #[test]
    fn mode_keys_are_distinct() {
        let mut seen = std::collections::HashSet::new();
        for a in -20..=20 {
            for b in -20..=20 {
                assert!(seen.insert(mode_key(&LatticeMode::new(&[a, b]))));
            }
        }
    }

    #[test]
    fn zero_source_gives_zero_field() {
        let p = sample_mu(&cfg(1.0, 4), 4, &ConstantSource(0.0));
        assert!(p.u.coeffs().iter().all(|c| c.norm() == 0.0));
        assert!(p.v.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn samples_are_hermitian() {
        for dim in [1, 2] {
            let c = SimConfig { d: dim, alpha: 1.5, ..SimConfig::default() };
            let p = sample_mu(&c, 5, &RngStream::new(1, 2));
            assert_eq!(p.u.hermitian_defect(), 0.0);
            assert_eq!(p.v.hermitian_defect(), 0.0);
        }
    }

    #[test]
    fn truncation_coupling_is_exact() {
        let c = cfg(1.0, 12);
        let src = RngStream::new(42, 9);
        let full = sample_mu(&c, 12, &src);
        for radius in [0.0, 2.0, 5.5, 12.0] {
            let t = sample_mu_truncated(&c, radius, &src);
            assert_eq!(t.u, sharp_project(radius, &full.u));
            assert_eq!(t.v, sharp_project(radius, &full.v));
        }
        // a larger box keeps every low coefficient
        let bigger = sample_mu(&c, 20, &src);
        assert_eq!(bigger.u.resized(12), full.u);
    }

    #[test]
    fn radius_zero_keeps_constant_mode_only() {
        let p = sample_mu_truncated(&cfg(1.0, 6), 0.0, &RngStream::new(3, 0));
        for (i, c) in p.u.coeffs().iter().enumerate() {
            assert_eq!(c.norm() != 0.0, p.u.mode_at(i).norm_sq() == 0);
        }
    }

    #[test]
    fn mean_l2_matches_closed_forms() {
        // d=1, alpha=1, lambda_n <= 2: sum_n <n>^{-2} = 1 + 2/2 + 2/5 = 2.4
        let c = cfg(1.0, 2);
        let n = 40_000;
        let (mut su, mut su2, mut sv, mut sv2) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let p = sample_mu_truncated(&c, 2.0, &RngStream::new(5, i));
            let u = sobolev_norm(0.0, &p.u).powi(2);
            let v = sobolev_norm(0.0, &p.v).powi(2);
            su += u;
            su2 += u * u;
            sv += v;
            sv2 += v * v;
        }
        let nf = n as f64;
        let (mu, mv) = (su / nf, sv / nf);
        let seu = ((su2 / nf - mu * mu) / nf).sqrt();
        let sev = ((sv2 / nf - mv * mv) / nf).sqrt();
        assert!((mu - 2.4).abs() < 3.0 * seu, "{mu} vs 2.4 (se {seu})");
        assert!((mv - 5.0).abs() < 3.0 * sev, "{mv} vs 5 (se {sev})");
    }

    #[test]
    fn general_randomization_hooks() {
        let u0 = crate::spectral::test_field(1, 5, 1);
        let v0 = crate::spectral::test_field(1, 5, 2);
        let same = sample_general(&u0, &v0, &ConstantSource(1.0)).unwrap();
        assert_eq!(same.u, u0);
        assert_eq!(same.v, v0);
        let zero = SpectralField::zeros(1, 5);
        let z = sample_general(&zero, &zero, &RngStream::new(1, 1)).unwrap();
        assert!(z.u.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn general_randomization_preserves_mean_energy() {
        let u0 = crate::spectral::test_field(1, 6, 4);
        let target = sobolev_norm(0.0, &u0).powi(2);
        let n = 20_000;
        let vals: Vec<f64> = (0..n)
            .map(|i| {
                let p = sample_general(&u0, &u0, &RngStream::new(8, i)).unwrap();
                sobolev_norm(0.0, &p.u).powi(2)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / n as f64;
        let var = vals.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!((mean - target).abs() < 3.0 * se);
    }

    #[test]
    fn ensemble_round_trip() {
        let c = SimConfig { n_cut: 3.0, maxmode: 3, ..SimConfig::default() };
        let mut ens = Ensemble::sample_mu(&c, 4);
        ens.weights = Some(vec![0.5, 1.0, 0.25, 0.75]);
        ens.metadata.insert("potential".into(), "exp".into());
        let dir = tempfile::tempdir().unwrap();
        ens.save(dir.path()).unwrap();
        let back = Ensemble::load(dir.path()).unwrap();
        assert_eq!(back, ens);
        let manifest = std::fs::read_to_string(dir.path().join("manifest.txt")).unwrap();
        assert!(manifest.contains("count=4"));
        assert!(manifest.contains("alpha=1"));
    }
}
