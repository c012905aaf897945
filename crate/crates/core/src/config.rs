//! Flat `key=value` configuration files.
//!
//! Lines are `key = value`; `#` starts a comment; lists are comma
//! separated. Unknown and duplicate keys are rejected. Missing keys take
//! documented defaults, several of which derive from other keys (see
//! [`SimConfig`]). All constraint violations are collected and reported at
//! once.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dynamics::KickMode;
use crate::error::{Error, Result};
use crate::experiments::{Observable, TailStatistic};
use crate::gibbs::Potential;

/// Which experiment a configuration drives.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ExperimentKind {
    #[default]
    Invariance,
    Convergence,
    Tail,
    Inflation,
    Energy,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Invariance => "invariance",
            ExperimentKind::Convergence => "convergence",
            ExperimentKind::Tail => "tail",
            ExperimentKind::Inflation => "inflation",
            ExperimentKind::Energy => "energy",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExperimentKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "invariance" => Ok(ExperimentKind::Invariance),
            "convergence" => Ok(ExperimentKind::Convergence),
            "tail" => Ok(ExperimentKind::Tail),
            "inflation" => Ok(ExperimentKind::Inflation),
            "energy" => Ok(ExperimentKind::Energy),
            other => Err(format!(
                "unknown experiment {other:?} (invariance, convergence, tail, inflation, energy)"
            )),
        }
    }
}

/// All problem parameters.
///
/// Defaults: `d=1`, `alpha=1`, `potential=exp`, `k=1`, `N=4`, `K=ceil(N)`,
/// `M=4K+4`, `dt=0.1 <N*>^{-alpha}` where `N*` is the largest frequency the
/// experiment evolves, `T=1`, `sigma=s=eps0=theta=(alpha-d/2)/2`,
/// `s1=0.9 s`, `r0=2 ceil(d/eps0)`, `beta=2`, `window_L=4`, `dt_sup=1/64`,
/// `seed=0`, `samples=1000`, `n_list=8,16,32,64`, `delta1=0.25`,
/// `delta2=0.5`, `R_grid` empty (automatic), `observables=u_l2sq,potential`,
/// `output_dir=out`, `threads=0`, `kick=normal`, `t_list=1,5`,
/// `n_ref=2 max(n_list)`, `statistic=y_norm`, `amplitude=1`,
/// `modes_per_n=48`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub experiment: ExperimentKind,
    pub d: usize,
    pub alpha: f64,
    pub potential: Potential,
    /// Truncation radius `N`.
    pub n_cut: f64,
    /// Mode box radius `K`.
    pub maxmode: usize,
    /// Grid points per axis `M`.
    pub grid_m: usize,
    pub dt: f64,
    /// Final time `T`.
    pub t_final: f64,
    pub sigma: f64,
    pub s: f64,
    pub s1: f64,
    pub beta: f64,
    pub eps0: f64,
    pub r0: f64,
    pub window_l: usize,
    pub dt_sup: f64,
    pub seed: u64,
    pub samples: usize,
    pub n_list: Vec<f64>,
    pub delta1: f64,
    pub delta2: f64,
    pub r_grid: Vec<f64>,
    pub observables: Vec<String>,
    pub output_dir: PathBuf,
    /// Worker threads, 0 for automatic.
    pub threads: usize,
    pub kick: KickMode,
    /// Checkpoint times of the invariance experiment.
    pub t_list: Vec<f64>,
    /// Reference truncation of the convergence experiment.
    pub n_ref: f64,
    pub statistic: TailStatistic,
    /// Smoothness index of the `D^theta u` sup-norm statistic.
    pub theta: f64,
    /// Multiplier of the inflation data amplitude.
    pub amplitude: f64,
    /// Inflation box radius per unit of `n` (`K = modes_per_n * n`).
    pub modes_per_n: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        parse_config("", "<defaults>").expect("defaults are valid")
    }
}

/// Every accepted key, in output order.
pub const KEYS: &[&str] = &[
    "experiment", "d", "alpha", "potential", "k", "N", "K", "M", "dt", "T", "sigma", "s", "s1",
    "beta", "eps0", "r0", "window_L", "dt_sup", "seed", "samples", "n_list", "delta1", "delta2",
    "R_grid", "observables", "output_dir", "threads", "kick", "t_list", "n_ref", "statistic",
    "theta", "amplitude", "modes_per_n",
];

struct Raw<'a> {
    path: &'a str,
    entries: BTreeMap<String, (usize, String)>,
}

impl Raw<'_> {
    fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(default),
            Some((line, text)) => text.parse::<T>().map_err(|e| Error::Parse {
                path: self.path.to_string(),
                line: *line,
                message: format!("bad value {text:?} for {key}: {e}"),
            }),
        }
    }

    fn list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>>
    where
        T::Err: fmt::Display,
    {
        match self.entries.get(key) {
            None => Ok(default),
            Some((line, text)) => text
                .split(',')
                .map(str::trim)
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<T>().map_err(|e| Error::Parse {
                        path: self.path.to_string(),
                        line: *line,
                        message: format!("bad list entry {t:?} for {key}: {e}"),
                    })
                })
                .collect(),
        }
    }
}

fn bracket(n: f64, alpha: f64) -> f64 {
    (1.0 + n * n).powf(alpha / 2.0)
}

/// Parses configuration text; `path` labels error messages.
pub fn parse_config(text: &str, path: &str) -> Result<SimConfig> {
    let mut entries = BTreeMap::new();
    for (i, raw_line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw_line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: path.to_string(),
            line: line_no,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected key=value, found {line:?}")))?;
        let (key, value) = (key.trim(), value.trim());
        if !KEYS.contains(&key) {
            return Err(parse_err(format!("unknown key {key:?}")));
        }
        if let Some((first, _)) = entries.get(key) {
            return Err(parse_err(format!("duplicate key {key:?} (first set on line {first})")));
        }
        entries.insert(key.to_string(), (line_no, value.to_string()));
    }
    let raw = Raw { path, entries };

    let experiment: ExperimentKind = raw.get("experiment", ExperimentKind::Invariance)?;
    let d: usize = raw.get("d", 1)?;
    let alpha: f64 = raw.get("alpha", 1.0)?;
    let k: u32 = raw.get("k", 1)?;
    let potential = match raw.get::<String>("potential", "exp".into())?.as_str() {
        "exp" => Potential::Exp,
        "power" => Potential::Power(k),
        other => {
            let line = raw.entries["potential"].0;
            return Err(Error::Parse {
                path: path.to_string(),
                line,
                message: format!("unknown potential {other:?} (exp, power)"),
            });
        }
    };
    let n_cut: f64 = raw.get("N", 4.0)?;
    let default_k = if n_cut.is_finite() { n_cut.max(1.0).ceil() as usize } else { 1 };
    let maxmode: usize = raw.get("K", default_k)?;
    let grid_m: usize = raw.get("M", 4 * maxmode + 4)?;
    let t_final: f64 = raw.get("T", 1.0)?;
    let half_gap = (alpha - d as f64 / 2.0) / 2.0;
    let sigma: f64 = raw.get("sigma", half_gap)?;
    let s: f64 = raw.get("s", half_gap)?;
    let s1: f64 = raw.get("s1", 0.9 * s)?;
    let beta: f64 = raw.get("beta", 2.0)?;
    let eps0: f64 = raw.get("eps0", half_gap)?;
    let default_r0 = if eps0 > 0.0 { 2.0 * (d as f64 / eps0).ceil() } else { 2.0 };
    let r0: f64 = raw.get("r0", default_r0)?;
    let window_l: usize = raw.get("window_L", 4)?;
    let dt_sup: f64 = raw.get("dt_sup", 1.0 / 64.0)?;
    let seed: u64 = raw.get("seed", 0)?;
    let samples: usize = raw.get("samples", 1000)?;
    let n_list: Vec<f64> = raw.list("n_list", vec![8.0, 16.0, 32.0, 64.0])?;
    let delta1: f64 = raw.get("delta1", 0.25)?;
    let delta2: f64 = raw.get("delta2", 0.5)?;
    let r_grid: Vec<f64> = raw.list("R_grid", Vec::new())?;
    let observables: Vec<String> = raw.list("observables", vec!["u_l2sq".into(), "potential".into()])?;
    let output_dir: PathBuf = PathBuf::from(raw.get::<String>("output_dir", "out".into())?);
    let threads: usize = raw.get("threads", 0)?;
    let kick: KickMode = raw.get("kick", KickMode::Normal)?;
    let t_list: Vec<f64> = raw.list("t_list", vec![1.0, 5.0])?;
    let n_max = n_list.iter().copied().fold(0.0, f64::max);
    let n_ref: f64 = raw.get("n_ref", 2.0 * n_max)?;
    let statistic: TailStatistic = raw.get("statistic", TailStatistic::YNorm)?;
    let theta: f64 = raw.get("theta", half_gap)?;
    let amplitude: f64 = raw.get("amplitude", 1.0)?;
    let modes_per_n: usize = raw.get("modes_per_n", 48)?;
    let fastest = match experiment {
        ExperimentKind::Convergence => n_ref,
        ExperimentKind::Inflation => modes_per_n as f64 * n_max,
        ExperimentKind::Energy | ExperimentKind::Tail => maxmode as f64,
        ExperimentKind::Invariance => {
            if n_cut.is_finite() {
                n_cut
            } else {
                maxmode as f64
            }
        }
    };
    let dt: f64 = raw.get("dt", 0.1 / bracket(fastest, alpha))?;

    let cfg = SimConfig {
        experiment,
        d,
        alpha,
        potential,
        n_cut,
        maxmode,
        grid_m,
        dt,
        t_final,
        sigma,
        s,
        s1,
        beta,
        eps0,
        r0,
        window_l,
        dt_sup,
        seed,
        samples,
        n_list,
        delta1,
        delta2,
        r_grid,
        observables,
        output_dir,
        threads,
        kick,
        t_list,
        n_ref,
        statistic,
        theta,
        amplitude,
        modes_per_n,
    };
    let violations = cfg.violations();
    if !violations.is_empty() {
        return Err(Error::Constraints(violations));
    }
    Ok(cfg)
}

/// Reads and validates a configuration file.
pub fn load_config(path: &Path) -> Result<SimConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text, &path.display().to_string())
}

fn fmt_list(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

impl SimConfig {
    /// `alpha - d/2`, the regularity gap of the Gaussian data.
    pub fn gap(&self) -> f64 {
        self.alpha - self.d as f64 / 2.0
    }

    pub fn k(&self) -> Option<u32> {
        self.potential.power_k()
    }

    fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        let d = self.d as f64;
        let gap = self.gap();
        if self.d != 1 && self.d != 2 {
            v.push(format!("requires d in {{1, 2}} (got {})", self.d));
        }
        if !(gap > 0.0) {
            v.push(format!("requires alpha > d/2 (got alpha = {}, d = {})", self.alpha, self.d));
        }
        if let Potential::Power(k) = self.potential {
            if k < 1 {
                v.push("requires k >= 1 for the power potential".into());
            }
        }
        if !(self.n_cut >= 0.0) {
            v.push(format!("requires N >= 0 (got {})", self.n_cut));
        }
        if self.maxmode < 1 {
            v.push("requires K >= 1".into());
        }
        if self.grid_m < 2 * self.maxmode + 2 {
            v.push(format!(
                "requires M >= 2K + 2 = {} (got M = {})",
                2 * self.maxmode + 2,
                self.grid_m
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            v.push(format!("requires dt > 0 (got {})", self.dt));
        }
        if !(self.t_final > 0.0 && self.t_final.is_finite()) {
            v.push(format!("requires T > 0 (got {})", self.t_final));
        }
        if !(self.beta > 1.0) {
            v.push(format!("requires beta > 1 (got {})", self.beta));
        }
        if !(self.r0 >= 2.0) {
            v.push(format!("requires r0 >= 2 (got {})", self.r0));
        }
        if !(d / self.r0 < self.eps0 && self.eps0 < gap) {
            v.push(format!(
                "requires d/r0 < eps0 < alpha - d/2, i.e. {} < eps0 < {} (got eps0 = {})",
                d / self.r0,
                gap,
                self.eps0
            ));
        }
        let mu_supported = matches!(
            self.experiment,
            ExperimentKind::Invariance | ExperimentKind::Convergence | ExperimentKind::Tail
        );
        if mu_supported && !(self.sigma > 0.0 && self.sigma < gap) {
            v.push(format!(
                "requires 0 < sigma < alpha - d/2 = {gap} for Gaussian data (got sigma = {})",
                self.sigma
            ));
        }
        if self.experiment == ExperimentKind::Tail && !(self.theta > 0.0 && self.theta < gap) {
            v.push(format!(
                "requires 0 < theta < alpha - d/2 = {gap} (got theta = {})",
                self.theta
            ));
        }
        if !(self.s1 >= 0.0) {
            v.push(format!("requires s1 >= 0 (got {})", self.s1));
        }
        if !(self.dt_sup > 0.0 && self.dt_sup <= 1.0) {
            v.push(format!("requires 0 < dt_sup <= 1 (got {})", self.dt_sup));
        }
        if self.samples < 1 {
            v.push("requires samples >= 1".into());
        }
        if self.n_list.is_empty() {
            v.push("requires a nonempty n_list".into());
        } else if self.n_list.iter().any(|x| !(*x > 0.0)) || self.n_list.windows(2).any(|w| w[1] <= w[0]) {
            v.push(format!("requires n_list positive and strictly increasing (got {})", fmt_list(&self.n_list)));
        }
        if !(self.delta1 > 0.0 && self.delta2 > self.delta1) {
            v.push(format!(
                "requires 0 < delta1 < delta2 (got delta1 = {}, delta2 = {})",
                self.delta1, self.delta2
            ));
        }
        if self.r_grid.iter().any(|r| !(*r >= 0.0)) || self.r_grid.windows(2).any(|w| w[1] <= w[0]) {
            v.push(format!("requires R_grid nonnegative and strictly increasing (got {})", fmt_list(&self.r_grid)));
        }
        for name in &self.observables {
            if let Err(e) = Observable::parse(name, self.d) {
                v.push(e);
            }
        }
        if self.t_list.iter().any(|t| !(*t >= 0.0 && t.is_finite())) {
            v.push(format!("requires finite t_list entries >= 0 (got {})", fmt_list(&self.t_list)));
        }
        if !(self.amplitude > 0.0) {
            v.push(format!("requires amplitude > 0 (got {})", self.amplitude));
        }
        if self.modes_per_n < 1 {
            v.push("requires modes_per_n >= 1".into());
        }
        match self.experiment {
            ExperimentKind::Invariance => {
                if !self.n_cut.is_finite() {
                    v.push("requires a finite N for the invariance experiment".into());
                } else if self.n_cut > self.maxmode as f64 * (self.d as f64).sqrt() + 1e-12 {
                    v.push(format!("requires the box K = {} to contain the ball of radius N = {}", self.maxmode, self.n_cut));
                }
                if self.t_list.is_empty() {
                    v.push("requires a nonempty t_list".into());
                }
            }
            ExperimentKind::Convergence => {
                let n_max = self.n_list.iter().copied().fold(0.0, f64::max);
                if !(self.n_ref > n_max) {
                    v.push(format!("requires n_ref > max(n_list) = {n_max} (got {})", self.n_ref));
                }
                if !self.n_ref.is_finite() {
                    v.push("requires a finite n_ref".into());
                }
            }
            ExperimentKind::Tail => {
                if self.statistic == TailStatistic::Highfreq {
                    if !(self.n_cut > 0.0 && self.n_cut.is_finite()) {
                        v.push("requires a finite N > 0 for the highfreq statistic".into());
                    } else if 2.0 * self.n_cut >= self.maxmode as f64 {
                        v.push(format!("requires 2N < K for the highfreq statistic (got N = {}, K = {})", self.n_cut, self.maxmode));
                    }
                    if !(self.s > 0.0) {
                        v.push(format!("requires s > 0 for the highfreq statistic (got {})", self.s));
                    }
                }
            }
            ExperimentKind::Inflation => match self.potential {
                Potential::Exp => v.push("requires the power potential for the inflation experiment".into()),
                Potential::Power(k) => {
                    let sc = d / 2.0 - self.alpha / k as f64;
                    if !(self.s > 0.0 && self.s < sc) {
                        v.push(format!(
                            "requires 0 < s < d/2 - alpha/k = {sc} (supercritical window, got s = {})",
                            self.s
                        ));
                    }
                    if self.n_list.iter().any(|n| *n < 2.0) {
                        v.push("requires n_list entries >= 2".into());
                    }
                }
            },
            ExperimentKind::Energy => match self.potential {
                Potential::Exp => v.push("requires the power potential for the energy experiment".into()),
                Potential::Power(k) => {
                    let lo = (k as f64 - 1.0) * self.alpha / k as f64;
                    if !(self.s > lo && self.s < self.alpha) {
                        v.push(format!(
                            "requires (k-1) alpha / k < s < alpha, i.e. {lo} < s < {} (got s = {})",
                            self.alpha, self.s
                        ));
                    }
                }
            },
        }
        v
    }

    /// Configuration text that reloads to an equal value.
    pub fn to_config_text(&self) -> String {
        let mut lines: Vec<(String, String)> = vec![
            ("experiment".into(), self.experiment.to_string()),
            ("d".into(), self.d.to_string()),
            ("alpha".into(), self.alpha.to_string()),
        ];
        match self.potential {
            Potential::Exp => lines.push(("potential".into(), "exp".into())),
            Potential::Power(k) => {
                lines.push(("potential".into(), "power".into()));
                lines.push(("k".into(), k.to_string()));
            }
        }
        let rest: Vec<(&str, String)> = vec![
            ("N", self.n_cut.to_string()),
            ("K", self.maxmode.to_string()),
            ("M", self.grid_m.to_string()),
            ("dt", self.dt.to_string()),
            ("T", self.t_final.to_string()),
            ("sigma", self.sigma.to_string()),
            ("s", self.s.to_string()),
            ("s1", self.s1.to_string()),
            ("beta", self.beta.to_string()),
            ("eps0", self.eps0.to_string()),
            ("r0", self.r0.to_string()),
            ("window_L", self.window_l.to_string()),
            ("dt_sup", self.dt_sup.to_string()),
            ("seed", self.seed.to_string()),
            ("samples", self.samples.to_string()),
            ("n_list", fmt_list(&self.n_list)),
            ("delta1", self.delta1.to_string()),
            ("delta2", self.delta2.to_string()),
            ("R_grid", fmt_list(&self.r_grid)),
            ("observables", self.observables.join(",")),
            ("output_dir", self.output_dir.display().to_string()),
            ("threads", self.threads.to_string()),
            ("kick", self.kick.to_string()),
            ("t_list", fmt_list(&self.t_list)),
            ("n_ref", self.n_ref.to_string()),
            ("statistic", self.statistic.to_string()),
            ("theta", self.theta.to_string()),
            ("amplitude", self.amplitude.to_string()),
            ("modes_per_n", self.modes_per_n.to_string()),
        ];
        lines.extend(rest.into_iter().map(|(k, v)| (k.to_string(), v)));
        lines
            .into_iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }
}
