//! Statistical and numerical experiments with self-describing reports.

mod convergence;
mod energy;
mod inflation;
mod invariance;
mod tail;

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::config::{ExperimentKind, SimConfig};
use crate::dynamics::{hamiltonian_h, PhasePoint};
use crate::error::{Error, Result};
use crate::gibbs::potential_f;
use crate::spectral::{save_fwf1, sobolev_norm, to_grid, LatticeMode};

pub use convergence::run_convergence;
pub use energy::{power_law_data, run_energy_bound, RESIDUAL_BOUND};
pub use inflation::{inflation_params, run_inflation};
pub use invariance::{run_invariance, MIN_ESS};
pub use tail::{auto_r_grid, run_tail, TailStatistic};

/// Non-finite numbers are stored as the strings `inf`, `-inf`, `nan`.
mod num {
    use super::*;

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        F(f64),
        S(String),
    }

    fn to_repr(x: f64) -> Repr {
        if x.is_finite() {
            Repr::F(x)
        } else if x.is_nan() {
            Repr::S("nan".into())
        } else if x > 0.0 {
            Repr::S("inf".into())
        } else {
            Repr::S("-inf".into())
        }
    }

    fn from_repr<E: serde::de::Error>(r: Repr) -> std::result::Result<f64, E> {
        match r {
            Repr::F(x) => Ok(x),
            Repr::S(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(E::custom(format!("bad number {other:?}"))),
            },
        }
    }

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        to_repr(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }

    pub mod vec {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[f64], s: S) -> std::result::Result<S::Ok, S::Error> {
            x.iter().map(|v| to_repr(*v)).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<f64>, D::Error> {
            Vec::<Repr>::deserialize(d)?.into_iter().map(from_repr).collect()
        }
    }

    pub mod rows {
        use super::*;

        pub fn serialize<S: Serializer>(x: &[Vec<f64>], s: S) -> std::result::Result<S::Ok, S::Error> {
            x.iter()
                .map(|r| r.iter().map(|v| to_repr(*v)).collect::<Vec<_>>())
                .collect::<Vec<_>>()
                .serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<Vec<Vec<f64>>, D::Error> {
            Vec::<Vec<Repr>>::deserialize(d)?
                .into_iter()
                .map(|r| r.into_iter().map(from_repr).collect())
                .collect()
        }
    }
}

/// Numeric table with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    #[serde(with = "num::rows")]
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.to_string(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        assert_eq!(row.len(), self.columns.len(), "row width of table {}", self.name);
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let j = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[j]).collect())
    }

    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(","));
            out.push('\n');
        }
        out
    }
}

/// Least-squares fit with named coefficients.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub name: String,
    pub terms: Vec<String>,
    #[serde(with = "num::vec")]
    pub coefficients: Vec<f64>,
    #[serde(with = "num")]
    pub r2: f64,
}

impl FitRecord {
    pub fn linear(name: &str, fit: &crate::stats::LinearFit) -> Self {
        FitRecord {
            name: name.to_string(),
            terms: vec!["slope".into(), "intercept".into()],
            coefficients: vec![fit.slope, fit.intercept],
            r2: fit.r2,
        }
    }

    pub fn get(&self, term: &str) -> Option<f64> {
        self.terms.iter().position(|t| t == term).map(|i| self.coefficients[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Comparison {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
    #[serde(rename = ">=")]
    Ge,
}

impl Comparison {
    pub fn holds(&self, value: f64, threshold: f64) -> bool {
        match self {
            Comparison::Lt => value < threshold,
            Comparison::Le => value <= threshold,
            Comparison::Gt => value > threshold,
            Comparison::Ge => value >= threshold,
        }
    }

    pub fn symbol(&self) -> &'static str {
        match self {
            Comparison::Lt => "<",
            Comparison::Le => "<=",
            Comparison::Gt => ">",
            Comparison::Ge => ">=",
        }
    }
}

/// Named check `value <cmp> threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verdict {
    pub name: String,
    #[serde(with = "num")]
    pub value: f64,
    pub comparison: Comparison,
    #[serde(with = "num")]
    pub threshold: f64,
    pub passed: bool,
}

impl Verdict {
    pub fn check(name: impl Into<String>, value: f64, comparison: Comparison, threshold: f64) -> Self {
        Verdict {
            name: name.into(),
            value,
            comparison,
            threshold,
            passed: comparison.holds(value, threshold),
        }
    }

    /// Re-evaluates the check from the stored value and threshold.
    pub fn recheck(&self) -> bool {
        self.comparison.holds(self.value, self.threshold)
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} {}: {} {} {}",
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.value,
            self.comparison.symbol(),
            self.threshold
        )
    }
}

/// A field written next to the report.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub name: String,
    pub point: PhasePoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    /// Full configuration text (reloads with [`crate::config::parse_config`]).
    pub config: String,
    pub seed: u64,
    pub tables: Vec<Table>,
    pub fits: Vec<FitRecord>,
    pub verdicts: Vec<Verdict>,
    pub notes: Vec<String>,
    pub wall_time_s: f64,
    #[serde(skip)]
    pub snapshots: Vec<Snapshot>,
}

impl ExperimentReport {
    pub fn new(name: &str, cfg: &SimConfig) -> Self {
        ExperimentReport {
            name: name.to_string(),
            config: cfg.to_config_text(),
            seed: cfg.seed,
            tables: Vec::new(),
            fits: Vec::new(),
            verdicts: Vec::new(),
            notes: Vec::new(),
            wall_time_s: 0.0,
            snapshots: Vec::new(),
        }
    }

    pub fn all_passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.passed)
    }

    pub fn verdict(&self, name: &str) -> Option<&Verdict> {
        self.verdicts.iter().find(|v| v.name == name)
    }

    pub fn table(&self, name: &str) -> Option<&Table> {
        self.tables.iter().find(|t| t.name == name)
    }

    pub fn fit(&self, name: &str) -> Option<&FitRecord> {
        self.fits.iter().find(|f| f.name == name)
    }

    pub fn push_verdict(&mut self, name: impl Into<String>, value: f64, cmp: Comparison, threshold: f64) {
        self.verdicts.push(Verdict::check(name, value, cmp, threshold));
    }

    /// JSON with the wall time zeroed, for reproducibility comparisons.
    pub fn canonical_json(&self) -> Result<String> {
        let mut copy = self.clone();
        copy.wall_time_s = 0.0;
        Ok(serde_json::to_string_pretty(&copy)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Writes `report.json`, one CSV per table, and FWF1 snapshots into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let json_path = dir.join("report.json");
        std::fs::write(&json_path, self.to_json()?).map_err(|e| Error::io(&json_path, e))?;
        for t in &self.tables {
            let p = dir.join(format!("{}.csv", t.name));
            std::fs::write(&p, t.to_csv()).map_err(|e| Error::io(&p, e))?;
        }
        for s in &self.snapshots {
            save_fwf1(&dir.join(format!("{}_u.fwf", s.name)), &s.point.u)?;
            save_fwf1(&dir.join(format!("{}_v.fwf", s.name)), &s.point.v)?;
        }
        Ok(())
    }
}

/// Deterministic scalar functions of a phase point.
#[derive(Debug, Clone, PartialEq)]
pub enum Observable {
    /// `||u||_{L^2}^2`.
    UL2Sq,
    /// `||v||_{L^2}^2`.
    VL2Sq,
    /// `||u||_{H^s}`.
    Sobolev(f64),
    /// `||u||_{L^infinity}` on the grid.
    Linf,
    /// `F_N(u)`.
    Potential,
    /// `H(u, v)`.
    Hamiltonian,
    /// Real part of the coefficient of mode `n`.
    Mode(Vec<i64>),
}

impl Observable {
    /// Parses `u_l2sq`, `v_l2sq`, `sobolev:<s>`, `linf`, `potential`,
    /// `hamiltonian`, `mode:<n1>[:<n2>]`.
    pub fn parse(name: &str, dim: usize) -> std::result::Result<Self, String> {
        let bad = || format!("unknown observable {name:?}");
        Ok(match name {
            "u_l2sq" => Observable::UL2Sq,
            "v_l2sq" => Observable::VL2Sq,
            "linf" => Observable::Linf,
            "potential" => Observable::Potential,
            "hamiltonian" => Observable::Hamiltonian,
            _ => {
                if let Some(rest) = name.strip_prefix("sobolev:") {
                    Observable::Sobolev(rest.parse().map_err(|_| bad())?)
                } else if let Some(rest) = name.strip_prefix("mode:") {
                    let n: Vec<i64> = rest
                        .split(':')
                        .map(|t| t.parse().map_err(|_| bad()))
                        .collect::<std::result::Result<_, _>>()?;
                    if n.len() != dim {
                        return Err(format!("observable {name:?} needs {dim} mode components"));
                    }
                    Observable::Mode(n)
                } else {
                    return Err(bad());
                }
            }
        })
    }

    pub fn name(&self) -> String {
        match self {
            Observable::UL2Sq => "u_l2sq".into(),
            Observable::VL2Sq => "v_l2sq".into(),
            Observable::Sobolev(s) => format!("sobolev:{s}"),
            Observable::Linf => "linf".into(),
            Observable::Potential => "potential".into(),
            Observable::Hamiltonian => "hamiltonian".into(),
            Observable::Mode(n) => format!(
                "mode:{}",
                n.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(":")
            ),
        }
    }

    /// Evaluates with the truncation `cfg.n_cut`, grid `cfg.grid_m` and potential of `cfg`.
    pub fn eval(&self, p: &PhasePoint, cfg: &SimConfig) -> Result<f64> {
        Ok(match self {
            Observable::UL2Sq => sobolev_norm(0.0, &p.u).powi(2),
            Observable::VL2Sq => sobolev_norm(0.0, &p.v).powi(2),
            Observable::Sobolev(s) => sobolev_norm(*s, &p.u),
            Observable::Linf => to_grid(&p.u, cfg.grid_m)?.max_abs(),
            Observable::Potential => potential_f(cfg.n_cut, &p.u, cfg.potential, cfg.grid_m)?,
            Observable::Hamiltonian => hamiltonian_h(p, cfg, cfg.grid_m)?,
            Observable::Mode(n) => p.u.coeff(&LatticeMode::new(n)).re,
        })
    }
}

impl FromStr for TailStatistic {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "y_norm" => Ok(TailStatistic::YNorm),
            "z_norm" => Ok(TailStatistic::ZNorm),
            "dtheta_linf" => Ok(TailStatistic::DthetaLinf),
            "highfreq" => Ok(TailStatistic::Highfreq),
            other => Err(format!(
                "unknown statistic {other:?} (y_norm, z_norm, dtheta_linf, highfreq)"
            )),
        }
    }
}

impl fmt::Display for TailStatistic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TailStatistic::YNorm => "y_norm",
            TailStatistic::ZNorm => "z_norm",
            TailStatistic::DthetaLinf => "dtheta_linf",
            TailStatistic::Highfreq => "highfreq",
        })
    }
}

/// Parses the configured observables.
pub fn observables(cfg: &SimConfig) -> Result<Vec<Observable>> {
    cfg.observables
        .iter()
        .map(|n| Observable::parse(n, cfg.d).map_err(Error::InvalidParameter))
        .collect()
}

/// Runs the experiment selected by `cfg.experiment`.
pub fn run(cfg: &SimConfig) -> Result<ExperimentReport> {
    let start = Instant::now();
    let mut report = match cfg.experiment {
        ExperimentKind::Invariance => run_invariance(cfg, cfg.samples, &cfg.t_list, &observables(cfg)?)?,
        ExperimentKind::Convergence => run_convergence(cfg, &cfg.n_list, cfg.n_ref, cfg.t_final, cfg.seed)?,
        ExperimentKind::Tail => run_tail(cfg, cfg.samples, &cfg.r_grid, cfg.statistic)?,
        ExperimentKind::Inflation => run_inflation(cfg, &inflation_params(cfg)?, None)?,
        ExperimentKind::Energy => {
            let k = cfg.k().ok_or_else(|| Error::InvalidParameter("energy runs need the power potential".into()))?;
            let _ = k;
            let data = power_law_data(cfg.d, cfg.maxmode, cfg.s, cfg.alpha);
            run_energy_bound(cfg, &data, cfg.t_final, cfg.samples)?
        }
    };
    report.wall_time_s = start.elapsed().as_secs_f64();
    Ok(report)
}
