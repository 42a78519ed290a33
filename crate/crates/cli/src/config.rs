//! Run configuration: a TOML file of flat tables, `--set` overrides and the
//! translation into toolkit objects.

use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use weakkam::hamiltonian::calibrate_alpha;
use weakkam::semigroup::{StepOptions, VelocitySearch};
use weakkam::{Execution, GridFn, HamiltonianModel, Kinetic, Potential, Torus1};

use crate::CliError;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub grid: GridConfig,
    pub scheme: SchemeConfig,
    pub initial: InitialConfig,
    pub run: RunSection,
    pub characteristics: CharacteristicsConfig,
    pub oracle: OracleConfig,
    pub output: OutputConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// `u + p^2/2 + V(x)`
    DiscountedMechanical,
    /// `lam u + K(p) + V(x)`
    Discounted,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PotentialKind {
    Zero,
    Cos,
    Sin,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    pub family: Family,
    pub lam: f64,
    pub kinetic: Kinetic,
    pub potential: PotentialKind,
    pub amplitude: f64,
    /// Solve with `H(x, u + alpha, p)` where `alpha` zeroes the critical value.
    pub calibrate: bool,
    pub calib_tol: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            family: Family::DiscountedMechanical,
            lam: 1.0,
            kinetic: Kinetic::Quadratic,
            potential: PotentialKind::Cos,
            amplitude: 1.0,
            calibrate: false,
            calib_tol: 1e-12,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub n: usize,
    pub period: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { n: 512, period: 1.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchKind {
    Exact,
    Sampled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SchemeConfig {
    pub dt: f64,
    pub picard_tol: f64,
    pub max_picard: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub v_bound: Option<f64>,
    pub search: SearchKind,
    pub v_count: usize,
}

impl Default for SchemeConfig {
    fn default() -> Self {
        SchemeConfig {
            dt: 1e-3,
            picard_tol: 1e-12,
            max_picard: 100,
            v_bound: None,
            search: SearchKind::Exact,
            v_count: 33,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialKind {
    Const,
    Sin,
    Cos,
    Bump,
    Csv,
}

/// `const`: `value`; `sin`/`cos`: `amplitude * sin(2 pi k x / period)`;
/// `bump`: periodized Gaussian of height `amplitude`; `csv`: nodal values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: InitialKind,
    pub value: f64,
    pub amplitude: f64,
    pub frequency: u32,
    pub center: f64,
    pub width: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl Default for InitialConfig {
    fn default() -> Self {
        InitialConfig {
            kind: InitialKind::Sin,
            value: 1.0,
            amplitude: 1.0,
            frequency: 1,
            center: 0.5,
            width: 0.1,
            path: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    /// Time between written slices of `evolve`; `0` keeps only the ends.
    pub snapshot_every: f64,
    pub check_every: usize,
    pub stat_tol: f64,
    pub t_max: f64,
    /// Seed of every sampled quantity (validation points).
    pub seed: u64,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            t_end: 1.0,
            snapshot_every: 0.0,
            check_every: 100,
            stat_tol: 1e-3,
            t_max: 50.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FanSource {
    /// One characteristic per node, started on the graph of `d phi`.
    Initial,
    /// Characteristics from `(x0, u0)` with momenta in `[p_min, p_max]`.
    Point,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CharacteristicsConfig {
    pub source: FanSource,
    pub x0: f64,
    pub u0: f64,
    pub p_min: f64,
    pub p_max: f64,
    pub p_count: usize,
    pub t_end: f64,
    pub dt: f64,
    /// Certify the fan and compare it with the semigroup at `t_end`.
    pub compare: bool,
}

impl Default for CharacteristicsConfig {
    fn default() -> Self {
        CharacteristicsConfig {
            source: FanSource::Initial,
            x0: 0.0,
            u0: 0.0,
            p_min: -1.0,
            p_max: 1.0,
            p_count: 21,
            t_end: 0.02,
            dt: 1e-3,
            compare: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleConfig {
    pub times: Vec<f64>,
    /// Fraction of the stability limit used by the finite-difference step.
    pub cfl: f64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        OracleConfig {
            times: vec![1.0, 10.0],
            cfl: 0.9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    pub formats: Vec<Format>,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            directory: PathBuf::from("out"),
            formats: vec![Format::Csv, Format::Json],
        }
    }
}

fn config_error(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

/// Parses the value of a `--set` override as TOML, falling back to a bare
/// string.
fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").expect("key present"),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

fn apply_override(table: &mut toml::Table, assignment: &str) -> Result<(), CliError> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| config_error(format!("override {assignment:?} is not key=value")))?;
    let path: Vec<&str> = key.trim().split('.').collect();
    if path.iter().any(|s| s.is_empty()) {
        return Err(config_error(format!("bad key {key:?}")));
    }
    let mut cur = table;
    for part in &path[..path.len() - 1] {
        let entry = cur
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        cur = entry
            .as_table_mut()
            .ok_or_else(|| config_error(format!("{part} in {key:?} is not a table")))?;
    }
    cur.insert(path[path.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    /// Reads `path` (TOML, or the `config` field of a JSON manifest) and
    /// applies the overrides in order. `lam <= 0` is only accepted when the
    /// model is merely being checked.
    pub fn load(path: Option<&Path>, overrides: &[String], check_only: bool) -> Result<RunConfig, CliError> {
        let mut table = match path {
            None => toml::Table::new(),
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                if p.extension().is_some_and(|e| e == "json") {
                    let manifest: serde_json::Value =
                        serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                    let cfg = manifest.get("config").cloned().unwrap_or(manifest);
                    let cfg: RunConfig =
                        serde_json::from_value(cfg).map_err(|e| config_error(format!("{}: {e}", p.display())))?;
                    match toml::Value::try_from(&cfg).map_err(|e| config_error(e.to_string()))? {
                        toml::Value::Table(t) => t,
                        _ => unreachable!("a struct serializes to a table"),
                    }
                } else {
                    text.parse::<toml::Table>()
                        .map_err(|e| config_error(format!("{}: {e}", p.display())))?
                }
            }
        };
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| config_error(e.message().to_string()))?;
        cfg.validate(check_only)?;
        Ok(cfg)
    }

    pub fn validate(&self, check_only: bool) -> Result<(), CliError> {
        let m = &self.model;
        let s = &self.scheme;
        if m.family == Family::DiscountedMechanical && (m.lam != 1.0 || m.kinetic != Kinetic::Quadratic) {
            return Err(config_error("discounted_mechanical fixes lam = 1 and kinetic = quadratic"));
        }
        if !m.lam.is_finite() || (!check_only && m.lam <= 0.0) {
            return Err(config_error("model.lam must be positive"));
        }
        if self.grid.n < 4 || !(self.grid.period > 0.0) {
            return Err(config_error("grid needs n >= 4 and a positive period"));
        }
        if !(s.dt > 0.0) || s.dt * m.lam.abs() > 0.5 {
            return Err(config_error(format!("need 0 < dt and dt * lam <= 0.5, got dt = {}", s.dt)));
        }
        if !(s.picard_tol > 0.0 && m.calib_tol > 0.0 && self.run.stat_tol > 0.0) {
            return Err(config_error("tolerances must be positive"));
        }
        if s.v_bound.is_some_and(|v| !(v > 0.0)) {
            return Err(config_error("scheme.v_bound must be positive"));
        }
        if s.search == SearchKind::Sampled && (s.v_count < 9 || s.v_count % 2 == 0) {
            return Err(config_error("scheme.v_count must be odd and >= 9"));
        }
        let r = &self.run;
        if !(r.t_end >= 0.0 && r.snapshot_every >= 0.0 && r.t_max > 0.0) || r.check_every == 0 {
            return Err(config_error("run times must be nonnegative and check_every positive"));
        }
        let i = &self.initial;
        if i.kind == InitialKind::Csv && i.path.is_none() {
            return Err(config_error("initial.kind = \"csv\" needs initial.path"));
        }
        if i.kind == InitialKind::Bump && !(i.width > 0.0) {
            return Err(config_error("initial.width must be positive"));
        }
        let c = &self.characteristics;
        if c.p_count == 0 || !(c.dt > 0.0) || !(c.t_end > 0.0) || c.p_min > c.p_max {
            return Err(config_error("characteristics need p_count >= 1, p_min <= p_max and positive dt, t_end"));
        }
        let o = &self.oracle;
        if o.times.is_empty() || o.times.iter().any(|t| !(*t > 0.0)) || o.times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(config_error("oracle.times must be positive and increasing"));
        }
        if !(o.cfl > 0.0 && o.cfl <= 1.0) {
            return Err(config_error("oracle.cfl must lie in (0, 1]"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Torus1, CliError> {
        Ok(Torus1::new(self.grid.n, self.grid.period)?)
    }

    /// The configured model, calibrated when requested.
    pub fn model(&self) -> Result<HamiltonianModel, CliError> {
        let m = &self.model;
        let period = self.grid.period;
        let potential = match m.potential {
            PotentialKind::Zero => Potential::Zero,
            PotentialKind::Cos => Potential::Cos {
                amplitude: m.amplitude,
                period,
            },
            PotentialKind::Sin => Potential::Sin {
                amplitude: m.amplitude,
                period,
            },
        };
        let mut h = match m.family {
            Family::DiscountedMechanical => HamiltonianModel::discounted_mechanical(potential),
            Family::Discounted => HamiltonianModel::discounted(m.lam, m.kinetic, potential),
        };
        if m.calibrate {
            calibrate_alpha(&mut h, &self.grid()?, m.calib_tol)?;
            h = h.calibrated();
        }
        Ok(h)
    }

    /// Closed-form initial data with its derivative, or `None` for CSV data.
    #[allow(clippy::type_complexity)]
    pub fn closed_form(&self) -> Option<(Box<dyn Fn(f64) -> f64>, Box<dyn Fn(f64) -> f64>)> {
        let i = self.initial.clone();
        let k = 2.0 * PI * f64::from(i.frequency) / self.grid.period;
        let period = self.grid.period;
        match i.kind {
            InitialKind::Const => Some((Box::new(move |_| i.value), Box::new(|_| 0.0))),
            InitialKind::Sin => Some((
                Box::new(move |x| i.amplitude * (k * x).sin()),
                Box::new(move |x| i.amplitude * k * (k * x).cos()),
            )),
            InitialKind::Cos => Some((
                Box::new(move |x| i.amplitude * (k * x).cos()),
                Box::new(move |x| -i.amplitude * k * (k * x).sin()),
            )),
            InitialKind::Bump => {
                let (c, w, a) = (i.center, i.width, i.amplitude);
                // nearest-image distance keeps the bump periodic
                let d = move |x: f64| (x - c + 0.5 * period).rem_euclid(period) - 0.5 * period;
                Some((
                    Box::new(move |x| a * (-0.5 * (d(x) / w).powi(2)).exp()),
                    Box::new(move |x| -a * d(x) / (w * w) * (-0.5 * (d(x) / w).powi(2)).exp()),
                ))
            }
            InitialKind::Csv => None,
        }
    }

    pub fn phi(&self) -> Result<GridFn, CliError> {
        let grid = self.grid()?;
        match self.closed_form() {
            Some((f, _)) => Ok(GridFn::from_fn(grid, f)?),
            None => {
                let path = self.initial.path.as_ref().expect("validated");
                let file = fs::File::open(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
                let phi = GridFn::read_csv(file, self.grid.period)?;
                if phi.grid().n() != self.grid.n {
                    return Err(config_error(format!(
                        "{} has {} values but grid.n = {}",
                        path.display(),
                        phi.grid().n(),
                        self.grid.n
                    )));
                }
                Ok(phi)
            }
        }
    }

    pub fn step_options(&self, execution: Execution) -> StepOptions {
        let s = &self.scheme;
        StepOptions {
            picard_tol: s.picard_tol,
            max_picard: s.max_picard,
            v_bound: s.v_bound,
            search: match s.search {
                SearchKind::Exact => VelocitySearch::Exact,
                SearchKind::Sampled => VelocitySearch::sampled(s.v_count),
            },
            execution,
            ..Default::default()
        }
    }

    pub fn wants(&self, f: Format) -> bool {
        self.output.formats.contains(&f)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn overrides_parse_toml_values() {
        let cfg = RunConfig::load(None, &["grid.n=64".into(), "model.potential=zero".into(), "oracle.times=[0.5, 2]".into()], false)
            .unwrap();
        assert_eq!(cfg.grid.n, 64);
        assert_eq!(cfg.model.potential, PotentialKind::Zero);
        assert_eq!(cfg.oracle.times, vec![0.5, 2.0]);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::load(None, &["grid.m=64".into()], false), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["extra.k=1".into()], false), Err(CliError::Config(_))));
        assert!(matches!(RunConfig::load(None, &["grid=1".into()], false), Err(CliError::Config(_))));
    }

    #[test]
    fn invariants_are_checked() {
        assert!(RunConfig::load(None, &["scheme.dt=0.6".into()], false).is_err());
        assert!(RunConfig::load(None, &["grid.n=3".into()], false).is_err());
        assert!(RunConfig::load(None, &["scheme.picard_tol=0".into()], false).is_err());
        assert!(RunConfig::load(None, &["model.lam=2".into()], false).is_err());
        let improper = ["model.family=discounted", "model.lam=-1"].map(String::from);
        assert!(RunConfig::load(None, &improper, false).is_err());
        assert!(RunConfig::load(None, &improper, true).is_ok());
        let ok = ["model.family=discounted", "model.lam=2", "model.kinetic=quartic", "scheme.dt=0.25"];
        assert!(RunConfig::load(None, &ok.map(String::from), false).is_ok());
    }

    #[test]
    fn bump_is_periodic() {
        let cfg = RunConfig::load(None, &["initial.kind=bump".into(), "initial.center=0.05".into()], false).unwrap();
        let (f, df) = cfg.closed_form().unwrap();
        assert!((f(0.05) - 1.0).abs() < 1e-15);
        assert!((f(0.95) - f(0.15)).abs() < 1e-12);
        let h = 1e-6;
        assert!((df(0.1) - (f(0.1 + h) - f(0.1 - h)) / (2.0 * h)).abs() < 1e-6);
    }
}
