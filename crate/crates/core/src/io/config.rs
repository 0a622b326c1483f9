//! Run configuration from a flat TOML document.
//!
//! Keys are dotted names such as `model.n` or `output.report`; nested
//! tables are flattened, so `[model]\nn = 5` and `model.n = 5` are the same.
//! Unknown keys are rejected with the closest known key as a hint.
//!
//! ```toml
//! model.kind = "vsm"
//! model.n = 5
//! model.alpha = 0.5
//! T = 1.0
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use nalgebra::DMatrix;
use toml::Value;

use crate::ensemble::{DeltaMode, EnsembleConfig, EpsilonMode, StrategyConfig};
use crate::error::{Error, Result};
use crate::io::plot::PlotKind;
use crate::io::report::ReportFormat;
use crate::model::ModelSpec;

pub const DEFAULT_DT: f64 = 1e-3;
pub const DEFAULT_N_PATHS: usize = 1000;
pub const DEFAULT_PILOT_PATHS: usize = 200;
pub const DEFAULT_SEED: u64 = 0;
pub const DEFAULT_WINDOW: usize = 20;
pub const DEFAULT_STUDY_C: f64 = 0.1;
pub const DEFAULT_STUDY_PATHS: usize = 50;

pub const KNOWN_KEYS: &[&str] = &[
    "model.kind",
    "model.n",
    "model.alpha",
    "model.gamma",
    "model.xi",
    "model.initial_caps",
    "model.weight_floor",
    "model.max_substep_variance",
    "model.max_halvings",
    "T",
    "dt",
    "n_paths",
    "pilot_paths",
    "seed",
    "epsilon",
    "epsilon_safety",
    "delta",
    "delta_margin",
    "delta_margin_pos",
    "zero_tol",
    "c_offset",
    "tol_as",
    "tolerance_master",
    "level_tol",
    "diversity_delta",
    "zero_floor_threshold",
    "study.c",
    "study.paths",
    "study.dts",
    "backtest.input",
    "backtest.covariance",
    "backtest.window",
    "output.report",
    "output.format",
    "output.plot",
    "output.plot_kind",
    "output.export_caps",
    "output.export_covariance",
];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BacktestConfig {
    pub input: Option<PathBuf>,
    /// Companion per-step covariance file; when absent covariances are
    /// estimated from the caps.
    pub covariance: Option<PathBuf>,
    pub window: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// `None` writes to stdout.
    pub report: Option<PathBuf>,
    pub format: ReportFormat,
    pub plot: Option<PathBuf>,
    pub plot_kind: PlotKind,
    pub export_caps: Option<PathBuf>,
    pub export_covariance: Option<PathBuf>,
}

/// Residual and step-size study settings.
#[derive(Debug, Clone, PartialEq)]
pub struct StudyConfig {
    pub c: f64,
    pub paths: usize,
    pub dts: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelSpec,
    pub horizon: f64,
    pub dt: f64,
    pub n_paths: usize,
    pub pilot_paths: usize,
    pub master_seed: u64,
    pub strategy: StrategyConfig,
    pub study: StudyConfig,
    pub backtest: BacktestConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn ensemble_config(&self) -> EnsembleConfig {
        EnsembleConfig {
            horizon: self.horizon,
            dt: self.dt,
            n_paths: self.n_paths,
            pilot_paths: self.pilot_paths,
            master_seed: self.master_seed,
            strategy: self.strategy.clone(),
        }
    }
}

/// Flattened key/value view of a configuration document.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RawConfig {
    entries: BTreeMap<String, Value>,
}

fn flatten(prefix: &str, table: toml::Table, out: &mut BTreeMap<String, Value>) {
    for (k, v) in table {
        let key = if prefix.is_empty() { k } else { format!("{prefix}.{k}") };
        match v {
            Value::Table(t) => flatten(&key, t, out),
            other => {
                out.insert(key, other);
            }
        }
    }
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = text
            .parse()
            .map_err(|e: toml::de::Error| Error::config("<document>", e.message().to_string()))?;
        let mut entries = BTreeMap::new();
        flatten("", table, &mut entries);
        Ok(RawConfig { entries })
    }

    /// Applies a `key=value` override. The value is read as a TOML value,
    /// falling back to a bare string.
    pub fn set(&mut self, assignment: &str) -> Result<()> {
        let (key, value) = assignment
            .split_once('=')
            .ok_or_else(|| Error::config(assignment, "override must look like key=value"))?;
        let key = key.trim();
        let value = value.trim();
        let parsed = format!("v = {value}")
            .parse::<toml::Table>()
            .ok()
            .and_then(|mut t| t.remove("v"))
            .unwrap_or_else(|| Value::String(value.to_string()));
        self.entries.insert(key.to_string(), parsed);
        Ok(())
    }

    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }
}

fn suggest(key: &str) -> Option<String> {
    KNOWN_KEYS
        .iter()
        .map(|k| (strsim::damerau_levenshtein(key, k), *k))
        .filter(|(d, _)| *d <= 3)
        .min()
        .map(|(_, k)| k.to_string())
}

struct Reader<'a> {
    raw: &'a RawConfig,
}

fn type_error(key: &str, want: &str, got: &Value) -> Error {
    Error::config(key, format!("expected {want}, got {}", got.type_str()))
}

impl Reader<'_> {
    fn get(&self, key: &str) -> Option<&Value> {
        self.raw.entries.get(key)
    }

    fn f64_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Float(x)) => Ok(Some(*x)),
            Some(Value::Integer(i)) => Ok(Some(*i as f64)),
            Some(v) => Err(type_error(key, "a number", v)),
        }
    }

    fn positive_opt(&self, key: &str) -> Result<Option<f64>> {
        match self.f64_opt(key)? {
            Some(x) if !(x > 0.0) || !x.is_finite() => Err(Error::config(key, format!("must be positive, got {x}"))),
            other => Ok(other),
        }
    }

    fn usize_opt(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Integer(i)) if *i >= 0 => Ok(Some(*i as usize)),
            Some(Value::Integer(i)) => Err(Error::config(key, format!("must be nonnegative, got {i}"))),
            Some(v) => Err(type_error(key, "an integer", v)),
        }
    }

    fn string_opt(&self, key: &str) -> Result<Option<String>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::String(s)) => Ok(Some(s.clone())),
            Some(v) => Err(type_error(key, "a string", v)),
        }
    }

    fn path_opt(&self, key: &str) -> Result<Option<PathBuf>> {
        Ok(self.string_opt(key)?.map(PathBuf::from))
    }

    fn vec_opt(&self, key: &str) -> Result<Option<Vec<f64>>> {
        match self.get(key) {
            None => Ok(None),
            Some(Value::Array(a)) => a
                .iter()
                .map(|v| match v {
                    Value::Float(x) => Ok(*x),
                    Value::Integer(i) => Ok(*i as f64),
                    other => Err(type_error(key, "an array of numbers", other)),
                })
                .collect::<Result<Vec<_>>>()
                .map(Some),
            Some(v) => Err(type_error(key, "an array of numbers", v)),
        }
    }

    fn matrix_opt(&self, key: &str) -> Result<Option<DMatrix<f64>>> {
        let rows = match self.get(key) {
            None => return Ok(None),
            Some(Value::Array(a)) => a,
            Some(v) => return Err(type_error(key, "an array of rows", v)),
        };
        let mut data = Vec::new();
        let mut width = None;
        for row in rows {
            let Value::Array(r) = row else {
                return Err(type_error(key, "an array of rows", row));
            };
            if *width.get_or_insert(r.len()) != r.len() {
                return Err(Error::config(key, "rows have different lengths"));
            }
            for v in r {
                data.push(match v {
                    Value::Float(x) => *x,
                    Value::Integer(i) => *i as f64,
                    other => return Err(type_error(key, "numbers", other)),
                });
            }
        }
        let ncols = width.unwrap_or(0);
        Ok(Some(DMatrix::from_row_slice(rows.len(), ncols, &data)))
    }

    fn required<T>(&self, key: &str, v: Option<T>) -> Result<T> {
        v.ok_or_else(|| Error::config(key, "missing required key"))
    }
}

fn model_error(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidModel(m) | Error::InvalidParameter(m) => Error::config(key, m),
        other => other,
    }
}

fn parse_model(r: &Reader) -> Result<ModelSpec> {
    let kind = r.required("model.kind", r.string_opt("model.kind")?)?;
    let n = r.required("model.n", r.usize_opt("model.n")?)?;
    if n < 2 {
        return Err(Error::config("model.n", format!("need at least 2 stocks, got {n}")));
    }
    let caps = r.vec_opt("model.initial_caps")?.unwrap_or_else(|| vec![1.0; n]);
    if caps.len() != n {
        return Err(Error::config(
            "model.initial_caps",
            format!("has {} entries but model.n = {n}", caps.len()),
        ));
    }
    let mut spec = match kind.as_str() {
        "vsm" => {
            for key in ["model.gamma", "model.xi"] {
                if r.get(key).is_some() {
                    return Err(Error::config(key, "not used by model.kind = \"vsm\""));
                }
            }
            let alpha = r.required("model.alpha", r.f64_opt("model.alpha")?)?;
            ModelSpec::volatility_stabilized(alpha, caps).map_err(model_error("model.alpha"))?
        }
        "constant" => {
            if r.get("model.alpha").is_some() {
                return Err(Error::config("model.alpha", "not used by model.kind = \"constant\""));
            }
            let gamma = r.required("model.gamma", r.vec_opt("model.gamma")?)?;
            let xi = r.required("model.xi", r.matrix_opt("model.xi")?)?;
            if gamma.len() != n || xi.nrows() != n {
                return Err(Error::config(
                    "model.xi",
                    format!("model.gamma and model.xi must have model.n = {n} rows"),
                ));
            }
            ModelSpec::constant(gamma, xi, caps).map_err(model_error("model.xi"))?
        }
        other => {
            return Err(Error::config(
                "model.kind",
                format!("unknown model kind `{other}` (expected \"vsm\" or \"constant\")"),
            ))
        }
    };
    if let Some(f) = r.f64_opt("model.weight_floor")? {
        spec.weight_floor = f;
    }
    if let Some(v) = r.positive_opt("model.max_substep_variance")? {
        spec.max_substep_variance = v;
    }
    if let Some(h) = r.usize_opt("model.max_halvings")? {
        spec.max_halvings = u32::try_from(h).map_err(|_| Error::config("model.max_halvings", "too large"))?;
    }
    spec.validate().map_err(model_error("model.weight_floor"))?;
    Ok(spec)
}

fn parse_strategy(r: &Reader) -> Result<StrategyConfig> {
    let epsilon = match r.get("epsilon") {
        None => EpsilonMode::Measured,
        Some(Value::String(m)) if m == "measured" => EpsilonMode::Measured,
        Some(_) => EpsilonMode::Supplied(r.positive_opt("epsilon")?.expect("key is present")),
    };
    let delta = match r.get("delta") {
        None => DeltaMode::Auto,
        Some(Value::String(m)) if m == "auto" => DeltaMode::Auto,
        Some(_) => DeltaMode::Supplied(r.positive_opt("delta")?.expect("key is present")),
    };
    let mut s = StrategyConfig {
        epsilon,
        delta,
        ..StrategyConfig::default()
    };
    if let Some(v) = r.positive_opt("epsilon_safety")? {
        s.epsilon_safety = v;
    }
    if let Some(v) = r.positive_opt("delta_margin")? {
        if v >= 1.0 {
            return Err(Error::config("delta_margin", "must be below 1"));
        }
        s.delta_cfg.margin = v;
    }
    s.delta_cfg.margin_pos = r.positive_opt("delta_margin_pos")?;
    if let Some(v) = r.positive_opt("zero_tol")? {
        s.delta_cfg.zero_tol = v;
    }
    s.c_offset = r.f64_opt("c_offset")?;
    if let Some(c) = s.c_offset {
        if !(c >= 0.0) {
            return Err(Error::config("c_offset", format!("must be nonnegative, got {c}")));
        }
    }
    s.tol_as = r.positive_opt("tol_as")?;
    s.tolerance_master = r.positive_opt("tolerance_master")?;
    if let Some(v) = r.positive_opt("level_tol")? {
        s.level_tol = v;
    }
    if let Some(v) = r.positive_opt("diversity_delta")? {
        s.diversity_delta = v;
    }
    if let Some(v) = r.positive_opt("zero_floor_threshold")? {
        s.zero_floor_threshold = v;
    }
    Ok(s)
}

/// Validates a flattened document and applies defaults.
pub fn build_config(raw: &RawConfig) -> Result<RunConfig> {
    for key in raw.keys() {
        if !KNOWN_KEYS.contains(&key) {
            return Err(Error::UnknownKey {
                key: key.to_string(),
                suggestion: suggest(key),
            });
        }
    }
    let r = Reader { raw };
    let model = parse_model(&r)?;
    let horizon = r.required("T", r.positive_opt("T")?)?;
    let dt = r.positive_opt("dt")?.unwrap_or(DEFAULT_DT);
    if dt >= horizon {
        return Err(Error::config("dt", format!("dt = {dt} must be below T = {horizon}")));
    }
    let n_paths = r.usize_opt("n_paths")?.unwrap_or(DEFAULT_N_PATHS);
    if n_paths == 0 {
        return Err(Error::config("n_paths", "must be at least 1"));
    }
    let pilot_paths = r.usize_opt("pilot_paths")?.unwrap_or(DEFAULT_PILOT_PATHS);
    if pilot_paths == 0 {
        return Err(Error::config("pilot_paths", "must be at least 1"));
    }
    let master_seed = r.usize_opt("seed")?.map(|s| s as u64).unwrap_or(DEFAULT_SEED);

    let study = StudyConfig {
        c: r.f64_opt("study.c")?.unwrap_or(DEFAULT_STUDY_C),
        paths: r.usize_opt("study.paths")?.unwrap_or(DEFAULT_STUDY_PATHS),
        dts: r.vec_opt("study.dts")?.unwrap_or_else(|| vec![4.0 * dt, dt, dt / 4.0]),
    };
    if !(study.c >= 0.0) {
        return Err(Error::config("study.c", "must be nonnegative"));
    }
    if study.paths == 0 {
        return Err(Error::config("study.paths", "must be at least 1"));
    }

    let backtest = BacktestConfig {
        input: r.path_opt("backtest.input")?,
        covariance: r.path_opt("backtest.covariance")?,
        window: r.usize_opt("backtest.window")?.unwrap_or(DEFAULT_WINDOW),
    };
    if backtest.window == 0 {
        return Err(Error::config("backtest.window", "must be at least 1"));
    }

    let output = OutputConfig {
        report: r.path_opt("output.report")?,
        format: match r.string_opt("output.format")? {
            None => ReportFormat::Json,
            Some(f) => f.parse().map_err(|e: Error| Error::config("output.format", e.to_string()))?,
        },
        plot: r.path_opt("output.plot")?,
        plot_kind: match r.string_opt("output.plot_kind")? {
            None => PlotKind::EntropyCurves,
            Some(k) => k.parse().map_err(|e: Error| Error::config("output.plot_kind", e.to_string()))?,
        },
        export_caps: r.path_opt("output.export_caps")?,
        export_covariance: r.path_opt("output.export_covariance")?,
    };

    Ok(RunConfig {
        model,
        horizon,
        dt,
        n_paths,
        pilot_paths,
        master_seed,
        strategy: parse_strategy(&r)?,
        study,
        backtest,
        output,
    })
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    build_config(&RawConfig::parse(text)?)
}

/// Parses an optional document and applies `key=value` overrides in order.
pub fn parse_config_with_overrides(text: Option<&str>, overrides: &[String]) -> Result<RunConfig> {
    let mut raw = match text {
        Some(t) => RawConfig::parse(t)?,
        None => RawConfig::default(),
    };
    for o in overrides {
        raw.set(o)?;
    }
    build_config(&raw)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelKind;

    const MINIMAL: &str = "model.kind = \"vsm\"\nmodel.n = 5\nmodel.alpha = 0.5\nT = 1\n";

    #[test]
    fn minimal_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.dt, 1e-3);
        assert_eq!(c.n_paths, 1000);
        assert_eq!(c.pilot_paths, 200);
        assert_eq!(c.model.n, 5);
        assert_eq!(c.model.initial_caps, vec![1.0; 5]);
        assert!(matches!(c.model.kind, ModelKind::VolatilityStabilized { alpha } if alpha == 0.5));
        assert_eq!(c.strategy.epsilon, EpsilonMode::Measured);
        assert_eq!(c.strategy.delta, DeltaMode::Auto);
        assert_eq!(c.study.dts, vec![4e-3, 1e-3, 2.5e-4]);
    }

    #[test]
    fn nested_tables_flatten() {
        let c = parse_config("T = 1\n[model]\nkind = \"vsm\"\nn = 3\nalpha = 1.0\n").unwrap();
        assert_eq!(c.model.n, 3);
    }

    #[test]
    fn dt_not_below_horizon() {
        let e = parse_config(&format!("{MINIMAL}dt = 1.0\n")).unwrap_err();
        assert!(e.to_string().contains("dt"), "{e}");
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn typo_suggests_key() {
        let e = parse_config(&format!("{MINIMAL}modle.n = 5\n")).unwrap_err();
        match &e {
            Error::UnknownKey { key, suggestion } => {
                assert_eq!(key, "modle.n");
                assert_eq!(suggestion.as_deref(), Some("model.n"));
            }
            other => panic!("{other}"),
        }
        assert!(e.to_string().contains("model.n"));
    }

    #[test]
    fn missing_required() {
        for (drop, key) in [("model.kind", "model.kind"), ("model.n", "model.n"), ("T =", "T")] {
            let text: String = MINIMAL.lines().filter(|l| !l.starts_with(drop)).map(|l| format!("{l}\n")).collect();
            let e = parse_config(&text).unwrap_err();
            assert!(matches!(&e, Error::Config { key: k, .. } if k == key), "{e}");
        }
    }

    #[test]
    fn type_mismatch_names_key() {
        let e = parse_config("model.kind = \"vsm\"\nmodel.n = \"five\"\nmodel.alpha = 0.5\nT = 1\n").unwrap_err();
        assert!(matches!(&e, Error::Config { key, .. } if key == "model.n"), "{e}");
    }

    #[test]
    fn overrides_apply_in_order() {
        let c = parse_config_with_overrides(
            Some(MINIMAL),
            &["n_paths=10".into(), "epsilon=1.5".into(), "delta=auto".into(), "n_paths=12".into()],
        )
        .unwrap();
        assert_eq!(c.n_paths, 12);
        assert_eq!(c.strategy.epsilon, EpsilonMode::Supplied(1.5));
        assert_eq!(c.strategy.delta, DeltaMode::Auto);
        let c = parse_config_with_overrides(Some(MINIMAL), &["output.report=out/r.json".into()]).unwrap();
        assert_eq!(c.output.report, Some(PathBuf::from("out/r.json")));
        assert!(parse_config_with_overrides(Some(MINIMAL), &["n_paths".into()]).is_err());
    }

    #[test]
    fn constant_model() {
        let c = parse_config(
            "model.kind = \"constant\"\nmodel.n = 2\nmodel.gamma = [0.1, 0.0]\nmodel.xi = [[0.2, 0.0], [0.0, 0.3]]\nT = 1\n",
        )
        .unwrap();
        assert_eq!(c.model.d, 2);
        let e = parse_config("model.kind = \"constant\"\nmodel.n = 3\nmodel.gamma = [0.1, 0.0]\nmodel.xi = [[0.2, 0.0], [0.0, 0.3]]\nT = 1\n")
            .unwrap_err();
        assert_eq!(e.exit_code(), 2);
    }

    #[test]
    fn rejects_bad_values() {
        for extra in ["n_paths = 0", "epsilon = -1.0", "tol_as = 0.0", "model.kind = \"gbm\"", "output.format = \"xml\""] {
            let text = format!("{}{extra}\n", MINIMAL.replace("model.kind = \"vsm\"\n", if extra.starts_with("model.kind") { "" } else { "model.kind = \"vsm\"\n" }));
            assert!(parse_config(&text).is_err(), "{extra}");
        }
    }
}
