//! Instance configuration files (TOML).
//!
//! A config holds exactly one instance table, `[hspace]` or `[flat]`, plus
//! optional `[sampling]`, `[tolerances]`, `[linearity]`, `[geodesic]` and
//! `[test_hooks]` tables. Parse errors carry the line and column reported by
//! the TOML parser; validation errors name the dotted field and the line it
//! was written on.

use std::fmt;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::GeometryError;
use crate::hspace2211::{HSpaceParams, HSpaceSpec, Point6};
use crate::metrics::ConstantMetric;
use crate::verify::{DEFAULT_TOL, FD_TOL};

pub const DEFAULT_SAMPLE_COUNT: usize = 100;
pub const DEFAULT_DRIFT_TOL: f64 = 1e-6;
pub const DEFAULT_GEODESIC_REL_TOL: f64 = 1e-10;
/// Random linear combinations draw a₁, a₂ uniformly from this interval.
pub const RANDOM_COEFFICIENT_RANGE: [f64; 2] = [-5.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InstanceConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hspace: Option<HSpaceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flat: Option<FlatSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sampling: Option<Sampling>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tolerances: Option<Tolerances>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearity: Option<LinearitySpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub geodesic: Option<GeodesicSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test_hooks: Option<TestHooks>,
}

/// Constant diagonal metric in six dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlatSpec {
    pub diagonal: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sampling {
    /// One `[lo, hi]` per coordinate.
    pub ranges: Vec<[f64; 2]>,
    #[serde(default = "default_count")]
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_count() -> usize {
    DEFAULT_SAMPLE_COUNT
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eisenhart: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eisenhart_fd: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub killing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub linearity: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curvature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub drift: Option<f64>,
}

/// Tolerances with defaults filled in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTolerances {
    pub eisenhart: f64,
    pub eisenhart_fd: f64,
    pub killing: f64,
    pub linearity: f64,
    pub curvature: f64,
    pub drift: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearitySpec {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub combinations: Vec<[f64; 2]>,
    /// Additional (a₁, a₂) pairs drawn from the sampling seed.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub random: usize,
}

fn is_zero(n: &usize) -> bool {
    *n == 0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeodesicSpec {
    pub x0: Vec<f64>,
    pub v0: Vec<f64>,
    pub t_end: f64,
    #[serde(default = "default_geodesic_tol")]
    pub rel_tol: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_step: Option<f64>,
}

fn default_geodesic_tol() -> f64 {
    DEFAULT_GEODESIC_REL_TOL
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TestHooks {
    /// Multiplies h₂₂ by this factor in the Eisenhart check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub perturb_h22: Option<f64>,
}

/// The geometric object a config describes.
#[derive(Debug, Clone, PartialEq)]
pub enum Instance {
    HSpace(HSpaceParams),
    Flat(ConstantMetric),
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{}", fmt_located(*line, *column, message))]
    Parse {
        line: Option<usize>,
        column: Option<usize>,
        message: String,
    },
    #[error("{}{field}: {message}", line.map(|l| format!("line {l}: ")).unwrap_or_default())]
    Invalid {
        field: String,
        line: Option<usize>,
        message: String,
    },
}

fn fmt_located(line: Option<usize>, column: Option<usize>, message: &str) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!("line {l}, column {c}: {message}"),
        (Some(l), None) => format!("line {l}: {message}"),
        _ => message.to_string(),
    }
}

impl ConfigError {
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Invalid { field, .. } => Some(field),
            _ => None,
        }
    }

    pub fn line(&self) -> Option<usize> {
        match self {
            ConfigError::Parse { line, .. } | ConfigError::Invalid { line, .. } => *line,
            ConfigError::Io { .. } => None,
        }
    }
}

/// A parsed and validated config.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: InstanceConfig,
    pub instance: Instance,
}

impl fmt::Display for InstanceConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let text = toml::to_string(self).map_err(|_| fmt::Error)?;
        f.write_str(&text)
    }
}

/// 1-based (line, column) of a byte offset.
fn line_col(source: &str, offset: usize) -> (usize, usize) {
    let before = &source[..offset.min(source.len())];
    let line = before.matches('\n').count() + 1;
    let column = before
        .rfind('\n')
        .map_or(before.len(), |p| before.len() - p - 1)
        + 1;
    (line, column)
}

/// Line of `key` inside `[table]`, or of the table header when the key is
/// absent (defaulted).
fn locate(source: &str, table: &str, key: Option<&str>) -> Option<usize> {
    let mut current = String::new();
    let mut header = None;
    for (idx, raw) in source.lines().enumerate() {
        let line = raw.trim();
        let header_name = line
            .strip_prefix('[')
            .and_then(|l| l.split(']').next())
            .map(str::trim)
            .filter(|n| {
                !n.is_empty()
                    && n.chars()
                        .all(|c| c.is_alphanumeric() || matches!(c, '_' | '-' | '.'))
            });
        if let Some(name) = header_name {
            current = name.to_string();
            if current == table {
                header = Some(idx + 1);
            }
            continue;
        }
        if current != table {
            continue;
        }
        if let Some(key) = key {
            if let Some(rest) = line.strip_prefix(key) {
                if rest.trim_start().starts_with('=') {
                    return Some(idx + 1);
                }
            }
        }
    }
    header
}

impl InstanceConfig {
    pub fn load(path: &Path) -> Result<LoadedConfig, ConfigError> {
        let source = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::parse(&source)
    }

    pub fn parse(source: &str) -> Result<LoadedConfig, ConfigError> {
        let config: InstanceConfig = toml::from_str(source).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let (l, c) = line_col(source, span.start);
                    (Some(l), Some(c))
                }
                None => (None, None),
            };
            ConfigError::Parse {
                line,
                column,
                message: e.message().trim().to_string(),
            }
        })?;
        let instance = config.validate(Some(source))?;
        Ok(LoadedConfig { config, instance })
    }

    pub fn to_toml(&self) -> String {
        self.to_string()
    }

    /// Checks every field; `source` (the original text) is used to attach
    /// line numbers to errors.
    pub fn validate(&self, source: Option<&str>) -> Result<Instance, ConfigError> {
        let err = |table: &str, key: Option<&str>, message: String| {
            let field = match key {
                Some(k) => format!("{table}.{k}"),
                None => table.to_string(),
            };
            ConfigError::Invalid {
                line: source.and_then(|s| locate(s, table, key)),
                field,
                message,
            }
        };
        let finite = |table: &str, key: &str, values: &[f64]| {
            if values.iter().all(|v| v.is_finite()) {
                Ok(())
            } else {
                Err(err(table, Some(key), "values must be finite".into()))
            }
        };

        let instance = match (&self.hspace, &self.flat) {
            (Some(spec), None) => Instance::HSpace(spec.clone().build().map_err(|e| match e {
                GeometryError::InvalidField { field, message } => {
                    err("hspace", Some(field), message)
                }
                other => err("hspace", None, other.to_string()),
            })?),
            (None, Some(flat)) => {
                if flat.diagonal.len() != 6 {
                    return Err(err(
                        "flat",
                        Some("diagonal"),
                        format!("expected 6 entries, got {}", flat.diagonal.len()),
                    ));
                }
                finite("flat", "diagonal", &flat.diagonal)?;
                if flat.diagonal.contains(&0.0) {
                    return Err(err(
                        "flat",
                        Some("diagonal"),
                        "entries must be nonzero".into(),
                    ));
                }
                Instance::Flat(ConstantMetric::diagonal(&flat.diagonal))
            }
            (Some(_), Some(_)) => {
                return Err(err(
                    "flat",
                    None,
                    "give either [hspace] or [flat], not both".into(),
                ))
            }
            (None, None) => {
                return Err(ConfigError::Invalid {
                    field: "hspace".into(),
                    line: None,
                    message: "missing instance table: add [hspace] or [flat]".into(),
                })
            }
        };

        if let Some(s) = &self.sampling {
            if s.ranges.len() != 6 {
                return Err(err(
                    "sampling",
                    Some("ranges"),
                    format!("expected 6 [lo, hi] pairs, got {}", s.ranges.len()),
                ));
            }
            for (i, [lo, hi]) in s.ranges.iter().enumerate() {
                if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                    return Err(err(
                        "sampling",
                        Some("ranges"),
                        format!("range {} = [{lo}, {hi}] must be finite with lo < hi", i + 1),
                    ));
                }
            }
            if s.count == 0 {
                return Err(err("sampling", Some("count"), "must be positive".into()));
            }
        }

        if let Some(t) = &self.tolerances {
            for (key, value) in [
                ("eisenhart", t.eisenhart),
                ("eisenhart_fd", t.eisenhart_fd),
                ("killing", t.killing),
                ("linearity", t.linearity),
                ("curvature", t.curvature),
                ("drift", t.drift),
            ] {
                if let Some(v) = value {
                    if !(v.is_finite() && v > 0.0) {
                        return Err(err(
                            "tolerances",
                            Some(key),
                            format!("must be positive and finite, got {v}"),
                        ));
                    }
                }
            }
        }

        if let Some(l) = &self.linearity {
            for pair in &l.combinations {
                finite("linearity", "combinations", pair)?;
            }
            if l.random > 0 && self.sampling.is_none() {
                return Err(err(
                    "linearity",
                    Some("random"),
                    "random combinations need the [sampling] seed".into(),
                ));
            }
            if !matches!(instance, Instance::HSpace(_)) {
                return Err(err(
                    "linearity",
                    None,
                    "only applies to an [hspace] instance".into(),
                ));
            }
        }

        if let Some(g) = &self.geodesic {
            for (key, v) in [("x0", &g.x0), ("v0", &g.v0)] {
                if v.len() != 6 {
                    return Err(err(
                        "geodesic",
                        Some(key),
                        format!("expected 6 entries, got {}", v.len()),
                    ));
                }
                finite("geodesic", key, v)?;
            }
            finite("geodesic", "t_end", &[g.t_end])?;
            if !(1e-13..=1e-3).contains(&g.rel_tol) {
                return Err(err(
                    "geodesic",
                    Some("rel_tol"),
                    format!("must lie in [1e-13, 1e-3], got {:e}", g.rel_tol),
                ));
            }
            if let Some(h) = g.max_step {
                if !(h.is_finite() && h > 0.0) {
                    return Err(err(
                        "geodesic",
                        Some("max_step"),
                        "must be positive and finite".into(),
                    ));
                }
            }
        }

        if let Some(hooks) = &self.test_hooks {
            if let Some(f) = hooks.perturb_h22 {
                finite("test_hooks", "perturb_h22", &[f])?;
                if !matches!(instance, Instance::HSpace(_)) {
                    return Err(err(
                        "test_hooks",
                        Some("perturb_h22"),
                        "only applies to an [hspace] instance".into(),
                    ));
                }
            }
        }
        Ok(instance)
    }

    pub fn tolerances(&self) -> ResolvedTolerances {
        let t = self.tolerances.clone().unwrap_or_default();
        ResolvedTolerances {
            eisenhart: t.eisenhart.unwrap_or(DEFAULT_TOL),
            eisenhart_fd: t.eisenhart_fd.unwrap_or(FD_TOL),
            killing: t.killing.unwrap_or(DEFAULT_TOL),
            linearity: t.linearity.unwrap_or(DEFAULT_TOL),
            curvature: t.curvature.unwrap_or(DEFAULT_TOL),
            drift: t.drift.unwrap_or(DEFAULT_DRIFT_TOL),
        }
    }

    /// Seeded uniform sample over the configured ranges.
    pub fn sample_points(&self) -> Result<Vec<Point6>, ConfigError> {
        let s = self.sampling.as_ref().ok_or_else(|| ConfigError::Invalid {
            field: "sampling".into(),
            line: None,
            message: "this command needs a [sampling] table".into(),
        })?;
        Ok(sample_box(&s.ranges, s.count, s.seed))
    }

    /// Configured combinations followed by the random ones.
    pub fn linearity_combinations(&self) -> Vec<[f64; 2]> {
        let Some(spec) = &self.linearity else {
            return Vec::new();
        };
        let mut out = spec.combinations.clone();
        if spec.random > 0 {
            let seed = self.sampling.as_ref().map_or(0, |s| s.seed);
            // separate stream from the point sample
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let [lo, hi] = RANDOM_COEFFICIENT_RANGE;
            out.extend(
                (0..spec.random).map(|_| [rng.random_range(lo..hi), rng.random_range(lo..hi)]),
            );
        }
        out
    }
}

/// `count` points drawn uniformly (coordinate by coordinate) from the box.
pub fn sample_box(ranges: &[[f64; 2]], count: usize, seed: u64) -> Vec<Point6> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let mut x = [0.0; 6];
            for (c, [lo, hi]) in x.iter_mut().zip(ranges) {
                *c = rng.random_range(*lo..*hi);
            }
            Point6::new(x).expect("finite ranges give finite points")
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    const R1: &str = r#"
[hspace]
epsilon = 1
epsilon_tilde = 1
a = 0.0
c = 0.0
e2 = 1
e4 = 1
e5 = 1
e6 = 1
theta = { type = "constant", value = 0.0 }
omega = { type = "constant", value = 0.0 }
f5 = { type = "linear", k = 1.0, b = 0.0 }
f6 = { type = "linear", k = 2.0, b = 0.0 }

[sampling]
ranges = [[0.5, 1.5], [1.5, 2.5], [0.5, 1.5], [4.5, 5.5], [-1.5, -0.5], [-2.5, -1.5]]
count = 10
seed = 3

[linearity]
combinations = [[1.0, 2.0]]
random = 2

[geodesic]
x0 = [1.0, 2.0, 1.0, 5.0, -1.0, -2.0]
v0 = [0.1, 0.0, 0.0, 0.0, 0.0, 0.0]
t_end = 1.0
"#;

    #[test]
    fn parses_r1_and_round_trips() {
        let loaded = InstanceConfig::parse(R1).unwrap();
        assert!(matches!(loaded.instance, Instance::HSpace(_)));
        let again = InstanceConfig::parse(&loaded.config.to_toml()).unwrap();
        assert_eq!(again.config, loaded.config);
        assert_eq!(
            loaded.config.geodesic.as_ref().unwrap().rel_tol,
            DEFAULT_GEODESIC_REL_TOL
        );
    }

    #[test]
    fn zero_a_with_vanishing_epsilon_tilde_is_located() {
        let src = R1.replace("epsilon_tilde = 1", "epsilon_tilde = 0");
        let e = InstanceConfig::parse(&src).unwrap_err();
        assert_eq!(e.field(), Some("hspace.a"));
        assert_eq!(e.line(), Some(5));
        assert!(e.to_string().contains("nonzero when epsilon_tilde = 0"));
    }

    #[test]
    fn syntax_errors_carry_line_and_column() {
        let src = R1.replace("count = 10", "count = = 10");
        match InstanceConfig::parse(&src).unwrap_err() {
            ConfigError::Parse { line, column, .. } => {
                assert_eq!(line, Some(18));
                assert!(column.is_some());
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let src = R1.replace("seed = 3", "seed = 3\nsed = 4");
        let e = InstanceConfig::parse(&src).unwrap_err();
        assert!(e.to_string().contains("sed"), "{e}");
        assert_eq!(e.line(), Some(20));
    }

    #[test]
    fn bad_function_parameters_name_the_function() {
        let src = R1.replace(
            "f5 = { type = \"linear\", k = 1.0, b = 0.0 }",
            "f5 = { type = \"polynomial\", coeffs = [] }",
        );
        let e = InstanceConfig::parse(&src).unwrap_err();
        assert_eq!(e.field(), Some("hspace.f5"));
        assert_eq!(e.line(), Some(13));
    }

    #[test]
    fn wrong_lengths_and_ranges() {
        let e = InstanceConfig::parse(&R1.replace("[0.5, 1.5], [1.5, 2.5],", "[0.5, 1.5],"))
            .unwrap_err();
        assert_eq!(e.field(), Some("sampling.ranges"));
        let e = InstanceConfig::parse(&R1.replace("t_end = 1.0", "t_end = 1.0\nrel_tol = 0.1"))
            .unwrap_err();
        assert_eq!(e.field(), Some("geodesic.rel_tol"));
    }

    #[test]
    fn instance_table_is_required_and_exclusive() {
        let e = InstanceConfig::parse("[sampling]\nranges = []\n").unwrap_err();
        assert_eq!(e.field(), Some("hspace"));
        let both = format!("{R1}\n[flat]\ndiagonal = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0]\n");
        assert!(InstanceConfig::parse(&both).is_err());
    }

    #[test]
    fn flat_config() {
        let loaded =
            InstanceConfig::parse("[flat]\ndiagonal = [1.0, 1.0, -1.0, -1.0, -1.0, -1.0]\n")
                .unwrap();
        assert!(matches!(loaded.instance, Instance::Flat(_)));
        let e = InstanceConfig::parse("[flat]\ndiagonal = [1.0, 0.0, -1.0, -1.0, -1.0, -1.0]\n")
            .unwrap_err();
        assert_eq!(e.field(), Some("flat.diagonal"));
        assert_eq!(e.line(), Some(2));
    }

    #[test]
    fn sampling_is_seeded_and_in_range() {
        let cfg = InstanceConfig::parse(R1).unwrap().config;
        let a = cfg.sample_points().unwrap();
        let b = cfg.sample_points().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.len(), 10);
        let ranges = &cfg.sampling.as_ref().unwrap().ranges;
        for p in &a {
            for (x, [lo, hi]) in p.coords().iter().zip(ranges) {
                assert!(lo <= x && x < hi);
            }
        }
        let combos = cfg.linearity_combinations();
        assert_eq!(combos.len(), 3);
        assert_eq!(combos[0], [1.0, 2.0]);
        assert_eq!(combos, cfg.linearity_combinations());
    }
}
