//! Run configuration: a TOML file plus `--set key=value` overrides.
//!
//! Every problem is collected before anything runs, so one invocation
//! reports all of them.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use gspace_core::train::{OptimizerKind, TrainConfig};
use gspace_core::{Architecture, LossSpec};
use toml::{Table, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitKind {
    /// He-normal with every skeleton weight set to 1.
    Skeleton,
    He,
}

impl FromStr for InitKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "skeleton" => Ok(Self::Skeleton),
            "he" => Ok(Self::He),
            other => Err(format!("unknown init `{other}` (expected skeleton or he)")),
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Skeleton => "skeleton",
            Self::He => "he",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlobsConfig {
    pub n_per_class: usize,
    pub test_per_class: usize,
    pub dim: usize,
    pub classes: usize,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IdxConfig {
    pub train_images: PathBuf,
    pub train_labels: PathBuf,
    pub test: Option<(PathBuf, PathBuf)>,
    /// Pooling factor; 1 keeps the images as they are.
    pub downsample: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Blobs(BlobsConfig),
    Idx(IdxConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompareConfig {
    pub sgd_lr: f64,
    pub gsgd_lr: f64,
    pub scale: f64,
    pub trajectory_steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyConfig {
    pub max_paths: usize,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub arch: Architecture,
    pub train: TrainConfig,
    pub init: InitKind,
    /// Uniform positive scaling applied to the initial weights.
    pub init_scale: f64,
    pub data: DataSource,
    pub out_dir: PathBuf,
    pub compare: CompareConfig,
    pub verify: VerifyConfig,
}

/// Every problem found while reading a configuration.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigErrors(pub Vec<String>);

impl fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "invalid configuration ({} problem(s)):", self.0.len())?;
        for e in &self.0 {
            writeln!(f, "  - {e}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

/// Parses the right-hand side of `--set key=value`. Anything that is not a
/// TOML value is taken as a bare string.
fn parse_override_value(raw: &str) -> Value {
    format!("v = {raw}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

pub fn apply_override(table: &mut Table, assignment: &str) -> Result<(), String> {
    let (key, raw) = assignment
        .split_once('=')
        .ok_or_else(|| format!("override `{assignment}` is not key=value"))?;
    set_value(table, key.trim(), parse_override_value(raw.trim()))
}

/// Stores `value` under a dotted key, creating sections as needed.
pub fn set_value(table: &mut Table, key: &str, value: Value) -> Result<(), String> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(format!("override key `{key}` is malformed"));
    }
    let mut node = table;
    for (i, part) in parts[..parts.len() - 1].iter().enumerate() {
        let entry = node
            .entry(part.to_string())
            .or_insert_with(|| Value::Table(Table::new()));
        node = match entry {
            Value::Table(t) => t,
            _ => {
                return Err(format!(
                    "override `{key}`: `{}` is not a section",
                    parts[..=i].join(".")
                ))
            }
        };
    }
    node.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

/// Reads typed fields out of one table, recording problems instead of
/// stopping at the first.
struct Section<'a, 'e> {
    table: &'a Table,
    name: &'a str,
    errors: &'e mut Vec<String>,
}

impl<'a, 'e> Section<'a, 'e> {
    fn new(table: &'a Table, name: &'a str, allowed: &[&str], errors: &'e mut Vec<String>) -> Self {
        for key in table.keys() {
            if !allowed.contains(&key.as_str()) {
                errors.push(format!("unknown key `{}`", Self::join(name, key)));
            }
        }
        Self {
            table,
            name,
            errors,
        }
    }

    fn join(name: &str, key: &str) -> String {
        if name.is_empty() {
            key.to_string()
        } else {
            format!("{name}.{key}")
        }
    }

    fn path(&self, key: &str) -> String {
        Self::join(self.name, key)
    }

    fn error(&mut self, msg: String) {
        self.errors.push(msg);
    }

    fn float(&mut self, key: &str, default: f64) -> f64 {
        match self.table.get(key) {
            None => default,
            Some(Value::Float(x)) => *x,
            Some(Value::Integer(i)) => *i as f64,
            Some(other) => {
                let msg = format!("`{}` must be a number, got {other}", self.path(key));
                self.error(msg);
                default
            }
        }
    }

    /// Defaults are taken as given; only explicit values are checked.
    fn positive(&mut self, key: &str, default: f64) -> f64 {
        if !self.table.contains_key(key) {
            return default;
        }
        let x = self.float(key, default);
        if !(x > 0.0) || !x.is_finite() {
            let msg = format!("`{}` must be positive, got {x}", self.path(key));
            self.error(msg);
        }
        x
    }

    fn integer(&mut self, key: &str, default: u64) -> u64 {
        match self.table.get(key) {
            None => default,
            Some(Value::Integer(i)) if *i >= 0 => *i as u64,
            Some(other) => {
                let msg = format!(
                    "`{}` must be a nonnegative integer, got {other}",
                    self.path(key)
                );
                self.error(msg);
                default
            }
        }
    }

    fn count(&mut self, key: &str, default: usize, min: usize) -> usize {
        let n = self.integer(key, default as u64) as usize;
        if n < min {
            let msg = format!("`{}` must be at least {min}, got {n}", self.path(key));
            self.error(msg);
        }
        n
    }

    fn string(&mut self, key: &str) -> Option<&'a str> {
        match self.table.get(key) {
            None => None,
            Some(Value::String(s)) => Some(s),
            Some(other) => {
                let msg = format!("`{}` must be a string, got {other}", self.path(key));
                self.error(msg);
                None
            }
        }
    }

    fn parsed<T: FromStr>(&mut self, key: &str, default: T) -> T
    where
        T::Err: fmt::Display,
    {
        match self.string(key) {
            None => default,
            Some(s) => s.parse().unwrap_or_else(|e| {
                let msg = format!("`{}`: {e}", self.path(key));
                self.error(msg);
                default
            }),
        }
    }

    fn table(&mut self, key: &str) -> Option<&'a Table> {
        match self.table.get(key) {
            None => None,
            Some(Value::Table(t)) => Some(t),
            Some(other) => {
                let msg = format!("`{}` must be a section, got {other}", self.path(key));
                self.error(msg);
                None
            }
        }
    }
}

fn parse_arch(value: Option<&Value>, errors: &mut Vec<String>) -> Option<Architecture> {
    let result = match value {
        None => Architecture::parse("49,8,8,10").map_err(|e| e.to_string()),
        Some(Value::String(s)) => Architecture::parse(s).map_err(|e| e.to_string()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| match v {
                Value::Integer(i) if *i > 0 => Ok(*i as usize),
                other => Err(format!("width {other} is not a positive integer")),
            })
            .collect::<Result<Vec<_>, _>>()
            .and_then(|w| Architecture::new(w).map_err(|e| e.to_string())),
        Some(other) => Err(format!(
            "must be a string like \"49,8,8,10\" or an array, got {other}"
        )),
    };
    result.map_err(|e| errors.push(format!("`arch`: {e}"))).ok()
}

fn parse_schedule(value: Option<&Value>, errors: &mut Vec<String>) -> Vec<(usize, f64)> {
    let Some(value) = value else {
        return Vec::new();
    };
    let bad = |errors: &mut Vec<String>| {
        errors.push("`lr_schedule` must be an array of [epoch, multiplier] pairs".to_string());
        Vec::new()
    };
    let Value::Array(items) = value else {
        return bad(errors);
    };
    let mut out = Vec::new();
    for item in items {
        match item.as_array().map(Vec::as_slice) {
            Some([Value::Integer(e), m]) if *e >= 1 => {
                let m = match m {
                    Value::Float(x) => *x,
                    Value::Integer(i) => *i as f64,
                    _ => return bad(errors),
                };
                if !(m > 0.0) || !m.is_finite() {
                    errors.push(format!("`lr_schedule` multiplier {m} must be positive"));
                }
                out.push((*e as usize, m));
            }
            _ => return bad(errors),
        }
    }
    out
}

fn parse_data(
    root: &mut Section<'_, '_>,
    arch: Option<&Architecture>,
    errors: &mut Vec<String>,
) -> Option<DataSource> {
    let table = root.table("data").cloned().unwrap_or_default();
    let mut data = Section::new(
        &table,
        "data",
        &["source", "downsample", "blobs", "idx"],
        errors,
    );
    let source = data.string("source").unwrap_or("blobs").to_string();
    let downsample = data.count("downsample", 4, 1);
    let blobs = data.table("blobs").cloned().unwrap_or_default();
    let idx = data.table("idx").cloned();
    match source.as_str() {
        "blobs" => {
            let mut b = Section::new(
                &blobs,
                "data.blobs",
                &["n_per_class", "test_per_class", "dim", "classes", "spread"],
                errors,
            );
            let default_dim = arch.map_or(49, Architecture::input_dim);
            let default_classes = arch.map_or(10, Architecture::output_dim);
            let cfg = BlobsConfig {
                n_per_class: b.count("n_per_class", 100, 1),
                test_per_class: b.count("test_per_class", 50, 0),
                dim: b.count("dim", default_dim, 1),
                classes: b.count("classes", default_classes, 2),
                spread: b.float("spread", 0.5),
            };
            if !(cfg.spread >= 0.0) || !cfg.spread.is_finite() {
                errors.push(format!(
                    "`data.blobs.spread` must be nonnegative, got {}",
                    cfg.spread
                ));
            }
            if let Some(a) = arch {
                if cfg.dim != a.input_dim() {
                    errors.push(format!(
                        "`data.blobs.dim` is {} but {a} takes {} inputs",
                        cfg.dim,
                        a.input_dim()
                    ));
                }
                if cfg.classes > a.output_dim() {
                    errors.push(format!(
                        "`data.blobs.classes` is {} but {a} has {} outputs",
                        cfg.classes,
                        a.output_dim()
                    ));
                }
            }
            Some(DataSource::Blobs(cfg))
        }
        "idx" => {
            let Some(idx) = idx else {
                errors.push("`data.source = \"idx\"` needs a [data.idx] section".to_string());
                return None;
            };
            let mut s = Section::new(
                &idx,
                "data.idx",
                &["train_images", "train_labels", "test_images", "test_labels"],
                errors,
            );
            let file = |s: &mut Section<'_, '_>, key: &str, required: bool| -> Option<PathBuf> {
                let path = s.string(key).map(PathBuf::from);
                match &path {
                    None if required => s.error(format!("`data.idx.{key}` is required")),
                    Some(p) if !p.is_file() => {
                        s.error(format!("`data.idx.{key}`: no such file {}", p.display()))
                    }
                    _ => {}
                }
                path
            };
            let train_images = file(&mut s, "train_images", true);
            let train_labels = file(&mut s, "train_labels", true);
            let test_images = file(&mut s, "test_images", false);
            let test_labels = file(&mut s, "test_labels", false);
            let test = match (test_images, test_labels) {
                (Some(i), Some(l)) => Some((i, l)),
                (None, None) => None,
                _ => {
                    s.error(
                        "`data.idx.test_images` and `data.idx.test_labels` go together".to_string(),
                    );
                    None
                }
            };
            Some(DataSource::Idx(IdxConfig {
                train_images: train_images?,
                train_labels: train_labels?,
                test,
                downsample,
            }))
        }
        other => {
            errors.push(format!(
                "`data.source` must be \"blobs\" or \"idx\", got \"{other}\""
            ));
            None
        }
    }
}

const TOP_KEYS: &[&str] = &[
    "arch",
    "optimizer",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "loss",
    "lr_schedule",
    "init",
    "init_scale",
    "data",
    "output",
    "compare",
    "verify",
];

impl RunConfig {
    pub fn from_table(table: &Table) -> Result<Self, ConfigErrors> {
        let mut errors = Vec::new();
        let arch = parse_arch(table.get("arch"), &mut errors);
        let lr_schedule = parse_schedule(table.get("lr_schedule"), &mut errors);

        let mut root_errors = Vec::new();
        let mut root = Section::new(table, "", TOP_KEYS, &mut root_errors);
        let optimizer = root.parsed("optimizer", OptimizerKind::Gsgd);
        let learning_rate = root.positive("learning_rate", 0.01);
        let batch_size = root.count("batch_size", 64, 1);
        let epochs = root.count("epochs", 20, 0);
        let seed = root.integer("seed", 0);
        let loss = root.parsed("loss", LossSpec::SoftmaxCrossEntropy);
        let init = root.parsed("init", InitKind::Skeleton);
        let init_scale = root.positive("init_scale", 1.0);

        let mut data_errors = Vec::new();
        let data = parse_data(&mut root, arch.as_ref(), &mut data_errors);

        let output = root.table("output").cloned().unwrap_or_default();
        let compare = root.table("compare").cloned().unwrap_or_default();
        let verify = root.table("verify").cloned().unwrap_or_default();

        let mut sub_errors = Vec::new();
        let mut out = Section::new(&output, "output", &["dir"], &mut sub_errors);
        let out_dir = PathBuf::from(out.string("dir").unwrap_or("runs"));

        let mut c = Section::new(
            &compare,
            "compare",
            &["sgd_lr", "gsgd_lr", "scale", "trajectory_steps"],
            &mut sub_errors,
        );
        let compare = CompareConfig {
            sgd_lr: c.positive("sgd_lr", learning_rate),
            gsgd_lr: c.positive("gsgd_lr", learning_rate),
            scale: c.positive("scale", 100.0),
            trajectory_steps: c.count("trajectory_steps", 10, 1),
        };

        let mut v = Section::new(
            &verify,
            "verify",
            &["max_paths", "samples"],
            &mut sub_errors,
        );
        let verify = VerifyConfig {
            max_paths: v.count("max_paths", gspace_core::paths::DEFAULT_ENUMERATION_CAP, 1),
            samples: v.count("samples", 100, 1),
        };

        errors.extend(root_errors);
        errors.extend(data_errors);
        errors.extend(sub_errors);
        let train = TrainConfig {
            optimizer,
            learning_rate,
            batch_size,
            epochs,
            seed,
            loss,
            lr_schedule,
        };
        match (arch, data) {
            (Some(arch), Some(data)) if errors.is_empty() => Ok(Self {
                arch,
                train,
                init,
                init_scale,
                data,
                out_dir,
                compare,
                verify,
            }),
            _ => Err(ConfigErrors(errors)),
        }
    }

    /// Reads `path` (if any), applies `--set` overrides in order, then the
    /// typed `extra` values, then validates.
    pub fn load(
        path: Option<&Path>,
        overrides: &[String],
        extra: &[(&str, Value)],
    ) -> Result<Self, ConfigErrors> {
        let mut table = match path {
            None => Table::new(),
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| ConfigErrors(vec![format!("cannot read {}: {e}", p.display())]))?;
                text.parse::<Table>()
                    .map_err(|e| ConfigErrors(vec![format!("{}: {e}", p.display())]))?
            }
        };
        let mut errors: Vec<String> = overrides
            .iter()
            .filter_map(|o| apply_override(&mut table, o).err())
            .collect();
        for (key, value) in extra {
            if let Err(e) = set_value(&mut table, key, value.clone()) {
                errors.push(e);
            }
        }
        if !errors.is_empty() {
            return Err(ConfigErrors(errors));
        }
        Self::from_table(&table)
    }
}
