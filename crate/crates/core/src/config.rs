//! `key = value` configuration files.
//!
//! Blank lines and lines starting with `#` are ignored. Unknown and repeated
//! keys are errors. Relative paths resolve against the config file's
//! directory.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::model::ModelConfig;

const MODEL_KEYS: [&str; 15] = [
    "d",
    "heads",
    "lstm_hidden",
    "visual_rows",
    "visual_dims",
    "dropout",
    "max_len",
    "learning_rate",
    "batch_size",
    "epochs",
    "seed",
    "use_self_attention",
    "use_cross_modal",
    "use_visual_gate",
    "text_only",
];

const RUN_KEYS: [&str; 7] = ["train", "val", "test", "features", "checkpoint", "metrics", "target_train_f1"];

/// Everything `train` needs: the model config plus file locations.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: PathBuf,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Directory of `<image id>.vfeat` files.
    pub features: PathBuf,
    pub checkpoint: PathBuf,
    pub metrics: Option<PathBuf>,
    /// Stop once train-set span F1 (percent) reaches this value.
    pub target_train_f1: Option<f64>,
}

impl RunConfig {
    /// Input files and the feature directory must exist.
    pub fn check_inputs(&self) -> Result<()> {
        let missing = |p: &Path| Error::Config(format!("{} does not exist", p.display()));
        for p in [Some(&self.train), self.val.as_ref(), self.test.as_ref()].into_iter().flatten() {
            if !p.is_file() {
                return Err(missing(p));
            }
        }
        if !self.features.is_dir() {
            return Err(Error::Config(format!(
                "feature directory {} does not exist",
                self.features.display()
            )));
        }
        Ok(())
    }
}

struct Entries {
    values: HashMap<String, (usize, String)>,
}

impl Entries {
    fn parse(text: &str, allowed: &[&str]) -> Result<Self> {
        let mut values = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let err = |message: String| Error::Parse { line: line_no, message };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
            let (key, value) = (key.trim(), value.trim());
            if !allowed.contains(&key) {
                return Err(err(format!("unknown key `{key}`")));
            }
            if value.is_empty() {
                return Err(err(format!("empty value for `{key}`")));
            }
            if values.insert(key.to_string(), (line_no, value.to_string())).is_some() {
                return Err(err(format!("`{key}` given twice")));
            }
        }
        Ok(Entries { values })
    }

    fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.values.get(key) {
            None => Ok(None),
            Some((line, v)) => v.parse().map(Some).map_err(|_| Error::Parse {
                line: *line,
                message: format!("invalid value `{v}` for `{key}`"),
            }),
        }
    }

    fn model(&self) -> Result<ModelConfig> {
        let mut c = ModelConfig::default();
        macro_rules! set {
            ($($field:ident),*) => {
                $(if let Some(v) = self.get(stringify!($field))? { c.$field = v; })*
            };
        }
        set!(
            d,
            heads,
            lstm_hidden,
            visual_rows,
            visual_dims,
            dropout,
            max_len,
            learning_rate,
            batch_size,
            epochs,
            seed,
            use_self_attention,
            use_cross_modal,
            use_visual_gate,
            text_only
        );
        Ok(c)
    }
}

/// Model config from text containing only model keys. Missing keys take
/// their defaults.
pub fn parse_model_config(text: &str) -> Result<ModelConfig> {
    let cfg = Entries::parse(text, &MODEL_KEYS)?.model()?;
    cfg.validate()?;
    Ok(cfg)
}

/// Full run config. `base` is the directory relative paths resolve against.
pub fn parse_run_config(text: &str, base: &Path) -> Result<RunConfig> {
    let allowed: Vec<&str> = MODEL_KEYS.iter().chain(&RUN_KEYS).copied().collect();
    let entries = Entries::parse(text, &allowed)?;
    let model = entries.model()?;
    let path = |key: &str| -> Result<Option<PathBuf>> {
        Ok(entries.get::<PathBuf>(key)?.map(|p| if p.is_absolute() { p } else { base.join(p) }))
    };
    let required = |key: &str| -> Result<PathBuf> {
        path(key)?.ok_or_else(|| Error::Config(format!("missing required key `{key}`")))
    };
    let target_train_f1 = entries.get::<f64>("target_train_f1")?;
    if let Some(t) = target_train_f1 {
        if !(0.0..=100.0).contains(&t) {
            return Err(Error::Config(format!("target_train_f1 {t} outside [0, 100]")));
        }
    }
    Ok(RunConfig {
        model,
        train: required("train")?,
        val: path("val")?,
        test: path("test")?,
        features: required("features")?,
        checkpoint: required("checkpoint")?,
        metrics: path("metrics")?,
        target_train_f1,
    })
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_run_config(&text, base).map_err(|e| e.in_file(path))
}

/// Render every model key, parseable by [`parse_model_config`].
pub fn model_config_text(c: &ModelConfig) -> String {
    let mut out = String::new();
    for (k, v) in model_config_pairs(c) {
        writeln!(out, "{k} = {v}").expect("string write");
    }
    out
}

pub fn model_config_pairs(c: &ModelConfig) -> Vec<(&'static str, String)> {
    vec![
        ("d", c.d.to_string()),
        ("heads", c.heads.to_string()),
        ("lstm_hidden", c.lstm_hidden.to_string()),
        ("visual_rows", c.visual_rows.to_string()),
        ("visual_dims", c.visual_dims.to_string()),
        ("dropout", c.dropout.to_string()),
        ("max_len", c.max_len.to_string()),
        ("learning_rate", c.learning_rate.to_string()),
        ("batch_size", c.batch_size.to_string()),
        ("epochs", c.epochs.to_string()),
        ("seed", c.seed.to_string()),
        ("use_self_attention", c.use_self_attention.to_string()),
        ("use_cross_modal", c.use_cross_modal.to_string()),
        ("use_visual_gate", c.use_visual_gate.to_string()),
        ("text_only", c.text_only.to_string()),
    ]
}
