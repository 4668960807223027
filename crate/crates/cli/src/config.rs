//! Config files, flag/file resolution, exit-code mapping, and the
//! resolved-config snapshot every command writes.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use grounded::embed::EmbedError;
use grounded::eval::EvalError;
use grounded::model::ModelError;
use grounded::train::TrainError;

/// Exit codes: 2 configuration, 3 data, 4 numeric divergence, 1 gradient
/// check failure.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Data(String),
    Diverged(String),
    GradcheckFailed { block: String, max_rel_err: f64 },
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration: {msg}"),
            CliError::Data(msg) => write!(f, "data: {msg}"),
            CliError::Diverged(msg) => write!(f, "training diverged: {msg}"),
            CliError::GradcheckFailed { block, max_rel_err } => write!(
                f,
                "gradient check failed: block '{block}' max relative error {max_rel_err:.3e}"
            ),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Diverged(_) => 4,
            CliError::GradcheckFailed { .. } => 1,
        }
    }
}

impl From<EmbedError> for CliError {
    fn from(e: EmbedError) -> Self {
        match e {
            EmbedError::DimMismatch { .. }
            | EmbedError::RankOutOfRange { .. }
            | EmbedError::RankDeficient { .. } => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::BadAlignSpec { .. }
            | ModelError::BadEncoderSpec { .. }
            | ModelError::HeadsMismatch { .. }
            | ModelError::DimMismatch { .. }
            | ModelError::NotSequenceLevel => CliError::Config(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::BadConfig { .. } => CliError::Config(e.to_string()),
            TrainError::Model(m) => m.into(),
            TrainError::Embed(em) => em.into(),
            TrainError::NonFiniteGrad { .. } => CliError::Diverged(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<EvalError> for CliError {
    fn from(e: EvalError) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Parsed `[section]` / `key = value` config file. `#` starts a comment.
#[derive(Debug, Default)]
pub struct ConfigFile {
    sections: BTreeMap<String, BTreeMap<String, String>>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let content = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut sections: BTreeMap<String, BTreeMap<String, String>> = BTreeMap::new();
        let mut current = String::new();
        for (lineno, raw) in content.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                current = name.trim().to_string();
                sections.entry(current.clone()).or_default();
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(CliError::Config(format!(
                    "{}:{}: expected 'key = value'",
                    path.display(),
                    lineno + 1
                )));
            };
            if current.is_empty() {
                return Err(CliError::Config(format!(
                    "{}:{}: key outside a [section]",
                    path.display(),
                    lineno + 1
                )));
            }
            sections
                .get_mut(&current)
                .expect("section exists")
                .insert(key.trim().to_string(), value.trim().to_string());
        }
        Ok(Self { sections })
    }

    fn section(&self, name: &str) -> BTreeMap<String, String> {
        self.sections.get(name).cloned().unwrap_or_default()
    }
}

/// Shared command context: global flags plus the loaded config file.
pub struct Context {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub file: ConfigFile,
}

impl Context {
    pub fn resolver(&self, section: &str) -> Resolver {
        Resolver {
            section: section.to_string(),
            values: self.file.section(section),
            used: BTreeSet::new(),
            resolved: BTreeMap::new(),
        }
    }

    pub fn ensure_out_dir(&self) -> Result<(), CliError> {
        fs::create_dir_all(&self.out_dir)
            .map_err(|e| CliError::Data(format!("{}: {e}", self.out_dir.display())))
    }
}

/// Resolves one command's settings with flag > file > default precedence,
/// records every resolved value for the snapshot, and rejects unknown keys.
pub struct Resolver {
    section: String,
    values: BTreeMap<String, String>,
    used: BTreeSet<String>,
    resolved: BTreeMap<String, String>,
}

impl Resolver {
    fn file_value<T: FromStr>(&mut self, key: &str) -> Result<Option<T>, CliError> {
        self.used.insert(key.to_string());
        match self.values.get(key) {
            None => Ok(None),
            Some(raw) => raw.parse::<T>().map(Some).map_err(|_| {
                CliError::Config(format!("[{}] {key}: cannot parse '{raw}'", self.section))
            }),
        }
    }

    /// flag > file > default. The key counts as understood even when the
    /// flag wins, so a config file carrying it is not rejected.
    pub fn value<T>(&mut self, key: &str, flag: Option<T>, default: T) -> Result<T, CliError>
    where
        T: FromStr + ToString,
    {
        let from_file = self.file_value::<T>(key)?;
        let v = flag.or(from_file).unwrap_or(default);
        self.resolved.insert(key.to_string(), v.to_string());
        Ok(v)
    }

    /// flag > file, no default; may stay unset.
    pub fn optional<T>(&mut self, key: &str, flag: Option<T>) -> Result<Option<T>, CliError>
    where
        T: FromStr + ToString,
    {
        let from_file = self.file_value::<T>(key)?;
        let v = flag.or(from_file);
        if let Some(v) = &v {
            self.resolved.insert(key.to_string(), v.to_string());
        }
        Ok(v)
    }

    /// flag > file, required.
    pub fn required<T>(&mut self, key: &str, flag: Option<T>) -> Result<T, CliError>
    where
        T: FromStr + ToString,
    {
        self.optional(key, flag)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing required setting '{key}' (flag or [{}])",
                self.section
            ))
        })
    }

    pub fn optional_path(
        &mut self,
        key: &str,
        flag: Option<PathBuf>,
    ) -> Result<Option<PathBuf>, CliError> {
        let from_file = self.file_value::<String>(key)?.map(PathBuf::from);
        let v = flag.or(from_file);
        if let Some(v) = &v {
            self.resolved
                .insert(key.to_string(), v.display().to_string());
        }
        Ok(v)
    }

    pub fn required_path(&mut self, key: &str, flag: Option<PathBuf>) -> Result<PathBuf, CliError> {
        self.optional_path(key, flag)?.ok_or_else(|| {
            CliError::Config(format!(
                "missing required setting '{key}' (flag or [{}])",
                self.section
            ))
        })
    }

    pub fn flag_only(&mut self, key: &str, value: impl ToString) {
        self.resolved.insert(key.to_string(), value.to_string());
    }

    /// Fails on config-file keys this command does not understand, then
    /// writes the resolved snapshot.
    pub fn finish(self, out_path: &Path) -> Result<(), CliError> {
        for key in self.values.keys() {
            if !self.used.contains(key) {
                return Err(CliError::Config(format!(
                    "[{}] unknown key '{key}'",
                    self.section
                )));
            }
        }
        let mut out = String::new();
        out.push_str(&format!("[{}]\n", self.section));
        for (k, v) in &self.resolved {
            out.push_str(&format!("{k} = {v}\n"));
        }
        fs::write(out_path, out).map_err(|e| CliError::Data(format!("{}: {e}", out_path.display())))
    }
}

/// True for paths that exist; used to turn missing inputs into data errors
/// that name the path before any heavier work starts.
pub fn require_file(path: &Path) -> Result<(), CliError> {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Data(format!(
            "input file not found: {}",
            path.display()
        )))
    }
}
