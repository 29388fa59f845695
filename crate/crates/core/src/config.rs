//! Training configuration and its line-oriented `key = value` file format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    /// Directory of `<stem>_ir.pgm` / `<stem>_vi.pgm` pairs.
    pub dataset_dir: PathBuf,
    /// `"rule"` or a directory of precomputed `<stem>.pgm` teacher fusions.
    pub teacher: String,
    pub student_lr: f64,
    pub batch_size: usize,
    pub agent_lr: f64,
    pub pretrain_epochs: usize,
    pub train_epochs: usize,
    pub p: usize,
    pub steps_per_episode: usize,
    pub crop: usize,
    pub seed: u64,
    pub baseline_enabled: bool,
    pub log_path: PathBuf,
    /// Where checkpoints are written.
    pub out_dir: PathBuf,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dataset_dir: PathBuf::from("data"),
            teacher: "rule".into(),
            student_lr: 0.002,
            batch_size: 24,
            agent_lr: 0.01,
            pretrain_epochs: 20,
            train_epochs: 100,
            p: 4,
            steps_per_episode: 8,
            crop: 64,
            seed: 0,
            baseline_enabled: true,
            log_path: PathBuf::from("train_log.csv"),
            out_dir: PathBuf::from("runs"),
        }
    }
}

pub const CONFIG_KEYS: [&str; 14] = [
    "dataset_dir",
    "teacher",
    "student_lr",
    "batch_size",
    "agent_lr",
    "pretrain_epochs",
    "train_epochs",
    "p",
    "steps_per_episode",
    "crop",
    "seed",
    "baseline_enabled",
    "log_path",
    "out_dir",
];

fn parse_num<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("{key}: cannot parse {value:?}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("{key}: expected a boolean, got {value:?}"))),
    }
}

impl TrainConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "dataset_dir" => self.dataset_dir = PathBuf::from(value),
            "teacher" => self.teacher = value.to_string(),
            "student_lr" => self.student_lr = parse_num(key, value)?,
            "batch_size" => self.batch_size = parse_num(key, value)?,
            "agent_lr" => self.agent_lr = parse_num(key, value)?,
            "pretrain_epochs" => self.pretrain_epochs = parse_num(key, value)?,
            "train_epochs" => self.train_epochs = parse_num(key, value)?,
            "p" => self.p = parse_num(key, value)?,
            "steps_per_episode" => self.steps_per_episode = parse_num(key, value)?,
            "crop" => self.crop = parse_num(key, value)?,
            "seed" => self.seed = parse_num(key, value)?,
            "baseline_enabled" => self.baseline_enabled = parse_bool(key, value)?,
            "log_path" => self.log_path = PathBuf::from(value),
            "out_dir" => self.out_dir = PathBuf::from(value),
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`. `#` starts a comment.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", n + 1)))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut c = Self::default();
        c.apply_text(text)?;
        Ok(c)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.crop < 16 || !self.crop.is_multiple_of(16) {
            return Err(Error::Config(format!("crop must be a multiple of 16 (>= 16), got {}", self.crop)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if !(self.student_lr > 0.0 && self.agent_lr > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        Ok(())
    }

    /// Every key in [`CONFIG_KEYS`] order, one `key = value` per line.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        let values: [String; 14] = [
            self.dataset_dir.display().to_string(),
            self.teacher.clone(),
            self.student_lr.to_string(),
            self.batch_size.to_string(),
            self.agent_lr.to_string(),
            self.pretrain_epochs.to_string(),
            self.train_epochs.to_string(),
            self.p.to_string(),
            self.steps_per_episode.to_string(),
            self.crop.to_string(),
            self.seed.to_string(),
            self.baseline_enabled.to_string(),
            self.log_path.display().to_string(),
            self.out_dir.display().to_string(),
        ];
        for (k, v) in CONFIG_KEYS.iter().zip(values) {
            let _ = writeln!(s, "{k} = {v}");
        }
        s
    }
}
