//! Run configuration: flat `key=value` files plus command-line overrides.

use std::path::{Path, PathBuf};
use std::time::Duration;

use asqp::rl::{Preset, TrainConfig};
use asqp::scoring::DEFAULT_FRAME;
use asqp::{Error, Exec, Result};

pub const DEFAULT_REPETITIONS: usize = 5;
pub const DEFAULT_TRAIN_FRACTION: f64 = 0.7;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetChoice {
    Default,
    Light,
    /// Training keys only, no preset overrides.
    Custom,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub data: Option<PathBuf>,
    pub workload: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub set: Option<PathBuf>,
    pub out: PathBuf,
    pub k: usize,
    pub frame: usize,
    pub seed: u64,
    pub preset: PresetChoice,
    /// Adaptive budget; picks the preset at train time.
    pub time_budget: Option<Duration>,
    pub repetitions: usize,
    pub train_fraction: f64,
    /// Wall-clock cap for the search baselines.
    pub cap: Option<Duration>,
    pub train: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        let train = TrainConfig::default();
        RunConfig {
            data: None,
            workload: None,
            checkpoint: None,
            set: None,
            out: PathBuf::from("out"),
            k: train.k,
            frame: DEFAULT_FRAME,
            seed: train.seed,
            preset: PresetChoice::Default,
            time_budget: None,
            repetitions: DEFAULT_REPETITIONS,
            train_fraction: DEFAULT_TRAIN_FRACTION,
            cap: None,
            train,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {v:?} for {key}")))
}

fn secs(key: &str, v: &str) -> Result<Option<Duration>> {
    match v.trim() {
        "none" | "" => Ok(None),
        s => {
            let x: f64 = parse(key, s)?;
            if !(x.is_finite() && x >= 0.0) {
                return Err(Error::Config(format!(
                    "{key} must be a non-negative number of seconds"
                )));
            }
            Ok(Some(Duration::from_secs_f64(x)))
        }
    }
}

impl RunConfig {
    /// Sets one key. Run keys are handled here; `k`, `frame` and `seed` are
    /// mirrored into the training config; anything else goes to it.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let key = key.trim();
        let v = value.trim();
        match key {
            "data" => self.data = Some(v.into()),
            "workload" => self.workload = Some(v.into()),
            "checkpoint" => self.checkpoint = Some(v.into()),
            "set" => self.set = Some(v.into()),
            "out" => self.out = v.into(),
            "k" => {
                self.k = parse(key, v)?;
                self.train.k = self.k;
            }
            "frame" => {
                self.frame = parse(key, v)?;
                self.train.frame = self.frame;
            }
            "seed" => {
                self.seed = parse(key, v)?;
                self.train.seed = self.seed;
            }
            "preset" => {
                self.preset = match v {
                    "default" => PresetChoice::Default,
                    "light" => PresetChoice::Light,
                    "custom" => PresetChoice::Custom,
                    _ => {
                        return Err(Error::Config(format!(
                            "unknown preset {v:?} (default, light, custom)"
                        )))
                    }
                };
                if self.preset != PresetChoice::Custom {
                    Preset::parse(v)?.apply(&mut self.train);
                }
            }
            "time_budget" => self.time_budget = secs(key, v)?,
            "repetitions" => self.repetitions = parse(key, v)?,
            "train_fraction" => self.train_fraction = parse(key, v)?,
            "cap" => self.cap = secs(key, v)?,
            _ => self.train.set(key, v)?,
        }
        Ok(())
    }

    /// Applies `key=value` lines; blank lines and `#` comments are skipped.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::Config(format!("line {}: expected key=value, got {line:?}", i + 1))
            })?;
            self.set(k, v)
                .map_err(|e| Error::Config(format!("line {}: {e}", i + 1)))?;
        }
        Ok(())
    }

    pub fn load(path: &Path) -> Result<RunConfig> {
        let mut c = RunConfig::default();
        c.apply_text(&std::fs::read_to_string(path)?)?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.frame == 0 {
            return Err(Error::Config("k and frame must be at least 1".into()));
        }
        if self.repetitions == 0 {
            return Err(Error::Config("repetitions must be at least 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction must lie in (0, 1), got {}",
                self.train_fraction
            )));
        }
        self.train.validate()
    }

    pub fn exec(&self) -> Exec {
        self.train.exec
    }

    /// Training config for repetition seed `seed`.
    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            k: self.k,
            frame: self.frame,
            seed,
            ..self.train.clone()
        }
    }

    pub fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| Error::Argument("no data directory (--data or data=)".into()))
    }

    pub fn workload_file(&self) -> Result<&Path> {
        self.workload
            .as_deref()
            .ok_or_else(|| Error::Argument("no workload file (--workload or workload=)".into()))
    }

    pub fn checkpoint_file(&self) -> Result<&Path> {
        self.checkpoint
            .as_deref()
            .ok_or_else(|| Error::Argument("no checkpoint (--checkpoint or checkpoint=)".into()))
    }

    pub fn set_file(&self) -> Result<&Path> {
        self.set
            .as_deref()
            .ok_or_else(|| Error::Argument("no approximation set file (--set or set=)".into()))
    }

    /// Flat `key=value` echo of every setting.
    pub fn to_text(&self) -> String {
        let opt = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or("none".to_string(), |p| p.display().to_string())
        };
        let dur =
            |d: &Option<Duration>| d.map_or("none".to_string(), |d| d.as_secs_f64().to_string());
        let preset = match self.preset {
            PresetChoice::Default => "default",
            PresetChoice::Light => "light",
            PresetChoice::Custom => "custom",
        };
        let mut s = format!(
            "data={}\nworkload={}\ncheckpoint={}\nset={}\nout={}\npreset={preset}\ntime_budget={}\nrepetitions={}\ntrain_fraction={}\ncap={}\n",
            opt(&self.data),
            opt(&self.workload),
            opt(&self.checkpoint),
            opt(&self.set),
            self.out.display(),
            dur(&self.time_budget),
            self.repetitions,
            self.train_fraction,
            dur(&self.cap),
        );
        for (k, v) in self.train.to_pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s
    }
}
