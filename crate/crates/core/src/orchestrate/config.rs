//! `run` configuration file.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};

use super::clock::{AcceleratedClock, Clock, SystemClock};
use super::schedule::RotationPolicy;
use super::state::ProcessOptions;
use crate::classify::DEFAULT_MAX_LINE_LEN;
use crate::convert::{ExportFormat, DEFAULT_GAP_THRESHOLD};
use crate::record::{RetryPolicy, SourceEndpoint, SourceKind};
use crate::Execution;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClockConfig {
    #[default]
    System,
    /// Scenario time from `origin`, `factor` times faster than wall time.
    Accelerated { factor: f64, origin: DateTime<Utc> },
}

impl ClockConfig {
    pub fn build(&self) -> Arc<dyn Clock> {
        match self {
            ClockConfig::System => Arc::new(SystemClock),
            ClockConfig::Accelerated { factor, origin } => {
                Arc::new(AcceleratedClock::new(*origin, *factor))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// `serial:<path>`, `tcp:<host:port>` or `replay:<path>`.
    pub source: SourceEndpoint,
    /// Replay pacing multiplier, replay sources only.
    #[serde(default)]
    pub replay_speed: Option<f64>,
    pub out_dir: PathBuf,
    #[serde(default)]
    pub rotation: RotationPolicy,
    #[serde(default = "one_second", with = "humantime_serde")]
    pub flush_interval: Duration,
    #[serde(default)]
    pub sync_on_flush: bool,
    #[serde(default = "default_formats")]
    pub formats: Vec<ExportFormat>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "yes")]
    pub quarantine_invalid: bool,
    #[serde(default = "default_max_line")]
    pub max_line_len: usize,
    #[serde(default = "default_gap", with = "humantime_serde")]
    pub gap_threshold: Duration,
    /// Segments processed concurrently.
    #[serde(default = "default_workers")]
    pub workers: usize,
    /// How long a quiet source is waited on before the clock is checked.
    #[serde(default = "default_poll", with = "humantime_serde")]
    pub poll_interval: Duration,
    #[serde(default)]
    pub clock: ClockConfig,
    /// Use the thread pool for per-segment batch work.
    #[serde(default = "yes")]
    pub parallel: bool,
}

fn one_second() -> Duration {
    Duration::from_secs(1)
}
fn default_formats() -> Vec<ExportFormat> {
    vec![ExportFormat::Columns]
}
fn yes() -> bool {
    true
}
fn default_max_line() -> usize {
    DEFAULT_MAX_LINE_LEN
}
fn default_gap() -> Duration {
    DEFAULT_GAP_THRESHOLD
}
fn default_workers() -> usize {
    2
}
fn default_poll() -> Duration {
    Duration::from_millis(100)
}

impl PipelineConfig {
    /// Defaults for everything but the source and output directory.
    pub fn new(source: SourceEndpoint, out_dir: impl Into<PathBuf>) -> Self {
        Self {
            source,
            replay_speed: None,
            out_dir: out_dir.into(),
            rotation: RotationPolicy::UtcMidnight,
            flush_interval: one_second(),
            sync_on_flush: false,
            formats: default_formats(),
            retry: RetryPolicy::default(),
            quarantine_invalid: true,
            max_line_len: DEFAULT_MAX_LINE_LEN,
            gap_threshold: DEFAULT_GAP_THRESHOLD,
            workers: default_workers(),
            poll_interval: default_poll(),
            clock: ClockConfig::System,
            parallel: true,
        }
    }

    /// Parse TOML. A relative `out_dir` is resolved against `base`.
    pub fn from_toml(text: &str, base: Option<&Path>) -> Result<Self, String> {
        let mut c: PipelineConfig = toml::from_str(text).map_err(|e| e.to_string())?;
        if let (Some(base), true) = (base, c.out_dir.is_relative()) {
            c.out_dir = base.join(&c.out_dir);
        }
        if let Some(speed) = c.replay_speed {
            c.source = c.source.clone().with_replay_speed(speed)?;
        }
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_toml(&text, path.parent()).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn validate(&self) -> Result<(), String> {
        if self.formats.is_empty() {
            return Err("at least one export format is required".into());
        }
        if self.workers == 0 {
            return Err("workers must be at least 1".into());
        }
        if self.flush_interval.is_zero() {
            return Err("flush_interval must be positive".into());
        }
        if self.replay_speed.is_some() && self.source.kind() != SourceKind::Replay {
            return Err("replay_speed only applies to replay sources".into());
        }
        if let ClockConfig::Accelerated { factor, .. } = self.clock {
            if !(factor.is_finite() && factor > 0.0) {
                return Err("clock factor must be positive".into());
            }
        }
        Ok(())
    }

    pub fn process_options(&self) -> ProcessOptions {
        ProcessOptions {
            formats: self.formats.clone(),
            quarantine_invalid: self.quarantine_invalid,
            max_line_len: self.max_line_len,
            gap_threshold: self.gap_threshold,
        }
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::Parallel
        } else {
            Execution::Sequential
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_and_full_configs() {
        let c = PipelineConfig::from_toml(
            "source = \"tcp:localhost:4001\"\nout_dir = \"data\"\n",
            Some(Path::new("/srv")),
        )
        .unwrap();
        assert_eq!(c.out_dir, PathBuf::from("/srv/data"));
        assert_eq!(c.rotation, RotationPolicy::UtcMidnight);
        assert_eq!(c.flush_interval, Duration::from_secs(1));

        let full = r#"
            source = "replay:/tmp/in.log"
            replay_speed = 4.0
            out_dir = "/data"
            rotation = "24h"
            flush_interval = "250ms"
            formats = ["columns", "lines"]
            gap_threshold = "10m"
            workers = 3
            [retry]
            max_retries = 2
            initial_backoff = "10ms"
            max_backoff = "1s"
            [clock]
            mode = "accelerated"
            factor = 3600.0
            origin = "2020-04-17T00:00:00Z"
        "#;
        let c = PipelineConfig::from_toml(full, None).unwrap();
        assert_eq!(c.source.replay_speed(), Some(4.0));
        assert_eq!(
            c.rotation,
            RotationPolicy::FixedInterval(Duration::from_secs(86_400))
        );
        assert_eq!(c.formats.len(), 2);
        assert_eq!(c.retry.max_retries, 2);
        assert!(matches!(c.clock, ClockConfig::Accelerated { factor, .. } if factor == 3600.0));
    }

    #[test]
    fn bad_configs() {
        assert!(PipelineConfig::from_toml("out_dir = \"x\"", None).is_err());
        assert!(PipelineConfig::from_toml(
            "source = \"tcp:h:1\"\nout_dir = \"x\"\nbogus = 1",
            None
        )
        .is_err());
        assert!(PipelineConfig::from_toml(
            "source = \"tcp:h:1\"\nout_dir = \"x\"\nreplay_speed = 2.0",
            None
        )
        .is_err());
        assert!(PipelineConfig::from_toml(
            "source = \"tcp:h:1\"\nout_dir = \"x\"\nformats = []",
            None
        )
        .is_err());
        assert!(PipelineConfig::from_toml(
            "source = \"tcp:h:1\"\nout_dir = \"x\"\nrotation = \"0s\"",
            None
        )
        .is_err());
    }
}
