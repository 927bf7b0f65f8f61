//! Reproducibility stamps and the wall-clock switch.

use std::path::Path;
use std::time::Instant;

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::Value;

pub const STAMP_FILE: &str = "stamp.json";

/// Source of the durations written to output files. `Frozen` reports zero
/// everywhere, making output bytes independent of machine speed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, clap::ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Clock {
    #[default]
    Wall,
    Frozen,
}

#[derive(Debug, Clone, Copy)]
pub struct Stopwatch {
    start: Instant,
    clock: Clock,
}

impl Clock {
    pub fn start(self) -> Stopwatch {
        Stopwatch {
            start: Instant::now(),
            clock: self,
        }
    }
}

impl Stopwatch {
    pub fn seconds(&self) -> f64 {
        match self.clock {
            Clock::Wall => self.start.elapsed().as_secs_f64(),
            Clock::Frozen => 0.0,
        }
    }

    pub fn millis(&self) -> u64 {
        match self.clock {
            Clock::Wall => self.start.elapsed().as_millis() as u64,
            Clock::Frozen => 0,
        }
    }
}

#[derive(Debug, Serialize)]
struct Stamp<'a> {
    command: &'a str,
    seed: u64,
    clock: Clock,
    config: &'a Value,
    versions: Versions,
}

#[derive(Debug, Serialize)]
struct Versions {
    querysat: &'static str,
    checkpoint_format: u32,
}

/// Writes `stamp.json` into `dir`: command, seed, configuration, versions.
pub fn write_stamp(dir: &Path, command: &str, seed: u64, clock: Clock, config: &Value) -> Result<()> {
    let stamp = Stamp {
        command,
        seed,
        clock,
        config,
        versions: Versions {
            querysat: env!("CARGO_PKG_VERSION"),
            checkpoint_format: crate::checkpoint::VERSION,
        },
    };
    let path = dir.join(STAMP_FILE);
    std::fs::write(&path, serde_json::to_string_pretty(&stamp)? + "\n").with_context(|| format!("writing {}", path.display()))
}
