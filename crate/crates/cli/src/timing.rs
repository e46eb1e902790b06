//! Per-stage wall-clock samples from a monotonic clock.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::io::write_file;
use crate::Result;

pub const KEYFRAME_MAP: &str = "keyframe_map";
pub const HISTOGRAM: &str = "histogram";
pub const SIMILARITY: &str = "similarity";
pub const ALIGNMENT: &str = "alignment";
pub const REGISTRATION: &str = "registration";
pub const QUERY: &str = "query";
pub const OPTIMIZATION: &str = "optimization";
pub const REBUILD: &str = "rebuild";

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageSummary {
    pub count: usize,
    pub mean: Duration,
    pub p99: Duration,
}

#[derive(Debug, Clone, Default)]
pub struct TimingProfile {
    samples: BTreeMap<String, Vec<Duration>>,
}

impl TimingProfile {
    pub fn record(&mut self, stage: &str, d: Duration) {
        self.samples.entry(stage.to_string()).or_default().push(d);
    }

    /// Runs `f` and records its duration under `stage`.
    pub fn time<T>(&mut self, stage: &str, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.record(stage, start.elapsed());
        out
    }

    pub fn samples(&self, stage: &str) -> &[Duration] {
        self.samples.get(stage).map_or(&[], Vec::as_slice)
    }

    pub fn summary(&self, stage: &str) -> Option<StageSummary> {
        summarize(self.samples(stage))
    }

    pub fn stages(&self) -> impl Iterator<Item = &str> {
        self.samples.keys().map(String::as_str)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_file(path, |w| {
            writeln!(w, "stage,count,mean_ms,p99_ms")?;
            for stage in self.stages() {
                let s = self.summary(stage).expect("stage has samples");
                writeln!(
                    w,
                    "{stage},{},{:.6},{:.6}",
                    s.count,
                    s.mean.as_secs_f64() * 1e3,
                    s.p99.as_secs_f64() * 1e3
                )?;
            }
            Ok(())
        })
    }
}

/// Mean and nearest-rank 99th percentile.
pub fn summarize(samples: &[Duration]) -> Option<StageSummary> {
    if samples.is_empty() {
        return None;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_unstable();
    let rank = ((0.99 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len());
    let total: Duration = sorted.iter().sum();
    Some(StageSummary {
        count: sorted.len(),
        mean: total / sorted.len() as u32,
        p99: sorted[rank - 1],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percentile_by_nearest_rank() {
        let samples: Vec<Duration> = (1..=200).map(Duration::from_millis).collect();
        let s = summarize(&samples).unwrap();
        assert_eq!(s.count, 200);
        assert_eq!(s.p99, Duration::from_millis(198));
        assert_eq!(s.mean, Duration::from_micros(100_500));
        let one = summarize(&[Duration::from_millis(3)]).unwrap();
        assert_eq!(one.p99, Duration::from_millis(3));
        assert!(summarize(&[]).is_none());
    }

    #[test]
    fn records_by_stage() {
        let mut t = TimingProfile::default();
        let v = t.time(HISTOGRAM, || 4);
        assert_eq!(v, 4);
        t.record(HISTOGRAM, Duration::from_millis(1));
        assert_eq!(t.samples(HISTOGRAM).len(), 2);
        assert!(t.summary(ALIGNMENT).is_none());
    }
}
