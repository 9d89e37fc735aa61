use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::stats::median;

/// Per-sample wall-clock split and the resulting speedup over sampling in
/// the ambient space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    /// Latent sampling time per sample.
    pub t_diff_m: f64,
    /// Recovery time per sample.
    pub t_cs: f64,
    /// `(d/m)·t_diff_m`.
    pub t_diff_d_estimated: f64,
    pub m: usize,
    pub d: usize,
    /// `1 − (m/d)(1 + t_cs/t_diff_m)`.
    pub speedup: f64,
    pub hardware_note: String,
}

impl TimingReport {
    /// Recomputes the speedup from the stored times.
    pub fn speedup_from_fields(&self) -> f64 {
        speedup(self.t_diff_m, self.t_cs, self.m, self.d)
    }
}

fn speedup(t_diff_m: f64, t_cs: f64, m: usize, d: usize) -> f64 {
    let r = m as f64 / d as f64;
    1.0 - (r + r * t_cs / t_diff_m)
}

pub fn measure_speedup(t_diff_m: f64, t_cs: f64, m: usize, d: usize) -> Result<TimingReport> {
    if !(t_diff_m > 0.0) || !(t_cs >= 0.0) || !t_cs.is_finite() || !t_diff_m.is_finite() {
        return Err(Error::invalid(format!(
            "times must be finite with t_diff_m > 0 and t_cs >= 0, got {t_diff_m}, {t_cs}"
        )));
    }
    if m == 0 || d == 0 || m > d {
        return Err(Error::invalid(format!("need 0 < m <= d, got m = {m}, d = {d}")));
    }
    Ok(TimingReport {
        t_diff_m,
        t_cs,
        t_diff_d_estimated: d as f64 / m as f64 * t_diff_m,
        m,
        d,
        speedup: speedup(t_diff_m, t_cs, m, d),
        hardware_note: hardware_note(),
    })
}

pub fn hardware_note() -> String {
    format!(
        "{} {}, single-threaded timings, {} logical cpu(s)",
        std::env::consts::OS,
        std::env::consts::ARCH,
        std::thread::available_parallelism().map_or(1, |n| n.get())
    )
}

/// Number of leading samples dropped from timing medians.
pub const WARMUP_SAMPLES: usize = 3;

/// Per-item wall-clock durations from a monotonic clock.
#[derive(Clone, Debug, Default)]
pub struct Stopwatch {
    laps: Vec<f64>,
}

impl Stopwatch {
    pub fn time<T>(&mut self, f: impl FnOnce() -> T) -> T {
        let start = Instant::now();
        let out = f();
        self.laps.push(start.elapsed().as_secs_f64());
        out
    }

    pub fn laps(&self) -> &[f64] {
        &self.laps
    }

    /// Median lap after the warm-up laps; all laps if there are too few.
    pub fn median_after_warmup(&self) -> f64 {
        let rest = if self.laps.len() > WARMUP_SAMPLES {
            &self.laps[WARMUP_SAMPLES..]
        } else {
            &self.laps[..]
        };
        if rest.is_empty() {
            0.0
        } else {
            median(rest)
        }
    }
}
