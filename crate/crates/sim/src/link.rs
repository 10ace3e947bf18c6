//! Link transmission model: fixed one-way latency plus serialization over a
//! piecewise-constant bandwidth schedule. No queueing.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkProfile {
    /// One-way propagation latency, seconds.
    pub base_latency: f64,
    /// `(start_time, bits_per_second)` breakpoints, strictly increasing in
    /// time. The first bandwidth also applies before its start time.
    pub bandwidth_schedule: Vec<(f64, f64)>,
}

impl LinkProfile {
    pub fn constant(base_latency: f64, bandwidth_bps: f64) -> Self {
        Self {
            base_latency,
            bandwidth_schedule: vec![(0.0, bandwidth_bps)],
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.base_latency >= 0.0 && self.base_latency.is_finite()) {
            return Err(format!("latency must be >= 0, got {}", self.base_latency));
        }
        if self.bandwidth_schedule.is_empty() {
            return Err("bandwidth schedule is empty".into());
        }
        for (t, bw) in &self.bandwidth_schedule {
            if !(bw.is_finite() && *bw > 0.0) {
                return Err(format!("bandwidth must be > 0, got {bw}"));
            }
            if !t.is_finite() {
                return Err(format!("breakpoint time must be finite, got {t}"));
            }
        }
        if self.bandwidth_schedule.windows(2).any(|w| w[1].0 <= w[0].0) {
            return Err("bandwidth breakpoints must be strictly increasing in time".into());
        }
        Ok(())
    }

    fn segment_at(&self, t: f64) -> usize {
        self.bandwidth_schedule
            .iter()
            .rposition(|(start, _)| *start <= t)
            .unwrap_or(0)
    }

    pub fn bandwidth_at(&self, t: f64) -> f64 {
        self.bandwidth_schedule[self.segment_at(t)].1
    }

    /// Time-weighted mean bandwidth over `[from, to)`.
    pub fn mean_bandwidth(&self, from: f64, to: f64) -> f64 {
        let s = &self.bandwidth_schedule;
        let mut t = from;
        let mut bits = 0.0;
        let mut k = self.segment_at(from);
        while t < to {
            let end = s.get(k + 1).map_or(to, |next| next.0.min(to));
            bits += s[k].1 * (end - t);
            t = end;
            k += 1;
        }
        bits / (to - from)
    }
}

/// Arrival time of `size_bytes` sent over `link` at `depart_time`.
pub fn transmit(size_bytes: usize, link: &LinkProfile, depart_time: f64) -> f64 {
    let s = &link.bandwidth_schedule;
    let mut remaining = 8.0 * size_bytes as f64;
    let mut t = depart_time;
    let mut k = link.segment_at(depart_time);
    while remaining > 0.0 {
        let bw = s[k].1;
        match s.get(k + 1) {
            Some(&(next, _)) if t + remaining / bw > next => {
                remaining -= bw * (next - t);
                t = next;
                k += 1;
            }
            _ => {
                t += remaining / bw;
                remaining = 0.0;
            }
        }
    }
    t + link.base_latency
}
