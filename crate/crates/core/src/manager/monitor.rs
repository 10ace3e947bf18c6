use serde::{Deserialize, Serialize};

/// Length of a metric window in seconds.
pub const WINDOW_SECONDS: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttSample {
    pub correlation_id: String,
    /// Response receipt time minus request send time, seconds.
    pub rtt: f64,
    /// Receipt time.
    pub at: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricWindow {
    pub index: u64,
    pub start: f64,
    pub end: f64,
    pub samples: Vec<RttSample>,
    pub mean_rtt: Option<f64>,
}

impl MetricWindow {
    fn close(index: u64, start: f64, samples: Vec<RttSample>) -> Self {
        let mean_rtt = if samples.is_empty() {
            None
        } else {
            Some(samples.iter().map(|s| s.rtt).sum::<f64>() / samples.len() as f64)
        };
        Self {
            index,
            start,
            end: start + WINDOW_SECONDS,
            samples,
            mean_rtt,
        }
    }
}

/// Cuts a time-ordered sample stream into contiguous 20 s windows starting
/// at t = 0.
#[derive(Debug, Default)]
pub struct Monitor {
    index: u64,
    pending: Vec<RttSample>,
}

impl Monitor {
    pub fn new() -> Self {
        Self::default()
    }

    fn current_end(&self) -> f64 {
        (self.index + 1) as f64 * WINDOW_SECONDS
    }

    /// Closes every window that ends at or before `now`.
    pub fn advance_to(&mut self, now: f64) -> Vec<MetricWindow> {
        let mut closed = Vec::new();
        while self.current_end() <= now {
            let start = self.index as f64 * WINDOW_SECONDS;
            closed.push(MetricWindow::close(
                self.index,
                start,
                std::mem::take(&mut self.pending),
            ));
            self.index += 1;
        }
        closed
    }

    /// Records a sample, closing the windows that ended before it.
    pub fn push(&mut self, sample: RttSample) -> Vec<MetricWindow> {
        let closed = self.advance_to(sample.at);
        self.pending.push(sample);
        closed
    }
}
