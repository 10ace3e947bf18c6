//! Metrics CSV parsing and the baseline/adaptive stage comparison.

use std::fmt::Write as _;

use crate::config::Mode;
use crate::scenario::MetricsLog;

pub const CSV_HEADER: &str = "window,mean_rtt_s,bandwidth_bps,mode";

#[derive(Debug, Clone, PartialEq)]
pub struct CsvRow {
    pub window: usize,
    pub mean_rtt_s: Option<f64>,
    pub bandwidth_bps: f64,
    pub mode: Mode,
}

impl From<&MetricsLog> for Vec<CsvRow> {
    fn from(log: &MetricsLog) -> Self {
        // Round-trip through the text form so in-process comparisons see
        // exactly what the CSV holds.
        parse_csv(&log.to_csv()).expect("own output parses")
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<CsvRow>, String> {
    let mut lines = text.lines();
    match lines.next() {
        Some(CSV_HEADER) => {}
        other => return Err(format!("expected header `{CSV_HEADER}`, got {other:?}")),
    }
    lines
        .enumerate()
        .map(|(i, line)| {
            let at = i + 2;
            let cols: Vec<&str> = line.split(',').collect();
            let [window, mean, bw, mode] = cols[..] else {
                return Err(format!("line {at}: expected 4 columns"));
            };
            let num = |s: &str, what: &str| s.parse::<f64>().map_err(|e| format!("line {at}: {what}: {e}"));
            Ok(CsvRow {
                window: window.parse().map_err(|e| format!("line {at}: window: {e}"))?,
                mean_rtt_s: if mean.is_empty() {
                    None
                } else {
                    Some(num(mean, "mean_rtt_s")?)
                },
                bandwidth_bps: num(bw, "bandwidth_bps")?,
                mode: mode.parse().map_err(|e| format!("line {at}: {e}"))?,
            })
        })
        .collect()
}

/// Thresholds of the two-stage check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Thresholds {
    pub target_rtt_s: f64,
    pub target_tolerance: f64,
    pub max_adaptive_ratio: f64,
    pub tolerated_rtt_s: f64,
    pub baseline_peak_s: f64,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            target_rtt_s: 0.5,
            target_tolerance: 0.10,
            max_adaptive_ratio: 0.6,
            tolerated_rtt_s: 1.0,
            baseline_peak_s: 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub baseline: Vec<CsvRow>,
    pub adaptive: Vec<CsvRow>,
    /// Number of leading windows at full bandwidth.
    pub stage1_windows: usize,
    pub verdicts: Vec<Verdict>,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.verdicts.iter().all(|v| v.pass)
    }

    pub fn render(&self) -> String {
        let fmt = |m: Option<f64>| m.map_or_else(|| "-".to_string(), |v| format!("{v:.6}"));
        let mut out = String::from("window  stage  bandwidth_bps     baseline_rtt_s  adaptive_rtt_s\n");
        for (b, a) in self.baseline.iter().zip(&self.adaptive) {
            let stage = if b.window <= self.stage1_windows { 1 } else { 2 };
            let _ = writeln!(
                out,
                "{:>6}  {:>5}  {:>14.1}  {:>14}  {:>14}",
                b.window,
                stage,
                b.bandwidth_bps,
                fmt(b.mean_rtt_s),
                fmt(a.mean_rtt_s)
            );
        }
        for v in &self.verdicts {
            let _ = writeln!(out, "{} {}: {}", if v.pass { "PASS" } else { "FAIL" }, v.name, v.detail);
        }
        let _ = writeln!(out, "verdict: {}", if self.passed() { "PASS" } else { "FAIL" });
        out
    }
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m, v| Some(m.map_or(v, |m: f64| m.max(v))))
}

/// Compares two runs of the same scenario. Stage 1 is the leading run of
/// windows whose bandwidth equals the first window's; every later window
/// belongs to the degradation stage.
pub fn compare(baseline: Vec<CsvRow>, adaptive: Vec<CsvRow>, th: Thresholds) -> Result<Comparison, String> {
    if baseline.is_empty() {
        return Err("baseline has no windows".into());
    }
    if baseline.len() != adaptive.len() {
        return Err(format!(
            "window counts differ: {} vs {}",
            baseline.len(),
            adaptive.len()
        ));
    }
    for (b, a) in baseline.iter().zip(&adaptive) {
        if b.window != a.window || b.bandwidth_bps != a.bandwidth_bps {
            return Err(format!(
                "window {} differs in index or bandwidth; not the same scenario",
                b.window
            ));
        }
    }
    if baseline.iter().any(|r| r.mode != Mode::Baseline) || adaptive.iter().any(|r| r.mode != Mode::Adaptive) {
        return Err("mode column does not match the --baseline/--adaptive roles".into());
    }

    let full = baseline[0].bandwidth_bps;
    let stage1 = baseline.iter().take_while(|r| r.bandwidth_bps == full).count();
    let (b1, b2) = baseline.split_at(stage1);
    let (a1, a2) = adaptive.split_at(stage1);
    let mut verdicts = Vec::new();

    let lo = th.target_rtt_s * (1.0 - th.target_tolerance);
    let hi = th.target_rtt_s * (1.0 + th.target_tolerance);
    let off: Vec<String> = b1
        .iter()
        .filter(|r| !r.mean_rtt_s.is_some_and(|m| (lo..=hi).contains(&m)))
        .map(|r| {
            format!(
                "#{}={}",
                r.window,
                r.mean_rtt_s.map_or("-".into(), |m| format!("{m:.3}"))
            )
        })
        .collect();
    verdicts.push(Verdict {
        name: "stage-1 baseline",
        pass: off.is_empty(),
        detail: if off.is_empty() {
            format!("{stage1} windows within [{lo:.3}, {hi:.3}] s")
        } else {
            format!("outside [{lo:.3}, {hi:.3}] s: {}", off.join(" "))
        },
    });

    let ratios: Vec<Option<f64>> = b1
        .iter()
        .zip(a1)
        .map(|(b, a)| Some(a.mean_rtt_s? / b.mean_rtt_s?))
        .collect();
    let worst = max_of(ratios.iter().flatten().copied());
    let ratio_ok = !ratios.is_empty() && ratios.iter().all(|r| r.is_some_and(|r| r <= th.max_adaptive_ratio));
    verdicts.push(Verdict {
        name: "stage-1 adaptive",
        pass: ratio_ok,
        detail: format!(
            "worst adaptive/baseline ratio {} (limit {})",
            worst.map_or("-".into(), |w| format!("{w:.3}")),
            th.max_adaptive_ratio
        ),
    });

    let adaptive_peak = max_of(a2.iter().filter_map(|r| r.mean_rtt_s));
    let adaptive_ok = !a2.is_empty() && a2.iter().all(|r| r.mean_rtt_s.is_some_and(|m| m < th.tolerated_rtt_s));
    verdicts.push(Verdict {
        name: "degraded adaptive",
        pass: adaptive_ok,
        detail: format!(
            "{} windows, peak {} s (limit < {})",
            a2.len(),
            adaptive_peak.map_or("-".into(), |p| format!("{p:.3}")),
            th.tolerated_rtt_s
        ),
    });

    let baseline_peak = max_of(b2.iter().filter_map(|r| r.mean_rtt_s));
    verdicts.push(Verdict {
        name: "degraded baseline",
        pass: baseline_peak.is_some_and(|p| p > th.baseline_peak_s),
        detail: format!(
            "peak {} s (needs > {})",
            baseline_peak.map_or("-".into(), |p| format!("{p:.3}")),
            th.baseline_peak_s
        ),
    });

    Ok(Comparison {
        baseline,
        adaptive,
        stage1_windows: stage1,
        verdicts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(window: usize, mean: Option<f64>, bw: f64, mode: Mode) -> CsvRow {
        CsvRow {
            window,
            mean_rtt_s: mean,
            bandwidth_bps: bw,
            mode,
        }
    }

    fn pair(base: &[(f64, f64)], adapt: &[f64]) -> (Vec<CsvRow>, Vec<CsvRow>) {
        let b = base
            .iter()
            .enumerate()
            .map(|(i, &(m, bw))| row(i + 1, Some(m), bw, Mode::Baseline))
            .collect();
        let a = adapt
            .iter()
            .zip(base)
            .enumerate()
            .map(|(i, (&m, &(_, bw)))| row(i + 1, Some(m), bw, Mode::Adaptive))
            .collect();
        (b, a)
    }

    #[test]
    fn csv_round_trip() {
        let text = format!("{CSV_HEADER}\n1,0.500000,5000000.000000,baseline\n2,,4000000.000000,adaptive\n");
        let rows = parse_csv(&text).unwrap();
        assert_eq!(rows[0], row(1, Some(0.5), 5e6, Mode::Baseline));
        assert_eq!(rows[1], row(2, None, 4e6, Mode::Adaptive));
        assert!(parse_csv("a,b\n").is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,x,1,baseline\n")).is_err());
        assert!(parse_csv(&format!("{CSV_HEADER}\n1,1,1\n")).is_err());
    }

    #[test]
    fn two_stage_pass() {
        let (b, a) = pair(
            &[(0.5, 5e6), (0.51, 5e6), (1.2, 3e6), (2.3, 1e6)],
            &[0.2, 0.2, 0.4, 0.8],
        );
        let c = compare(b, a, Thresholds::default()).unwrap();
        assert_eq!(c.stage1_windows, 2);
        assert!(c.passed(), "{}", c.render());
    }

    #[test]
    fn each_verdict_can_fail() {
        type Case = (&'static [(f64, f64)], &'static [f64], &'static str);
        let cases: [Case; 4] = [
            (&[(0.6, 5e6), (2.5, 1e6)], &[0.2, 0.5], "stage-1 baseline"),
            (&[(0.5, 5e6), (2.5, 1e6)], &[0.31, 0.5], "stage-1 adaptive"),
            (&[(0.5, 5e6), (2.5, 1e6)], &[0.2, 1.0], "degraded adaptive"),
            (&[(0.5, 5e6), (2.0, 1e6)], &[0.2, 0.5], "degraded baseline"),
        ];
        for (base, adapt, failing) in cases {
            let (b, a) = pair(base, adapt);
            let c = compare(b, a, Thresholds::default()).unwrap();
            let failed: Vec<_> = c.verdicts.iter().filter(|v| !v.pass).map(|v| v.name).collect();
            assert_eq!(failed, vec![failing]);
        }
    }

    #[test]
    fn missing_window_mean_fails_its_stage() {
        let (mut b, a) = pair(&[(0.5, 5e6), (2.5, 1e6)], &[0.2, 0.5]);
        b[0].mean_rtt_s = None;
        assert!(!compare(b, a, Thresholds::default()).unwrap().passed());
    }

    #[test]
    fn mismatched_runs_are_rejected() {
        let (b, mut a) = pair(&[(0.5, 5e6), (2.5, 1e6)], &[0.2, 0.5]);
        assert!(compare(b.clone(), a[..1].to_vec(), Thresholds::default()).is_err());
        a[1].bandwidth_bps = 2e6;
        assert!(compare(b.clone(), a, Thresholds::default()).is_err());
        assert!(compare(b.clone(), b, Thresholds::default()).is_err());
    }
}
