//! Command timeline reconstruction and windowed workload indicators.

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::ensemble::PredictionRow;
use crate::error::{Error, Result};
use crate::signal::ManeuverEvent;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Observed,
    Predicted,
}

/// A spoken command occupying the frequency over `[issue_t, end_t)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommandInterval {
    pub callsign: String,
    pub issue_t: f64,
    pub end_t: f64,
    pub source: Source,
}

impl CommandInterval {
    pub fn new(callsign: impl Into<String>, issue_t: f64, end_t: f64, source: Source) -> Result<Self> {
        if !(issue_t.is_finite() && end_t.is_finite()) {
            return Err(Error::NonFinite("command interval"));
        }
        if end_t <= issue_t {
            return Err(Error::BadDuration(end_t - issue_t));
        }
        Ok(CommandInterval { callsign: callsign.into(), issue_t, end_t, source })
    }

    pub fn len(&self) -> f64 {
        self.end_t - self.issue_t
    }

    pub fn is_empty(&self) -> bool {
        self.end_t <= self.issue_t
    }

    /// Length of the part inside `[a, b)`.
    pub fn clipped(&self, a: f64, b: f64) -> f64 {
        (self.end_t.min(b) - self.issue_t.max(a)).max(0.0)
    }
}

/// Walks back from a maneuver onset: end = onset - offset, issue = end - duration.
pub fn reconstruct(callsign: &str, onset_t: f64, offset_hat: f64, duration_hat: f64) -> Result<CommandInterval> {
    if !(duration_hat > 0.0) {
        return Err(Error::BadDuration(duration_hat));
    }
    let end_t = onset_t - offset_hat;
    CommandInterval::new(callsign, end_t - duration_hat, end_t, Source::Predicted)
}

pub fn reconstruct_timeline(event: &ManeuverEvent, offset_hat: f64, duration_hat: f64) -> Result<CommandInterval> {
    reconstruct(&event.callsign, event.onset_t, offset_hat, duration_hat)
}

/// Predicted intervals, plus the observed ones when the rows carry labels.
pub fn intervals_from_predictions(rows: &[PredictionRow]) -> Result<(Vec<CommandInterval>, Vec<CommandInterval>)> {
    let mut predicted = Vec::with_capacity(rows.len());
    let mut observed = Vec::new();
    for r in rows {
        predicted.push(reconstruct(&r.callsign, r.onset_t, r.offset_hat, r.duration_hat)?);
        if let (Some(o), Some(d)) = (r.offset_true, r.duration_true) {
            let mut iv = reconstruct(&r.callsign, r.onset_t, o, d)?;
            iv.source = Source::Observed;
            observed.push(iv);
        }
    }
    Ok((predicted, observed))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowStats {
    pub start: f64,
    pub end: f64,
    pub cumulative_speech_s: f64,
    pub max_concurrency: usize,
    pub command_count: usize,
    /// absent with fewer than two commands issued in the window
    pub mean_inter_command_gap_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorkloadReport {
    pub window_s: f64,
    pub span: [f64; 2],
    pub windows: Vec<WindowStats>,
}

/// Most intervals open at once within `[a, b)`. Endpoints are swept in time
/// order with closings before openings at equal times, so back-to-back
/// commands do not overlap.
pub fn max_concurrency(intervals: &[CommandInterval], a: f64, b: f64) -> usize {
    let mut ends: Vec<(f64, i32)> = Vec::new();
    for iv in intervals {
        let (s, e) = (iv.issue_t.max(a), iv.end_t.min(b));
        if e > s {
            ends.push((s, 1));
            ends.push((e, -1));
        }
    }
    ends.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)));
    let (mut open, mut best) = (0i32, 0i32);
    for (_, d) in ends {
        open += d;
        best = best.max(open);
    }
    best as usize
}

fn window_stats(intervals: &[CommandInterval], a: f64, b: f64) -> WindowStats {
    let cumulative_speech_s = intervals.iter().map(|iv| iv.clipped(a, b)).sum();
    let mut issued: Vec<f64> = intervals.iter().map(|iv| iv.issue_t).filter(|t| (a..b).contains(t)).collect();
    issued.sort_by(f64::total_cmp);
    let mean_inter_command_gap_s =
        (issued.len() >= 2).then(|| (issued[issued.len() - 1] - issued[0]) / (issued.len() - 1) as f64);
    WindowStats {
        start: a,
        end: b,
        cumulative_speech_s,
        max_concurrency: max_concurrency(intervals, a, b),
        command_count: issued.len(),
        mean_inter_command_gap_s,
    }
}

/// Tumbling half-open windows `[t0 + k w, t0 + (k+1) w)` covering the span.
pub fn workload_report(intervals: &[CommandInterval], span: (f64, f64), window_s: f64) -> Result<WorkloadReport> {
    if !(window_s > 0.0 && window_s.is_finite()) {
        return Err(Error::BadWindow(window_s));
    }
    let (t0, t1) = span;
    if !(t0.is_finite() && t1.is_finite() && t1 >= t0) {
        return Err(Error::BadConfig(format!("workload span [{t0}, {t1}] is empty")));
    }
    let n = (((t1 - t0) / window_s).ceil() as usize).max(1);
    let windows = crate::par::map_range(n, |k| {
        let edge = |i: usize| t0 + i as f64 * window_s;
        window_stats(intervals, edge(k), edge(k + 1))
    });
    Ok(WorkloadReport { window_s, span: [t0, t1], windows })
}

/// From the window-aligned floor of the first issue to the last end.
pub fn span_of(intervals: &[CommandInterval], window_s: f64) -> (f64, f64) {
    let lo = intervals.iter().map(|iv| iv.issue_t).fold(f64::INFINITY, f64::min);
    let hi = intervals.iter().map(|iv| iv.end_t).fold(f64::NEG_INFINITY, f64::max);
    if !lo.is_finite() {
        return (0.0, window_s);
    }
    ((lo / window_s).floor() * window_s, hi)
}

impl WorkloadReport {
    pub fn total_speech_s(&self) -> f64 {
        self.windows.iter().map(|w| w.cumulative_speech_s).sum()
    }

    pub fn write_json(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json_pretty(path, self)
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_atomic(path, |w| {
            let mut wr = csv::Writer::from_writer(w);
            for s in &self.windows {
                wr.serialize(s)?;
            }
            wr.flush()?;
            Ok(())
        })
    }
}

/// One bar of the timeline plot; `onset_t` adds the dashed offset leg.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineItem {
    pub interval: CommandInterval,
    pub onset_t: Option<f64>,
}

/// Bars per command on one row per callsign, with a dashed line from the
/// command end to the maneuver onset.
pub fn timeline_svg(items: &[TimelineItem]) -> String {
    const ROW: f64 = 22.0;
    const LEFT: f64 = 90.0;
    const WIDTH: f64 = 900.0;
    let mut rows: Vec<&str> = items.iter().map(|i| i.interval.callsign.as_str()).collect();
    rows.sort_unstable();
    rows.dedup();
    let lo = items.iter().map(|i| i.interval.issue_t).fold(f64::INFINITY, f64::min);
    let hi = items
        .iter()
        .map(|i| i.onset_t.unwrap_or(i.interval.end_t).max(i.interval.end_t))
        .fold(f64::NEG_INFINITY, f64::max);
    let (lo, hi) = if lo.is_finite() && hi > lo { (lo, hi) } else { (0.0, 1.0) };
    let x = |t: f64| LEFT + (t - lo) / (hi - lo) * (WIDTH - LEFT - 10.0);
    let height = ROW * rows.len() as f64 + 40.0;
    let mut svg = String::new();
    let _ = writeln!(
        svg,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{height}" font-family="sans-serif" font-size="11">"#
    );
    for (r, cs) in rows.iter().enumerate() {
        let y = 10.0 + ROW * r as f64;
        let _ = writeln!(svg, r#"<text x="4" y="{:.1}">{cs}</text>"#, y + 14.0);
    }
    for it in items {
        let r = rows.binary_search(&it.interval.callsign.as_str()).unwrap_or(0);
        let y = 10.0 + ROW * r as f64;
        let (colour, dy) = match it.interval.source {
            Source::Predicted => ("#1f5fbf", 3.0),
            Source::Observed => ("#999999", 11.0),
        };
        let (x0, x1) = (x(it.interval.issue_t), x(it.interval.end_t));
        let _ = writeln!(
            svg,
            r#"<rect x="{x0:.2}" y="{:.1}" width="{:.2}" height="8" fill="{colour}"/>"#,
            y + dy,
            (x1 - x0).max(1.0)
        );
        if let Some(onset) = it.onset_t {
            let xo = x(onset);
            let _ = writeln!(
                svg,
                r#"<line x1="{x1:.2}" y1="{:.1}" x2="{xo:.2}" y2="{:.1}" stroke="{colour}" stroke-dasharray="3,2"/>"#,
                y + dy + 4.0,
                y + dy + 4.0
            );
            let _ = writeln!(svg, r##"<circle cx="{xo:.2}" cy="{:.1}" r="2.5" fill="#c0392b"/>"##, y + dy + 4.0);
        }
    }
    let axis_y = height - 20.0;
    let _ = writeln!(svg, r#"<line x1="{LEFT}" y1="{axis_y}" x2="{:.1}" y2="{axis_y}" stroke="black"/>"#, WIDTH - 10.0);
    let _ = writeln!(svg, r#"<text x="{LEFT}" y="{:.1}">{lo:.0} s</text>"#, axis_y + 14.0);
    let _ = writeln!(svg, r#"<text x="{:.1}" y="{:.1}" text-anchor="end">{hi:.0} s</text>"#, WIDTH - 10.0, axis_y + 14.0);
    svg.push_str("</svg>\n");
    svg
}

#[cfg(test)]
mod tests {
    use super::*;

    fn iv(a: f64, b: f64) -> CommandInterval {
        CommandInterval::new("X", a, b, Source::Predicted).unwrap()
    }

    #[test]
    fn three_interval_example() {
        let r = workload_report(&[iv(0.0, 5.0), iv(3.0, 8.0), iv(10.0, 12.0)], (0.0, 60.0), 60.0).unwrap();
        assert_eq!(r.windows.len(), 1);
        let w = &r.windows[0];
        assert_eq!((w.cumulative_speech_s, w.max_concurrency, w.command_count), (12.0, 2, 3));
        assert_eq!(w.mean_inter_command_gap_s, Some(5.0));
    }

    #[test]
    fn empty_and_back_to_back() {
        let r = workload_report(&[], (0.0, 600.0), 300.0).unwrap();
        assert_eq!(r.windows.len(), 2);
        assert!(r.windows.iter().all(|w| w.cumulative_speech_s == 0.0 && w.command_count == 0));
        assert!(r.windows.iter().all(|w| w.mean_inter_command_gap_s.is_none()));
        assert_eq!(max_concurrency(&[iv(0.0, 5.0), iv(5.0, 9.0)], 0.0, 60.0), 1);
        assert!(matches!(workload_report(&[], (0.0, 1.0), 0.0), Err(Error::BadWindow(_))));
    }

    #[test]
    fn reconstruction_signs() {
        let c = reconstruct("SIA1", 50_811.0, 22.0, 3.2).unwrap();
        assert_eq!(c.end_t, 50_789.0);
        assert!((c.issue_t - 50_785.8).abs() < 1e-9);
        assert_eq!(reconstruct("SIA1", 100.0, 0.0, 2.0).unwrap().end_t, 100.0);
        assert_eq!(reconstruct("SIA1", 100.0, -2.0, 2.0).unwrap().end_t, 102.0);
        assert!(matches!(reconstruct("SIA1", 100.0, 1.0, 0.0), Err(Error::BadDuration(_))));
    }

    #[test]
    fn timeline_has_one_bar_per_item() {
        let items: Vec<TimelineItem> =
            [("A", 0.0), ("B", 10.0), ("A", 20.0)].iter().map(|(c, t)| TimelineItem {
                interval: CommandInterval::new(*c, *t, t + 3.0, Source::Predicted).unwrap(),
                onset_t: Some(t + 15.0),
            }).collect();
        let svg = timeline_svg(&items);
        assert_eq!(svg.matches("<rect").count(), 3);
        assert_eq!(svg.matches("stroke-dasharray").count(), 3);
    }
}
