//! Platform segmentation and maneuver onset extraction.
//!
//! Each channel (altitude, speed, heading) is smoothed, scanned with a sliding
//! window whose histogram and spread decide whether the aircraft is holding a
//! steady value, and the resulting platforms are paired up: the end of one
//! platform followed by a sufficiently different one is a maneuver.

pub mod savgol;

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::track::{wrap180, wrap360, Channel, Trajectory};
use savgol::{gradient, SavitzkyGolay};

/// One value per channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerChannel<T> {
    pub altitude: T,
    pub speed: T,
    pub heading: T,
}

impl<T: Copy> PerChannel<T> {
    pub fn get(&self, ch: Channel) -> T {
        match ch {
            Channel::Altitude => self.altitude,
            Channel::Speed => self.speed,
            Channel::Heading => self.heading,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectorConfig {
    pub sg_window: usize,
    pub sg_order: usize,
    /// Sliding window width in seconds (samples at 1 Hz).
    pub win_s: usize,
    pub bin_width: PerChannel<f64>,
    pub stable_mass_frac: f64,
    pub stable_std: PerChannel<f64>,
    pub min_platform_s: f64,
    pub change_threshold: PerChannel<f64>,
    /// Per second: ft/s, kt/s, deg/s.
    pub rate_threshold: PerChannel<f64>,
    pub max_gap_s: f64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        DetectorConfig {
            sg_window: 11,
            sg_order: 2,
            win_s: 21,
            bin_width: PerChannel { altitude: 100.0, speed: 5.0, heading: 4.0 },
            stable_mass_frac: 0.7,
            stable_std: PerChannel { altitude: 50.0, speed: 2.5, heading: 2.0 },
            min_platform_s: 20.0,
            change_threshold: PerChannel { altitude: 300.0, speed: 8.0, heading: 8.0 },
            rate_threshold: PerChannel { altitude: 200.0 / 60.0, speed: 0.5, heading: 1.0 },
            max_gap_s: 120.0,
        }
    }
}

impl DetectorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.sg_window.is_multiple_of(2) || self.sg_window <= self.sg_order {
            return Err(Error::BadConfig("sg_window must be odd and greater than sg_order".into()));
        }
        if !(self.stable_mass_frac > 0.0 && self.stable_mass_frac <= 1.0) {
            return Err(Error::BadConfig("stable_mass_frac must lie in (0, 1]".into()));
        }
        if self.win_s < 2 {
            return Err(Error::BadConfig("win_s must be at least 2".into()));
        }
        for ch in Channel::ALL {
            if self.bin_width.get(ch) <= 0.0 || self.stable_std.get(ch) < 0.0 {
                return Err(Error::BadConfig(format!("non-positive bin width for {}", ch.name())));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlatformSegment {
    pub channel: Channel,
    pub t_start: f64,
    pub t_end: f64,
    /// Median of member samples (heading wrapped to [0, 360)).
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManeuverEvent {
    pub callsign: String,
    pub channel: Channel,
    pub onset_t: f64,
    pub from_value: f64,
    pub to_value: f64,
}

impl ManeuverEvent {
    /// Signed change; headings on the circle in (-180, 180].
    pub fn change(&self) -> f64 {
        match self.channel {
            Channel::Heading => wrap180(self.to_value - self.from_value),
            _ => self.to_value - self.from_value,
        }
    }
}

/// Savitzky-Golay pass over one channel. Headings must already be unwrapped.
pub fn smooth_channel(samples: &[f64], cfg: &DetectorConfig, _channel: Channel) -> Result<Vec<f64>> {
    SavitzkyGolay::new(cfg.sg_window, cfg.sg_order)?.apply(samples)
}

/// Per-channel scan result: platforms as sample index ranges plus the rate of
/// the smoothed series.
struct ChannelScan {
    rate: Vec<f64>,
    /// inclusive sample index ranges with their median value (unwrapped units)
    segments: Vec<(usize, usize, f64)>,
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Largest bin fraction of a counting histogram whose bins are anchored so one
/// bin is centred on the window median.
fn max_bin_fraction(window: &[f64], bin_width: f64, scratch: &mut Vec<f64>) -> f64 {
    scratch.clear();
    scratch.extend_from_slice(window);
    let med = median(scratch);
    let origin = med - 0.5 * bin_width;
    // scratch is sorted; count runs of equal bin index
    let mut best = 0usize;
    let mut run = 0usize;
    let mut current = i64::MIN;
    for &v in scratch.iter() {
        let bin = ((v - origin) / bin_width).floor() as i64;
        if bin == current {
            run += 1;
        } else {
            current = bin;
            run = 1;
        }
        best = best.max(run);
    }
    best as f64 / window.len() as f64
}

fn std_dev(window: &[f64]) -> f64 {
    let n = window.len() as f64;
    let mean = window.iter().sum::<f64>() / n;
    (window.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Search radius (samples) around a tolerance-trimmed boundary for the kink.
const KINK_SEARCH_BEFORE: usize = 10;
const KINK_SEARCH_AFTER: usize = 3;
/// Extra samples either side of the search range included in the fit.
const KINK_FIT_MARGIN: usize = 12;

/// Sum of squared residuals of the least-squares fit of `y ≈ a + b·r`.
fn hinge_sse(ys: &[f64], rs: &[f64]) -> f64 {
    let n = ys.len() as f64;
    let (sr, sy) = (rs.iter().sum::<f64>(), ys.iter().sum::<f64>());
    let srr: f64 = rs.iter().map(|r| r * r).sum();
    let sry: f64 = rs.iter().zip(ys).map(|(r, y)| r * y).sum();
    let det = n * srr - sr * sr;
    let (a, b) = if det.abs() < 1e-12 { (sy / n, 0.0) } else { ((srr * sy - sr * sry) / det, (n * sry - sr * sy) / det) };
    ys.iter().zip(rs).map(|(y, r)| (y - a - b * r).powi(2)).sum()
}

/// Last flat sample before a ramp, by a continuous hinge fit (flat, then
/// linear) on the raw samples around the coarse boundary `hi`.
fn refine_end(x: &[f64], lo: usize, hi: usize) -> usize {
    let n = x.len();
    let k_lo = hi.saturating_sub(KINK_SEARCH_BEFORE).max(lo + 1);
    let k_hi = (hi + KINK_SEARCH_AFTER).min(n - 2);
    if k_lo > k_hi {
        return hi;
    }
    let w_lo = k_lo.saturating_sub(KINK_FIT_MARGIN).max(lo);
    let w_hi = (k_hi + KINK_FIT_MARGIN).min(n - 1);
    let ys = &x[w_lo..=w_hi];
    let mut best = (f64::INFINITY, hi);
    for k in k_lo..=k_hi {
        let rs: Vec<f64> = (w_lo..=w_hi).map(|i| i.saturating_sub(k) as f64).collect();
        let sse = hinge_sse(ys, &rs);
        if sse < best.0 {
            best = (sse, k);
        }
    }
    best.1 - 1
}

/// First flat sample after a ramp; mirror image of [`refine_end`].
fn refine_start(x: &[f64], lo: usize, hi: usize) -> usize {
    let k_lo = lo.saturating_sub(KINK_SEARCH_AFTER).max(1);
    let k_hi = (lo + KINK_SEARCH_BEFORE).min(hi.saturating_sub(1));
    if k_lo > k_hi {
        return lo;
    }
    let w_lo = k_lo.saturating_sub(KINK_FIT_MARGIN);
    let w_hi = (k_hi + KINK_FIT_MARGIN).min(hi);
    let ys = &x[w_lo..=w_hi];
    let mut best = (f64::INFINITY, lo);
    for k in k_lo..=k_hi {
        let rs: Vec<f64> = (w_lo..=w_hi).map(|i| k.saturating_sub(i) as f64).collect();
        let sse = hinge_sse(ys, &rs);
        if sse < best.0 {
            best = (sse, k);
        }
    }
    best.1
}

fn scan_channel(traj: &Trajectory, channel: Channel, cfg: &DetectorConfig) -> Result<ChannelScan> {
    if !traj.is_regular() {
        return Err(Error::IrregularSampling { callsign: traj.callsign.clone() });
    }
    let raw = traj.channel(channel);
    let smoothed = smooth_channel(&raw, cfg, channel)?;
    let rate = gradient(&smoothed, 1.0);
    let n = smoothed.len();
    let w = cfg.win_s;
    let bin = cfg.bin_width.get(channel);
    let max_std = cfg.stable_std.get(channel);
    let rate_thr = cfg.rate_threshold.get(channel);

    let mut segments = Vec::new();
    if n >= w {
        let mut scratch = Vec::with_capacity(w);
        let stable: Vec<bool> = (0..=n - w)
            .map(|k| {
                let win = &smoothed[k..k + w];
                max_bin_fraction(win, bin, &mut scratch) >= cfg.stable_mass_frac
                    && std_dev(win) <= max_std
            })
            .collect();

        let mut k = 0;
        while k < stable.len() {
            if !stable[k] {
                k += 1;
                continue;
            }
            let first = k;
            while k + 1 < stable.len() && stable[k + 1] {
                k += 1;
            }
            let (mut lo, mut hi) = (first, k + w - 1);
            k += 1;

            let mut members = smoothed[lo..=hi].to_vec();
            let med = median(&mut members);
            // trim the ramp-in/ramp-out samples that the window tolerated
            let off = |i: usize| (smoothed[i] - med).abs() > 0.5 * bin;
            while hi > lo && off(hi) {
                hi -= 1;
            }
            while lo < hi && off(lo) {
                lo += 1;
            }
            if hi + 1 < n && rate[hi + 1].abs() >= rate_thr {
                hi = refine_end(&raw, lo, hi);
            }
            if lo > 0 && rate[lo - 1].abs() >= rate_thr {
                lo = refine_start(&raw, lo, hi);
            }
            if hi > lo && (hi - lo) as f64 >= cfg.min_platform_s {
                let mut members = smoothed[lo..=hi].to_vec();
                segments.push((lo, hi, median(&mut members)));
            }
        }
    }
    Ok(ChannelScan { rate, segments })
}

/// Stable platforms of one channel on a regular 1 Hz trajectory.
pub fn detect_platforms(
    traj: &Trajectory,
    channel: Channel,
    cfg: &DetectorConfig,
) -> Result<Vec<PlatformSegment>> {
    let scan = scan_channel(traj, channel, cfg)?;
    Ok(to_platforms(traj, channel, &scan))
}

fn to_platforms(traj: &Trajectory, channel: Channel, scan: &ChannelScan) -> Vec<PlatformSegment> {
    scan.segments
        .iter()
        .map(|&(lo, hi, v)| PlatformSegment {
            channel,
            t_start: traj.points[lo].t,
            t_end: traj.points[hi].t,
            value: if channel == Channel::Heading { wrap360(v) } else { v },
        })
        .collect()
}

fn events_from_scan(
    traj: &Trajectory,
    channel: Channel,
    scan: &ChannelScan,
    cfg: &DetectorConfig,
) -> Vec<ManeuverEvent> {
    let thr = cfg.change_threshold.get(channel);
    let rate_thr = cfg.rate_threshold.get(channel);
    scan.segments
        .windows(2)
        .filter_map(|pair| {
            let (_, end_a, va) = pair[0];
            let (start_b, _, vb) = pair[1];
            let gap = match channel {
                Channel::Heading => wrap180(vb - va),
                _ => vb - va,
            };
            let t_end = traj.points[end_a].t;
            if gap.abs() < thr || traj.points[start_b].t - t_end > cfg.max_gap_s {
                return None;
            }
            let onset_idx = (end_a + 1..start_b)
                .find(|&i| scan.rate[i].abs() >= rate_thr)
                .unwrap_or(end_a);
            let (from, to) = match channel {
                Channel::Heading => (wrap360(va), wrap360(vb)),
                _ => (va, vb),
            };
            Some(ManeuverEvent {
                callsign: traj.callsign.clone(),
                channel,
                onset_t: traj.points[onset_idx].t,
                from_value: from,
                to_value: to,
            })
        })
        .collect()
}

/// Everything the detector learns about one flight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackAnalysis {
    pub callsign: String,
    pub platforms: Vec<PlatformSegment>,
    pub events: Vec<ManeuverEvent>,
    /// No altitude platform anywhere: continuous-descent profile, excluded downstream.
    pub cdo_like: bool,
}

fn sort_events(events: &mut [ManeuverEvent]) {
    events.sort_by(|a, b| a.onset_t.total_cmp(&b.onset_t).then(a.channel.cmp(&b.channel)));
}

/// Maneuver onsets on a regular 1 Hz trajectory, sorted by onset time.
pub fn extract_maneuvers(traj: &Trajectory, cfg: &DetectorConfig) -> Result<Vec<ManeuverEvent>> {
    let mut events = Vec::new();
    for ch in Channel::ALL {
        let scan = scan_channel(traj, ch, cfg)?;
        events.extend(events_from_scan(traj, ch, &scan, cfg));
    }
    sort_events(&mut events);
    Ok(events)
}

/// Resamples a raw trajectory and runs the detector on each contiguous piece.
/// Pieces shorter than the smoothing window are skipped.
pub fn analyze_track(traj: &Trajectory, cfg: &DetectorConfig) -> Result<TrackAnalysis> {
    cfg.validate()?;
    let mut platforms = Vec::new();
    let mut events = Vec::new();
    for piece in traj.resample_1hz() {
        if piece.len() < cfg.sg_window {
            continue;
        }
        for ch in Channel::ALL {
            let scan = scan_channel(&piece, ch, cfg)?;
            platforms.extend(to_platforms(&piece, ch, &scan));
            events.extend(events_from_scan(&piece, ch, &scan, cfg));
        }
    }
    platforms.sort_by(|a, b| a.channel.cmp(&b.channel).then(a.t_start.total_cmp(&b.t_start)));
    sort_events(&mut events);
    let cdo_like = !platforms.iter().any(|p| p.channel == Channel::Altitude);
    Ok(TrackAnalysis { callsign: traj.callsign.clone(), platforms, events, cdo_like })
}

/// Runs [`analyze_track`] over many flights in parallel; output order follows input order.
pub fn analyze_all(trajs: &[Trajectory], cfg: &DetectorConfig) -> Result<Vec<TrackAnalysis>> {
    crate::par::map(trajs, |t| analyze_track(t, cfg)).into_iter().collect()
}

pub fn write_events_jsonl<W: Write>(mut w: W, events: &[ManeuverEvent]) -> Result<()> {
    for ev in events {
        serde_json::to_writer(&mut w, ev)?;
        w.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_events_jsonl<R: BufRead>(r: R) -> Result<Vec<ManeuverEvent>> {
    crate::io::read_jsonl(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::track::TrackPoint;

    fn traj_from(alt: &[f64], gs: &[f64], hdg: &[f64]) -> Trajectory {
        let pts = (0..alt.len())
            .map(|i| TrackPoint {
                t: 1000.0 + i as f64,
                lat: 1.0,
                lon: 104.0,
                alt: alt[i],
                gs: gs[i],
                hdg: wrap360(hdg[i]),
            })
            .collect();
        Trajectory::new("TST1", pts).unwrap()
    }

    #[test]
    fn histogram_fraction_brute_force() {
        let mut s = Vec::new();
        let w = [0.0, 10.0, 20.0, 30.0, 40.0, 45.0, 200.0];
        // median 30 -> bins [-20,80) hold 6 of 7 samples... with width 100: [-20, 80)
        let f = max_bin_fraction(&w, 100.0, &mut s);
        assert!((f - 6.0 / 7.0).abs() < 1e-12);
    }

    #[test]
    fn constant_channel_is_one_platform() {
        let n = 80;
        let t = traj_from(&vec![5000.0; n], &vec![250.0; n], &vec![90.0; n]);
        let cfg = DetectorConfig::default();
        let p = detect_platforms(&t, Channel::Altitude, &cfg).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p[0].t_start, 1000.0);
        assert_eq!(p[0].t_end, 1079.0);
        assert_eq!(p[0].value, 5000.0);
        assert!(extract_maneuvers(&t, &cfg).unwrap().is_empty());
    }

    #[test]
    fn irregular_input_rejected() {
        let mut t = traj_from(&[0.0; 30], &[200.0; 30], &[0.0; 30]);
        t.points[5].t += 0.5;
        assert!(matches!(
            detect_platforms(&t, Channel::Speed, &DetectorConfig::default()),
            Err(Error::IrregularSampling { .. })
        ));
    }

    #[test]
    fn heading_turn_across_north_uses_circular_gap() {
        let mut hdg = vec![350.0; 80];
        for (i, h) in hdg.iter_mut().enumerate().skip(80 / 2) {
            *h = (350.0 + 3.0 * (i - 40) as f64).min(370.0);
        }
        hdg.extend(std::iter::repeat_n(370.0, 60));
        let n = hdg.len();
        let t = traj_from(&vec![5000.0; n], &vec![250.0; n], &hdg);
        let ev = extract_maneuvers(&t, &DetectorConfig::default()).unwrap();
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].channel, Channel::Heading);
        assert!((ev[0].from_value - 350.0).abs() < 1e-9);
        assert!((ev[0].to_value - 10.0).abs() < 1e-9);
        assert!((ev[0].change() - 20.0).abs() < 1e-9);
        assert!((ev[0].onset_t - 1040.0).abs() <= 3.0);
    }
}
