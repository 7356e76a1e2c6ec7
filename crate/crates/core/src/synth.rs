//! Deterministic synthetic scenarios with known ground truth.
//!
//! Every flight alternates steady platforms with single-channel transitions.
//! For each transition a controller utterance is placed so that the transition
//! starts `offset` seconds after the utterance ends. Offsets and durations carry
//! planted dependencies on command type, wake category, and distance to the
//! airport so downstream models have real structure to find.

use std::collections::{BTreeSet, HashMap};
use std::io::Write;
use std::path::Path;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{AirportRef, WeatherRecord, Wtc};
use crate::geo::{destination, haversine_distance, initial_bearing, LatLon};
use crate::phrase::{
    render_command, write_transcript, CallsignTable, CommandFlags, Direction, ParsedCommand, Phraseology, Speaker,
    TranscriptUtterance,
};
use crate::signal::{ManeuverEvent, PerChannel, PlatformSegment};
use crate::track::{wrap180, wrap360, write_tracks, Channel, TrackPoint, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_flights: usize,
    /// inclusive [min, max]
    pub maneuvers_per_flight: (usize, usize),
    pub noise_sigma: PerChannel<f64>,
    pub offset_mean_s: f64,
    pub offset_sd_s: f64,
    pub offset_min_s: f64,
    pub offset_max_s: f64,
    /// added to the offset mean of speed commands
    pub speed_offset_shift_s: f64,
    /// added to the offset mean of heavy and super aircraft
    pub heavy_offset_shift_s: f64,
    /// seconds of extra delay per nautical mile beyond `distance_ref_nm`
    pub distance_offset_slope: f64,
    pub distance_ref_nm: f64,
    pub duration_mean_s: f64,
    pub duration_sd_s: f64,
    pub duration_min_s: f64,
    pub duration_max_s: f64,
    pub duration_type_shift_s: PerChannel<f64>,
    /// ft/s, kt/s, deg/s
    pub transition_rate: PerChannel<f64>,
    /// inclusive range of platform lengths between maneuvers
    pub platform_s: (u32, u32),
    pub lead_in_s: (u32, u32),
    pub heavy_fraction: f64,
    /// flights start within this many seconds of `day_start`
    pub start_spread_s: u32,
    pub day_start: f64,
    pub weather_interval_s: u32,
    pub airport: AirportRef,
    pub seed: u64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            n_flights: 50,
            maneuvers_per_flight: (2, 4),
            noise_sigma: PerChannel { altitude: 25.0, speed: 1.5, heading: 1.0 },
            offset_mean_s: 12.0,
            offset_sd_s: 5.0,
            offset_min_s: -5.0,
            offset_max_s: 45.0,
            speed_offset_shift_s: 4.0,
            heavy_offset_shift_s: 3.0,
            distance_offset_slope: 0.2,
            distance_ref_nm: 30.0,
            duration_mean_s: 3.5,
            duration_sd_s: 1.0,
            duration_min_s: 1.0,
            duration_max_s: 8.0,
            duration_type_shift_s: PerChannel { altitude: -1.0, speed: 0.0, heading: 1.0 },
            transition_rate: PerChannel { altitude: 1500.0 / 60.0, speed: 1.0, heading: 3.0 },
            platform_s: (80, 150),
            lead_in_s: (90, 150),
            heavy_fraction: 0.3,
            start_spread_s: 3600,
            // 2024-01-15 13:50:00 UTC
            day_start: 1_705_326_600.0,
            weather_interval_s: 60,
            airport: AirportRef::default(),
            seed: 42,
        }
    }
}

/// Platform length below which the detector cannot be expected to see a platform.
pub const MIN_FEASIBLE_PLATFORM_S: u32 = 45;

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::BadConfig(m.to_owned()));
        if self.maneuvers_per_flight.0 > self.maneuvers_per_flight.1 {
            return bad("maneuvers_per_flight range is empty");
        }
        if self.platform_s.0 > self.platform_s.1 || self.lead_in_s.0 > self.lead_in_s.1 {
            return bad("platform length range is empty");
        }
        if self.platform_s.0 < MIN_FEASIBLE_PLATFORM_S || self.lead_in_s.0 < MIN_FEASIBLE_PLATFORM_S.max(70) {
            return bad("platforms shorter than the minimum feasible length");
        }
        let sigmas = [
            self.noise_sigma.altitude,
            self.noise_sigma.speed,
            self.noise_sigma.heading,
            self.offset_sd_s,
            self.duration_sd_s,
        ];
        if sigmas.iter().any(|s| !(*s >= 0.0)) {
            return bad("standard deviations must be non-negative");
        }
        if self.offset_min_s >= self.offset_max_s || self.duration_min_s <= 0.0 || self.duration_min_s >= self.duration_max_s {
            return bad("label bounds are empty");
        }
        if Channel::ALL.iter().any(|&c| self.transition_rate.get(c) <= 0.0) {
            return bad("transition rates must be positive");
        }
        if !(0.0..=1.0).contains(&self.heavy_fraction) || self.weather_interval_s == 0 {
            return bad("heavy_fraction must be in [0,1] and weather_interval_s positive");
        }
        Ok(())
    }

    /// Offset mean for one command before noise.
    pub fn planted_offset_mean(&self, ctype: Channel, wtc: Wtc, distance_nm: f64) -> f64 {
        let mut m = self.offset_mean_s + self.distance_offset_slope * (distance_nm - self.distance_ref_nm);
        if ctype == Channel::Speed {
            m += self.speed_offset_shift_s;
        }
        if matches!(wtc, Wtc::H | Wtc::J) {
            m += self.heavy_offset_shift_s;
        }
        m
    }

    pub fn planted_duration_mean(&self, ctype: Channel) -> f64 {
        self.duration_mean_s + self.duration_type_shift_s.get(ctype)
    }
}

/// One planted command-maneuver pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueLifecycle {
    pub command: ParsedCommand,
    pub event: ManeuverEvent,
    pub time_offset_s: f64,
    pub duration_s: f64,
    pub offset_mean_s: f64,
    pub duration_mean_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlightTruth {
    pub callsign: String,
    pub aircraft_type: String,
    pub wtc: Wtc,
    pub platforms: Vec<PlatformSegment>,
    pub lifecycles: Vec<TrueLifecycle>,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub trajectories: Vec<Trajectory>,
    pub transcript: Vec<TranscriptUtterance>,
    pub truth: Vec<FlightTruth>,
    pub weather: Vec<WeatherRecord>,
    pub fleet: Vec<(String, String)>,
    pub aircraft_types: Vec<(String, Wtc)>,
    pub callsigns: CallsignTable,
}

impl Scenario {
    pub fn lifecycles(&self) -> impl Iterator<Item = &TrueLifecycle> {
        self.truth.iter().flat_map(|f| f.lifecycles.iter())
    }

    pub fn events(&self) -> Vec<ManeuverEvent> {
        self.lifecycles().map(|l| l.event.clone()).collect()
    }
}

const AIRCRAFT_TYPES: [(&str, Wtc); 6] = [
    ("A320", Wtc::M),
    ("B738", Wtc::M),
    ("A21N", Wtc::M),
    ("A333", Wtc::H),
    ("B77W", Wtc::H),
    ("A388", Wtc::J),
];

fn truncated_normal(rng: &mut ChaCha8Rng, mean: f64, sd: f64, lo: f64, hi: f64) -> f64 {
    if sd == 0.0 {
        return mean.clamp(lo, hi);
    }
    let dist = Normal::new(mean, sd).expect("finite normal parameters");
    for _ in 0..10_000 {
        let x = dist.sample(rng);
        if (lo..=hi).contains(&x) {
            return x;
        }
    }
    mean.clamp(lo, hi)
}

fn round_to(x: f64, step: f64) -> f64 {
    (x / step).round() * step
}

#[derive(Clone, Copy)]
struct State {
    alt: f64,
    gs: f64,
    hdg: f64,
}

impl State {
    fn get(&self, ch: Channel) -> f64 {
        match ch {
            Channel::Altitude => self.alt,
            Channel::Speed => self.gs,
            Channel::Heading => self.hdg,
        }
    }

    fn set(&mut self, ch: Channel, v: f64) {
        match ch {
            Channel::Altitude => self.alt = v,
            Channel::Speed => self.gs = v,
            Channel::Heading => self.hdg = v,
        }
    }
}

/// One segment of the flight plan: hold for `hold_s`, then (optionally) move
/// channel `ch` to `target`.
struct Leg {
    hold_s: u32,
    change: Option<(Channel, f64)>,
}

fn pick_change(rng: &mut ChaCha8Rng, ch: Channel, s: &State) -> f64 {
    match ch {
        Channel::Altitude => {
            let steps = [1000.0, 1500.0, 2000.0, 2500.0];
            let d = *steps.choose(rng).expect("non-empty");
            let down = s.alt - d >= 3000.0;
            let up = s.alt + d <= 12_000.0;
            match (down, up) {
                (true, true) if rng.random_bool(0.6) => s.alt - d,
                (true, _) => s.alt - d,
                _ => s.alt + d,
            }
        }
        Channel::Speed => {
            let d = *[20.0, 30.0, 40.0].choose(rng).expect("non-empty");
            if s.gs - d >= 180.0 && (s.gs + d > 300.0 || rng.random_bool(0.6)) {
                s.gs - d
            } else {
                s.gs + d
            }
        }
        Channel::Heading => {
            let d = 10.0 * rng.random_range(3..=12) as f64;
            let sign = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
            s.hdg + sign * d
        }
    }
}

pub fn generate_scenario(cfg: &ScenarioConfig) -> Result<Scenario> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let callsigns = CallsignTable::default();
    let phr = Phraseology::default();
    let codes: Vec<String> = callsigns.codes().into_iter().map(str::to_owned).collect();
    let airport = cfg.airport.position();

    let mut used = BTreeSet::new();
    let mut trajectories = Vec::with_capacity(cfg.n_flights);
    let mut truth = Vec::with_capacity(cfg.n_flights);
    let mut transcript = Vec::new();
    let mut fleet = Vec::new();

    for _ in 0..cfg.n_flights {
        let callsign = loop {
            let code = codes.choose(&mut rng).expect("callsign table not empty");
            let cs = format!("{code}{}", rng.random_range(1..1000));
            if used.insert(cs.clone()) {
                break cs;
            }
        };
        let (ty, wtc) = if rng.random_bool(cfg.heavy_fraction) {
            *AIRCRAFT_TYPES[3..].choose(&mut rng).expect("non-empty")
        } else {
            *AIRCRAFT_TYPES[..3].choose(&mut rng).expect("non-empty")
        };
        fleet.push((callsign.clone(), ty.to_owned()));

        let t0 = cfg.day_start + rng.random_range(0..=cfg.start_spread_s) as f64;
        let bearing_from_apt = rng.random_range(0.0..360.0);
        let mut pos = destination(airport, bearing_from_apt, rng.random_range(15.0..35.0));
        let inbound = initial_bearing(pos, airport)?;
        let mut st = State {
            alt: 500.0 * rng.random_range(10..=20) as f64,
            gs: 10.0 * rng.random_range(20..=28) as f64,
            hdg: wrap360(round_to(inbound + rng.random_range(-60.0..60.0), 10.0)),
        };

        let n_man = rng.random_range(cfg.maneuvers_per_flight.0..=cfg.maneuvers_per_flight.1);
        let mut legs = Vec::with_capacity(n_man + 1);
        for k in 0..n_man {
            let hold = if k == 0 {
                rng.random_range(cfg.lead_in_s.0..=cfg.lead_in_s.1)
            } else {
                rng.random_range(cfg.platform_s.0..=cfg.platform_s.1)
            };
            let ch = *Channel::ALL.choose(&mut rng).expect("non-empty");
            legs.push(Leg { hold_s: hold, change: Some((ch, 0.0)) });
        }
        let tail_hold = if n_man == 0 {
            rng.random_range(cfg.lead_in_s.0..=cfg.lead_in_s.1) + rng.random_range(cfg.platform_s.0..=cfg.platform_s.1)
        } else {
            rng.random_range(cfg.platform_s.0..=cfg.platform_s.1)
        };
        legs.push(Leg { hold_s: tail_hold, change: None });

        // true state per second, plus bookkeeping of platforms and onsets
        let mut states: Vec<(f64, State, LatLon)> = Vec::new();
        let mut platforms: Vec<PlatformSegment> = Vec::new();
        let mut plat_start = [t0; 3];
        let mut maneuvers: Vec<(f64, Channel, f64, f64, LatLon)> = Vec::new();
        let mut t = t0;
        let advance = |pos: &mut LatLon, s: &State| *pos = destination(*pos, s.hdg, s.gs / 3600.0);

        for leg in &mut legs {
            for _ in 0..leg.hold_s {
                states.push((t, st, pos));
                advance(&mut pos, &st);
                t += 1.0;
            }
            let Some((ch, _)) = leg.change else { continue };
            let from = st.get(ch);
            let target = pick_change(&mut rng, ch, &st);
            leg.change = Some((ch, target));
            let rate = cfg.transition_rate.get(ch);
            let steps = ((target - from).abs() / rate).ceil() as u32;
            let onset = t;
            platforms.push(PlatformSegment {
                channel: ch,
                t_start: plat_start[ch.index()],
                t_end: onset - 1.0,
                value: if ch == Channel::Heading { wrap360(from) } else { from },
            });
            maneuvers.push((onset, ch, from, target, pos));
            for k in 0..steps {
                states.push((t, st, pos));
                advance(&mut pos, &st);
                t += 1.0;
                let v = from + (target - from) * ((k + 1) as f64 / steps as f64);
                st.set(ch, v);
            }
            st.set(ch, target);
            plat_start[ch.index()] = t;
        }
        let t_last = t - 1.0;
        for ch in Channel::ALL {
            let v = st.get(ch);
            platforms.push(PlatformSegment {
                channel: ch,
                t_start: plat_start[ch.index()],
                t_end: t_last,
                value: if ch == Channel::Heading { wrap360(v) } else { v },
            });
        }
        platforms.sort_by(|a, b| a.channel.cmp(&b.channel).then(a.t_start.total_cmp(&b.t_start)));

        let sigma = cfg.noise_sigma;
        let noise = |rng: &mut ChaCha8Rng, sd: f64| if sd > 0.0 { Normal::new(0.0, sd).expect("sd").sample(rng) } else { 0.0 };
        let points: Vec<TrackPoint> = states
            .iter()
            .map(|(t, s, p)| TrackPoint {
                t: *t,
                lat: p.lat,
                lon: p.lon,
                alt: (s.alt + noise(&mut rng, sigma.altitude)).max(-1000.0),
                gs: (s.gs + noise(&mut rng, sigma.speed)).max(0.0),
                hdg: wrap360(s.hdg + noise(&mut rng, sigma.heading)),
            })
            .collect();
        let traj = Trajectory::new(callsign.clone(), points)?;

        let mut lifecycles = Vec::with_capacity(maneuvers.len());
        for (onset, ch, from, target, p) in maneuvers {
            let dist = haversine_distance(p, airport)?;
            let off_mean = cfg.planted_offset_mean(ch, wtc, dist);
            let dur_mean = cfg.planted_duration_mean(ch);
            let offset = truncated_normal(&mut rng, off_mean, cfg.offset_sd_s, cfg.offset_min_s, cfg.offset_max_s);
            let duration =
                truncated_normal(&mut rng, dur_mean, cfg.duration_sd_s, cfg.duration_min_s, cfg.duration_max_s);
            let duration = round_to(duration, 0.01).max(cfg.duration_min_s);
            let end = onset - offset;
            let start_t = round_to(end - duration, 0.01);
            let time_offset_s = onset - (start_t + duration);
            let value = match ch {
                Channel::Heading => wrap360(target).round() as i64,
                _ => target.round() as i64,
            };
            let direction = match ch {
                Channel::Heading if wrap180(target - from) < 0.0 => Direction::Left,
                Channel::Heading => Direction::Right,
                _ => Direction::None,
            };
            let command = ParsedCommand {
                callsign: callsign.clone(),
                ctype: ch,
                value: Some(value),
                direction,
                start_t,
                duration_s: duration,
                flags: CommandFlags::default(),
            };
            let increasing = target > from;
            let text = render_command(&command, increasing, &callsigns, &phr)
                .ok_or_else(|| Error::BadConfig(format!("cannot render command for {callsign}")))?;
            transcript.push(TranscriptUtterance { start_t, duration_s: duration, speaker: Speaker::Atco, text: text.clone() });
            // readback, which the parser must ignore
            let readback_words: Vec<&str> = text.split(' ').collect();
            let alias_len = callsigns.alias_for(&callsign[..3]).map_or(1, |a| a.len()) + callsign.len() - 3;
            let readback = format!("{} {}", readback_words[alias_len..].join(" "), readback_words[..alias_len].join(" "));
            transcript.push(TranscriptUtterance {
                start_t: round_to(start_t + duration + 0.6, 0.01),
                duration_s: duration,
                speaker: Speaker::Pilot,
                text: readback,
            });
            lifecycles.push(TrueLifecycle {
                command,
                event: ManeuverEvent {
                    callsign: callsign.clone(),
                    channel: ch,
                    onset_t: onset,
                    from_value: if ch == Channel::Heading { wrap360(from) } else { from },
                    to_value: if ch == Channel::Heading { wrap360(target) } else { target },
                },
                time_offset_s,
                duration_s: duration,
                offset_mean_s: off_mean,
                duration_mean_s: dur_mean,
            });
        }

        trajectories.push(traj);
        truth.push(FlightTruth { callsign, aircraft_type: ty.to_owned(), wtc, platforms, lifecycles });
    }

    transcript.sort_by(|a, b| a.start_t.total_cmp(&b.start_t).then(a.text.cmp(&b.text)));
    trajectories.sort_by(|a, b| a.callsign.cmp(&b.callsign));
    truth.sort_by(|a, b| a.callsign.cmp(&b.callsign));
    fleet.sort();

    let t_end = trajectories.iter().map(|t| t.end()).fold(cfg.day_start, f64::max);
    let mut weather = Vec::new();
    let mut wt = cfg.day_start;
    while wt <= t_end {
        weather.push(WeatherRecord {
            t: wt,
            wind_speed: round_to(rng.random_range(0.0..25.0), 0.1),
            wind_dir: round_to(rng.random_range(0.0..359.0), 1.0),
            visibility: round_to(rng.random_range(3000.0..10000.0), 10.0),
        });
        wt += cfg.weather_interval_s as f64;
    }

    Ok(Scenario {
        config: cfg.clone(),
        trajectories,
        transcript,
        truth,
        weather,
        fleet,
        aircraft_types: AIRCRAFT_TYPES.iter().map(|(t, w)| (t.to_string(), *w)).collect(),
        callsigns,
    })
}

/// File names written by [`write_scenario`].
pub mod files {
    pub const TRACKS: &str = "tracks.csv";
    pub const TRANSCRIPT: &str = "transcript.tsv";
    pub const TRUTH: &str = "truth.jsonl";
    pub const CALLSIGNS: &str = "callsigns.csv";
    pub const FLEET: &str = "fleet.csv";
    pub const AIRCRAFT_TYPES: &str = "aircraft_types.csv";
    pub const WEATHER: &str = "weather.csv";
    pub const AIRPORT: &str = "airport.json";
}

pub fn write_scenario(sc: &Scenario, dir: impl AsRef<Path>) -> Result<Vec<std::path::PathBuf>> {
    use crate::io::write_atomic;
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, f: &dyn Fn(&mut dyn Write) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        write_atomic(&path, |w| f(w))?;
        written.push(path);
        Ok(())
    };
    put(files::TRACKS, &|w| write_tracks(w, &sc.trajectories))?;
    put(files::TRANSCRIPT, &|w| write_transcript(w, &sc.transcript))?;
    put(files::TRUTH, &|w| crate::io::write_jsonl(w, &sc.truth))?;
    put(files::CALLSIGNS, &|w| sc.callsigns.write_csv(w))?;
    put(files::FLEET, &|w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["callsign", "type"])?;
        for (c, t) in &sc.fleet {
            wtr.write_record([c, t])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    put(files::AIRCRAFT_TYPES, &|w| {
        let mut wtr = csv::Writer::from_writer(w);
        wtr.write_record(["type", "wtc"])?;
        for (t, wtc) in &sc.aircraft_types {
            wtr.write_record([t.clone(), format!("{wtc:?}")])?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    put(files::WEATHER, &|w| {
        let mut wtr = csv::Writer::from_writer(w);
        for rec in &sc.weather {
            wtr.serialize(rec)?;
        }
        wtr.flush()?;
        Ok(())
    })?;
    put(files::AIRPORT, &|w| {
        serde_json::to_writer_pretty(&mut *w, &sc.config.airport)?;
        w.write_all(b"\n")?;
        Ok(())
    })?;
    Ok(written)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectionScore {
    pub true_events: usize,
    pub detected_events: usize,
    pub matched: usize,
    pub recall: f64,
    pub mean_abs_onset_error_s: f64,
    pub max_abs_onset_error_s: f64,
}

/// One-to-one matching of detected to planted onsets on the same callsign and
/// channel; a planted event counts as recalled only when a detection lies
/// within `tolerance_s` of it.
pub fn score_detection(truth: &[ManeuverEvent], detected: &[ManeuverEvent], tolerance_s: f64) -> DetectionScore {
    let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
    for (i, t) in truth.iter().enumerate() {
        for (j, d) in detected.iter().enumerate() {
            if d.callsign == t.callsign && d.channel == t.channel {
                let err = (d.onset_t - t.onset_t).abs();
                if err <= tolerance_s {
                    pairs.push((err, i, j));
                }
            }
        }
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used_t = vec![false; truth.len()];
    let mut used_d = vec![false; detected.len()];
    let mut errs = Vec::new();
    for (err, i, j) in pairs {
        if !used_t[i] && !used_d[j] {
            used_t[i] = true;
            used_d[j] = true;
            errs.push(err);
        }
    }
    let matched = errs.len();
    DetectionScore {
        true_events: truth.len(),
        detected_events: detected.len(),
        matched,
        recall: if truth.is_empty() { 1.0 } else { matched as f64 / truth.len() as f64 },
        mean_abs_onset_error_s: if matched == 0 { 0.0 } else { errs.iter().sum::<f64>() / matched as f64 },
        max_abs_onset_error_s: errs.iter().copied().fold(0.0, f64::max),
    }
}

/// Ground-truth events keyed by callsign, sorted by onset.
pub fn truth_events_by_callsign(truth: &[FlightTruth]) -> HashMap<String, Vec<ManeuverEvent>> {
    truth
        .iter()
        .map(|f| (f.callsign.clone(), f.lifecycles.iter().map(|l| l.event.clone()).collect()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_match_configuration() {
        let cfg = ScenarioConfig { n_flights: 5, maneuvers_per_flight: (3, 3), ..Default::default() };
        let sc = generate_scenario(&cfg).unwrap();
        assert_eq!(sc.lifecycles().count(), 15);
        let atco = sc.transcript.iter().filter(|u| u.speaker == Speaker::Atco).count();
        assert_eq!(atco, 15);
    }

    #[test]
    fn no_maneuvers_means_flat_tracks() {
        let cfg = ScenarioConfig { n_flights: 3, maneuvers_per_flight: (0, 0), ..Default::default() };
        let sc = generate_scenario(&cfg).unwrap();
        assert!(sc.transcript.is_empty());
        assert_eq!(sc.lifecycles().count(), 0);
        assert!(sc.truth.iter().all(|f| f.platforms.len() == 3));
    }

    #[test]
    fn infeasible_config_rejected() {
        let cfg = ScenarioConfig { platform_s: (10, 20), ..Default::default() };
        assert!(matches!(generate_scenario(&cfg), Err(Error::BadConfig(_))));
        let cfg = ScenarioConfig { maneuvers_per_flight: (3, 1), ..Default::default() };
        assert!(generate_scenario(&cfg).is_err());
    }

    #[test]
    fn labels_satisfy_bookkeeping_identity() {
        let sc = generate_scenario(&ScenarioConfig { n_flights: 10, ..Default::default() }).unwrap();
        for l in sc.lifecycles() {
            let lhs = l.command.start_t + l.command.duration_s + l.time_offset_s;
            assert!((lhs - l.event.onset_t).abs() < 1e-9);
            assert!(l.duration_s > 0.0);
        }
    }
}
