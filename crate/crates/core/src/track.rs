//! Trajectories, 1 Hz resampling, and the track CSV format
//! (`t,callsign,lat,lon,alt_ft,gs_kt,hdg_deg`).

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tracks are split wherever consecutive fixes are further apart than this.
pub const MAX_RESAMPLE_GAP_S: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub t: f64,
    pub lat: f64,
    pub lon: f64,
    /// feet
    pub alt: f64,
    /// knots
    pub gs: f64,
    /// degrees in [0, 360)
    pub hdg: f64,
}

impl TrackPoint {
    pub fn validate(&self) -> Result<()> {
        let ok = self.t.is_finite()
            && (-90.0..=90.0).contains(&self.lat)
            && (-180.0..=180.0).contains(&self.lon)
            && self.alt >= -1000.0
            && self.gs >= 0.0
            && (0.0..360.0).contains(&self.hdg);
        if ok {
            Ok(())
        } else {
            Err(Error::BadTrajectory(format!("track point out of range: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Altitude,
    Speed,
    Heading,
}

impl Channel {
    pub const ALL: [Channel; 3] = [Channel::Altitude, Channel::Speed, Channel::Heading];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Channel::Altitude => "altitude",
            Channel::Speed => "speed",
            Channel::Heading => "heading",
        }
    }

    pub fn value_of(self, p: &TrackPoint) -> f64 {
        match self {
            Channel::Altitude => p.alt,
            Channel::Speed => p.gs,
            Channel::Heading => p.hdg,
        }
    }
}

/// Wraps an angle to [0, 360).
pub fn wrap360(deg: f64) -> f64 {
    let w = deg.rem_euclid(360.0);
    if w >= 360.0 {
        0.0
    } else {
        w
    }
}

/// Wraps an angle difference to (-180, 180].
pub fn wrap180(deg: f64) -> f64 {
    let w = wrap360(deg);
    if w > 180.0 {
        w - 360.0
    } else {
        w
    }
}

/// Removes 360° jumps so consecutive samples differ by at most 180°.
pub fn unwrap_degrees(hdg: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(hdg.len());
    let mut prev: Option<(f64, f64)> = None;
    for &h in hdg {
        let u = match prev {
            None => h,
            Some((raw, acc)) => acc + wrap180(h - raw),
        };
        out.push(u);
        prev = Some((h, u));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub callsign: String,
    pub points: Vec<TrackPoint>,
}

impl Trajectory {
    pub fn new(callsign: impl Into<String>, points: Vec<TrackPoint>) -> Result<Self> {
        let callsign = callsign.into();
        if points.len() < 2 {
            return Err(Error::BadTrajectory(format!("{callsign}: fewer than two points")));
        }
        for p in &points {
            p.validate()?;
        }
        if points.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::BadTrajectory(format!(
                "{callsign}: timestamps not strictly increasing"
            )));
        }
        Ok(Trajectory { callsign, points })
    }

    pub fn start(&self) -> f64 {
        self.points[0].t
    }

    pub fn end(&self) -> f64 {
        self.points[self.points.len() - 1].t
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn covers(&self, t: f64) -> bool {
        t >= self.start() && t <= self.end()
    }

    /// True when fixes are exactly one second apart.
    pub fn is_regular(&self) -> bool {
        self.points.windows(2).all(|w| (w[1].t - w[0].t - 1.0).abs() < 1e-9)
    }

    pub fn channel(&self, ch: Channel) -> Vec<f64> {
        let raw: Vec<f64> = self.points.iter().map(|p| ch.value_of(p)).collect();
        match ch {
            Channel::Heading => unwrap_degrees(&raw),
            _ => raw,
        }
    }

    /// Linearly interpolated state at `t`; heading interpolates along the short arc.
    pub fn state_at(&self, t: f64) -> Result<TrackPoint> {
        if !self.covers(t) {
            return Err(Error::OutOfRange { t, start: self.start(), end: self.end() });
        }
        let idx = self.points.partition_point(|p| p.t <= t);
        if idx == 0 {
            return Ok(self.points[0]);
        }
        let a = &self.points[idx - 1];
        if idx == self.points.len() || a.t == t {
            return Ok(*a);
        }
        let b = &self.points[idx];
        Ok(lerp_point(a, b, t))
    }

    /// Splits at gaps over [`MAX_RESAMPLE_GAP_S`] and resamples every piece onto
    /// the integer-second grid. Pieces with fewer than two samples are dropped.
    pub fn resample_1hz(&self) -> Vec<Trajectory> {
        let mut pieces: Vec<&[TrackPoint]> = Vec::new();
        let mut start = 0;
        for i in 1..self.points.len() {
            if self.points[i].t - self.points[i - 1].t > MAX_RESAMPLE_GAP_S {
                pieces.push(&self.points[start..i]);
                start = i;
            }
        }
        pieces.push(&self.points[start..]);

        pieces
            .into_iter()
            .filter_map(|piece| {
                let first = piece[0].t.ceil();
                let last = piece[piece.len() - 1].t.floor();
                if last - first < 1.0 {
                    return None;
                }
                let n = (last - first) as usize + 1;
                let mut out = Vec::with_capacity(n);
                let mut j = 0;
                for k in 0..n {
                    let t = first + k as f64;
                    while j + 1 < piece.len() && piece[j + 1].t <= t {
                        j += 1;
                    }
                    let p = if piece[j].t == t || j + 1 == piece.len() {
                        TrackPoint { t, ..piece[j] }
                    } else {
                        lerp_point(&piece[j], &piece[j + 1], t)
                    };
                    out.push(p);
                }
                Some(Trajectory { callsign: self.callsign.clone(), points: out })
            })
            .collect()
    }

    /// Returns a copy with every timestamp shifted by `dt`.
    pub fn shifted(&self, dt: f64) -> Trajectory {
        Trajectory {
            callsign: self.callsign.clone(),
            points: self.points.iter().map(|p| TrackPoint { t: p.t + dt, ..*p }).collect(),
        }
    }
}

fn lerp_point(a: &TrackPoint, b: &TrackPoint, t: f64) -> TrackPoint {
    let f = (t - a.t) / (b.t - a.t);
    let mix = |x: f64, y: f64| x + (y - x) * f;
    TrackPoint {
        t,
        lat: mix(a.lat, b.lat),
        lon: mix(a.lon, b.lon),
        alt: mix(a.alt, b.alt),
        gs: mix(a.gs, b.gs),
        hdg: wrap360(a.hdg + wrap180(b.hdg - a.hdg) * f),
    }
}

/// Position and velocity of one aircraft at an instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AircraftState {
    pub callsign: String,
    pub lat: f64,
    pub lon: f64,
    pub gs: f64,
    pub hdg: f64,
}

/// States of every flight whose track covers `t`, in input order.
pub fn states_at(trajs: &[Trajectory], t: f64) -> Vec<AircraftState> {
    trajs
        .iter()
        .filter_map(|tr| {
            let p = tr.state_at(t).ok()?;
            Some(AircraftState { callsign: tr.callsign.clone(), lat: p.lat, lon: p.lon, gs: p.gs, hdg: p.hdg })
        })
        .collect()
}

#[derive(Debug, Serialize, Deserialize)]
struct TrackRow {
    t: f64,
    callsign: String,
    lat: f64,
    lon: f64,
    alt_ft: f64,
    gs_kt: f64,
    hdg_deg: f64,
}

/// Reads a track CSV; trajectories come back sorted by callsign.
pub fn read_tracks_csv(path: impl AsRef<Path>) -> Result<Vec<Trajectory>> {
    let path = path.as_ref();
    let file = std::fs::File::open(path)?;
    read_tracks(file).map_err(|e| match e {
        Error::BadTrajectory(msg) => Error::format(path, msg),
        other => other,
    })
}

pub fn read_tracks<R: Read>(reader: R) -> Result<Vec<Trajectory>> {
    let mut rdr = csv::Reader::from_reader(reader);
    let headers = rdr.headers()?.clone();
    let expected = ["t", "callsign", "lat", "lon", "alt_ft", "gs_kt", "hdg_deg"];
    if headers.iter().ne(expected.iter().copied()) {
        return Err(Error::BadTrajectory(format!(
            "expected header {}, found {}",
            expected.join(","),
            headers.iter().collect::<Vec<_>>().join(",")
        )));
    }
    let mut by_callsign: BTreeMap<String, Vec<TrackPoint>> = BTreeMap::new();
    for row in rdr.deserialize() {
        let row: TrackRow = row?;
        by_callsign.entry(row.callsign).or_default().push(TrackPoint {
            t: row.t,
            lat: row.lat,
            lon: row.lon,
            alt: row.alt_ft,
            gs: row.gs_kt,
            hdg: wrap360(row.hdg_deg),
        });
    }
    by_callsign
        .into_iter()
        .map(|(cs, mut pts)| {
            pts.sort_by(|a, b| a.t.total_cmp(&b.t));
            pts.dedup_by(|b, a| a.t == b.t);
            Trajectory::new(cs, pts)
        })
        .collect()
}

pub fn write_tracks<W: Write>(writer: W, trajs: &[Trajectory]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    for traj in trajs {
        for p in &traj.points {
            wtr.serialize(TrackRow {
                t: p.t,
                callsign: traj.callsign.clone(),
                lat: p.lat,
                lon: p.lon,
                alt_ft: p.alt,
                gs_kt: p.gs,
                hdg_deg: p.hdg,
            })?;
        }
    }
    wtr.flush()?;
    Ok(())
}
