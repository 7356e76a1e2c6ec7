//! Structured per-sample context features.

use std::collections::HashMap;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geo::{cross_track_distance, haversine_distance, initial_bearing, LatLon};
use crate::phrase::ParsedCommand;
use crate::signal::ManeuverEvent;
use crate::track::{AircraftState, Channel, Trajectory};

/// Slot names in vector order.
pub const SLOT_NAMES: [&str; 24] = [
    "is_altitude_cmd",
    "velocity",
    "head",
    "cmd_value_norm",
    "wtc_l",
    "wtc_m",
    "wtc_h",
    "wtc_j",
    "cas",
    "cas_is_gs_proxy",
    "alt",
    "hdg_sin",
    "hdg_cos",
    "distance_to_airport",
    "bearing_to_airport",
    "traffic_density",
    "hour_sin",
    "hour_cos",
    "wind_speed",
    "visibility",
    "wx_present",
    "route_xtrack_nm",
    "nearest_wpt_nm",
    "wpt_present",
];

pub const N_SLOTS: usize = SLOT_NAMES.len();

pub fn slot_index(name: &str) -> Result<usize> {
    SLOT_NAMES.iter().position(|s| *s == name).ok_or_else(|| Error::BadSlot(name.to_owned()))
}

/// Hex SHA-256 of the comma-joined slot names.
pub fn schema_hash() -> String {
    hex::encode(Sha256::digest(SLOT_NAMES.join(",").as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredFeatures(pub Vec<f64>);

impl StructuredFeatures {
    pub fn get(&self, name: &str) -> Result<f64> {
        Ok(self.0[slot_index(name)?])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AirportRef {
    pub icao: String,
    pub lat: f64,
    pub lon: f64,
    /// feet
    pub elevation: f64,
}

impl AirportRef {
    pub fn position(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

impl Default for AirportRef {
    fn default() -> Self {
        AirportRef { icao: "WSSS".into(), lat: 1.3592, lon: 103.9894, elevation: 22.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeatherRecord {
    pub t: f64,
    pub wind_speed: f64,
    pub wind_dir: f64,
    pub visibility: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub name: String,
    pub lat: f64,
    pub lon: f64,
}

/// Wake turbulence category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Wtc {
    L,
    M,
    H,
    J,
}

impl std::str::FromStr for Wtc {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "L" => Ok(Wtc::L),
            "M" => Ok(Wtc::M),
            "H" => Ok(Wtc::H),
            "J" => Ok(Wtc::J),
            other => Err(Error::BadConfig(format!("unknown wake category {other:?}"))),
        }
    }
}

/// The command attributes the features need; available both from a parsed
/// command and, at inference time, from the maneuver it caused.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CommandSummary {
    pub ctype: Channel,
    pub value: f64,
}

impl From<&ParsedCommand> for CommandSummary {
    fn from(c: &ParsedCommand) -> Self {
        CommandSummary { ctype: c.ctype, value: c.value.unwrap_or_default() as f64 }
    }
}

impl From<&ManeuverEvent> for CommandSummary {
    fn from(e: &ManeuverEvent) -> Self {
        CommandSummary { ctype: e.channel, value: e.to_value }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FeatureConfig {
    pub density_radius_nm: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        FeatureConfig { density_radius_nm: 10.0 }
    }
}

/// Optional context tables joined into the features.
#[derive(Debug, Clone, Default)]
pub struct ContextData {
    pub airport: AirportRef,
    /// sorted by time
    pub weather: Vec<WeatherRecord>,
    pub waypoints: Vec<Waypoint>,
    pub type_wtc: HashMap<String, Wtc>,
    pub fleet: HashMap<String, String>,
    pub cfg: FeatureConfig,
}

impl ContextData {
    pub fn wtc_of(&self, callsign: &str) -> Wtc {
        self.fleet
            .get(callsign)
            .and_then(|ty| self.type_wtc.get(ty))
            .copied()
            .unwrap_or(Wtc::M)
    }

    /// Most recent observation at or before `t`.
    pub fn weather_at(&self, t: f64) -> Option<&WeatherRecord> {
        let idx = self.weather.partition_point(|w| w.t <= t);
        idx.checked_sub(1).map(|i| &self.weather[i])
    }
}

/// Number of other aircraft within `radius_nm` of `subject`.
pub fn traffic_density(subject: &str, at: LatLon, states: &[AircraftState], radius_nm: f64) -> Result<usize> {
    let mut n = 0;
    for s in states.iter().filter(|s| s.callsign != subject) {
        if haversine_distance(at, LatLon::new(s.lat, s.lon))? <= radius_nm {
            n += 1;
        }
    }
    Ok(n)
}

fn value_norm(ctype: Channel, v: f64) -> f64 {
    match ctype {
        Channel::Altitude => v / 10_000.0,
        Channel::Speed => v / 250.0,
        Channel::Heading => v / 360.0,
    }
}

pub fn assemble_features(
    cmd: CommandSummary,
    traj: &Trajectory,
    t: f64,
    ctx: &ContextData,
    all_states: &[AircraftState],
) -> Result<StructuredFeatures> {
    let p = traj.state_at(t)?;
    let pos = LatLon::new(p.lat, p.lon);
    let apt = ctx.airport.position();
    let mut v = vec![0.0; N_SLOTS];
    let mut set = |name: &str, x: f64| v[slot_index(name).expect("known slot")] = x;

    set("is_altitude_cmd", (cmd.ctype == Channel::Altitude) as u8 as f64);
    set("velocity", (cmd.ctype == Channel::Speed) as u8 as f64);
    set("head", (cmd.ctype == Channel::Heading) as u8 as f64);
    set("cmd_value_norm", value_norm(cmd.ctype, cmd.value));
    let wtc = match ctx.wtc_of(&traj.callsign) {
        Wtc::L => "wtc_l",
        Wtc::M => "wtc_m",
        Wtc::H => "wtc_h",
        Wtc::J => "wtc_j",
    };
    set(wtc, 1.0);
    // ground speed stands in for calibrated airspeed
    set("cas", p.gs);
    set("cas_is_gs_proxy", 1.0);
    set("alt", p.alt);
    let h = p.hdg.to_radians();
    set("hdg_sin", h.sin());
    set("hdg_cos", h.cos());
    set("distance_to_airport", haversine_distance(pos, apt)?);
    set("bearing_to_airport", if pos == apt { 0.0 } else { initial_bearing(pos, apt)? });
    set(
        "traffic_density",
        traffic_density(&traj.callsign, pos, all_states, ctx.cfg.density_radius_nm)? as f64,
    );
    let hour = t.rem_euclid(86_400.0) / 3600.0;
    let ang = hour / 24.0 * std::f64::consts::TAU;
    set("hour_sin", ang.sin());
    set("hour_cos", ang.cos());
    if let Some(wx) = ctx.weather_at(t) {
        set("wind_speed", wx.wind_speed);
        set("visibility", wx.visibility);
        set("wx_present", 1.0);
    }
    if ctx.waypoints.len() >= 2 {
        let mut dists: Vec<(f64, usize)> = ctx
            .waypoints
            .iter()
            .enumerate()
            .map(|(i, w)| Ok((haversine_distance(pos, LatLon::new(w.lat, w.lon))?, i)))
            .collect::<Result<_>>()?;
        dists.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let a = &ctx.waypoints[dists[0].1];
        let b = &ctx.waypoints[dists[1].1];
        let (la, lb) = (LatLon::new(a.lat, a.lon), LatLon::new(b.lat, b.lon));
        let xt = if la == lb { dists[0].0 } else { cross_track_distance(pos, la, lb)? };
        set("route_xtrack_nm", xt);
        set("nearest_wpt_nm", dists[0].0);
        set("wpt_present", 1.0);
    }
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("structured features"));
    }
    Ok(StructuredFeatures(v))
}

fn read_rows<T: for<'de> Deserialize<'de>, R: Read>(r: R) -> Result<Vec<T>> {
    let mut rdr = csv::Reader::from_reader(r);
    Ok(rdr.deserialize().collect::<std::result::Result<_, _>>()?)
}

/// `t,wind_speed,wind_dir,visibility`
pub fn read_weather(path: impl AsRef<Path>) -> Result<Vec<WeatherRecord>> {
    let mut rows: Vec<WeatherRecord> = read_rows(std::fs::File::open(path)?)?;
    for w in &rows {
        if w.wind_speed < 0.0 || w.visibility < 0.0 || !(0.0..360.0).contains(&w.wind_dir) {
            return Err(Error::BadConfig(format!("weather record out of range at t={}", w.t)));
        }
    }
    rows.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(rows)
}

/// `name,lat,lon`
pub fn read_waypoints(path: impl AsRef<Path>) -> Result<Vec<Waypoint>> {
    let rows: Vec<Waypoint> = read_rows(std::fs::File::open(path)?)?;
    for w in &rows {
        LatLon::new(w.lat, w.lon).validate()?;
    }
    Ok(rows)
}

/// `type,wtc`
pub fn read_aircraft_types(path: impl AsRef<Path>) -> Result<HashMap<String, Wtc>> {
    #[derive(Deserialize)]
    struct Row {
        #[serde(rename = "type")]
        ty: String,
        wtc: String,
    }
    let rows: Vec<Row> = read_rows(std::fs::File::open(path)?)?;
    rows.into_iter().map(|r| Ok((r.ty, r.wtc.parse()?))).collect()
}

/// `callsign,type`
pub fn read_fleet(path: impl AsRef<Path>) -> Result<HashMap<String, String>> {
    #[derive(Deserialize)]
    struct Row {
        callsign: String,
        #[serde(rename = "type")]
        ty: String,
    }
    let rows: Vec<Row> = read_rows(std::fs::File::open(path)?)?;
    Ok(rows.into_iter().map(|r| (r.callsign, r.ty)).collect())
}
