//! Command-to-maneuver matching and dataset materialization.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::BufReader;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::{assemble_features, schema_hash, CommandSummary, ContextData, FeatureConfig, N_SLOTS, SLOT_NAMES};
use crate::io::{f32s_from_le_bytes, f32s_to_le_bytes, f64s_from_le_bytes, f64s_to_le_bytes, write_atomic};
use crate::phrase::ParsedCommand;
use crate::raster::{render_history, render_snapshot, RasterConfig};
use crate::signal::ManeuverEvent;
use crate::track::{states_at, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AlignmentConfig {
    pub window_before_s: f64,
    pub window_after_s: f64,
    pub require_type_match: bool,
}

impl Default for AlignmentConfig {
    fn default() -> Self {
        AlignmentConfig { window_before_s: 15.0, window_after_s: 60.0, require_type_match: true }
    }
}

impl AlignmentConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.window_before_s >= 0.0 && self.window_after_s >= 0.0) {
            return Err(Error::BadConfig("alignment windows must be non-negative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchedPair {
    pub cmd: ParsedCommand,
    pub event: ManeuverEvent,
    /// onset minus command end
    pub time_offset_s: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Alignment {
    /// sorted by command start
    pub pairs: Vec<MatchedPair>,
    pub unmatched_cmds: Vec<ParsedCommand>,
    pub unmatched_events: Vec<ManeuverEvent>,
}

/// Candidate (|gap|, command index, event index) triples within the window.
fn candidates(cmds: &[ParsedCommand], events: &[ManeuverEvent], cfg: &AlignmentConfig) -> Vec<(f64, usize, usize)> {
    let mut by_callsign: HashMap<&str, Vec<usize>> = HashMap::new();
    for (j, e) in events.iter().enumerate() {
        by_callsign.entry(e.callsign.as_str()).or_default().push(j);
    }
    let mut out = Vec::new();
    for (i, c) in cmds.iter().enumerate() {
        let end = c.end_t();
        for &j in by_callsign.get(c.callsign.as_str()).map_or(&[][..], |v| v.as_slice()) {
            let e = &events[j];
            if cfg.require_type_match && e.channel != c.ctype {
                continue;
            }
            let gap = e.onset_t - end;
            if gap >= -cfg.window_before_s && gap <= cfg.window_after_s {
                out.push((gap.abs(), i, j));
            }
        }
    }
    out
}

/// Greedy one-to-one matching, smallest absolute gap first.
pub fn align(cmds: &[ParsedCommand], events: &[ManeuverEvent], cfg: &AlignmentConfig) -> Alignment {
    let mut cand = candidates(cmds, events, cfg);
    cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut cmd_to = vec![None; cmds.len()];
    let mut event_used = vec![false; events.len()];
    for (_, i, j) in cand {
        if cmd_to[i].is_none() && !event_used[j] {
            cmd_to[i] = Some(j);
            event_used[j] = true;
        }
    }
    let mut out = Alignment::default();
    for (i, c) in cmds.iter().enumerate() {
        match cmd_to[i] {
            Some(j) => {
                let event = events[j].clone();
                let time_offset_s = event.onset_t - c.end_t();
                out.pairs.push(MatchedPair { cmd: c.clone(), event, time_offset_s });
            }
            None => out.unmatched_cmds.push(c.clone()),
        }
    }
    out.unmatched_events = events.iter().zip(&event_used).filter(|(_, u)| !**u).map(|(e, _)| e.clone()).collect();
    out.pairs.sort_by(|a, b| a.cmd.start_t.total_cmp(&b.cmd.start_t).then(a.cmd.callsign.cmp(&b.cmd.callsign)));
    out
}

pub const SEQ_CHANNELS: [&str; 4] = ["alt", "gs", "hdg_sin", "hdg_cos"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
}

/// Everything the model consumes for one maneuver, unstandardized.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInputs {
    pub features: Vec<f64>,
    /// `seq_len × 4`, row-major
    pub sequence: Vec<f64>,
    /// `height × width × 3`
    pub history: Vec<f32>,
    pub snapshot: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleMeta {
    pub id: usize,
    pub callsign: String,
    /// callsign plus day index; never split across train and validation
    pub group: String,
    pub split: Split,
    pub cmd: ParsedCommand,
    pub event: ManeuverEvent,
    pub time_offset_s: f64,
    pub duration_s: f64,
    pub features: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LifecycleSample {
    pub meta: SampleMeta,
    pub inputs: SampleInputs,
}

/// Per-column mean and spread; columns with no spread get unit scale.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Moments {
    /// Population moments of `rows` (each of width `dim`), summed in order.
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; dim];
        for r in &rows {
            for (m, x) in mean.iter_mut().zip(r.iter()) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; dim];
        for r in &rows {
            for k in 0..dim {
                var[k] += (r[k] - mean[k]).powi(2);
            }
        }
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-12 { s } else { 1.0 }
            })
            .collect();
        Moments { mean, std }
    }

    pub fn standardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(k, x)| (x - self.mean[k % self.mean.len()]) / self.std[k % self.std.len()]).collect()
    }

    pub fn destandardize(&self, row: &[f64]) -> Vec<f64> {
        row.iter().enumerate().map(|(k, z)| z * self.std[k % self.std.len()] + self.mean[k % self.mean.len()]).collect()
    }
}

/// Training-split normalization for features, sequence channels and targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub features: Moments,
    pub sequence: Moments,
    /// [time offset, duration]
    pub targets: Moments,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DatasetConfig {
    pub seq_len: usize,
    pub val_frac: f64,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig { seq_len: 60, val_frac: 0.2 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSchema {
    pub feature_names: Vec<String>,
    pub schema_hash: String,
    pub seq_len: usize,
    pub seq_channels: Vec<String>,
    /// [height, width, channels]
    pub image_shape: [usize; 3],
    pub norm: NormStats,
    pub n_train: usize,
    pub n_val: usize,
    pub dropped: usize,
    pub split_seed: u64,
    pub dataset: DatasetConfig,
    pub alignment: AlignmentConfig,
    pub raster: RasterConfig,
    pub features: FeatureConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub schema: DatasetSchema,
    pub samples: Vec<LifecycleSample>,
}

/// Sequence of (alt, gs, sin hdg, cos hdg) at 1 Hz whose last row is at `t`.
pub fn sequence_at(traj: &Trajectory, t: f64, seq_len: usize) -> Result<Vec<f64>> {
    let first = t - (seq_len as f64 - 1.0);
    if !(traj.covers(first) && traj.covers(t)) {
        return Err(Error::SampleDropped(format!(
            "{}: track does not cover the {seq_len} s sequence ending at {t}",
            traj.callsign
        )));
    }
    let mut out = Vec::with_capacity(seq_len * 4);
    for k in 0..seq_len {
        let p = traj.state_at(first + k as f64)?;
        let h = p.hdg.to_radians();
        out.extend_from_slice(&[p.alt, p.gs, h.sin(), h.cos()]);
    }
    Ok(out)
}

/// Features, sequence and both images for a maneuver, all taken at its onset.
pub fn sample_inputs(
    cmd: CommandSummary,
    event: &ManeuverEvent,
    trajs: &[Trajectory],
    ctx: &ContextData,
    raster: &RasterConfig,
    seq_len: usize,
) -> Result<SampleInputs> {
    let traj = trajs
        .iter()
        .find(|t| t.callsign == event.callsign)
        .ok_or_else(|| Error::SampleDropped(format!("no track for {}", event.callsign)))?;
    let t = event.onset_t;
    let sequence = sequence_at(traj, t, seq_len)?;
    let states = states_at(trajs, t);
    let features = assemble_features(cmd, traj, t, ctx, &states)?;
    let history = render_history(traj, t, raster)?;
    let snapshot = render_snapshot(&states, &traj.callsign, t, raster)?;
    Ok(SampleInputs { features: features.0, sequence, history: history.pixels, snapshot: snapshot.pixels })
}

fn group_key(callsign: &str, t: f64) -> String {
    format!("{callsign}/{}", (t / 86_400.0).floor() as i64)
}

/// Assigns whole groups to validation until `round(val_frac · n)` samples are
/// reached without overshooting; group order is a seeded shuffle.
fn split_groups(groups: &[String], val_frac: f64, seed: u64) -> Vec<Split> {
    let mut sizes: BTreeMap<&str, usize> = BTreeMap::new();
    for g in groups {
        *sizes.entry(g.as_str()).or_default() += 1;
    }
    let mut order: Vec<(&str, usize)> = sizes.into_iter().collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let target = (val_frac * groups.len() as f64).round() as usize;
    let mut val = std::collections::HashSet::new();
    let mut n_val = 0;
    for (g, size) in order {
        if n_val == target {
            break;
        }
        if n_val + size <= target {
            val.insert(g);
            n_val += size;
        }
    }
    groups.iter().map(|g| if val.contains(g.as_str()) { Split::Val } else { Split::Train }).collect()
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions<'a> {
    pub ctx: &'a ContextData,
    pub raster: &'a RasterConfig,
    pub dataset: &'a DatasetConfig,
    pub alignment: &'a AlignmentConfig,
    pub seed: u64,
}

/// Materializes one sample per pair, splits by flight group and fits
/// normalization on the training split only.
pub fn build_dataset(pairs: &[MatchedPair], trajs: &[Trajectory], opts: BuildOptions<'_>) -> Result<Dataset> {
    opts.raster.validate()?;
    let mut order: Vec<&MatchedPair> = pairs.iter().collect();
    order.sort_by(|a, b| {
        a.event.callsign.cmp(&b.event.callsign).then(a.event.onset_t.total_cmp(&b.event.onset_t))
    });
    let built = crate::par::map(&order, |p| {
        sample_inputs(CommandSummary::from(&p.cmd), &p.event, trajs, opts.ctx, opts.raster, opts.dataset.seq_len)
    });
    let mut kept = Vec::with_capacity(order.len());
    let mut dropped = 0;
    for (p, r) in order.into_iter().zip(built) {
        match r {
            Ok(inputs) => kept.push((p, inputs)),
            Err(e @ (Error::SampleDropped(_) | Error::EmptyWindow | Error::OutOfRange { .. })) => {
                log::warn!("{e}");
                dropped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    if kept.is_empty() {
        return Err(Error::NoData);
    }
    let groups: Vec<String> = kept.iter().map(|(p, _)| group_key(&p.event.callsign, p.event.onset_t)).collect();
    let splits = split_groups(&groups, opts.dataset.val_frac, opts.seed);

    let samples: Vec<LifecycleSample> = kept
        .into_iter()
        .zip(groups)
        .zip(splits)
        .enumerate()
        .map(|(id, (((p, inputs), group), split))| LifecycleSample {
            meta: SampleMeta {
                id,
                callsign: p.event.callsign.clone(),
                group,
                split,
                cmd: p.cmd.clone(),
                event: p.event.clone(),
                time_offset_s: p.time_offset_s,
                duration_s: p.cmd.duration_s,
                features: inputs.features.clone(),
            },
            inputs,
        })
        .collect();

    let norm = fit_norm(&samples);
    let n_train = samples.iter().filter(|s| s.meta.split == Split::Train).count();
    Ok(Dataset {
        schema: DatasetSchema {
            feature_names: SLOT_NAMES.iter().map(|s| s.to_string()).collect(),
            schema_hash: schema_hash(),
            seq_len: opts.dataset.seq_len,
            seq_channels: SEQ_CHANNELS.iter().map(|s| s.to_string()).collect(),
            image_shape: [opts.raster.height, opts.raster.width, 3],
            norm,
            n_train,
            n_val: samples.len() - n_train,
            dropped,
            split_seed: opts.seed,
            dataset: opts.dataset.clone(),
            alignment: opts.alignment.clone(),
            raster: opts.raster.clone(),
            features: opts.ctx.cfg.clone(),
        },
        samples,
    })
}

/// Moments over the training split only.
pub fn fit_norm(samples: &[LifecycleSample]) -> NormStats {
    let train: Vec<&LifecycleSample> = samples.iter().filter(|s| s.meta.split == Split::Train).collect();
    let features = Moments::fit(train.iter().map(|s| s.inputs.features.as_slice()), N_SLOTS);
    let sequence = Moments::fit(train.iter().flat_map(|s| s.inputs.sequence.chunks_exact(4)), 4);
    let targets: Vec<[f64; 2]> = train.iter().map(|s| [s.meta.time_offset_s, s.meta.duration_s]).collect();
    let targets = Moments::fit(targets.iter().map(|t| t.as_slice()), 2);
    NormStats { features, sequence, targets }
}

impl Dataset {
    pub fn split(&self, which: Split) -> Vec<&LifecycleSample> {
        self.samples.iter().filter(|s| s.meta.split == which).collect()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn write(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        fs::create_dir_all(dir.join("images"))?;
        let metas: Vec<&SampleMeta> = self.samples.iter().map(|s| &s.meta).collect();
        write_atomic(dir.join("index.jsonl"), |w| crate::io::write_jsonl(w, &metas))?;
        let seq: Vec<f64> = self.samples.iter().flat_map(|s| s.inputs.sequence.iter().copied()).collect();
        write_atomic(dir.join("sequences.bin"), |w| Ok(w.write_all(&f64s_to_le_bytes(&seq))?))?;
        for (name, pick) in [("history", true), ("snapshot", false)] {
            let px: Vec<f32> = self
                .samples
                .iter()
                .flat_map(|s| if pick { s.inputs.history.iter() } else { s.inputs.snapshot.iter() }.copied())
                .collect();
            write_atomic(dir.join("images").join(format!("{name}.bin")), |w| Ok(w.write_all(&f32s_to_le_bytes(&px))?))?;
        }
        crate::io::write_json_pretty(dir.join("schema.json"), &self.schema)
    }

    pub fn read(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref();
        let schema: DatasetSchema = crate::io::read_json(dir.join("schema.json"))?;
        if schema.schema_hash != schema_hash() {
            return Err(Error::SchemaMismatch(format!("dataset feature schema {} differs from {}", schema.schema_hash, schema_hash())));
        }
        let metas: Vec<SampleMeta> = crate::io::read_jsonl(BufReader::new(fs::File::open(dir.join("index.jsonl"))?))?;
        let n = metas.len();
        let seq = f64s_from_le_bytes(&fs::read(dir.join("sequences.bin"))?)?;
        let seq_w = schema.seq_len * 4;
        let img_w = schema.image_shape.iter().product::<usize>();
        let hist = f32s_from_le_bytes(&fs::read(dir.join("images").join("history.bin"))?)?;
        let snap = f32s_from_le_bytes(&fs::read(dir.join("images").join("snapshot.bin"))?)?;
        if seq.len() != n * seq_w || hist.len() != n * img_w || snap.len() != n * img_w {
            return Err(Error::format(dir, "binary blobs do not match the sample index"));
        }
        let samples = metas
            .into_iter()
            .enumerate()
            .map(|(i, meta)| {
                if meta.features.len() != N_SLOTS {
                    return Err(Error::SchemaMismatch(format!("sample {} has {} features", meta.id, meta.features.len())));
                }
                let inputs = SampleInputs {
                    features: meta.features.clone(),
                    sequence: seq[i * seq_w..(i + 1) * seq_w].to_vec(),
                    history: hist[i * img_w..(i + 1) * img_w].to_vec(),
                    snapshot: snap[i * img_w..(i + 1) * img_w].to_vec(),
                };
                Ok(LifecycleSample { meta, inputs })
            })
            .collect::<Result<_>>()?;
        Ok(Dataset { schema, samples })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phrase::{CommandFlags, Direction};
    use crate::track::Channel;

    fn cmd(cs: &str, ctype: Channel, start: f64, dur: f64) -> ParsedCommand {
        ParsedCommand {
            callsign: cs.into(),
            ctype,
            value: Some(210),
            direction: Direction::None,
            start_t: start,
            duration_s: dur,
            flags: CommandFlags::default(),
        }
    }

    fn ev(cs: &str, ch: Channel, onset: f64) -> ManeuverEvent {
        ManeuverEvent { callsign: cs.into(), channel: ch, onset_t: onset, from_value: 250.0, to_value: 210.0 }
    }

    #[test]
    fn speed_command_pairs_with_later_deceleration() {
        let c = cmd("QFA1", Channel::Speed, 50_786.0, 3.0);
        let a = align(&[c], &[ev("QFA1", Channel::Speed, 50_811.0)], &AlignmentConfig::default());
        assert_eq!(a.pairs.len(), 1);
        assert!((a.pairs[0].time_offset_s - 22.0).abs() < 1e-9);
    }

    #[test]
    fn no_candidate_leaves_command_unmatched() {
        let c = cmd("QFA1", Channel::Speed, 100.0, 3.0);
        let a = align(&[c], &[ev("BAW1", Channel::Speed, 110.0), ev("QFA1", Channel::Heading, 110.0)], &AlignmentConfig::default());
        assert!(a.pairs.is_empty());
        assert_eq!(a.unmatched_cmds.len(), 1);
        assert_eq!(a.unmatched_events.len(), 2);
    }

    #[test]
    fn closer_command_wins_conflict() {
        let near = cmd("QFA1", Channel::Speed, 92.0, 3.0);
        let far = cmd("QFA1", Channel::Speed, 88.0, 3.0);
        let a = align(&[far.clone(), near.clone()], &[ev("QFA1", Channel::Speed, 100.0)], &AlignmentConfig::default());
        assert_eq!(a.pairs.len(), 1);
        assert_eq!(a.pairs[0].cmd, near);
        assert_eq!(a.unmatched_cmds, vec![far]);
    }

    #[test]
    fn type_matching_can_be_disabled() {
        let c = cmd("QFA1", Channel::Speed, 100.0, 3.0);
        let cfg = AlignmentConfig { require_type_match: false, ..Default::default() };
        assert_eq!(align(&[c], &[ev("QFA1", Channel::Heading, 110.0)], &cfg).pairs.len(), 1);
    }

    #[test]
    fn split_respects_groups_and_size() {
        let groups: Vec<String> = (0..100).map(|i| format!("G{}", i / 2)).collect();
        let s = split_groups(&groups, 0.2, 7);
        assert_eq!(s.iter().filter(|x| **x == Split::Val).count(), 20);
        for pair in s.chunks(2) {
            assert_eq!(pair[0], pair[1]);
        }
        assert_eq!(s, split_groups(&groups, 0.2, 7));
    }

    #[test]
    fn moments_round_trip() {
        let rows = [[1.0, 5.0], [3.0, 5.0], [8.0, 5.0]];
        let m = Moments::fit(rows.iter().map(|r| r.as_slice()), 2);
        assert_eq!(m.std[1], 1.0);
        let z = m.standardize(&rows[2]);
        let back = m.destandardize(&z);
        assert!((back[0] - 8.0).abs() < 1e-12 && (back[1] - 5.0).abs() < 1e-12);
    }
}
