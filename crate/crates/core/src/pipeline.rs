//! Stage functions shared by the CLI and the in-process end-to-end run.

use std::path::Path;

use crate::align::{align, build_dataset, Alignment, BuildOptions, Dataset, Split};
use crate::config::RunConfig;
use crate::ensemble::{evaluation_set, Ensemble, LabelRow, PredictionRow};
use crate::error::Result;
use crate::features::{read_aircraft_types, read_fleet, read_waypoints, read_weather, AirportRef, ContextData};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::nn::train::{model_input, train, Category, TrainOutcome};
use crate::nn::{LossVariant, Mode};
use crate::phrase::{parse_transcript, read_transcript, CallsignTable, ParseRecord, ParsedCommand, TranscriptUtterance};
use crate::signal::{analyze_all, ManeuverEvent};
use crate::synth::{files, Scenario};
use crate::track::{read_tracks_csv, Trajectory};

pub const WAYPOINTS: &str = "waypoints.csv";

/// Everything the pipeline reads from a scenario directory.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub trajectories: Vec<Trajectory>,
    pub transcript: Vec<TranscriptUtterance>,
    pub callsigns: CallsignTable,
    pub ctx: ContextData,
}

impl Inputs {
    pub fn from_scenario(sc: &Scenario, cfg: &RunConfig) -> Self {
        Inputs {
            trajectories: sc.trajectories.clone(),
            transcript: sc.transcript.clone(),
            callsigns: sc.callsigns.clone(),
            ctx: ContextData {
                airport: sc.config.airport.clone(),
                weather: sc.weather.clone(),
                waypoints: Vec::new(),
                type_wtc: sc.aircraft_types.iter().cloned().collect(),
                fleet: sc.fleet.iter().cloned().collect(),
                cfg: cfg.features.clone(),
            },
        }
    }

    pub fn load(dir: impl AsRef<Path>, cfg: &RunConfig) -> Result<Self> {
        let dir = dir.as_ref();
        let transcript = read_transcript(std::io::BufReader::new(std::fs::File::open(dir.join(files::TRANSCRIPT))?))?;
        Ok(Inputs {
            trajectories: read_tracks_csv(dir.join(files::TRACKS))?,
            transcript,
            callsigns: CallsignTable::load(dir.join(files::CALLSIGNS))?,
            ctx: load_context(dir, cfg)?,
        })
    }
}

/// Context tables from a directory; every file is optional.
pub fn load_context(dir: impl AsRef<Path>, cfg: &RunConfig) -> Result<ContextData> {
    let dir = dir.as_ref();
    let opt = |name: &str| Some(dir.join(name)).filter(|p| p.exists());
    let mut weather = match opt(files::WEATHER) {
        Some(p) => read_weather(p)?,
        None => Vec::new(),
    };
    weather.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(ContextData {
        airport: match opt(files::AIRPORT) {
            Some(p) => crate::io::read_json(p)?,
            None => AirportRef::default(),
        },
        weather,
        waypoints: opt(WAYPOINTS).map(read_waypoints).transpose()?.unwrap_or_default(),
        type_wtc: opt(files::AIRCRAFT_TYPES).map(read_aircraft_types).transpose()?.unwrap_or_default(),
        fleet: opt(files::FLEET).map(read_fleet).transpose()?.unwrap_or_default(),
        cfg: cfg.features.clone(),
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub events: Vec<ManeuverEvent>,
    /// callsigns without any altitude platform, dropped as continuous descents
    pub cdo_excluded: Vec<String>,
}

pub fn detect(trajs: &[Trajectory], cfg: &RunConfig) -> Result<Detection> {
    let mut events = Vec::new();
    let mut cdo_excluded = Vec::new();
    for a in analyze_all(trajs, &cfg.detector)? {
        if a.cdo_like {
            log::info!("{}: no level segment, excluded as continuous descent", a.callsign);
            cdo_excluded.push(a.callsign);
        } else {
            events.extend(a.events);
        }
    }
    Ok(Detection { events, cdo_excluded })
}

/// Parse records for every utterance plus the commands that survive the filters.
pub fn parse(utts: &[TranscriptUtterance], table: &CallsignTable, cfg: &RunConfig) -> Result<(Vec<ParsedCommand>, Vec<ParseRecord>)> {
    let records = parse_transcript(utts, table, &cfg.parser.phraseology()?);
    let kept = records
        .iter()
        .filter(|r| !r.excluded)
        .filter_map(|r| r.outcome.as_ref().ok().cloned())
        .collect();
    Ok((kept, records))
}

pub fn build(
    cmds: &[ParsedCommand],
    events: &[ManeuverEvent],
    trajs: &[Trajectory],
    ctx: &ContextData,
    cfg: &RunConfig,
) -> Result<(Alignment, Dataset)> {
    let alignment = align(cmds, events, &cfg.alignment);
    let opts = BuildOptions {
        ctx,
        raster: &cfg.raster,
        dataset: &cfg.dataset,
        alignment: &cfg.alignment,
        seed: cfg.seed,
    };
    let ds = build_dataset(&alignment.pairs, trajs, opts)?;
    Ok((alignment, ds))
}

/// One training run per loss variant and the ensemble of their best checkpoints.
pub fn train_ensemble(ds: &Dataset, cfg: &RunConfig) -> Result<(Vec<TrainOutcome>, Ensemble)> {
    let mut runs = Vec::with_capacity(LossVariant::ALL.len());
    for variant in LossVariant::ALL {
        let tcfg = crate::nn::train::TrainConfig { loss_variant: variant, ..cfg.train.clone() };
        runs.push(train(ds, &cfg.model, &tcfg)?);
    }
    let ens = Ensemble::from_runs(&runs, cfg.ensemble)?;
    Ok((runs, ens))
}

/// Ensemble predictions for one split (or all samples), with the labels attached.
pub fn predict(ens: &Ensemble, ds: &Dataset, split: Option<Split>) -> Result<Vec<PredictionRow>> {
    let samples: Vec<_> = ds.samples.iter().filter(|s| split.is_none_or(|w| s.meta.split == w)).collect();
    let inputs: Vec<_> = samples.iter().map(|s| &s.inputs).collect();
    let preds = ens.predict(&inputs, ds.schema.image_shape)?;
    Ok(samples
        .iter()
        .zip(preds)
        .map(|(s, p)| PredictionRow {
            callsign: s.meta.callsign.clone(),
            onset_t: s.meta.event.onset_t,
            offset_hat: p[0],
            duration_hat: p[1],
            offset_true: Some(s.meta.time_offset_s),
            duration_true: Some(s.meta.duration_s),
        })
        .collect())
}

/// Self-attention weights of one sample, `[layer][head][row][col]`.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AttentionRecord {
    pub callsign: String,
    pub onset_t: f64,
    pub epoch: usize,
    pub variant: LossVariant,
    pub attention: Vec<Vec<Vec<Vec<f64>>>>,
}

/// Attention maps from the first overall-category member of the ensemble.
pub fn attention_maps(ens: &Ensemble, ds: &Dataset, split: Option<Split>) -> Result<Vec<AttentionRecord>> {
    let member = ens
        .members
        .iter()
        .find(|m| m.category == Category::Overall)
        .ok_or_else(|| crate::Error::IncompleteEnsemble(Category::Overall.name().into()))?;
    let ck = &member.checkpoint;
    let samples: Vec<_> = ds.samples.iter().filter(|s| split.is_none_or(|w| s.meta.split == w)).collect();
    crate::par::map(&samples, |s| {
        let x = model_input(&s.inputs, &ck.norm, ds.schema.image_shape);
        let f = ens.model().forward(&ck.params, &x, Mode::Eval)?;
        Ok(AttentionRecord {
            callsign: s.meta.callsign.clone(),
            onset_t: s.meta.event.onset_t,
            epoch: ck.epoch,
            variant: ck.variant,
            attention: f.attention.to_nested(),
        })
    })
    .into_iter()
    .collect()
}

pub fn labels(ds: &Dataset, split: Option<Split>) -> Vec<LabelRow> {
    ds.samples
        .iter()
        .filter(|s| split.is_none_or(|w| s.meta.split == w))
        .map(|s| LabelRow {
            callsign: s.meta.callsign.clone(),
            onset_t: s.meta.event.onset_t,
            offset_true: s.meta.time_offset_s,
            duration_true: s.meta.duration_s,
        })
        .collect()
}

pub fn evaluate(rows: &[PredictionRow]) -> Result<MetricsReport> {
    Ok(compute_metrics(&evaluation_set(rows)?))
}

#[derive(Debug, Clone)]
pub struct EndToEnd {
    pub detection: Detection,
    pub commands: Vec<ParsedCommand>,
    pub alignment: Alignment,
    pub dataset: Dataset,
    pub runs: Vec<TrainOutcome>,
    pub ensemble: Ensemble,
    pub predictions: Vec<PredictionRow>,
    pub metrics: MetricsReport,
}

/// Every stage in memory, scored on the validation split.
pub fn run_end_to_end(inputs: &Inputs, cfg: &RunConfig) -> Result<EndToEnd> {
    let detection = detect(&inputs.trajectories, cfg)?;
    let (commands, _) = parse(&inputs.transcript, &inputs.callsigns, cfg)?;
    let (alignment, dataset) = build(&commands, &detection.events, &inputs.trajectories, &inputs.ctx, cfg)?;
    let (runs, ensemble) = train_ensemble(&dataset, cfg)?;
    let predictions = predict(&ensemble, &dataset, Some(Split::Val))?;
    let metrics = evaluate(&predictions)?;
    Ok(EndToEnd { detection, commands, alignment, dataset, runs, ensemble, predictions, metrics })
}
