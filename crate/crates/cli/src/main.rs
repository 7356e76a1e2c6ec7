use std::path::{Path, PathBuf};
use std::process::ExitCode;

use atc_lifecycle::align::{Dataset, Split};
use atc_lifecycle::config::RunConfig;
use atc_lifecycle::ensemble::{
    attach_labels, read_labels, read_predictions, write_labels, write_predictions, Ensemble,
};
use atc_lifecycle::phrase::{read_transcript, CallsignTable, ParsedCommand};
use atc_lifecycle::pipeline;
use atc_lifecycle::raster::{render_history, render_snapshot};
use atc_lifecycle::signal::{read_events_jsonl, write_events_jsonl};
use atc_lifecycle::synth::{generate_scenario, write_scenario};
use atc_lifecycle::track::{read_tracks_csv, states_at};
use atc_lifecycle::workload::{
    intervals_from_predictions, reconstruct, span_of, timeline_svg, workload_report, Source, TimelineItem,
};
use atc_lifecycle::{io, Error};
use clap::{Args, Parser, Subcommand, ValueEnum};

pub const RESOLVED_CONFIG: &str = "run_config.toml";

#[derive(Debug, Parser)]
#[command(name = "atclife", version, about = "Controller command lifecycle reconstruction")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Debug, Args)]
struct Global {
    /// run configuration (TOML)
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// master seed, overriding the configuration
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// worker threads for the data-parallel stages
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// output file or directory of the subcommand
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SplitArg {
    Train,
    Val,
    All,
}

impl SplitArg {
    fn split(self) -> Option<Split> {
        match self {
            SplitArg::Train => Some(Split::Train),
            SplitArg::Val => Some(Split::Val),
            SplitArg::All => None,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic scenario directory
    Synth {
        #[arg(long)]
        flights: Option<usize>,
    },
    /// Detect maneuver onsets in a tracks CSV
    Detect {
        #[arg(long)]
        tracks: PathBuf,
    },
    /// Parse a transcript into kept commands
    Parse {
        #[arg(long)]
        transcript: PathBuf,
        #[arg(long)]
        callsigns: PathBuf,
    },
    /// Pair commands with maneuvers and build the dataset directory
    Align {
        #[arg(long)]
        commands: PathBuf,
        #[arg(long)]
        events: PathBuf,
        #[arg(long)]
        tracks: PathBuf,
        /// directory with weather, fleet, aircraft types and airport files
        #[arg(long)]
        context: Option<PathBuf>,
    },
    /// Render the history and snapshot images for one aircraft
    Render {
        #[arg(long)]
        tracks: PathBuf,
        #[arg(long)]
        callsign: String,
        #[arg(long)]
        t: f64,
    },
    /// Train both loss variants and write the ensemble
    Train {
        #[arg(long)]
        dataset: PathBuf,
    },
    /// Ensemble predictions for a dataset split
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long, value_enum, default_value = "val")]
        split: SplitArg,
        /// directory for per-flight SVG timelines
        #[arg(long)]
        plot: Option<PathBuf>,
        /// JSON-lines file of per-sample attention maps
        #[arg(long)]
        attention: Option<PathBuf>,
    },
    /// Score a predictions file
    Evaluate {
        #[arg(long)]
        pred: PathBuf,
        /// labels CSV replacing the truth columns of the predictions
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Windowed workload report from predictions
    Workload {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        window: Option<f64>,
    },
}

/// Paths created by this run, removed again if it fails.
#[derive(Default)]
struct Outputs {
    created: Vec<PathBuf>,
}

impl Outputs {
    fn file(&mut self, p: impl Into<PathBuf>) -> PathBuf {
        let p = p.into();
        if !p.exists() {
            self.created.push(p.clone());
        }
        p
    }

    fn record(&mut self, p: PathBuf) {
        self.created.push(p);
    }

    fn dir(&mut self, p: impl Into<PathBuf>) -> Result<PathBuf, Error> {
        let p = p.into();
        if !p.exists() {
            std::fs::create_dir_all(&p)?;
            self.created.push(p.clone());
        }
        Ok(p)
    }

    fn remove_all(&self) {
        for p in self.created.iter().rev() {
            let _ = if p.is_dir() { std::fs::remove_dir_all(p) } else { std::fs::remove_file(p) };
        }
    }
}

fn out_path(g: &Global) -> Result<PathBuf, Error> {
    g.out.clone().ok_or_else(|| Error::BadConfig("--out is required for this subcommand".into()))
}

/// Config file beside a file output, or inside a directory output.
fn config_beside(out: &Path, is_dir: bool) -> PathBuf {
    if is_dir {
        out.join(RESOLVED_CONFIG)
    } else {
        let mut name = out.file_name().unwrap_or_default().to_os_string();
        name.push(".config.toml");
        out.with_file_name(name)
    }
}

fn write_config(o: &mut Outputs, cfg: &RunConfig, out: &Path, is_dir: bool) -> Result<(), Error> {
    let path = o.file(config_beside(out, is_dir));
    io::write_atomic(path, |w| Ok(w.write_all(cfg.to_toml().as_bytes())?))
}

fn read_commands(path: &Path) -> Result<Vec<ParsedCommand>, Error> {
    io::read_jsonl_file(path)
}

fn dir_of(path: &Path) -> PathBuf {
    path.parent().map(Path::to_path_buf).unwrap_or_default()
}

fn run(cli: &Cli, cfg: &RunConfig, o: &mut Outputs) -> Result<(), Error> {
    let g = &cli.global;
    match &cli.cmd {
        Command::Synth { flights } => {
            let out = o.dir(out_path(g)?)?;
            let mut cfg = cfg.clone();
            if let Some(n) = flights {
                cfg.synth.n_flights = *n;
            }
            let sc = generate_scenario(&cfg.synth)?;
            for p in write_scenario(&sc, &out)? {
                o.record(p);
            }
            write_config(o, &cfg, &out, true)?;
            log::info!("{} flights, {} utterances written to {}", sc.trajectories.len(), sc.transcript.len(), out.display());
        }
        Command::Detect { tracks } => {
            let out = o.file(out_path(g)?);
            let det = pipeline::detect(&read_tracks_csv(tracks)?, cfg)?;
            io::write_atomic(&out, |w| write_events_jsonl(w, &det.events))?;
            write_config(o, cfg, &out, false)?;
            log::info!("{} events; {} tracks excluded as continuous descents", det.events.len(), det.cdo_excluded.len());
        }
        Command::Parse { transcript, callsigns } => {
            let out = o.file(out_path(g)?);
            let utts = read_transcript(std::io::BufReader::new(std::fs::File::open(transcript)?))?;
            let (kept, records) = pipeline::parse(&utts, &CallsignTable::load(callsigns)?, cfg)?;
            io::write_atomic(&out, |w| io::write_jsonl(w, &kept))?;
            let rec_path = o.file(out.with_extension("records.jsonl"));
            io::write_atomic(rec_path, |w| io::write_jsonl(w, &records))?;
            write_config(o, cfg, &out, false)?;
            log::info!("{} of {} utterances kept as commands", kept.len(), records.len());
        }
        Command::Align { commands, events, tracks, context } => {
            let out = o.dir(out_path(g)?)?;
            let cmds = read_commands(commands)?;
            let evs = read_events_jsonl(std::io::BufReader::new(std::fs::File::open(events)?))?;
            let trajs = read_tracks_csv(tracks)?;
            let ctx = pipeline::load_context(context.clone().unwrap_or_else(|| dir_of(tracks)), cfg)?;
            let (alignment, ds) = pipeline::build(&cmds, &evs, &trajs, &ctx, cfg)?;
            for name in ["index.jsonl", "sequences.bin", "images", "schema.json", "alignment.json", "labels.csv"] {
                o.file(out.join(name));
            }
            ds.write(&out)?;
            io::write_json_pretty(out.join("alignment.json"), &alignment)?;
            write_labels(out.join("labels.csv"), &pipeline::labels(&ds, None))?;
            write_config(o, cfg, &out, true)?;
            log::info!(
                "{} pairs ({} unmatched commands, {} unmatched events); {} train / {} val samples",
                alignment.pairs.len(),
                alignment.unmatched_cmds.len(),
                alignment.unmatched_events.len(),
                ds.schema.n_train,
                ds.schema.n_val
            );
        }
        Command::Render { tracks, callsign, t } => {
            let out = o.dir(out_path(g)?)?;
            let trajs = read_tracks_csv(tracks)?;
            let traj = trajs.iter().find(|tr| &tr.callsign == callsign).ok_or_else(|| Error::TargetMissing(callsign.clone()))?;
            let hist = render_history(traj, *t, &cfg.raster)?;
            let snap = render_snapshot(&states_at(&trajs, *t), callsign, *t, &cfg.raster)?;
            for (img, stem) in [(&hist, "history"), (&snap, "snapshot")] {
                for ext in ["png", "bin", "bin.json"] {
                    o.file(out.join(format!("{stem}.{ext}")));
                }
                img.write_png(out.join(format!("{stem}.png")))?;
                img.write_raw(out.join(format!("{stem}.bin")))?;
            }
            write_config(o, cfg, &out, true)?;
        }
        Command::Train { dataset } => {
            let out = o.dir(out_path(g)?)?;
            let ds = Dataset::read(dataset)?;
            let (runs, ens) = pipeline::train_ensemble(&ds, cfg)?;
            for p in ens.write(&out)? {
                o.record(p);
            }
            for (run, v) in runs.iter().zip(atc_lifecycle::nn::LossVariant::ALL) {
                let p = o.file(out.join(format!("curve_{}.json", v.name())));
                io::write_json_pretty(p, &run.curve)?;
            }
            write_config(o, cfg, &out, true)?;
        }
        Command::Predict { model, dataset, split, plot, attention } => {
            let out = o.file(out_path(g)?);
            let ens = Ensemble::read(model)?;
            let ds = Dataset::read(dataset)?;
            let rows = pipeline::predict(&ens, &ds, split.split())?;
            write_predictions(&out, &rows)?;
            if let Some(path) = attention {
                let maps = pipeline::attention_maps(&ens, &ds, split.split())?;
                io::write_atomic(o.file(path), |w| io::write_jsonl(w, &maps))?;
            }
            if let Some(dir) = plot {
                let dir = o.dir(dir)?;
                let mut by_flight: std::collections::BTreeMap<&str, Vec<TimelineItem>> = Default::default();
                for r in &rows {
                    let items = by_flight.entry(&r.callsign).or_default();
                    let iv = reconstruct(&r.callsign, r.onset_t, r.offset_hat, r.duration_hat)?;
                    items.push(TimelineItem { interval: iv, onset_t: Some(r.onset_t) });
                    if let (Some(off), Some(dur)) = (r.offset_true, r.duration_true) {
                        let mut iv = reconstruct(&r.callsign, r.onset_t, off, dur)?;
                        iv.source = Source::Observed;
                        items.push(TimelineItem { interval: iv, onset_t: None });
                    }
                }
                for (cs, items) in by_flight {
                    let p = o.file(dir.join(format!("{cs}.svg")));
                    io::write_atomic(p, |w| Ok(w.write_all(timeline_svg(&items).as_bytes())?))?;
                }
            }
            write_config(o, cfg, &out, false)?;
        }
        Command::Evaluate { pred, truth } => {
            let mut rows = read_predictions(pred)?;
            if let Some(t) = truth {
                rows = attach_labels(&rows, &read_labels(t)?)?;
            }
            let m = pipeline::evaluate(&rows)?;
            let json = serde_json::to_string_pretty(&m)?;
            println!("{json}");
            if let Some(out) = &g.out {
                let out = o.file(out);
                io::write_atomic(&out, |w| Ok(w.write_all(format!("{json}\n").as_bytes())?))?;
                write_config(o, cfg, &out, false)?;
            }
        }
        Command::Workload { pred, window } => {
            let out = o.dir(out_path(g)?)?;
            let window_s = window.unwrap_or(cfg.workload.window_s);
            let rows = read_predictions(pred)?;
            let (predicted, _) = intervals_from_predictions(&rows)?;
            let report = workload_report(&predicted, span_of(&predicted, window_s), window_s)?;
            report.write_json(o.file(out.join("workload.json")))?;
            report.write_csv(o.file(out.join("workload.csv")))?;
            let items: Vec<TimelineItem> = predicted
                .into_iter()
                .zip(&rows)
                .map(|(interval, r)| TimelineItem { interval, onset_t: Some(r.onset_t) })
                .collect();
            let svg = o.file(out.join("timeline.svg"));
            io::write_atomic(svg, |w| Ok(w.write_all(timeline_svg(&items).as_bytes())?))?;
            write_config(o, cfg, &out, true)?;
        }
    }
    Ok(())
}

fn load_config(g: &Global) -> Result<RunConfig, Error> {
    let mut cfg = match &g.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = g.seed {
        cfg.seed = s;
    }
    cfg.resolved()
}

fn exit_code(e: &Error) -> u8 {
    if e.is_io() {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.global.threads {
        if n == 0 {
            eprintln!("error: --threads must be at least 1");
            return ExitCode::from(1);
        }
        #[cfg(feature = "parallel")]
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    let cfg = match load_config(&cli.global) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e));
        }
    };
    log::info!("seed {} config {}", cfg.seed, cfg.hash());
    let mut outputs = Outputs::default();
    match run(&cli, &cfg, &mut outputs) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.remove_all();
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
