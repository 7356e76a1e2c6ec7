//! In-process run on a synthetic scenario: metrics against the train-mean
//! baseline and the feature slots ranked by permutation importance.
//!
//! `cargo run --release --example end_to_end -- [flights] [epochs]`

use atc_lifecycle::align::Split;
use atc_lifecycle::config::RunConfig;
use atc_lifecycle::ensemble::importance_ranking;
use atc_lifecycle::features::SLOT_NAMES;
use atc_lifecycle::metrics::{compute_metrics, mean_baseline};
use atc_lifecycle::pipeline::{run_end_to_end, Inputs};
use atc_lifecycle::synth::generate_scenario;

fn main() -> atc_lifecycle::Result<()> {
    let arg = |i: usize, default: usize| std::env::args().nth(i).and_then(|s| s.parse().ok()).unwrap_or(default);
    let mut cfg = RunConfig::default();
    cfg.synth.n_flights = arg(1, 60);
    cfg.train.epochs = arg(2, 20);
    let cfg = cfg.resolved()?;
    let sc = generate_scenario(&cfg.synth)?;
    let run = run_end_to_end(&Inputs::from_scenario(&sc, &cfg), &cfg)?;
    let ds = &run.dataset;
    println!("{} samples, {} train / {} val", ds.len(), ds.schema.n_train, ds.schema.n_val);

    let m = ds.schema.norm.targets.mean.clone();
    let truth: Vec<[f64; 2]> = run.predictions.iter().filter_map(|r| Some([r.offset_true?, r.duration_true?])).collect();
    let base = compute_metrics(&mean_baseline([m[0], m[1]], &truth)?);
    println!("{:<10}{:>12}{:>12}", "", "ensemble", "baseline");
    println!("{:<10}{:>12.3}{:>12.3}", "MAE off", run.metrics.mae_offset, base.mae_offset);
    println!("{:<10}{:>12.3}{:>12.3}", "MAE dur", run.metrics.mae_duration, base.mae_duration);
    println!("{:<10}{:>12.3}{:>12.3}", "RMSE", run.metrics.rmse_overall, base.rmse_overall);

    let val = ds.split(Split::Val);
    let shape = ds.schema.image_shape;
    let mut ranked = importance_ranking(|x| run.ensemble.predict(x, shape), &val, &SLOT_NAMES, 0)?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1));
    println!("permutation importance (increase in overall MAE):");
    for (name, d) in ranked.iter().take(8) {
        println!("  {name:<20}{d:>9.4}");
    }
    Ok(())
}
