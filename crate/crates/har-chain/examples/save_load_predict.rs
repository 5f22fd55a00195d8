// Persist trained weights to CSV, reload them into a fresh model, and verify
// both models predict identically.
// Run with: cargo run --release --example save_load_predict

use har_chain::ingest::{generate_synthetic, LabelMap, SyntheticSpec};
use har_chain::model::{build_model, ModelSpec};
use har_chain::preprocess::{
    apply_normalizer_windows, fit_normalizer_windows, sliding_windows, Labeling, NormScheme,
};
use har_chain::train::{batch_tensor, train, TrainConfig};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 2,
        classes: 3,
        rate: 30.0,
        bout_seconds: 2.0,
        bouts_per_class: 3,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let recs = generate_synthetic(&spec, 9)?;
    let raw = sliding_windows(&recs, 30, 15, Labeling::Majority, &labels)?;
    let all: Vec<usize> = (0..raw.len()).collect();
    let stats = fit_normalizer_windows(&raw, &all, NormScheme::Zscore)?;
    let ds = apply_normalizer_windows(&raw, &stats)?;

    let model_spec = ModelSpec {
        conv_layers: 2,
        filters: 6,
        kernel_len: 5,
        hidden: 12,
        seed: 2,
        ..ModelSpec::new(ds.channel_count(), ds.window_len, labels.len())
    };
    let model = build_model(&model_spec)?;
    let cfg = TrainConfig {
        epochs: 10,
        batch_size: 16,
        lr: 3e-3,
        seed: 2,
        ..TrainConfig::default()
    };
    train(&model, &ds, None, &cfg)?;

    let path = std::env::temp_dir().join("har_chain_weights_example.csv");
    model.save_weights(&path)?;
    println!(
        "saved {} parameters to {}",
        model_spec.param_count(),
        path.display()
    );

    // A fresh model from a different seed, overwritten by the saved weights.
    let fresh = build_model(&ModelSpec {
        seed: 999,
        ..model_spec.clone()
    })?;
    fresh.load_weights(&path)?;

    let batch = batch_tensor(&ds, &all)?;
    let a = model.predict(&batch)?;
    let b = fresh.predict(&batch)?;
    assert_eq!(a, b, "reloaded model must predict identically");

    let truth = &ds.window_labels;
    let correct = a.iter().zip(truth).filter(|(p, t)| p == t).count();
    println!(
        "predictions match after reload; {}/{} windows correct",
        correct,
        ds.len()
    );
    for (i, (&p, &t)) in a.iter().zip(truth).take(5).enumerate() {
        println!(
            "window {}: predicted {} truth {}",
            i,
            labels.names()[p],
            labels.names()[t]
        );
    }
    std::fs::remove_file(&path).ok();
    Ok(())
}
