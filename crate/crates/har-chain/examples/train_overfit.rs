// Sanity-check the optimizer end to end: a small classifier should reach
// near-perfect training accuracy on a small, separable corpus.
// Run with: cargo run --release --example train_overfit

use har_chain::ingest::{generate_synthetic, LabelMap, SyntheticSpec};
use har_chain::model::{build_model, ModelSpec};
use har_chain::preprocess::{
    apply_normalizer_windows, fit_normalizer_windows, sliding_windows, Labeling, NormScheme,
};
use har_chain::train::{train, TrainConfig};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 2,
        classes: 3,
        rate: 30.0,
        bout_seconds: 2.0,
        bouts_per_class: 4,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let recs = generate_synthetic(&spec, 3)?;
    let raw = sliding_windows(&recs, 30, 15, Labeling::Majority, &labels)?;
    let all: Vec<usize> = (0..raw.len()).collect();
    let stats = fit_normalizer_windows(&raw, &all, NormScheme::Zscore)?;
    let ds = apply_normalizer_windows(&raw, &stats)?;
    println!(
        "{} windows of {} x {}",
        ds.len(),
        ds.window_len,
        ds.channel_count()
    );

    let model_spec = ModelSpec {
        conv_layers: 2,
        filters: 8,
        kernel_len: 5,
        hidden: 16,
        seed: 1,
        ..ModelSpec::new(ds.channel_count(), ds.window_len, labels.len())
    };
    let model = build_model(&model_spec)?;
    println!("{} trainable parameters", model_spec.param_count());

    let cfg = TrainConfig {
        epochs: 25,
        batch_size: 16,
        lr: 3e-3,
        label_smoothing: 0.05,
        seed: 1,
        ..TrainConfig::default()
    };
    let history = train(&model, &ds, None, &cfg)?;
    for e in &history.epochs {
        if e.epoch % 5 == 0 || e.epoch == 1 {
            println!(
                "epoch {:>2}  loss {:.4}  acc {:.3}",
                e.epoch, e.train_loss, e.train_acc
            );
        }
    }
    let last = history.epochs.last().unwrap();
    println!(
        "final: loss {:.4}, accuracy {:.1}% on {} windows",
        last.train_loss,
        100.0 * last.train_acc,
        ds.len()
    );
    Ok(())
}
