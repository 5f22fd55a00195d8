// Leave-one-subject-out cross-validation: one fold per subject, each fold
// fitting its normalizer on its own training windows.
// Run with: cargo run --release --example crossval_loso

use har_chain::ingest::{generate_synthetic, LabelMap, SyntheticSpec};
use har_chain::model::ModelSpec;
use har_chain::preprocess::{sliding_windows, Labeling, NormScheme};
use har_chain::train::TrainConfig;
use har_chain::validate::{run_cross_validation, Protocol};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 4,
        classes: 3,
        rate: 30.0,
        bout_seconds: 2.0,
        bouts_per_class: 4,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let recs = generate_synthetic(&spec, 11)?;
    // Windows stay unnormalized here; each fold fits its own statistics.
    let ds = sliding_windows(&recs, 30, 15, Labeling::Majority, &labels)?;
    println!(
        "{} windows from subjects {:?}",
        ds.len(),
        ds.distinct_subjects()
    );

    let model_spec = ModelSpec {
        conv_layers: 2,
        filters: 8,
        kernel_len: 5,
        hidden: 16,
        ..ModelSpec::new(ds.channel_count(), ds.window_len, labels.len())
    };
    let cfg = TrainConfig {
        epochs: 15,
        batch_size: 16,
        lr: 3e-3,
        ..TrainConfig::default()
    };

    let report = run_cross_validation(
        &ds,
        NormScheme::Zscore,
        &model_spec,
        &cfg,
        &Protocol::Loso,
        5,
    )?;
    println!("\nheld-out subject   windows   accuracy   macro-F1");
    for fold in &report.folds {
        println!(
            "{:<18} {:>7}   {:>8.3}   {:>8.3}",
            fold.id, fold.test_windows, fold.metrics.accuracy, fold.metrics.macro_f1
        );
    }
    println!(
        "\nmean accuracy {:.3} (std {:.3}), mean macro-F1 {:.3} (std {:.3})",
        report.mean_accuracy, report.std_accuracy, report.mean_macro_f1, report.std_macro_f1
    );
    Ok(())
}
