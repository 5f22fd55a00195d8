// Random hyperparameter search: every trial draws from its own stream and
// scores on one shared holdout split.
// Run with: cargo run --release --example tune_random_search

use har_chain::ingest::{generate_synthetic, LabelMap, SyntheticSpec};
use har_chain::model::ModelSpec;
use har_chain::preprocess::{sliding_windows, Labeling, NormScheme};
use har_chain::train::TrainConfig;
use har_chain::validate::{random_search, Grouping, SearchSpace};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 3,
        classes: 3,
        rate: 30.0,
        bout_seconds: 2.0,
        bouts_per_class: 4,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let recs = generate_synthetic(&spec, 21)?;
    let ds = sliding_windows(&recs, 30, 15, Labeling::Majority, &labels)?;

    let base_spec = ModelSpec {
        conv_layers: 2,
        kernel_len: 5,
        ..ModelSpec::new(ds.channel_count(), ds.window_len, labels.len())
    };
    let base_cfg = TrainConfig {
        epochs: 8,
        ..TrainConfig::default()
    };
    let space = SearchSpace {
        lr: (3e-4, 1e-2),
        batch_size: vec![8, 16],
        label_smoothing: vec![0.0, 0.1],
        maxup_copies: vec![0],
        filters: vec![4, 8],
        hidden: vec![8, 16],
    };

    let report = random_search(
        &ds,
        NormScheme::Zscore,
        &base_spec,
        &base_cfg,
        &space,
        6,
        0.25,
        Grouping::Subject,
        13,
    )?;

    println!("trial      lr  batch  smooth  filters  hidden   val-F1");
    for t in &report.trials {
        let marker = if t.index == report.best {
            " <- best"
        } else {
            ""
        };
        println!(
            "{:>5}  {:.1e}  {:>5}  {:>6.2}  {:>7}  {:>6}  {:>7.3}{}",
            t.index,
            t.cfg.lr,
            t.cfg.batch_size,
            t.cfg.label_smoothing,
            t.spec.filters,
            t.spec.hidden,
            t.val_macro_f1,
            marker
        );
    }
    let best = report.best_trial();
    println!(
        "\nwinner: lr {:.2e}, batch {}, filters {}, hidden {} at macro-F1 {:.3}",
        best.cfg.lr, best.cfg.batch_size, best.spec.filters, best.spec.hidden, best.val_macro_f1
    );
    Ok(())
}
