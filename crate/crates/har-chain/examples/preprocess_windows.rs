// The preprocessing chain step by step: gap interpolation, resampling onto a
// uniform grid, sliding windows, and leakage-safe normalization.
// Run with: cargo run --example preprocess_windows

use har_chain::ingest::{generate_synthetic, LabelMap, SyntheticSpec};
use har_chain::preprocess::{
    apply_normalizer_windows, fit_normalizer_windows, interpolate_missing, resample,
    sliding_windows, Labeling, NormScheme,
};
use har_chain::validate::{split_train_val, Grouping};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 2,
        classes: 3,
        rate: 40.0,
        bout_seconds: 2.0,
        bouts_per_class: 4,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let mut recs = generate_synthetic(&spec, 7)?;

    // Punch some holes to give the interpolator something to do.
    let c = recs[0].channel_count();
    for t in (50..60).chain(200..203) {
        recs[0].missing[t * c] = true;
        recs[0].samples[t * c] = 0.0;
    }
    println!(
        "recording 0: {} samples, {} marked missing",
        recs[0].len(),
        recs[0].missing.iter().filter(|&&m| m).count()
    );

    let filled: Vec<_> = recs
        .iter()
        .map(interpolate_missing)
        .collect::<Result<_>>()?;
    println!(
        "after interpolation: {} missing, sample 55 of channel 0 = {:.4}",
        filled[0].missing.iter().filter(|&&m| m).count(),
        filled[0].samples[55 * c]
    );

    // Resample 40 Hz -> 25 Hz. Timestamps become exactly uniform.
    let resampled: Vec<_> = filled
        .iter()
        .map(|r| resample(r, 25.0))
        .collect::<Result<_>>()?;
    println!(
        "resampled: {} -> {} samples per recording",
        filled[0].len(),
        resampled[0].len()
    );

    // 1 s windows, 50% overlap.
    let ds = sliding_windows(&resampled, 25, 12, Labeling::Majority, &labels)?;
    println!(
        "{} windows of {} x {} from {} subjects",
        ds.len(),
        ds.window_len,
        ds.channel_count(),
        ds.distinct_subjects().len()
    );

    // Fit statistics on training windows only, then apply everywhere. The
    // validation side never influences the statistics.
    let split = split_train_val(&ds, 0.25, 0, Grouping::Subject)?;
    let stats = fit_normalizer_windows(&ds, &split.train, NormScheme::Zscore)?;
    let normalized = apply_normalizer_windows(&ds, &stats)?;

    let train_ds = normalized.select(&split.train);
    let val_ds = normalized.select(&split.test);
    let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
    println!(
        "train windows {} (mean {:+.4}), val windows {} (mean {:+.4})",
        train_ds.len(),
        mean(&train_ds.windows),
        val_ds.len(),
        mean(&val_ds.windows)
    );
    println!("train subjects: {:?}", train_ds.distinct_subjects());
    println!("val subjects:   {:?}", val_ds.distinct_subjects());
    Ok(())
}
