// Generate a synthetic corpus, write it to CSV, load it back, and print a
// summary. Run with: cargo run --example summarize_dataset

use har_chain::ingest::{
    class_distribution, generate_synthetic, load_directory, summarize, write_recording, LabelMap,
    SyntheticSpec,
};
use har_chain::Result;

fn main() -> Result<()> {
    let spec = SyntheticSpec {
        subjects: 3,
        classes: 4,
        rate: 25.0,
        bout_seconds: 2.0,
        bouts_per_class: 5,
        channel_count: 3,
    };
    let labels = LabelMap::synthetic(spec.classes)?;
    let recs = generate_synthetic(&spec, 42)?;

    // Round-trip through the on-disk format.
    let dir = std::env::temp_dir().join("har_chain_summarize_example");
    std::fs::create_dir_all(&dir).ok();
    for rec in &recs {
        write_recording(rec, &labels, &dir.join(format!("{}.csv", rec.subject_id)))?;
    }
    let reloaded = load_directory(&dir, &labels)?;

    let summary = summarize(&reloaded, &labels)?;
    println!(
        "{} recordings, {} samples at {:.1} Hz, {} missing cells",
        summary.recordings, summary.total_samples, summary.rate_hz, summary.missing_values
    );
    println!("\nper channel:");
    for ch in &summary.channels {
        println!(
            "  {:<8} mean {:+.4}  std {:.4}  range [{:+.3}, {:+.3}]",
            ch.name, ch.mean, ch.std, ch.min, ch.max
        );
    }
    println!("\nper class:");
    for c in &summary.classes {
        println!(
            "  {:<10} {:>6} samples in {:>3} bouts (mean bout {:.1}s)",
            c.name, c.sample_count, c.bout_count, c.mean_bout_seconds
        );
    }
    println!("\nclass distribution: {:?}", class_distribution(&summary));
    std::fs::remove_dir_all(&dir).ok();
    Ok(())
}
