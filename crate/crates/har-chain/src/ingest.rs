//! Loading, validating, synthesizing, and summarizing sensor recordings.
//!
//! On-disk format is one CSV per subject with header
//! `subject_id,timestamp,<channel_1>,...,<channel_C>,label`. Timestamps are
//! seconds, labels are class-name strings, and an empty numeric cell marks a
//! missing value.

use std::collections::BTreeMap;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Ordered class names with contiguous ids 0..K-1.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelMap {
    names: Vec<String>,
}

impl LabelMap {
    pub fn new(names: Vec<String>) -> Result<Self> {
        if names.len() < 2 {
            return Err(Error::invalid("label map needs at least 2 classes"));
        }
        let mut seen = std::collections::HashSet::new();
        for n in &names {
            if !seen.insert(n.clone()) {
                return Err(Error::invalid(format!("duplicate class name `{n}`")));
            }
        }
        Ok(Self { names })
    }

    /// The RealWorld HAR activity set in its canonical order.
    pub fn rwhar() -> Self {
        Self {
            names: [
                "walking_upstairs",
                "walking_downstairs",
                "jumping",
                "lying",
                "standing",
                "sitting",
                "running",
                "walking",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        }
    }

    /// Generic class names for synthetic data.
    pub fn synthetic(k: usize) -> Result<Self> {
        Self::new((0..k).map(|i| format!("class_{i}")).collect())
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }
}

/// One subject's multichannel timestamped stream with per-sample labels.
///
/// `samples` and `missing` are row-major T x C; `missing[t*C+c]` is true when
/// the cell was absent in the source and `samples[t*C+c]` holds a 0.0
/// placeholder that must not be read before gap filling.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorRecording {
    pub subject_id: String,
    pub timestamps: Vec<f64>,
    pub channels: Vec<String>,
    pub samples: Vec<f64>,
    pub labels: Vec<usize>,
    pub missing: Vec<bool>,
}

impl SensorRecording {
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Median of 1/dt; 1.0 for recordings too short to estimate.
    pub fn estimated_rate(&self) -> f64 {
        let mut rates: Vec<f64> = self
            .timestamps
            .windows(2)
            .map(|w| 1.0 / (w[1] - w[0]))
            .collect();
        if rates.is_empty() {
            return 1.0;
        }
        rates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let n = rates.len();
        if n % 2 == 1 {
            rates[n / 2]
        } else {
            0.5 * (rates[n / 2 - 1] + rates[n / 2])
        }
    }

    fn validate(&self) -> Result<()> {
        let t = self.timestamps.len();
        let c = self.channels.len();
        if c == 0 {
            return Err(Error::invalid("recording has no channels"));
        }
        if self.labels.len() != t || self.samples.len() != t * c || self.missing.len() != t * c {
            return Err(Error::ShapeMismatch(format!(
                "recording {}: {} timestamps, {} labels, {} sample cells",
                self.subject_id,
                t,
                self.labels.len(),
                self.samples.len()
            )));
        }
        for (i, w) in self.timestamps.windows(2).enumerate() {
            if w[1] <= w[0] {
                return Err(Error::NonMonotonicTimestamp { row: i + 2 });
            }
        }
        Ok(())
    }
}

/// Parse one subject CSV. Row numbers in errors are 1-based data rows.
pub fn load_recording(path: &Path, label_map: &LabelMap) -> Result<SensorRecording> {
    let mut reader = csv::ReaderBuilder::new()
        .flexible(false)
        .from_path(path)
        .map_err(|e| match e.kind() {
            csv::ErrorKind::Io(_) => {
                Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e))
            }
            _ => Error::Csv(e),
        })?;

    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                name: name.to_string(),
                path: path.to_path_buf(),
            })
    };
    let subject_col = col("subject_id")?;
    let time_col = col("timestamp")?;
    let label_col = col("label")?;
    let channel_cols: Vec<usize> = (0..headers.len())
        .filter(|&i| i != subject_col && i != time_col && i != label_col)
        .collect();
    if channel_cols.is_empty() {
        return Err(Error::MissingColumn {
            name: "<channel>".to_string(),
            path: path.to_path_buf(),
        });
    }
    let channels: Vec<String> = channel_cols.iter().map(|&i| headers[i].clone()).collect();

    let mut subject_id = String::new();
    let mut timestamps = Vec::new();
    let mut samples = Vec::new();
    let mut labels = Vec::new();
    let mut missing = Vec::new();

    for (idx, record) in reader.records().enumerate() {
        let row = idx + 1;
        let record = record?;
        let subject = record.get(subject_col).unwrap_or("").to_string();
        if idx == 0 {
            subject_id = subject;
        } else if subject != subject_id {
            return Err(Error::SubjectMismatch {
                expected: subject_id,
                found: subject,
                row,
            });
        }

        let t_raw = record.get(time_col).unwrap_or("").trim();
        let t: f64 = t_raw.parse().map_err(|_| Error::BadValue {
            value: t_raw.to_string(),
            column: "timestamp".to_string(),
            row,
        })?;
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(Error::NonMonotonicTimestamp { row });
            }
        }
        timestamps.push(t);

        for (&ci, name) in channel_cols.iter().zip(channels.iter()) {
            let cell = record.get(ci).unwrap_or("").trim();
            if cell.is_empty() {
                samples.push(0.0);
                missing.push(true);
            } else {
                let v: f64 = cell.parse().map_err(|_| Error::BadValue {
                    value: cell.to_string(),
                    column: name.clone(),
                    row,
                })?;
                samples.push(v);
                missing.push(false);
            }
        }

        let label_raw = record.get(label_col).unwrap_or("").trim();
        let label = label_map.id(label_raw).ok_or_else(|| Error::UnknownLabel {
            label: label_raw.to_string(),
            row,
        })?;
        labels.push(label);
    }

    if timestamps.is_empty() {
        return Err(Error::EmptyRecording {
            path: path.to_path_buf(),
        });
    }

    let rec = SensorRecording {
        subject_id,
        timestamps,
        channels,
        samples,
        labels,
        missing,
    };
    rec.validate()?;
    Ok(rec)
}

/// Write a recording in the canonical CSV layout. Missing cells are written
/// empty; floats use the shortest representation that parses back exactly.
pub fn write_recording(rec: &SensorRecording, label_map: &LabelMap, path: &Path) -> Result<()> {
    rec.validate()?;
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    let mut header = vec!["subject_id".to_string(), "timestamp".to_string()];
    header.extend(rec.channels.iter().cloned());
    header.push("label".to_string());
    writer.write_record(&header)?;

    let c = rec.channel_count();
    for t in 0..rec.len() {
        let mut row = vec![rec.subject_id.clone(), format!("{}", rec.timestamps[t])];
        for ci in 0..c {
            if rec.missing[t * c + ci] {
                row.push(String::new());
            } else {
                row.push(format!("{}", rec.samples[t * c + ci]));
            }
        }
        row.push(label_map.name(rec.labels[t]).to_string());
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

/// Load every `*.csv` in a directory, sorted by file name.
pub fn load_directory(dir: &Path, label_map: &LabelMap) -> Result<Vec<SensorRecording>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().map(|x| x == "csv").unwrap_or(false))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(Error::NoRecordings);
    }
    paths.iter().map(|p| load_recording(p, label_map)).collect()
}

/// Parameters for the synthetic corpus: each class emits a sinusoid at a
/// class-distinct frequency plus Gaussian noise, so classes are separable
/// and subject-independent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub subjects: usize,
    pub classes: usize,
    pub rate: f64,
    pub bout_seconds: f64,
    pub bouts_per_class: usize,
    pub channel_count: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            subjects: 3,
            classes: 3,
            rate: 50.0,
            bout_seconds: 2.0,
            bouts_per_class: 10,
            channel_count: 3,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        if self.subjects < 1
            || self.classes < 1
            || self.bouts_per_class < 1
            || self.channel_count < 1
        {
            return Err(Error::invalid("synthetic spec: all counts must be >= 1"));
        }
        if !(self.rate > 0.0) || !(self.bout_seconds > 0.0) {
            return Err(Error::invalid(
                "synthetic spec: rate and bout_seconds must be > 0",
            ));
        }
        Ok(())
    }

    /// Samples per recording: bouts_per_class * classes * round(bout_seconds * rate).
    pub fn samples_per_recording(&self) -> usize {
        self.bouts_per_class * self.classes * (self.bout_seconds * self.rate).round() as usize
    }
}

fn channel_name(i: usize) -> String {
    match i {
        0 => "acc_x".to_string(),
        1 => "acc_y".to_string(),
        2 => "acc_z".to_string(),
        _ => format!("ch_{i}"),
    }
}

/// Deterministic synthetic recordings: a pure function of (spec, seed).
pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<Vec<SensorRecording>> {
    spec.validate()?;
    let bout_len = (spec.bout_seconds * spec.rate).round() as usize;
    let k = spec.classes;
    let noise = Normal::new(0.0, 0.1).expect("fixed std");

    let mut recordings = Vec::with_capacity(spec.subjects);
    for s in 0..spec.subjects {
        // bout order: every class appears bouts_per_class times, shuffled
        let mut bouts: Vec<usize> = (0..k)
            .flat_map(|class| std::iter::repeat(class).take(spec.bouts_per_class))
            .collect();
        let mut order_rng = rng::stream(seed, &[rng::SYNTH_BOUTS, s as u64]);
        for i in (1..bouts.len()).rev() {
            let j = order_rng.gen_range(0..=i);
            bouts.swap(i, j);
        }

        let mut noise_rng = rng::stream(seed, &[rng::SYNTH_NOISE, s as u64]);
        let t_total = bouts.len() * bout_len;
        let c = spec.channel_count;
        let mut timestamps = Vec::with_capacity(t_total);
        let mut samples = Vec::with_capacity(t_total * c);
        let mut labels = Vec::with_capacity(t_total);
        for (bi, &class) in bouts.iter().enumerate() {
            // frequencies spread below Nyquist, distinct per class
            let freq = spec.rate * (class + 1) as f64 / (4.0 * (k + 1) as f64);
            for i in 0..bout_len {
                let idx = bi * bout_len + i;
                let t = idx as f64 / spec.rate;
                timestamps.push(t);
                labels.push(class);
                for ci in 0..c {
                    let phase = ci as f64 * std::f64::consts::FRAC_PI_4;
                    let v = (2.0 * std::f64::consts::PI * freq * t + phase).sin()
                        + noise.sample(&mut noise_rng);
                    samples.push(v);
                }
            }
        }
        recordings.push(SensorRecording {
            subject_id: format!("s{:02}", s + 1),
            timestamps,
            channels: (0..c).map(channel_name).collect(),
            samples,
            labels,
            missing: vec![false; t_total * c],
        });
    }
    Ok(recordings)
}

/// Per-channel value statistics over present cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ChannelStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    pub std: f64,
}

/// Per-class counts; a bout is a maximal run of identical consecutive labels
/// within one recording.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassStats {
    pub name: String,
    pub sample_count: u64,
    pub bout_count: u64,
    pub mean_bout_seconds: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetSummary {
    pub recordings: usize,
    pub total_samples: u64,
    pub rate_hz: f64,
    pub missing_values: u64,
    pub classes: Vec<ClassStats>,
    pub channels: Vec<ChannelStats>,
}

/// Label distribution, bout structure, channel statistics, and the nominal
/// sampling rate (median of 1/dt pooled over all recordings).
pub fn summarize(recordings: &[SensorRecording], label_map: &LabelMap) -> Result<DatasetSummary> {
    if recordings.is_empty() {
        return Err(Error::NoRecordings);
    }
    let channels = recordings[0].channels.clone();
    for r in recordings {
        if r.channels != channels {
            return Err(Error::ChannelMismatch(format!(
                "{:?} vs {:?}",
                r.channels, channels
            )));
        }
    }

    let k = label_map.len();
    let mut sample_counts = vec![0u64; k];
    let mut bout_counts = vec![0u64; k];
    let mut bout_seconds = vec![0.0f64; k];
    let mut missing_values = 0u64;
    let mut total_samples = 0u64;
    let mut deltas: Vec<f64> = Vec::new();

    // channel accumulators over present cells
    let c = channels.len();
    let mut ch_min = vec![f64::INFINITY; c];
    let mut ch_max = vec![f64::NEG_INFINITY; c];
    let mut ch_sum = vec![0.0f64; c];
    let mut ch_sumsq = vec![0.0f64; c];
    let mut ch_n = vec![0u64; c];

    for rec in recordings {
        let rate = rec.estimated_rate();
        total_samples += rec.len() as u64;
        deltas.extend(rec.timestamps.windows(2).map(|w| w[1] - w[0]));

        for &l in &rec.labels {
            if l >= k {
                return Err(Error::LabelMapMismatch);
            }
            sample_counts[l] += 1;
        }
        // run-length encode labels into bouts
        let mut i = 0;
        while i < rec.labels.len() {
            let class = rec.labels[i];
            let mut j = i + 1;
            while j < rec.labels.len() && rec.labels[j] == class {
                j += 1;
            }
            bout_counts[class] += 1;
            bout_seconds[class] += (j - i) as f64 / rate;
            i = j;
        }

        for t in 0..rec.len() {
            for ci in 0..c {
                if rec.missing[t * c + ci] {
                    missing_values += 1;
                } else {
                    let v = rec.samples[t * c + ci];
                    ch_min[ci] = ch_min[ci].min(v);
                    ch_max[ci] = ch_max[ci].max(v);
                    ch_sum[ci] += v;
                    ch_sumsq[ci] += v * v;
                    ch_n[ci] += 1;
                }
            }
        }
    }

    deltas.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let rate_hz = if deltas.is_empty() {
        1.0
    } else {
        let n = deltas.len();
        let median_dt = if n % 2 == 1 {
            deltas[n / 2]
        } else {
            0.5 * (deltas[n / 2 - 1] + deltas[n / 2])
        };
        1.0 / median_dt
    };

    let classes = (0..k)
        .map(|id| ClassStats {
            name: label_map.name(id).to_string(),
            sample_count: sample_counts[id],
            bout_count: bout_counts[id],
            mean_bout_seconds: if bout_counts[id] > 0 {
                bout_seconds[id] / bout_counts[id] as f64
            } else {
                0.0
            },
        })
        .collect();

    let channels = (0..c)
        .map(|ci| {
            let n = ch_n[ci].max(1) as f64;
            let mean = ch_sum[ci] / n;
            let var = (ch_sumsq[ci] / n - mean * mean).max(0.0);
            ChannelStats {
                name: channels[ci].clone(),
                min: if ch_n[ci] > 0 { ch_min[ci] } else { 0.0 },
                max: if ch_n[ci] > 0 { ch_max[ci] } else { 0.0 },
                mean: if ch_n[ci] > 0 { mean } else { 0.0 },
                std: if ch_n[ci] > 0 { var.sqrt() } else { 0.0 },
            }
        })
        .collect();

    Ok(DatasetSummary {
        recordings: recordings.len(),
        total_samples,
        rate_hz,
        missing_values,
        classes,
        channels,
    })
}

/// Per-class sample counts keyed by class name, for the distribution CSV.
pub fn class_distribution(summary: &DatasetSummary) -> BTreeMap<String, u64> {
    summary
        .classes
        .iter()
        .map(|c| (c.name.clone(), c.sample_count))
        .collect()
}
