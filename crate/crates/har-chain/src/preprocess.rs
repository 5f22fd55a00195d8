//! Gap filling, resampling, normalization, and sliding-window segmentation.
//!
//! The intended order is: interpolate raw recordings, resample onto a uniform
//! grid, segment into windows, then fit the normalizer on training windows
//! only and apply it to both sides of a split. Normalization is affine per
//! channel, so fitting on windows and fitting on the samples they were cut
//! from give the same statistics; doing it at the window stage is what makes
//! per-fold leakage-free fitting possible.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{LabelMap, SensorRecording};

/// Fill missing cells: interior gaps by linear interpolation against
/// timestamps, leading/trailing gaps with the nearest present value.
/// Present values pass through bit-identical.
pub fn interpolate_missing(rec: &SensorRecording) -> Result<SensorRecording> {
    let t_n = rec.len();
    let c_n = rec.channel_count();
    let mut out = rec.clone();
    for c in 0..c_n {
        let present: Vec<usize> = (0..t_n).filter(|&t| !rec.missing[t * c_n + c]).collect();
        if present.is_empty() {
            return Err(Error::invalid(format!(
                "channel `{}` has no present values",
                rec.channels[c]
            )));
        }
        if present.len() == t_n {
            continue;
        }
        for t in 0..t_n {
            if !rec.missing[t * c_n + c] {
                continue;
            }
            // position of t among present indices
            let after = present.partition_point(|&p| p < t);
            let value = if after == 0 {
                rec.samples[present[0] * c_n + c]
            } else if after == present.len() {
                rec.samples[present[present.len() - 1] * c_n + c]
            } else {
                let (i0, i1) = (present[after - 1], present[after]);
                let (t0, t1) = (rec.timestamps[i0], rec.timestamps[i1]);
                let (v0, v1) = (rec.samples[i0 * c_n + c], rec.samples[i1 * c_n + c]);
                v0 + (v1 - v0) * (rec.timestamps[t] - t0) / (t1 - t0)
            };
            out.samples[t * c_n + c] = value;
        }
    }
    out.missing.iter_mut().for_each(|m| *m = false);
    Ok(out)
}

/// Resample onto the uniform grid t_k = t_0 + k/rate,
/// k = 0..floor((t_last - t_0) * rate). Channel values are linearly
/// interpolated; the label at each grid point comes from the nearest
/// original sample, ties going to the earlier one.
pub fn resample(rec: &SensorRecording, target_rate: f64) -> Result<SensorRecording> {
    if rec.missing.iter().any(|&m| m) {
        return Err(Error::invalid(
            "resample requires gap-free input; run interpolation first",
        ));
    }
    if rec.len() < 2 {
        return Err(Error::invalid("resample needs at least 2 samples"));
    }
    if !(target_rate > 0.0) {
        return Err(Error::invalid("target rate must be > 0"));
    }
    let t0 = rec.timestamps[0];
    let t_last = *rec.timestamps.last().unwrap();
    // the epsilon keeps integral products like 2.0 s * 25 Hz from landing one
    // ulp below the integer and dropping the final grid point
    let k_max = ((t_last - t0) * target_rate + 1e-9).floor() as usize;
    let c_n = rec.channel_count();

    let mut timestamps = Vec::with_capacity(k_max + 1);
    let mut samples = Vec::with_capacity((k_max + 1) * c_n);
    let mut labels = Vec::with_capacity(k_max + 1);
    for k in 0..=k_max {
        let t = t0 + k as f64 / target_rate;
        timestamps.push(t);
        let tq = t.clamp(t0, t_last);
        // segment [j-1, j] bracketing tq
        let j = rec
            .timestamps
            .partition_point(|&ts| ts < tq)
            .clamp(1, rec.len() - 1);
        let (ta, tb) = (rec.timestamps[j - 1], rec.timestamps[j]);
        let w = (tq - ta) / (tb - ta);
        for c in 0..c_n {
            let (va, vb) = (rec.samples[(j - 1) * c_n + c], rec.samples[j * c_n + c]);
            samples.push(va + (vb - va) * w);
        }
        let nearest = if tq - ta <= tb - tq { j - 1 } else { j };
        labels.push(rec.labels[nearest]);
    }

    Ok(SensorRecording {
        subject_id: rec.subject_id.clone(),
        timestamps,
        channels: rec.channels.clone(),
        samples,
        labels,
        missing: vec![false; (k_max + 1) * c_n],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormScheme {
    Zscore,
    Minmax,
}

/// Per-channel normalization statistics. The degenerate-spread guard (std or
/// range below 1e-12 treated as 1) is applied when normalizing, not when
/// fitting, so the fitted statistics stay faithful to the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum NormStats {
    Zscore {
        channels: Vec<String>,
        mean: Vec<f64>,
        std: Vec<f64>,
    },
    Minmax {
        channels: Vec<String>,
        min: Vec<f64>,
        max: Vec<f64>,
    },
}

impl NormStats {
    pub fn channels(&self) -> &[String] {
        match self {
            NormStats::Zscore { channels, .. } | NormStats::Minmax { channels, .. } => channels,
        }
    }

    /// Normalize one value of channel `c`.
    pub fn apply(&self, c: usize, x: f64) -> f64 {
        match self {
            NormStats::Zscore { mean, std, .. } => {
                let s = if std[c] < 1e-12 { 1.0 } else { std[c] };
                (x - mean[c]) / s
            }
            NormStats::Minmax { min, max, .. } => {
                let range = max[c] - min[c];
                let r = if range < 1e-12 { 1.0 } else { range };
                (x - min[c]) / r
            }
        }
    }
}

fn stats_from_cells(
    channels: &[String],
    scheme: NormScheme,
    // yields (channel, value) pairs in a fixed order
    cells: &mut dyn Iterator<Item = (usize, f64)>,
) -> NormStats {
    let c_n = channels.len();
    match scheme {
        NormScheme::Zscore => {
            let mut sum = vec![0.0; c_n];
            let mut sumsq = vec![0.0; c_n];
            let mut n = vec![0u64; c_n];
            for (c, v) in cells {
                sum[c] += v;
                sumsq[c] += v * v;
                n[c] += 1;
            }
            let mean: Vec<f64> = (0..c_n).map(|c| sum[c] / n[c].max(1) as f64).collect();
            let std: Vec<f64> = (0..c_n)
                .map(|c| {
                    (sumsq[c] / n[c].max(1) as f64 - mean[c] * mean[c])
                        .max(0.0)
                        .sqrt()
                })
                .collect();
            NormStats::Zscore {
                channels: channels.to_vec(),
                mean,
                std,
            }
        }
        NormScheme::Minmax => {
            let mut min = vec![f64::INFINITY; c_n];
            let mut max = vec![f64::NEG_INFINITY; c_n];
            for (c, v) in cells {
                min[c] = min[c].min(v);
                max[c] = max[c].max(v);
            }
            for c in 0..c_n {
                if min[c] > max[c] {
                    min[c] = 0.0;
                    max[c] = 0.0;
                }
            }
            NormStats::Minmax {
                channels: channels.to_vec(),
                min,
                max,
            }
        }
    }
}

/// Fit statistics over the concatenation of all given recordings (masked
/// cells excluded). Standard deviation is the population form.
pub fn fit_normalizer(recs: &[SensorRecording], scheme: NormScheme) -> Result<NormStats> {
    if recs.is_empty() {
        return Err(Error::NoRecordings);
    }
    let channels = recs[0].channels.clone();
    for r in recs {
        if r.channels != channels {
            return Err(Error::ChannelMismatch(format!(
                "{:?} vs {:?}",
                r.channels, channels
            )));
        }
    }
    let c_n = channels.len();
    let mut cells = recs.iter().flat_map(|r| {
        (0..r.len() * c_n)
            .filter(|i| !r.missing[*i])
            .map(move |i| (i % c_n, r.samples[i]))
    });
    Ok(stats_from_cells(&channels, scheme, &mut cells))
}

/// Normalize a recording with already-fitted statistics. Never refits: using
/// train statistics on held-out data is the whole point.
pub fn apply_normalizer(rec: &SensorRecording, stats: &NormStats) -> Result<SensorRecording> {
    if rec.channels != stats.channels() {
        return Err(Error::ChannelMismatch(format!(
            "{:?} vs {:?}",
            rec.channels,
            stats.channels()
        )));
    }
    let c_n = rec.channel_count();
    let mut out = rec.clone();
    for (i, v) in out.samples.iter_mut().enumerate() {
        *v = stats.apply(i % c_n, *v);
    }
    Ok(out)
}

/// How a window inherits a label from its samples.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Labeling {
    /// Most frequent sample label; ties break to the smaller class id.
    Majority,
    /// Label of the window's final sample.
    LastSample,
}

/// Fixed-length labeled windows that remember their source subject.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowedDataset {
    /// N x W x C row-major.
    pub windows: Vec<f64>,
    pub window_labels: Vec<usize>,
    pub subject_ids: Vec<String>,
    pub window_len: usize,
    pub stride: usize,
    pub rate: f64,
    pub label_map: LabelMap,
    pub channels: Vec<String>,
}

impl WindowedDataset {
    pub fn len(&self) -> usize {
        self.window_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.window_labels.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    /// Flat W x C values of window `i`.
    pub fn window(&self, i: usize) -> &[f64] {
        let span = self.window_len * self.channel_count();
        &self.windows[i * span..(i + 1) * span]
    }

    /// New dataset holding the given windows, in the given order.
    pub fn select(&self, indices: &[usize]) -> WindowedDataset {
        let span = self.window_len * self.channel_count();
        let mut windows = Vec::with_capacity(indices.len() * span);
        let mut labels = Vec::with_capacity(indices.len());
        let mut subjects = Vec::with_capacity(indices.len());
        for &i in indices {
            windows.extend_from_slice(self.window(i));
            labels.push(self.window_labels[i]);
            subjects.push(self.subject_ids[i].clone());
        }
        WindowedDataset {
            windows,
            window_labels: labels,
            subject_ids: subjects,
            window_len: self.window_len,
            stride: self.stride,
            rate: self.rate,
            label_map: self.label_map.clone(),
            channels: self.channels.clone(),
        }
    }

    pub fn distinct_subjects(&self) -> Vec<String> {
        let mut s: Vec<String> = self.subject_ids.clone();
        s.sort();
        s.dedup();
        s
    }
}

fn majority_label(labels: &[usize], k: usize) -> usize {
    let mut counts = vec![0usize; k];
    for &l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for id in 1..k {
        if counts[id] > counts[best] {
            best = id;
        }
    }
    best
}

/// Segment recordings into windows of `w` samples advancing by `s`. Per
/// recording of length T the starts are 0, s, 2s, ... while start + w <= T,
/// so the count is floor((T-w)/s) + 1 when T >= w and 0 otherwise. Windows
/// never span recordings.
pub fn sliding_windows(
    recs: &[SensorRecording],
    w: usize,
    s: usize,
    labeling: Labeling,
    label_map: &LabelMap,
) -> Result<WindowedDataset> {
    if w < 1 || s < 1 {
        return Err(Error::invalid("window and stride must be >= 1 samples"));
    }
    if recs.is_empty() {
        return Err(Error::NoRecordings);
    }
    let channels = recs[0].channels.clone();
    for r in recs {
        if r.channels != channels {
            return Err(Error::ChannelMismatch(format!(
                "{:?} vs {:?}",
                r.channels, channels
            )));
        }
    }
    let c_n = channels.len();
    let k = label_map.len();

    let mut windows = Vec::new();
    let mut window_labels = Vec::new();
    let mut subject_ids = Vec::new();
    for rec in recs {
        let t_n = rec.len();
        if t_n < w {
            continue;
        }
        let mut start = 0;
        while start + w <= t_n {
            windows.extend_from_slice(&rec.samples[start * c_n..(start + w) * c_n]);
            let lbl = match labeling {
                Labeling::Majority => majority_label(&rec.labels[start..start + w], k),
                Labeling::LastSample => rec.labels[start + w - 1],
            };
            window_labels.push(lbl);
            subject_ids.push(rec.subject_id.clone());
            start += s;
        }
    }

    Ok(WindowedDataset {
        windows,
        window_labels,
        subject_ids,
        window_len: w,
        stride: s,
        rate: recs[0].estimated_rate(),
        label_map: label_map.clone(),
        channels,
    })
}

/// Fit normalization statistics on a subset of windows (train side only).
pub fn fit_normalizer_windows(
    ds: &WindowedDataset,
    indices: &[usize],
    scheme: NormScheme,
) -> Result<NormStats> {
    if indices.is_empty() {
        return Err(Error::invalid("cannot fit a normalizer on zero windows"));
    }
    let c_n = ds.channel_count();
    let mut cells = indices.iter().flat_map(|&i| {
        ds.window(i)
            .iter()
            .enumerate()
            .map(move |(j, &v)| (j % c_n, v))
    });
    Ok(stats_from_cells(&ds.channels, scheme, &mut cells))
}

/// Normalize every window with already-fitted statistics.
pub fn apply_normalizer_windows(
    ds: &WindowedDataset,
    stats: &NormStats,
) -> Result<WindowedDataset> {
    if ds.channels != stats.channels() {
        return Err(Error::ChannelMismatch(format!(
            "{:?} vs {:?}",
            ds.channels,
            stats.channels()
        )));
    }
    let c_n = ds.channel_count();
    let mut out = ds.clone();
    for (i, v) in out.windows.iter_mut().enumerate() {
        *v = stats.apply(i % c_n, *v);
    }
    Ok(out)
}

/// Debug dump: one row per (window, time index), flat CSV
/// `window_id,subject_id,label,t_index,<channels...>`.
pub fn write_windows_csv(ds: &WindowedDataset, path: &std::path::Path) -> Result<()> {
    let mut writer = csv::Writer::from_path(path)
        .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
    let mut header = vec![
        "window_id".to_string(),
        "subject_id".to_string(),
        "label".to_string(),
        "t_index".to_string(),
    ];
    header.extend(ds.channels.iter().cloned());
    writer.write_record(&header)?;
    let c_n = ds.channel_count();
    for i in 0..ds.len() {
        let win = ds.window(i);
        for t in 0..ds.window_len {
            let mut row = vec![
                i.to_string(),
                ds.subject_ids[i].clone(),
                ds.label_map.name(ds.window_labels[i]).to_string(),
                t.to_string(),
            ];
            row.extend(win[t * c_n..(t + 1) * c_n].iter().map(|v| format!("{v}")));
            writer.write_record(&row)?;
        }
    }
    writer.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
