//! The convolutional-recurrent classifier: stacked temporal convolutions,
//! a recurrent stage, and a dense head reading the final timestep.

use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numcore::ops::{self, LstmParams};
use crate::numcore::{no_grad, Tensor};
use crate::rng;

/// Architecture hyperparameters. `window_len` and `channels` come from the
/// data; the rest default to the reference configuration.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub channels: usize,
    pub window_len: usize,
    pub classes: usize,
    pub conv_layers: usize,
    pub filters: usize,
    pub kernel_len: usize,
    pub hidden: usize,
    pub lstm_layers: usize,
    pub seed: u64,
}

impl ModelSpec {
    pub fn new(channels: usize, window_len: usize, classes: usize) -> Self {
        Self {
            channels,
            window_len,
            classes,
            conv_layers: 4,
            filters: 64,
            kernel_len: 5,
            hidden: 128,
            lstm_layers: 1,
            seed: 0,
        }
    }

    /// Timesteps left after the conv stack: W - L * (Kt - 1).
    pub fn conv_out_len(&self) -> isize {
        self.window_len as isize - (self.conv_layers * (self.kernel_len - 1)) as isize
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            self.channels,
            self.window_len,
            self.classes,
            self.conv_layers,
            self.filters,
            self.kernel_len,
            self.hidden,
            self.lstm_layers,
        ];
        if counts.iter().any(|&c| c < 1) {
            return Err(Error::invalid("model spec: all counts must be >= 1"));
        }
        if self.conv_out_len() < 1 {
            return Err(Error::invalid(format!(
                "window of {} samples is too short for {} conv layers of kernel {} \
                 ({} - {} < 1)",
                self.window_len,
                self.conv_layers,
                self.kernel_len,
                self.window_len,
                self.conv_layers * (self.kernel_len - 1)
            )));
        }
        Ok(())
    }

    /// Closed-form parameter count; must equal the summed buffer sizes.
    pub fn param_count(&self) -> usize {
        let (c, l, f, kt, h, k) = (
            self.channels,
            self.conv_layers,
            self.filters,
            self.kernel_len,
            self.hidden,
            self.classes,
        );
        let conv = (f * kt + f) + (l - 1) * (f * f * kt + f);
        let lstm_first = 4 * (h * (f * c) + h * h + h);
        let lstm_rest = (self.lstm_layers - 1) * 4 * (h * h + h * h + h);
        let head = h * k + k;
        conv + lstm_first + lstm_rest + head
    }
}

/// An instantiated classifier. Parameters live in graph-leaf tensors and are
/// updated in place by the optimizer.
pub struct Model {
    pub spec: ModelSpec,
    conv: Vec<(Tensor, Tensor)>,
    lstm: Vec<LstmParams>,
    head_weight: Tensor,
    head_bias: Tensor,
}

fn glorot(rng: &mut impl Rng, fan_in: usize, fan_out: usize, len: usize) -> Vec<f64> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    (0..len).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Glorot-uniform weights, zero biases except the forget-gate slice at 1.
pub fn build_model(spec: &ModelSpec) -> Result<Model> {
    spec.validate()?;
    let mut r = rng::stream(spec.seed, &[rng::MODEL_INIT]);
    let (f, kt, h) = (spec.filters, spec.kernel_len, spec.hidden);

    let mut conv = Vec::with_capacity(spec.conv_layers);
    for layer in 0..spec.conv_layers {
        let g = if layer == 0 { 1 } else { f };
        let kernel = Tensor::param(
            glorot(&mut r, g * kt, f * kt, f * g * kt),
            vec![f, g, kt, 1],
        )?;
        let bias = Tensor::param(vec![0.0; f], vec![f])?;
        conv.push((kernel, bias));
    }

    let mut lstm = Vec::with_capacity(spec.lstm_layers);
    for layer in 0..spec.lstm_layers {
        let d = if layer == 0 { f * spec.channels } else { h };
        let w_ih = Tensor::param(glorot(&mut r, d, 4 * h, 4 * h * d), vec![4 * h, d])?;
        let w_hh = Tensor::param(glorot(&mut r, h, 4 * h, 4 * h * h), vec![4 * h, h])?;
        let mut bias = vec![0.0; 4 * h];
        bias[h..2 * h].iter_mut().for_each(|b| *b = 1.0);
        lstm.push(LstmParams {
            w_ih,
            w_hh,
            bias: Tensor::param(bias, vec![4 * h])?,
        });
    }

    let head_weight = Tensor::param(
        glorot(&mut r, h, spec.classes, spec.classes * h),
        vec![spec.classes, h],
    )?;
    let head_bias = Tensor::param(vec![0.0; spec.classes], vec![spec.classes])?;

    Ok(Model {
        spec: spec.clone(),
        conv,
        lstm,
        head_weight,
        head_bias,
    })
}

impl Model {
    /// Parameters in a stable order with stable names, for dumps and the
    /// optimizer alike.
    pub fn named_params(&self) -> Vec<(String, Tensor)> {
        let mut out = Vec::new();
        for (i, (k, b)) in self.conv.iter().enumerate() {
            out.push((format!("conv{i}.kernel"), k.clone()));
            out.push((format!("conv{i}.bias"), b.clone()));
        }
        for (i, p) in self.lstm.iter().enumerate() {
            out.push((format!("lstm{i}.w_ih"), p.w_ih.clone()));
            out.push((format!("lstm{i}.w_hh"), p.w_hh.clone()));
            out.push((format!("lstm{i}.bias"), p.bias.clone()));
        }
        out.push(("head.weight".to_string(), self.head_weight.clone()));
        out.push(("head.bias".to_string(), self.head_bias.clone()));
        out
    }

    pub fn params(&self) -> Vec<Tensor> {
        self.named_params().into_iter().map(|(_, t)| t).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Logits for a batch of windows, differentiable end to end.
    pub fn forward(&self, batch: &Tensor) -> Result<Tensor> {
        let sh = batch.shape();
        if sh.len() != 3 || sh[1] != self.spec.window_len || sh[2] != self.spec.channels {
            return Err(Error::ShapeMismatch(format!(
                "batch {:?} vs expected [B, {}, {}]",
                sh, self.spec.window_len, self.spec.channels
            )));
        }
        let b = sh[0];
        let (f, c) = (self.spec.filters, self.spec.channels);
        let t_out = self.spec.conv_out_len() as usize;

        let mut x = ops::reshape(batch, vec![b, 1, self.spec.window_len, c])?;
        for (kernel, bias) in &self.conv {
            x = ops::relu(&ops::conv_temporal(&x, kernel, bias)?);
        }

        // [B, F, T', C] -> [B, T', F*C], then one [B, D] slab per timestep
        let x = ops::transpose(&x, &[0, 2, 1, 3])?;
        let x = ops::reshape(&x, vec![b, t_out, f * c])?;
        let mut seq: Vec<Tensor> = (0..t_out)
            .map(|t| ops::reshape(&ops::slice(&x, 1, t, 1)?, vec![b, f * c]))
            .collect::<Result<_>>()?;

        let h = self.spec.hidden;
        for layer in &self.lstm {
            let mut hidden = Tensor::zeros(vec![b, h]);
            let mut cell = Tensor::zeros(vec![b, h]);
            let mut next = Vec::with_capacity(seq.len());
            for x_t in &seq {
                let (h2, c2) = ops::lstm_step(x_t, &hidden, &cell, layer)?;
                hidden = h2;
                cell = c2;
                next.push(hidden.clone());
            }
            seq = next;
        }

        ops::dense(seq.last().unwrap(), &self.head_weight, &self.head_bias)
    }

    /// Argmax class per window; ties go to the smaller class id. Runs in
    /// inference mode (no graph).
    pub fn predict(&self, batch: &Tensor) -> Result<Vec<usize>> {
        let logits = no_grad(|| self.forward(batch))?;
        let preds = argmax_rows(&logits.values(), self.spec.classes);
        Ok(preds)
    }

    /// Dump parameters as `name,shape,values...` CSV rows.
    pub fn save_weights(&self, path: &Path) -> Result<()> {
        let mut writer = csv::WriterBuilder::new()
            .flexible(true)
            .from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        for (name, t) in self.named_params() {
            let shape = t
                .shape()
                .iter()
                .map(|d| d.to_string())
                .collect::<Vec<_>>()
                .join("x");
            let mut row = vec![name, shape];
            row.extend(t.values().iter().map(|v| format!("{v}")));
            writer.write_record(&row)?;
        }
        writer.flush().map_err(|e| Error::io(path, e))?;
        Ok(())
    }

    /// Restore parameters from a dump. Every parameter must be present with
    /// a matching shape.
    pub fn load_weights(&self, path: &Path) -> Result<()> {
        let mut reader = csv::ReaderBuilder::new()
            .flexible(true)
            .has_headers(false)
            .from_path(path)
            .map_err(|e| Error::io(path, std::io::Error::new(std::io::ErrorKind::Other, e)))?;
        let mut loaded = std::collections::HashMap::new();
        for record in reader.records() {
            let record = record?;
            if record.len() < 2 {
                return Err(Error::invalid("weight row needs name and shape"));
            }
            let name = record.get(0).unwrap().to_string();
            let shape: Vec<usize> = {
                let s = record.get(1).unwrap();
                s.split('x')
                    .map(|d| {
                        d.parse()
                            .map_err(|_| Error::invalid(format!("bad shape `{s}` for `{name}`")))
                    })
                    .collect::<Result<_>>()?
            };
            let values: Vec<f64> = (2..record.len())
                .map(|i| {
                    let cell = record.get(i).unwrap();
                    cell.parse()
                        .map_err(|_| Error::invalid(format!("bad value `{cell}` in `{name}`")))
                })
                .collect::<Result<_>>()?;
            loaded.insert(name, (shape, values));
        }
        for (name, t) in self.named_params() {
            let (shape, values) = loaded.remove(&name).ok_or_else(|| {
                Error::invalid(format!("weight dump is missing parameter `{name}`"))
            })?;
            if shape != t.shape() || values.len() != t.len() {
                return Err(Error::ShapeMismatch(format!(
                    "parameter `{name}`: dump {:?} vs model {:?}",
                    shape,
                    t.shape()
                )));
            }
            t.set_values(&values);
        }
        if let Some(name) = loaded.keys().next() {
            return Err(Error::invalid(format!(
                "weight dump has unknown parameter `{name}`"
            )));
        }
        Ok(())
    }
}

/// Row-wise argmax with ties to the smaller index.
pub fn argmax_rows(values: &[f64], k: usize) -> Vec<usize> {
    values
        .chunks(k)
        .map(|row| {
            let mut best = 0;
            for (i, &v) in row.iter().enumerate().skip(1) {
                if v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}
