//! Dense feedforward models: ReLU hidden layers, identity output, exact
//! layer-by-layer reverse-mode gradients, and a small binary checkpoint
//! format. A single-layer instance is the linear model m·x + c.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

const CHECKPOINT_MAGIC: &[u8; 4] = b"EGLM";
const CHECKPOINT_VERSION: u32 = 1;

/// Feedforward network. Parameters live in one flat buffer, per layer:
/// out×in weights row-major, then the out biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    params: Vec<f64>,
}

/// Per-layer activations recorded by [`Mlp::forward_cached`]; index 0 is the
/// input, the last entry the output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds input and output")
    }
}

fn validate_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Input(format!(
            "a model needs at least input and output widths, got {widths:?}"
        )));
    }
    if widths.iter().any(|w| *w == 0) {
        return Err(Error::Input(format!("zero-width layer in {widths:?}")));
    }
    Ok(())
}

fn param_count_for(widths: &[usize]) -> usize {
    widths
        .windows(2)
        .map(|pair| pair[1] * (pair[0] + 1))
        .sum()
}

impl Mlp {
    /// He-style fan-in uniform initialization of the weights (biases zero),
    /// deterministic in `seed`.
    pub fn new(widths: &[usize], seed: u64) -> Result<Self> {
        validate_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(param_count_for(widths));
        for pair in widths.windows(2) {
            let (fan_in, fan_out) = (pair[0], pair[1]);
            let limit = (6.0 / fan_in as f64).sqrt();
            for _ in 0..fan_out * fan_in {
                params.push(rng.random_range(-limit..limit));
            }
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Ok(Self {
            widths: widths.to_vec(),
            params,
        })
    }

    /// All-zero parameters; handy for tests and explicit parameter setting.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        validate_widths(widths)?;
        Ok(Self {
            widths: widths.to_vec(),
            params: vec![0.0; param_count_for(widths)],
        })
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn input_width(&self) -> usize {
        self.widths[0]
    }

    pub fn output_width(&self) -> usize {
        *self.widths.last().expect("validated widths")
    }

    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Weight and bias slices for `layer`.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (in_w, out_w) = (self.widths[layer], self.widths[layer + 1]);
        let off = self.layer_offsets()[layer];
        (
            &self.params[off..off + out_w * in_w],
            &self.params[off + out_w * in_w..off + out_w * (in_w + 1)],
        )
    }

    fn layer_offsets(&self) -> Vec<usize> {
        let mut offsets = Vec::with_capacity(self.num_layers());
        let mut acc = 0;
        for pair in self.widths.windows(2) {
            offsets.push(acc);
            acc += pair[1] * (pair[0] + 1);
        }
        offsets
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        let mut cache = self.forward_cached(x)?;
        Ok(cache.activations.pop().expect("cache holds the output"))
    }

    pub fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        if x.len() != self.input_width() {
            return Err(Error::Dimension {
                expected: self.input_width(),
                actual: x.len(),
            });
        }
        let mut activations = Vec::with_capacity(self.widths.len());
        activations.push(x.to_vec());
        let offsets = self.layer_offsets();
        for l in 0..self.num_layers() {
            let (in_w, out_w) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let weights = &self.params[off..off + out_w * in_w];
            let biases = &self.params[off + out_w * in_w..off + out_w * (in_w + 1)];
            let input = &activations[l];
            let mut out = vec![0.0; out_w];
            for i in 0..out_w {
                let row = &weights[i * in_w..(i + 1) * in_w];
                let mut acc = biases[i];
                for j in 0..in_w {
                    acc += row[j] * input[j];
                }
                // hidden layers are ReLU, the output layer is identity
                out[i] = if l + 1 < self.num_layers() { acc.max(0.0) } else { acc };
            }
            activations.push(out);
        }
        Ok(ForwardCache { activations })
    }

    /// Accumulate d(loss)/d(params) into `grad` given d(loss)/d(output).
    /// The ReLU subgradient at exactly zero is taken as zero.
    pub fn backward(&self, cache: &ForwardCache, dl_dout: &[f64], grad: &mut [f64]) -> Result<()> {
        if dl_dout.len() != self.output_width() {
            return Err(Error::Dimension {
                expected: self.output_width(),
                actual: dl_dout.len(),
            });
        }
        if grad.len() != self.params.len() {
            return Err(Error::Dimension {
                expected: self.params.len(),
                actual: grad.len(),
            });
        }
        let offsets = self.layer_offsets();
        let mut delta = dl_dout.to_vec();
        for l in (0..self.num_layers()).rev() {
            let (in_w, out_w) = (self.widths[l], self.widths[l + 1]);
            let off = offsets[l];
            let input = &cache.activations[l];
            for i in 0..out_w {
                let di = delta[i];
                if di == 0.0 {
                    continue;
                }
                let gw = &mut grad[off + i * in_w..off + (i + 1) * in_w];
                for j in 0..in_w {
                    gw[j] += di * input[j];
                }
                grad[off + out_w * in_w + i] += di;
            }
            if l > 0 {
                let weights = &self.params[off..off + out_w * in_w];
                let mut prev = vec![0.0; in_w];
                for i in 0..out_w {
                    let di = delta[i];
                    if di == 0.0 {
                        continue;
                    }
                    let row = &weights[i * in_w..(i + 1) * in_w];
                    for j in 0..in_w {
                        prev[j] += di * row[j];
                    }
                }
                // ReLU gate: activation > 0 iff pre-activation > 0
                for j in 0..in_w {
                    if input[j] <= 0.0 {
                        prev[j] = 0.0;
                    }
                }
                delta = prev;
            }
        }
        Ok(())
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        out.write_all(&(self.widths.len() as u32).to_le_bytes())?;
        for w in &self.widths {
            out.write_all(&(*w as u32).to_le_bytes())?;
        }
        for p in &self.params {
            out.write_all(&p.to_le_bytes())?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if &magic != CHECKPOINT_MAGIC {
            return Err(Error::Input(format!(
                "not a model checkpoint: bad magic {magic:?} in {}",
                path.display()
            )));
        }
        let mut u32_buf = [0u8; 4];
        input.read_exact(&mut u32_buf)?;
        let version = u32::from_le_bytes(u32_buf);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Input(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        input.read_exact(&mut u32_buf)?;
        let num_widths = u32::from_le_bytes(u32_buf) as usize;
        let mut widths = Vec::with_capacity(num_widths);
        for _ in 0..num_widths {
            input.read_exact(&mut u32_buf)?;
            widths.push(u32::from_le_bytes(u32_buf) as usize);
        }
        validate_widths(&widths)?;
        let mut params = vec![0.0; param_count_for(&widths)];
        let mut f64_buf = [0u8; 8];
        for p in params.iter_mut() {
            input.read_exact(&mut f64_buf)?;
            *p = f64::from_le_bytes(f64_buf);
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Input(format!(
                "checkpoint {} holds non-finite parameters",
                path.display()
            )));
        }
        Ok(Self { widths, params })
    }
}
