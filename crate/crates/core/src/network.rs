//! Fully connected tanh network mapping coordinates to raw displacements.
//!
//! Parameters are flattened layer by layer: the weight matrix in row-major
//! order (`out × in`), then the bias. Batch evaluation is split into fixed
//! chunks whose partial gradients are summed in chunk order, so results do not
//! depend on the number of worker threads.

use std::io::{Read, Write};
use std::path::Path;

use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::scalar::Real;

const CHUNK: usize = 128;
const CKPT_MAGIC: &str = "demplast-checkpoint 1";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Linear,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub n_in: usize,
    pub n_out: usize,
    /// Row-major `n_out × n_in`.
    pub weights: Vec<T>,
    pub bias: Vec<T>,
    pub activation: Activation,
}

impl<T: Real> Layer<T> {
    fn param_count(&self) -> usize {
        self.n_in * self.n_out + self.n_out
    }

    fn apply(&self, x: &[T], out: &mut Vec<T>) {
        out.clear();
        for o in 0..self.n_out {
            let row = &self.weights[o * self.n_in..(o + 1) * self.n_in];
            let mut z = self.bias[o];
            for (w, xi) in row.iter().zip(x) {
                z = z + *w * *xi;
            }
            out.push(match self.activation {
                Activation::Tanh => z.tanh(),
                Activation::Linear => z,
            });
        }
    }
}

/// Affine map of the bounding box `[lo, hi]` onto `[-1, 1]³`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InputScaling<T> {
    pub lo: [T; 3],
    pub hi: [T; 3],
}

impl<T: Real> InputScaling<T> {
    pub fn new(lo: [T; 3], hi: [T; 3]) -> Result<Self> {
        for d in 0..3 {
            if !(hi[d] > lo[d]) {
                return Err(Error::Network(format!("degenerate input scaling on axis {d}")));
            }
        }
        Ok(Self { lo, hi })
    }

    fn map(&self, x: &[T; 3]) -> [T; 3] {
        let two = T::lit(2.0);
        std::array::from_fn(|d| two * (x[d] - self.lo[d]) / (self.hi[d] - self.lo[d]) - T::one())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Network<T> {
    pub layers: Vec<Layer<T>>,
    pub scaling: Option<InputScaling<T>>,
}

fn check_widths(widths: &[usize]) -> Result<()> {
    if widths.len() < 2 {
        return Err(Error::Network("need at least an input and an output width".into()));
    }
    if widths[0] != 3 || widths[widths.len() - 1] != 3 {
        return Err(Error::Network(format!("widths must start and end at 3, got {widths:?}")));
    }
    if widths.contains(&0) {
        return Err(Error::Network(format!("zero-width layer in {widths:?}")));
    }
    Ok(())
}

/// `Σ (in·out + out)` over consecutive widths.
pub fn param_count_for(widths: &[usize]) -> usize {
    widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl<T: Real> Network<T> {
    /// Glorot-uniform weights, zero biases, reproducible from `seed`.
    pub fn init(widths: &[usize], seed: u64) -> Result<Self> {
        check_widths(widths)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = widths.len() - 1;
        let layers = widths
            .windows(2)
            .enumerate()
            .map(|(k, w)| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                let dist = Uniform::new_inclusive(-limit, limit);
                Layer {
                    n_in: w[0],
                    n_out: w[1],
                    weights: (0..w[0] * w[1]).map(|_| T::lit(dist.sample(&mut rng))).collect(),
                    bias: vec![T::zero(); w[1]],
                    activation: if k + 1 == n { Activation::Linear } else { Activation::Tanh },
                }
            })
            .collect();
        Ok(Self { layers, scaling: None })
    }

    /// Network with every parameter zero.
    pub fn zeros(widths: &[usize]) -> Result<Self> {
        let mut net = Self::init(widths, 0)?;
        net.set_params(&vec![T::zero(); net.param_count()])?;
        Ok(net)
    }

    pub fn with_scaling(mut self, scaling: Option<InputScaling<T>>) -> Self {
        self.scaling = scaling;
        self
    }

    /// Zeroes the output layer so the initial raw field is identically zero.
    pub fn zero_output_layer(&mut self) {
        if let Some(last) = self.layers.last_mut() {
            last.weights.iter_mut().for_each(|w| *w = T::zero());
            last.bias.iter_mut().for_each(|b| *b = T::zero());
        }
    }

    /// Multiplies the output layer's weights and bias by `s`.
    pub fn scale_output_layer(&mut self, s: T) {
        if let Some(last) = self.layers.last_mut() {
            last.weights.iter_mut().chain(last.bias.iter_mut()).for_each(|w| *w = *w * s);
        }
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w = vec![self.layers[0].n_in];
        w.extend(self.layers.iter().map(|l| l.n_out));
        w
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(Layer::param_count).sum()
    }

    /// Flattened parameter vector.
    pub fn params(&self) -> Vec<T> {
        let mut p = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            p.extend_from_slice(&l.weights);
            p.extend_from_slice(&l.bias);
        }
        p
    }

    /// Inverse of [`Network::params`].
    pub fn set_params(&mut self, p: &[T]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(Error::Network(format!(
                "parameter vector has length {}, network needs {}",
                p.len(),
                self.param_count()
            )));
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.weights.len();
            l.weights.copy_from_slice(&p[off..off + nw]);
            off += nw;
            let nb = l.bias.len();
            l.bias.copy_from_slice(&p[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    fn input(&self, x: &[T; 3]) -> [T; 3] {
        match &self.scaling {
            Some(s) => s.map(x),
            None => *x,
        }
    }

    fn eval_point(&self, x: &[T; 3], buf: &mut Vec<T>, tmp: &mut Vec<T>) -> [T; 3] {
        buf.clear();
        buf.extend_from_slice(&self.input(x));
        for l in &self.layers {
            l.apply(buf, tmp);
            std::mem::swap(buf, tmp);
        }
        [buf[0], buf[1], buf[2]]
    }

    /// Raw displacements for a batch of coordinates.
    pub fn forward(&self, coords: &[[T; 3]]) -> Vec<[T; 3]> {
        coords
            .par_chunks(CHUNK)
            .flat_map_iter(|chunk| {
                let (mut buf, mut tmp) = (Vec::new(), Vec::new());
                chunk.iter().map(move |x| self.eval_point(x, &mut buf, &mut tmp)).collect::<Vec<_>>()
            })
            .collect()
    }

    /// Gradient of `Σ_k ⟨upstream_k, ũ(coords_k)⟩` with respect to the
    /// flattened parameters.
    pub fn backward(&self, coords: &[[T; 3]], upstream: &[[T; 3]]) -> Result<Vec<T>> {
        if coords.len() != upstream.len() {
            return Err(Error::Network(format!(
                "upstream batch has {} rows, coordinates have {}",
                upstream.len(),
                coords.len()
            )));
        }
        let partials: Vec<Vec<T>> = coords
            .par_chunks(CHUNK)
            .zip(upstream.par_chunks(CHUNK))
            .map(|(xc, gc)| self.backward_chunk(xc, gc))
            .collect();
        let mut grad = vec![T::zero(); self.param_count()];
        for p in partials {
            for (g, v) in grad.iter_mut().zip(p) {
                *g = *g + v;
            }
        }
        Ok(grad)
    }

    fn backward_chunk(&self, coords: &[[T; 3]], upstream: &[[T; 3]]) -> Vec<T> {
        let mut grad = vec![T::zero(); self.param_count()];
        let offsets: Vec<usize> = self
            .layers
            .iter()
            .scan(0, |o, l| {
                let cur = *o;
                *o += l.param_count();
                Some(cur)
            })
            .collect();
        let mut acts: Vec<Vec<T>> = vec![Vec::new(); self.layers.len() + 1];
        let mut delta = Vec::new();
        let mut prev = Vec::new();
        for (x, up) in coords.iter().zip(upstream) {
            if up.iter().all(|v| *v == T::zero()) {
                continue;
            }
            acts[0].clear();
            acts[0].extend_from_slice(&self.input(x));
            for (k, l) in self.layers.iter().enumerate() {
                let (head, tail) = acts.split_at_mut(k + 1);
                l.apply(&head[k], &mut tail[0]);
            }
            delta.clear();
            delta.extend_from_slice(up);
            for (k, l) in self.layers.iter().enumerate().rev() {
                if l.activation == Activation::Tanh {
                    for (d, a) in delta.iter_mut().zip(&acts[k + 1]) {
                        *d = *d * (T::one() - *a * *a);
                    }
                }
                let input = &acts[k];
                let off = offsets[k];
                let (gw, gb) = grad[off..off + l.param_count()].split_at_mut(l.n_in * l.n_out);
                for o in 0..l.n_out {
                    let d = delta[o];
                    if d == T::zero() {
                        continue;
                    }
                    gb[o] = gb[o] + d;
                    let row = &mut gw[o * l.n_in..(o + 1) * l.n_in];
                    for (g, a) in row.iter_mut().zip(input) {
                        *g = *g + d * *a;
                    }
                }
                if k > 0 {
                    prev.clear();
                    prev.resize(l.n_in, T::zero());
                    for o in 0..l.n_out {
                        let d = delta[o];
                        let row = &l.weights[o * l.n_in..(o + 1) * l.n_in];
                        for (p, w) in prev.iter_mut().zip(row) {
                            *p = *p + d * *w;
                        }
                    }
                    std::mem::swap(&mut delta, &mut prev);
                }
            }
        }
        grad
    }

    pub fn cast<U: Real>(&self) -> Network<U> {
        let c = |v: &[T]| v.iter().map(|x| U::lit(x.as_f64())).collect::<Vec<U>>();
        Network {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    n_in: l.n_in,
                    n_out: l.n_out,
                    weights: c(&l.weights),
                    bias: c(&l.bias),
                    activation: l.activation,
                })
                .collect(),
            scaling: self.scaling.map(|s| InputScaling {
                lo: s.lo.map(|v| U::lit(v.as_f64())),
                hi: s.hi.map(|v| U::lit(v.as_f64())),
            }),
        }
    }

    /// Writes the architecture header followed by the parameters as
    /// little-endian `f64`.
    pub fn save_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let widths: Vec<String> = self.widths().iter().map(|w| w.to_string()).collect();
        let mut head = format!("{CKPT_MAGIC}\nwidths {}\n", widths.join(" "));
        match &self.scaling {
            Some(s) => {
                let v: Vec<String> = s.lo.iter().chain(&s.hi).map(|x| format!("{:?}", x.as_f64())).collect();
                head.push_str(&format!("scaling {}\n", v.join(" ")));
            }
            None => head.push_str("scaling none\n"),
        }
        head.push_str(&format!("params {}\n", self.param_count()));
        let mut bytes = head.into_bytes();
        for p in self.params() {
            bytes.extend_from_slice(&p.as_f64().to_le_bytes());
        }
        let ctx = || format!("writing checkpoint {}", path.display());
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(ctx(), e))?;
        f.write_all(&bytes).map_err(|e| Error::io(ctx(), e))
    }

    pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(format!("reading checkpoint {}", path.display()), e))?;
        let bad = |m: &str| Error::Checkpoint(format!("{}: {m}", path.display()));
        let mut pos = 0;
        let mut next_line = || -> Result<String> {
            let end = bytes[pos..].iter().position(|&b| b == b'\n').ok_or_else(|| bad("truncated header"))?;
            let line = std::str::from_utf8(&bytes[pos..pos + end]).map_err(|_| bad("header is not text"))?;
            pos += end + 1;
            Ok(line.to_string())
        };
        if next_line()? != CKPT_MAGIC {
            return Err(bad("not a checkpoint file"));
        }
        let wl = next_line()?;
        let widths: Vec<usize> = wl
            .strip_prefix("widths ")
            .ok_or_else(|| bad("missing widths"))?
            .split_whitespace()
            .map(|s| s.parse().map_err(|_| bad("invalid width")))
            .collect::<Result<_>>()?;
        let sl = next_line()?;
        let sv = sl.strip_prefix("scaling ").ok_or_else(|| bad("missing scaling"))?;
        let scaling = if sv == "none" {
            None
        } else {
            let v: Vec<f64> =
                sv.split_whitespace().map(|s| s.parse().map_err(|_| bad("invalid scaling"))).collect::<Result<_>>()?;
            if v.len() != 6 {
                return Err(bad("scaling needs 6 values"));
            }
            Some(InputScaling::new([v[0], v[1], v[2]].map(T::lit), [v[3], v[4], v[5]].map(T::lit))?)
        };
        let pl = next_line()?;
        let n: usize = pl
            .strip_prefix("params ")
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("missing parameter count"))?;
        let mut net = Self::init(&widths, 0)?.with_scaling(scaling);
        if n != net.param_count() {
            return Err(bad("parameter count does not match widths"));
        }
        let data = &bytes[pos..];
        if data.len() != 8 * n {
            return Err(bad(&format!("expected {} parameter bytes, found {}", 8 * n, data.len())));
        }
        let p: Vec<T> = data
            .chunks_exact(8)
            .map(|c| T::lit(f64::from_le_bytes(c.try_into().expect("8 bytes"))))
            .collect();
        net.set_params(&p)?;
        Ok(net)
    }
}
