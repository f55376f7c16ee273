//! Fully connected Q-network with ReLU hidden layers and a linear head.
//!
//! All weights and biases live in one flat buffer so the optimizer and the
//! gradient code can treat them as a single vector. Layer `l` stores its
//! weights input-major (`w[i * out + j]` connects input `i` to unit `j`),
//! followed by its `out` biases.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams {
    sizes: Vec<usize>,
    data: Vec<f64>,
}

impl MlpParams {
    /// All-zero parameters for the topology `sizes` (input, hidden..., output).
    pub fn zeros(sizes: &[usize]) -> Self {
        assert!(sizes.len() >= 2, "topology needs at least an input and an output layer");
        let len = sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        Self {
            sizes: sizes.to_vec(),
            data: vec![0.0; len],
        }
    }

    /// Uniform init in `±1/√fan_in`, weights and biases alike.
    pub fn random<R: Rng + ?Sized>(sizes: &[usize], rng: &mut R) -> Self {
        let mut params = Self::zeros(sizes);
        for l in 0..params.num_layers() {
            let bound = 1.0 / (params.sizes[l] as f64).sqrt();
            let (start, end) = params.layer_range(l);
            for v in &mut params.data[start..end] {
                *v = rng.random_range(-bound..=bound);
            }
        }
        params
    }

    /// A tensor of the same shape filled with zeros.
    pub fn zeros_like(&self) -> Self {
        Self::zeros(&self.sizes)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn num_layers(&self) -> usize {
        self.sizes.len() - 1
    }

    pub fn n_inputs(&self) -> usize {
        self.sizes[0]
    }

    pub fn n_outputs(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    fn layer_offset(&self, layer: usize) -> usize {
        self.sizes[..=layer]
            .windows(2)
            .map(|w| w[0] * w[1] + w[1])
            .sum()
    }

    fn layer_range(&self, layer: usize) -> (usize, usize) {
        let start = self.layer_offset(layer);
        let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
        (start, start + n_in * n_out + n_out)
    }

    /// Weights (input-major, `in × out`) and bias vector of a layer.
    pub fn layer(&self, layer: usize) -> (&[f64], &[f64]) {
        let (start, end) = self.layer_range(layer);
        let n_w = self.sizes[layer] * self.sizes[layer + 1];
        self.data[start..end].split_at(n_w)
    }

    pub fn layer_mut(&mut self, layer: usize) -> (&mut [f64], &mut [f64]) {
        let (start, end) = self.layer_range(layer);
        let n_w = self.sizes[layer] * self.sizes[layer + 1];
        self.data[start..end].split_at_mut(n_w)
    }

    pub fn forward(&self, input: &[f64]) -> Result<Vec<f64>> {
        self.check_input(input)?;
        let mut acts = Vec::new();
        self.forward_batch(input, 1, &mut acts);
        Ok(acts.pop().unwrap())
    }

    pub(crate) fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.n_inputs() {
            return Err(Error::Shape {
                expected: self.n_inputs(),
                got: input.len(),
            });
        }
        Ok(())
    }

    /// Runs `batch` row-major inputs through the network, leaving the inputs
    /// and every layer's outputs (`batch × width`) in `acts`. Buffers already
    /// in `acts` are reused.
    pub(crate) fn forward_batch(&self, inputs: &[f64], batch: usize, acts: &mut Vec<Vec<f64>>) {
        let n_layers = self.num_layers();
        debug_assert_eq!(inputs.len(), batch * self.n_inputs());
        acts.resize_with(n_layers + 1, Vec::new);
        acts[0].clear();
        acts[0].extend_from_slice(inputs);
        for l in 0..n_layers {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let (w, b) = self.layer(l);
            let (done, rest) = acts.split_at_mut(l + 1);
            let out = &mut rest[0];
            out.clear();
            for _ in 0..batch {
                out.extend_from_slice(b);
            }
            // out += X · W
            gemm(
                (batch, n_in, n_out),
                (&done[l], n_in, 1),
                (w, n_out, 1),
                1.0,
                (out, n_out),
            );
            if l + 1 != n_layers {
                out.iter_mut().for_each(|o| *o = o.max(0.0));
            }
        }
    }

    /// Accumulates into `grad` the gradient of `Σ d_out ⊙ output` given the
    /// activations of a previous [`forward_batch`](Self::forward_batch).
    pub(crate) fn backward_batch(&self, acts: &[Vec<f64>], d_out: &[f64], batch: usize, grad: &mut MlpParams) {
        let mut delta = d_out.to_vec();
        let mut prev = Vec::new();
        for l in (0..self.num_layers()).rev() {
            let (n_in, n_out) = (self.sizes[l], self.sizes[l + 1]);
            let x = &acts[l];
            {
                let (gw, gb) = grad.layer_mut(l);
                // gW += Xᵀ · Δ
                gemm((n_in, batch, n_out), (x, 1, n_in), (&delta, n_out, 1), 1.0, (gw, n_out));
                for row in delta.chunks_exact(n_out) {
                    gb.iter_mut().zip(row).for_each(|(g, d)| *g += d);
                }
            }
            if l == 0 {
                break;
            }
            let (w, _) = self.layer(l);
            prev.clear();
            prev.resize(batch * n_in, 0.0);
            // Δ_prev = Δ · Wᵀ, masked by the ReLU derivative
            gemm((batch, n_out, n_in), (&delta, n_out, 1), (w, 1, n_out), 0.0, (&mut prev, n_in));
            prev.iter_mut().zip(x).for_each(|(p, xi)| {
                if *xi <= 0.0 {
                    *p = 0.0;
                }
            });
            std::mem::swap(&mut delta, &mut prev);
        }
    }

    /// Writes a weight snapshot: two `#` header lines (topology, seed) and
    /// `layer,kind,row,col,value` rows, where `row` is the unit and `col` the
    /// input. Biases use `col = 0`.
    pub fn write_csv(&self, path: &Path, seed: u64) -> Result<()> {
        let io_err = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let file = std::fs::File::create(path).map_err(io_err)?;
        let mut w = std::io::BufWriter::new(file);
        let topology: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        writeln!(w, "# topology={}", topology.join(",")).map_err(io_err)?;
        writeln!(w, "# seed={seed}").map_err(io_err)?;
        writeln!(w, "layer,kind,row,col,value").map_err(io_err)?;
        for l in 0..self.num_layers() {
            let n_out = self.sizes[l + 1];
            let (wts, bs) = self.layer(l);
            for (k, v) in wts.iter().enumerate() {
                writeln!(w, "{l},w,{},{},{v}", k % n_out, k / n_out).map_err(io_err)?;
            }
            for (j, v) in bs.iter().enumerate() {
                writeln!(w, "{l},b,{j},0,{v}").map_err(io_err)?;
            }
        }
        w.flush().map_err(io_err)
    }

    /// Reads a snapshot written by [`write_csv`](Self::write_csv).
    pub fn read_csv(path: &Path) -> Result<(Self, u64)> {
        let parse_err = |detail: String| Error::Parse {
            path: path.to_path_buf(),
            detail,
        };
        let file = std::fs::File::open(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut lines = BufReader::new(file).lines();
        let mut next_line = || -> Result<Option<String>> {
            lines.next().transpose().map_err(|source| Error::Io {
                path: path.to_path_buf(),
                source,
            })
        };
        let topology = next_line()?
            .and_then(|l| l.strip_prefix("# topology=").map(str::to_owned))
            .ok_or_else(|| parse_err("missing topology header".into()))?;
        let sizes = topology
            .split(',')
            .map(|s| s.trim().parse::<usize>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| parse_err(format!("bad topology: {e}")))?;
        if sizes.len() < 2 {
            return Err(parse_err("topology needs at least two layers".into()));
        }
        let seed = next_line()?
            .and_then(|l| l.strip_prefix("# seed=").map(str::to_owned))
            .ok_or_else(|| parse_err("missing seed header".into()))?
            .trim()
            .parse::<u64>()
            .map_err(|e| parse_err(format!("bad seed: {e}")))?;
        if next_line()?.as_deref() != Some("layer,kind,row,col,value") {
            return Err(parse_err("missing column header".into()));
        }
        let mut params = Self::zeros(&sizes);
        let mut seen = 0;
        while let Some(line) = next_line()? {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(parse_err(format!("expected 5 fields: {line}")));
            }
            let num = |s: &str| s.parse::<usize>().map_err(|e| parse_err(format!("{e}: {line}")));
            let (l, row, col) = (num(f[0])?, num(f[2])?, num(f[3])?);
            let value = f[4]
                .parse::<f64>()
                .map_err(|e| parse_err(format!("{e}: {line}")))?;
            if l >= params.num_layers() {
                return Err(parse_err(format!("layer out of range: {line}")));
            }
            let n_in = sizes[l];
            let n_out = sizes[l + 1];
            let (w, b) = params.layer_mut(l);
            match f[1] {
                "w" if row < n_out && col < n_in => w[col * n_out + row] = value,
                "b" if row < n_out && col == 0 => b[row] = value,
                _ => return Err(parse_err(format!("bad entry: {line}"))),
            }
            seen += 1;
        }
        if seen != params.len() {
            return Err(parse_err(format!("expected {} entries, found {seen}", params.len())));
        }
        Ok((params, seed))
    }
}

/// `C = A·B + beta·C` for an `m × k` by `k × n` product. Operands are
/// given with their row and column strides; `C` is row-major with row
/// stride `ldc`.
fn gemm(
    (m, k, n): (usize, usize, usize),
    (a, rsa, csa): (&[f64], usize, usize),
    (b, rsb, csb): (&[f64], usize, usize),
    beta: f64,
    (c, ldc): (&mut [f64], usize),
) {
    if m == 0 || n == 0 {
        return;
    }
    assert!(k == 0 || a.len() > (m - 1) * rsa + (k - 1) * csa);
    assert!(k == 0 || b.len() > (k - 1) * rsb + (n - 1) * csb);
    assert!(c.len() > (m - 1) * ldc + (n - 1));
    // SAFETY: the asserts above keep every indexed element inside the slices.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa as isize,
            csa as isize,
            b.as_ptr(),
            rsb as isize,
            csb as isize,
            beta,
            c.as_mut_ptr(),
            ldc as isize,
            1,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_network_outputs_zero() {
        let net = MlpParams::zeros(&[4, 32, 32, 32, 15]);
        let out = net.forward(&[0.3, 0.1, -0.2, 0.9]).unwrap();
        assert_eq!(out, vec![0.0; 15]);
    }

    #[test]
    fn single_layer_is_affine() {
        let mut net = MlpParams::zeros(&[2, 2]);
        {
            let (w, b) = net.layer_mut(0);
            // input-major: column i holds input i's weights to each unit
            w.copy_from_slice(&[1.0, -3.0, 2.0, 0.5]);
            b.copy_from_slice(&[0.25, -1.0]);
        }
        // [1 2; -3 0.5]·[2, -1] + [0.25, -1] = [0.25, -7.5 - 1]
        let out = net.forward(&[2.0, -1.0]).unwrap();
        assert_eq!(out, vec![0.25, -7.5]);
    }

    #[test]
    fn hidden_relu_clips() {
        let mut net = MlpParams::zeros(&[1, 2, 1]);
        {
            let (w, b) = net.layer_mut(0);
            w.copy_from_slice(&[1.0, -1.0]);
            b.copy_from_slice(&[0.0, 0.0]);
        }
        {
            let (w, b) = net.layer_mut(1);
            w.copy_from_slice(&[2.0, 3.0]);
            b[0] = 0.5;
        }
        // hidden = relu([x, -x]); out = 2·relu(x) + 3·relu(-x) + 0.5
        assert_eq!(net.forward(&[1.5]).unwrap(), vec![3.5]);
        assert_eq!(net.forward(&[-1.0]).unwrap(), vec![3.5]);
    }

    #[test]
    fn forward_is_deterministic_and_checks_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let net = MlpParams::random(&[4, 32, 32, 32, 15], &mut rng);
        let x = [0.4, 0.4, 0.24, 0.24];
        let a = net.forward(&x).unwrap();
        let b = net.forward(&x).unwrap();
        assert_eq!(a.len(), 15);
        assert!(a.iter().zip(&b).all(|(p, q)| p.to_bits() == q.to_bits()));
        assert!(matches!(net.forward(&[1.0]), Err(Error::Shape { expected: 4, got: 1 })));
    }

    #[test]
    fn init_respects_fan_in_bounds() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let net = MlpParams::random(&[4, 32, 15], &mut rng);
        let (w0, _) = net.layer(0);
        let (w1, b1) = net.layer(1);
        assert!(w0.iter().all(|v| v.abs() <= 0.5));
        assert!(w1.iter().chain(b1).all(|v| v.abs() <= 1.0 / 32f64.sqrt()));
        assert_eq!(net.len(), 4 * 32 + 32 + 32 * 15 + 15);
    }

    #[test]
    fn snapshot_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("w.csv");
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = MlpParams::random(&[4, 8, 3], &mut rng);
        net.write_csv(&path, 42).unwrap();
        let (back, seed) = MlpParams::read_csv(&path).unwrap();
        assert_eq!(seed, 42);
        assert_eq!(back, net);
        let text = std::fs::read_to_string(&path).unwrap();
        assert!(text.starts_with("# topology=4,8,3\n# seed=42\nlayer,kind,row,col,value\n"));
    }
}
