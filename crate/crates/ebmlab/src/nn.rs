//! Dense multilayer network with exact reverse-mode gradients.
//!
//! The network maps a real input vector to a scalar energy through
//! fully-connected layers with ReLU on hidden layers and identity on the
//! output. Gradients are available with respect to both the flattened
//! parameters and the input, which is all the training losses and Langevin
//! steps need.
//!
//! Parameters live in one flat array with layer-major layout: for each layer
//! `l` mapping width `n_l` to `n_{l+1}`, the weight matrix in row-major order
//! (`n_{l+1} x n_l`) followed by the `n_{l+1}` biases. The ReLU subgradient
//! at exactly zero is taken as zero, so gradients are deterministic.
//!
//! All evaluation paths go through the block kernels below: a single input is
//! just a block of one row. Blocks keep each weight row hot in cache while
//! streaming sample rows, which is what makes desk-scale Langevin sampling
//! affordable on a couple of cores.

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::Normal;

/// Scalar energy network with ReLU hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseEnergyNet {
    layer_sizes: Vec<usize>,
    params: Vec<f64>,
    /// Per-layer (weight offset, bias offset) into `params`.
    offsets: Vec<(usize, usize)>,
}

/// Scalar energy plus requested gradients.
#[derive(Debug, Clone)]
pub struct GradientBundle {
    pub value: f64,
    /// Gradient w.r.t. the flattened parameters, when requested.
    pub param_grad: Option<Vec<f64>>,
    /// Gradient w.r.t. the input vector, when requested.
    pub input_grad: Option<Vec<f64>>,
}

fn validate_layer_sizes(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Config(format!(
            "need at least input and output layer sizes, got {layer_sizes:?}"
        )));
    }
    if layer_sizes.iter().any(|&n| n == 0) {
        return Err(Error::Config(format!("layer sizes must be positive, got {layer_sizes:?}")));
    }
    if *layer_sizes.last().unwrap() != 1 {
        return Err(Error::Config(format!(
            "output dimension must be 1 (scalar energy), got {}",
            layer_sizes.last().unwrap()
        )));
    }
    Ok(())
}

fn layout(layer_sizes: &[usize]) -> (Vec<(usize, usize)>, usize) {
    let mut offsets = Vec::with_capacity(layer_sizes.len() - 1);
    let mut cursor = 0;
    for l in 0..layer_sizes.len() - 1 {
        let (rows, cols) = (layer_sizes[l + 1], layer_sizes[l]);
        offsets.push((cursor, cursor + rows * cols));
        cursor += rows * cols + rows;
    }
    (offsets, cursor)
}

impl DenseEnergyNet {
    /// Total parameter count for a layer-size sequence.
    pub fn param_count_for(layer_sizes: &[usize]) -> usize {
        layout(layer_sizes).1
    }

    /// All weights and biases drawn i.i.d. from N(0, init_scale^2);
    /// deterministic given `seed`.
    pub fn init(layer_sizes: &[usize], init_scale: f64, seed: u64) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        if !init_scale.is_finite() || init_scale < 0.0 {
            return Err(Error::Config(format!("init_scale must be non-negative, got {init_scale}")));
        }
        let (offsets, count) = layout(layer_sizes);
        let mut params = vec![0.0; count];
        if init_scale > 0.0 {
            let normal = Normal::new(0.0, init_scale)
                .map_err(|e| Error::Config(format!("bad init distribution: {e}")))?;
            let mut rng = rng::stream(seed, &[tag::PARAM_INIT]);
            for p in params.iter_mut() {
                *p = rng.sample(normal);
            }
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params, offsets })
    }

    /// All-zero parameters.
    pub fn zeros(layer_sizes: &[usize]) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let (offsets, count) = layout(layer_sizes);
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params: vec![0.0; count], offsets })
    }

    /// Rebuild a net from its flattened parameters.
    pub fn from_params(layer_sizes: &[usize], params: Vec<f64>) -> Result<Self> {
        validate_layer_sizes(layer_sizes)?;
        let (offsets, count) = layout(layer_sizes);
        if params.len() != count {
            return Err(Error::Shape(format!(
                "expected {count} parameters for layers {layer_sizes:?}, got {}",
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::NonFinite("network parameters".into()));
        }
        Ok(Self { layer_sizes: layer_sizes.to_vec(), params, offsets })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn input_dim(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    /// Mutable parameter view for the optimizer (single-writer by convention).
    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    fn weights(&self, l: usize) -> &[f64] {
        let (w_off, b_off) = self.offsets[l];
        &self.params[w_off..b_off]
    }

    fn biases(&self, l: usize) -> &[f64] {
        let (_, b_off) = self.offsets[l];
        let rows = self.layer_sizes[l + 1];
        &self.params[b_off..b_off + rows]
    }

    fn layer_count(&self) -> usize {
        self.layer_sizes.len() - 1
    }

    /// Energy at a single input. Convenience path; hot loops use the block API.
    pub fn forward(&self, input: &[f64]) -> Result<f64> {
        self.check_input(input)?;
        let mut ws = BlockScratch::new();
        let mut e = [0.0];
        self.forward_block(input, 1, &mut e, &mut ws);
        Ok(e[0])
    }

    /// Energy plus exact reverse-mode gradients. Requesting neither gradient
    /// degenerates to `forward`.
    pub fn forward_grad(
        &self,
        input: &[f64],
        want_param_grad: bool,
        want_input_grad: bool,
    ) -> Result<GradientBundle> {
        self.check_input(input)?;
        let mut ws = BlockScratch::new();
        let mut e = [0.0];
        self.forward_block(input, 1, &mut e, &mut ws);
        let mut param_grad = if want_param_grad { Some(vec![0.0; self.params.len()]) } else { None };
        let mut input_grad = if want_input_grad { Some(vec![0.0; self.input_dim()]) } else { None };
        if want_param_grad || want_input_grad {
            self.backward_from_cache(
                1,
                &[1.0],
                param_grad.as_deref_mut(),
                input_grad.as_deref_mut(),
                &mut ws,
            );
        }
        Ok(GradientBundle { value: e[0], param_grad, input_grad })
    }

    fn check_input(&self, input: &[f64]) -> Result<()> {
        if input.len() != self.input_dim() {
            return Err(Error::Shape(format!(
                "input length {} does not match network input width {}",
                input.len(),
                self.input_dim()
            )));
        }
        if input.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("network input".into()));
        }
        Ok(())
    }

    /// Forward pass over `rows` inputs stored row-major in `inputs`.
    /// Activations are cached in `ws` for a following `backward_from_cache`.
    pub fn forward_block(&self, inputs: &[f64], rows: usize, energies: &mut [f64], ws: &mut BlockScratch) {
        let in_dim = self.input_dim();
        assert_eq!(inputs.len(), rows * in_dim, "input block shape");
        assert!(energies.len() >= rows, "energy buffer too small");
        ws.ensure(&self.layer_sizes, rows);
        ws.rows = rows;
        ws.acts[0][..rows * in_dim].copy_from_slice(inputs);
        let l_count = self.layer_count();
        for l in 0..l_count {
            let (src_dim, dst_dim) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (src, dst) = split_pair(&mut ws.acts, l);
            affine_block(
                &src[..rows * src_dim],
                rows,
                src_dim,
                self.weights(l),
                self.biases(l),
                dst_dim,
                &mut dst[..rows * dst_dim],
            );
            if l != l_count - 1 {
                for v in dst[..rows * dst_dim].iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        energies[..rows].copy_from_slice(&ws.acts[l_count][..rows]);
    }

    /// Reverse pass from cached activations. `coeff[r]` seeds the output
    /// delta of row `r`, so the accumulated result is
    /// `sum_r coeff[r] * grad E(input_r)`. `param_acc` is accumulated into
    /// (not overwritten); `input_grads` is overwritten row-major, scaled by
    /// the same coefficients.
    pub fn backward_from_cache(
        &self,
        rows: usize,
        coeff: &[f64],
        mut param_acc: Option<&mut [f64]>,
        mut input_grads: Option<&mut [f64]>,
        ws: &mut BlockScratch,
    ) {
        assert_eq!(ws.rows, rows, "backward rows must match cached forward");
        assert!(coeff.len() >= rows);
        if let Some(acc) = param_acc.as_deref() {
            assert_eq!(acc.len(), self.params.len(), "param accumulator shape");
        }
        let l_count = self.layer_count();
        // Output layer has width 1: delta starts as coeff.
        ws.delta_a[..rows].copy_from_slice(&coeff[..rows]);
        let mut delta_in_a = true;
        for l in (0..l_count).rev() {
            let (src_dim, dst_dim) = (self.layer_sizes[l], self.layer_sizes[l + 1]);
            let (delta, delta_prev) = if delta_in_a {
                (&ws.delta_a, &mut ws.delta_b)
            } else {
                (&ws.delta_b, &mut ws.delta_a)
            };
            if let Some(acc) = param_acc.as_deref_mut() {
                let (w_off, b_off) = self.offsets[l];
                accumulate_layer_grads(
                    &delta[..rows * dst_dim],
                    &ws.acts[l][..rows * src_dim],
                    rows,
                    src_dim,
                    dst_dim,
                    &mut acc[w_off..b_off + dst_dim],
                );
            }
            let need_prev = l > 0 || input_grads.is_some();
            if !need_prev {
                break;
            }
            propagate_delta(
                &delta[..rows * dst_dim],
                self.weights(l),
                rows,
                src_dim,
                dst_dim,
                &mut delta_prev[..rows * src_dim],
            );
            if l > 0 {
                // ReLU mask: the cached activation is relu(z), so z > 0 iff act > 0.
                let acts = &ws.acts[l];
                for (d, &a) in delta_prev[..rows * src_dim].iter_mut().zip(&acts[..rows * src_dim]) {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                }
            } else if let Some(out) = input_grads.as_deref_mut() {
                out[..rows * src_dim].copy_from_slice(&delta_prev[..rows * src_dim]);
            }
            delta_in_a = !delta_in_a;
        }
    }

    /// Forward + input gradient for a block in one call.
    pub fn energy_and_input_grad_block(
        &self,
        inputs: &[f64],
        rows: usize,
        energies: &mut [f64],
        input_grads: &mut [f64],
        ws: &mut BlockScratch,
    ) {
        self.forward_block(inputs, rows, energies, ws);
        if ws.ones.len() < rows {
            ws.ones.resize(rows, 1.0);
        }
        let ones = std::mem::take(&mut ws.ones);
        self.backward_from_cache(rows, &ones, None, Some(input_grads), ws);
        ws.ones = ones;
    }
}

/// Reusable buffers for block evaluation. One per worker.
#[derive(Debug, Default)]
pub struct BlockScratch {
    rows: usize,
    capacity_rows: usize,
    sizes: Vec<usize>,
    acts: Vec<Vec<f64>>,
    delta_a: Vec<f64>,
    delta_b: Vec<f64>,
    ones: Vec<f64>,
    /// Staging area callers may use to assemble input rows.
    pub inputs: Vec<f64>,
    /// Staging area callers may use to receive gradients.
    pub grads: Vec<f64>,
}

impl BlockScratch {
    pub fn new() -> Self {
        Self::default()
    }

    fn ensure(&mut self, layer_sizes: &[usize], rows: usize) {
        if self.sizes == layer_sizes && rows <= self.capacity_rows {
            return;
        }
        let max_dim = *layer_sizes.iter().max().unwrap();
        self.sizes = layer_sizes.to_vec();
        self.capacity_rows = rows.max(self.capacity_rows);
        self.acts = layer_sizes.iter().map(|&n| vec![0.0; self.capacity_rows * n]).collect();
        self.delta_a = vec![0.0; self.capacity_rows * max_dim];
        self.delta_b = vec![0.0; self.capacity_rows * max_dim];
        self.rows = 0;
    }
}

fn split_pair(acts: &mut [Vec<f64>], l: usize) -> (&[f64], &mut Vec<f64>) {
    let (head, tail) = acts.split_at_mut(l + 1);
    (&head[l], &mut tail[0])
}

/// Dot product with eight independent accumulators so the reduction can
/// vectorize and pipeline.
#[inline]
fn dot(x: &[f64], w: &[f64]) -> f64 {
    let mut acc = [0.0f64; 8];
    let mut xc = x.chunks_exact(8);
    let mut wc = w.chunks_exact(8);
    for (xs, ws) in (&mut xc).zip(&mut wc) {
        for k in 0..8 {
            acc[k] += xs[k] * ws[k];
        }
    }
    let mut tail = 0.0;
    for (xi, wi) in xc.remainder().iter().zip(wc.remainder()) {
        tail += xi * wi;
    }
    (((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]))) + tail
}

/// dst[r, o] = b[o] + sum_i src[r, i] * w[o, i]
///
/// Loop order keeps each weight row resident while streaming sample rows.
fn affine_block(
    src: &[f64],
    rows: usize,
    src_dim: usize,
    w: &[f64],
    b: &[f64],
    dst_dim: usize,
    dst: &mut [f64],
) {
    for o in 0..dst_dim {
        let w_row = &w[o * src_dim..(o + 1) * src_dim];
        let bias = b[o];
        for r in 0..rows {
            let x = &src[r * src_dim..(r + 1) * src_dim];
            dst[r * dst_dim + o] = dot(x, w_row) + bias;
        }
    }
}

/// delta_prev[r, i] = sum_o delta[r, o] * w[o, i]
fn propagate_delta(
    delta: &[f64],
    w: &[f64],
    rows: usize,
    src_dim: usize,
    dst_dim: usize,
    delta_prev: &mut [f64],
) {
    delta_prev.fill(0.0);
    for o in 0..dst_dim {
        let w_row = &w[o * src_dim..(o + 1) * src_dim];
        for r in 0..rows {
            let d = delta[r * dst_dim + o];
            if d == 0.0 {
                continue;
            }
            let out = &mut delta_prev[r * src_dim..(r + 1) * src_dim];
            for i in 0..src_dim {
                out[i] += d * w_row[i];
            }
        }
    }
}

/// acc layout: one layer's weight rows then its biases.
/// acc_w[o, i] += sum_r delta[r, o] * acts[r, i]; acc_b[o] += sum_r delta[r, o]
fn accumulate_layer_grads(
    delta: &[f64],
    acts: &[f64],
    rows: usize,
    src_dim: usize,
    dst_dim: usize,
    acc: &mut [f64],
) {
    let (acc_w, acc_b) = acc.split_at_mut(dst_dim * src_dim);
    for o in 0..dst_dim {
        let w_row = &mut acc_w[o * src_dim..(o + 1) * src_dim];
        let mut b_acc = 0.0;
        for r in 0..rows {
            let d = delta[r * dst_dim + o];
            if d == 0.0 {
                continue;
            }
            b_acc += d;
            let a = &acts[r * src_dim..(r + 1) * src_dim];
            for i in 0..src_dim {
                w_row[i] += d * a[i];
            }
        }
        acc_b[o] += b_acc;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn finite_diff_param(net: &DenseEnergyNet, input: &[f64], idx: usize, h: f64) -> f64 {
        let mut plus = net.clone();
        plus.params_mut()[idx] += h;
        let mut minus = net.clone();
        minus.params_mut()[idx] -= h;
        (plus.forward(input).unwrap() - minus.forward(input).unwrap()) / (2.0 * h)
    }

    fn finite_diff_input(net: &DenseEnergyNet, input: &[f64], idx: usize, h: f64) -> f64 {
        let mut plus = input.to_vec();
        plus[idx] += h;
        let mut minus = input.to_vec();
        minus[idx] -= h;
        (net.forward(&plus).unwrap() - net.forward(&minus).unwrap()) / (2.0 * h)
    }

    fn close(analytic: f64, fd: f64) -> bool {
        (analytic - fd).abs() <= 1e-4 * analytic.abs().max(fd.abs()) + 1e-8
    }

    #[test]
    fn init_matches_requested_scale() {
        let net = DenseEnergyNet::init(&[3, 256, 256, 1], 0.05, 7).unwrap();
        assert!(net.param_count() > 10_000);
        let n = net.param_count() as f64;
        let mean: f64 = net.params().iter().sum::<f64>() / n;
        let var: f64 = net.params().iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        let std = var.sqrt();
        assert!((std - 0.05).abs() < 0.005, "sample std {std} not within 10% of 0.05");
        assert!(mean.abs() < 0.005, "sample mean {mean} too far from 0");
    }

    #[test]
    fn zero_scale_gives_zero_net() {
        let net = DenseEnergyNet::init(&[2, 4, 1], 0.0, 3).unwrap();
        assert!(net.params().iter().all(|&p| p == 0.0));
        assert_eq!(net.forward(&[0.3, -0.8]).unwrap(), 0.0);
    }

    #[test]
    fn init_is_deterministic() {
        let a = DenseEnergyNet::init(&[4, 16, 1], 0.05, 42).unwrap();
        let b = DenseEnergyNet::init(&[4, 16, 1], 0.05, 42).unwrap();
        assert_eq!(a.params(), b.params());
    }

    #[test]
    fn invalid_layer_sizes_are_config_errors() {
        assert!(matches!(DenseEnergyNet::zeros(&[3]), Err(Error::Config(_))));
        assert!(matches!(DenseEnergyNet::zeros(&[3, 0, 1]), Err(Error::Config(_))));
        assert!(matches!(DenseEnergyNet::zeros(&[3, 4, 2]), Err(Error::Config(_))));
    }

    #[test]
    fn input_dimension_mismatch_is_shape_error() {
        let net = DenseEnergyNet::zeros(&[3, 4, 1]).unwrap();
        assert!(matches!(net.forward(&[1.0, 2.0]), Err(Error::Shape(_))));
    }

    #[test]
    fn zero_weights_output_is_output_bias() {
        let mut net = DenseEnergyNet::zeros(&[2, 3, 1]).unwrap();
        let n = net.param_count();
        net.params_mut()[n - 1] = 4.25; // output bias is the last parameter
        assert_eq!(net.forward(&[0.1, 0.9]).unwrap(), 4.25);
        assert_eq!(net.forward(&[-5.0, 2.0]).unwrap(), 4.25);
    }

    #[test]
    fn hand_evaluated_two_layer_net() {
        // 1-1-1 net: hidden weight 2, hidden bias 0, output weight 3, output bias 1.
        let net = DenseEnergyNet::from_params(&[1, 1, 1], vec![2.0, 0.0, 3.0, 1.0]).unwrap();
        let out = net.forward(&[0.5]).unwrap();
        assert!((out - 4.0).abs() < 1e-15, "relu(1.0)*3+1 = 4, got {out}");
        let g = net.forward_grad(&[0.5], true, true).unwrap();
        assert!((g.input_grad.unwrap()[0] - 6.0).abs() < 1e-15, "chain rule 2*3 = 6");
        // dE/d(output weight) = hidden activation = 1, dE/d(output bias) = 1
        let pg = g.param_grad.unwrap();
        assert!((pg[2] - 1.0).abs() < 1e-15);
        assert!((pg[3] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn dead_relu_region_outputs_output_bias() {
        // Both hidden pre-activations negative for input 1.0.
        let net =
            DenseEnergyNet::from_params(&[1, 2, 1], vec![-1.0, -2.0, -0.5, -0.5, 3.0, 3.0, 0.75])
                .unwrap();
        assert_eq!(net.forward(&[1.0]).unwrap(), 0.75);
        let g = net.forward_grad(&[1.0], false, true).unwrap();
        assert_eq!(g.input_grad.unwrap()[0], 0.0);
    }

    #[test]
    fn requesting_neither_gradient_degenerates_to_forward() {
        let net = DenseEnergyNet::init(&[3, 5, 1], 0.3, 9).unwrap();
        let input = [0.2, -0.4, 0.9];
        let g = net.forward_grad(&input, false, false).unwrap();
        assert_eq!(g.value, net.forward(&input).unwrap());
        assert!(g.param_grad.is_none() && g.input_grad.is_none());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut seed_rng = crate::rng::stream(1234, &[99]);
        for case in 0..100 {
            let hidden = 1 + (case % 8);
            let in_dim = 1 + (case % 5);
            let sizes: Vec<usize> = if case % 3 == 0 {
                vec![in_dim, hidden, 1]
            } else {
                vec![in_dim, hidden, 1 + (case % 7), 1]
            };
            let net = DenseEnergyNet::init(&sizes, 0.8, seed_rng.gen()).unwrap();
            let input: Vec<f64> = (0..in_dim).map(|_| seed_rng.gen_range(-1.5..1.5)).collect();
            let g = net.forward_grad(&input, true, true).unwrap();
            let pg = g.param_grad.unwrap();
            let ig = g.input_grad.unwrap();
            for idx in 0..net.param_count() {
                let fd = finite_diff_param(&net, &input, idx, 1e-5);
                assert!(close(pg[idx], fd), "case {case}: param {idx}: analytic {} vs fd {fd}", pg[idx]);
            }
            for idx in 0..in_dim {
                let fd = finite_diff_input(&net, &input, idx, 1e-5);
                assert!(close(ig[idx], fd), "case {case}: input {idx}: analytic {} vs fd {fd}", ig[idx]);
            }
        }
    }

    #[test]
    fn affine_net_input_grad_equals_weight_row() {
        // No hidden layer: E = w . x + b, so input_grad == w exactly.
        let w = [1.5, -2.25, 0.125];
        let net = DenseEnergyNet::from_params(&[3, 1], vec![w[0], w[1], w[2], 0.7]).unwrap();
        let g = net.forward_grad(&[0.3, 0.6, -0.2], false, true).unwrap();
        assert_eq!(g.input_grad.unwrap(), w.to_vec());
    }

    #[test]
    fn evaluation_is_deterministic() {
        let net = DenseEnergyNet::init(&[4, 32, 32, 1], 0.2, 5).unwrap();
        let input = [0.1, 0.7, -0.3, 0.55];
        let a = net.forward_grad(&input, true, true).unwrap();
        let b = net.forward_grad(&input, true, true).unwrap();
        assert_eq!(a.value, b.value);
        assert_eq!(a.param_grad, b.param_grad);
        assert_eq!(a.input_grad, b.input_grad);
    }

    #[test]
    fn block_evaluation_matches_single_rows_exactly() {
        let net = DenseEnergyNet::init(&[3, 24, 24, 1], 0.4, 11).unwrap();
        let mut rng = crate::rng::stream(5, &[1]);
        let rows = 17;
        let inputs: Vec<f64> = (0..rows * 3).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut ws = BlockScratch::new();
        let mut energies = vec![0.0; rows];
        let mut grads = vec![0.0; rows * 3];
        net.energy_and_input_grad_block(&inputs, rows, &mut energies, &mut grads, &mut ws);
        for r in 0..rows {
            let row = &inputs[r * 3..(r + 1) * 3];
            let single = net.forward_grad(row, false, true).unwrap();
            assert_eq!(energies[r], single.value, "row {r} energy");
            assert_eq!(&grads[r * 3..(r + 1) * 3], single.input_grad.unwrap().as_slice(), "row {r} grad");
        }
    }

    #[test]
    fn block_param_accumulation_matches_weighted_sum() {
        let net = DenseEnergyNet::init(&[2, 6, 1], 0.5, 21).unwrap();
        let mut rng = crate::rng::stream(6, &[2]);
        let rows = 5;
        let inputs: Vec<f64> = (0..rows * 2).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let coeff: Vec<f64> = (0..rows).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut ws = BlockScratch::new();
        let mut energies = vec![0.0; rows];
        net.forward_block(&inputs, rows, &mut energies, &mut ws);
        let mut acc = vec![0.0; net.param_count()];
        net.backward_from_cache(rows, &coeff, Some(&mut acc), None, &mut ws);

        let mut expected = vec![0.0; net.param_count()];
        for r in 0..rows {
            let g = net.forward_grad(&inputs[r * 2..(r + 1) * 2], true, false).unwrap();
            for (e, pg) in expected.iter_mut().zip(g.param_grad.unwrap()) {
                *e += coeff[r] * pg;
            }
        }
        for (a, e) in acc.iter().zip(&expected) {
            assert!((a - e).abs() <= 1e-12 * e.abs().max(1.0), "{a} vs {e}");
        }
    }
}
