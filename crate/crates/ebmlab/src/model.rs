//! Conditional and marginal energy models over normalized domains.
//!
//! A `ConditionalEbm` wraps a net as E(x, y); a `MarginalEbm` wraps one as
//! E(y). Observations and actions are mapped into the canonical [-1, 1]
//! range per dimension before hitting the net. Sampling and the losses all
//! operate in normalized action space; only `energy`, `energy_grad_y` and
//! inference touch raw units.

use crate::error::{Error, Result};
use crate::nn::{BlockScratch, DenseEnergyNet};

/// Per-dimension affine map onto [-1, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    min: Vec<f64>,
    max: Vec<f64>,
}

impl Normalizer {
    pub fn new(min: Vec<f64>, max: Vec<f64>) -> Result<Self> {
        if min.len() != max.len() {
            return Err(Error::Shape(format!(
                "normalizer min/max lengths differ: {} vs {}",
                min.len(),
                max.len()
            )));
        }
        if min.is_empty() {
            return Err(Error::Config("normalizer needs at least one dimension".into()));
        }
        for d in 0..min.len() {
            if !min[d].is_finite() || !max[d].is_finite() || max[d] <= min[d] {
                return Err(Error::Config(format!(
                    "normalizer range [{}, {}] invalid in dimension {d}",
                    min[d], max[d]
                )));
            }
        }
        Ok(Self { min, max })
    }

    /// Identity-range normalizer: [-1, 1] maps to itself.
    pub fn identity(dim: usize) -> Self {
        Self { min: vec![-1.0; dim], max: vec![1.0; dim] }
    }

    /// Fit per-dimension extremes over `rows`. Degenerate dimensions
    /// (max == min) are widened by 0.5 on each side so the map stays
    /// invertible.
    pub fn fit<'a, I>(dim: usize, rows: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let mut min = vec![f64::INFINITY; dim];
        let mut max = vec![f64::NEG_INFINITY; dim];
        let mut any = false;
        for row in rows {
            if row.len() != dim {
                return Err(Error::Shape(format!("row length {} != dim {dim}", row.len())));
            }
            any = true;
            for d in 0..dim {
                min[d] = min[d].min(row[d]);
                max[d] = max[d].max(row[d]);
            }
        }
        if !any {
            return Err(Error::Config("cannot fit a normalizer to an empty dataset".into()));
        }
        for d in 0..dim {
            if max[d] - min[d] < 1e-12 {
                min[d] -= 0.5;
                max[d] += 0.5;
            }
        }
        Self::new(min, max)
    }

    pub fn dim(&self) -> usize {
        self.min.len()
    }

    pub fn min(&self) -> &[f64] {
        &self.min
    }

    pub fn max(&self) -> &[f64] {
        &self.max
    }

    fn check(&self, v: &[f64]) -> Result<()> {
        if v.len() != self.dim() {
            return Err(Error::Shape(format!(
                "vector length {} does not match normalizer dimension {}",
                v.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Affine map sending min to -1 and max to +1 per dimension.
    /// Out-of-range values pass through unclamped.
    pub fn normalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; v.len()];
        self.normalize_into(v, &mut out);
        Ok(out)
    }

    pub fn normalize_into(&self, v: &[f64], out: &mut [f64]) {
        for d in 0..v.len() {
            out[d] = 2.0 * (v[d] - self.min[d]) / (self.max[d] - self.min[d]) - 1.0;
        }
    }

    /// Inverse of `normalize`.
    pub fn denormalize(&self, v: &[f64]) -> Result<Vec<f64>> {
        self.check(v)?;
        let mut out = vec![0.0; v.len()];
        for d in 0..v.len() {
            out[d] = self.min[d] + (v[d] + 1.0) * 0.5 * (self.max[d] - self.min[d]);
        }
        Ok(out)
    }

    /// d(normalized)/d(raw) for each dimension: 2 / (max - min).
    pub fn jacobian_diag(&self) -> Vec<f64> {
        self.min.iter().zip(&self.max).map(|(lo, hi)| 2.0 / (hi - lo)).collect()
    }
}

/// Conditional EBM E(x, y). The Gibbs density exp(-E)/Z is never
/// materialized; losses only ever approximate it from samples.
#[derive(Debug, Clone)]
pub struct ConditionalEbm {
    pub net: DenseEnergyNet,
    pub obs_normalizer: Normalizer,
    pub act_normalizer: Normalizer,
}

impl ConditionalEbm {
    pub fn new(net: DenseEnergyNet, obs_normalizer: Normalizer, act_normalizer: Normalizer) -> Result<Self> {
        let want = obs_normalizer.dim() + act_normalizer.dim();
        if net.input_dim() != want {
            return Err(Error::Shape(format!(
                "net input width {} != obs_dim {} + act_dim {}",
                net.input_dim(),
                obs_normalizer.dim(),
                act_normalizer.dim()
            )));
        }
        Ok(Self { net, obs_normalizer, act_normalizer })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_normalizer.dim()
    }

    pub fn act_dim(&self) -> usize {
        self.act_normalizer.dim()
    }

    /// Energy at raw-unit observation and action.
    pub fn energy(&self, x: &[f64], y: &[f64]) -> Result<f64> {
        let xn = self.obs_normalizer.normalize(x)?;
        let yn = self.act_normalizer.normalize(y)?;
        let mut input = xn;
        input.extend_from_slice(&yn);
        self.net.forward(&input)
    }

    /// Gradient of the energy w.r.t. the raw action, including the
    /// normalizer's chain-rule factor 2/(max-min).
    pub fn energy_grad_y(&self, x: &[f64], y: &[f64]) -> Result<Vec<f64>> {
        let xn = self.obs_normalizer.normalize(x)?;
        let yn = self.act_normalizer.normalize(y)?;
        let mut input = xn;
        input.extend_from_slice(&yn);
        let bundle = self.net.forward_grad(&input, false, true)?;
        let ig = bundle.input_grad.unwrap();
        let jac = self.act_normalizer.jacobian_diag();
        Ok(ig[self.obs_dim()..].iter().zip(jac).map(|(g, j)| g * j).collect())
    }

    /// View of this model at a fixed observation, as a landscape over
    /// normalized actions.
    pub fn conditioned(&self, x: &[f64]) -> Result<ConditionedEnergy<'_>> {
        let obs_norm = self.obs_normalizer.normalize(x)?;
        Ok(ConditionedEnergy { ebm: self, obs_norm })
    }
}

/// Marginal EBM E(y) over actions alone.
#[derive(Debug, Clone)]
pub struct MarginalEbm {
    pub net: DenseEnergyNet,
    pub act_normalizer: Normalizer,
}

impl MarginalEbm {
    pub fn new(net: DenseEnergyNet, act_normalizer: Normalizer) -> Result<Self> {
        if net.input_dim() != act_normalizer.dim() {
            return Err(Error::Shape(format!(
                "net input width {} != act_dim {}",
                net.input_dim(),
                act_normalizer.dim()
            )));
        }
        Ok(Self { net, act_normalizer })
    }

    pub fn act_dim(&self) -> usize {
        self.act_normalizer.dim()
    }

    pub fn energy(&self, y: &[f64]) -> Result<f64> {
        let yn = self.act_normalizer.normalize(y)?;
        self.net.forward(&yn)
    }
}

/// An energy landscape over normalized action space: what Langevin chains
/// and inference descend. Implemented by conditioned/marginal models and by
/// analytic targets used in diagnostics.
///
/// `first_chain` is the global index of the first row's chain; landscapes
/// that condition per chain (see [`RowConditioned`]) use it to select the
/// observation, everything else ignores it.
pub trait EnergyTarget: Sync {
    fn act_dim(&self) -> usize;

    /// Energies and gradients for `rows` normalized actions stored row-major
    /// in `ys`. `ws` is a per-worker scratch reused across calls.
    fn eval_block(
        &self,
        first_chain: usize,
        ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        ws: &mut BlockScratch,
    );

    /// Single-point convenience wrapper.
    fn eval(&self, y: &[f64], ws: &mut BlockScratch) -> (f64, Vec<f64>) {
        let mut e = [0.0];
        let mut g = vec![0.0; y.len()];
        self.eval_block(0, y, 1, &mut e, &mut g, ws);
        (e[0], g)
    }
}

/// Conditional model pinned at one (normalized) observation.
pub struct ConditionedEnergy<'a> {
    ebm: &'a ConditionalEbm,
    obs_norm: Vec<f64>,
}

impl ConditionedEnergy<'_> {
    pub fn observation_normalized(&self) -> &[f64] {
        &self.obs_norm
    }
}

impl EnergyTarget for ConditionedEnergy<'_> {
    fn act_dim(&self) -> usize {
        self.ebm.act_dim()
    }

    fn eval_block(
        &self,
        _first_chain: usize,
        ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        ws: &mut BlockScratch,
    ) {
        let obs_dim = self.ebm.obs_dim();
        let act_dim = self.ebm.act_dim();
        let in_dim = obs_dim + act_dim;
        let mut inputs = std::mem::take(&mut ws.inputs);
        let mut full_grads = std::mem::take(&mut ws.grads);
        inputs.resize(rows * in_dim, 0.0);
        full_grads.resize(rows * in_dim, 0.0);
        for r in 0..rows {
            inputs[r * in_dim..r * in_dim + obs_dim].copy_from_slice(&self.obs_norm);
            inputs[r * in_dim + obs_dim..(r + 1) * in_dim]
                .copy_from_slice(&ys[r * act_dim..(r + 1) * act_dim]);
        }
        self.ebm.net.energy_and_input_grad_block(&inputs, rows, energies, &mut full_grads, ws);
        for r in 0..rows {
            grads[r * act_dim..(r + 1) * act_dim]
                .copy_from_slice(&full_grads[r * in_dim + obs_dim..(r + 1) * in_dim]);
        }
        ws.inputs = inputs;
        ws.grads = full_grads;
    }
}

impl EnergyTarget for MarginalEbm {
    fn act_dim(&self) -> usize {
        self.act_normalizer.dim()
    }

    fn eval_block(
        &self,
        _first_chain: usize,
        ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        ws: &mut BlockScratch,
    ) {
        self.net.energy_and_input_grad_block(ys, rows, energies, grads, ws);
    }
}

/// Conditional model over a batch of observations, with `chains_per_row`
/// chains assigned to each observation in order: chain `c` descends the
/// landscape of observation row `c / chains_per_row`. This lets one chain
/// run cover a whole minibatch of per-positive Langevin negatives.
pub struct RowConditioned<'a> {
    ebm: &'a ConditionalEbm,
    obs_norm_rows: &'a [f64],
    obs_rows: usize,
    chains_per_row: usize,
}

impl<'a> RowConditioned<'a> {
    pub fn new(
        ebm: &'a ConditionalEbm,
        obs_norm_rows: &'a [f64],
        obs_rows: usize,
        chains_per_row: usize,
    ) -> Result<Self> {
        if obs_norm_rows.len() != obs_rows * ebm.obs_dim() {
            return Err(Error::Shape(format!(
                "observation block has {} values, expected {} rows x {} dims",
                obs_norm_rows.len(),
                obs_rows,
                ebm.obs_dim()
            )));
        }
        if chains_per_row == 0 {
            return Err(Error::Config("chains_per_row must be positive".into()));
        }
        Ok(Self { ebm, obs_norm_rows, obs_rows, chains_per_row })
    }

    pub fn chain_count(&self) -> usize {
        self.obs_rows * self.chains_per_row
    }
}

impl EnergyTarget for RowConditioned<'_> {
    fn act_dim(&self) -> usize {
        self.ebm.act_dim()
    }

    fn eval_block(
        &self,
        first_chain: usize,
        ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        ws: &mut BlockScratch,
    ) {
        let obs_dim = self.ebm.obs_dim();
        let act_dim = self.ebm.act_dim();
        let in_dim = obs_dim + act_dim;
        let mut inputs = std::mem::take(&mut ws.inputs);
        let mut full_grads = std::mem::take(&mut ws.grads);
        inputs.resize(rows * in_dim, 0.0);
        full_grads.resize(rows * in_dim, 0.0);
        for r in 0..rows {
            let data_row = (first_chain + r) / self.chains_per_row;
            debug_assert!(data_row < self.obs_rows);
            inputs[r * in_dim..r * in_dim + obs_dim]
                .copy_from_slice(&self.obs_norm_rows[data_row * obs_dim..(data_row + 1) * obs_dim]);
            inputs[r * in_dim + obs_dim..(r + 1) * in_dim]
                .copy_from_slice(&ys[r * act_dim..(r + 1) * act_dim]);
        }
        self.ebm.net.energy_and_input_grad_block(&inputs, rows, energies, &mut full_grads, ws);
        for r in 0..rows {
            grads[r * act_dim..(r + 1) * act_dim]
                .copy_from_slice(&full_grads[r * in_dim + obs_dim..(r + 1) * in_dim]);
        }
        ws.inputs = inputs;
        ws.grads = full_grads;
    }
}

/// Analytic diagonal quadratic: E(y) = sum_d alpha_d (y_d - center_d)^2 / 2.
/// With alpha = 1 and center = 0 this is the standard normal's energy.
#[derive(Debug, Clone)]
pub struct QuadraticEnergy {
    pub alpha: Vec<f64>,
    pub center: Vec<f64>,
}

impl QuadraticEnergy {
    pub fn standard(dim: usize) -> Self {
        Self { alpha: vec![1.0; dim], center: vec![0.0; dim] }
    }

    pub fn new(alpha: Vec<f64>, center: Vec<f64>) -> Self {
        assert_eq!(alpha.len(), center.len());
        Self { alpha, center }
    }
}

impl EnergyTarget for QuadraticEnergy {
    fn act_dim(&self) -> usize {
        self.alpha.len()
    }

    fn eval_block(
        &self,
        _first_chain: usize,
        ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        _ws: &mut BlockScratch,
    ) {
        let d = self.alpha.len();
        for r in 0..rows {
            let y = &ys[r * d..(r + 1) * d];
            let mut e = 0.0;
            for i in 0..d {
                let dev = y[i] - self.center[i];
                e += 0.5 * self.alpha[i] * dev * dev;
                grads[r * d + i] = self.alpha[i] * dev;
            }
            energies[r] = e;
        }
    }
}

/// Constant landscape; chains under it are pure random walks.
#[derive(Debug, Clone)]
pub struct ConstantEnergy {
    pub dim: usize,
}

impl EnergyTarget for ConstantEnergy {
    fn act_dim(&self) -> usize {
        self.dim
    }

    fn eval_block(
        &self,
        _first_chain: usize,
        _ys: &[f64],
        rows: usize,
        energies: &mut [f64],
        grads: &mut [f64],
        _ws: &mut BlockScratch,
    ) {
        energies[..rows].fill(0.0);
        grads[..rows * self.dim].fill(0.0);
    }
}
