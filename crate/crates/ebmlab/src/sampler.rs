//! Negative-sample generation: uniform draws, Langevin chains in both
//! formulations, schedulers, clipping, chain strategies and the moments
//! diagnostic.
//!
//! Two update rules are provided. The Euler-Maruyama form with step tau
//!
//! ```text
//! y' = y - tau * grad + sqrt(2 tau) * w,   w ~ N(0, I)
//! ```
//!
//! has the Gibbs density exp(-E) as its stationary distribution (up to
//! discretization error). The ibc variant
//!
//! ```text
//! y' = y - (lambda / 2) * grad + lambda * sigma * w
//! ```
//!
//! scales the noise by lambda instead of sqrt(lambda); with small steps the
//! gradient term dominates and the chain behaves like gradient descent.
//! Setting sigma = lambda^(-1/2) makes the two rules coincide with
//! tau = lambda / 2, which the tests pin down exactly.
//!
//! Chain state lives in normalized action space. Displacements are clipped
//! per step to a fraction of the full (margined) range per coordinate, and
//! states are clamped to the margined domain.

use crate::error::{Error, Result};
use crate::model::EnergyTarget;
use crate::nn::BlockScratch;
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

/// Langevin update rule variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Formulation {
    /// Euler-Maruyama rule: noise scaled by sqrt(2 * step).
    Correct,
    /// ibc rule: noise scaled by step * sigma.
    Ibc,
}

impl std::str::FromStr for Formulation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "correct" => Ok(Formulation::Correct),
            "ibc" => Ok(Formulation::Ibc),
            other => Err(Error::Config(format!(
                "unknown formulation {other:?}; expected \"correct\" or \"ibc\""
            ))),
        }
    }
}

impl std::fmt::Display for Formulation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Formulation::Correct => write!(f, "correct"),
            Formulation::Ibc => write!(f, "ibc"),
        }
    }
}

/// Polynomial step-size schedule over a fixed horizon:
/// value(k) = end + (start - end) * (1 - k/(K-1))^power.
#[derive(Debug, Clone, PartialEq)]
pub struct PolySchedule {
    pub start: f64,
    pub end: f64,
    pub power: f64,
    pub horizon: usize,
}

impl PolySchedule {
    pub fn new(start: f64, end: f64, power: f64, horizon: usize) -> Result<Self> {
        if !(start > 0.0) || !(end > 0.0) || !(power > 0.0) {
            return Err(Error::Config(format!(
                "schedule start/end/power must be positive, got {start}/{end}/{power}"
            )));
        }
        if horizon == 0 {
            return Err(Error::Config("schedule horizon must be positive".into()));
        }
        Ok(Self { start, end, power, horizon })
    }

    /// Constant schedule, for fixed-step chains.
    pub fn constant(step: f64, horizon: usize) -> Result<Self> {
        Self::new(step, step, 1.0, horizon)
    }

    /// Step size at iteration `k`. A horizon of 1 returns `start`.
    pub fn value(&self, k: usize) -> Result<f64> {
        if k >= self.horizon {
            return Err(Error::Config(format!(
                "schedule index {k} out of range for horizon {}",
                self.horizon
            )));
        }
        if self.horizon == 1 {
            return Ok(self.start);
        }
        let frac = 1.0 - k as f64 / (self.horizon - 1) as f64;
        Ok(self.end + (self.start - self.end) * frac.powf(self.power))
    }

    fn values(&self) -> Vec<f64> {
        (0..self.horizon).map(|k| self.value(k).unwrap()).collect()
    }
}

/// Chain strategy: many independent short chains keeping only final states,
/// or one long chain with a burn-in discard.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ChainStrategy {
    ShortChains,
    LongChain,
}

/// Full specification of a negative-sampling run.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainConfig {
    pub formulation: Formulation,
    pub iterations: usize,
    pub step_schedule: PolySchedule,
    /// Noise multiplier sigma; only the ibc formulation reads it.
    pub noise_scale: f64,
    /// Per-step displacement bound as a fraction of the full margined range.
    pub per_step_clip_fraction: f64,
    /// Margin added to both ends of the normalized domain [-1, 1].
    pub domain_margin: f64,
    pub num_chains: usize,
    /// Samples discarded from the front of a long chain; 0 for short chains.
    pub burn_in: usize,
    pub strategy: ChainStrategy,
    pub seed: u64,
}

impl ChainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_chains == 0 {
            return Err(Error::Config("num_chains must be positive".into()));
        }
        if !(self.per_step_clip_fraction > 0.0 && self.per_step_clip_fraction <= 1.0) {
            return Err(Error::Config(format!(
                "per_step_clip_fraction must be in (0, 1], got {}",
                self.per_step_clip_fraction
            )));
        }
        if !(self.domain_margin >= 0.0) || !self.domain_margin.is_finite() {
            return Err(Error::Config(format!(
                "domain_margin must be non-negative, got {}",
                self.domain_margin
            )));
        }
        if self.formulation == Formulation::Ibc && !(self.noise_scale > 0.0) {
            return Err(Error::Config(format!(
                "ibc formulation needs a positive noise_scale, got {}",
                self.noise_scale
            )));
        }
        if self.iterations > 0 && self.step_schedule.horizon != self.iterations {
            return Err(Error::Config(format!(
                "schedule horizon {} must equal iterations {}",
                self.step_schedule.horizon, self.iterations
            )));
        }
        match self.strategy {
            ChainStrategy::ShortChains => {
                if self.burn_in != 0 {
                    return Err(Error::Config("short-chain strategy requires burn_in = 0".into()));
                }
            }
            ChainStrategy::LongChain => {
                if self.num_chains != 1 {
                    return Err(Error::Config("long-chain strategy runs exactly one chain".into()));
                }
                if self.burn_in >= self.iterations {
                    return Err(Error::Config(format!(
                        "long chain retains nothing: burn_in {} >= iterations {}",
                        self.burn_in, self.iterations
                    )));
                }
            }
        }
        Ok(())
    }

    /// Half-width of the margined normalized domain.
    pub fn domain_limit(&self) -> f64 {
        1.0 + self.domain_margin
    }

    /// Per-coordinate displacement bound for one step.
    pub fn step_bound(&self) -> f64 {
        self.per_step_clip_fraction * 2.0 * self.domain_limit()
    }
}

/// One Langevin update. The noise array is an explicit argument so the step
/// is a pure function. No clipping happens here.
pub fn langevin_step(
    formulation: Formulation,
    y: &[f64],
    grad: &[f64],
    step: f64,
    sigma: f64,
    noise: &[f64],
) -> Result<Vec<f64>> {
    if y.len() != grad.len() || y.len() != noise.len() {
        return Err(Error::Shape(format!(
            "state/gradient/noise lengths differ: {}/{}/{}",
            y.len(),
            grad.len(),
            noise.len()
        )));
    }
    if !(step > 0.0) || !step.is_finite() {
        return Err(Error::Config(format!("step must be positive and finite, got {step}")));
    }
    let finite = |v: &[f64]| v.iter().all(|x| x.is_finite());
    if !finite(y) || !finite(grad) || !finite(noise) {
        return Err(Error::NonFinite("langevin_step inputs".into()));
    }
    let mut out = vec![0.0; y.len()];
    langevin_step_into(formulation, y, grad, step, sigma, noise, &mut out);
    Ok(out)
}

#[inline]
fn langevin_step_into(
    formulation: Formulation,
    y: &[f64],
    grad: &[f64],
    step: f64,
    sigma: f64,
    noise: &[f64],
    out: &mut [f64],
) {
    match formulation {
        Formulation::Correct => {
            let noise_coeff = (2.0 * step).sqrt();
            for i in 0..y.len() {
                out[i] = y[i] - step * grad[i] + noise_coeff * noise[i];
            }
        }
        Formulation::Ibc => {
            let noise_coeff = step * sigma;
            for i in 0..y.len() {
                out[i] = y[i] - 0.5 * step * grad[i] + noise_coeff * noise[i];
            }
        }
    }
}

/// I.i.d. uniform samples on [-(1+margin), +(1+margin)]^act_dim in
/// normalized action space.
pub fn uniform_negatives(act_dim: usize, margin: f64, count: usize, seed: u64) -> Result<Vec<Vec<f64>>> {
    if act_dim == 0 {
        return Err(Error::Config("act_dim must be positive".into()));
    }
    if count == 0 {
        return Err(Error::Config("sample count must be positive".into()));
    }
    if !(margin >= 0.0) || !margin.is_finite() {
        return Err(Error::Config(format!("margin must be non-negative, got {margin}")));
    }
    let lim = 1.0 + margin;
    let mut rng = rng::stream(seed, &[tag::UNIFORM_NEG]);
    Ok((0..count)
        .map(|_| (0..act_dim).map(|_| rng.gen_range(-lim..lim)).collect())
        .collect())
}

/// How the chain engine seeds its initial states.
#[derive(Debug, Clone, Copy)]
pub(crate) enum ChainInit<'a> {
    /// Per-chain uniform draw over the margined domain.
    UniformMargin,
    /// The same fixed state for every chain.
    Broadcast(&'a [f64]),
}

pub(crate) struct ChainOutput {
    pub act_dim: usize,
    pub rows: usize,
    /// Row-major retained states: final state per chain (short strategy) or
    /// one state per retained step (long strategy).
    pub states: Vec<f64>,
}

impl ChainOutput {
    pub fn row(&self, r: usize) -> &[f64] {
        &self.states[r * self.act_dim..(r + 1) * self.act_dim]
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|r| self.row(r).to_vec()).collect()
    }
}

/// Chains processed per parallel work unit.
const CHAIN_BLOCK: usize = 64;

fn draw_init(cfg: &ChainConfig, act_dim: usize, chain: usize) -> Vec<f64> {
    let lim = cfg.domain_limit();
    let mut rng = rng::stream(cfg.seed, &[tag::CHAIN_INIT, chain as u64]);
    (0..act_dim).map(|_| rng.gen_range(-lim..lim)).collect()
}

struct WorkerBuf {
    ws: BlockScratch,
    energies: Vec<f64>,
    grads: Vec<f64>,
    noise: Vec<f64>,
    proposed: Vec<f64>,
}

impl WorkerBuf {
    fn new(act_dim: usize) -> Self {
        Self {
            ws: BlockScratch::new(),
            energies: vec![0.0; CHAIN_BLOCK],
            grads: vec![0.0; CHAIN_BLOCK * act_dim],
            noise: vec![0.0; act_dim],
            proposed: vec![0.0; act_dim],
        }
    }
}

/// The single Langevin loop behind `run_chains`, inference and the trainer's
/// batched negative sampling. Chain `c`'s noise at step `k` comes from the
/// stream keyed by `(seed, CHAIN_NOISE, chain_offset + c, k)`, so results do
/// not depend on scheduling or block size.
pub(crate) fn drive_chains<T: EnergyTarget + ?Sized>(
    target: &T,
    cfg: &ChainConfig,
    chain_count: usize,
    chain_offset: usize,
    init: ChainInit<'_>,
) -> Result<ChainOutput> {
    let act_dim = target.act_dim();
    if act_dim == 0 {
        return Err(Error::Config("energy target has zero action dimension".into()));
    }
    if chain_count == 0 {
        return Err(Error::Config("chain_count must be positive".into()));
    }
    let mut states = vec![0.0; chain_count * act_dim];
    match init {
        ChainInit::UniformMargin => {
            for c in 0..chain_count {
                let s = draw_init(cfg, act_dim, chain_offset + c);
                states[c * act_dim..(c + 1) * act_dim].copy_from_slice(&s);
            }
        }
        ChainInit::Broadcast(fixed) => {
            if fixed.len() != act_dim {
                return Err(Error::Shape(format!(
                    "broadcast init has length {}, expected {act_dim}",
                    fixed.len()
                )));
            }
            for c in 0..chain_count {
                states[c * act_dim..(c + 1) * act_dim].copy_from_slice(fixed);
            }
        }
    }

    let long = cfg.strategy == ChainStrategy::LongChain;
    let mut retained: Vec<f64> = if long {
        Vec::with_capacity((cfg.iterations - cfg.burn_in) * act_dim)
    } else {
        Vec::new()
    };

    if cfg.iterations > 0 {
        let steps = cfg.step_schedule.values();
        let lim = cfg.domain_limit();
        let bound = cfg.step_bound();
        for k in 0..cfg.iterations {
            let step = steps[k];
            let results: Vec<Result<()>> = states
                .par_chunks_mut(CHAIN_BLOCK * act_dim)
                .enumerate()
                .map_init(
                    || WorkerBuf::new(act_dim),
                    |buf, (b, chunk)| {
                        advance_block(target, cfg, chain_offset, b, chunk, k, step, lim, bound, buf)
                    },
                )
                .collect();
            for r in results {
                r?;
            }
            if long && k >= cfg.burn_in {
                retained.extend_from_slice(&states);
            }
        }
    }

    if long {
        let rows = retained.len() / act_dim;
        Ok(ChainOutput { act_dim, rows, states: retained })
    } else {
        Ok(ChainOutput { act_dim, rows: chain_count, states })
    }
}

#[allow(clippy::too_many_arguments)]
fn advance_block<T: EnergyTarget + ?Sized>(
    target: &T,
    cfg: &ChainConfig,
    chain_offset: usize,
    block: usize,
    chunk: &mut [f64],
    k: usize,
    step: f64,
    lim: f64,
    bound: f64,
    buf: &mut WorkerBuf,
) -> Result<()> {
    let act_dim = target.act_dim();
    let rows = chunk.len() / act_dim;
    let first_local = block * CHAIN_BLOCK;
    target.eval_block(
        chain_offset + first_local,
        chunk,
        rows,
        &mut buf.energies[..rows],
        &mut buf.grads[..rows * act_dim],
        &mut buf.ws,
    );
    for j in 0..rows {
        let chain = chain_offset + first_local + j;
        if !buf.energies[j].is_finite() {
            return Err(Error::NonFinite(format!("energy of chain {chain} at step {k}")));
        }
        let grad = &buf.grads[j * act_dim..(j + 1) * act_dim];
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(Error::NonFinite(format!("energy gradient of chain {chain} at step {k}")));
        }
        let mut noise_rng = rng::stream(cfg.seed, &[tag::CHAIN_NOISE, chain as u64, k as u64]);
        for n in buf.noise.iter_mut() {
            *n = noise_rng.sample(StandardNormal);
        }
        let y = &mut chunk[j * act_dim..(j + 1) * act_dim];
        langevin_step_into(
            cfg.formulation,
            y,
            grad,
            step,
            cfg.noise_scale,
            &buf.noise,
            &mut buf.proposed,
        );
        for d in 0..act_dim {
            let disp = (buf.proposed[d] - y[d]).clamp(-bound, bound);
            let next = (y[d] + disp).clamp(-lim, lim);
            if !next.is_finite() {
                return Err(Error::NonFinite(format!("state of chain {chain} at step {k}")));
            }
            y[d] = next;
        }
    }
    Ok(())
}

/// Run the configured chains over an energy landscape and return the
/// retained sample set (one row per chain for short chains, one row per
/// retained step for a long chain).
pub fn run_chains<T: EnergyTarget + ?Sized>(target: &T, cfg: &ChainConfig) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let out = drive_chains(target, cfg, cfg.num_chains, 0, ChainInit::UniformMargin)?;
    Ok(out.to_rows())
}

/// Like `run_chains` but starting every chain from the given state instead
/// of a uniform draw.
pub fn run_chains_from<T: EnergyTarget + ?Sized>(
    target: &T,
    cfg: &ChainConfig,
    start: &[f64],
) -> Result<Vec<Vec<f64>>> {
    cfg.validate()?;
    let out = drive_chains(target, cfg, cfg.num_chains, 0, ChainInit::Broadcast(start))?;
    Ok(out.to_rows())
}

/// Per-coordinate moments of the retained samples of a long chain.
#[derive(Debug, Clone)]
pub struct MomentsReport {
    pub mean: Vec<f64>,
    pub variance: Vec<f64>,
    /// Step index of the first retained sample.
    pub first_step: usize,
    pub act_dim: usize,
    /// Retained samples, row-major, in retention order.
    pub samples: Vec<f64>,
}

impl MomentsReport {
    pub fn sample_count(&self) -> usize {
        self.samples.len() / self.act_dim
    }

    pub fn sample(&self, r: usize) -> &[f64] {
        &self.samples[r * self.act_dim..(r + 1) * self.act_dim]
    }
}

/// Run one long chain against `target_energy`, discard the first `discard`
/// samples and report empirical per-coordinate mean and variance of the
/// rest.
pub fn diagnose_moments<T: EnergyTarget + ?Sized>(
    target_energy: &T,
    cfg: &ChainConfig,
    discard: usize,
) -> Result<MomentsReport> {
    if cfg.strategy != ChainStrategy::LongChain {
        return Err(Error::Config("diagnose_moments requires the long-chain strategy".into()));
    }
    if discard >= cfg.iterations {
        return Err(Error::Config(format!(
            "zero retained samples: discard {discard} >= iterations {}",
            cfg.iterations
        )));
    }
    let mut cfg = cfg.clone();
    cfg.burn_in = discard;
    cfg.validate()?;
    let out = drive_chains(target_energy, &cfg, 1, 0, ChainInit::UniformMargin)?;
    let d = out.act_dim;
    let n = out.rows as f64;
    let mut mean = vec![0.0; d];
    for r in 0..out.rows {
        for (m, v) in mean.iter_mut().zip(out.row(r)) {
            *m += v;
        }
    }
    for m in mean.iter_mut() {
        *m /= n;
    }
    let mut variance = vec![0.0; d];
    for r in 0..out.rows {
        for i in 0..d {
            let dev = out.row(r)[i] - mean[i];
            variance[i] += dev * dev;
        }
    }
    for v in variance.iter_mut() {
        *v /= n;
    }
    Ok(MomentsReport { mean, variance, first_step: discard, act_dim: d, samples: out.states })
}
