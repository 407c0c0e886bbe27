//! End-to-end training: the four trial configurations, the marginal action
//! sampler pipeline, inference, checkpointing and metrics logging.
//!
//! One `Trainer` owns all mutable state (models, optimizer moments, epoch
//! counter). Every random draw is keyed by `(seed, purpose, epoch, ...)`
//! through `rng::stream`, so a run is a pure function of its configuration
//! and resuming from a checkpoint is bit-identical to never having stopped.

use crate::checkpoint::{self, CheckpointReader, CheckpointWriter};
use crate::data::{self, Dataset, TaskSpec};
use crate::error::{Error, Result};
use crate::loss::{self, EnergyStats, LabeledBatch, LossKind, Negatives};
use crate::model::{ConditionalEbm, EnergyTarget, MarginalEbm, Normalizer, RowConditioned};
use crate::nn::{BlockScratch, DenseEnergyNet};
use crate::optim::{adam_step, AdamState, StepDecay};
use crate::rng::{self, tag};
use crate::sampler::{drive_chains, ChainConfig, ChainInit, ChainStrategy, Formulation, PolySchedule};
use rand::seq::SliceRandom;
use rayon::prelude::*;
use std::path::Path;
use std::time::Instant;

/// The trial configurations. Each name binds one combination of loss,
/// sampler formulation and regularizers; `Custom` lifts the bindings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Trial {
    Ibc,
    IbcMas,
    CorrectMas,
    CorrectMasMaxEnt,
    Custom,
}

impl Trial {
    pub const NAMES: [&'static str; 5] =
        ["Ibc", "Ibc_MAS", "Correct_MAS", "Correct_MAS_MaxEnt", "custom"];

    pub fn as_str(&self) -> &'static str {
        match self {
            Trial::Ibc => "Ibc",
            Trial::IbcMas => "Ibc_MAS",
            Trial::CorrectMas => "Correct_MAS",
            Trial::CorrectMasMaxEnt => "Correct_MAS_MaxEnt",
            Trial::Custom => "custom",
        }
    }
}

impl std::str::FromStr for Trial {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "Ibc" => Ok(Trial::Ibc),
            "Ibc_MAS" => Ok(Trial::IbcMas),
            "Correct_MAS" => Ok(Trial::CorrectMas),
            "Correct_MAS_MaxEnt" => Ok(Trial::CorrectMasMaxEnt),
            "custom" => Ok(Trial::Custom),
            other => Err(Error::Config(format!(
                "unknown trial {other:?}; valid names: {}",
                Trial::NAMES.join(", ")
            ))),
        }
    }
}

/// Where non-MAS negatives come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NegativeSource {
    /// Per-positive Langevin chains on the conditional model.
    Langevin,
    /// Uniform draws over the margined action domain.
    Uniform,
}

/// Marginal-action-sampler settings.
#[derive(Debug, Clone, PartialEq)]
pub struct MasConfig {
    /// Hidden widths of the marginal net.
    pub marginal_hidden: Vec<usize>,
    /// Weight of the positive-energy anchor in the marginal objective.
    pub positive_l2_weight: f64,
    /// Chain settings for sampling the marginal model.
    pub chain: ChainConfig,
}

/// Everything a training run needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub trial: Trial,
    /// Conditional-model objective.
    pub loss: LossKind,
    pub neg_source: NegativeSource,
    /// Hidden widths of the conditional net.
    pub hidden: Vec<usize>,
    pub init_scale: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Negatives per positive (and chains per positive for Langevin
    /// sampling, shared chain count for MAS).
    pub negatives: usize,
    pub learning_rate: f64,
    pub decay: StepDecay,
    /// Negative-sampling chains during training (non-MAS trials).
    pub train_chain: ChainConfig,
    /// Inference chains (validation and `infer`).
    pub infer_chain: ChainConfig,
    pub mas: Option<MasConfig>,
    /// Success tolerance in raw action units.
    pub success_tol: f64,
    pub seed: u64,
}

/// The ibc-formulation inference chain from the training recipe: sigma 0.01
/// so the chain behaves like gradient descent.
pub fn default_infer_chain(num_chains: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        formulation: Formulation::Ibc,
        iterations: 10,
        step_schedule: PolySchedule::new(1.0, 0.001, 2.0, 10).unwrap(),
        noise_scale: 0.01,
        per_step_clip_fraction: 0.25,
        domain_margin: 0.1,
        num_chains,
        burn_in: 0,
        strategy: ChainStrategy::ShortChains,
        seed,
    }
}

fn default_train_chain(formulation: Formulation, num_chains: usize, seed: u64) -> ChainConfig {
    ChainConfig {
        formulation,
        iterations: 10,
        step_schedule: PolySchedule::new(1.0, 0.001, 2.0, 10).unwrap(),
        noise_scale: 0.1,
        per_step_clip_fraction: 0.25,
        domain_margin: 0.1,
        num_chains,
        burn_in: 0,
        strategy: ChainStrategy::ShortChains,
        seed,
    }
}

impl TrainConfig {
    /// The published recipe for a named trial: MLP 256x2 trained with Adam
    /// at 0.001, batch 512, 10-iteration chains, sigma 0.1 in training and
    /// 0.01 at inference, polynomial step schedule from 1 to 0.001.
    pub fn trial_defaults(trial: Trial, epochs: usize, seed: u64) -> Result<Self> {
        let negatives = 256;
        let mas = |formulation: Formulation, l2: f64| MasConfig {
            marginal_hidden: vec![64, 64],
            positive_l2_weight: l2,
            chain: default_train_chain(formulation, negatives, seed),
        };
        let cfg = match trial {
            Trial::Ibc => Self {
                trial,
                loss: LossKind::InfoNce,
                neg_source: NegativeSource::Langevin,
                mas: None,
                ..Self::base(epochs, negatives, seed)
            },
            Trial::IbcMas => Self {
                trial,
                loss: LossKind::InfoNce,
                neg_source: NegativeSource::Langevin,
                mas: Some(mas(Formulation::Ibc, 0.0)),
                ..Self::base(epochs, negatives, seed)
            },
            Trial::CorrectMas => Self {
                trial,
                loss: LossKind::InfoNce,
                neg_source: NegativeSource::Langevin,
                mas: Some(mas(Formulation::Correct, 0.0)),
                ..Self::base(epochs, negatives, seed)
            },
            Trial::CorrectMasMaxEnt => Self {
                trial,
                loss: LossKind::InfoNce,
                neg_source: NegativeSource::Langevin,
                mas: Some(mas(Formulation::Correct, 0.1)),
                ..Self::base(epochs, negatives, seed)
            },
            Trial::Custom => {
                return Err(Error::Config(
                    "custom trials have no defaults; specify loss and sampler explicitly".into(),
                ))
            }
        };
        Ok(cfg)
    }

    fn base(epochs: usize, negatives: usize, seed: u64) -> Self {
        Self {
            trial: Trial::Ibc,
            loss: LossKind::InfoNce,
            neg_source: NegativeSource::Langevin,
            hidden: vec![256, 256],
            init_scale: 0.05,
            batch_size: 512,
            epochs,
            negatives,
            learning_rate: 0.001,
            decay: StepDecay::new(0.99, 100).unwrap(),
            train_chain: default_train_chain(Formulation::Ibc, negatives, seed),
            infer_chain: default_infer_chain(64, seed),
            mas: None,
            success_tol: 0.05,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        if self.negatives == 0 {
            return Err(Error::Config("need at least one negative per positive".into()));
        }
        if self.hidden.is_empty() {
            return Err(Error::Config("conditional net needs at least one hidden layer".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if !(self.init_scale > 0.0) {
            return Err(Error::Config("init_scale must be positive".into()));
        }
        if !(self.success_tol > 0.0) {
            return Err(Error::Config("success_tol must be positive".into()));
        }
        self.train_chain.validate()?;
        self.infer_chain.validate()?;
        if self.train_chain.strategy != ChainStrategy::ShortChains
            || self.infer_chain.strategy != ChainStrategy::ShortChains
        {
            return Err(Error::Config("training and inference use short chains".into()));
        }
        if let Some(mas) = &self.mas {
            mas.chain.validate()?;
            if mas.chain.strategy != ChainStrategy::ShortChains {
                return Err(Error::Config("marginal sampling uses short chains".into()));
            }
            if mas.marginal_hidden.is_empty() {
                return Err(Error::Config("marginal net needs at least one hidden layer".into()));
            }
            if !(mas.positive_l2_weight >= 0.0) {
                return Err(Error::Config("positive_l2_weight must be non-negative".into()));
            }
        }
        // Named trials bind exact combinations; reject configs that claim a
        // trial name but deviate from its binding.
        let bind = |ok: bool, what: &str| -> Result<()> {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("trial {} requires {what}", self.trial.as_str())))
            }
        };
        match self.trial {
            Trial::Ibc => {
                bind(self.loss == LossKind::InfoNce, "the InfoNCE loss")?;
                bind(self.mas.is_none(), "no marginal sampler")?;
                bind(self.neg_source == NegativeSource::Langevin, "Langevin negatives")?;
                bind(self.train_chain.formulation == Formulation::Ibc, "the ibc formulation")?;
            }
            Trial::IbcMas | Trial::CorrectMas | Trial::CorrectMasMaxEnt => {
                bind(self.loss == LossKind::InfoNce, "the InfoNCE loss")?;
                let mas = self
                    .mas
                    .as_ref()
                    .ok_or_else(|| Error::Config(format!("trial {} requires the marginal sampler", self.trial.as_str())))?;
                let want = if self.trial == Trial::IbcMas { Formulation::Ibc } else { Formulation::Correct };
                bind(mas.chain.formulation == want, "its bound marginal chain formulation")?;
                if self.trial == Trial::CorrectMasMaxEnt {
                    bind(mas.positive_l2_weight > 0.0, "a positive anchor weight")?;
                } else {
                    bind(mas.positive_l2_weight == 0.0, "no positive-energy anchor")?;
                }
            }
            Trial::Custom => {}
        }
        Ok(())
    }
}

/// One epoch's record. `wall_clock_s` is reported to callers but kept out of
/// the metrics CSV so identical runs produce byte-identical files.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_success: f64,
    pub mean_positive_energy: f64,
    pub mean_negative_energy: f64,
    pub var_negative_energy: f64,
    pub mi_lower_bound: f64,
    pub wall_clock_s: f64,
}

impl MetricsRow {
    pub const CSV_HEADER: &'static str =
        "epoch,train_loss,val_success,mean_positive_energy,mean_negative_energy,var_negative_energy,mi_lower_bound";

    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            self.epoch,
            self.train_loss,
            self.val_success,
            self.mean_positive_energy,
            self.mean_negative_energy,
            self.var_negative_energy,
            self.mi_lower_bound
        )
    }
}

struct Snapshot {
    epoch: usize,
    cond_params: Vec<f64>,
    adam_cond: AdamState,
    marg_params: Option<Vec<f64>>,
    adam_marg: Option<AdamState>,
}

/// Owns the models, optimizer state and datasets for one training run.
pub struct Trainer {
    cfg: TrainConfig,
    task: TaskSpec,
    train_ds: Dataset,
    val_ds: Dataset,
    /// Normalized copies of the training split, row-major.
    train_obs_n: Vec<f64>,
    train_act_n: Vec<f64>,
    cond: ConditionalEbm,
    marginal: Option<MarginalEbm>,
    adam_cond: AdamState,
    adam_marg: Option<AdamState>,
    epoch: usize,
    last_good: Snapshot,
}

impl Trainer {
    pub fn new(cfg: TrainConfig, task: TaskSpec) -> Result<Self> {
        cfg.validate()?;
        task.validate()?;
        if task.val_rows == 0 {
            return Err(Error::Config("training needs a non-empty validation split".into()));
        }
        let (train_ds, val_ds) = data::generate(&task)?;
        let obs_normalizer = Normalizer::fit(task.obs_dim, train_ds.obs_rows())?;
        let act_normalizer = Normalizer::fit(task.act_dim, train_ds.act_rows())?;

        let mut sizes = vec![task.obs_dim + task.act_dim];
        sizes.extend(&cfg.hidden);
        sizes.push(1);
        let cond_net =
            DenseEnergyNet::init(&sizes, cfg.init_scale, rng::derive(cfg.seed, &[tag::PARAM_INIT, 1]))?;
        let adam_cond = AdamState::new(cond_net.param_count(), cfg.learning_rate);
        let cond = ConditionalEbm::new(cond_net, obs_normalizer.clone(), act_normalizer.clone())?;

        let (marginal, adam_marg) = if let Some(mas) = &cfg.mas {
            let mut msizes = vec![task.act_dim];
            msizes.extend(&mas.marginal_hidden);
            msizes.push(1);
            let net = DenseEnergyNet::init(
                &msizes,
                cfg.init_scale,
                rng::derive(cfg.seed, &[tag::PARAM_INIT, 2]),
            )?;
            let adam = AdamState::new(net.param_count(), cfg.learning_rate);
            (Some(MarginalEbm::new(net, act_normalizer.clone())?), Some(adam))
        } else {
            (None, None)
        };

        let mut train_obs_n = vec![0.0; train_ds.len() * task.obs_dim];
        let mut train_act_n = vec![0.0; train_ds.len() * task.act_dim];
        for i in 0..train_ds.len() {
            obs_normalizer.normalize_into(
                train_ds.obs_row(i),
                &mut train_obs_n[i * task.obs_dim..(i + 1) * task.obs_dim],
            );
            act_normalizer.normalize_into(
                train_ds.act_row(i),
                &mut train_act_n[i * task.act_dim..(i + 1) * task.act_dim],
            );
        }

        let mut trainer = Self {
            cfg,
            task,
            train_ds,
            val_ds,
            train_obs_n,
            train_act_n,
            cond,
            marginal,
            adam_cond,
            adam_marg,
            epoch: 0,
            last_good: Snapshot {
                epoch: 0,
                cond_params: Vec::new(),
                adam_cond: AdamState::new(0, 0.0),
                marg_params: None,
                adam_marg: None,
            },
        };
        trainer.last_good = trainer.snapshot();
        Ok(trainer)
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    pub fn task(&self) -> &TaskSpec {
        &self.task
    }

    pub fn model(&self) -> &ConditionalEbm {
        &self.cond
    }

    pub fn marginal(&self) -> Option<&MarginalEbm> {
        self.marginal.as_ref()
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn validation_dataset(&self) -> &Dataset {
        &self.val_ds
    }

    pub fn train_dataset(&self) -> &Dataset {
        &self.train_ds
    }

    fn snapshot(&self) -> Snapshot {
        Snapshot {
            epoch: self.epoch,
            cond_params: self.cond.net.params().to_vec(),
            adam_cond: self.adam_cond.clone(),
            marg_params: self.marginal.as_ref().map(|m| m.net.params().to_vec()),
            adam_marg: self.adam_marg.clone(),
        }
    }

    fn restore(&mut self, snap: &Snapshot) {
        self.epoch = snap.epoch;
        self.cond.net.params_mut().copy_from_slice(&snap.cond_params);
        self.adam_cond = snap.adam_cond.clone();
        if let (Some(m), Some(p)) = (self.marginal.as_mut(), snap.marg_params.as_ref()) {
            m.net.params_mut().copy_from_slice(p);
        }
        self.adam_marg = snap.adam_marg.clone();
    }

    /// Negative sets for one minibatch. MAS trials share one chain set over
    /// the whole batch (the chains descend the marginal model, independent
    /// of any observation); otherwise each positive gets its own chains on
    /// the conditional model, or plain uniform draws.
    fn batch_negatives(&self, epoch: usize, batch_idx: usize, obs_block: &[f64], rows: usize) -> Result<Negatives> {
        let m = self.cfg.negatives;
        let seed = rng::derive(self.cfg.seed, &[tag::BATCH_NEG, epoch as u64, batch_idx as u64]);
        if let (Some(mas), Some(marginal)) = (&self.cfg.mas, &self.marginal) {
            let mut chain_cfg = mas.chain.clone();
            chain_cfg.seed = seed;
            chain_cfg.num_chains = m;
            let out = drive_chains(marginal, &chain_cfg, m, 0, ChainInit::UniformMargin)?;
            return Ok(Negatives::Shared { count: m, data: out.states });
        }
        match self.cfg.neg_source {
            NegativeSource::Langevin => {
                let mut chain_cfg = self.cfg.train_chain.clone();
                chain_cfg.seed = seed;
                let target = RowConditioned::new(&self.cond, obs_block, rows, m)?;
                let out = drive_chains(&target, &chain_cfg, rows * m, 0, ChainInit::UniformMargin)?;
                Ok(Negatives::PerRow { count: m, data: out.states })
            }
            NegativeSource::Uniform => {
                let margin = self.cfg.train_chain.domain_margin;
                let samples = crate::sampler::uniform_negatives(self.task.act_dim, margin, rows * m, seed)?;
                Ok(Negatives::PerRow { count: m, data: samples.into_iter().flatten().collect() })
            }
        }
    }

    /// One pass over the training split: shuffle, minibatch, sample
    /// negatives, take optimizer steps, then measure validation success.
    pub fn train_epoch(&mut self) -> Result<MetricsRow> {
        let started = Instant::now();
        let result = self.train_epoch_inner();
        match result {
            Ok(mut row) => {
                self.last_good = self.snapshot();
                row.wall_clock_s = started.elapsed().as_secs_f64();
                Ok(row)
            }
            Err(e) => {
                // Roll back to the last complete epoch so the retained
                // checkpoint is consistent.
                let snap = std::mem::replace(&mut self.last_good, Snapshot {
                    epoch: 0,
                    cond_params: Vec::new(),
                    adam_cond: AdamState::new(0, 0.0),
                    marg_params: None,
                    adam_marg: None,
                });
                self.restore(&snap);
                self.last_good = snap;
                Err(e)
            }
        }
    }

    fn train_epoch_inner(&mut self) -> Result<MetricsRow> {
        let epoch = self.epoch;
        let n = self.train_ds.len();
        let obs_dim = self.task.obs_dim;
        let act_dim = self.task.act_dim;
        let lr_mult = self.cfg.decay.lr_multiplier(epoch);

        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng::stream(self.cfg.seed, &[tag::SHUFFLE, epoch as u64]));

        let mut loss_sum = 0.0;
        let mut info_sum = 0.0;
        let mut pos_sum = 0.0;
        let mut neg_mean_sum = 0.0;
        let mut neg_sq_sum = 0.0;

        for (batch_idx, chunk) in order.chunks(self.cfg.batch_size).enumerate() {
            let rows = chunk.len();
            let mut obs_block = vec![0.0; rows * obs_dim];
            let mut act_block = vec![0.0; rows * act_dim];
            for (j, &i) in chunk.iter().enumerate() {
                obs_block[j * obs_dim..(j + 1) * obs_dim]
                    .copy_from_slice(&self.train_obs_n[i * obs_dim..(i + 1) * obs_dim]);
                act_block[j * act_dim..(j + 1) * act_dim]
                    .copy_from_slice(&self.train_act_n[i * act_dim..(i + 1) * act_dim]);
            }
            let negatives = self.batch_negatives(epoch, batch_idx, &obs_block, rows)?;

            // Marginal model update first: the same chain endpoints feed the
            // conditional loss below, advancing both models in lockstep.
            if let (Some(mas), Some(marginal)) = (&self.cfg.mas, &self.marginal) {
                let marg_batch = LabeledBatch::new(
                    0,
                    act_dim,
                    Vec::new(),
                    act_block.clone(),
                    negatives.clone(),
                )?;
                let report =
                    loss::evaluate(marginal, &marg_batch, LossKind::MaxEnt, mas.positive_l2_weight)?;
                if !report.loss.is_finite() {
                    return Err(Error::NonFinite(format!("marginal loss in epoch {epoch}")));
                }
                let marginal = self.marginal.as_mut().unwrap();
                let adam = self.adam_marg.as_mut().unwrap();
                adam_step(adam, marginal.net.params_mut(), &report.param_grad, lr_mult)?;
            }

            let batch = LabeledBatch::new(obs_dim, act_dim, obs_block, act_block, negatives)?;
            let report = loss::evaluate(&self.cond, &batch, self.cfg.loss, 0.0)?;
            if !report.loss.is_finite() {
                return Err(Error::NonFinite(format!("training loss in epoch {epoch}")));
            }
            adam_step(&mut self.adam_cond, self.cond.net.params_mut(), &report.param_grad, lr_mult)?;

            let w = rows as f64;
            let EnergyStats { mean_positive, mean_negative, var_negative, info_nce, .. } = report.stats;
            loss_sum += report.loss * w;
            info_sum += info_nce * w;
            pos_sum += mean_positive * w;
            neg_mean_sum += mean_negative * w;
            neg_sq_sum += (var_negative + mean_negative * mean_negative) * w;
        }

        let n_f = n as f64;
        let mean_neg = neg_mean_sum / n_f;
        let val_success = self.validation_success(epoch)?;
        self.epoch += 1;
        Ok(MetricsRow {
            epoch,
            train_loss: loss_sum / n_f,
            val_success,
            mean_positive_energy: pos_sum / n_f,
            mean_negative_energy: mean_neg,
            var_negative_energy: neg_sq_sum / n_f - mean_neg * mean_neg,
            mi_lower_bound: loss::mi_lower_bound(info_sum / n_f, self.cfg.negatives),
            wall_clock_s: 0.0,
        })
    }

    /// Run the configured number of epochs, aborting on the first failure.
    pub fn run(&mut self) -> Result<Vec<MetricsRow>> {
        let mut rows = Vec::with_capacity(self.cfg.epochs);
        while self.epoch < self.cfg.epochs {
            rows.push(self.train_epoch()?);
        }
        Ok(rows)
    }

    /// Success rate of inference over the validation split.
    pub fn validation_success(&self, epoch: usize) -> Result<f64> {
        if self.val_ds.is_empty() {
            return Err(Error::Config("validation split is empty".into()));
        }
        let hits: Vec<Result<bool>> = (0..self.val_ds.len())
            .into_par_iter()
            .map(|i| {
                let mut cfg = self.cfg.infer_chain.clone();
                cfg.seed = rng::derive(self.cfg.seed, &[tag::VAL_INFER, epoch as u64, i as u64]);
                let x = self.val_ds.obs_row(i);
                let y_hat = infer(&self.cond, x, &cfg)?;
                data::success(&self.task, x, &y_hat, self.cfg.success_tol)
            })
            .collect();
        let mut ok = 0usize;
        for h in hits {
            if h? {
                ok += 1;
            }
        }
        Ok(ok as f64 / self.val_ds.len() as f64)
    }

    /// Serialize the full training state for exact resumption.
    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut w = CheckpointWriter::new();
        w.put_scalar_u64("epoch", self.epoch as u64);
        w.put_scalar_u64("seed", self.cfg.seed);
        checkpoint::put_net(&mut w, "cond", &self.cond.net);
        checkpoint::put_normalizer(&mut w, "cond.obs_normalizer", &self.cond.obs_normalizer);
        checkpoint::put_normalizer(&mut w, "cond.act_normalizer", &self.cond.act_normalizer);
        checkpoint::put_adam(&mut w, "opt.cond", &self.adam_cond);
        if let (Some(m), Some(a)) = (&self.marginal, &self.adam_marg) {
            checkpoint::put_marginal(&mut w, "marginal", m);
            checkpoint::put_adam(&mut w, "opt.marginal", a);
        }
        w.write(path)
    }

    /// Rebuild a trainer from a checkpoint plus the original config and
    /// task. Training after this is bit-identical to never having stopped.
    pub fn resume(path: &Path, cfg: TrainConfig, task: TaskSpec) -> Result<Self> {
        let mut trainer = Self::new(cfg, task)?;
        let r = CheckpointReader::read(path)?;
        let net = checkpoint::get_net(&r, "cond")?;
        if net.layer_sizes() != trainer.cond.net.layer_sizes() {
            return Err(Error::Checkpoint(format!(
                "checkpoint net {:?} does not match configured net {:?}",
                net.layer_sizes(),
                trainer.cond.net.layer_sizes()
            )));
        }
        trainer.cond.net = net;
        trainer.cond.obs_normalizer = checkpoint::get_normalizer(&r, "cond.obs_normalizer")?;
        trainer.cond.act_normalizer = checkpoint::get_normalizer(&r, "cond.act_normalizer")?;
        trainer.adam_cond = checkpoint::get_adam(&r, "opt.cond")?;
        if trainer.adam_cond.m.len() != trainer.cond.net.param_count() {
            return Err(Error::Checkpoint("optimizer state does not match net".into()));
        }
        if trainer.marginal.is_some() {
            if !r.has("marginal.params") {
                return Err(Error::Checkpoint("config enables MAS but checkpoint has no marginal model".into()));
            }
            let m = checkpoint::get_marginal(&r, "marginal")?;
            let expect = trainer.marginal.as_ref().unwrap().net.layer_sizes().to_vec();
            if m.net.layer_sizes() != expect {
                return Err(Error::Checkpoint(format!(
                    "checkpoint marginal net {:?} does not match configured {:?}",
                    m.net.layer_sizes(),
                    expect
                )));
            }
            trainer.marginal = Some(m);
            trainer.adam_marg = Some(checkpoint::get_adam(&r, "opt.marginal")?);
        }
        trainer.epoch = r.scalar_u64("epoch")? as usize;
        trainer.last_good = trainer.snapshot();
        Ok(trainer)
    }

    /// Re-save the state as of the last completed epoch.
    pub fn save_last_good(&self, path: &Path) -> Result<()> {
        // `train_epoch` already rolled back on failure, so current == last good.
        self.save_checkpoint(path)
    }
}

/// Minimize the model's energy over actions for one observation: run the
/// inference chains, evaluate the energy at every final state, and return
/// the lowest-energy state in raw action units.
pub fn infer(model: &ConditionalEbm, x: &[f64], cfg: &ChainConfig) -> Result<Vec<f64>> {
    cfg.validate()?;
    if cfg.strategy != ChainStrategy::ShortChains {
        return Err(Error::Config("inference uses the short-chain strategy".into()));
    }
    let target = model.conditioned(x)?;
    let out = drive_chains(&target, cfg, cfg.num_chains, 0, ChainInit::UniformMargin)?;
    let act_dim = model.act_dim();
    let rows = out.rows;
    let mut ws = BlockScratch::new();
    let mut energies = vec![0.0; rows];
    let mut grads = vec![0.0; rows * act_dim];
    target.eval_block(0, &out.states, rows, &mut energies, &mut grads, &mut ws);
    let mut best = 0;
    for r in 1..rows {
        if energies[r] < energies[best] {
            best = r;
        }
    }
    model.act_normalizer.denormalize(out.row(best))
}
