//! Flat key-value config files.
//!
//! The format is one `key = value` pair per line, `#` starts a comment.
//! Every hyperparameter of a run has an explicit key; anything not given
//! falls back to the named trial's recipe (see `TrainConfig::trial_defaults`).
//! Unknown keys are errors, so typos fail before any compute starts.

use crate::data::{GeneratorKind, TaskSpec};
use crate::error::{Error, Result};
use crate::loss::LossKind;
use crate::optim::StepDecay;
use crate::sampler::{ChainConfig, ChainStrategy, Formulation, PolySchedule};
use crate::train::{default_infer_chain, MasConfig, NegativeSource, TrainConfig, Trial};
use std::cell::RefCell;
use std::collections::HashSet;
use std::path::Path;
use std::str::FromStr;

/// Parsed key-value file with consumption tracking.
pub struct KvConfig {
    entries: Vec<(String, String, usize)>,
    consumed: RefCell<HashSet<usize>>,
}

impl KvConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut entries: Vec<(String, String, usize)> = Vec::new();
        for (idx, raw) in text.lines().enumerate() {
            let lineno = idx + 1;
            let line = match raw.find('#') {
                Some(p) => &raw[..p],
                None => raw,
            };
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: lineno,
                message: format!("expected  key = value  got {line:?}"),
            })?;
            let key = key.trim().to_string();
            let value = value.trim().to_string();
            if key.is_empty() || value.is_empty() {
                return Err(Error::Parse { line: lineno, message: "empty key or value".into() });
            }
            if entries.iter().any(|(k, _, _)| *k == key) {
                return Err(Error::Parse { line: lineno, message: format!("duplicate key {key}") });
            }
            entries.push((key, value, lineno));
        }
        Ok(Self { entries, consumed: RefCell::new(HashSet::new()) })
    }

    fn lookup(&self, key: &str) -> Option<&str> {
        for (i, (k, v, _)) in self.entries.iter().enumerate() {
            if k == key {
                self.consumed.borrow_mut().insert(i);
                return Some(v);
            }
        }
        None
    }

    pub fn get_str(&self, key: &str) -> Option<&str> {
        self.lookup(key)
    }

    pub fn require_str(&self, key: &str) -> Result<&str> {
        self.lookup(key).ok_or_else(|| Error::Config(format!("missing required key {key}")))
    }

    fn parse_as<T: FromStr>(&self, key: &str, value: &str) -> Result<T> {
        value
            .parse::<T>()
            .map_err(|_| Error::Config(format!("key {key}: cannot parse value {value:?}")))
    }

    pub fn get<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        match self.lookup(key) {
            Some(v) => {
                let v = v.to_string();
                self.parse_as(key, &v)
            }
            None => Ok(default),
        }
    }

    pub fn require<T: FromStr>(&self, key: &str) -> Result<T> {
        let v = self.require_str(key)?.to_string();
        self.parse_as(key, &v)
    }

    pub fn get_opt<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        match self.lookup(key) {
            Some(v) => {
                let v = v.to_string();
                self.parse_as(key, &v).map(Some)
            }
            None => Ok(None),
        }
    }

    pub fn get_list<T: FromStr>(&self, key: &str, default: Vec<T>) -> Result<Vec<T>> {
        match self.lookup(key) {
            Some(v) => {
                let v = v.to_string();
                v.split(',')
                    .map(|part| self.parse_as(key, part.trim()))
                    .collect::<Result<Vec<T>>>()
            }
            None => Ok(default),
        }
    }

    /// Fails if any key was never consumed, naming it and its line.
    pub fn finish(&self) -> Result<()> {
        let consumed = self.consumed.borrow();
        let mut unknown: Vec<String> = Vec::new();
        for (i, (k, _, line)) in self.entries.iter().enumerate() {
            if !consumed.contains(&i) {
                unknown.push(format!("{k} (line {line})"));
            }
        }
        if unknown.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(format!("unknown config keys: {}", unknown.join(", "))))
        }
    }
}

/// Task keys shared by every subcommand that generates data.
pub fn task_from_kv(kv: &KvConfig) -> Result<TaskSpec> {
    let kind: GeneratorKind = kv.require_str("task.kind")?.parse()?;
    let (obs_default, act_default) = match kind {
        GeneratorKind::TwoMode => (1, 1),
        GeneratorKind::Ring => (1, 2),
        GeneratorKind::ParticleAnalog => (4, 2),
    };
    let spec = TaskSpec {
        kind,
        obs_dim: kv.get("task.obs_dim", obs_default)?,
        act_dim: kv.get("task.act_dim", act_default)?,
        noise: kv.get("task.noise", 0.0)?,
        train_rows: kv.get("task.train_rows", 512)?,
        val_rows: kv.get("task.val_rows", 128)?,
        seed: kv.get("task.seed", 0)?,
    };
    spec.validate()?;
    Ok(spec)
}

fn chain_from_kv(kv: &KvConfig, prefix: &str, base: &ChainConfig) -> Result<ChainConfig> {
    let key = |name: &str| format!("{prefix}.{name}");
    let formulation: Formulation =
        kv.get(&key("formulation"), base.formulation.to_string().parse()?)?;
    let iterations: usize = kv.get(&key("iterations"), base.iterations)?;
    let schedule = PolySchedule::new(
        kv.get(&key("step_start"), base.step_schedule.start)?,
        kv.get(&key("step_end"), base.step_schedule.end)?,
        kv.get(&key("step_power"), base.step_schedule.power)?,
        iterations.max(1),
    )?;
    Ok(ChainConfig {
        formulation,
        iterations,
        step_schedule: schedule,
        noise_scale: kv.get(&key("sigma"), base.noise_scale)?,
        per_step_clip_fraction: kv.get(&key("clip_fraction"), base.per_step_clip_fraction)?,
        domain_margin: kv.get(&key("margin"), base.domain_margin)?,
        num_chains: kv.get(&key("num_chains"), base.num_chains)?,
        burn_in: kv.get(&key("burn_in"), base.burn_in)?,
        strategy: base.strategy,
        seed: base.seed,
    })
}

/// Build a full training run from a config file. `seed_override` replaces
/// the run seed when given.
pub fn load_train_config(path: &Path, seed_override: Option<u64>) -> Result<(TrainConfig, TaskSpec)> {
    let kv = KvConfig::load(path)?;
    let task = task_from_kv(&kv)?;
    let trial: Trial = kv.require_str("trial")?.parse()?;
    let epochs: usize = kv.require("epochs")?;
    let seed: u64 = match seed_override {
        Some(s) => {
            kv.get::<u64>("seed", 0)?; // consume if present
            s
        }
        None => kv.get("seed", 0)?,
    };

    let mut cfg = if trial == Trial::Custom {
        let mut base = TrainConfig::trial_defaults(Trial::Ibc, epochs, seed)?;
        base.trial = Trial::Custom;
        base
    } else {
        TrainConfig::trial_defaults(trial, epochs, seed)?
    };
    cfg.seed = seed;
    cfg.epochs = epochs;

    cfg.hidden = kv.get_list("hidden", cfg.hidden)?;
    cfg.init_scale = kv.get("init_scale", cfg.init_scale)?;
    cfg.batch_size = kv.get("batch_size", cfg.batch_size)?;
    cfg.negatives = kv.get("negatives", cfg.negatives)?;
    cfg.learning_rate = kv.get("learning_rate", cfg.learning_rate)?;
    cfg.decay = StepDecay::new(
        kv.get("decay_gamma", cfg.decay.gamma)?,
        kv.get("decay_period", cfg.decay.period)?,
    )?;
    cfg.success_tol = kv.get("success_tol", cfg.success_tol)?;

    cfg.train_chain = chain_from_kv(&kv, "train_chain", &cfg.train_chain)?;
    cfg.train_chain.num_chains = cfg.negatives;
    cfg.train_chain.seed = seed;
    let mut infer_base = default_infer_chain(kv.get("infer_chain.num_chains", 64)?, seed);
    infer_base.num_chains = infer_base.num_chains.max(1);
    cfg.infer_chain = chain_from_kv(&kv, "infer_chain", &infer_base)?;
    cfg.infer_chain.seed = seed;

    if trial == Trial::Custom {
        let loss_name = kv.require_str("loss")?;
        cfg.loss = match loss_name {
            "info_nce" => LossKind::InfoNce,
            "nll_importance" => {
                let margin = cfg.train_chain.domain_margin;
                let volume = (2.0 * (1.0 + margin)).powi(task.act_dim as i32);
                LossKind::NllImportance { proposal_volume: kv.get("proposal_volume", volume)? }
            }
            "mcmc" => LossKind::Mcmc,
            "maxent" => LossKind::MaxEnt,
            other => {
                return Err(Error::Config(format!(
                    "unknown loss {other:?}; expected info_nce, nll_importance, mcmc or maxent"
                )))
            }
        };
        cfg.neg_source = match kv.get_str("negative_source").unwrap_or("langevin") {
            "langevin" => NegativeSource::Langevin,
            "uniform" => NegativeSource::Uniform,
            other => {
                return Err(Error::Config(format!(
                    "unknown negative_source {other:?}; expected langevin or uniform"
                )))
            }
        };
        if kv.get("mas.enabled", false)? {
            let base_chain = cfg.train_chain.clone();
            let mut chain = chain_from_kv(&kv, "mas.chain", &base_chain)?;
            chain.num_chains = cfg.negatives;
            chain.seed = seed;
            cfg.mas = Some(MasConfig {
                marginal_hidden: kv.get_list("mas.marginal_hidden", vec![64, 64])?,
                positive_l2_weight: kv.get("mas.positive_l2_weight", 0.0)?,
                chain,
            });
        }
    } else if let Some(mas) = cfg.mas.as_mut() {
        kv.get::<bool>("mas.enabled", true)?; // tolerated, must agree with trial
        mas.marginal_hidden = kv.get_list("mas.marginal_hidden", mas.marginal_hidden.clone())?;
        mas.positive_l2_weight = kv.get("mas.positive_l2_weight", mas.positive_l2_weight)?;
        let base = mas.chain.clone();
        mas.chain = chain_from_kv(&kv, "mas.chain", &base)?;
        mas.chain.num_chains = cfg.negatives;
        mas.chain.seed = seed;
    }

    kv.finish()?;
    cfg.validate()?;
    Ok((cfg, task))
}

/// Settings for the sampler-moments diagnostic.
#[derive(Debug, Clone)]
pub struct DiagnoseConfig {
    /// Per-coordinate quadratic coefficients of the target energy.
    pub alpha: Vec<f64>,
    pub iterations: usize,
    pub discard: usize,
    /// Step size for the Euler-Maruyama rule (tau).
    pub correct_step: f64,
    /// Step size and noise scale for the ibc rule.
    pub ibc_step: f64,
    pub ibc_sigma: f64,
    pub domain_margin: f64,
    pub seed: u64,
}

impl DiagnoseConfig {
    pub fn chain_for(&self, formulation: Formulation) -> Result<ChainConfig> {
        let step = match formulation {
            Formulation::Correct => self.correct_step,
            Formulation::Ibc => self.ibc_step,
        };
        Ok(ChainConfig {
            formulation,
            iterations: self.iterations,
            step_schedule: PolySchedule::constant(step, self.iterations.max(1))?,
            noise_scale: self.ibc_sigma,
            per_step_clip_fraction: 1.0,
            domain_margin: self.domain_margin,
            num_chains: 1,
            burn_in: self.discard,
            strategy: ChainStrategy::LongChain,
            seed: self.seed,
        })
    }
}

pub fn load_diagnose_config(path: &Path, seed_override: Option<u64>) -> Result<DiagnoseConfig> {
    let kv = KvConfig::load(path)?;
    let dim: usize = kv.get("target.dim", 2)?;
    if dim == 0 {
        return Err(Error::Config("target.dim must be positive".into()));
    }
    let alpha: f64 = kv.get("target.alpha", 1.0)?;
    let cfg = DiagnoseConfig {
        alpha: vec![alpha; dim],
        iterations: kv.get("iterations", 4000)?,
        discard: kv.get("discard", 3000)?,
        correct_step: kv.get("correct.step", 0.2)?,
        ibc_step: kv.get("ibc.step", 0.1)?,
        ibc_sigma: kv.get("ibc.sigma", 1.0)?,
        domain_margin: kv.get("margin", 9.0)?,
        seed: match seed_override {
            Some(s) => {
                kv.get::<u64>("seed", 0)?;
                s
            }
            None => kv.get("seed", 0)?,
        },
    };
    kv.finish()?;
    if cfg.discard >= cfg.iterations {
        return Err(Error::Config(format!(
            "discard {} must be below iterations {}",
            cfg.discard, cfg.iterations
        )));
    }
    cfg.chain_for(Formulation::Correct)?.validate()?;
    cfg.chain_for(Formulation::Ibc)?.validate()?;
    Ok(cfg)
}

/// Settings for evaluating a checkpoint against a dataset.
#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub task: TaskSpec,
    pub success_tol: f64,
    pub chain: ChainConfig,
}

pub fn load_eval_config(path: &Path, seed_override: Option<u64>) -> Result<EvalConfig> {
    let kv = KvConfig::load(path)?;
    let task = task_from_kv(&kv)?;
    let seed = match seed_override {
        Some(s) => {
            kv.get::<u64>("seed", 0)?;
            s
        }
        None => kv.get("seed", 0)?,
    };
    let mut chain = chain_from_kv(&kv, "infer_chain", &default_infer_chain(
        kv.get("infer_chain.num_chains", 64)?,
        seed,
    ))?;
    chain.seed = seed;
    let cfg = EvalConfig { task, success_tol: kv.get("success_tol", 0.05)?, chain };
    kv.finish()?;
    cfg.chain.validate()?;
    Ok(cfg)
}

/// Task-only config for dataset generation.
pub fn load_gen_config(path: &Path, seed_override: Option<u64>) -> Result<TaskSpec> {
    let kv = KvConfig::load(path)?;
    let mut task = task_from_kv(&kv)?;
    if let Some(s) = seed_override {
        task.seed = s;
    }
    kv.finish()?;
    Ok(task)
}
