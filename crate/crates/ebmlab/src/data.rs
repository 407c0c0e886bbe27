//! Synthetic multimodal regression tasks, dataset persistence, and the
//! validation success metric.
//!
//! Three generators stand in for demonstration data with multimodal,
//! inconsistent labels:
//!
//! - `two_mode`: x uniform on [-1,1]^obs_dim, y = +0.5*ones or -0.5*ones by
//!   per-row coin flip.
//! - `ring`: y on the circle of radius 0.5, angle drawn per row (a continuum
//!   of modes).
//! - `particle_analog`: the observation is a pair of goal positions in
//!   [-1,1]^2 and the action is one of the two goals.
//!
//! Optional Gaussian jitter (clamped to three standard deviations so every
//! action provably stays near a valid mode) is added to actions. A
//! prediction counts as a success when its distance to the nearest valid
//! mode for that observation is at most `tol`, measured in raw action units.

use crate::error::{Error, Result};
use crate::rng::{self, tag};
use rand::Rng;
use rand_distr::StandardNormal;
use std::fmt;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GeneratorKind {
    TwoMode,
    Ring,
    ParticleAnalog,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "two_mode" => Ok(GeneratorKind::TwoMode),
            "ring" => Ok(GeneratorKind::Ring),
            "particle_analog" => Ok(GeneratorKind::ParticleAnalog),
            other => Err(Error::Config(format!(
                "unknown generator {other:?}; expected two_mode, ring or particle_analog"
            ))),
        }
    }
}

impl fmt::Display for GeneratorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GeneratorKind::TwoMode => write!(f, "two_mode"),
            GeneratorKind::Ring => write!(f, "ring"),
            GeneratorKind::ParticleAnalog => write!(f, "particle_analog"),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
}

impl Split {
    pub fn as_str(&self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
        }
    }
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(Split::Train),
            "validation" => Ok(Split::Validation),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

/// Generator specification: which task, its dimensions, jitter level, row
/// counts and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskSpec {
    pub kind: GeneratorKind,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub noise: f64,
    pub train_rows: usize,
    pub val_rows: usize,
    pub seed: u64,
}

impl TaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.obs_dim == 0 || self.act_dim == 0 {
            return Err(Error::Config("obs_dim and act_dim must be positive".into()));
        }
        match self.kind {
            GeneratorKind::TwoMode => {}
            GeneratorKind::Ring => {
                if self.act_dim != 2 {
                    return Err(Error::Config("ring task requires act_dim = 2".into()));
                }
            }
            GeneratorKind::ParticleAnalog => {
                if self.obs_dim != 4 || self.act_dim != 2 {
                    return Err(Error::Config(
                        "particle_analog requires obs_dim = 4 (two goals) and act_dim = 2".into(),
                    ));
                }
            }
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return Err(Error::Config(format!("noise must be non-negative, got {}", self.noise)));
        }
        if self.train_rows == 0 {
            return Err(Error::Config("train_rows must be positive".into()));
        }
        Ok(())
    }

    /// Upper bound on the distance jitter can move an action off its mode.
    pub fn noise_bound(&self) -> f64 {
        3.0 * self.noise * (self.act_dim as f64).sqrt()
    }
}

/// Observation-action pairs for one split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub obs_dim: usize,
    pub act_dim: usize,
    pub split: Split,
    n: usize,
    obs: Vec<f64>,
    acts: Vec<f64>,
}

impl Dataset {
    pub fn from_rows(
        obs_dim: usize,
        act_dim: usize,
        split: Split,
        obs: Vec<f64>,
        acts: Vec<f64>,
    ) -> Result<Self> {
        if obs_dim == 0 || act_dim == 0 {
            return Err(Error::Config("dataset dims must be positive".into()));
        }
        if acts.len() % act_dim != 0 || obs.len() % obs_dim != 0 {
            return Err(Error::Shape("dataset blocks not multiples of their dims".into()));
        }
        let n = acts.len() / act_dim;
        if obs.len() / obs_dim != n {
            return Err(Error::Shape(format!(
                "dataset has {} observations but {n} actions",
                obs.len() / obs_dim
            )));
        }
        if obs.iter().chain(acts.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dataset contents".into()));
        }
        Ok(Self { obs_dim, act_dim, split, n, obs, acts })
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn obs_row(&self, i: usize) -> &[f64] {
        &self.obs[i * self.obs_dim..(i + 1) * self.obs_dim]
    }

    pub fn act_row(&self, i: usize) -> &[f64] {
        &self.acts[i * self.act_dim..(i + 1) * self.act_dim]
    }

    pub fn obs_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(|i| self.obs_row(i))
    }

    pub fn act_rows(&self) -> impl Iterator<Item = &[f64]> {
        (0..self.n).map(|i| self.act_row(i))
    }
}

fn jitter(rng: &mut impl Rng, noise: f64) -> f64 {
    if noise == 0.0 {
        0.0
    } else {
        let z: f64 = rng.sample(StandardNormal);
        (z * noise).clamp(-3.0 * noise, 3.0 * noise)
    }
}

fn generate_split(spec: &TaskSpec, split: Split, rows: usize) -> Result<Dataset> {
    let data_tag = match split {
        Split::Train => tag::DATA_TRAIN,
        Split::Validation => tag::DATA_VAL,
    };
    let mut rng = rng::stream(spec.seed, &[data_tag]);
    let mut obs = Vec::with_capacity(rows * spec.obs_dim);
    let mut acts = Vec::with_capacity(rows * spec.act_dim);
    for _ in 0..rows {
        match spec.kind {
            GeneratorKind::TwoMode => {
                for _ in 0..spec.obs_dim {
                    obs.push(rng.gen_range(-1.0..1.0));
                }
                let sign = if rng.gen_bool(0.5) { 0.5 } else { -0.5 };
                for _ in 0..spec.act_dim {
                    acts.push(sign + jitter(&mut rng, spec.noise));
                }
            }
            GeneratorKind::Ring => {
                for _ in 0..spec.obs_dim {
                    obs.push(rng.gen_range(-1.0..1.0));
                }
                let phi = rng.gen_range(0.0..std::f64::consts::TAU);
                acts.push(0.5 * phi.cos() + jitter(&mut rng, spec.noise));
                acts.push(0.5 * phi.sin() + jitter(&mut rng, spec.noise));
            }
            GeneratorKind::ParticleAnalog => {
                let goals: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
                obs.extend_from_slice(&goals);
                let pick = if rng.gen_bool(0.5) { 0 } else { 2 };
                acts.push(goals[pick] + jitter(&mut rng, spec.noise));
                acts.push(goals[pick + 1] + jitter(&mut rng, spec.noise));
            }
        }
    }
    Dataset::from_rows(spec.obs_dim, spec.act_dim, split, obs, acts)
}

/// Generate the train and validation splits. Pure function of the spec.
pub fn generate(spec: &TaskSpec) -> Result<(Dataset, Dataset)> {
    spec.validate()?;
    let train = generate_split(spec, Split::Train, spec.train_rows)?;
    let val = generate_split(spec, Split::Validation, spec.val_rows)?;
    Ok((train, val))
}

/// Distance from a predicted action to the nearest valid mode for `x`,
/// in raw action units.
pub fn mode_distance(spec: &TaskSpec, x: &[f64], y_hat: &[f64]) -> Result<f64> {
    if x.len() != spec.obs_dim || y_hat.len() != spec.act_dim {
        return Err(Error::Shape(format!(
            "expected obs_dim {} and act_dim {}, got {} and {}",
            spec.obs_dim,
            spec.act_dim,
            x.len(),
            y_hat.len()
        )));
    }
    let dist = |target: &[f64]| -> f64 {
        y_hat.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
    };
    Ok(match spec.kind {
        GeneratorKind::TwoMode => {
            let hi = vec![0.5; spec.act_dim];
            let lo = vec![-0.5; spec.act_dim];
            dist(&hi).min(dist(&lo))
        }
        GeneratorKind::Ring => {
            let r = y_hat.iter().map(|v| v * v).sum::<f64>().sqrt();
            (r - 0.5).abs()
        }
        GeneratorKind::ParticleAnalog => dist(&x[0..2]).min(dist(&x[2..4])),
    })
}

/// True when the prediction lands within `tol` of a valid mode.
pub fn success(spec: &TaskSpec, x: &[f64], y_hat: &[f64], tol: f64) -> Result<bool> {
    Ok(mode_distance(spec, x, y_hat)? <= tol)
}

fn fmt_float(v: f64) -> String {
    // 17 significant digits: value-exact round trips for f64.
    format!("{v:.16e}")
}

/// Write a dataset as CSV: dims/split header, column-name header, then one
/// row per pair.
pub fn save_dataset(ds: &Dataset, path: &Path) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(out, "obs_dim,act_dim,split")?;
    writeln!(out, "{},{},{}", ds.obs_dim, ds.act_dim, ds.split.as_str())?;
    let cols: Vec<String> = (1..=ds.obs_dim)
        .map(|d| format!("x_{d}"))
        .chain((1..=ds.act_dim).map(|d| format!("y_{d}")))
        .collect();
    writeln!(out, "{}", cols.join(","))?;
    for i in 0..ds.len() {
        let row: Vec<String> =
            ds.obs_row(i).iter().chain(ds.act_row(i)).map(|v| fmt_float(*v)).collect();
        writeln!(out, "{}", row.join(","))?;
    }
    Ok(())
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

/// Load a dataset written by `save_dataset`. Errors carry 1-based line
/// numbers and name missing columns.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines().enumerate();
    let mut next_line = |expect: &str| -> Result<(usize, String)> {
        match lines.next() {
            Some((idx, Ok(text))) => Ok((idx + 1, text)),
            Some((idx, Err(e))) => Err(parse_err(idx + 1, e.to_string())),
            None => Err(parse_err(0, format!("unexpected end of file, expected {expect}"))),
        }
    };

    let (lineno, header) = next_line("header")?;
    if header.trim() != "obs_dim,act_dim,split" {
        return Err(parse_err(lineno, format!("expected header  obs_dim,act_dim,split  got {header:?}")));
    }
    let (lineno, dims) = next_line("dimensions")?;
    let parts: Vec<&str> = dims.trim().split(',').collect();
    if parts.len() != 3 {
        return Err(parse_err(lineno, "expected three comma-separated values"));
    }
    let obs_dim: usize =
        parts[0].parse().map_err(|_| parse_err(lineno, format!("bad obs_dim {:?}", parts[0])))?;
    let act_dim: usize =
        parts[1].parse().map_err(|_| parse_err(lineno, format!("bad act_dim {:?}", parts[1])))?;
    let split: Split = parts[2].parse()?;
    if obs_dim == 0 || act_dim == 0 {
        return Err(parse_err(lineno, "dims must be positive"));
    }

    let (lineno, cols) = next_line("column names")?;
    let got: Vec<&str> = cols.trim().split(',').collect();
    let want: Vec<String> = (1..=obs_dim)
        .map(|d| format!("x_{d}"))
        .chain((1..=act_dim).map(|d| format!("y_{d}")))
        .collect();
    for (i, w) in want.iter().enumerate() {
        if got.get(i).map(|g| *g != w).unwrap_or(true) {
            return Err(parse_err(lineno, format!("missing column {w}")));
        }
    }
    if got.len() != want.len() {
        return Err(parse_err(lineno, format!("unexpected extra column {:?}", got[want.len()])));
    }

    let width = obs_dim + act_dim;
    let mut obs = Vec::new();
    let mut acts = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| parse_err(lineno, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.trim().split(',').collect();
        if fields.len() != width {
            return Err(parse_err(
                lineno,
                format!("expected {width} fields, got {}", fields.len()),
            ));
        }
        for (c, field) in fields.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse_err(lineno, format!("bad float {field:?} in column {}", want[c])))?;
            if c < obs_dim {
                obs.push(v);
            } else {
                acts.push(v);
            }
        }
    }
    Dataset::from_rows(obs_dim, act_dim, split, obs, acts)
}
