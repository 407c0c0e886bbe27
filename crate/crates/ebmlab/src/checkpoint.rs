//! Versioned text checkpoints.
//!
//! A checkpoint is a sequence of named arrays in a plain-text envelope:
//!
//! ```text
//! ebmlab-checkpoint v1
//! array cond.layer_sizes u 4
//! 3 256 256 1
//! array cond.params f 67073
//! -4.9261762534898085e-2 ...
//! end
//! ```
//!
//! Floats are written with 17 significant digits, so parsing them back
//! reproduces the exact f64 bit pattern. The trailing `end` line guards
//! against truncated files.

use crate::error::{Error, Result};
use crate::model::{ConditionalEbm, MarginalEbm, Normalizer};
use crate::nn::DenseEnergyNet;
use crate::optim::AdamState;
use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const HEADER: &str = "ebmlab-checkpoint v1";

enum Values {
    U(Vec<u64>),
    F(Vec<f64>),
}

/// Builds a checkpoint in memory, then writes it in one go.
pub struct CheckpointWriter {
    entries: Vec<(String, Values)>,
}

impl Default for CheckpointWriter {
    fn default() -> Self {
        Self::new()
    }
}

impl CheckpointWriter {
    pub fn new() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn put_u64s(&mut self, name: &str, values: &[u64]) {
        self.entries.push((name.to_string(), Values::U(values.to_vec())));
    }

    pub fn put_scalar_u64(&mut self, name: &str, value: u64) {
        self.put_u64s(name, &[value]);
    }

    pub fn put_f64s(&mut self, name: &str, values: &[f64]) {
        self.entries.push((name.to_string(), Values::F(values.to_vec())));
    }

    pub fn put_scalar_f64(&mut self, name: &str, value: f64) {
        self.put_f64s(name, &[value]);
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "{HEADER}")?;
        for (name, values) in &self.entries {
            match values {
                Values::U(vs) => {
                    writeln!(out, "array {name} u {}", vs.len())?;
                    for chunk in vs.chunks(16) {
                        let line: Vec<String> = chunk.iter().map(|v| v.to_string()).collect();
                        writeln!(out, "{}", line.join(" "))?;
                    }
                }
                Values::F(vs) => {
                    writeln!(out, "array {name} f {}", vs.len())?;
                    for chunk in vs.chunks(8) {
                        let line: Vec<String> = chunk.iter().map(|v| format!("{v:.16e}")).collect();
                        writeln!(out, "{}", line.join(" "))?;
                    }
                }
            }
        }
        writeln!(out, "end")?;
        Ok(())
    }
}

/// Parsed checkpoint with typed access by name.
pub struct CheckpointReader {
    u_arrays: HashMap<String, Vec<u64>>,
    f_arrays: HashMap<String, Vec<f64>>,
}

impl CheckpointReader {
    pub fn read(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut lines = BufReader::new(file).lines().enumerate().map(|(i, l)| (i + 1, l));
        let (lineno, header) = match lines.next() {
            Some((n, Ok(h))) => (n, h),
            Some((n, Err(e))) => return Err(Error::Parse { line: n, message: e.to_string() }),
            None => return Err(Error::Checkpoint("empty checkpoint file".into())),
        };
        if header.trim() != HEADER {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version: expected {HEADER:?}, got {:?} (line {lineno})",
                header.trim()
            )));
        }
        let mut u_arrays = HashMap::new();
        let mut f_arrays = HashMap::new();
        let mut saw_end = false;
        while let Some((lineno, line)) = lines.next() {
            let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if line == "end" {
                saw_end = true;
                break;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            if parts.len() != 4 || parts[0] != "array" {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected  array <name> <u|f> <len>  got {line:?}"),
                });
            }
            let name = parts[1].to_string();
            let kind = parts[2];
            let len: usize = parts[3]
                .parse()
                .map_err(|_| Error::Parse { line: lineno, message: format!("bad length {:?}", parts[3]) })?;
            let mut got = 0usize;
            let mut us = Vec::new();
            let mut fs = Vec::new();
            while got < len {
                let (lineno, line) = lines
                    .next()
                    .ok_or_else(|| Error::Checkpoint(format!("truncated array {name}")))?;
                let line = line.map_err(|e| Error::Parse { line: lineno, message: e.to_string() })?;
                for token in line.split_whitespace() {
                    if got >= len {
                        return Err(Error::Parse {
                            line: lineno,
                            message: format!("too many values in array {name}"),
                        });
                    }
                    match kind {
                        "u" => us.push(token.parse::<u64>().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("bad integer {token:?} in {name}"),
                        })?),
                        "f" => fs.push(token.parse::<f64>().map_err(|_| Error::Parse {
                            line: lineno,
                            message: format!("bad float {token:?} in {name}"),
                        })?),
                        other => {
                            return Err(Error::Parse {
                                line: lineno,
                                message: format!("unknown array kind {other:?}"),
                            })
                        }
                    }
                    got += 1;
                }
            }
            match kind {
                "u" => {
                    u_arrays.insert(name, us);
                }
                _ => {
                    f_arrays.insert(name, fs);
                }
            }
        }
        if !saw_end {
            return Err(Error::Checkpoint("truncated checkpoint: missing end marker".into()));
        }
        Ok(Self { u_arrays, f_arrays })
    }

    pub fn u64s(&self, name: &str) -> Result<&[u64]> {
        self.u_arrays
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))
    }

    pub fn f64s(&self, name: &str) -> Result<&[f64]> {
        self.f_arrays
            .get(name)
            .map(|v| v.as_slice())
            .ok_or_else(|| Error::Checkpoint(format!("missing array {name}")))
    }

    pub fn scalar_u64(&self, name: &str) -> Result<u64> {
        let vs = self.u64s(name)?;
        if vs.len() != 1 {
            return Err(Error::Checkpoint(format!("array {name} is not a scalar")));
        }
        Ok(vs[0])
    }

    pub fn scalar_f64(&self, name: &str) -> Result<f64> {
        let vs = self.f64s(name)?;
        if vs.len() != 1 {
            return Err(Error::Checkpoint(format!("array {name} is not a scalar")));
        }
        Ok(vs[0])
    }

    pub fn has(&self, name: &str) -> bool {
        self.u_arrays.contains_key(name) || self.f_arrays.contains_key(name)
    }
}

pub(crate) fn put_net(w: &mut CheckpointWriter, prefix: &str, net: &DenseEnergyNet) {
    let sizes: Vec<u64> = net.layer_sizes().iter().map(|&s| s as u64).collect();
    w.put_u64s(&format!("{prefix}.layer_sizes"), &sizes);
    w.put_f64s(&format!("{prefix}.params"), net.params());
}

pub(crate) fn get_net(r: &CheckpointReader, prefix: &str) -> Result<DenseEnergyNet> {
    let sizes: Vec<usize> =
        r.u64s(&format!("{prefix}.layer_sizes"))?.iter().map(|&s| s as usize).collect();
    let params = r.f64s(&format!("{prefix}.params"))?.to_vec();
    DenseEnergyNet::from_params(&sizes, params)
        .map_err(|e| Error::Checkpoint(format!("{prefix}: {e}")))
}

pub(crate) fn put_normalizer(w: &mut CheckpointWriter, prefix: &str, n: &Normalizer) {
    w.put_f64s(&format!("{prefix}.min"), n.min());
    w.put_f64s(&format!("{prefix}.max"), n.max());
}

pub(crate) fn get_normalizer(r: &CheckpointReader, prefix: &str) -> Result<Normalizer> {
    let min = r.f64s(&format!("{prefix}.min"))?.to_vec();
    let max = r.f64s(&format!("{prefix}.max"))?.to_vec();
    Normalizer::new(min, max).map_err(|e| Error::Checkpoint(format!("{prefix}: {e}")))
}

pub(crate) fn put_adam(w: &mut CheckpointWriter, prefix: &str, a: &AdamState) {
    w.put_f64s(&format!("{prefix}.m"), &a.m);
    w.put_f64s(&format!("{prefix}.v"), &a.v);
    w.put_scalar_u64(&format!("{prefix}.t"), a.t);
    w.put_f64s(
        &format!("{prefix}.hyper"),
        &[a.beta1, a.beta2, a.epsilon, a.learning_rate],
    );
}

pub(crate) fn get_adam(r: &CheckpointReader, prefix: &str) -> Result<AdamState> {
    let m = r.f64s(&format!("{prefix}.m"))?.to_vec();
    let v = r.f64s(&format!("{prefix}.v"))?.to_vec();
    if m.len() != v.len() {
        return Err(Error::Checkpoint(format!("{prefix}: moment arrays disagree in length")));
    }
    let hyper = r.f64s(&format!("{prefix}.hyper"))?;
    if hyper.len() != 4 {
        return Err(Error::Checkpoint(format!("{prefix}: expected 4 hyperparameters")));
    }
    Ok(AdamState {
        t: r.scalar_u64(&format!("{prefix}.t"))?,
        m,
        v,
        beta1: hyper[0],
        beta2: hyper[1],
        epsilon: hyper[2],
        learning_rate: hyper[3],
    })
}

/// Save a conditional model (net + normalizer ranges + seed lineage).
pub fn save_model(path: &Path, model: &ConditionalEbm, seed: u64) -> Result<()> {
    let mut w = CheckpointWriter::new();
    w.put_scalar_u64("seed", seed);
    put_net(&mut w, "cond", &model.net);
    put_normalizer(&mut w, "cond.obs_normalizer", &model.obs_normalizer);
    put_normalizer(&mut w, "cond.act_normalizer", &model.act_normalizer);
    w.write(path)
}

/// Load a conditional model saved with `save_model`.
pub fn load_model(path: &Path) -> Result<(ConditionalEbm, u64)> {
    let r = CheckpointReader::read(path)?;
    let net = get_net(&r, "cond")?;
    let obs = get_normalizer(&r, "cond.obs_normalizer")?;
    let act = get_normalizer(&r, "cond.act_normalizer")?;
    let model = ConditionalEbm::new(net, obs, act)
        .map_err(|e| Error::Checkpoint(format!("inconsistent model dims: {e}")))?;
    Ok((model, r.scalar_u64("seed")?))
}

pub(crate) fn put_marginal(w: &mut CheckpointWriter, prefix: &str, model: &MarginalEbm) {
    put_net(w, prefix, &model.net);
    put_normalizer(w, &format!("{prefix}.act_normalizer"), &model.act_normalizer);
}

pub(crate) fn get_marginal(r: &CheckpointReader, prefix: &str) -> Result<MarginalEbm> {
    let net = get_net(r, prefix)?;
    let act = get_normalizer(r, &format!("{prefix}.act_normalizer"))?;
    MarginalEbm::new(net, act).map_err(|e| Error::Checkpoint(format!("inconsistent dims: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Normalizer;

    fn tmp_dir() -> std::path::PathBuf {
        let dir = std::env::temp_dir().join(format!(
            "ebmlab_ckpt_{}_{:?}",
            std::process::id(),
            std::thread::current().id()
        ));
        std::fs::create_dir_all(&dir).unwrap();
        dir
    }

    #[test]
    fn model_roundtrip_is_value_exact() {
        let dir = tmp_dir();
        let net = DenseEnergyNet::init(&[3, 32, 32, 1], 0.05, 123).unwrap();
        let model = ConditionalEbm::new(
            net,
            Normalizer::new(vec![-1.0], vec![1.0]).unwrap(),
            Normalizer::new(vec![-0.5, 0.25], vec![0.5, 0.75]).unwrap(),
        )
        .unwrap();
        let path = dir.join("model.txt");
        save_model(&path, &model, 99).unwrap();
        let (loaded, seed) = load_model(&path).unwrap();
        assert_eq!(seed, 99);
        assert_eq!(loaded.net.params(), model.net.params());
        assert_eq!(loaded.obs_normalizer, model.obs_normalizer);
        assert_eq!(loaded.act_normalizer, model.act_normalizer);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn adam_roundtrip() {
        let dir = tmp_dir();
        let mut a = AdamState::new(5, 0.001);
        a.m = vec![0.1, -0.2, 0.3, 1e-300, 4.0];
        a.v = vec![0.01, 0.02, 0.0, 1.0, 2.0];
        a.t = 7;
        let mut w = CheckpointWriter::new();
        put_adam(&mut w, "opt", &a);
        let path = dir.join("adam.txt");
        w.write(&path).unwrap();
        let r = CheckpointReader::read(&path).unwrap();
        assert_eq!(get_adam(&r, "opt").unwrap(), a);
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn version_mismatch_is_a_checkpoint_error() {
        let dir = tmp_dir();
        let path = dir.join("v0.txt");
        std::fs::write(&path, "ebmlab-checkpoint v0\nend\n").unwrap();
        assert!(matches!(CheckpointReader::read(&path), Err(Error::Checkpoint(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn truncated_file_is_rejected() {
        let dir = tmp_dir();
        let path = dir.join("trunc.txt");
        std::fs::write(&path, "ebmlab-checkpoint v1\narray x f 4\n1.0 2.0\n").unwrap();
        assert!(CheckpointReader::read(&path).is_err());
        let path2 = dir.join("noend.txt");
        std::fs::write(&path2, "ebmlab-checkpoint v1\narray x f 1\n1.0\n").unwrap();
        assert!(matches!(CheckpointReader::read(&path2), Err(Error::Checkpoint(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn mismatched_dims_are_typed_errors() {
        let dir = tmp_dir();
        // Net sized for 3 inputs but normalizers describing 1 + 1 dims.
        let mut w = CheckpointWriter::new();
        w.put_scalar_u64("seed", 1);
        put_net(&mut w, "cond", &DenseEnergyNet::zeros(&[3, 2, 1]).unwrap());
        put_normalizer(&mut w, "cond.obs_normalizer", &Normalizer::identity(1));
        put_normalizer(&mut w, "cond.act_normalizer", &Normalizer::identity(1));
        let path = dir.join("mismatch.txt");
        w.write(&path).unwrap();
        assert!(matches!(load_model(&path), Err(Error::Checkpoint(_))));
        std::fs::remove_dir_all(&dir).ok();
    }

    #[test]
    fn default_net_checkpoint_stays_under_five_megabytes() {
        let dir = tmp_dir();
        let net = DenseEnergyNet::init(&[2, 256, 256, 1], 0.05, 5).unwrap();
        let model = ConditionalEbm::new(net, Normalizer::identity(1), Normalizer::identity(1)).unwrap();
        let path = dir.join("default.txt");
        save_model(&path, &model, 5).unwrap();
        let bytes = std::fs::metadata(&path).unwrap().len();
        assert!(bytes <= 5 * 1024 * 1024, "checkpoint is {bytes} bytes");
        std::fs::remove_dir_all(&dir).ok();
    }
}
