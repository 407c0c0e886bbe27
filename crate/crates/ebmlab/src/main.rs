//! Command-line driver: training runs, sampler diagnostics, evaluation and
//! dataset generation. Exit codes: 0 success, 1 runtime failure, 2 config
//! error. `EBMLAB_THREADS` caps sampler parallelism.

use clap::{Parser, Subcommand};
use ebmlab::config;
use ebmlab::data::{self, Dataset};
use ebmlab::error::{Error, Result};
use ebmlab::model::QuadraticEnergy;
use ebmlab::sampler::{diagnose_moments, Formulation};
use ebmlab::train::{infer, MetricsRow, Trainer};
use std::io::Write;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(name = "ebmlab", about = "Train and diagnose conditional energy-based policies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Suppress per-epoch progress on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    /// Override the config file's seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Run a training trial and write metrics, checkpoint and summary.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare both Langevin formulations against an analytic target.
    Diagnose {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a checkpoint on a saved dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Generate train/validation CSVs for a task.
    Gen {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn main() {
    let cli = Cli::parse();
    if let Ok(threads) = std::env::var("EBMLAB_THREADS") {
        match threads.parse::<usize>() {
            Ok(n) if n > 0 => {
                rayon::ThreadPoolBuilder::new().num_threads(n).build_global().ok();
            }
            _ => {
                eprintln!("ebmlab: ignoring invalid EBMLAB_THREADS={threads:?}");
            }
        }
    }
    let code = match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("ebmlab: {e}");
            if e.is_config() {
                2
            } else {
                1
            }
        }
    };
    std::process::exit(code);
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config, out } => cmd_train(config, out, cli.seed, cli.quiet),
        Command::Diagnose { config, out } => cmd_diagnose(config, out, cli.seed, cli.quiet),
        Command::Eval { checkpoint, dataset, config, out } => {
            cmd_eval(checkpoint, dataset, config, out, cli.seed, cli.quiet)
        }
        Command::Gen { config, out } => cmd_gen(config, out, cli.seed, cli.quiet),
    }
}

fn ensure_out(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out)?;
    Ok(())
}

fn cmd_train(config: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> Result<()> {
    let (cfg, task) = config::load_train_config(config, seed)?;
    ensure_out(out)?;
    let trial = cfg.trial.as_str().to_string();
    let epochs = cfg.epochs;
    let mut trainer = Trainer::new(cfg, task)?;

    let metrics_path = out.join("metrics.csv");
    let mut metrics = std::io::BufWriter::new(std::fs::File::create(&metrics_path)?);
    writeln!(metrics, "{}", MetricsRow::CSV_HEADER)?;

    let mut last_row: Option<MetricsRow> = None;
    let mut failure: Option<Error> = None;
    for _ in 0..epochs {
        match trainer.train_epoch() {
            Ok(row) => {
                writeln!(metrics, "{}", row.to_csv_line())?;
                if !quiet {
                    eprintln!(
                        "epoch {:4}  loss {:.6}  success {:.3}  mi {:.4}  ({:.2} s)",
                        row.epoch, row.train_loss, row.val_success, row.mi_lower_bound, row.wall_clock_s
                    );
                }
                last_row = Some(row);
            }
            Err(e) => {
                failure = Some(e);
                break;
            }
        }
    }
    metrics.flush()?;
    drop(metrics);

    // On failure the trainer has rolled back to the last complete epoch;
    // keep that state on disk either way.
    trainer.save_checkpoint(&out.join("checkpoint.txt"))?;
    if let Some(e) = failure {
        return Err(e);
    }

    let mut summary = std::io::BufWriter::new(std::fs::File::create(out.join("summary.csv"))?);
    writeln!(summary, "trial,epochs,final_val_success,final_train_loss,final_mi_lower_bound")?;
    let (succ, loss, mi) = match &last_row {
        Some(r) => (r.val_success, r.train_loss, r.mi_lower_bound),
        None => (f64::NAN, f64::NAN, f64::NAN),
    };
    writeln!(summary, "{trial},{epochs},{succ:.16e},{loss:.16e},{mi:.16e}")?;
    Ok(())
}

fn cmd_diagnose(config: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> Result<()> {
    let cfg = config::load_diagnose_config(config, seed)?;
    ensure_out(out)?;
    let dim = cfg.alpha.len();
    let target = QuadraticEnergy::new(cfg.alpha.clone(), vec![0.0; dim]);

    let mut samples = std::io::BufWriter::new(std::fs::File::create(out.join("samples.csv"))?);
    let coord_cols: Vec<String> = (1..=dim).map(|d| format!("y_{d}")).collect();
    writeln!(samples, "formulation,step,{}", coord_cols.join(","))?;

    let mut summary = std::io::BufWriter::new(std::fs::File::create(out.join("summary.csv"))?);
    let mean_cols: Vec<String> = (1..=dim).map(|d| format!("mean_{d}")).collect();
    let var_cols: Vec<String> = (1..=dim).map(|d| format!("var_{d}")).collect();
    writeln!(summary, "formulation,step_size,sigma,{},{}", mean_cols.join(","), var_cols.join(","))?;

    for formulation in [Formulation::Correct, Formulation::Ibc] {
        let chain = cfg.chain_for(formulation)?;
        let report = diagnose_moments(&target, &chain, cfg.discard)?;
        for r in 0..report.sample_count() {
            let coords: Vec<String> = report.sample(r).iter().map(|v| format!("{v:.16e}")).collect();
            writeln!(samples, "{formulation},{},{}", report.first_step + r, coords.join(","))?;
        }
        let step = match formulation {
            Formulation::Correct => cfg.correct_step,
            Formulation::Ibc => cfg.ibc_step,
        };
        let sigma = match formulation {
            Formulation::Correct => 1.0,
            Formulation::Ibc => cfg.ibc_sigma,
        };
        let means: Vec<String> = report.mean.iter().map(|v| format!("{v:.16e}")).collect();
        let vars: Vec<String> = report.variance.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(summary, "{formulation},{step},{sigma},{},{}", means.join(","), vars.join(","))?;
        if !quiet {
            eprintln!(
                "{formulation}: mean {:?} variance {:?} over {} retained samples",
                report.mean,
                report.variance,
                report.sample_count()
            );
        }
    }
    Ok(())
}

fn cmd_eval(
    checkpoint: &Path,
    dataset: &Path,
    config: &Path,
    out: &Path,
    seed: Option<u64>,
    quiet: bool,
) -> Result<()> {
    let cfg = config::load_eval_config(config, seed)?;
    let (model, _seed_lineage) = ebmlab::checkpoint::load_model(checkpoint)?;
    let ds: Dataset = data::load_dataset(dataset)?;
    if ds.is_empty() {
        return Err(Error::Config(format!("dataset {} has no rows to evaluate", dataset.display())));
    }
    if ds.obs_dim != model.obs_dim() || ds.act_dim != model.act_dim() {
        return Err(Error::Shape(format!(
            "dataset dims ({}, {}) do not match checkpoint dims ({}, {})",
            ds.obs_dim,
            ds.act_dim,
            model.obs_dim(),
            model.act_dim()
        )));
    }
    if ds.obs_dim != cfg.task.obs_dim || ds.act_dim != cfg.task.act_dim {
        return Err(Error::Shape(format!(
            "dataset dims ({}, {}) do not match task dims ({}, {})",
            ds.obs_dim, ds.act_dim, cfg.task.obs_dim, cfg.task.act_dim
        )));
    }
    ensure_out(out)?;

    let mut rows_csv = std::io::BufWriter::new(std::fs::File::create(out.join("eval_rows.csv"))?);
    let x_cols: Vec<String> = (1..=ds.obs_dim).map(|d| format!("x_{d}")).collect();
    let y_cols: Vec<String> = (1..=ds.act_dim).map(|d| format!("yhat_{d}")).collect();
    writeln!(rows_csv, "{},{},mode_distance,success", x_cols.join(","), y_cols.join(","))?;

    let mut hits = 0usize;
    for i in 0..ds.len() {
        let x = ds.obs_row(i);
        let mut chain = cfg.chain.clone();
        chain.seed = ebmlab::rng::derive(cfg.chain.seed, &[ebmlab::rng::tag::VAL_INFER, i as u64]);
        let y_hat = infer(&model, x, &chain)?;
        let dist = data::mode_distance(&cfg.task, x, &y_hat)?;
        let ok = dist <= cfg.success_tol;
        hits += ok as usize;
        let xs: Vec<String> = x.iter().map(|v| format!("{v:.16e}")).collect();
        let ys: Vec<String> = y_hat.iter().map(|v| format!("{v:.16e}")).collect();
        writeln!(rows_csv, "{},{},{dist:.16e},{}", xs.join(","), ys.join(","), ok as u8)?;
    }
    let rate = hits as f64 / ds.len() as f64;
    let mut summary = std::io::BufWriter::new(std::fs::File::create(out.join("summary.csv"))?);
    writeln!(summary, "rows,success_rate")?;
    writeln!(summary, "{},{rate:.16e}", ds.len())?;
    if !quiet {
        eprintln!("evaluated {} rows: success rate {rate:.3}", ds.len());
    }
    Ok(())
}

fn cmd_gen(config: &Path, out: &Path, seed: Option<u64>, quiet: bool) -> Result<()> {
    let task = config::load_gen_config(config, seed)?;
    ensure_out(out)?;
    let (train, val) = data::generate(&task)?;
    data::save_dataset(&train, &out.join("train.csv"))?;
    data::save_dataset(&val, &out.join("validation.csv"))?;
    if !quiet {
        eprintln!(
            "wrote {} train rows and {} validation rows for {}",
            train.len(),
            val.len(),
            task.kind
        );
    }
    Ok(())
}
