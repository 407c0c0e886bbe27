// oracle run — temporary tuning harness for the two_mode training criterion
use ebmlab::data::{GeneratorKind, TaskSpec};
use ebmlab::train::{TrainConfig, Trainer, Trial};
use std::time::Instant;

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let rows: usize = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(512);
    let m: usize = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(16);
    let epochs: usize = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(40);
    let seed: u64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(7);

    let task = TaskSpec {
        kind: GeneratorKind::TwoMode,
        obs_dim: 1,
        act_dim: 1,
        noise: args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.05),
        train_rows: rows,
        val_rows: 128,
        seed: seed + 1000,
    };
    let mut cfg = TrainConfig::trial_defaults(Trial::Ibc, epochs, seed).unwrap();
    cfg.negatives = m;
    cfg.train_chain.num_chains = m;
    cfg.infer_chain.num_chains = 32;
    let mut t = Trainer::new(cfg, task).unwrap();
    let start = Instant::now();
    for e in 0..epochs {
        let row = t.train_epoch().unwrap();
        if e % 10 == 0 || e == epochs - 1 || (row.val_success >= 0.9 && e % 3 == 0) {
            println!(
                "epoch {e:3}  loss {:.4}  success {:.3}  Epos {:+.3}  Eneg {:+.3}  mi {:.3}  {:.2}s/ep  total {:.1}s",
                row.train_loss, row.val_success, row.mean_positive_energy,
                row.mean_negative_energy, row.mi_lower_bound, row.wall_clock_s,
                start.elapsed().as_secs_f64()
            );
        }
    }
}
