// debug: learned energy profile over the action axis
use ebmlab::data::{GeneratorKind, TaskSpec};
use ebmlab::train::{infer, TrainConfig, Trainer, Trial};

fn main() {
    let task = TaskSpec {
        kind: GeneratorKind::TwoMode, obs_dim: 1, act_dim: 1, noise: 0.0,
        train_rows: 512, val_rows: 64, seed: 1007,
    };
    let mut cfg = TrainConfig::trial_defaults(Trial::Ibc, 10, 7).unwrap();
    cfg.negatives = 16;
    cfg.train_chain.num_chains = 16;
    cfg.infer_chain.num_chains = 32;
    let mut t = Trainer::new(cfg, task).unwrap();
    for _ in 0..10 {
        let r = t.train_epoch().unwrap();
        println!("epoch {} loss {:.4} success {:.3}", r.epoch, r.train_loss, r.val_success);
    }
    let model = t.model();
    println!("energy profile at x = 0.0 (raw y from -0.6 to 0.6):");
    for i in 0..13 {
        let y = -0.6 + 0.1 * i as f64;
        let e = model.energy(&[0.0], &[y]).unwrap();
        println!("  y {y:+.2} -> E {e:+.5}");
    }
    let mut chain = t.config().infer_chain.clone();
    chain.seed = 12345;
    for x in [-0.5, 0.0, 0.5] {
        let y = infer(model, &[x], &chain).unwrap();
        println!("infer(x={x}) = {:+.4}", y[0]);
    }
}
