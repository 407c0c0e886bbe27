// oracle scan — temporary tuning harness
use ebmlab::model::QuadraticEnergy;
use ebmlab::sampler::*;

fn median(v: &mut Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v[v.len() / 2]
}

fn main() {
    let target = QuadraticEnergy::standard(2);
    let tau = 0.2;
    let cfg = ChainConfig {
        formulation: Formulation::Correct,
        iterations: 4000,
        step_schedule: PolySchedule::constant(tau, 4000).unwrap(),
        noise_scale: 1.0,
        per_step_clip_fraction: 1.0,
        domain_margin: 9.0,
        num_chains: 1,
        burn_in: 3000,
        strategy: ChainStrategy::LongChain,
        seed: 0,
    };
    for base in 0..8u64 {
        let seeds: Vec<u64> = (0..5).map(|i| base * 100 + i + 1).collect();
        let mut means = [vec![], vec![]];
        let mut vars = [vec![], vec![]];
        for &s in &seeds {
            let mut c = cfg.clone();
            c.seed = s;
            let r = diagnose_moments(&target, &c, 3000).unwrap();
            for d in 0..2 {
                means[d].push(r.mean[d].abs());
                vars[d].push(r.variance[d]);
            }
        }
        println!(
            "seeds {:?}: |mean| medians ({:.3}, {:.3})  var medians ({:.3}, {:.3})",
            seeds,
            median(&mut means[0]),
            median(&mut means[1]),
            median(&mut vars[0]),
            median(&mut vars[1])
        );
    }
    // ibc side at lambda 0.1 sigma 1 over same seed style
    let mut vars = vec![];
    for s in 1..=5u64 {
        let c = ChainConfig {
            formulation: Formulation::Ibc,
            step_schedule: PolySchedule::constant(0.1, 4000).unwrap(),
            noise_scale: 1.0,
            seed: s,
            ..cfg.clone()
        };
        let r = diagnose_moments(&target, &c, 3000).unwrap();
        vars.push(r.variance[0]);
        vars.push(r.variance[1]);
    }
    println!("ibc lambda 0.1 sigma 1: variances {:?}", vars.iter().map(|v| format!("{v:.4}")).collect::<Vec<_>>());
}
