use std::time::Instant;
use cplab_core::experiments::{self, ExperimentConfig, ExperimentKind};

fn main() {
    for (k, t_last) in [(1i64, 240.0f64), (1, 320.0), (2, 400.0)] {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Extinction, 0xACCC);
        cfg.replicas = 300; cfg.k = Some(k);
        cfg.t_grid = Some(vec![10.0, 60.0, t_last]);
        cfg.speed_allowance = Some(3.0);
        cfg.skip_supercritical_check = true;
        let t0 = Instant::now();
        let r = experiments::run(&cfg).unwrap();
        let fr: Vec<f64> = r.cells.iter().map(|c| c.estimate).collect();
        println!("k={k} t_last={t_last}: fractions {:?} ({:.0} ms/rep)", fr, t0.elapsed().as_secs_f64() * 1000.0 / 300.0);
    }
}
