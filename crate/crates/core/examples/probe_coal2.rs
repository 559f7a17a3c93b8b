use std::time::Instant;
use cplab_core::experiments::{self, ExperimentConfig, ExperimentKind};

fn main() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::CoalescenceTail, 0xACC7);
    cfg.replicas = 800;
    cfg.sep_grid = Some(vec![1, 4, 16]);
    cfg.t_grid = Some(vec![4.0, 16.0, 64.0]);
    cfg.margin = 15.0;
    cfg.speed_allowance = Some(3.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let report = experiments::run(&cfg).unwrap();
    let dt = t0.elapsed().as_secs_f64();
    println!("{} replicas in {:.1}s -> {:.1} ms/replica; projected 20000 reps: {:.0}s",
        cfg.replicas, dt, dt * 1000.0 / cfg.replicas as f64, dt / cfg.replicas as f64 * 20000.0);
    for c in &report.checks {
        println!("[{}] {}: {}", if c.pass { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    for cell in report.cells.iter().filter(|c| c.cell.starts_with("tv")) {
        println!("{}: {:.4} +- {:.4} (n={})", cell.cell, cell.estimate, cell.stderr, cell.n_valid);
    }
}
