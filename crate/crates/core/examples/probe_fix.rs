use std::time::Instant;
use cplab_core::experiments::{self, ExperimentConfig, ExperimentKind};

fn main() {
    // Density with fixed window sizing.
    let mut cfg = ExperimentConfig::new(ExperimentKind::DensityDecay, 0xACC9);
    cfg.replicas = 120; cfg.n_grid = Some(vec![1, 3]); cfg.t_grid = Some(vec![5.0, 10.0, 20.0, 40.0]);
    cfg.core_half = Some(40); cfg.speed_allowance = Some(3.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    println!("density: {:.1} ms/replica", t0.elapsed().as_secs_f64() * 1000.0 / 120.0);
    for c in &r.checks { println!("  [{}] {}: {}", if c.pass { "P" } else { "F" }, c.name, c.detail); }
    for cell in r.cells.iter() { println!("  {} = {:.4} (valid {}, cont {})", cell.cell, cell.estimate, cell.n_valid, cell.discarded_contaminated); }

    // Extinction horizon extension.
    let mut cfg = ExperimentConfig::new(ExperimentKind::Extinction, 0xACCC);
    cfg.replicas = 200; cfg.k = Some(2); cfg.t_grid = Some(vec![10.0, 40.0, 160.0]);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    println!("extinction-160: {:.1} ms/replica", t0.elapsed().as_secs_f64() * 1000.0 / 200.0);
    for c in &r.checks { println!("  [{}] {}: {}", if c.pass { "P" } else { "F" }, c.name, c.detail); }

    // Interface cost after tick-sort fix.
    let mut cfg = ExperimentConfig::new(ExperimentKind::InterfaceTightness, 0xACCA);
    cfg.replicas = 100; cfg.t_grid = Some(vec![25.0, 50.0, 100.0]);
    cfg.core_half = Some(40); cfg.speed_allowance = Some(6.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let _ = experiments::run(&cfg).unwrap();
    println!("interface: {:.1} ms/replica", t0.elapsed().as_secs_f64() * 1000.0 / 100.0);
}
