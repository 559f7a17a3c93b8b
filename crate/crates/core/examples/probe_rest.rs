use std::time::Instant;
use cplab_core::experiments::{self, ExperimentConfig, ExperimentKind};

fn show(r: &experiments::ExperimentReport, label: &str, dt: f64, reps: usize) {
    println!("== {label}: {:.1} ms/replica", dt * 1000.0 / reps as f64);
    for c in &r.checks {
        println!("  [{}] {}: {}", if c.pass { "P" } else { "F" }, c.name, c.detail);
    }
    for cell in r.cells.iter().take(14) {
        println!("  {} = {:.4} +- {:.4} (valid {}, cont {}, cens {})", cell.cell, cell.estimate, cell.stderr, cell.n_valid, cell.discarded_contaminated, cell.censored);
    }
}

fn main() {
    // Extinction: does the final cell clear 0.9 at t = 40?
    let mut cfg = ExperimentConfig::new(ExperimentKind::Extinction, 0xACCC);
    cfg.replicas = 150; cfg.k = Some(2); cfg.t_grid = Some(vec![10.0, 20.0, 40.0]);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "extinction", t0.elapsed().as_secs_f64(), 150);

    // Survival in K.
    let mut cfg = ExperimentConfig::new(ExperimentKind::Survival, 0xACCD);
    cfg.replicas = 150; cfg.k_grid = Some(vec![2, 8, 32]); cfg.horizon = Some(30.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "survival", t0.elapsed().as_secs_f64(), 150);

    // Interface tightness smoke.
    let mut cfg = ExperimentConfig::new(ExperimentKind::InterfaceTightness, 0xACCA);
    cfg.replicas = 200; cfg.t_grid = Some(vec![25.0, 50.0, 100.0]);
    cfg.core_half = Some(40); cfg.speed_allowance = Some(6.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "interface", t0.elapsed().as_secs_f64(), 200);

    // Density decay smoke.
    let mut cfg = ExperimentConfig::new(ExperimentKind::DensityDecay, 0xACC9);
    cfg.replicas = 120; cfg.n_grid = Some(vec![1, 3]); cfg.t_grid = Some(vec![5.0, 10.0, 20.0, 40.0]);
    cfg.core_half = Some(40); cfg.speed_allowance = Some(3.0);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "density", t0.elapsed().as_secs_f64(), 120);

    // Edge speed smoke.
    let mut cfg = ExperimentConfig::new(ExperimentKind::EdgeSpeed, 0xACE1);
    cfg.replicas = 150;
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "edge_speed", t0.elapsed().as_secs_f64(), 150);

    // Interface event smoke.
    let mut cfg = ExperimentConfig::new(ExperimentKind::InterfaceEvent, 0xACE2);
    cfg.replicas = 100; cfg.s_grid = Some(vec![3.0, 6.0]); cfg.dt = Some(8.0); cfg.core_half = Some(12);
    cfg.skip_supercritical_check = true;
    let t0 = Instant::now();
    let r = experiments::run(&cfg).unwrap();
    show(&r, "interface_event", t0.elapsed().as_secs_f64(), 100);
}
