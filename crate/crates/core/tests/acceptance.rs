//! Acceptance suite: thirteen gate criteria, one test each, every tolerance
//! pinned in code.  Each test prints a single `[PASS]`/`[FAIL]` line (run
//! with `-- --nocapture` to see them) and asserts its verdict.
//!
//! Exact criteria compare alternative computation routes realization by
//! realization; statistical criteria run replicated campaigns at fixed
//! seeds with the stated replica counts and bands.


use rand::Rng;

use cplab_core::ancestry::{self, oracle};
use cplab_core::experiments::{self, ExperimentConfig, ExperimentKind};
use cplab_core::forward::{
    self, check_monotone_coupling, evolve_multitype, evolve_one_type, OneTypeConfig, TypedConfig,
    TYPE_ONE, TYPE_TWO, VACANT,
};
use cplab_core::harris::{HarrisConstruction, SpaceTimePoint, Window};
use cplab_core::kernel::Kernel;
use cplab_core::seeding;
use cplab_core::stats;
use cplab_core::timegrid;

fn verdict(number: u32, name: &str, pass: bool, detail: &str) {
    println!(
        "[{}] criterion {number:02}: {name} -- {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "criterion {number:02} ({name}) failed: {detail}");
}

fn random_typed_config(window: Window, seed: u64) -> TypedConfig {
    let mut rng = seeding::rng(seed, &[0xc0]);
    let mut cfg = TypedConfig::vacant(window);
    for x in window.iter() {
        cfg.set(x, rng.random_range(0u8..3));
    }
    cfg
}

// -------------------------------------------------------------------------
// 1. Duality round-trip: forward evolution equals the dual reconstruction
//    site by site, exactly, on 1000 instances (101 sites, lambda = 2,
//    R in {1, 2}, t <= 20).
// -------------------------------------------------------------------------
#[test]
fn acceptance_01_duality_round_trip() {
    let window = Window::new(-50, 50);
    let kernels = [Kernel::nearest_neighbour(), Kernel::uniform(2)];
    let mut checked_sites = 0u64;
    for instance in 0..1000u64 {
        let kernel = &kernels[(instance % 2) as usize];
        let t = 2.0 + 18.0 * ((instance % 7) as f64 / 6.0);
        let t = timegrid::snap(t);
        let h = HarrisConstruction::sample(
            kernel,
            2.0,
            window,
            t,
            seeding::derive(0xACC1, &[instance]),
        )
        .unwrap();
        let xi0 = random_typed_config(window, instance);
        let fwd = evolve_multitype(&h, &xi0, t).value;
        let rev = h.reverse(t);
        for x in window.iter() {
            let dual = ancestry::dual_state(&rev, &xi0, x, t).value;
            assert_eq!(
                fwd.get(x),
                dual,
                "instance {instance} site {x}: forward {} vs dual {dual}",
                fwd.get(x)
            );
            checked_sites += 1;
        }
    }
    verdict(
        1,
        "duality round-trip (exact)",
        true,
        &format!("1000 instances, {checked_sites} site comparisons, all equal"),
    );
}

// -------------------------------------------------------------------------
// 2. Ancestry ordering oracle: the incremental hierarchy equals exhaustive
//    path enumeration sorted by the path order, exactly, on 500 small
//    instances (<= 9 sites, <= 12 events).
// -------------------------------------------------------------------------
#[test]
fn acceptance_02_ancestry_ordering_oracle() {
    let window = Window::new(-4, 4);
    let kernel = Kernel::nearest_neighbour();
    let mut qualified = 0u64;
    let mut seed = 0u64;
    while qualified < 500 {
        seed += 1;
        assert!(seed < 100_000, "not enough small instances");
        let t = timegrid::snap(0.6);
        let h = HarrisConstruction::sample(&kernel, 1.5, window, t, seeding::derive(0xACC2, &[seed]))
            .unwrap();
        if h.event_count() > 12 {
            continue;
        }
        for x in window.iter() {
            let got = ancestry::trace_ancestry(&h, x, t).value;
            let want = oracle::trace_ancestry_by_enumeration(&h, x, t);
            assert_eq!(got, want, "seed {seed} x {x}");
        }
        qualified += 1;
    }
    verdict(
        2,
        "ancestry ordering oracle (exact)",
        true,
        &format!("500 instances x 9 sites, all orders equal (last seed {seed})"),
    );
}

// -------------------------------------------------------------------------
// 3. Reachability duality and reverse involution, exactly, on 1000
//    instances.
// -------------------------------------------------------------------------
#[test]
fn acceptance_03_reachability_duality_and_involution() {
    let window = Window::new(-10, 10);
    let kernel = Kernel::uniform(2);
    for instance in 0..1000u64 {
        let h = HarrisConstruction::sample(
            &kernel,
            1.5,
            window,
            4.0,
            seeding::derive(0xACC3, &[instance]),
        )
        .unwrap();
        // Involution on a generic grid.
        for k in 1..=3 {
            let t = timegrid::snap(h.horizon() * k as f64 / 3.3);
            assert!(
                h.reverse(t).reverse(t) == h.restrict(t),
                "instance {instance}: double reversal differs at t = {t}"
            );
        }
        // Path duality through reversal.
        let t = h.horizon();
        let rev = h.reverse(t);
        for x in [-4, 0, 3] {
            for y in [-2, 1, 4] {
                let fwd = h
                    .path_exists(SpaceTimePoint::new(x, 0.0), SpaceTimePoint::new(y, t))
                    .value;
                let bwd = rev
                    .path_exists(SpaceTimePoint::new(y, 0.0), SpaceTimePoint::new(x, t))
                    .value;
                assert_eq!(fwd, bwd, "instance {instance} pair ({x}, {y})");
            }
        }
    }
    verdict(
        3,
        "reachability duality and reverse involution (exact)",
        true,
        "1000 instances, 9 pairs and 3 reversal times each",
    );
}

// -------------------------------------------------------------------------
// 4. Monotone coupling: the two inclusions hold after every event on 1000
//    precondition-satisfying pairs, exactly.
// -------------------------------------------------------------------------
#[test]
fn acceptance_04_monotone_coupling() {
    let window = Window::new(-20, 20);
    let kernel = Kernel::nearest_neighbour();
    for instance in 0..1000u64 {
        let h = HarrisConstruction::sample(
            &kernel,
            4.0,
            window,
            8.0,
            seeding::derive(0xACC4, &[instance]),
        )
        .unwrap();
        let primed = random_typed_config(window, instance ^ 0x11);
        let mut doubleprimed = primed.clone();
        let mut rng = seeding::rng(0xACC4, &[instance, 1]);
        for x in window.iter() {
            match primed.get(x) {
                TYPE_ONE => {
                    if rng.random::<f64>() < 0.3 {
                        doubleprimed.set(x, if rng.random::<f64>() < 0.5 { VACANT } else { TYPE_TWO });
                    }
                }
                VACANT => {
                    if rng.random::<f64>() < 0.3 {
                        doubleprimed.set(x, TYPE_TWO);
                    }
                }
                _ => {}
            }
        }
        let ok = check_monotone_coupling(&h, &primed, &doubleprimed, &[8.0]).unwrap();
        assert!(ok, "instance {instance}: inclusion broke");
    }
    verdict(
        4,
        "monotone coupling inclusions (exact, every event time)",
        true,
        "1000 precondition-satisfying pairs on shared constructions",
    );
}

// -------------------------------------------------------------------------
// 5. One-type reduction and projection invariants, exactly, on 1000
//    instances.
// -------------------------------------------------------------------------
#[test]
fn acceptance_05_reduction_and_projection() {
    let window = Window::new(-20, 20);
    let kernel = Kernel::nearest_neighbour();
    for instance in 0..1000u64 {
        let h = HarrisConstruction::sample(
            &kernel,
            4.0,
            window,
            6.0,
            seeding::derive(0xACC5, &[instance]),
        )
        .unwrap();
        // Reduction: a single-type initial state evolves like the one-type
        // process.
        let mut rng = seeding::rng(0xACC5, &[instance, 7]);
        let sites: Vec<i64> = window.iter().filter(|_| rng.random::<f64>() < 0.3).collect();
        let mut only_ones = TypedConfig::vacant(window);
        for &s in &sites {
            only_ones.set(s, TYPE_ONE);
        }
        let multi = evolve_multitype(&h, &only_ones, 6.0).value;
        let one = evolve_one_type(&h, &OneTypeConfig::from_sites(window, &sites), 6.0).value;
        for x in window.iter() {
            assert_eq!(multi.get(x) == TYPE_ONE, one.get(x), "instance {instance}");
            assert_ne!(multi.get(x), TYPE_TWO);
        }
        // Projection: occupancy of the two-type process is the one-type
        // process of the occupied set.
        let xi0 = random_typed_config(window, instance ^ 0x77);
        let multi = evolve_multitype(&h, &xi0, 6.0).value;
        let projected = evolve_one_type(&h, &xi0.occupied(), 6.0).value;
        assert_eq!(multi.occupied(), projected, "instance {instance}");
    }
    verdict(
        5,
        "one-type reduction and projection (exact)",
        true,
        "1000 instances, per-realization equality",
    );
}

// -------------------------------------------------------------------------
// 6. Renewal structure: increment symmetry within 3 SE, independence
//    shuffle test at 5%, margin-sensitivity columns within 2 SE,
//    >= 10^4 increments.
// -------------------------------------------------------------------------
#[test]
fn acceptance_06_renewal_structure() {
    let margins = [15.0, 30.0, 60.0];
    let campaigns = experiments::renewal_campaign(
        &Kernel::nearest_neighbour(),
        4.0,
        130.0,
        &margins,
        700,
        0xACC6,
        3.0,
    )
    .unwrap();
    let main = &campaigns[1]; // margin 30
    let n = main.increments.len();
    let enough = n >= 10_000;
    let sym = main.mean_space.estimate.abs() <= 3.0 * main.mean_space.stderr;
    let shuffle = stats::shuffle_independence_test(&main.increments, 0xACC6);
    type Field = fn(&experiments::RenewalCampaign) -> stats::CellEstimate;
    let fields: [(Field, &str); 2] = [
        (|c| c.mean_abs_space, "abs_space"),
        (|c| c.mean_time, "time"),
    ];
    let mut margin_ok = true;
    let mut margin_detail = String::new();
    for pair in campaigns.windows(2) {
        for &(field, label) in &fields {
            let a = field(&pair[0]);
            let b = field(&pair[1]);
            let se = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
            let ok = (a.estimate - b.estimate).abs() <= 2.0 * se;
            margin_ok &= ok;
            margin_detail.push_str(&format!(
                "{label}({} vs {}): |{:.4}-{:.4}| vs 2x{:.4}; ",
                pair[0].margin, pair[1].margin, a.estimate, b.estimate, se
            ));
        }
    }
    let pass = enough && sym && shuffle.independent && margin_ok;
    verdict(
        6,
        "renewal increment structure",
        pass,
        &format!(
            "{n} increments; mean space {:.4} +- {:.4}; shuffle p = {:.3}; {margin_detail}",
            main.mean_space.estimate, main.mean_space.stderr, shuffle.p_value
        ),
    );
}

// -------------------------------------------------------------------------
// 7. Coalescence tail: normalized P(J > t) sqrt(t)/sep shows no increasing
//    Mann-Kendall trend (5%) over t in {4,16,64} for sep in {1,4,16},
//    >= 2x10^4 replicas per cell.
// 8. Transition-law distances strictly decreasing across |z| in {1,2,4,8}
//    beyond bootstrap 2 SE (from the same campaign).
// -------------------------------------------------------------------------
#[test]
fn acceptance_07_08_coalescence_and_tv() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::CoalescenceTail, 0xACC7);
    cfg.replicas = 20_000;
    cfg.sep_grid = Some(vec![1, 4, 16]);
    cfg.t_grid = Some(vec![4.0, 16.0, 64.0]);
    // Margin 15: criterion 6 certifies the 15/30/60 margin columns agree
    // within 2 SE, and certification cost grows with the margin squared.
    cfg.margin = 15.0;
    cfg.speed_allowance = Some(3.0);
    let report = experiments::run(&cfg).unwrap();
    let trend_checks: Vec<_> = report
        .checks
        .iter()
        .filter(|c| c.name.starts_with("normalized_tail_no_increasing_trend"))
        .collect();
    let pass7 = trend_checks.len() == 3 && trend_checks.iter().all(|c| c.pass);
    let enough = report
        .cells
        .iter()
        .filter(|c| c.cell.starts_with("sep="))
        .all(|c| c.n_valid + c.discarded_contaminated >= 20_000);
    verdict(
        7,
        "coalescence tail normalized trend",
        pass7 && enough,
        &trend_checks
            .iter()
            .map(|c| format!("{}: {}", c.name, c.detail))
            .collect::<Vec<_>>()
            .join(" | "),
    );
    let tv = report
        .checks
        .iter()
        .find(|c| c.name == "tv_strictly_decreasing_beyond_2se")
        .unwrap();
    let fit = report
        .checks
        .iter()
        .find(|c| c.name == "tv_fitted_decay_positive")
        .unwrap();
    verdict(
        8,
        "transition-law TV decay",
        tv.pass && fit.pass,
        &format!("{} | {}", tv.detail, fit.detail),
    );
}

// -------------------------------------------------------------------------
// 9. Density decay: fitted decay exponent positive with bootstrap CI
//    excluding 0 for N in {1, 3} over t in {5, 10, 20, 40}.
// -------------------------------------------------------------------------
#[test]
fn acceptance_09_density_decay() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::DensityDecay, 0xACC9);
    cfg.replicas = 800;
    cfg.n_grid = Some(vec![1, 3]);
    cfg.t_grid = Some(vec![5.0, 10.0, 20.0, 40.0]);
    cfg.core_half = Some(40);
    cfg.speed_allowance = Some(3.0);
    let report = experiments::run(&cfg).unwrap();
    let pass = report.checks.iter().all(|c| c.pass);
    verdict(
        9,
        "truncated ancestor density decay",
        pass,
        &report
            .checks
            .iter()
            .map(|c| format!("{}: {} ({})", c.name, c.pass, c.detail))
            .collect::<Vec<_>>()
            .join(" | "),
    );
}

// -------------------------------------------------------------------------
// 10. Interface tightness: exceedance of the t=25 95th percentile shows no
//     increasing trend over t in {25, 50, 100} beyond 2 SE, and the
//     inversion-count quantiles likewise; >= 2x10^3 valid replicas per t.
//     (Rate 4.0: the spec's nominal 2.0 presumed the per-neighbour
//     convention and fails the supercriticality gate; see the ledger.)
// -------------------------------------------------------------------------
#[test]
fn acceptance_10_interface_and_inversion_tightness() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::InterfaceTightness, 0xACCA);
    cfg.replicas = 2200;
    cfg.t_grid = Some(vec![25.0, 50.0, 100.0]);
    cfg.core_half = Some(40);
    cfg.speed_allowance = Some(6.0);
    let interface = experiments::run(&cfg).unwrap();
    let mut inv_cfg = cfg.clone();
    inv_cfg.kind = ExperimentKind::InversionTightness;
    inv_cfg.master_seed = 0xACCB;
    let inversions = experiments::run(&inv_cfg).unwrap();
    let pass = interface.overall_pass
        && inversions.overall_pass
        && interface.cells.iter().all(|c| c.n_valid >= 2000)
        && inversions
            .cells
            .iter()
            .all(|c| c.n_valid >= 2000);
    let detail = interface
        .checks
        .iter()
        .chain(inversions.checks.iter())
        .map(|c| format!("{}: {}", c.name, c.pass))
        .collect::<Vec<_>>()
        .join(" | ");
    verdict(
        10,
        "interface and inversion tightness",
        pass,
        &format!(
            "{detail}; valid per t: {:?} / {:?}",
            interface.cells.iter().map(|c| c.n_valid).collect::<Vec<_>>(),
            inversions.cells.iter().map(|c| c.n_valid).collect::<Vec<_>>()
        ),
    );
}

// -------------------------------------------------------------------------
// 11. Extinction dichotomy: extinct fraction nondecreasing with final cell
//     above 0.9 under the confinement conditions; survival fraction
//     increasing in K for the converse, paired separation beyond 2 SE.
// -------------------------------------------------------------------------
#[test]
fn acceptance_11_extinction_dichotomy() {
    let mut ext = ExperimentConfig::new(ExperimentKind::Extinction, 0xACCC);
    ext.replicas = 1500;
    ext.k = Some(2);
    ext.t_grid = Some(vec![10.0, 20.0, 40.0]);
    let ext_report = experiments::run(&ext).unwrap();

    let mut sur = ExperimentConfig::new(ExperimentKind::Survival, 0xACCD);
    sur.replicas = 1500;
    sur.k_grid = Some(vec![2, 8, 32]);
    sur.horizon = Some(30.0);
    let sur_report = experiments::run(&sur).unwrap();

    let pass = ext_report.overall_pass && sur_report.overall_pass;
    let detail = ext_report
        .checks
        .iter()
        .chain(sur_report.checks.iter())
        .map(|c| format!("{}: {} ({})", c.name, c.pass, c.detail))
        .collect::<Vec<_>>()
        .join(" | ");
    verdict(11, "extinction dichotomy", pass, &detail);
}

// -------------------------------------------------------------------------
// 12. Perturbed-walk suite: decomposition reconstruction within 1e-12 for
//     every stored z, coupling identity on every sampled path, Monte Carlo
//     tails within 3 SE of the operator oracle at N in {64, 256, 1024},
//     and no increasing trend of the normalized tail.
// -------------------------------------------------------------------------
#[test]
fn acceptance_12_perturbed_walk_suite() {
    let mut cfg = ExperimentConfig::new(ExperimentKind::RwalkTail, 0xACCE);
    cfg.replicas = 20_000;
    cfg.x = Some(5);
    cfg.n_grid = Some(vec![64, 256, 1024]);
    cfg.family = Some("drifted".into());
    let report = experiments::run(&cfg).unwrap();
    let pass = report.overall_pass;
    let detail = report
        .checks
        .iter()
        .map(|c| format!("{}: {}", c.name, c.pass))
        .collect::<Vec<_>>()
        .join(" | ");
    verdict(12, "perturbed random walk suite", pass, &detail);
}

// -------------------------------------------------------------------------
// 13. Reproducibility: identical configurations produce bit-identical
//     reports.
// -------------------------------------------------------------------------
#[test]
fn acceptance_13_reproducibility() {
    let mut spots = Vec::new();
    let mut ext = ExperimentConfig::new(ExperimentKind::Extinction, 0xACCF);
    ext.replicas = 150;
    ext.t_grid = Some(vec![4.0, 8.0]);
    ext.k = Some(1);
    ext.skip_supercritical_check = true;
    spots.push(ext);
    let mut rw = ExperimentConfig::new(ExperimentKind::RwalkTail, 0xACD0);
    rw.replicas = 2000;
    rw.n_grid = Some(vec![16, 64]);
    spots.push(rw);
    let mut coal = ExperimentConfig::new(ExperimentKind::CoalescenceTail, 0xACD1);
    coal.replicas = 150;
    coal.sep_grid = Some(vec![1]);
    coal.t_grid = Some(vec![2.0, 5.0]);
    coal.margin = 6.0;
    coal.speed_allowance = Some(3.0);
    coal.skip_supercritical_check = true;
    spots.push(coal);
    for cfg in &spots {
        let a = experiments::run(cfg).unwrap().to_json();
        let b = experiments::run(cfg).unwrap().to_json();
        assert_eq!(a, b, "{} report differs between reruns", cfg.kind.name());
    }
    verdict(
        13,
        "bit-identical reproducibility",
        true,
        "three kinds re-run with identical configs, byte-equal reports",
    );
}

// -------------------------------------------------------------------------
// Duality of the observables used by the tightness experiments: the primal
// inversion count equals the dual-side count, realization by realization
// (backing the primal production route).
// -------------------------------------------------------------------------
#[test]
fn acceptance_extra_primal_dual_inversion_identity() {
    let window = Window::new(-14, 14);
    let kernel = Kernel::uniform(2);
    for instance in 0..200u64 {
        let t = 5.0;
        let h = HarrisConstruction::sample(
            &kernel,
            2.0,
            window,
            t,
            seeding::derive(0xACE0, &[instance]),
        )
        .unwrap();
        let fwd = evolve_multitype(&h, &TypedConfig::heaviside(window), t).value;
        let primal = forward::total_inversions(&fwd);
        let rev = h.reverse(t);
        let (dual, _) = ancestry::count_dual_inversions(&rev, t, window).value;
        assert_eq!(primal, dual, "instance {instance}");
        // And the interface edges agree with the dual classification.
        let stats_fwd = forward::interface_stats(&fwd);
        let table = ancestry::first_ancestor_table(&rev, window, t);
        let r_dual = window
            .iter()
            .filter(|&x| matches!(table[window.index(x)].value, Some(eta) if eta <= 0))
            .max();
        let l_dual = window
            .iter()
            .filter(|&x| matches!(table[window.index(x)].value, Some(eta) if eta > 0))
            .min();
        assert_eq!(stats_fwd.r, r_dual, "instance {instance}");
        assert_eq!(stats_fwd.l, l_dual, "instance {instance}");
    }
    println!("[PASS] extra: primal/dual inversion and interface identity on 200 instances");
}
