//! The experiment runners: one per campaign kind, plus the dispatcher.
//!
//! Each runner draws its replicas in parallel (deterministically seeded by
//! replica index), classifies every replica as valid, contaminated or
//! censored, aggregates over valid replicas only, and evaluates the
//! statistical checks its kind is responsible for.
//!
//! Forward-process validity uses the collar cones of
//! [`crate::forward::SweepReport`]: a replica is discarded whenever the
//! arrow-reachability cone of either window collar comes within one kernel
//! range of the hull that the observable ever occupied.  Dual-process
//! validity uses the per-hierarchy contamination flags.

use rayon::prelude::*;

use crate::ancestry::{
    self, CoalescenceKind, CoalescenceOutcome, Hierarchy, JointScanner, RenewalScanner,
};
use crate::forward::{
    self, edge_of_ones, interface_stats, run_multitype, run_one_type, OneTypeConfig, SweepReport,
    TypedConfig, TYPE_ONE, TYPE_TWO,
};
use crate::harris::{HarrisConstruction, Window};
use crate::kernel::Kernel;
use crate::seeding;
use crate::stats::{
    self, mk_increasing_check, nondecreasing_within, nonincreasing_within,
    strictly_decreasing_beyond, CellEstimate, Histogram, Welford,
};
use crate::walk::{
    self, hitting_tail_mc, oracle_hitting, presets, sample_coupled_path, stopping_time_suite,
    Boundary, DecompositionCache, PerturbedFamily,
};

use super::config::{ExperimentConfig, ExperimentError, ExperimentKind};
use super::report::{CellRow, CheckRow, ExperimentReport};

/// Run the campaign described by `config`.
pub fn run(config: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    config.validate()?;
    let start = std::time::Instant::now();
    let mut report = match config.kind {
        ExperimentKind::Extinction => run_extinction(config),
        ExperimentKind::Survival => run_survival(config),
        ExperimentKind::InterfaceTightness => run_interface_tightness(config),
        ExperimentKind::InversionTightness => run_inversion_tightness(config),
        ExperimentKind::DensityDecay => run_density_decay(config),
        ExperimentKind::CoalescenceTail => run_coalescence_tail(config),
        ExperimentKind::EdgeSpeed => run_edge_speed(config),
        ExperimentKind::InterfaceEvent => run_interface_event(config),
        ExperimentKind::RwalkTail => run_rwalk_tail(config),
    }?;
    report.runtime_seconds = start.elapsed().as_secs_f64();
    Ok(report)
}

fn replica_seed(master: u64, replica: usize) -> u64 {
    seeding::derive(master, &[2, replica as u64])
}

fn par_replicas<T: Send>(
    replicas: usize,
    f: impl Fn(usize, u64) -> T + Sync,
) -> Vec<T> {
    (0..replicas)
        .into_par_iter()
        .map(|rep| f(rep, 0))
        .map(|t| t)
        .collect()
}

/// Collect per-replica optional values into a cell (None = discarded).
fn cell_from_samples(label: String, samples: &[Option<f64>], censored: u64) -> CellRow {
    let mut w = Welford::default();
    let mut contaminated = 0u64;
    for s in samples {
        match s {
            Some(v) => w.push(*v),
            None => contaminated += 1,
        }
    }
    CellRow::from_moments(label, &w, contaminated, censored)
}

fn estimate_of(cell: &CellRow) -> CellEstimate {
    CellEstimate {
        estimate: cell.estimate,
        stderr: cell.stderr,
    }
}

/// Forward-replica validity: the collar cones never came within one range
/// of the observable's hull.
fn zone_valid(report: &SweepReport, zone: Option<(i64, i64)>, range: i64) -> bool {
    match zone {
        None => true,
        Some((lo, hi)) => report.zone_clear(lo, hi, range),
    }
}

// ---------------------------------------------------------------------------
// Extinction
// ---------------------------------------------------------------------------

fn run_extinction(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let span = cfg.k.unwrap_or(2);
    let t_grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| vec![10.0, 20.0, 40.0]);
    let horizon = cfg.horizon.unwrap_or_else(|| {
        t_grid.iter().copied().fold(0.0, f64::max)
    });
    let window = cfg.resolve_window(&kernel, horizon, (-span, span))?;
    let r = kernel.range() as i64;
    let lambda = cfg.lambda;

    struct Out {
        extinct: Vec<bool>,
        valid: bool,
    }
    let outs: Vec<Out> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let mut init = TypedConfig::vacant(window);
        for x in window.iter() {
            init.set(x, if x.abs() <= span { TYPE_ONE } else { TYPE_TWO });
        }
        let run = run_multitype(&h, &init, &t_grid, horizon);
        let extinct = run
            .snapshots
            .iter()
            .map(|s| s.count(TYPE_ONE) == 0)
            .collect();
        Out {
            extinct,
            valid: zone_valid(&run.report, run.report.ones_env, r),
        }
    });

    let mut cells = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let samples: Vec<Option<f64>> = outs
            .iter()
            .map(|o| o.valid.then(|| o.extinct[i] as u8 as f64))
            .collect();
        cells.push(cell_from_samples(format!("t={t}"), &samples, 0));
    }
    let ests: Vec<CellEstimate> = cells.iter().map(estimate_of).collect();
    let final_cell = ests.last().unwrap();
    let checks = vec![
        CheckRow::new(
            "extinct_fraction_nondecreasing",
            nondecreasing_within(&ests, 2.0),
            format!(
                "fractions {:?}",
                ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
        CheckRow::new(
            "final_extinct_fraction_above_0.9",
            final_cell.estimate > 0.9,
            format!("final cell {:.4}", final_cell.estimate),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Survival
// ---------------------------------------------------------------------------

fn run_survival(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let k_grid = cfg.k_grid.clone().unwrap_or_else(|| vec![2, 8, 32]);
    let k_max = k_grid.iter().copied().max().unwrap_or(2);
    let horizon = cfg.horizon.unwrap_or(30.0);
    let window = cfg.resolve_window(&kernel, horizon, (0, k_max))?;
    let r = kernel.range() as i64;
    let lambda = cfg.lambda;

    struct Out {
        alive: Vec<Option<bool>>, // None = contaminated for that K
    }
    let k_grid_ref = &k_grid;
    let outs: Vec<Out> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let alive = k_grid_ref
            .iter()
            .map(|&k| {
                let mut init = TypedConfig::vacant(window);
                for x in window.iter() {
                    if x < 0 {
                        init.set(x, TYPE_TWO);
                    } else if x <= k {
                        init.set(x, TYPE_ONE);
                    }
                }
                let run = run_multitype(&h, &init, &[], horizon);
                zone_valid(&run.report, run.report.ones_env, r)
                    .then(|| run.final_config.count(TYPE_ONE) > 0)
            })
            .collect();
        Out { alive }
    });

    let mut cells = Vec::new();
    for (i, &k) in k_grid.iter().enumerate() {
        let samples: Vec<Option<f64>> = outs
            .iter()
            .map(|o| o.alive[i].map(|b| b as u8 as f64))
            .collect();
        cells.push(cell_from_samples(format!("k={k}"), &samples, 0));
    }
    let ests: Vec<CellEstimate> = cells.iter().map(estimate_of).collect();
    // Paired separation between the largest and smallest K on replicas valid
    // for both (the coupling shares every Harris construction).
    let mut diff = Welford::default();
    for o in &outs {
        if let (Some(lo), Some(hi)) = (o.alive[0], o.alive[k_grid.len() - 1]) {
            diff.push(hi as u8 as f64 - lo as u8 as f64);
        }
    }
    let separation = diff.mean;
    let sep_se = diff.se();
    let checks = vec![
        CheckRow::new(
            "survival_fraction_nondecreasing_in_k",
            nondecreasing_within(&ests, 2.0),
            format!(
                "fractions {:?}",
                ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
        CheckRow::new(
            "paired_separation_beyond_2se",
            separation > 2.0 * sep_se,
            format!("paired diff {separation:.4} +- {sep_se:.4}"),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Interface tightness
// ---------------------------------------------------------------------------

struct HeavisideOut {
    /// Per grid time: |rho| when defined, None when a type is extinct.
    abs_rho: Vec<Option<i64>>,
    inversions: Vec<u64>,
    valid: bool,
}

fn heaviside_replicas(
    cfg: &ExperimentConfig,
    kernel: &Kernel,
    window: Window,
    horizon: f64,
    t_grid: &[f64],
) -> Vec<HeavisideOut> {
    let r = kernel.range() as i64;
    let lambda = cfg.lambda;
    par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let init = TypedConfig::heaviside(window);
        let run = run_multitype(&h, &init, t_grid, horizon);
        // The interface zone spans from the leftmost site a 2 ever reached
        // to the rightmost site a 1 ever reached.
        let zone = match (run.report.twos_env, run.report.ones_env) {
            (Some((t_lo, _)), Some((_, o_hi))) => Some((t_lo.min(o_hi), o_hi.max(t_lo))),
            _ => None,
        };
        let valid = zone_valid(&run.report, zone, r);
        let mut abs_rho = Vec::with_capacity(t_grid.len());
        let mut inversions = Vec::with_capacity(t_grid.len());
        for snap in &run.snapshots {
            abs_rho.push(interface_stats(snap).rho.map(i64::abs));
            inversions.push(forward::total_inversions(snap));
        }
        HeavisideOut {
            abs_rho,
            inversions,
            valid,
        }
    })
}

fn run_interface_tightness(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    if kernel.range() < 2 {
        return Err(ExperimentError::ConfigInvalid(
            "interface tightness requires a kernel of range at least 2".into(),
        ));
    }
    cfg.ensure_supercritical(&kernel)?;
    let t_grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| vec![25.0, 50.0, 100.0]);
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| t_grid.iter().copied().fold(0.0, f64::max));
    let core = cfg.core_half.unwrap_or(40);
    let window = cfg.resolve_window(&kernel, horizon, (-core, core))?;
    let outs = heaviside_replicas(cfg, &kernel, window, horizon, &t_grid);

    // The threshold L is the empirical 95th percentile of |rho| in the
    // first grid cell, over valid replicas with a defined interface.
    let first_abs: Vec<f64> = outs
        .iter()
        .filter(|o| o.valid)
        .filter_map(|o| o.abs_rho[0].map(|v| v as f64))
        .collect();
    if first_abs.len() < 100 {
        return Err(ExperimentError::ConfigInvalid(format!(
            "only {} valid replicas in the first cell; raise replicas",
            first_abs.len()
        )));
    }
    let l_threshold = match &cfg.l_grid {
        Some(ls) if !ls.is_empty() => ls[0] as f64,
        _ => stats::quantile(&first_abs, 0.95),
    };

    let mut cells = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let mut w = Welford::default();
        let mut contaminated = 0u64;
        let mut undefined = 0u64;
        for o in &outs {
            if !o.valid {
                contaminated += 1;
                continue;
            }
            match o.abs_rho[i] {
                Some(v) => w.push((v as f64 > l_threshold) as u8 as f64),
                None => undefined += 1,
            }
        }
        // Replicas with an extinct type are excluded and accounted under
        // the censored column.
        let cell = CellRow::from_moments(format!("t={t}"), &w, contaminated, undefined)
            .with_extra("l_threshold", l_threshold);
        cells.push(cell);
    }
    let ests: Vec<CellEstimate> = cells.iter().map(estimate_of).collect();
    let mk = mk_increasing_check(&ests, cfg.master_seed ^ 0x1f);
    let checks = vec![
        CheckRow::new(
            "abs_rho_exceedance_no_increasing_trend",
            !mk.increasing_detected && nonincreasing_within(&ests, 2.0),
            format!(
                "S = {}, perm p = {:.3}, boot P(S<=0) = {:.3}, exceedance {:?}",
                mk.s_observed,
                mk.p_permutation,
                mk.p_nonpositive,
                ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
        CheckRow::new(
            "enough_valid_replicas",
            cells.iter().all(|c| c.n_valid >= 100),
            format!(
                "valid counts {:?}",
                cells.iter().map(|c| c.n_valid).collect::<Vec<_>>()
            ),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Inversion tightness
// ---------------------------------------------------------------------------

fn run_inversion_tightness(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    if kernel.range() < 2 {
        return Err(ExperimentError::ConfigInvalid(
            "inversion tightness requires a kernel of range at least 2".into(),
        ));
    }
    cfg.ensure_supercritical(&kernel)?;
    let t_grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| vec![25.0, 50.0, 100.0]);
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| t_grid.iter().copied().fold(0.0, f64::max));
    let core = cfg.core_half.unwrap_or(40);
    let window = cfg.resolve_window(&kernel, horizon, (-core, core))?;
    let outs = heaviside_replicas(cfg, &kernel, window, horizon, &t_grid);

    let mut cells = Vec::new();
    let mut mean_ests = Vec::new();
    let mut q95_ests = Vec::new();
    for (i, &t) in t_grid.iter().enumerate() {
        let values: Vec<f64> = outs
            .iter()
            .filter(|o| o.valid)
            .map(|o| o.inversions[i] as f64)
            .collect();
        let contaminated = outs.iter().filter(|o| !o.valid).count() as u64;
        let mut w = Welford::default();
        for &v in &values {
            w.push(v);
        }
        let q50 = stats::quantile_with_bootstrap_se(&values, 0.5, cfg.master_seed ^ i as u64);
        let q95 =
            stats::quantile_with_bootstrap_se(&values, 0.95, cfg.master_seed ^ (0x40 + i as u64));
        mean_ests.push(CellEstimate {
            estimate: w.mean,
            stderr: w.se(),
        });
        q95_ests.push(q95);
        cells.push(
            CellRow::from_moments(format!("t={t}"), &w, contaminated, 0)
                .with_extra("q50", q50.estimate)
                .with_extra("q50_se", q50.stderr)
                .with_extra("q95", q95.estimate)
                .with_extra("q95_se", q95.stderr),
        );
    }
    let mk_mean = mk_increasing_check(&mean_ests, cfg.master_seed ^ 0x2e);
    let mk_q95 = mk_increasing_check(&q95_ests, cfg.master_seed ^ 0x2f);
    let checks = vec![
        CheckRow::new(
            "mean_inversions_no_increasing_trend",
            !mk_mean.increasing_detected && nonincreasing_within(&mean_ests, 2.0),
            format!(
                "means {:?}",
                mean_ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
        CheckRow::new(
            "q95_inversions_no_increasing_trend",
            !mk_q95.increasing_detected && nonincreasing_within(&q95_ests, 2.0),
            format!(
                "q95 {:?}",
                q95_ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Density decay
// ---------------------------------------------------------------------------

fn run_density_decay(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let n_grid: Vec<usize> = cfg
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![1, 3])
        .into_iter()
        .map(|n| n as usize)
        .collect();
    let t_grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| vec![5.0, 10.0, 20.0, 40.0]);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let horizon = cfg.horizon.unwrap_or(t_max);
    let core = cfg.core_half.unwrap_or(40);
    // The hierarchies of every swept site need their own allowance before
    // the collar, so the window is sized around the sweep range, not the
    // core.
    let reach = (cfg.kappa(&kernel) * t_max).ceil() as i64;
    let window = cfg.resolve_window(&kernel, horizon, (-core - reach, core + reach))?;
    let sweep_lo = -core - reach;
    let sweep_hi = core + reach;
    let n_max = n_grid.iter().copied().max().unwrap_or(1);
    let lambda = cfg.lambda;

    struct Out {
        /// density[(n_idx, t_idx)] of the truncated ancestor census over the
        /// core, None when the replica is contaminated.
        density: Option<Vec<Vec<f64>>>,
    }
    let n_grid_ref = &n_grid;
    let t_grid_ref = &t_grid;
    let outs: Vec<Out> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        // Entry monitors: can anything outside the swept range influence the
        // core by t_max?  One cluster per flank, grown by arrows via the
        // one-type dynamics with no deaths needed (deaths only shrink).
        let mut contaminated = false;
        for (flank_lo, flank_hi, from_left) in [
            (window.lo, sweep_lo - 1, true),
            (sweep_hi + 1, window.hi, false),
        ] {
            if flank_lo > flank_hi {
                continue;
            }
            let init = OneTypeConfig::from_range(window, flank_lo, flank_hi);
            let run = run_one_type(&h, &init, &[], t_max);
            if let Some((lo, hi)) = run.report.ones_env {
                if (from_left && hi >= -core) || (!from_left && lo <= core) {
                    contaminated = true;
                }
            }
        }
        if contaminated {
            return Out { density: None };
        }
        let core_len = (2 * core + 1) as usize;
        let mut census = vec![vec![false; core_len]; n_grid_ref.len() * t_grid_ref.len()];
        for x in sweep_lo..=sweep_hi {
            let mut hier = Hierarchy::new(&h, x);
            for (ti, &t) in t_grid_ref.iter().enumerate() {
                hier.step_to(t);
                if hier.contaminated() {
                    return Out { density: None };
                }
                for (rank, site) in hier.candidates().into_iter().enumerate() {
                    if rank >= n_max {
                        break;
                    }
                    if site.abs() <= core {
                        let idx = (site + core) as usize;
                        for (ni, &n) in n_grid_ref.iter().enumerate() {
                            if rank < n {
                                census[ni * t_grid_ref.len() + ti][idx] = true;
                            }
                        }
                    }
                }
            }
        }
        let density = n_grid_ref
            .iter()
            .enumerate()
            .map(|(ni, _)| {
                t_grid_ref
                    .iter()
                    .enumerate()
                    .map(|(ti, _)| {
                        let marked = census[ni * t_grid_ref.len() + ti]
                            .iter()
                            .filter(|&&b| b)
                            .count();
                        marked as f64 / core_len as f64
                    })
                    .collect()
            })
            .collect();
        Out {
            density: Some(density),
        }
    });

    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for (ni, &n) in n_grid.iter().enumerate() {
        let mut ests = Vec::new();
        for (ti, &t) in t_grid.iter().enumerate() {
            let samples: Vec<Option<f64>> = outs
                .iter()
                .map(|o| o.density.as_ref().map(|d| d[ni][ti]))
                .collect();
            let cell = cell_from_samples(format!("n={n},t={t}"), &samples, 0);
            ests.push(estimate_of(&cell));
            cells.push(cell);
        }
        let (gamma, (lo, hi)) =
            stats::decay_exponent_ci(&t_grid, &ests, cfg.master_seed ^ (0x50 + ni as u64));
        checks.push(CheckRow::new(
            &format!("density_nonincreasing_n{n}"),
            nonincreasing_within(&ests, 2.0),
            format!(
                "densities {:?}",
                ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ));
        checks.push(CheckRow::new(
            &format!("decay_exponent_positive_n{n}"),
            lo > 0.0,
            format!("gamma = {gamma:.3}, 95% CI [{lo:.3}, {hi:.3}]"),
        ));
        let last = cells.len() - 1;
        cells[last].extra.insert("gamma_hat".into(), gamma);
        cells[last].extra.insert("gamma_ci_lo".into(), lo);
        cells[last].extra.insert("gamma_ci_hi".into(), hi);
    }
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Coalescence tail and transition laws
// ---------------------------------------------------------------------------

fn run_coalescence_tail(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let sep_grid = cfg.sep_grid.clone().unwrap_or_else(|| vec![1, 4, 16]);
    let t_grid = cfg.t_grid.clone().unwrap_or_else(|| vec![4.0, 16.0, 64.0]);
    let t_max = t_grid.iter().copied().fold(0.0, f64::max);
    let margin = cfg.margin;
    let horizon = cfg.horizon.unwrap_or(t_max + margin + 1.0);
    let sep_max = sep_grid.iter().copied().max().unwrap_or(1);
    let window = cfg.resolve_window(&kernel, horizon, (-sep_max, 2 * sep_max))?;
    let lambda = cfg.lambda;
    let tv_z_grid: Vec<i64> = vec![1, 2, 4, 8];
    let pool_min = 16i64;

    /// One scanned pair: the coalescence classification plus the difference
    /// transitions harvested along the way.
    struct PairScan {
        outcome: CoalescenceOutcome,
        transitions: Vec<(i64, i64)>,
        contaminated: bool,
    }

    /// Single pass per pair: every certified joint renewal both feeds the
    /// transition histograms and advances the coalescence classification;
    /// once either ancestry dies the survivor's own renewal sequence is
    /// scanned for the first renewal after the death.
    fn scan_pair(h: &HarrisConstruction, sep: i64, margin: f64) -> PairScan {
        let mut scanner = JointScanner::new(h, 0, sep, margin);
        let mut transitions = Vec::new();
        let mut prev_diff = sep;
        let mut outcome: Option<CoalescenceOutcome> = None;
        while let Some(r) = scanner.next_renewal() {
            if r.censored {
                break;
            }
            transitions.push((prev_diff, r.difference - prev_diff));
            prev_diff = r.difference;
            if r.difference == 0 {
                outcome = Some(CoalescenceOutcome {
                    time: r.time,
                    kind: CoalescenceKind::BothSurvive,
                });
                break;
            }
        }
        let mut contaminated = scanner.contaminated();
        let outcome = outcome.unwrap_or_else(|| {
            match scanner.finish() {
                (Some(_), Some(_)) => CoalescenceOutcome {
                    time: 0.0,
                    kind: CoalescenceKind::BothDied,
                },
                (dx, dy) if dx.is_some() != dy.is_some() => {
                    let (survivor, died_at) = if dx.is_none() {
                        (0, dy.unwrap())
                    } else {
                        (sep, dx.unwrap())
                    };
                    let mut solo = RenewalScanner::new(h, survivor, margin);
                    let mut out = CoalescenceOutcome {
                        time: h.horizon(),
                        kind: CoalescenceKind::Censored,
                    };
                    while let Some(r) = solo.next_renewal() {
                        if r.time > died_at {
                            out = CoalescenceOutcome {
                                time: r.time,
                                kind: if r.censored {
                                    CoalescenceKind::Censored
                                } else {
                                    CoalescenceKind::OneDied
                                },
                            };
                            break;
                        }
                    }
                    contaminated |= solo.contaminated();
                    out
                }
                _ => CoalescenceOutcome {
                    time: h.horizon(),
                    kind: CoalescenceKind::Censored,
                },
            }
        });
        contaminated |= scanner.contaminated();
        PairScan {
            outcome,
            transitions,
            contaminated,
        }
    }

    struct Out {
        /// Per separation: (J exceeded t?, censored), None if contaminated.
        per_sep: Vec<Option<(Vec<bool>, bool)>>,
        by_z: Vec<Histogram>,
        pool: Histogram,
    }
    let sep_ref = &sep_grid;
    let t_ref = &t_grid;
    let tv_ref = &tv_z_grid;
    let outs: Vec<Out> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let mut by_z: Vec<Histogram> = vec![Histogram::default(); tv_ref.len()];
        let mut pool = Histogram::default();
        let per_sep = sep_ref
            .iter()
            .map(|&sep| {
                let scan = scan_pair(&h, sep, margin);
                if scan.contaminated {
                    return None;
                }
                // Harvest the difference-chain transitions, folding the
                // reflection symmetry z -> -z onto positive sources.
                for &(z, w) in &scan.transitions {
                    let (z, w) = if z < 0 { (-z, -w) } else { (z, w) };
                    if let Some(zi) = tv_ref.iter().position(|&g| g == z) {
                        by_z[zi].push(w);
                    }
                    if z >= pool_min {
                        pool.push(w);
                    }
                }
                let censored = scan.outcome.kind == CoalescenceKind::Censored;
                let exceeded = t_ref
                    .iter()
                    .map(|&t| censored || scan.outcome.time > t)
                    .collect();
                Some((exceeded, censored))
            })
            .collect();
        Out {
            per_sep,
            by_z,
            pool,
        }
    });

    let mut cells = Vec::new();
    let mut checks = Vec::new();
    for (si, &sep) in sep_grid.iter().enumerate() {
        let mut normalized = Vec::new();
        for (ti, &t) in t_grid.iter().enumerate() {
            let mut w = Welford::default();
            let mut contaminated = 0u64;
            let mut censored_ct = 0u64;
            for o in &outs {
                match &o.per_sep[si] {
                    None => contaminated += 1,
                    Some((exceeded, censored)) => {
                        w.push(exceeded[ti] as u8 as f64);
                        if *censored {
                            censored_ct += 1;
                        }
                    }
                }
            }
            let norm = w.mean * t.sqrt() / sep as f64;
            let norm_se = w.se() * t.sqrt() / sep as f64;
            normalized.push(CellEstimate {
                estimate: norm,
                stderr: norm_se,
            });
            cells.push(
                CellRow::from_moments(format!("sep={sep},t={t}"), &w, contaminated, censored_ct)
                    .with_extra("normalized", norm)
                    .with_extra("normalized_se", norm_se),
            );
        }
        let mk = mk_increasing_check(&normalized, cfg.master_seed ^ (0x60 + si as u64));
        checks.push(CheckRow::new(
            &format!("normalized_tail_no_increasing_trend_sep{sep}"),
            !mk.increasing_detected,
            format!(
                "normalized {:?}, S = {}, perm p = {:.3}, boot P(S<=0) = {:.3}",
                normalized.iter().map(|c| c.estimate).collect::<Vec<_>>(),
                mk.s_observed,
                mk.p_permutation,
                mk.p_nonpositive
            ),
        ));
    }

    // Empirical transition laws of the difference chain at joint renewals,
    // pooled from the scans above.
    let mut hists: Vec<Histogram> = vec![Histogram::default(); tv_z_grid.len()];
    let mut pool = Histogram::default();
    for o in &outs {
        for (i, h) in o.by_z.iter().enumerate() {
            hists[i].merge(h);
        }
        pool.merge(&o.pool);
    }
    let tv_cells = stats::tv_with_bootstrap_se(&hists, &pool, cfg.master_seed ^ 0x71);
    for ((z, h), est) in tv_z_grid.iter().zip(&hists).zip(&tv_cells) {
        cells.push(CellRow {
            cell: format!("tv_z={z}"),
            estimate: est.estimate,
            stderr: est.stderr,
            n_valid: h.total,
            discarded_contaminated: 0,
            censored: 0,
            m2: 0.0,
            pass: None,
            extra: [("pool_n".to_string(), pool.total as f64)]
                .into_iter()
                .collect(),
        });
    }
    // Fitted exponential-decay constants for the transition-law distances.
    let zs: Vec<f64> = tv_z_grid.iter().map(|&z| z as f64).collect();
    let log_tv: Vec<CellEstimate> = tv_cells
        .iter()
        .map(|c| CellEstimate {
            estimate: c.estimate.max(1e-6).ln(),
            stderr: c.stderr / c.estimate.max(1e-6),
        })
        .collect();
    let slope = stats::slope_with_se(&zs, &log_tv, cfg.master_seed ^ 0x72);
    let g_hat = -slope.estimate;
    checks.push(CheckRow::new(
        "tv_strictly_decreasing_beyond_2se",
        strictly_decreasing_beyond(&tv_cells, 2.0),
        format!(
            "tv {:?}, counts {:?}",
            tv_cells.iter().map(|c| c.estimate).collect::<Vec<_>>(),
            hists.iter().map(|h| h.total).collect::<Vec<_>>()
        ),
    ));
    checks.push(CheckRow::new(
        "tv_fitted_decay_positive",
        g_hat > 2.0 * slope.stderr,
        format!("g_hat = {g_hat:.3} +- {:.3}", slope.stderr),
    ));
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Edge speed
// ---------------------------------------------------------------------------

fn run_edge_speed(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let t_grid = cfg
        .t_grid
        .clone()
        .unwrap_or_else(|| (1..=20).map(|i| i as f64).collect());
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| t_grid.iter().copied().fold(0.0, f64::max));
    let beta = cfg.beta.unwrap_or(0.25);
    let k_grid = cfg.k_grid.clone().unwrap_or_else(|| vec![0, 2, 6]);
    let core = cfg.core_half.unwrap_or(40);
    let window = cfg.resolve_window(&kernel, horizon, (-core, core))?;
    let r = kernel.range() as i64;
    let lambda = cfg.lambda;

    struct Out {
        violated: Option<Vec<bool>>,
        one_type_edge: Vec<Option<i64>>,
    }
    let k_ref = &k_grid;
    let t_ref = &t_grid;
    let outs: Vec<Out> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let tr = edge_of_ones(&h, t_ref);
        let zone = match (tr.report.twos_env, tr.report.ones_env) {
            (Some((t_lo, _)), Some((_, o_hi))) => Some((t_lo.min(o_hi), o_hi.max(t_lo))),
            _ => None,
        };
        let violated = zone_valid(&tr.report, zone, r).then(|| {
            k_ref
                .iter()
                .map(|&k| {
                    tr.points.iter().any(|&(t, edge)| {
                        edge.map_or(false, |e| e as f64 > k as f64 + beta * t)
                    })
                })
                .collect()
        });
        // Unobstructed one-type edge from the occupied half-line.
        let init = OneTypeConfig::from_range(window, window.lo, 0);
        let run = run_one_type(&h, &init, t_ref, horizon);
        let one_type_edge = run
            .snapshots
            .iter()
            .map(|s| {
                if zone_valid(&run.report, run.report.ones_env.map(|e| (e.1, e.1)), r) {
                    s.sites().max()
                } else {
                    None
                }
            })
            .collect();
        Out {
            violated,
            one_type_edge,
        }
    });

    let mut cells = Vec::new();
    for (i, &k) in k_grid.iter().enumerate() {
        let samples: Vec<Option<f64>> = outs
            .iter()
            .map(|o| o.violated.as_ref().map(|v| v[i] as u8 as f64))
            .collect();
        cells.push(cell_from_samples(format!("k={k}"), &samples, 0));
    }
    let ests: Vec<CellEstimate> = cells.iter().map(estimate_of).collect();

    // Edge-speed estimate: slope of the mean one-type edge over time, with
    // a stability comparison between the first half of the grid and all of
    // it.
    let mut edge_cells = Vec::new();
    for (i, _) in t_grid.iter().enumerate() {
        let mut w = Welford::default();
        for o in &outs {
            if let Some(e) = o.one_type_edge[i] {
                w.push(e as f64);
            }
        }
        edge_cells.push(CellEstimate {
            estimate: w.mean,
            stderr: w.se(),
        });
    }
    let half = t_grid.len() / 2;
    let alpha_half = stats::slope_with_se(&t_grid[..half], &edge_cells[..half], cfg.master_seed ^ 3);
    let alpha_full = stats::slope_with_se(&t_grid, &edge_cells, cfg.master_seed ^ 4);
    for (i, &t) in t_grid.iter().enumerate() {
        cells.push(
            CellRow {
                cell: format!("edge_t={t}"),
                estimate: edge_cells[i].estimate,
                stderr: edge_cells[i].stderr,
                n_valid: outs.len() as u64,
                discarded_contaminated: 0,
                censored: 0,
                m2: 0.0,
                pass: None,
                extra: Default::default(),
            },
        );
    }
    let stability_se = (alpha_half.stderr.powi(2) + alpha_full.stderr.powi(2)).sqrt();
    let checks = vec![
        CheckRow::new(
            "violation_probability_nonincreasing_in_k",
            nonincreasing_within(&ests, 2.0),
            format!(
                "violations {:?}",
                ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
            ),
        ),
        CheckRow::new(
            "edge_speed_positive",
            alpha_full.estimate > 2.0 * alpha_full.stderr,
            format!(
                "alpha = {:.3} +- {:.3}",
                alpha_full.estimate, alpha_full.stderr
            ),
        ),
        CheckRow::new(
            "edge_speed_stable_across_horizons",
            (alpha_half.estimate - alpha_full.estimate).abs() <= 2.0 * stability_se,
            format!(
                "half {:.3} vs full {:.3} (+- {:.3})",
                alpha_half.estimate, alpha_full.estimate, stability_se
            ),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Interface event
// ---------------------------------------------------------------------------

fn run_interface_event(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let kernel = cfg.build_kernel()?;
    cfg.ensure_supercritical(&kernel)?;
    let s_grid = cfg.s_grid.clone().unwrap_or_else(|| vec![5.0, 10.0, 20.0]);
    let dt = cfg.dt.unwrap_or(20.0);
    let horizon = cfg
        .horizon
        .unwrap_or_else(|| s_grid.iter().copied().fold(0.0, f64::max) + dt);
    let core = cfg.core_half.unwrap_or(25);
    let window = cfg.resolve_window(&kernel, horizon, (-core, core))?;
    let sites: Vec<i64> = (-core..=core).collect();
    let lambda = cfg.lambda;

    let s_ref = &s_grid;
    let sites_ref = &sites;
    let outs: Vec<Vec<Option<bool>>> = par_replicas(cfg.replicas, |rep, _| {
        let seed = replica_seed(cfg.master_seed, rep);
        let h = HarrisConstruction::sample(&kernel, lambda, window, horizon, seed)
            .expect("sampling");
        s_ref
            .iter()
            .map(|&s| {
                let out = ancestry::check_interface_event(&h, s, s + dt, sites_ref);
                (!out.boundary_contaminated).then_some(out.value)
            })
            .collect()
    });

    let mut cells = Vec::new();
    for (i, &s) in s_grid.iter().enumerate() {
        let samples: Vec<Option<f64>> = outs
            .iter()
            .map(|o| o[i].map(|b| b as u8 as f64))
            .collect();
        cells.push(cell_from_samples(format!("s={s},t={}", s + dt), &samples, 0));
    }
    let ests: Vec<CellEstimate> = cells.iter().map(estimate_of).collect();
    let checks = vec![CheckRow::new(
        "interface_event_nondecreasing_in_s",
        nondecreasing_within(&ests, 2.0),
        format!(
            "probabilities {:?}",
            ests.iter().map(|c| c.estimate).collect::<Vec<_>>()
        ),
    )];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Perturbed-walk tails
// ---------------------------------------------------------------------------

fn load_family(cfg: &ExperimentConfig) -> Result<PerturbedFamily, ExperimentError> {
    match cfg.family.as_deref() {
        None => Ok(presets::drifted()),
        Some(name) => {
            if let Some(f) = presets::by_name(name) {
                return Ok(f);
            }
            let text = std::fs::read_to_string(name).map_err(|e| {
                ExperimentError::ConfigInvalid(format!("family {name}: {e}"))
            })?;
            Ok(PerturbedFamily::from_json(&text)?)
        }
    }
}

fn run_rwalk_tail(cfg: &ExperimentConfig) -> Result<ExperimentReport, ExperimentError> {
    let family = load_family(cfg)?;
    let report = walk::validate_family(&family);
    let x0 = cfg.x.unwrap_or(5);
    let n_grid: Vec<usize> = cfg
        .n_grid
        .clone()
        .unwrap_or_else(|| vec![64, 256, 1024])
        .into_iter()
        .map(|n| n as usize)
        .collect();
    let cache = DecompositionCache::build(&family)?;

    // Reconstruction identities over the stored range.
    let mut worst_recon = 0.0f64;
    for z in -family.z_cap..=family.z_cap {
        if z == 0 {
            continue;
        }
        let d = walk::decompose(&family, z)?;
        worst_recon = worst_recon.max(d.reconstruction_error(&family));
    }

    // Coupled-path identity on every sampled path.
    let coupling_paths = 2000;
    let mut identity_ok = true;
    for rep in 0..coupling_paths {
        let mut rng = seeding::rng(cfg.master_seed, &[4, rep as u64]);
        let path = sample_coupled_path(&family, &cache, x0, 64, &mut rng);
        if !path.identity_holds() {
            identity_ok = false;
            break;
        }
    }

    let mc = hitting_tail_mc(&family, &cache, x0, &n_grid, cfg.replicas, cfg.master_seed);
    let w_cap = 320;
    let oracle = oracle_hitting(&family, w_cap, x0, &n_grid, Boundary::Absorbing, 1e-6)?;
    let mut cells = Vec::new();
    let mut normalized = Vec::new();
    let mut oracle_ok = true;
    for (m, e) in mc.iter().zip(&oracle.cells) {
        let within = (m.estimate - e.estimate).abs() <= 3.0 * m.stderr + 1e-9;
        oracle_ok &= within;
        let norm = m.estimate * (m.n as f64).sqrt() / x0.abs() as f64;
        let norm_se = m.stderr * (m.n as f64).sqrt() / x0.abs() as f64;
        normalized.push(CellEstimate {
            estimate: norm,
            stderr: norm_se,
        });
        cells.push(CellRow {
            cell: format!("n={}", m.n),
            estimate: m.estimate,
            stderr: m.stderr,
            n_valid: cfg.replicas as u64,
            discarded_contaminated: 0,
            censored: 0,
            m2: 0.0,
            pass: Some(within),
            extra: [
                ("oracle".to_string(), e.estimate),
                ("oracle_leak".to_string(), oracle.leak),
                ("normalized".to_string(), norm),
                ("normalized_se".to_string(), norm_se),
            ]
            .into_iter()
            .collect(),
        });
    }
    let mk = mk_increasing_check(&normalized, cfg.master_seed ^ 0x80);

    // Stopping-time suite summary rows.
    let suite = stopping_time_suite(
        &family,
        &cache,
        x0,
        &[0, 4, 16, 64],
        4096,
        cfg.replicas,
        cfg.master_seed ^ 0x81,
    );
    for (label, tails) in [
        ("T", &suite.t_tail),
        ("T_prime", &suite.t_prime_tail),
        ("H_I", &suite.h_interval_tail),
        ("tau_1", &suite.tau1_tail),
        ("lambda_1", &suite.lambda1_tail),
    ] {
        for (n, &v) in suite.n_grid.iter().zip(tails) {
            cells.push(CellRow {
                cell: format!("stop:{label}>n={n}"),
                estimate: v,
                stderr: (v * (1.0 - v) / suite.replicas as f64).sqrt(),
                n_valid: suite.replicas as u64,
                discarded_contaminated: 0,
                censored: 0,
                m2: 0.0,
                pass: None,
                extra: Default::default(),
            });
        }
    }
    let mut cell = CellRow {
        cell: "stop:expectations".into(),
        estimate: suite.exp_abs_x_tau1_before_hi,
        stderr: 0.0,
        n_valid: suite.replicas as u64,
        discarded_contaminated: 0,
        censored: 0,
        m2: 0.0,
        pass: None,
        extra: Default::default(),
    };
    cell.extra
        .insert("exp_abs_x_hneg_before_h0".into(), suite.exp_abs_x_hneg_before_h0);
    cell.extra.insert("delta_floor".into(), suite.delta_floor);
    cells.push(cell);

    let checks = vec![
        CheckRow::new(
            "family_assumptions_pass",
            report.all_pass(),
            format!("{report:?}"),
        ),
        CheckRow::new(
            "decomposition_reconstruction_1e-12",
            worst_recon < 1e-12,
            format!("worst reconstruction error {worst_recon:.3e}"),
        ),
        CheckRow::new(
            "coupling_identity_every_path",
            identity_ok,
            format!("{coupling_paths} paths"),
        ),
        CheckRow::new(
            "mc_matches_oracle_3se",
            oracle_ok,
            format!("leak {:.3e}", oracle.leak),
        ),
        CheckRow::new(
            "normalized_tail_no_increasing_trend",
            !mk.increasing_detected,
            format!(
                "normalized {:?}, S = {}, perm p = {:.3}, boot P(S<=0) = {:.3}",
                normalized.iter().map(|c| c.estimate).collect::<Vec<_>>(),
                mk.s_observed,
                mk.p_permutation,
                mk.p_nonpositive
            ),
        ),
    ];
    Ok(ExperimentReport::new(cfg.kind, cfg.clone(), cells, checks))
}

// ---------------------------------------------------------------------------
// Renewal statistics (used by the acceptance suite and the CLI `renewals`
// subcommand rather than a dedicated kind).
// ---------------------------------------------------------------------------

/// Pooled renewal-increment statistics per censoring margin.
#[derive(Debug, Clone)]
pub struct RenewalCampaign {
    pub margin: f64,
    pub increments: Vec<(f64, f64)>,
    pub mean_space: CellEstimate,
    pub mean_abs_space: CellEstimate,
    pub mean_time: CellEstimate,
    pub contaminated_replicas: u64,
}

/// Collect renewal increments of the ancestry of 0 over many replicas for
/// each margin, reusing one hierarchy trace per replica.
pub fn renewal_campaign(
    kernel: &Kernel,
    lambda: f64,
    horizon: f64,
    margins: &[f64],
    replicas: usize,
    master_seed: u64,
    speed_allowance: f64,
) -> Result<Vec<RenewalCampaign>, ExperimentError> {
    let reach = (speed_allowance * horizon).ceil() as i64 + kernel.range() as i64;
    let window = Window::new(-reach, reach);
    // All margin columns collect increments on the same time window
    // [1, horizon - max margin]; otherwise larger margins would censor the
    // longest increments preferentially and bias the comparison.
    let t_cut = horizon - margins.iter().copied().fold(0.0, f64::max);
    struct Out {
        per_margin: Vec<Option<Vec<(f64, f64)>>>,
    }
    let outs: Vec<Out> = par_replicas(replicas, |rep, _| {
        let seed = seeding::derive(master_seed, &[5, rep as u64]);
        let h = HarrisConstruction::sample(kernel, lambda, window, horizon, seed)
            .expect("sampling");
        let per_margin = margins
            .iter()
            .map(|&margin| {
                let mut scanner = RenewalScanner::new(&h, 0, margin);
                let mut incs = Vec::new();
                let mut prev_in_range = true;
                while let Some(r) = scanner.next_renewal() {
                    if r.time > t_cut {
                        break;
                    }
                    if !r.censored && prev_in_range {
                        incs.push((r.increment_space as f64, r.increment_time));
                    }
                    prev_in_range = !r.censored;
                }
                if scanner.contaminated() {
                    None
                } else {
                    Some(incs)
                }
            })
            .collect();
        Out { per_margin }
    });
    Ok(margins
        .iter()
        .enumerate()
        .map(|(mi, &margin)| {
            let mut increments = Vec::new();
            let mut contaminated = 0u64;
            for o in &outs {
                match &o.per_margin[mi] {
                    Some(incs) => increments.extend_from_slice(incs),
                    None => contaminated += 1,
                }
            }
            let (ms, se_s) = stats::mean_se(
                &increments.iter().map(|&(s, _)| s).collect::<Vec<_>>(),
            );
            let (ma, se_a) = stats::mean_se(
                &increments.iter().map(|&(s, _)| s.abs()).collect::<Vec<_>>(),
            );
            let (mt, se_t) = stats::mean_se(
                &increments.iter().map(|&(_, t)| t).collect::<Vec<_>>(),
            );
            RenewalCampaign {
                margin,
                increments,
                mean_space: CellEstimate {
                    estimate: ms,
                    stderr: se_s,
                },
                mean_abs_space: CellEstimate {
                    estimate: ma,
                    stderr: se_a,
                },
                mean_time: CellEstimate {
                    estimate: mt,
                    stderr: se_t,
                },
                contaminated_replicas: contaminated,
            }
        })
        .collect())
}

/// A joint scan helper for tests: difference sequences at joint renewals.
pub fn joint_difference_sequence(
    h: &HarrisConstruction,
    x: i64,
    y: i64,
    margin: f64,
) -> Option<Vec<i64>> {
    let mut scanner = JointScanner::new(h, x, y, margin);
    let mut out = Vec::new();
    while let Some(r) = scanner.next_renewal() {
        if !r.censored {
            out.push(r.difference);
        }
    }
    (!scanner.contaminated()).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(kind: ExperimentKind, seed: u64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::new(kind, seed);
        cfg.replicas = 120;
        cfg.skip_supercritical_check = true;
        cfg
    }

    #[test]
    fn extinction_smoke_and_reproducible() {
        let mut cfg = quick(ExperimentKind::Extinction, 11);
        cfg.t_grid = Some(vec![4.0, 8.0]);
        cfg.k = Some(1);
        let a = run(&cfg).unwrap();
        let b = run(&cfg).unwrap();
        assert_eq!(a.to_json(), b.to_json());
        // Accounting: valid + contaminated = replicas for every cell.
        for c in &a.cells {
            assert_eq!(
                c.n_valid + c.discarded_contaminated + c.censored,
                cfg.replicas as u64,
                "cell {}",
                c.cell
            );
        }
    }

    #[test]
    fn survival_smoke() {
        let mut cfg = quick(ExperimentKind::Survival, 13);
        cfg.horizon = Some(8.0);
        cfg.k_grid = Some(vec![1, 6]);
        let r = run(&cfg).unwrap();
        assert_eq!(r.cells.len(), 2);
        // Pathwise nesting: bigger K can only help.
        assert!(r.cells[1].estimate >= r.cells[0].estimate - 1e-12);
    }

    #[test]
    fn interface_smoke() {
        let mut cfg = quick(ExperimentKind::InterfaceTightness, 17);
        cfg.t_grid = Some(vec![3.0, 6.0]);
        cfg.core_half = Some(12);
        let r = run(&cfg).unwrap();
        assert_eq!(r.cells.len(), 2);
        for c in &r.cells {
            assert!(c.extra.contains_key("l_threshold"));
        }
    }

    #[test]
    fn inversion_smoke() {
        let mut cfg = quick(ExperimentKind::InversionTightness, 19);
        cfg.t_grid = Some(vec![3.0, 6.0]);
        cfg.core_half = Some(12);
        let r = run(&cfg).unwrap();
        assert!(r.cells.iter().all(|c| c.extra.contains_key("q95")));
    }

    #[test]
    fn density_smoke() {
        let mut cfg = quick(ExperimentKind::DensityDecay, 23);
        cfg.t_grid = Some(vec![2.0, 5.0]);
        cfg.n_grid = Some(vec![1]);
        cfg.core_half = Some(10);
        let r = run(&cfg).unwrap();
        assert_eq!(r.cells.len(), 2);
        // Densities are probabilities.
        for c in &r.cells {
            assert!(c.estimate >= 0.0 && c.estimate <= 1.0);
        }
    }

    #[test]
    fn coalescence_smoke() {
        let mut cfg = quick(ExperimentKind::CoalescenceTail, 29);
        cfg.sep_grid = Some(vec![1]);
        cfg.t_grid = Some(vec![2.0, 6.0]);
        cfg.margin = 6.0;
        let r = run(&cfg).unwrap();
        // Tail cells plus transition-law cells.
        assert!(r.cells.iter().any(|c| c.cell.starts_with("sep=")));
        assert!(r.cells.iter().any(|c| c.cell.starts_with("tv_z=")));
    }

    #[test]
    fn edge_speed_smoke() {
        let mut cfg = quick(ExperimentKind::EdgeSpeed, 31);
        cfg.t_grid = Some((1..=6).map(|i| i as f64).collect());
        cfg.k_grid = Some(vec![3, 10]);
        let r = run(&cfg).unwrap();
        assert!(r.cells.iter().any(|c| c.cell.starts_with("edge_t=")));
        // Violation probabilities are nested exactly.
        let v: Vec<f64> = r
            .cells
            .iter()
            .filter(|c| c.cell.starts_with("k="))
            .map(|c| c.estimate)
            .collect();
        assert!(v[1] <= v[0] + 1e-12);
    }

    #[test]
    fn interface_event_smoke() {
        let mut cfg = quick(ExperimentKind::InterfaceEvent, 37);
        cfg.s_grid = Some(vec![2.0]);
        cfg.dt = Some(4.0);
        cfg.core_half = Some(8);
        cfg.replicas = 100;
        let r = run(&cfg).unwrap();
        assert_eq!(r.cells.len(), 1);
    }

    #[test]
    fn rwalk_smoke() {
        let mut cfg = quick(ExperimentKind::RwalkTail, 41);
        cfg.n_grid = Some(vec![16, 64]);
        cfg.replicas = 2000;
        let r = run(&cfg).unwrap();
        assert!(r
            .checks
            .iter()
            .any(|c| c.name == "decomposition_reconstruction_1e-12" && c.pass));
        assert!(r
            .checks
            .iter()
            .any(|c| c.name == "coupling_identity_every_path" && c.pass));
        assert!(r
            .checks
            .iter()
            .any(|c| c.name == "mc_matches_oracle_3se" && c.pass));
    }

    #[test]
    fn renewal_campaign_smoke() {
        let camps = renewal_campaign(
            &Kernel::nearest_neighbour(),
            4.0,
            25.0,
            &[6.0, 10.0],
            60,
            43,
            3.0,
        )
        .unwrap();
        assert_eq!(camps.len(), 2);
        assert!(camps[0].increments.len() > 100);
    }
}
