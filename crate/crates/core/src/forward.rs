//! Primal dynamics: one-type and two-type configurations evolved forward on a
//! fixed Harris construction, plus the primal observables (interface edges,
//! k-inversions, monotone-coupling checks, descendancy barriers).
//!
//! Every evolution is a single chronological sweep over the merged event
//! list: a death mark vacates its site, an arrow copies the source state onto
//! the target, for the two-type process only if the target is vacant just
//! before the arrow.  State updates are O(1) per event.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harris::{EventKind, Flagged, HarrisConstruction, Window};

#[derive(Debug, Error, PartialEq)]
pub enum ForwardError {
    #[error("initial inclusions of the coupling precondition fail at site {0}")]
    PreconditionViolated(i64),
}

/// Site states of the two-type process.
pub const VACANT: u8 = 0;
pub const TYPE_ONE: u8 = 1;
pub const TYPE_TWO: u8 = 2;

/// A `{vacant, type-1, type-2}` assignment on a window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TypedConfig {
    window: Window,
    states: Vec<u8>,
}

impl TypedConfig {
    pub fn new(window: Window, states: Vec<u8>) -> TypedConfig {
        assert_eq!(states.len(), window.len());
        assert!(states.iter().all(|&s| s <= 2));
        TypedConfig { window, states }
    }

    pub fn vacant(window: Window) -> TypedConfig {
        TypedConfig {
            window,
            states: vec![VACANT; window.len()],
        }
    }

    /// Heaviside configuration: 1's on `(-inf, 0]`, 2's on `(0, inf)`,
    /// truncated to the window.
    pub fn heaviside(window: Window) -> TypedConfig {
        let states = window
            .iter()
            .map(|x| if x <= 0 { TYPE_ONE } else { TYPE_TWO })
            .collect();
        TypedConfig { window, states }
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn get(&self, site: i64) -> u8 {
        self.states[self.window.index(site)]
    }

    pub fn set(&mut self, site: i64, state: u8) {
        assert!(state <= 2);
        self.states[self.window.index(site)] = state;
    }

    pub fn states(&self) -> &[u8] {
        &self.states
    }

    pub fn sites_with(&self, state: u8) -> impl Iterator<Item = i64> + '_ {
        self.window.iter().filter(move |&x| self.get(x) == state)
    }

    pub fn count(&self, state: u8) -> usize {
        self.states.iter().filter(|&&s| s == state).count()
    }

    /// Occupied-site set, forgetting types.
    pub fn occupied(&self) -> OneTypeConfig {
        OneTypeConfig {
            window: self.window,
            occupied: self.states.iter().map(|&s| s != VACANT).collect(),
        }
    }

    /// Run-length encoding used by the JSON schema: comma-separated
    /// `count*state` tokens, e.g. `"5*1,1*0,5*2"`.
    pub fn to_run_length(&self) -> String {
        let mut out = String::new();
        let mut i = 0;
        while i < self.states.len() {
            let s = self.states[i];
            let mut j = i;
            while j < self.states.len() && self.states[j] == s {
                j += 1;
            }
            if !out.is_empty() {
                out.push(',');
            }
            out.push_str(&format!("{}*{}", j - i, s));
            i = j;
        }
        out
    }

    pub fn from_run_length(window: Window, text: &str) -> Option<TypedConfig> {
        let mut states = Vec::with_capacity(window.len());
        if !text.is_empty() {
            for tok in text.split(',') {
                let (n, s) = tok.split_once('*')?;
                let n: usize = n.parse().ok()?;
                let s: u8 = s.parse().ok()?;
                if s > 2 {
                    return None;
                }
                states.extend(std::iter::repeat(s).take(n));
            }
        }
        if states.len() != window.len() {
            return None;
        }
        Some(TypedConfig { window, states })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ConfigJson {
            window: [self.window.lo, self.window.hi],
            states: self.to_run_length(),
        })
        .unwrap()
    }

    pub fn from_json(text: &str) -> Option<TypedConfig> {
        let doc: ConfigJson = serde_json::from_str(text).ok()?;
        TypedConfig::from_run_length(Window::new(doc.window[0], doc.window[1]), &doc.states)
    }
}

#[derive(Serialize, Deserialize)]
struct ConfigJson {
    window: [i64; 2],
    states: String,
}

/// An occupied-site set on a window (states of the one-type process).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OneTypeConfig {
    window: Window,
    occupied: Vec<bool>,
}

impl OneTypeConfig {
    pub fn empty(window: Window) -> OneTypeConfig {
        OneTypeConfig {
            window,
            occupied: vec![false; window.len()],
        }
    }

    pub fn from_sites(window: Window, sites: &[i64]) -> OneTypeConfig {
        let mut c = OneTypeConfig::empty(window);
        for &s in sites {
            c.occupied[window.index(s)] = true;
        }
        c
    }

    /// Occupy `[lo, hi]`, clipped to the window.
    pub fn from_range(window: Window, lo: i64, hi: i64) -> OneTypeConfig {
        let mut c = OneTypeConfig::empty(window);
        for s in lo.max(window.lo)..=hi.min(window.hi) {
            c.occupied[window.index(s)] = true;
        }
        c
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn get(&self, site: i64) -> bool {
        self.occupied[self.window.index(site)]
    }

    pub fn count(&self) -> usize {
        self.occupied.iter().filter(|&&b| b).count()
    }

    pub fn sites(&self) -> impl Iterator<Item = i64> + '_ {
        self.window.iter().filter(move |&x| self.get(x))
    }
}

/// Interface edges of a two-type configuration: `r` is the rightmost 1, `l`
/// the leftmost 2, `rho = r - l` when both exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InterfaceStats {
    pub r: Option<i64>,
    pub l: Option<i64>,
    pub rho: Option<i64>,
}

pub fn interface_stats(config: &TypedConfig) -> InterfaceStats {
    let r = config.sites_with(TYPE_ONE).max();
    let l = config.sites_with(TYPE_TWO).min();
    let rho = match (r, l) {
        (Some(r), Some(l)) => Some(r - l),
        _ => None,
    };
    InterfaceStats { r, l, rho }
}

/// Number of sites `x` with `config(x) = 2` and `config(x + k) = 1`.
pub fn count_k_inversions(config: &TypedConfig, k: i64) -> usize {
    assert!(k >= 1);
    let w = config.window();
    w.iter()
        .filter(|&x| x + k <= w.hi && config.get(x) == TYPE_TWO && config.get(x + k) == TYPE_ONE)
        .count()
}

/// Total inversion count: pairs `x < y` with `config(x) = 2, config(y) = 1`.
/// Under the duality identity this equals, pair by pair, the dual inversion
/// count read off the first-ancestor table of the reversed construction.
pub fn total_inversions(config: &TypedConfig) -> u64 {
    let mut twos_seen = 0u64;
    let mut total = 0u64;
    for &s in config.states() {
        if s == TYPE_TWO {
            twos_seen += 1;
        } else if s == TYPE_ONE {
            total += twos_seen;
        }
    }
    total
}

/// Diagnostics accumulated by a forward sweep.
///
/// The cones are interval hulls of arrow-reachability from the two window
/// collars; anything the (unsampled) exterior could have influenced lies
/// inside them.  Envelopes record where the observables ever lived; the
/// experiment layer compares the two to decide per-replica validity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepReport {
    /// An occupied site touched the collar at some time during the sweep.
    pub occupied_touched_collar: bool,
    /// Rightmost site ever reachable (by arrows alone) from the left collar.
    pub left_cone_hi: i64,
    /// Leftmost site ever reachable (by arrows alone) from the right collar.
    pub right_cone_lo: i64,
    /// Hull of sites that ever held a 1 (initially or by birth).
    pub ones_env: Option<(i64, i64)>,
    /// Hull of sites that ever held a 2.
    pub twos_env: Option<(i64, i64)>,
}

impl SweepReport {
    fn new(h: &HarrisConstruction) -> SweepReport {
        let w = h.window();
        let r = h.range() as i64;
        SweepReport {
            occupied_touched_collar: false,
            left_cone_hi: w.lo + r - 1,
            right_cone_lo: w.hi - r + 1,
            ones_env: None,
            twos_env: None,
        }
    }

    fn cone_arrow(&mut self, from: i64, to: i64) {
        if from <= self.left_cone_hi && to > self.left_cone_hi {
            self.left_cone_hi = to;
        }
        if from >= self.right_cone_lo && to < self.right_cone_lo {
            self.right_cone_lo = to;
        }
    }

    /// True when both collar cones stay at least `pad` sites away from
    /// `[lo, hi]`.
    pub fn zone_clear(&self, lo: i64, hi: i64, pad: i64) -> bool {
        self.left_cone_hi < lo - pad && self.right_cone_lo > hi + pad
    }
}

fn grow_env(env: &mut Option<(i64, i64)>, site: i64) {
    *env = Some(match *env {
        None => (site, site),
        Some((lo, hi)) => (lo.min(site), hi.max(site)),
    });
}

/// Result of a multitype forward run with snapshots at grid times.
pub struct MultitypeRun {
    pub snapshots: Vec<TypedConfig>,
    pub final_config: TypedConfig,
    pub report: SweepReport,
}

/// Evolve the two-type process, snapshotting at each time of the sorted
/// `grid` and returning the state at `t_end`, in one sweep.
pub fn run_multitype(
    h: &HarrisConstruction,
    initial: &TypedConfig,
    grid: &[f64],
    t_end: f64,
) -> MultitypeRun {
    assert_eq!(initial.window(), h.window());
    assert!(t_end <= h.horizon());
    debug_assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    debug_assert!(grid.iter().all(|&g| g <= t_end));
    let w = h.window();
    let mut state = initial.clone();
    let mut report = SweepReport::new(h);
    for x in w.iter() {
        let s = state.get(x);
        if s != VACANT {
            if h.in_collar(x) {
                report.occupied_touched_collar = true;
            }
            if s == TYPE_ONE {
                grow_env(&mut report.ones_env, x);
            } else {
                grow_env(&mut report.twos_env, x);
            }
        }
    }
    let mut snapshots: Vec<TypedConfig> = Vec::with_capacity(grid.len());
    let mut gi = 0;
    for ev in h.merged_events() {
        if ev.time > t_end {
            break;
        }
        while gi < grid.len() && grid[gi] < ev.time {
            snapshots.push(state.clone());
            gi += 1;
        }
        match ev.kind {
            EventKind::Death { site } => {
                state.set(site, VACANT);
            }
            EventKind::Arrow { from, to } => {
                report.cone_arrow(from, to);
                let src = state.get(from);
                if src != VACANT && w.contains(to) && state.get(to) == VACANT {
                    state.set(to, src);
                    if h.in_collar(to) {
                        report.occupied_touched_collar = true;
                    }
                    if src == TYPE_ONE {
                        grow_env(&mut report.ones_env, to);
                    } else {
                        grow_env(&mut report.twos_env, to);
                    }
                }
            }
        }
    }
    while gi < grid.len() {
        snapshots.push(state.clone());
        gi += 1;
    }
    MultitypeRun {
        snapshots,
        final_config: state,
        report,
    }
}

/// State of the two-type process at time `t`.
pub fn evolve_multitype(
    h: &HarrisConstruction,
    initial: &TypedConfig,
    t: f64,
) -> Flagged<TypedConfig> {
    let run = run_multitype(h, initial, &[], t);
    Flagged::new(run.final_config, run.report.occupied_touched_collar)
}

/// Result of a one-type forward run.
pub struct OneTypeRun {
    pub snapshots: Vec<OneTypeConfig>,
    pub final_config: OneTypeConfig,
    pub report: SweepReport,
}

pub fn run_one_type(
    h: &HarrisConstruction,
    initial: &OneTypeConfig,
    grid: &[f64],
    t_end: f64,
) -> OneTypeRun {
    assert_eq!(initial.window(), h.window());
    assert!(t_end <= h.horizon());
    let w = h.window();
    let mut state = initial.clone();
    let mut report = SweepReport::new(h);
    let init_sites: Vec<i64> = state.sites().collect();
    for x in init_sites {
        if h.in_collar(x) {
            report.occupied_touched_collar = true;
        }
        grow_env(&mut report.ones_env, x);
    }
    let mut snapshots = Vec::with_capacity(grid.len());
    let mut gi = 0;
    for ev in h.merged_events() {
        if ev.time > t_end {
            break;
        }
        while gi < grid.len() && grid[gi] < ev.time {
            snapshots.push(state.clone());
            gi += 1;
        }
        match ev.kind {
            EventKind::Death { site } => {
                state.occupied[w.index(site)] = false;
            }
            EventKind::Arrow { from, to } => {
                report.cone_arrow(from, to);
                if state.get(from) && w.contains(to) && !state.get(to) {
                    state.occupied[w.index(to)] = true;
                    if h.in_collar(to) {
                        report.occupied_touched_collar = true;
                    }
                    grow_env(&mut report.ones_env, to);
                }
            }
        }
    }
    while gi < grid.len() {
        snapshots.push(state.clone());
        gi += 1;
    }
    OneTypeRun {
        snapshots,
        final_config: state,
        report,
    }
}

/// State of the one-type process at time `t`: occupied at `x` iff some
/// initially occupied site connects to `(x, t)` by a path.
pub fn evolve_one_type(
    h: &HarrisConstruction,
    initial: &OneTypeConfig,
    t: f64,
) -> Flagged<OneTypeConfig> {
    let run = run_one_type(h, initial, &[], t);
    Flagged::new(run.final_config, run.report.occupied_touched_collar)
}

/// Check the monotone-coupling inclusions `{xi' = 1} ⊇ {xi'' = 1}` and
/// `{xi' = 2} ⊆ {xi'' = 2}` for two configurations evolved on the same
/// construction.  The inclusions are verified after every event up to the
/// last grid time; state changes only at events, so this covers all times.
pub fn check_monotone_coupling(
    h: &HarrisConstruction,
    primed: &TypedConfig,
    doubleprimed: &TypedConfig,
    t_grid: &[f64],
) -> Result<bool, ForwardError> {
    assert_eq!(primed.window(), h.window());
    assert_eq!(doubleprimed.window(), h.window());
    let w = h.window();
    let inclusion_at = |a: &TypedConfig, b: &TypedConfig, x: i64| -> bool {
        (b.get(x) != TYPE_ONE || a.get(x) == TYPE_ONE)
            && (a.get(x) != TYPE_TWO || b.get(x) == TYPE_TWO)
    };
    for x in w.iter() {
        if !inclusion_at(primed, doubleprimed, x) {
            return Err(ForwardError::PreconditionViolated(x));
        }
    }
    let t_end = t_grid.iter().copied().fold(0.0f64, f64::max);
    let mut a = primed.clone();
    let mut b = doubleprimed.clone();
    for ev in h.merged_events() {
        if ev.time > t_end {
            break;
        }
        match ev.kind {
            EventKind::Death { site } => {
                a.set(site, VACANT);
                b.set(site, VACANT);
            }
            EventKind::Arrow { from, to } => {
                if !w.contains(to) {
                    continue;
                }
                for c in [&mut a, &mut b] {
                    let src = c.get(from);
                    if src != VACANT && c.get(to) == VACANT {
                        c.set(to, src);
                    }
                }
                // Only the arrow target can break the inclusions.
                if !inclusion_at(&a, &b, to) {
                    return Ok(false);
                }
            }
        }
    }
    Ok(true)
}

/// Trajectory of the rightmost 1 started from the heaviside configuration.
#[derive(Debug, Clone)]
pub struct EdgeTrajectory {
    /// `(grid time, rightmost 1)`; `None` once the 1's are extinct in-window.
    pub points: Vec<(f64, Option<i64>)>,
    /// First grid time with no 1's, if any.
    pub extinction_grid_time: Option<f64>,
    pub report: SweepReport,
}

/// Rightmost-1 trajectory for the edge-speed experiment (initial
/// configuration fixed to the heaviside state).
pub fn edge_of_ones(h: &HarrisConstruction, t_grid: &[f64]) -> EdgeTrajectory {
    let init = TypedConfig::heaviside(h.window());
    let t_end = t_grid.iter().copied().fold(0.0f64, f64::max);
    let run = run_multitype(h, &init, t_grid, t_end);
    let mut points = Vec::with_capacity(t_grid.len());
    let mut extinction = None;
    for (i, snap) in run.snapshots.iter().enumerate() {
        let r = snap.sites_with(TYPE_ONE).max();
        if r.is_none() && extinction.is_none() {
            extinction = Some(t_grid[i]);
        }
        points.push((t_grid[i], r));
    }
    EdgeTrajectory {
        points,
        extinction_grid_time: extinction,
        report: run.report,
    }
}

/// Does `x` form a `rho`-descendancy barrier on `[0, t_check]`?
///
/// Condition (i): every connection `(u, 0) <-> (y, s)` with
/// `|y - x| <= rho * s` is matched by `(x, 0) <-> (y, s)`.
/// Condition (ii): every connection between `u, y` on opposite sides of `x`
/// is matched by `(x, 0) <-> (y, s)`.
///
/// Reachability changes only at events, so a violation that opens at some
/// time persists until the next event at the same site; checking each site's
/// status just before every event there, plus once at `t_check`, is exact.
/// The cone membership uses the closed inequalities `-rho*s <= y-x <= rho*s`.
pub fn is_descendancy_barrier(
    h: &HarrisConstruction,
    x: i64,
    rho: f64,
    t_check: f64,
) -> Flagged<bool> {
    assert!(t_check <= h.horizon());
    assert!(rho > 0.0);
    let w = h.window();
    let n = w.len();
    // Reachability from: sites left of x, x itself, sites right of x.
    let mut from_left = vec![false; n];
    let mut from_x = vec![false; n];
    let mut from_right = vec![false; n];
    for u in w.iter() {
        let i = w.index(u);
        if u < x {
            from_left[i] = true;
        } else if u == x {
            from_x[i] = true;
        } else {
            from_right[i] = true;
        }
    }
    let mut contaminated = h.in_collar(x);
    let cone_entry = |y: i64| (y - x).unsigned_abs() as f64 / rho;

    // Is the status of site y, held on a piece ending at `end` (exclusive
    // for condition (i), inclusive when `closed`), a violation?
    let violated = |from_left: &[bool],
                    from_x: &[bool],
                    from_right: &[bool],
                    y: i64,
                    end: f64,
                    closed: bool|
     -> bool {
        let i = w.index(y);
        if from_x[i] || (!from_left[i] && !from_right[i]) {
            return false;
        }
        // Condition (ii): opposite-side connection unmatched.
        if (from_left[i] && y > x) || (from_right[i] && y < x) {
            return true;
        }
        // Condition (i): does the piece intersect the cone region
        // [cone_entry(y), t_check]?
        let entry = cone_entry(y);
        if closed {
            entry <= end
        } else {
            entry < end
        }
    };

    for ev in h.merged_events() {
        if ev.time > t_check {
            break;
        }
        let touched = match ev.kind {
            EventKind::Death { site } => site,
            EventKind::Arrow { from, to } => {
                if !w.contains(to) {
                    let i = w.index(from);
                    if from_left[i] || from_x[i] || from_right[i] {
                        contaminated = true;
                    }
                    continue;
                }
                to
            }
        };
        // The piece ending now at the touched site.
        if violated(&from_left, &from_x, &from_right, touched, ev.time, false) {
            return Flagged::new(false, contaminated);
        }
        match ev.kind {
            EventKind::Death { site } => {
                let i = w.index(site);
                from_left[i] = false;
                from_x[i] = false;
                from_right[i] = false;
            }
            EventKind::Arrow { from, to } => {
                let i = w.index(from);
                let j = w.index(to);
                from_left[j] |= from_left[i];
                from_x[j] |= from_x[i];
                from_right[j] |= from_right[i];
                if (from_left[j] || from_x[j] || from_right[j]) && h.in_collar(to) {
                    contaminated = true;
                }
            }
        }
    }
    for y in w.iter() {
        if violated(&from_left, &from_x, &from_right, y, t_check, true) {
            return Flagged::new(false, contaminated);
        }
    }
    Flagged::new(true, contaminated)
}
