//! Harris constructions: materialized Poisson event streams on a space-time
//! window, and the reachability queries built on them.
//!
//! A construction carries, per window site, a sorted stream of death-mark
//! times, and per ordered pair `(x, y)` with `0 < |y - x| <= R`, a sorted
//! stream of arrow times.  Arrows whose target falls outside the window are
//! still generated and stored (boundary events); queries whose answer could
//! depend on the exterior set a `boundary_contaminated` flag on their result
//! instead of silently truncating.
//!
//! All event times live on the dyadic grid of [`crate::timegrid`], are
//! strictly inside `(0, horizon]`, and are pairwise distinct across all
//! streams; sampling rejects the (theoretically null) duplicate-timestamp
//! event with a dedicated error.  A construction is immutable after sampling
//! and safe for concurrent reads.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::kernel::Kernel;
use crate::seeding;
use crate::timegrid::{self, MAX_HORIZON};

#[derive(Debug, Error, PartialEq)]
pub enum HarrisError {
    #[error("window [{lo}, {hi}] is shorter than 2R+1 = {needed}")]
    WindowTooSmall { lo: i64, hi: i64, needed: i64 },
    #[error("horizon {0} exceeds the representable maximum {MAX_HORIZON}")]
    HorizonTooLarge(f64),
    #[error("negative horizon {0}")]
    NegativeHorizon(f64),
    #[error("infection rate must be positive, got {0}")]
    InvalidRate(f64),
    #[error("duplicate event timestamp {0}")]
    DuplicateTimestamp(f64),
    #[error("arrow pair {from}>{to} is outside the kernel range {range}")]
    InvalidArrowPair { from: i64, to: i64, range: u32 },
    #[error("event time {0} outside (0, horizon]")]
    EventTimeOutOfRange(f64),
    #[error("event stream is not strictly increasing at {0}")]
    UnsortedStream(f64),
    #[error("site {0} outside window")]
    SiteOutsideWindow(i64),
    #[error("malformed stream key {0:?}")]
    MalformedKey(String),
}

/// Inclusive integer interval of lattice sites.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub lo: i64,
    pub hi: i64,
}

impl Window {
    pub fn new(lo: i64, hi: i64) -> Window {
        assert!(lo <= hi, "empty window");
        Window { lo, hi }
    }

    pub fn len(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, site: i64) -> bool {
        site >= self.lo && site <= self.hi
    }

    pub fn index(&self, site: i64) -> usize {
        debug_assert!(self.contains(site));
        (site - self.lo) as usize
    }

    pub fn site(&self, index: usize) -> i64 {
        self.lo + index as i64
    }

    pub fn iter(&self) -> impl Iterator<Item = i64> {
        self.lo..=self.hi
    }

    /// Sites within distance `< r` of either edge: the region where exterior
    /// events (never sampled) could interact with the window.
    pub fn in_collar(&self, site: i64, r: u32) -> bool {
        site < self.lo + r as i64 || site > self.hi - r as i64
    }
}

/// A site together with a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpaceTimePoint {
    pub site: i64,
    pub time: f64,
}

impl SpaceTimePoint {
    pub fn new(site: i64, time: f64) -> SpaceTimePoint {
        SpaceTimePoint { site, time }
    }
}

/// A query result plus the exterior-dependence flag.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Flagged<T> {
    pub value: T,
    /// True when the answer could depend on events outside the window.
    pub boundary_contaminated: bool,
}

impl<T> Flagged<T> {
    pub fn clean(value: T) -> Flagged<T> {
        Flagged {
            value,
            boundary_contaminated: false,
        }
    }

    pub fn new(value: T, boundary_contaminated: bool) -> Flagged<T> {
        Flagged {
            value,
            boundary_contaminated,
        }
    }

    pub fn map<U>(self, f: impl FnOnce(T) -> U) -> Flagged<U> {
        Flagged {
            value: f(self.value),
            boundary_contaminated: self.boundary_contaminated,
        }
    }
}

/// Fate of the cluster grown from a space-time point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ClusterFate {
    /// First time after the start at which no site is reachable.
    DiedAt(f64),
    /// Still alive when the query horizon was reached (censoring surrogate
    /// for survival forever).
    AliveAtHorizon,
}

impl ClusterFate {
    pub fn died_by(&self, t: f64) -> bool {
        matches!(self, ClusterFate::DiedAt(d) if *d <= t)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EventKind {
    Death { site: i64 },
    /// Arrow from `from` to `to`; `to` may lie outside the window.
    Arrow { from: i64, to: i64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub time: f64,
    pub kind: EventKind,
}

/// Per-site outgoing event, used by cluster and ancestry sweeps.
#[derive(Debug, Clone, Copy)]
pub(crate) enum OutKind {
    Death,
    Spawn(i64),
    /// Arrow leaving the window; the target cannot be tracked.
    SpawnOutside,
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct OutEvent {
    pub time: f64,
    pub kind: OutKind,
}

/// A realization of all death-mark and arrow processes on `window x (0, horizon]`.
pub struct HarrisConstruction {
    window: Window,
    horizon: f64,
    lambda: f64,
    kernel: Kernel,
    seed: u64,
    /// `deaths[window.index(x)]`: sorted death times at site `x`.
    deaths: Vec<Vec<f64>>,
    /// `arrows[window.index(x)][k]`: sorted arrow times from `x` to
    /// `x + displacements[k]` (target possibly outside the window).
    arrows: Vec<Vec<Vec<f64>>>,
    /// Arrows with exterior source and in-window target.  These only arise
    /// from time reversal, are inert for every in-window semantics, and are
    /// kept so that reversal stays an exact involution.
    ext_arrows: Vec<(i64, i64, f64)>,
    displacements: Vec<i64>,
    merged: OnceLock<Vec<Event>>,
    out_events: OnceLock<Vec<Vec<OutEvent>>>,
}

impl PartialEq for HarrisConstruction {
    fn eq(&self, other: &Self) -> bool {
        self.window == other.window
            && self.horizon == other.horizon
            && self.lambda == other.lambda
            && self.kernel == other.kernel
            && self.seed == other.seed
            && self.deaths == other.deaths
            && self.arrows == other.arrows
            && self.ext_arrows == other.ext_arrows
    }
}

impl std::fmt::Debug for HarrisConstruction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HarrisConstruction")
            .field("window", &self.window)
            .field("horizon", &self.horizon)
            .field("lambda", &self.lambda)
            .field("seed", &self.seed)
            .field("events", &self.event_count())
            .finish()
    }
}

fn exp_sample(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    let u: f64 = rng.random();
    -(1.0 - u).ln() / rate
}

fn sample_stream(rng: &mut ChaCha8Rng, rate: f64, horizon: f64) -> Vec<f64> {
    let mut out = Vec::new();
    let mut t = 0.0_f64;
    loop {
        t += exp_sample(rng, rate);
        let s = timegrid::snap(t);
        if s > horizon {
            break;
        }
        if s > 0.0 {
            out.push(s);
        }
    }
    out
}

impl HarrisConstruction {
    /// Sample a construction: rate-1 deaths per site, rate `lambda * p(d)`
    /// arrows per (site, displacement).  Deterministic in `seed`.
    pub fn sample(
        kernel: &Kernel,
        lambda: f64,
        window: Window,
        horizon: f64,
        seed: u64,
    ) -> Result<HarrisConstruction, HarrisError> {
        let needed = 2 * kernel.range() as i64 + 1;
        if (window.len() as i64) < needed {
            return Err(HarrisError::WindowTooSmall {
                lo: window.lo,
                hi: window.hi,
                needed,
            });
        }
        if !(lambda > 0.0) {
            return Err(HarrisError::InvalidRate(lambda));
        }
        if horizon < 0.0 {
            return Err(HarrisError::NegativeHorizon(horizon));
        }
        if horizon > MAX_HORIZON {
            return Err(HarrisError::HorizonTooLarge(horizon));
        }
        let horizon = timegrid::snap(horizon);
        let displacements: Vec<i64> = kernel.displacements().collect();
        let n = window.len();
        let mut deaths = Vec::with_capacity(n);
        let mut arrows = Vec::with_capacity(n);
        for site in window.iter() {
            let mut rng = seeding::rng(seed, &[0, seeding::site_tag(site)]);
            deaths.push(sample_stream(&mut rng, 1.0, horizon));
            let mut per_disp = Vec::with_capacity(displacements.len());
            for &d in &displacements {
                let mut rng = seeding::rng(seed, &[1, seeding::site_tag(site), seeding::site_tag(d)]);
                per_disp.push(sample_stream(&mut rng, lambda * kernel.mass(d), horizon));
            }
            arrows.push(per_disp);
        }
        let h = HarrisConstruction {
            window,
            horizon,
            lambda,
            kernel: kernel.clone(),
            seed,
            deaths,
            arrows,
            ext_arrows: Vec::new(),
            displacements,
            merged: OnceLock::new(),
            out_events: OnceLock::new(),
        };
        h.check_distinct_times()?;
        Ok(h)
    }

    /// Assemble a construction from explicit streams (fixtures, JSON replay).
    pub fn from_parts(
        kernel: &Kernel,
        lambda: f64,
        window: Window,
        horizon: f64,
        seed: u64,
        death_streams: &BTreeMap<i64, Vec<f64>>,
        arrow_streams: &BTreeMap<(i64, i64), Vec<f64>>,
    ) -> Result<HarrisConstruction, HarrisError> {
        if horizon < 0.0 {
            return Err(HarrisError::NegativeHorizon(horizon));
        }
        if horizon > MAX_HORIZON {
            return Err(HarrisError::HorizonTooLarge(horizon));
        }
        let horizon = timegrid::snap(horizon);
        let displacements: Vec<i64> = kernel.displacements().collect();
        let n = window.len();
        let mut deaths = vec![Vec::new(); n];
        let mut arrows = vec![vec![Vec::new(); displacements.len()]; n];
        let mut ext_arrows = Vec::new();

        let check_stream = |times: &[f64]| -> Result<Vec<f64>, HarrisError> {
            let mut out = Vec::with_capacity(times.len());
            let mut prev = 0.0_f64;
            for &t in times {
                let s = timegrid::snap(t);
                if s <= 0.0 || s > horizon {
                    return Err(HarrisError::EventTimeOutOfRange(t));
                }
                if s <= prev && !out.is_empty() {
                    return Err(HarrisError::UnsortedStream(t));
                }
                prev = s;
                out.push(s);
            }
            Ok(out)
        };

        for (&site, times) in death_streams {
            if !window.contains(site) {
                return Err(HarrisError::SiteOutsideWindow(site));
            }
            deaths[window.index(site)] = check_stream(times)?;
        }
        for (&(from, to), times) in arrow_streams {
            let d = to - from;
            if d == 0 || d.unsigned_abs() > kernel.range() as u64 {
                return Err(HarrisError::InvalidArrowPair {
                    from,
                    to,
                    range: kernel.range(),
                });
            }
            let times = check_stream(times)?;
            if window.contains(from) {
                let k = displacements
                    .iter()
                    .position(|&x| x == d)
                    .ok_or(HarrisError::InvalidArrowPair {
                        from,
                        to,
                        range: kernel.range(),
                    })?;
                arrows[window.index(from)][k] = times;
            } else if window.contains(to) {
                for t in times {
                    ext_arrows.push((from, to, t));
                }
            } else {
                return Err(HarrisError::SiteOutsideWindow(from));
            }
        }
        ext_arrows.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
        let h = HarrisConstruction {
            window,
            horizon,
            lambda,
            kernel: kernel.clone(),
            seed,
            deaths,
            arrows,
            ext_arrows,
            displacements,
            merged: OnceLock::new(),
            out_events: OnceLock::new(),
        };
        h.check_distinct_times()?;
        Ok(h)
    }

    fn check_distinct_times(&self) -> Result<(), HarrisError> {
        let mut ticks: Vec<u64> = Vec::with_capacity(self.event_count());
        for s in &self.deaths {
            ticks.extend(s.iter().map(|&t| timegrid::to_ticks(t)));
        }
        for per_site in &self.arrows {
            for s in per_site {
                ticks.extend(s.iter().map(|&t| timegrid::to_ticks(t)));
            }
        }
        ticks.extend(self.ext_arrows.iter().map(|&(_, _, t)| timegrid::to_ticks(t)));
        ticks.sort_unstable();
        for w in ticks.windows(2) {
            if w[0] == w[1] {
                return Err(HarrisError::DuplicateTimestamp(timegrid::from_ticks(w[0])));
            }
        }
        Ok(())
    }

    pub fn window(&self) -> Window {
        self.window
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn kernel(&self) -> &Kernel {
        &self.kernel
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn range(&self) -> u32 {
        self.kernel.range()
    }

    pub fn in_collar(&self, site: i64) -> bool {
        self.window.in_collar(site, self.kernel.range())
    }

    pub fn event_count(&self) -> usize {
        let d: usize = self.deaths.iter().map(Vec::len).sum();
        let a: usize = self
            .arrows
            .iter()
            .map(|p| p.iter().map(Vec::len).sum::<usize>())
            .sum();
        d + a + self.ext_arrows.len()
    }

    pub fn total_deaths(&self) -> usize {
        self.deaths.iter().map(Vec::len).sum()
    }

    pub fn total_arrows(&self) -> usize {
        self.event_count() - self.total_deaths()
    }

    pub fn deaths_at(&self, site: i64) -> &[f64] {
        &self.deaths[self.window.index(site)]
    }

    pub fn arrow_stream(&self, from: i64, to: i64) -> &[f64] {
        static EMPTY: Vec<f64> = Vec::new();
        if !self.window.contains(from) {
            return &EMPTY;
        }
        match self.displacements.iter().position(|&d| d == to - from) {
            Some(k) => &self.arrows[self.window.index(from)][k],
            None => &EMPTY,
        }
    }

    /// Chronologically sorted in-window events (deaths plus arrows with
    /// in-window source).  Exterior-source arrows are inert for every
    /// in-window semantics and are excluded.
    pub fn merged_events(&self) -> &[Event] {
        self.merged.get_or_init(|| {
            let mut out = Vec::with_capacity(self.event_count());
            for site in self.window.iter() {
                let i = self.window.index(site);
                for &t in &self.deaths[i] {
                    out.push(Event {
                        time: t,
                        kind: EventKind::Death { site },
                    });
                }
                for (k, &d) in self.displacements.iter().enumerate() {
                    for &t in &self.arrows[i][k] {
                        out.push(Event {
                            time: t,
                            kind: EventKind::Arrow {
                                from: site,
                                to: site + d,
                            },
                        });
                    }
                }
            }
            out.sort_unstable_by_key(|e| timegrid::to_ticks(e.time));
            out
        })
    }

    /// Per-site outgoing events (deaths and arrows emitted by the site),
    /// chronologically sorted.
    pub(crate) fn out_events(&self) -> &[Vec<OutEvent>] {
        self.out_events.get_or_init(|| {
            let mut out: Vec<Vec<OutEvent>> = vec![Vec::new(); self.window.len()];
            for site in self.window.iter() {
                let i = self.window.index(site);
                for &t in &self.deaths[i] {
                    out[i].push(OutEvent {
                        time: t,
                        kind: OutKind::Death,
                    });
                }
                for (k, &d) in self.displacements.iter().enumerate() {
                    let target = site + d;
                    let kind = if self.window.contains(target) {
                        OutKind::Spawn(target)
                    } else {
                        OutKind::SpawnOutside
                    };
                    for &t in &self.arrows[i][k] {
                        out[i].push(OutEvent { time: t, kind });
                    }
                }
                out[i].sort_unstable_by_key(|e| timegrid::to_ticks(e.time));
            }
            out
        })
    }

    fn bare(&self, window: Window, horizon: f64) -> HarrisConstruction {
        HarrisConstruction {
            window,
            horizon,
            lambda: self.lambda,
            kernel: self.kernel.clone(),
            seed: self.seed,
            deaths: vec![Vec::new(); window.len()],
            arrows: vec![vec![Vec::new(); self.displacements.len()]; window.len()],
            ext_arrows: Vec::new(),
            displacements: self.displacements.clone(),
            merged: OnceLock::new(),
            out_events: OnceLock::new(),
        }
    }

    /// Drop all events after `t`; the horizon becomes `t`.
    pub fn restrict(&self, t: f64) -> HarrisConstruction {
        let t = timegrid::snap(t.clamp(0.0, self.horizon));
        let mut out = self.bare(self.window, t);
        for i in 0..self.window.len() {
            out.deaths[i] = self.deaths[i].iter().copied().take_while(|&u| u <= t).collect();
            for k in 0..self.displacements.len() {
                out.arrows[i][k] = self.arrows[i][k]
                    .iter()
                    .copied()
                    .take_while(|&u| u <= t)
                    .collect();
            }
        }
        out.ext_arrows = self
            .ext_arrows
            .iter()
            .copied()
            .take_while(|&(_, _, u)| u <= t)
            .collect();
        out
    }

    /// Re-base the construction so that `origin` becomes the space-time
    /// origin: events at or before `origin.time` are dropped, remaining times
    /// and sites are shifted.  The output window is the input window shifted
    /// by `-origin.site` (the available data is exactly the old window's; the
    /// serialized metadata documents the clipping).
    pub fn shift(&self, origin: SpaceTimePoint) -> HarrisConstruction {
        let t0 = timegrid::snap(origin.time.clamp(0.0, self.horizon));
        let x0 = origin.site;
        let window = Window::new(self.window.lo - x0, self.window.hi - x0);
        let mut out = self.bare(window, self.horizon - t0);
        for i in 0..self.window.len() {
            out.deaths[i] = self.deaths[i]
                .iter()
                .filter(|&&u| u > t0)
                .map(|&u| u - t0)
                .collect();
            for k in 0..self.displacements.len() {
                out.arrows[i][k] = self.arrows[i][k]
                    .iter()
                    .filter(|&&u| u > t0)
                    .map(|&u| u - t0)
                    .collect();
            }
        }
        out.ext_arrows = self
            .ext_arrows
            .iter()
            .filter(|&&(_, _, u)| u > t0)
            .map(|&(a, b, u)| (a - x0, b - x0, u - t0))
            .collect();
        out
    }

    /// Time reversal on `[0, t]`: output death at `(x, s)` iff input death at
    /// `(x, t - s)`; output arrow `x -> y` at `s` iff input arrow `y -> x` at
    /// `t - s`.  An input event at exactly time `t` would land at time 0 and
    /// is dropped (almost surely absent for sampled `t`).
    pub fn reverse(&self, t: f64) -> HarrisConstruction {
        let t = timegrid::snap(t.clamp(0.0, self.horizon));
        let mut out = self.bare(self.window, t);
        for site in self.window.iter() {
            let i = self.window.index(site);
            // Reversed deaths at `site` come from this site's own stream.
            out.deaths[i] = self.deaths[i]
                .iter()
                .rev()
                .filter(|&&u| u < t)
                .map(|&u| t - u)
                .collect();
            for (k, &d) in self.displacements.iter().enumerate() {
                let target = site + d;
                if self.window.contains(target) {
                    // Input arrow site -> target becomes target -> site.
                    let j = self.window.index(target);
                    let kk = self
                        .displacements
                        .iter()
                        .position(|&dd| dd == -d)
                        .expect("kernel support is symmetric");
                    out.arrows[j][kk] = self.arrows[i][k]
                        .iter()
                        .rev()
                        .filter(|&&u| u < t)
                        .map(|&u| t - u)
                        .collect();
                } else {
                    // Boundary arrow: reversed source lies outside the window.
                    for &u in self.arrows[i][k].iter().rev().filter(|&&u| u < t) {
                        out.ext_arrows.push((target, site, t - u));
                    }
                }
            }
        }
        // Exterior-source arrows reverse back into boundary arrows.
        for &(from, to, u) in self.ext_arrows.iter().rev().filter(|&&(_, _, u)| u < t) {
            let d = from - to;
            let k = self
                .displacements
                .iter()
                .position(|&dd| dd == d)
                .expect("ext arrow within kernel range");
            out.arrows[self.window.index(to)][k].push(t - u);
        }
        for per_site in &mut out.arrows {
            for s in per_site {
                s.sort_by(|a, b| a.partial_cmp(b).unwrap());
            }
        }
        out.ext_arrows.sort_by(|a, b| a.2.partial_cmp(&b.2).unwrap());
        out
    }

    /// Is there a path from `from` to `to` following arrows and avoiding
    /// death marks?
    pub fn path_exists(&self, from: SpaceTimePoint, to: SpaceTimePoint) -> Flagged<bool> {
        assert!(from.time < to.time, "path query needs from.time < to.time");
        assert!(self.window.contains(from.site) && self.window.contains(to.site));
        let mut sweep = Reach::new(self, from);
        sweep.run(to.time, None);
        Flagged::new(sweep.occupied(to.site), sweep.contaminated)
    }

    /// First time after `from.time` at which no site is reachable from
    /// `from`, or [`ClusterFate::AliveAtHorizon`].
    pub fn death_time(&self, from: SpaceTimePoint) -> Flagged<ClusterFate> {
        self.death_time_until(from, self.horizon)
    }

    /// As [`Self::death_time`] but censoring at `until <= horizon`.
    pub fn death_time_until(&self, from: SpaceTimePoint, until: f64) -> Flagged<ClusterFate> {
        assert!(self.window.contains(from.site));
        let mut sweep = Reach::new(self, from);
        let fate = sweep.run(until, None);
        Flagged::new(fate, sweep.contaminated)
    }

    /// Largest `|y - from.site|` over points reachable from `from` by time
    /// `until`; 0 if the start is already dead.
    pub fn max_displacement(&self, from: SpaceTimePoint, until: f64) -> Flagged<u64> {
        assert!(self.window.contains(from.site));
        let mut sweep = Reach::new(self, from);
        let mut max_disp = 0u64;
        sweep.run(until, Some(&mut max_disp));
        Flagged::new(max_disp, sweep.contaminated)
    }

    pub fn to_json(&self) -> String {
        let mut deaths = BTreeMap::new();
        for site in self.window.iter() {
            let s = &self.deaths[self.window.index(site)];
            if !s.is_empty() {
                deaths.insert(site.to_string(), s.clone());
            }
        }
        let mut arrows: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for site in self.window.iter() {
            for (k, &d) in self.displacements.iter().enumerate() {
                let s = &self.arrows[self.window.index(site)][k];
                if !s.is_empty() {
                    arrows.insert(format!("{}>{}", site, site + d), s.clone());
                }
            }
        }
        for &(from, to, t) in &self.ext_arrows {
            arrows.entry(format!("{from}>{to}")).or_default().push(t);
        }
        let doc = HarrisJson {
            meta: HarrisMeta {
                lambda: self.lambda,
                window: [self.window.lo, self.window.hi],
                horizon: self.horizon,
                seed: self.seed,
                kernel: self.kernel.to_map(),
            },
            deaths,
            arrows,
        };
        serde_json::to_string_pretty(&doc).expect("harris serialization")
    }

    pub fn from_json(text: &str) -> Result<HarrisConstruction, HarrisError> {
        let doc: HarrisJson =
            serde_json::from_str(text).map_err(|e| HarrisError::MalformedKey(e.to_string()))?;
        let kernel = Kernel::build(&doc.meta.kernel)
            .map_err(|e| HarrisError::MalformedKey(e.to_string()))?;
        let window = Window::new(doc.meta.window[0], doc.meta.window[1]);
        let mut death_streams = BTreeMap::new();
        for (k, v) in &doc.deaths {
            let site: i64 = k
                .parse()
                .map_err(|_| HarrisError::MalformedKey(k.clone()))?;
            death_streams.insert(site, v.clone());
        }
        let mut arrow_streams = BTreeMap::new();
        for (k, v) in &doc.arrows {
            let (a, b) = k
                .split_once('>')
                .ok_or_else(|| HarrisError::MalformedKey(k.clone()))?;
            let from: i64 = a
                .parse()
                .map_err(|_| HarrisError::MalformedKey(k.clone()))?;
            let to: i64 = b
                .parse()
                .map_err(|_| HarrisError::MalformedKey(k.clone()))?;
            arrow_streams.insert((from, to), v.clone());
        }
        HarrisConstruction::from_parts(
            &kernel,
            doc.meta.lambda,
            window,
            doc.meta.horizon,
            doc.meta.seed,
            &death_streams,
            &arrow_streams,
        )
    }
}

#[derive(Serialize, Deserialize)]
struct HarrisMeta {
    lambda: f64,
    window: [i64; 2],
    horizon: f64,
    seed: u64,
    kernel: BTreeMap<i64, f64>,
}

#[derive(Serialize, Deserialize)]
struct HarrisJson {
    meta: HarrisMeta,
    deaths: BTreeMap<String, Vec<f64>>,
    arrows: BTreeMap<String, Vec<f64>>,
}

/// One-shot reachability sweep from a single space-time point.
struct Reach<'a> {
    h: &'a HarrisConstruction,
    start: SpaceTimePoint,
    occupied: Vec<bool>,
    count: usize,
    contaminated: bool,
}

impl<'a> Reach<'a> {
    fn new(h: &'a HarrisConstruction, start: SpaceTimePoint) -> Reach<'a> {
        let mut occupied = vec![false; h.window.len()];
        occupied[h.window.index(start.site)] = true;
        let contaminated = h.in_collar(start.site);
        Reach {
            h,
            start,
            occupied,
            count: 1,
            contaminated,
        }
    }

    fn occupied(&self, site: i64) -> bool {
        self.h.window.contains(site) && self.occupied[self.h.window.index(site)]
    }

    /// Sweep events in `[start.time, until]`, returning the cluster fate.
    /// `max_disp` accumulates the maximal displacement when supplied.
    fn run(&mut self, until: f64, mut max_disp: Option<&mut u64>) -> ClusterFate {
        let events = self.h.merged_events();
        let s = self.start.time;
        let lo = events.partition_point(|e| e.time < s);
        for ev in &events[lo..] {
            if ev.time > until {
                break;
            }
            match ev.kind {
                EventKind::Death { site } => {
                    if ev.time == s {
                        // A death exactly at the start time kills the start
                        // site; arrows at the start time are not usable.
                        if site != self.start.site {
                            continue;
                        }
                    }
                    let i = self.h.window.index(site);
                    if self.occupied[i] {
                        self.occupied[i] = false;
                        self.count -= 1;
                        if self.count == 0 {
                            return ClusterFate::DiedAt(ev.time);
                        }
                    }
                }
                EventKind::Arrow { from, to } => {
                    if ev.time == s {
                        continue;
                    }
                    if !self.occupied[self.h.window.index(from)] {
                        continue;
                    }
                    if let Some(m) = max_disp.as_deref_mut() {
                        *m = (*m).max(to.abs_diff(self.start.site));
                    }
                    if self.h.window.contains(to) {
                        let j = self.h.window.index(to);
                        if !self.occupied[j] {
                            self.occupied[j] = true;
                            self.count += 1;
                            if self.h.in_collar(to) {
                                self.contaminated = true;
                            }
                        }
                    } else {
                        self.contaminated = true;
                    }
                }
            }
        }
        ClusterFate::AliveAtHorizon
    }
}
