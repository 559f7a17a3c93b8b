//! Perturbed random walks: a family of location-dependent step laws
//! exponentially close in total variation to a symmetric law, the mixture
//! decompositions behind the coupling, the coupled chain/walk pair, hitting
//! time estimators, and an exact absorbing-operator oracle.
//!
//! State 0 is frozen by every path sampler here: all the quantities of
//! interest stop at the hitting time of 0, so the step law at 0 is never
//! consulted and need not be part of a family.

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::seeding;

/// Tolerance for pmf normalization and the reconstruction identities.
pub const PMF_TOL: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum WalkError {
    #[error("pmf is invalid: {0}")]
    InvalidPmf(String),
    #[error("epsilon {epsilon} below the total variation {tv} at z = {z}")]
    EpsilonTooSmall { z: i64, epsilon: f64, tv: f64 },
    #[error("boundary leak {leak} exceeds the requested tolerance {tol}")]
    WindowLeakTooLarge { leak: f64, tol: f64 },
}

/// A probability mass function on a finite integer interval.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Pmf {
    lo: i64,
    mass: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl Pmf {
    pub fn new(lo: i64, mass: Vec<f64>) -> Result<Pmf, WalkError> {
        if mass.is_empty() {
            return Err(WalkError::InvalidPmf("empty support".into()));
        }
        if mass.iter().any(|&m| m < 0.0 || !m.is_finite()) {
            return Err(WalkError::InvalidPmf("negative or non-finite mass".into()));
        }
        let total: f64 = mass.iter().sum();
        if (total - 1.0).abs() > PMF_TOL {
            return Err(WalkError::InvalidPmf(format!(
                "masses sum to {total}, not 1"
            )));
        }
        let mut pmf = Pmf {
            lo,
            mass,
            cumulative: Vec::new(),
        };
        pmf.rebuild_cumulative();
        Ok(pmf)
    }

    /// Build from raw nonnegative weights, normalizing exactly.
    pub fn from_weights(lo: i64, weights: &[f64]) -> Result<Pmf, WalkError> {
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(WalkError::InvalidPmf("zero total weight".into()));
        }
        Pmf::new(lo, weights.iter().map(|&w| w / total).collect())
    }

    fn rebuild_cumulative(&mut self) {
        let mut acc = 0.0;
        self.cumulative = self
            .mass
            .iter()
            .map(|&m| {
                acc += m;
                acc
            })
            .collect();
    }

    pub fn support(&self) -> (i64, i64) {
        (self.lo, self.lo + self.mass.len() as i64 - 1)
    }

    pub fn get(&self, x: i64) -> f64 {
        if x < self.lo {
            return 0.0;
        }
        self.mass.get((x - self.lo) as usize).copied().unwrap_or(0.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (i64, f64)> + '_ {
        self.mass
            .iter()
            .enumerate()
            .map(move |(i, &m)| (self.lo + i as i64, m))
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> i64 {
        let u: f64 = rng.random();
        let i = self.cumulative.partition_point(|&c| c < u);
        self.lo + i.min(self.mass.len() - 1) as i64
    }

    pub fn mean(&self) -> f64 {
        self.iter().map(|(x, m)| x as f64 * m).sum()
    }

    pub fn is_symmetric(&self, tol: f64) -> Option<i64> {
        let (lo, hi) = self.support();
        for x in lo.min(-hi)..=hi.max(-lo) {
            if (self.get(x) - self.get(-x)).abs() > tol {
                return Some(x);
            }
        }
        None
    }

    /// Total variation distance `sup_A |p(A) - q(A)| = (1/2) sum |p - q|`.
    pub fn tv_distance(&self, other: &Pmf) -> f64 {
        let lo = self.lo.min(other.lo);
        let hi = self.support().1.max(other.support().1);
        let mut acc = 0.0;
        for x in lo..=hi {
            acc += (self.get(x) - other.get(x)).abs();
        }
        acc / 2.0
    }

    /// First支 atom violating `mass(x) < F * exp(-f|x|)`, if any.
    pub fn tail_violation(&self, f: f64, big_f: f64) -> Option<i64> {
        self.iter()
            .find(|&(x, m)| m >= big_f * (-f * x.abs() as f64).exp())
            .map(|(x, _)| x)
    }

    /// Distribution of the sum of one step from `self` and one from `other`.
    pub fn convolve(&self, other: &Pmf) -> Pmf {
        let lo = self.lo + other.lo;
        let n = self.mass.len() + other.mass.len() - 1;
        let mut mass = vec![0.0; n];
        for (i, &a) in self.mass.iter().enumerate() {
            for (j, &b) in other.mass.iter().enumerate() {
                mass[i + j] += a * b;
            }
        }
        let mut pmf = Pmf {
            lo,
            mass,
            cumulative: Vec::new(),
        };
        pmf.rebuild_cumulative();
        pmf
    }

    /// n-fold convolution of `self` (the law of the n-step walk from 0).
    pub fn convolution_power(&self, n: usize) -> Pmf {
        assert!(n >= 1);
        let mut acc = self.clone();
        for _ in 1..n {
            acc = acc.convolve(self);
        }
        acc
    }
}

/// The pair `(pi, {pi_z})` with its certified constants.
///
/// `pi_z` is stored explicitly for `|z| <= z_cap` wherever it differs from
/// the base law; beyond the cap the family sets `pi_z := pi` exactly.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerturbedFamily {
    base: Pmf,
    perturbed: BTreeMap<i64, Pmf>,
    /// Tail certificate: every stored mass satisfies `m(x) < F e^{-f|x|}`.
    pub f_tail: f64,
    pub big_f: f64,
    /// Total variation certificate: `||pi_z - pi||_TV < G e^{-g|z|}`.
    pub g_tv: f64,
    pub big_g: f64,
    /// Half-width of the central interval `I = [-L, L]`, chosen so that
    /// `G e^{-gL} < 1`.
    pub l_cap: i64,
    pub z_cap: i64,
}

impl PerturbedFamily {
    pub fn new(
        base: Pmf,
        perturbed: BTreeMap<i64, Pmf>,
        f_tail: f64,
        big_f: f64,
        g_tv: f64,
        big_g: f64,
        l_cap: i64,
        z_cap: i64,
    ) -> PerturbedFamily {
        assert!(l_cap >= 1 && z_cap >= l_cap);
        PerturbedFamily {
            base,
            perturbed,
            f_tail,
            big_f,
            g_tv,
            big_g,
            l_cap,
            z_cap,
        }
    }

    pub fn base(&self) -> &Pmf {
        &self.base
    }

    pub fn stored(&self) -> &BTreeMap<i64, Pmf> {
        &self.perturbed
    }

    /// The step law at location `z` (the base law beyond the stored cap).
    pub fn pmf_at(&self, z: i64) -> &Pmf {
        self.perturbed.get(&z).unwrap_or(&self.base)
    }

    /// `epsilon_z`: 1 on `I`, `G e^{-g|z|}` outside.
    pub fn epsilon(&self, z: i64) -> f64 {
        if z.abs() <= self.l_cap {
            1.0
        } else {
            self.big_g * (-self.g_tv * z.abs() as f64).exp()
        }
    }

    pub fn in_interval(&self, z: i64) -> bool {
        z.abs() <= self.l_cap
    }

    /// `min_{x in I, x != 0} pi_x(-x)`: the one-step probability floor of
    /// jumping from inside `I` straight to 0.
    pub fn delta_floor(&self) -> f64 {
        (1..=self.l_cap)
            .flat_map(|x| [x, -x])
            .map(|x| self.pmf_at(x).get(-x))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct PmfJson<'a> {
            support: [i64; 2],
            mass: &'a [f64],
        }
        #[derive(Serialize)]
        struct FamilyJson<'a> {
            base: PmfJson<'a>,
            perturbed: BTreeMap<String, PmfJson<'a>>,
            constants: BTreeMap<&'static str, f64>,
        }
        fn enc(p: &Pmf) -> PmfJson<'_> {
            PmfJson {
                support: [p.support().0, p.support().1],
                mass: &p.mass,
            }
        }
        let doc = FamilyJson {
            base: enc(&self.base),
            perturbed: self
                .perturbed
                .iter()
                .map(|(z, p)| (z.to_string(), enc(p)))
                .collect(),
            constants: [
                ("f", self.f_tail),
                ("F", self.big_f),
                ("g", self.g_tv),
                ("G", self.big_g),
                ("L", self.l_cap as f64),
                ("z_cap", self.z_cap as f64),
            ]
            .into_iter()
            .collect(),
        };
        serde_json::to_string_pretty(&doc).unwrap()
    }

    pub fn from_json(text: &str) -> Result<PerturbedFamily, WalkError> {
        #[derive(Deserialize)]
        struct PmfJson {
            support: [i64; 2],
            mass: Vec<f64>,
        }
        #[derive(Deserialize)]
        struct FamilyJson {
            base: PmfJson,
            perturbed: BTreeMap<String, PmfJson>,
            constants: BTreeMap<String, f64>,
        }
        let doc: FamilyJson =
            serde_json::from_str(text).map_err(|e| WalkError::InvalidPmf(e.to_string()))?;
        let dec = |p: PmfJson| -> Result<Pmf, WalkError> {
            if p.support[1] - p.support[0] + 1 != p.mass.len() as i64 {
                return Err(WalkError::InvalidPmf("support/mass length mismatch".into()));
            }
            Pmf::new(p.support[0], p.mass)
        };
        let mut perturbed = BTreeMap::new();
        for (k, v) in doc.perturbed {
            let z: i64 = k
                .parse()
                .map_err(|_| WalkError::InvalidPmf(format!("bad z key {k}")))?;
            perturbed.insert(z, dec(v)?);
        }
        let c = |name: &str| -> Result<f64, WalkError> {
            doc.constants
                .get(name)
                .copied()
                .ok_or_else(|| WalkError::InvalidPmf(format!("missing constant {name}")))
        };
        Ok(PerturbedFamily::new(
            dec(doc.base)?,
            perturbed,
            c("f")?,
            c("F")?,
            c("g")?,
            c("G")?,
            c("L")? as i64,
            c("z_cap")? as i64,
        ))
    }
}

/// Outcome of checking one family assumption.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssumptionCheck {
    pub pass: bool,
    /// Human-readable witness of the first failure.
    pub witness: Option<String>,
}

impl AssumptionCheck {
    fn ok() -> AssumptionCheck {
        AssumptionCheck {
            pass: true,
            witness: None,
        }
    }

    fn fail(witness: String) -> AssumptionCheck {
        AssumptionCheck {
            pass: false,
            witness: Some(witness),
        }
    }
}

/// Pass/fail report for the four standing assumptions plus the interval
/// condition on `L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ValidationReport {
    /// The base law is symmetric.
    pub symm: AssumptionCheck,
    /// All stored masses are strictly positive on their supports, and every
    /// interval state can jump straight to 0.
    pub support: AssumptionCheck,
    /// All masses satisfy the exponential tail certificate.
    pub pitail: AssumptionCheck,
    /// Every stored law is within the certified total variation of the base.
    pub totvar: AssumptionCheck,
    /// `G e^{-gL} < 1`.
    pub l_condition: AssumptionCheck,
}

impl ValidationReport {
    pub fn all_pass(&self) -> bool {
        self.symm.pass
            && self.support.pass
            && self.pitail.pass
            && self.totvar.pass
            && self.l_condition.pass
    }
}

pub fn validate_family(family: &PerturbedFamily) -> ValidationReport {
    let symm = match family.base.is_symmetric(PMF_TOL) {
        None => AssumptionCheck::ok(),
        Some(x) => AssumptionCheck::fail(format!("base law asymmetric at x = {x}")),
    };
    let mut support = AssumptionCheck::ok();
    if let Some((x, _)) = family.base.iter().find(|&(_, m)| m <= 0.0) {
        support = AssumptionCheck::fail(format!("base mass vanishes at x = {x}"));
    }
    for (&z, pmf) in &family.perturbed {
        if support.pass {
            if let Some((x, _)) = pmf.iter().find(|&(_, m)| m <= 0.0) {
                support = AssumptionCheck::fail(format!("pi_{z} mass vanishes at x = {x}"));
            }
        }
    }
    if support.pass && family.delta_floor() <= 0.0 {
        support = AssumptionCheck::fail(
            "some interval state cannot jump straight to 0".into(),
        );
    }
    let mut pitail = AssumptionCheck::ok();
    if let Some(x) = family.base.tail_violation(family.f_tail, family.big_f) {
        pitail = AssumptionCheck::fail(format!("base tail bound fails at x = {x}"));
    }
    for (&z, pmf) in &family.perturbed {
        if pitail.pass {
            if let Some(x) = pmf.tail_violation(family.f_tail, family.big_f) {
                pitail = AssumptionCheck::fail(format!("pi_{z} tail bound fails at x = {x}"));
            }
        }
    }
    let mut totvar = AssumptionCheck::ok();
    for (&z, pmf) in &family.perturbed {
        if z == 0 {
            continue; // transitions from 0 are never taken
        }
        let tv = pmf.tv_distance(&family.base);
        let bound = family.big_g * (-family.g_tv * z.abs() as f64).exp();
        if tv >= bound {
            totvar = AssumptionCheck::fail(format!(
                "||pi_{z} - pi||_TV = {tv:.6} >= certified {bound:.6}"
            ));
            break;
        }
    }
    let l_condition = if family.big_g * (-family.g_tv * family.l_cap as f64).exp() < 1.0 {
        AssumptionCheck::ok()
    } else {
        AssumptionCheck::fail(format!(
            "G e^(-gL) = {} >= 1",
            family.big_g * (-family.g_tv * family.l_cap as f64).exp()
        ))
    };
    ValidationReport {
        symm,
        support,
        pitail,
        totvar,
        l_condition,
    }
}

/// The mixture decomposition at one location.
#[derive(Debug, Clone)]
pub struct Decomposition {
    pub z: i64,
    pub epsilon: f64,
    pub b1: Pmf,
    pub b2: Pmf,
    pub g_shared: Pmf,
}

impl Decomposition {
    /// Largest pointwise error of the two reconstruction identities
    /// `eps*b1 + (1-eps)*g = pi_z` and `eps*b2 + (1-eps)*g = pi`.
    pub fn reconstruction_error(&self, family: &PerturbedFamily) -> f64 {
        let pi_z = family.pmf_at(self.z);
        let pi = family.base();
        let lo = self.b1.support().0.min(self.g_shared.support().0) - 1;
        let hi = self.b1.support().1.max(self.g_shared.support().1) + 1;
        let mut worst = 0.0f64;
        for x in lo..=hi {
            let r1 = self.epsilon * self.b1.get(x) + (1.0 - self.epsilon) * self.g_shared.get(x);
            let r2 = self.epsilon * self.b2.get(x) + (1.0 - self.epsilon) * self.g_shared.get(x);
            worst = worst.max((r1 - pi_z.get(x)).abs());
            worst = worst.max((r2 - pi.get(x)).abs());
        }
        worst
    }
}

/// Decompose `pi_z` and `pi` over the shared component: the shared part is
/// the normalized pointwise minimum, which is always feasible when the
/// total variation certificate holds.
pub fn decompose(family: &PerturbedFamily, z: i64) -> Result<Decomposition, WalkError> {
    let pi_z = family.pmf_at(z);
    let pi = family.base();
    if family.in_interval(z) {
        // epsilon = 1 forces b1 = pi_z, b2 = pi; the shared component is
        // never drawn, emitted as the base law for definiteness.
        return Ok(Decomposition {
            z,
            epsilon: 1.0,
            b1: pi_z.clone(),
            b2: pi.clone(),
            g_shared: pi.clone(),
        });
    }
    let epsilon = family.epsilon(z);
    let lo = pi_z.support().0.min(pi.support().0);
    let hi = pi_z.support().1.max(pi.support().1);
    let h: Vec<f64> = (lo..=hi).map(|x| pi_z.get(x).min(pi.get(x))).collect();
    let h_mass: f64 = h.iter().sum();
    let tv = 1.0 - h_mass;
    if epsilon < tv {
        return Err(WalkError::EpsilonTooSmall { z, epsilon, tv });
    }
    let g_mass: Vec<f64> = h.iter().map(|&m| m / h_mass).collect();
    // Dividing the near-cancelling numerator by a tiny epsilon amplifies
    // rounding noise in the branch sums; renormalizing keeps the
    // reconstruction error at the epsilon * noise scale.
    let clamp = |v: f64| if v < 0.0 { 0.0 } else { v };
    let b1_mass: Vec<f64> = (lo..=hi)
        .zip(&g_mass)
        .map(|(x, &g)| clamp((pi_z.get(x) - (1.0 - epsilon) * g) / epsilon))
        .collect();
    let b2_mass: Vec<f64> = (lo..=hi)
        .zip(&g_mass)
        .map(|(x, &g)| clamp((pi.get(x) - (1.0 - epsilon) * g) / epsilon))
        .collect();
    Ok(Decomposition {
        z,
        epsilon,
        b1: Pmf::from_weights(lo, &b1_mass)?,
        b2: Pmf::from_weights(lo, &b2_mass)?,
        g_shared: Pmf::new(lo, g_mass)?,
    })
}

/// Precomputed decompositions for every reachable stored location.
pub struct DecompositionCache {
    by_z: BTreeMap<i64, Decomposition>,
    base_only: Decomposition,
    z_cap: i64,
}

impl DecompositionCache {
    pub fn build(family: &PerturbedFamily) -> Result<DecompositionCache, WalkError> {
        let mut by_z = BTreeMap::new();
        for z in -family.z_cap..=family.z_cap {
            if z == 0 {
                continue;
            }
            by_z.insert(z, decompose(family, z)?);
        }
        // Beyond the cap pi_z == pi exactly: b1 = b2 = g = pi.
        let base_only = Decomposition {
            z: i64::MAX,
            epsilon: f64::NAN,
            b1: family.base().clone(),
            b2: family.base().clone(),
            g_shared: family.base().clone(),
        };
        Ok(DecompositionCache {
            by_z,
            base_only,
            z_cap: family.z_cap,
        })
    }

    pub fn get(&self, z: i64) -> &Decomposition {
        if z.abs() <= self.z_cap {
            self.by_z.get(&z).expect("cached decomposition")
        } else {
            &self.base_only
        }
    }
}

/// One transition of the coupled chain from `x != 0`: with probability
/// `epsilon_x` emit bit 1 and a step from `b1_x`, otherwise bit 0 and a step
/// from the shared component.
pub fn step_chain(
    x: i64,
    family: &PerturbedFamily,
    cache: &DecompositionCache,
    rng: &mut ChaCha8Rng,
) -> (i64, bool) {
    debug_assert!(x != 0, "state 0 is frozen; the chain never steps from it");
    let eps = family.epsilon(x);
    let bit = eps >= 1.0 || rng.random::<f64>() < eps;
    let d = cache.get(x);
    let step = if bit {
        d.b1.sample(rng)
    } else {
        d.g_shared.sample(rng)
    };
    (x + step, bit)
}

/// A sampled trajectory of the coupled pair `(X, Y)`.
#[derive(Debug, Clone)]
pub struct CoupledPath {
    /// `X_0..X_n`: the perturbed chain (frozen at 0).
    pub x: Vec<i64>,
    /// `Z_1..Z_n`: the decomposition bits.
    pub z: Vec<bool>,
    /// `Y_0..Y_n`: the symmetric walk produced by the coupling.
    pub y: Vec<i64>,
    /// First index `n >= 1` with `Z_n = 1`, if reached.
    pub t: Option<usize>,
}

impl CoupledPath {
    /// The coupling identity: `Y_n = X_n` strictly before `T`.
    pub fn identity_holds(&self) -> bool {
        let t = self.t.unwrap_or(self.x.len());
        (0..t).all(|n| self.x[n] == self.y[n])
    }
}

/// Sample the coupled pair for `n_steps` transitions.
///
/// Before `T` the walk copies the chain; at `T` it branches to
/// `X_{T-1} + Psi` with `Psi ~ b2_{X_{T-1}}` and then adds independent
/// base-law increments.  Marginally `Y` is a base-law walk from `x0`.
pub fn sample_coupled_path(
    family: &PerturbedFamily,
    cache: &DecompositionCache,
    x0: i64,
    n_steps: usize,
    rng: &mut ChaCha8Rng,
) -> CoupledPath {
    assert!(n_steps >= 1);
    let mut x = Vec::with_capacity(n_steps + 1);
    let mut z = Vec::with_capacity(n_steps);
    let mut y = Vec::with_capacity(n_steps + 1);
    x.push(x0);
    y.push(x0);
    let mut t: Option<usize> = None;
    for n in 1..=n_steps {
        let prev = x[n - 1];
        let (next, bit) = if prev == 0 {
            // Frozen at 0; epsilon_0 = 1 makes the bit deterministically 1,
            // and the b1-step is never needed once Y has branched.
            (0, true)
        } else {
            step_chain(prev, family, cache, rng)
        };
        x.push(next);
        z.push(bit);
        if t.is_none() && bit {
            t = Some(n);
            // Y branches: X_{T-1} + Psi_{X_{T-1}}.
            let psi = cache.get_b2_or_base(prev, family).sample(rng);
            y.push(x[n - 1] + psi);
        } else if t.is_none() {
            y.push(next);
        } else {
            // Independent base-law increments after T.
            y.push(y[n - 1] + family.base().sample(rng));
        }
    }
    CoupledPath { x, z, y, t }
}

impl DecompositionCache {
    fn get_b2_or_base<'a>(&'a self, z: i64, family: &'a PerturbedFamily) -> &'a Pmf {
        if z == 0 {
            // b2_0 would reconstruct the base law; epsilon_0 = 1 pins it.
            family.base()
        } else {
            &self.get(z).b2
        }
    }
}

/// One cell of a hitting-tail estimate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailCell {
    pub n: usize,
    pub estimate: f64,
    pub stderr: f64,
}

/// Monte Carlo estimate of `P_{x0}(H_0 > N)` for each `N` in `n_grid`.
/// All entries are read off the same paths, run to `max(n_grid)`.
pub fn hitting_tail_mc(
    family: &PerturbedFamily,
    cache: &DecompositionCache,
    x0: i64,
    n_grid: &[usize],
    replicas: usize,
    master_seed: u64,
) -> Vec<TailCell> {
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    if x0 == 0 {
        return n_grid
            .iter()
            .map(|&n| TailCell {
                n,
                estimate: 0.0,
                stderr: 0.0,
            })
            .collect();
    }
    let mut survived = vec![0usize; n_grid.len()];
    for rep in 0..replicas {
        let mut rng = seeding::rng(master_seed, &[10, rep as u64]);
        let mut x = x0;
        let mut hit: Option<usize> = None;
        for n in 1..=max_n {
            let (next, _) = step_chain(x, family, cache, &mut rng);
            x = next;
            if x == 0 {
                hit = Some(n);
                break;
            }
        }
        for (i, &n) in n_grid.iter().enumerate() {
            if hit.map_or(true, |h| h > n) {
                survived[i] += 1;
            }
        }
    }
    n_grid
        .iter()
        .zip(survived)
        .map(|(&n, s)| {
            let p = s as f64 / replicas as f64;
            TailCell {
                n,
                estimate: p,
                stderr: (p * (1.0 - p) / replicas as f64).sqrt(),
            }
        })
        .collect()
}

/// Boundary handling for the truncated operator oracle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    /// Mass that would leave `[-W, W]` is removed and reported as leak.
    Absorbing,
    /// Mass that would leave is re-deposited on the boundary site.
    Reflecting,
}

#[derive(Debug, Clone)]
pub struct OracleTail {
    pub cells: Vec<TailCell>,
    /// Total probability that left the truncation window (absorbing case).
    pub leak: f64,
}

/// Exact `P_{x0}(H_0 > N)` for the chain truncated to `[-W, W]`, by `N`
/// applications of the substochastic transition operator with state 0
/// removed.  The reported leak bounds the truncation error from above.
pub fn oracle_hitting(
    family: &PerturbedFamily,
    w_cap: i64,
    x0: i64,
    n_grid: &[usize],
    boundary: Boundary,
    leak_tol: f64,
) -> Result<OracleTail, WalkError> {
    assert!(w_cap >= 1);
    assert!(x0.abs() <= w_cap);
    let size = (2 * w_cap + 1) as usize;
    let idx = |x: i64| (x + w_cap) as usize;
    let max_n = n_grid.iter().copied().max().unwrap_or(0);
    let mut v = vec![0.0f64; size];
    let mut leak = 0.0f64;
    if x0 != 0 {
        v[idx(x0)] = 1.0;
    }
    let mut cells = Vec::with_capacity(n_grid.len());
    let record = |n: usize, v: &[f64], cells: &mut Vec<TailCell>| {
        if n_grid.contains(&n) {
            cells.push(TailCell {
                n,
                estimate: v.iter().sum(),
                stderr: 0.0,
            });
        }
    };
    record(0, &v, &mut cells);
    let mut next = vec![0.0f64; size];
    for n in 1..=max_n {
        next.iter_mut().for_each(|m| *m = 0.0);
        for x in -w_cap..=w_cap {
            let p = v[idx(x)];
            if p == 0.0 || x == 0 {
                continue;
            }
            for (step, m) in family.pmf_at(x).iter() {
                if m == 0.0 {
                    continue;
                }
                let target = x + step;
                if target == 0 {
                    continue; // absorbed at the origin
                }
                if target.abs() > w_cap {
                    match boundary {
                        Boundary::Absorbing => leak += p * m,
                        Boundary::Reflecting => {
                            next[idx(target.signum() * w_cap)] += p * m;
                        }
                    }
                } else {
                    next[idx(target)] += p * m;
                }
            }
        }
        std::mem::swap(&mut v, &mut next);
        record(n, &v, &mut cells);
    }
    if leak > leak_tol {
        return Err(WalkError::WindowLeakTooLarge {
            leak,
            tol: leak_tol,
        });
    }
    Ok(OracleTail { cells, leak })
}

/// Per-quantity summaries from the stopping-time suite.
#[derive(Debug, Clone, Serialize)]
pub struct StoppingSummary {
    pub x0: i64,
    pub replicas: usize,
    /// Survival curves `P(q > n)` on the grid, per quantity.
    pub n_grid: Vec<usize>,
    pub t_tail: Vec<f64>,
    pub t_prime_tail: Vec<f64>,
    pub h_interval_tail: Vec<f64>,
    pub tau1_tail: Vec<f64>,
    pub lambda1_tail: Vec<f64>,
    /// `E(|X_{tau_1}|; tau_1 < H_I)`.
    pub exp_abs_x_tau1_before_hi: f64,
    /// `E(|X_{H_neg}|; H_neg < H_0)` where `H_neg` is the first entry into
    /// the negative half-line.
    pub exp_abs_x_hneg_before_h0: f64,
    /// `min_{x in I} pi_x(-x)`: the one-step floor used by the geometric
    /// bound on `lambda_1`.
    pub delta_floor: f64,
}

/// Monte Carlo estimates of the stopping-time quantities: `T` (first bit 1),
/// `T'` (first index having visited both `I` and its complement), `H_I`,
/// `tau_1 = T ^ H_I`, `lambda_1 = T' ^ H_0`, plus the two expectations.
pub fn stopping_time_suite(
    family: &PerturbedFamily,
    cache: &DecompositionCache,
    x0: i64,
    n_grid: &[usize],
    max_steps: usize,
    replicas: usize,
    master_seed: u64,
) -> StoppingSummary {
    let mut t_ct = vec![0usize; n_grid.len()];
    let mut tp_ct = vec![0usize; n_grid.len()];
    let mut hi_ct = vec![0usize; n_grid.len()];
    let mut tau1_ct = vec![0usize; n_grid.len()];
    let mut l1_ct = vec![0usize; n_grid.len()];
    let mut sum_tau1 = 0.0f64;
    let mut sum_hneg = 0.0f64;
    for rep in 0..replicas {
        let mut rng = seeding::rng(master_seed, &[11, rep as u64]);
        let mut x = x0;
        let mut visited_i = family.in_interval(x0);
        let mut visited_ic = !family.in_interval(x0);
        let mut t: Option<usize> = None;
        let mut t_prime: Option<usize> = if visited_i && visited_ic {
            Some(0)
        } else {
            None
        };
        let mut h_i: Option<usize> = if family.in_interval(x0) { Some(0) } else { None };
        let mut h_0: Option<usize> = if x0 == 0 { Some(0) } else { None };
        let mut h_neg: Option<usize> = if x0 < 0 { Some(0) } else { None };
        let mut x_at_t: Option<i64> = None;
        let mut x_at_hneg: Option<i64> = None;
        for n in 1..=max_steps {
            if x == 0 {
                break;
            }
            let (next, bit) = step_chain(x, family, cache, &mut rng);
            x = next;
            if bit && t.is_none() {
                t = Some(n);
                x_at_t = Some(x);
            }
            if family.in_interval(x) {
                visited_i = true;
                if h_i.is_none() {
                    h_i = Some(n);
                }
            } else {
                visited_ic = true;
            }
            if visited_i && visited_ic && t_prime.is_none() {
                t_prime = Some(n);
            }
            if x == 0 && h_0.is_none() {
                h_0 = Some(n);
            }
            if x < 0 && h_neg.is_none() {
                h_neg = Some(n);
                x_at_hneg = Some(x);
            }
            let all_done = t.is_some() && t_prime.is_some() && h_i.is_some() && h_0.is_some();
            if all_done {
                break;
            }
        }
        let tau1 = min_opt(t, h_i);
        let lambda1 = min_opt(t_prime, h_0);
        for (i, &n) in n_grid.iter().enumerate() {
            if t.map_or(true, |v| v > n) {
                t_ct[i] += 1;
            }
            if t_prime.map_or(true, |v| v > n) {
                tp_ct[i] += 1;
            }
            if h_i.map_or(true, |v| v > n) {
                hi_ct[i] += 1;
            }
            if tau1.map_or(true, |v| v > n) {
                tau1_ct[i] += 1;
            }
            if lambda1.map_or(true, |v| v > n) {
                l1_ct[i] += 1;
            }
        }
        // tau_1 < H_I happens exactly when T fires strictly first.
        if let (Some(tv), Some(xt)) = (t, x_at_t) {
            if h_i.map_or(true, |h| tv < h) {
                sum_tau1 += xt.abs() as f64;
            }
        }
        if let (Some(hn), Some(xn)) = (h_neg, x_at_hneg) {
            if h_0.map_or(true, |h| hn < h) {
                sum_hneg += xn.abs() as f64;
            }
        }
    }
    let frac = |c: Vec<usize>| -> Vec<f64> {
        c.into_iter().map(|v| v as f64 / replicas as f64).collect()
    };
    StoppingSummary {
        x0,
        replicas,
        n_grid: n_grid.to_vec(),
        t_tail: frac(t_ct),
        t_prime_tail: frac(tp_ct),
        h_interval_tail: frac(hi_ct),
        tau1_tail: frac(tau1_ct),
        lambda1_tail: frac(l1_ct),
        exp_abs_x_tau1_before_hi: sum_tau1 / replicas as f64,
        exp_abs_x_hneg_before_h0: sum_hneg / replicas as f64,
        delta_floor: family.delta_floor(),
    }
}

fn min_opt(a: Option<usize>, b: Option<usize>) -> Option<usize> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.min(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// Built-in families used by tests, experiments and the CLI.
pub mod presets {
    use super::*;

    /// Symmetric lazy core with geometric tails on `[-10, 10]`.
    pub fn lazy_base() -> Pmf {
        let mut w = vec![0.0; 21];
        let set = |w: &mut Vec<f64>, x: i64, v: f64| w[(x + 10) as usize] = v;
        set(&mut w, 0, 0.5);
        for k in 1..=10i64 {
            let v = if k == 1 { 0.2 } else { 0.05 * 0.4f64.powi(k as i32 - 2) };
            set(&mut w, k, v);
            set(&mut w, -k, v);
        }
        Pmf::from_weights(-10, &w).unwrap()
    }

    /// Zero perturbation: `pi_z = pi` everywhere.
    pub fn unperturbed() -> PerturbedFamily {
        PerturbedFamily::new(
            lazy_base(),
            BTreeMap::new(),
            0.9,
            1.1,
            0.5,
            0.5,
            2,
            64,
        )
    }

    /// A genuinely perturbed family: near the origin each law mixes in a
    /// one-step drift toward 0, with exponentially decaying weight.
    pub fn drifted() -> PerturbedFamily {
        let base = lazy_base();
        let (lo, hi) = base.support();
        let mut perturbed = BTreeMap::new();
        let z_cap = 64i64;
        for z in -z_cap..=z_cap {
            if z == 0 {
                continue;
            }
            let beta = 0.9 * (-0.35 * (z.abs() - 1) as f64).exp();
            if beta < 1e-14 {
                continue;
            }
            let shift = if z > 0 { 1 } else { -1 };
            // q(w) = base(w + shift): one extra step toward the origin.
            let mut mass = Vec::new();
            let q_lo = lo - shift;
            for w in q_lo.min(lo)..=(hi - shift).max(hi) {
                let m = (1.0 - beta) * base.get(w) + beta * base.get(w + shift);
                mass.push(m);
            }
            let pmf_lo = q_lo.min(lo);
            // Trim zero edges so positivity holds on the stored support.
            let mut lo_trim = 0;
            while mass[lo_trim] <= 0.0 {
                lo_trim += 1;
            }
            let mut hi_trim = mass.len();
            while mass[hi_trim - 1] <= 0.0 {
                hi_trim -= 1;
            }
            let pmf = Pmf::new(pmf_lo + lo_trim as i64, mass[lo_trim..hi_trim].to_vec()).unwrap();
            perturbed.insert(z, pmf);
        }
        PerturbedFamily::new(base, perturbed, 0.9, 1.1, 0.35, 0.95, 3, z_cap)
    }

    pub fn by_name(name: &str) -> Option<PerturbedFamily> {
        match name {
            "unperturbed" => Some(unperturbed()),
            "drifted" => Some(drifted()),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_pass_validation() {
        for name in ["unperturbed", "drifted"] {
            let fam = presets::by_name(name).unwrap();
            let report = validate_family(&fam);
            assert!(report.all_pass(), "{name}: {report:?}");
        }
    }

    #[test]
    fn asymmetric_base_fails_symm() {
        let base = Pmf::from_weights(-1, &[0.4, 0.0, 0.6]).unwrap();
        let fam = PerturbedFamily::new(base, BTreeMap::new(), 1.0, 2.0, 0.5, 0.5, 1, 4);
        let report = validate_family(&fam);
        assert!(!report.symm.pass);
        assert!(report.symm.witness.is_some());
    }

    #[test]
    fn interval_decomposition_is_pinned() {
        let fam = presets::drifted();
        for z in [-3, -1, 1, 2, 3] {
            let d = decompose(&fam, z).unwrap();
            assert_eq!(d.epsilon, 1.0);
            assert_eq!(&d.b1, fam.pmf_at(z));
            assert_eq!(&d.b2, fam.base());
        }
    }

    #[test]
    fn identical_laws_give_equal_branches() {
        let fam = presets::unperturbed();
        let d = decompose(&fam, 7).unwrap();
        assert!(d.epsilon < 1.0);
        assert_eq!(d.b1, d.b2);
        assert!(d.reconstruction_error(&fam) < PMF_TOL);
    }

    #[test]
    fn reconstruction_identities_hold_for_all_z() {
        let fam = presets::drifted();
        for z in -20..=20i64 {
            if z == 0 {
                continue;
            }
            let d = decompose(&fam, z).unwrap();
            assert!(
                d.reconstruction_error(&fam) < PMF_TOL,
                "z = {z}: error {}",
                d.reconstruction_error(&fam)
            );
        }
    }

    #[test]
    fn chain_marginal_matches_pi_z() {
        // Goodness of fit of one-step transitions at 3 SE per atom.
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        let n = 200_000usize;
        for &x in &[1i64, 5, 9] {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            let mut rng = seeding::rng(4242, &[x as u64]);
            for _ in 0..n {
                let (next, _) = step_chain(x, &fam, &cache, &mut rng);
                *counts.entry(next - x).or_default() += 1;
            }
            let law = fam.pmf_at(x);
            for (w, p) in law.iter() {
                let got = counts.get(&w).copied().unwrap_or(0) as f64 / n as f64;
                let se = (p * (1.0 - p) / n as f64).sqrt();
                assert!(
                    (got - p).abs() <= 3.5 * se + 1e-9,
                    "x {x} w {w}: got {got}, want {p} +- {se}"
                );
            }
        }
    }

    #[test]
    fn bit_is_forced_inside_interval() {
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        let mut rng = seeding::rng(7, &[]);
        for _ in 0..200 {
            let (_, bit) = step_chain(2, &fam, &cache, &mut rng);
            assert!(bit);
        }
    }

    #[test]
    fn coupled_identity_holds_on_every_path() {
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        for rep in 0..500u64 {
            let mut rng = seeding::rng(99, &[rep]);
            let path = sample_coupled_path(&fam, &cache, 6, 60, &mut rng);
            assert!(path.identity_holds(), "rep {rep}");
        }
    }

    #[test]
    fn coupled_walk_matches_exact_convolution() {
        // Distribution of Y_n against the n-fold convolution, 3.5 SE per atom.
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        let reps = 120_000usize;
        let x0 = 4i64;
        for &n in &[1usize, 2, 5] {
            let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
            for rep in 0..reps {
                let mut rng = seeding::rng(1234, &[n as u64, rep as u64]);
                let path = sample_coupled_path(&fam, &cache, x0, n, &mut rng);
                *counts.entry(path.y[n]).or_default() += 1;
            }
            let law = fam.base().convolution_power(n);
            for (w, p) in law.iter() {
                if p < 1e-7 {
                    continue;
                }
                let got = counts.get(&(x0 + w)).copied().unwrap_or(0) as f64 / reps as f64;
                let se = (p * (1.0 - p) / reps as f64).sqrt();
                assert!(
                    (got - p).abs() <= 3.5 * se + 1e-9,
                    "n {n} w {w}: got {got}, want {p} +- {se}"
                );
            }
        }
    }

    #[test]
    fn tail_from_origin_is_zero() {
        let fam = presets::unperturbed();
        let cache = DecompositionCache::build(&fam).unwrap();
        let cells = hitting_tail_mc(&fam, &cache, 0, &[1, 8], 100, 5);
        assert!(cells.iter().all(|c| c.estimate == 0.0));
    }

    #[test]
    fn oracle_one_step_arithmetic() {
        // P_{x0}(H_0 > 1) = 1 - pi_{x0}(-x0).
        let fam = presets::drifted();
        for &x0 in &[1i64, 2, 5] {
            let out = oracle_hitting(&fam, 64, x0, &[1], Boundary::Absorbing, 1e-9).unwrap();
            let want = 1.0 - fam.pmf_at(x0).get(-x0);
            assert!((out.cells[0].estimate - want).abs() < 1e-12, "x0 {x0}");
        }
    }

    #[test]
    fn oracle_two_step_lazy_hand_value() {
        // Pure lazy +-1 walk with hold 1/2: from 1,
        // P(H_0 > 2) = 1 - [pi(-1) + pi(0) pi(-1) + pi(1) pi(-2)] = 0.625.
        let lazy = Pmf::new(-1, vec![0.25, 0.5, 0.25]).unwrap();
        let fam = PerturbedFamily::new(lazy, BTreeMap::new(), 1.0, 2.0, 0.5, 0.5, 1, 4);
        let out = oracle_hitting(&fam, 16, 1, &[2], Boundary::Absorbing, 1e-12).unwrap();
        assert!((out.cells[0].estimate - 0.625).abs() < 1e-12);
    }

    #[test]
    fn oracle_tail_is_nonincreasing() {
        let fam = presets::drifted();
        let grid: Vec<usize> = vec![1, 2, 4, 8, 16, 32];
        let out = oracle_hitting(&fam, 128, 3, &grid, Boundary::Absorbing, 1e-9).unwrap();
        for w in out.cells.windows(2) {
            assert!(w[1].estimate <= w[0].estimate + 1e-15);
        }
    }

    #[test]
    fn oracle_leak_is_detected() {
        let fam = presets::drifted();
        let err = oracle_hitting(&fam, 4, 3, &[64], Boundary::Absorbing, 1e-12).unwrap_err();
        assert!(matches!(err, WalkError::WindowLeakTooLarge { .. }));
        // Reflecting boundaries keep all mass inside.
        let out = oracle_hitting(&fam, 4, 3, &[64], Boundary::Reflecting, 1e-12).unwrap();
        assert_eq!(out.leak, 0.0);
    }

    #[test]
    fn mc_tail_matches_oracle() {
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        let grid = [8usize, 32];
        let mc = hitting_tail_mc(&fam, &cache, 4, &grid, 40_000, 77);
        let exact = oracle_hitting(&fam, 256, 4, &grid, Boundary::Absorbing, 1e-9).unwrap();
        for (m, e) in mc.iter().zip(exact.cells.iter()) {
            assert!(
                (m.estimate - e.estimate).abs() <= 3.0 * m.stderr + 1e-9,
                "n {}: mc {} oracle {}",
                m.n,
                m.estimate,
                e.estimate
            );
        }
    }

    #[test]
    fn stopping_suite_interval_start() {
        let fam = presets::drifted();
        let cache = DecompositionCache::build(&fam).unwrap();
        let s = stopping_time_suite(&fam, &cache, 2, &[0, 1, 4], 200, 2_000, 3);
        // x0 in I: H_I = 0 and tau_1 = 0 on every path.
        let zero_idx = s.n_grid.iter().position(|&n| n == 0).unwrap();
        assert_eq!(s.h_interval_tail[zero_idx], 0.0);
        assert_eq!(s.tau1_tail[zero_idx], 0.0);
        assert!(s.delta_floor > 0.0);
    }

    #[test]
    fn family_json_round_trip() {
        let fam = presets::drifted();
        let text = fam.to_json();
        let back = PerturbedFamily::from_json(&text).unwrap();
        assert_eq!(fam.base(), back.base());
        assert_eq!(fam.stored().len(), back.stored().len());
        assert_eq!(fam.l_cap, back.l_cap);
        for (z, p) in fam.stored() {
            assert_eq!(p, back.stored().get(z).unwrap(), "z = {z}");
        }
    }
}
