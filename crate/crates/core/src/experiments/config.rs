//! Experiment configuration: JSON-loadable, validated, with automatic
//! window sizing and the supercriticality sanity check.

use std::collections::BTreeMap;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::forward::{evolve_one_type, OneTypeConfig};
use crate::harris::{HarrisConstruction, HarrisError, Window};
use crate::kernel::{Kernel, KernelError};
use crate::seeding;
use crate::walk::WalkError;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    ConfigInvalid(String),
    #[error(
        "rate lambda = {lambda} looks subcritical: single-site survival fraction {survival:.3} \
         at horizon 30 is below 0.3; pick a comfortably supercritical rate (the default is 4.0)"
    )]
    NotSupercritical { lambda: f64, survival: f64 },
    #[error("reports cannot be pooled: {0}")]
    SchemaMismatch(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Harris(#[from] HarrisError),
    #[error(transparent)]
    Walk(#[from] WalkError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    Extinction,
    Survival,
    InterfaceTightness,
    InversionTightness,
    DensityDecay,
    CoalescenceTail,
    EdgeSpeed,
    InterfaceEvent,
    RwalkTail,
}

impl ExperimentKind {
    pub fn name(&self) -> &'static str {
        match self {
            ExperimentKind::Extinction => "extinction",
            ExperimentKind::Survival => "survival",
            ExperimentKind::InterfaceTightness => "interface_tightness",
            ExperimentKind::InversionTightness => "inversion_tightness",
            ExperimentKind::DensityDecay => "density_decay",
            ExperimentKind::CoalescenceTail => "coalescence_tail",
            ExperimentKind::EdgeSpeed => "edge_speed",
            ExperimentKind::InterfaceEvent => "interface_event",
            ExperimentKind::RwalkTail => "rwalk_tail",
        }
    }
}

fn default_lambda() -> f64 {
    4.0
}

fn default_margin() -> f64 {
    30.0
}

fn default_replicas() -> usize {
    1000
}

/// A replicated experiment campaign.
///
/// Only `kind` and `master_seed` are mandatory; every other field has a
/// kind-appropriate default, and the effective values are echoed into the
/// report.  The file format is plain JSON with these exact field names.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    /// Infection rate; must be comfortably supercritical (user obligation,
    /// checked by a pre-run sanity simulation, never estimated).
    #[serde(default = "default_lambda")]
    pub lambda: f64,
    /// Displacement -> weight map; empty means nearest-neighbour (or the
    /// uniform range-2 kernel for the interface kinds, which need range > 1).
    #[serde(default)]
    pub kernel: BTreeMap<i64, f64>,
    /// Explicit window; sized automatically from the speed allowance when
    /// absent.
    #[serde(default)]
    pub window: Option<[i64; 2]>,
    #[serde(default)]
    pub horizon: Option<f64>,
    /// Censoring margin standing in for "survives forever".
    #[serde(default = "default_margin")]
    pub margin: f64,
    #[serde(default)]
    pub t_grid: Option<Vec<f64>>,
    #[serde(default)]
    pub l_grid: Option<Vec<i64>>,
    /// Truncation levels (density decay) or step counts (rwalk tails).
    #[serde(default)]
    pub n_grid: Option<Vec<u64>>,
    /// Lower dual levels for the interface event.
    #[serde(default)]
    pub s_grid: Option<Vec<f64>>,
    /// Pair separations for the coalescence tail.
    #[serde(default)]
    pub sep_grid: Option<Vec<i64>>,
    /// Interval lengths (survival) or edge thresholds (edge speed).
    #[serde(default)]
    pub k_grid: Option<Vec<i64>>,
    #[serde(default)]
    pub x: Option<i64>,
    #[serde(default)]
    pub y: Option<i64>,
    /// Initial half-span of the confined type in the extinction experiment.
    #[serde(default)]
    pub k: Option<i64>,
    /// Slope of the linear edge bound in the edge-speed experiment.
    #[serde(default)]
    pub beta: Option<f64>,
    /// Cone slope, reserved for barrier-flavoured configurations.
    #[serde(default)]
    pub rho: Option<f64>,
    /// Offset `t - s` for the interface event.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Perturbed-family preset name ("unperturbed" / "drifted") or a path to
    /// a family JSON file.
    #[serde(default)]
    pub family: Option<String>,
    /// Half-width of the observation core for the dual-census kinds.
    #[serde(default)]
    pub core_half: Option<i64>,
    #[serde(default = "default_replicas")]
    pub replicas: usize,
    pub master_seed: u64,
    /// Speed allowance controlling window sizing; defaults to `3 * lambda * R`.
    #[serde(default)]
    pub speed_allowance: Option<f64>,
    /// Skip the supercriticality sanity simulation (unit tests only).
    #[serde(default)]
    pub skip_supercritical_check: bool,
}

impl ExperimentConfig {
    pub fn new(kind: ExperimentKind, master_seed: u64) -> ExperimentConfig {
        ExperimentConfig {
            kind,
            lambda: default_lambda(),
            kernel: BTreeMap::new(),
            window: None,
            horizon: None,
            margin: default_margin(),
            t_grid: None,
            l_grid: None,
            n_grid: None,
            s_grid: None,
            sep_grid: None,
            k_grid: None,
            x: None,
            y: None,
            k: None,
            beta: None,
            rho: None,
            dt: None,
            family: None,
            core_half: None,
            replicas: default_replicas(),
            master_seed,
            speed_allowance: None,
            skip_supercritical_check: false,
        }
    }

    pub fn from_json(text: &str) -> Result<ExperimentConfig, ExperimentError> {
        serde_json::from_str(text).map_err(|e| ExperimentError::ConfigInvalid(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).unwrap()
    }

    /// Apply a `key=value` override (CLI inline overrides win over file
    /// values).
    pub fn apply_override(&mut self, key: &str, value: &str) -> Result<(), ExperimentError> {
        let mut doc: serde_json::Value = serde_json::to_value(&*self).unwrap();
        let parsed: serde_json::Value = serde_json::from_str(value)
            .unwrap_or_else(|_| serde_json::Value::String(value.to_string()));
        doc.as_object_mut()
            .unwrap()
            .insert(key.to_string(), parsed);
        *self = serde_json::from_value(doc)
            .map_err(|e| ExperimentError::ConfigInvalid(format!("override {key}: {e}")))?;
        Ok(())
    }

    pub fn build_kernel(&self) -> Result<Kernel, ExperimentError> {
        if self.kernel.is_empty() {
            let needs_wide_range = matches!(
                self.kind,
                ExperimentKind::InterfaceTightness | ExperimentKind::InversionTightness
            );
            return Ok(if needs_wide_range {
                Kernel::uniform(2)
            } else {
                Kernel::nearest_neighbour()
            });
        }
        Ok(Kernel::build(&self.kernel)?)
    }

    /// Effective speed allowance used for window sizing.
    pub fn kappa(&self, kernel: &Kernel) -> f64 {
        self.speed_allowance
            .unwrap_or(3.0 * self.lambda * kernel.range() as f64)
    }

    /// Resolve the window: the configured one (validated against the sizing
    /// rule) or an automatic one covering `core` plus the speed allowance.
    pub fn resolve_window(
        &self,
        kernel: &Kernel,
        horizon: f64,
        core: (i64, i64),
    ) -> Result<Window, ExperimentError> {
        let r = kernel.range() as i64;
        let reach = (self.kappa(kernel) * horizon).ceil() as i64;
        let needed = 2 * reach + 2 * r;
        if let Some([lo, hi]) = self.window {
            let w = Window::new(lo, hi);
            if (w.len() as i64) < needed {
                return Err(ExperimentError::ConfigInvalid(format!(
                    "window [{lo}, {hi}] narrower than the sizing rule 2*kappa*horizon + 2R = {needed}"
                )));
            }
            return Ok(w);
        }
        Ok(Window::new(core.0 - reach - r, core.1 + reach + r))
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.replicas < 100 {
            return Err(ExperimentError::ConfigInvalid(format!(
                "replicas = {} below the publication floor of 100",
                self.replicas
            )));
        }
        if !(self.lambda > 0.0) {
            return Err(ExperimentError::ConfigInvalid("lambda must be positive".into()));
        }
        if !(self.margin > 0.0) {
            return Err(ExperimentError::ConfigInvalid("margin must be positive".into()));
        }
        Ok(())
    }

    /// The supercriticality sanity check: the single-site survival fraction
    /// at horizon 30 must exceed 0.3, otherwise the run aborts with
    /// guidance.  Results are cached per (lambda, kernel).
    pub fn ensure_supercritical(&self, kernel: &Kernel) -> Result<(), ExperimentError> {
        if self.skip_supercritical_check {
            return Ok(());
        }
        static CACHE: Mutex<Option<BTreeMap<(u64, String), f64>>> = Mutex::new(None);
        let key = (
            self.lambda.to_bits(),
            format!("{:?}", kernel.entries()),
        );
        {
            let cache = CACHE.lock().unwrap();
            if let Some(map) = cache.as_ref() {
                if let Some(&survival) = map.get(&key) {
                    return check_threshold(self.lambda, survival);
                }
            }
        }
        let survival = single_site_survival_fraction(kernel, self.lambda);
        let mut cache = CACHE.lock().unwrap();
        cache
            .get_or_insert_with(BTreeMap::new)
            .insert(key, survival);
        check_threshold(self.lambda, survival)
    }
}

fn check_threshold(lambda: f64, survival: f64) -> Result<(), ExperimentError> {
    if survival > 0.3 {
        Ok(())
    } else {
        Err(ExperimentError::NotSupercritical { lambda, survival })
    }
}

fn single_site_survival_fraction(kernel: &Kernel, lambda: f64) -> f64 {
    let horizon = 30.0;
    let reach = (3.0 * lambda * kernel.range() as f64 * horizon).ceil() as i64;
    let r = kernel.range() as i64;
    let window = Window::new(-reach - r, reach + r);
    let replicas = 200usize;
    let survived = (0..replicas)
        .filter(|&rep| {
            let seed = seeding::derive(0x5c5c, &[rep as u64]);
            let h = HarrisConstruction::sample(kernel, lambda, window, horizon, seed)
                .expect("sanity-check sampling");
            let init = OneTypeConfig::from_sites(window, &[0]);
            evolve_one_type(&h, &init, horizon).value.count() > 0
        })
        .count();
    survived as f64 / replicas as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_defaults() {
        let text = r#"{"kind": "extinction", "master_seed": 7}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.kind, ExperimentKind::Extinction);
        assert_eq!(cfg.lambda, 4.0);
        assert_eq!(cfg.replicas, 1000);
        let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
        assert_eq!(back.master_seed, 7);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let text = r#"{"kind": "extinction", "master_seed": 7, "bogus": 1}"#;
        assert!(ExperimentConfig::from_json(text).is_err());
    }

    #[test]
    fn overrides_win() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Survival, 1);
        cfg.apply_override("replicas", "250").unwrap();
        assert_eq!(cfg.replicas, 250);
        cfg.apply_override("k_grid", "[2, 8]").unwrap();
        assert_eq!(cfg.k_grid, Some(vec![2, 8]));
        assert!(cfg.apply_override("replicas", "\"many\"").is_err());
    }

    #[test]
    fn replica_floor_is_enforced() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Extinction, 1);
        cfg.replicas = 10;
        assert!(matches!(
            cfg.validate(),
            Err(ExperimentError::ConfigInvalid(_))
        ));
    }

    #[test]
    fn window_sizing_rule() {
        let cfg = ExperimentConfig::new(ExperimentKind::Extinction, 1);
        let kernel = Kernel::nearest_neighbour();
        let w = cfg.resolve_window(&kernel, 10.0, (-2, 2)).unwrap();
        // kappa = 3 * lambda * R = 12, reach = 120, range = 1.
        assert_eq!(w, Window::new(-123, 123));
        let mut narrow = cfg.clone();
        narrow.window = Some([-10, 10]);
        assert!(narrow.resolve_window(&kernel, 10.0, (-2, 2)).is_err());
    }

    #[test]
    fn subcritical_rate_is_refused() {
        let mut cfg = ExperimentConfig::new(ExperimentKind::Extinction, 1);
        cfg.lambda = 0.2;
        let kernel = Kernel::nearest_neighbour();
        assert!(matches!(
            cfg.ensure_supercritical(&kernel),
            Err(ExperimentError::NotSupercritical { .. })
        ));
        // The default rate passes (and the result is cached).
        let cfg = ExperimentConfig::new(ExperimentKind::Extinction, 1);
        cfg.ensure_supercritical(&kernel).unwrap();
        cfg.ensure_supercritical(&kernel).unwrap();
    }
}
