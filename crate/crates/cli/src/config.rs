//! Experiment configuration: defaults, JSON documents, environment and flags,
//! merged in that order of increasing precedence.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use skewloc::dynamics::{DEFAULT_DC_CONSTANT, DEFAULT_DC_RANGE};
use skewloc::multiscale::DEFAULT_DELTA;
use skewloc::operator::{kernel_from_profile, negligible_band, parse_kernel_table};
use skewloc::rotor::{generic_values, resonant_values, KickRoute, StepOrder, DEFAULT_N_MAX};
use skewloc::{Frequency64, Guard64, HoppingKernel64, KernelProfile, TorusPoint64, C};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyKind {
    /// Verified against `‖kω‖ > c k⁻²` for `k ≤ dc_range`.
    Diophantine,
    Rational,
    Untagged,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    /// `amplitude · e^{−rate|n|}`; `rate` defaults to `2ρ`.
    Geometric { rate: Option<f64>, amplitude: f64 },
    SingleCosine { theta: f64, theta0: f64 },
    /// `(n, re, im)` rows.
    Table { entries: Vec<(i64, f64, f64)> },
}

impl Default for KernelSpec {
    fn default() -> Self {
        KernelSpec::Geometric {
            rate: None,
            amplitude: 0.5,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    pub seed: u64,
    pub stratified: bool,
    pub samples: usize,

    pub omega: f64,
    pub frequency: FrequencyKind,
    pub dc_constant: f64,
    pub dc_range: u64,
    /// Starting point; `None` coordinates are drawn from the seed.
    pub x1: Option<f64>,
    pub x2: Option<f64>,
    pub guard: f64,

    pub eps: f64,
    pub rho: f64,
    pub kernel: KernelSpec,
    pub band: Option<usize>,
    pub energy: f64,
    pub energies: Vec<f64>,
    pub condition_cap: f64,

    pub n: usize,
    pub m: usize,
    pub l0: usize,
    pub delta: f64,
    pub c3: Option<f64>,
    pub norm_cap: Option<f64>,
    pub minlen: Option<usize>,
    pub n0: usize,
    pub eps0: f64,
    pub scales: Vec<usize>,

    pub target_x1: f64,
    pub target_x2: f64,
    pub visit_eps: f64,
    pub visit_steps: u64,

    /// Rational frequencies compared against `omega` in `eig`.
    pub compare: Vec<f64>,
    pub compare_samples: usize,
    pub matrix: bool,

    pub a: f64,
    pub b: f64,
    pub kappa: f64,
    pub steps: usize,
    pub n_max: usize,
    pub order: StepOrder,
    pub route: KickRoute,
    pub a_values: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let mut a_values = resonant_values().to_vec();
        a_values.extend(generic_values());
        Self {
            experiment: String::new(),
            seed: 0,
            stratified: true,
            samples: 1000,
            omega: (5f64.sqrt() - 1.0) / 2.0,
            frequency: FrequencyKind::Diophantine,
            dc_constant: DEFAULT_DC_CONSTANT,
            dc_range: DEFAULT_DC_RANGE,
            x1: None,
            x2: None,
            guard: 1e-8,
            eps: 1e-3,
            rho: 1.0,
            kernel: KernelSpec::default(),
            band: None,
            energy: 0.0,
            energies: vec![0.0],
            condition_cap: 1e12,
            n: 256,
            m: 32,
            l0: 8,
            delta: DEFAULT_DELTA,
            c3: None,
            norm_cap: None,
            minlen: None,
            n0: 8,
            eps0: 1e-2,
            scales: vec![64, 128, 256],
            target_x1: 0.0,
            target_x2: 0.0,
            visit_eps: 0.05,
            visit_steps: 10_000,
            compare: Vec::new(),
            compare_samples: 8,
            matrix: false,
            a: generic_values()[0],
            b: 0.0,
            kappa: 5.0,
            steps: 100,
            n_max: DEFAULT_N_MAX,
            order: StepOrder::KickFirst,
            route: KickRoute::Grid,
            a_values,
        }
    }
}

impl ExperimentConfig {
    /// Reads a config document, or the `config` member of a run summary.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut value: serde_json::Value =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        if let Some(inner) = value.get_mut("config") {
            value = inner.take();
        }
        serde_json::from_value(value).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn canonical_json(&self) -> String {
        serde_json::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |msg: &str| Err(CliError::Config(msg.to_string()));
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return bad("rho must be positive");
        }
        if !(self.eps >= 0.0 && self.eps.is_finite()) {
            return bad("eps must be non-negative");
        }
        if !(self.guard > 0.0 && self.guard < 0.5) {
            return bad("guard must lie in (0, 1/2)");
        }
        if !(self.condition_cap > 1.0) {
            return bad("condition_cap must exceed 1");
        }
        if !self.omega.is_finite() || !self.energy.is_finite() || self.energies.iter().any(|e| !e.is_finite()) {
            return bad("omega and energies must be finite");
        }
        if self.n == 0 {
            return bad("n must be positive");
        }
        if self.samples == 0 {
            return bad("samples must be positive");
        }
        if !(self.eps0 > 0.0) {
            return bad("eps0 must be positive");
        }
        if self.scales.is_empty() || self.scales.contains(&0) {
            return bad("scales must be a non-empty list of positive sizes");
        }
        if !(self.kappa >= 0.0) || self.n_max == 0 {
            return bad("kappa must be non-negative and n_max positive");
        }
        for v in [self.x1, self.x2].into_iter().flatten() {
            if !v.is_finite() {
                return bad("starting point must be finite");
            }
        }
        self.kernel()?;
        if self.experiment != "dc-check" {
            self.frequency()?;
        }
        Ok(())
    }

    pub fn band(&self) -> usize {
        self.band.unwrap_or_else(|| match &self.kernel {
            KernelSpec::Geometric { rate, .. } => negligible_band(rate.unwrap_or(2.0 * self.rho)),
            KernelSpec::SingleCosine { .. } => 1,
            KernelSpec::Table { entries } => entries.iter().map(|e| e.0.unsigned_abs() as usize).max().unwrap_or(0),
        })
    }

    pub fn kernel(&self) -> Result<HoppingKernel64, CliError> {
        let profile = match &self.kernel {
            KernelSpec::Geometric { rate, amplitude } => KernelProfile::Geometric {
                rate: rate.unwrap_or(2.0 * self.rho),
                amplitude: *amplitude,
            },
            KernelSpec::SingleCosine { theta, theta0 } => KernelProfile::SingleCosine {
                theta: *theta,
                theta0: *theta0,
            },
            KernelSpec::Table { entries } => {
                KernelProfile::Table(entries.iter().map(|&(n, re, im)| (n, C::new(re, im))).collect())
            }
        };
        let k = kernel_from_profile(self.rho, self.band(), &profile).map_err(|e| CliError::Config(e.to_string()))?;
        k.with_coupling(self.eps).map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn frequency(&self) -> Result<Frequency64, CliError> {
        Ok(match self.frequency {
            FrequencyKind::Rational => Frequency64::rational(self.omega),
            FrequencyKind::Untagged => Frequency64 {
                dc_constant: self.dc_constant,
                dc_range: self.dc_range,
                ..Frequency64::new(self.omega)
            },
            FrequencyKind::Diophantine => Frequency64::diophantine(self.omega, self.dc_constant, self.dc_range)
                .map_err(|e| CliError::Config(e.to_string()))?,
        })
    }

    pub fn guard(&self) -> Guard64 {
        Guard64::new(self.guard)
    }

    /// The configured starting point, with missing coordinates drawn from
    /// the seed.
    pub fn start(&self) -> TorusPoint64 {
        let (u, v) = skewloc::Sampler::uniform(self.seed).unit_pairs(1)[0];
        TorusPoint64::new(self.x1.unwrap_or(u), self.x2.unwrap_or(v))
    }

    pub fn sampler(&self) -> skewloc::Sampler {
        skewloc::Sampler {
            seed: self.seed,
            stratified: self.stratified,
        }
    }

    pub fn set_kernel_table(&mut self, path: &Path) -> Result<(), CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let k = parse_kernel_table(&text, self.rho).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let entries = k
            .entries()
            .filter(|(_, v)| v.re != 0.0 || v.im != 0.0)
            .map(|(n, v)| (n, v.re, v.im))
            .collect();
        self.kernel = KernelSpec::Table { entries };
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ExperimentConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip_preserves_hash() {
        let mut c = ExperimentConfig::default();
        c.x1 = Some(0.25);
        c.kernel = KernelSpec::SingleCosine {
            theta: 0.1,
            theta0: 0.0,
        };
        let back: ExperimentConfig = serde_json::from_str(&c.canonical_json()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_eq!(c.hash().len(), 64);
    }

    #[test]
    fn unknown_fields_are_rejected() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"nn": 3}"#).is_err());
        let c: ExperimentConfig = serde_json::from_str(r#"{"n": 3}"#).unwrap();
        assert_eq!(c.n, 3);
        assert_eq!(c.rho, 1.0);
    }

    #[test]
    fn invalid_values_are_refused() {
        let c = ExperimentConfig {
            rho: 0.0,
            ..Default::default()
        };
        assert!(c.validate().is_err());
        let c = ExperimentConfig {
            omega: 0.5,
            ..Default::default()
        };
        assert!(c.validate().is_err(), "0.5 is not diophantine");
    }

    #[test]
    fn default_band_is_the_negligible_band() {
        assert_eq!(ExperimentConfig::default().band(), 21);
    }
}
