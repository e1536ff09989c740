//! Bundled example networks, each materialised as a complete run config.
//!
//! The catalogue covers the topologies the rest of the crate is exercised
//! on:
//!
//! * `ex1`: two classes on nested resources; a priority control whose
//!   stability hinges on the idle fraction it leaves the second class.
//! * `ex2`: three classes on a cyclic trio of resources, served one at a
//!   time by the switching control; every resource has slack, yet the
//!   simultaneity of requirements decides stability.
//! * `ex3`: the nested pair again, with the priority control modified below
//!   a queue threshold so a drift certificate exists.
//! * `ex4`: `k` classes sharing a common resource plus one dedicated
//!   resource each, allocated by weighted fair sharing.
//! * `ex5`: a backbone class crossing `k` resources, each also serving a
//!   local class, with a threshold control protecting the crossing class.
//! * `ex6`: the trio of `ex2` under two controls (switching or a
//!   proportionally fair first level) whose critical arrival rates differ.
//!
//! [`BuiltinExample::build_config`] returns a [`Config`] with network,
//! control and per-example defaults for simulation, scans, classification
//! and threshold searches; overrides tweak rates, fan-out `k`, thresholds
//! `a`, fairness `alpha` and weights before validation.

use crate::classifier::StationaryMethod;
use crate::config::{
    ClassifySection, Config, NetworkConfig, ScanSection, SimSection, ThresholdFamilySpec,
    ThresholdSection,
};
use crate::control::{ControlSpec, ThresholdFamily, WithinLevel};
use crate::error::{Error, Result};
use crate::fairshare::Alpha;
use crate::lyapunov::{LyapunovFn, Region};
use crate::net::NetworkSpec;
use serde::{Deserialize, Serialize};

/// A named example plus parameter overrides.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct BuiltinExample {
    /// One of `ex1` … `ex6`.
    pub name: String,
    /// Fan-out for `ex4` (classes) and `ex5` (crossed resources).
    pub k: Option<usize>,
    /// Threshold for `ex3`/`ex5`; wraps `ex4` in its shell control.
    pub a: Option<u64>,
    /// Fairness parameter for `ex4`.
    pub alpha: Option<Alpha>,
    /// `ex6`: `"switching"` (default) or `"proportional"`.
    pub variant: Option<String>,
    pub nu: Option<Vec<f64>>,
    pub mu: Option<Vec<f64>>,
    pub c: Option<Vec<f64>>,
    pub weights: Option<Vec<f64>>,
}

impl BuiltinExample {
    pub fn named(name: &str) -> Result<Self> {
        if !Self::names().contains(&name) {
            return Err(Error::Config(format!(
                "unknown example \"{name}\"; known: {}",
                Self::names().join(", ")
            )));
        }
        Ok(Self {
            name: name.to_string(),
            ..Self::default()
        })
    }

    pub fn names() -> Vec<&'static str> {
        vec!["ex1", "ex2", "ex3", "ex4", "ex5", "ex6"]
    }

    /// Builds the complete run config; the network section is validated by
    /// constructing the [`NetworkSpec`] before returning.
    pub fn build_config(&self) -> Result<Config> {
        let mut config = match self.name.as_str() {
            "ex1" => self.nested_pair(false)?,
            "ex3" => self.nested_pair(true)?,
            "ex2" => self.trio("switching")?,
            "ex6" => self.trio(self.variant.as_deref().unwrap_or("switching"))?,
            "ex4" => self.shared_dedicated()?,
            "ex5" => self.backbone()?,
            other => {
                return Err(Error::Config(format!(
                    "unknown example \"{other}\"; known: {}",
                    Self::names().join(", ")
                )))
            }
        };
        config.sim = SimSection {
            events: Some(500_000),
            seed: Some(1),
            ..SimSection::default()
        };
        // Validate the assembled network once, here.
        config.network()?;
        Ok(config)
    }

    fn rates(&self, default_nu: Vec<f64>, default_mu_len: usize) -> (Vec<f64>, Vec<f64>) {
        let nu = self.nu.clone().unwrap_or(default_nu);
        let mu = self.mu.clone().unwrap_or_else(|| vec![1.0; default_mu_len]);
        (nu, mu)
    }

    fn nested_pair(&self, thresholded: bool) -> Result<Config> {
        let (nu, mu) = self.rates(vec![0.5, 0.3], 2);
        let c = self.c.clone().unwrap_or(vec![1.0, 1.0]);
        let spec = NetworkSpec::new(vec![vec![1, 1], vec![0, 1]], c, nu, mu)?;
        let base = ControlSpec::priority(vec![vec![0], vec![1]]);
        let a = self.a.unwrap_or(5);
        let (control, scan) = if thresholded {
            (
                ControlSpec::ThresholdPriority {
                    base: Box::new(base),
                    family: ThresholdFamily::NestedPair,
                    a,
                },
                ScanSection {
                    function: LyapunovFn::SmoothedFirst { a },
                    bounds: vec![200, 200],
                    epsilon: None,
                    exclude: Some(Region::Intersection {
                        parts: vec![
                            Region::CoordBelow { r: 0, bound: a },
                            Region::CoordBelow { r: 1, bound: 1 },
                        ],
                    }),
                    direction: None,
                },
            )
        } else {
            (
                base,
                ScanSection {
                    function: LyapunovFn::Linear { weights: None },
                    bounds: vec![60, 60],
                    epsilon: None,
                    exclude: Some(Region::origin(2)),
                    direction: None,
                },
            )
        };
        Ok(Config {
            network: Some(NetworkConfig::from_spec(&spec)),
            control: Some(control),
            scan: Some(scan),
            classify: Some(ClassifySection {
                stages: Some(vec![vec![0], vec![1]]),
                method: Some(StationaryMethod::Matrix { level_cap: 400 }),
                ..ClassifySection::default()
            }),
            threshold: Some(ThresholdSection {
                family: ThresholdFamilySpec::ClassArrival { class: 1 },
                bracket: (0.3, 0.7),
                tol: 1e-3,
                budget: 40,
            }),
            ..Config::default()
        })
    }

    fn trio(&self, variant: &str) -> Result<Config> {
        let (nu, mu) = self.rates(vec![0.3; 3], 3);
        let c = self.c.clone().unwrap_or(vec![1.0; 3]);
        let spec = NetworkSpec::new(
            vec![vec![0, 1, 1], vec![1, 0, 1], vec![1, 1, 0]],
            c,
            nu,
            mu,
        )?;
        let (control, classify, bracket) = match variant {
            "switching" => (
                ControlSpec::SwitchingMax,
                ClassifySection {
                    stages: Some(vec![vec![0], vec![1], vec![2]]),
                    method: Some(StationaryMethod::Matrix { level_cap: 127 }),
                    ..ClassifySection::default()
                },
                (0.25, 0.45),
            ),
            "proportional" => (
                ControlSpec::StaticPriority {
                    levels: vec![vec![0, 1], vec![2]],
                    within: WithinLevel::ProportionalFair,
                },
                ClassifySection {
                    stages: Some(vec![vec![0, 1], vec![2]]),
                    method: Some(StationaryMethod::Matrix { level_cap: 127 }),
                    assume_monotone: Some(true),
                    ..ClassifySection::default()
                },
                (0.36, 0.48),
            ),
            other => {
                return Err(Error::Config(format!(
                    "unknown trio variant \"{other}\"; use \"switching\" or \"proportional\""
                )))
            }
        };
        Ok(Config {
            network: Some(NetworkConfig::from_spec(&spec)),
            control: Some(control),
            scan: Some(ScanSection {
                function: LyapunovFn::Linear { weights: None },
                bounds: vec![25, 25, 25],
                epsilon: Some(0.05),
                exclude: Some(Region::origin(3)),
                direction: None,
            }),
            classify: Some(classify),
            threshold: Some(ThresholdSection {
                family: ThresholdFamilySpec::UniformArrival,
                bracket,
                tol: 1e-3,
                budget: 40,
            }),
            ..Config::default()
        })
    }

    fn shared_dedicated(&self) -> Result<Config> {
        let k = self.k.unwrap_or(3);
        if k < 2 {
            return Err(Error::Config("ex4 needs k >= 2 classes".into()));
        }
        let (nu, mu) = self.rates(vec![0.45; k], k);
        let mut caps = vec![2.0];
        caps.extend(vec![1.0; k]);
        let c = self.c.clone().unwrap_or(caps);
        let mut incidence = vec![vec![1u8; k]];
        for j in 0..k {
            let mut row = vec![0u8; k];
            row[j] = 1;
            incidence.push(row);
        }
        let spec = NetworkSpec::new(incidence, c, nu, mu)?;
        let alpha = self.alpha.unwrap_or(Alpha::Finite(1.0));
        let weights = self.weights.clone().unwrap_or(vec![1.0; k]);
        let fair = ControlSpec::AlphaFair {
            alpha,
            weights: weights.clone(),
            tol: 1e-8,
        };
        let control = match self.a {
            Some(a) => ControlSpec::ThresholdPriority {
                base: Box::new(fair),
                family: ThresholdFamily::SharedDedicated,
                a,
            },
            None => fair,
        };
        let state: Vec<f64> = (1..=k).rev().map(|v| v as f64).collect();
        Ok(Config {
            network: Some(NetworkConfig::from_spec(&spec)),
            control: Some(control),
            allocation: Some(crate::config::AllocSection {
                state,
                alpha,
                weights: Some(weights),
                tol: None,
            }),
            ..Config::default()
        })
    }

    fn backbone(&self) -> Result<Config> {
        let k = self.k.unwrap_or(2);
        if k < 2 {
            return Err(Error::Config("ex5 needs k >= 2 crossed resources".into()));
        }
        let mut default_nu = vec![0.4];
        default_nu.extend(vec![0.25; k]);
        let (nu, mu) = self.rates(default_nu, k + 1);
        let c = self.c.clone().unwrap_or(vec![1.0; k]);
        // Resource j serves the crossing class 0 and the local class j+1.
        let mut incidence = Vec::with_capacity(k);
        for j in 0..k {
            let mut row = vec![0u8; k + 1];
            row[0] = 1;
            row[j + 1] = 1;
            incidence.push(row);
        }
        let spec = NetworkSpec::new(incidence, c, nu, mu)?;
        let a = self.a.unwrap_or(3);
        let locals: Vec<usize> = (1..=k).collect();
        let control = ControlSpec::ThresholdPriority {
            base: Box::new(ControlSpec::priority(vec![locals, vec![0]])),
            family: ThresholdFamily::Backbone,
            a,
        };
        Ok(Config {
            network: Some(NetworkConfig::from_spec(&spec)),
            control: Some(control),
            scan: Some(ScanSection {
                function: LyapunovFn::SmoothedMaxTail { a },
                bounds: vec![12; k + 1],
                epsilon: None,
                exclude: Some(Region::Intersection {
                    parts: vec![
                        Region::CoordEquals { r: 0, value: 0 },
                        Region::TailMaxBelow { bound: a },
                    ],
                }),
                direction: None,
            }),
            ..Config::default()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lyapunov::{capacity_slack_deltas, foster_scan, ScanConfig};

    #[test]
    fn every_example_builds_and_compiles() {
        for name in BuiltinExample::names() {
            let example = BuiltinExample::named(name).unwrap();
            let config = example.build_config().unwrap();
            let spec = config.network().unwrap();
            let control = config.control().unwrap();
            control.compile(&spec).unwrap();
            if let Some(scan) = &config.scan {
                scan.function.validate(spec.num_types()).unwrap();
                assert_eq!(scan.bounds.len(), spec.num_types());
            }
        }
        assert!(BuiltinExample::named("ex7").is_err());
    }

    #[test]
    fn bundled_scan_configs_pass_their_certificates() {
        for name in ["ex1", "ex3", "ex5"] {
            let config = BuiltinExample::named(name)
                .unwrap()
                .build_config()
                .unwrap();
            let spec = config.network().unwrap();
            let compiled = config.control().unwrap().compile(&spec).unwrap();
            let scan = config.scan.as_ref().unwrap();
            let (d, dp) = capacity_slack_deltas(&spec).unwrap();
            let sc = ScanConfig {
                bounds: scan.bounds.iter().map(|&b| b.min(30)).collect(),
                epsilon: scan.epsilon.unwrap_or(d.min(dp) / 2.0),
                exclude: scan.exclude.clone().unwrap(),
            };
            let report = foster_scan(&spec, &compiled, &scan.function, &sc).unwrap();
            assert!(report.passed, "{name}: {:?}", report.violations.first());
        }
    }

    #[test]
    fn overrides_reshape_the_fixtures() {
        let mut ex4 = BuiltinExample::named("ex4").unwrap();
        ex4.k = Some(4);
        ex4.alpha = Some(Alpha::Infinite);
        ex4.a = Some(2);
        let config = ex4.build_config().unwrap();
        let spec = config.network().unwrap();
        assert_eq!(spec.num_types(), 4);
        assert_eq!(spec.num_resources(), 5);
        assert!(matches!(
            config.control().unwrap(),
            ControlSpec::ThresholdPriority { .. }
        ));

        let mut ex5 = BuiltinExample::named("ex5").unwrap();
        ex5.k = Some(3);
        let spec = ex5.build_config().unwrap().network().unwrap();
        assert_eq!(spec.num_types(), 4);
        assert_eq!(spec.num_resources(), 3);

        let mut ex2 = BuiltinExample::named("ex2").unwrap();
        ex2.nu = Some(vec![0.4; 3]);
        let spec = ex2.build_config().unwrap().network().unwrap();
        assert_eq!(spec.nu(), &[0.4, 0.4, 0.4]);

        let mut bad = BuiltinExample::named("ex6").unwrap();
        bad.variant = Some("roulette".into());
        assert!(bad.build_config().is_err());
    }

    #[test]
    fn trio_variants_differ_in_control_and_stages() {
        let mut ex6 = BuiltinExample::named("ex6").unwrap();
        let switching = ex6.build_config().unwrap();
        assert!(matches!(
            switching.control().unwrap(),
            ControlSpec::SwitchingMax
        ));
        ex6.variant = Some("proportional".into());
        let proportional = ex6.build_config().unwrap();
        assert!(matches!(
            proportional.control().unwrap(),
            ControlSpec::StaticPriority { .. }
        ));
        let stages = proportional.classify.as_ref().unwrap().stages.clone();
        assert_eq!(stages, Some(vec![vec![0, 1], vec![2]]));
        assert_eq!(
            proportional.classify.as_ref().unwrap().assume_monotone,
            Some(true)
        );
    }

    #[test]
    fn configs_roundtrip_through_json() {
        for name in BuiltinExample::names() {
            let config = BuiltinExample::named(name)
                .unwrap()
                .build_config()
                .unwrap();
            let json = serde_json::to_string_pretty(&config).unwrap();
            let back: Config = serde_json::from_str(&json).unwrap();
            assert_eq!(config, back, "{name}");
        }
    }
}
