//! Run configuration: one JSON document per run.
//!
//! A config holds up to six sections: `network` (incidence, capacities,
//! rates), `control` (a [`ControlSpec`]), `sim`, `scan`, `classify` and
//! `threshold`. Subcommands read the sections they need and reject runs
//! missing one. Capacities accept numbers or the strings `"inf"` /
//! `"infinity"`. Leaf fields can be overridden from the command line with
//! dotted paths (`--set sim.events=500000`, `--set network.arrival_rates.1=0.4`);
//! overrides are applied to the raw JSON before parsing, so they obey the
//! same validation as the file itself.

use crate::classifier::{ClassifyParams, LimitParams, StationaryMethod};
use crate::control::ControlSpec;
use crate::error::{Error, Result};
use crate::fairshare::Alpha;
use crate::lyapunov::{LyapunovFn, Region};
use crate::net::NetworkSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// A capacity entry: a positive number, or `"inf"` for an uncapacitated
/// resource.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CapacityValue {
    Number(f64),
    Word(String),
}

impl CapacityValue {
    pub fn to_f64(&self) -> Result<f64> {
        match self {
            CapacityValue::Number(v) => Ok(*v),
            CapacityValue::Word(w) => match w.to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(f64::INFINITY),
                other => Err(Error::Config(format!(
                    "capacity \"{other}\" is neither a number nor \"inf\""
                ))),
            },
        }
    }

    pub fn from_f64(v: f64) -> Self {
        if v.is_finite() {
            CapacityValue::Number(v)
        } else {
            CapacityValue::Word("inf".into())
        }
    }
}

/// The `network` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkConfig {
    /// Rows are resources, columns classes, entries 0/1.
    pub incidence: Vec<Vec<u8>>,
    pub capacities: Vec<CapacityValue>,
    pub arrival_rates: Vec<f64>,
    pub service_rates: Vec<f64>,
}

impl NetworkConfig {
    pub fn build(&self) -> Result<NetworkSpec> {
        let caps = self
            .capacities
            .iter()
            .map(CapacityValue::to_f64)
            .collect::<Result<Vec<_>>>()?;
        NetworkSpec::new(
            self.incidence.clone(),
            caps,
            self.arrival_rates.clone(),
            self.service_rates.clone(),
        )
    }

    pub fn from_spec(spec: &NetworkSpec) -> Self {
        Self {
            incidence: spec.incidence().to_vec(),
            capacities: spec
                .capacities()
                .iter()
                .map(|&c| CapacityValue::from_f64(c))
                .collect(),
            arrival_rates: spec.nu().to_vec(),
            service_rates: spec.mu().to_vec(),
        }
    }
}

/// The `sim` section; every field has a usable default.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimSection {
    pub initial: Option<Vec<u64>>,
    pub events: Option<u64>,
    /// Time-based stopping; takes precedence over `events` when set.
    pub time: Option<f64>,
    pub warmup_fraction: Option<f64>,
    pub batches: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoints: Option<usize>,
}

/// The `scan` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanSection {
    pub function: LyapunovFn,
    pub bounds: Vec<u64>,
    /// Defaults to half the smallest capacity slack.
    pub epsilon: Option<f64>,
    #[serde(default)]
    pub exclude: Option<Region>,
    /// `"decrease"` (default) certifies negative drift; `"increase"` runs
    /// the uniform upward-drift evidence scan.
    #[serde(default)]
    pub direction: Option<String>,
}

/// The `classify` section.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassifySection {
    /// Stage partition; singleton stages in index order when omitted.
    pub stages: Option<Vec<Vec<usize>>>,
    pub method: Option<StationaryMethod>,
    pub z: Option<f64>,
    pub limit: Option<LimitParams>,
    /// Try every order instead of the fixed stages.
    pub search_orders: Option<bool>,
    /// Skip the monotonicity probe. The recursion is only grounded for
    /// monotone controls; set this when monotonicity (or an equivalent
    /// structural argument, as with a grouped fair level whose rates ignore
    /// the remaining classes) is known rather than checkable.
    pub assume_monotone: Option<bool>,
}

impl ClassifySection {
    /// Materialises [`ClassifyParams`], defaulting to singleton stages in
    /// index order and a two-million-event simulation reduction.
    pub fn to_params(&self, num_types: usize, seed: u64) -> ClassifyParams {
        let stages = self
            .stages
            .clone()
            .unwrap_or_else(|| (0..num_types).map(|r| vec![r]).collect());
        let method = self.method.clone().unwrap_or(StationaryMethod::Simulation {
            events: 2_000_000,
            reps: 1,
            seed,
        });
        let mut params = ClassifyParams::singleton_order(&[], method);
        params.stages = stages;
        if let Some(z) = self.z {
            params.z = z;
        }
        if let Some(limit) = self.limit {
            params.limit = limit;
        }
        params
    }
}

/// Parametric family swept by the `threshold` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ThresholdFamilySpec {
    /// The parameter sets every class's arrival rate.
    UniformArrival,
    /// The parameter sets one class's arrival rate.
    ClassArrival { class: usize },
}

/// The `threshold` section.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdSection {
    #[serde(flatten)]
    pub family: ThresholdFamilySpec,
    pub bracket: (f64, f64),
    pub tol: f64,
    #[serde(default = "default_budget")]
    pub budget: usize,
}

fn default_budget() -> usize {
    40
}

/// The `allocation` section used by `solve-alloc`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AllocSection {
    pub state: Vec<f64>,
    pub alpha: Alpha,
    #[serde(default)]
    pub weights: Option<Vec<f64>>,
    #[serde(default)]
    pub tol: Option<f64>,
}

/// The whole run document.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    pub network: Option<NetworkConfig>,
    pub control: Option<ControlSpec>,
    pub sim: SimSection,
    pub scan: Option<ScanSection>,
    pub classify: Option<ClassifySection>,
    pub threshold: Option<ThresholdSection>,
    pub allocation: Option<AllocSection>,
}

impl Config {
    pub fn from_value(value: serde_json::Value) -> Result<Self> {
        serde_json::from_value(value).map_err(Error::from)
    }

    pub fn network(&self) -> Result<NetworkSpec> {
        self.network
            .as_ref()
            .ok_or_else(|| Error::Config("the run needs a `network` section".into()))?
            .build()
    }

    pub fn control(&self) -> Result<&ControlSpec> {
        self.control
            .as_ref()
            .ok_or_else(|| Error::Config("the run needs a `control` section".into()))
    }
}

/// Applies one `path=value` override to raw JSON. Path segments are dotted;
/// numeric segments index arrays. The value is parsed as JSON when
/// possible, otherwise as a bare string.
pub fn apply_override(root: &mut serde_json::Value, assignment: &str) -> Result<()> {
    let (path, raw) = assignment.split_once('=').ok_or_else(|| {
        Error::Config(format!("override \"{assignment}\" is not of the form path=value"))
    })?;
    if path.is_empty() {
        return Err(Error::Config("override path is empty".into()));
    }
    let leaf: serde_json::Value = serde_json::from_str(raw)
        .unwrap_or_else(|_| serde_json::Value::String(raw.to_string()));
    let mut node = root;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, segment) in segments.iter().enumerate() {
        let last = i + 1 == segments.len();
        if let Ok(index) = segment.parse::<usize>() {
            let arr = node.as_array_mut().ok_or_else(|| {
                Error::Config(format!("segment \"{segment}\" of \"{path}\" indexes a non-array"))
            })?;
            if index >= arr.len() {
                return Err(Error::Config(format!(
                    "index {index} out of range at \"{path}\" (length {})",
                    arr.len()
                )));
            }
            if last {
                arr[index] = leaf;
                return Ok(());
            }
            node = &mut arr[index];
        } else {
            if !node.is_object() {
                return Err(Error::Config(format!(
                    "segment \"{segment}\" of \"{path}\" descends into a non-object"
                )));
            }
            let map = node.as_object_mut().unwrap();
            if last {
                map.insert(segment.to_string(), leaf);
                return Ok(());
            }
            node = map
                .entry(segment.to_string())
                .or_insert_with(|| serde_json::Value::Object(Default::default()));
        }
    }
    Ok(())
}

/// Hex SHA-256 of the raw config bytes, recorded in every manifest.
pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

/// Provenance header embedded in every output document.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub subcommand: String,
    pub config_path: Option<String>,
    pub config_sha256: Option<String>,
    pub seed: Option<u64>,
    pub overrides: Vec<String>,
    pub started_at: String,
    pub wall_ms: u128,
}

impl RunManifest {
    pub fn new(subcommand: &str) -> Self {
        Self {
            tool: "psnet".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            subcommand: subcommand.into(),
            config_path: None,
            config_sha256: None,
            seed: None,
            overrides: Vec::new(),
            started_at: chrono::Utc::now().to_rfc3339(),
            wall_ms: 0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pair_config_json() -> serde_json::Value {
        serde_json::json!({
            "network": {
                "incidence": [[1, 1], [0, 1]],
                "capacities": [1.0, "inf"],
                "arrival_rates": [0.5, 0.3],
                "service_rates": [1.0, 1.0]
            },
            "control": { "variant": "static_priority", "levels": [[0], [1]] },
            "sim": { "events": 1000, "seed": 7 }
        })
    }

    #[test]
    fn capacities_accept_numbers_and_inf() {
        let config = Config::from_value(pair_config_json()).unwrap();
        let spec = config.network().unwrap();
        assert_eq!(spec.capacity(0), 1.0);
        assert!(spec.capacity(1).is_infinite());
        assert!(config.control().is_ok());

        let bad = serde_json::json!({
            "network": {
                "incidence": [[1]],
                "capacities": ["lots"],
                "arrival_rates": [0.5],
                "service_rates": [1.0]
            }
        });
        let config = Config::from_value(bad).unwrap();
        assert!(matches!(config.network(), Err(Error::Config(_))));
    }

    #[test]
    fn overrides_patch_leaves_and_array_entries() {
        let mut value = pair_config_json();
        apply_override(&mut value, "sim.events=5000").unwrap();
        apply_override(&mut value, "network.arrival_rates.1=0.4").unwrap();
        // Missing object segments are created on the way down.
        apply_override(&mut value, "classify.z=4.0").unwrap();
        let config = Config::from_value(value).unwrap();
        assert_eq!(config.sim.events, Some(5000));
        assert_eq!(config.network().unwrap().nu()[1], 0.4);
        assert_eq!(config.classify.unwrap().z, Some(4.0));

        let mut value = pair_config_json();
        assert!(apply_override(&mut value, "network.arrival_rates.9=0.4").is_err());
        assert!(apply_override(&mut value, "no-equals-sign").is_err());
        assert!(apply_override(&mut value, "network.incidence.0.0.deep=1").is_err());
    }

    #[test]
    fn classify_section_defaults_to_singleton_stages() {
        let section = ClassifySection::default();
        let params = section.to_params(3, 42);
        assert_eq!(params.stages, vec![vec![0], vec![1], vec![2]]);
        assert!(matches!(
            params.method,
            StationaryMethod::Simulation { seed: 42, .. }
        ));
        assert_eq!(params.z, 3.0);
    }

    #[test]
    fn threshold_section_roundtrips_with_flattened_family() {
        let section = ThresholdSection {
            family: ThresholdFamilySpec::ClassArrival { class: 1 },
            bracket: (0.3, 0.7),
            tol: 1e-3,
            budget: 30,
        };
        let json = serde_json::to_string(&section).unwrap();
        let back: ThresholdSection = serde_json::from_str(&json).unwrap();
        assert_eq!(section, back);
        let uniform: ThresholdSection = serde_json::from_str(
            r#"{"family":"uniform_arrival","bracket":[0.25,0.45],"tol":0.001}"#,
        )
        .unwrap();
        assert_eq!(uniform.budget, 40);
    }

    #[test]
    fn manifest_hash_is_stable() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        let manifest = RunManifest::new("simulate");
        assert_eq!(manifest.tool, "psnet");
        assert!(manifest.started_at.contains('T'));
    }
}
