//! Run configuration: TOML on disk, presets in code.

use std::path::{Path, PathBuf};

use ftcs_core::coherent::ThresholdOptions;
use ftcs_core::flow::{FlowSpec, FrameTransform, Point};
use ftcs_core::operator::DiffusionSpec;
use ftcs_core::partition::Rect;
use ftcs_core::pipeline::{Experiment, GridSpec};
use ftcs_core::spectral::SolverOptions;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

/// A named flow or a complete parameter set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FlowChoice {
    Named(String),
    Spec(FlowSpec),
}

impl FlowChoice {
    pub fn resolve(&self) -> CliResult<FlowSpec> {
        match self {
            Self::Spec(spec) => Ok(spec.clone()),
            Self::Named(name) if name == "stratospheric" => Ok(FlowSpec::stratospheric()),
            Self::Named(name) => Err(CliError::Usage(format!(
                "unknown flow {name:?}; expected \"stratospheric\" or a [flow] table"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSpec {
    pub epsilons: Vec<f64>,
    /// Grid for the study; the run grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_test: Option<usize>,
}

impl Default for ScaleSpec {
    fn default() -> Self {
        Self {
            epsilons: vec![0.05, 0.1, 0.2],
            grid: Some(GridSpec {
                rect: Rect::new(0.0, 20.0, -2.5, 2.5),
                nx: 512,
                ny: 128,
            }),
            n_test: Some(4),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectivitySpec {
    pub frame: FrameTransform,
    /// Transformed domain; the snapped bounding box of the image of the grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rect: Option<Rect>,
}

impl Default for ObjectivitySpec {
    fn default() -> Self {
        let b = Point::new(0.5, 0.25);
        Self {
            frame: FrameTransform {
                theta0: 0.3,
                theta1: 0.3,
                b0: b,
                b1: b,
            },
            rect: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub flow: FlowChoice,
    pub grid: GridSpec,
    pub n_test: usize,
    pub diffusion: DiffusionSpec,
    pub solver: SolverOptions,
    #[serde(default)]
    pub threshold: ThresholdOptions,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scale: Option<ScaleSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objectivity: Option<ObjectivitySpec>,
    #[serde(default)]
    pub output: OutputSpec,
}

impl RunConfig {
    pub fn from_experiment(exp: Experiment) -> Self {
        Self {
            flow: FlowChoice::Spec(exp.flow),
            grid: exp.grid,
            n_test: exp.n_test,
            diffusion: exp.diffusion,
            solver: exp.solver,
            threshold: exp.threshold,
            scale: Some(ScaleSpec::default()),
            objectivity: Some(ObjectivitySpec::default()),
            output: OutputSpec::default(),
        }
    }

    pub fn preset(name: &str) -> CliResult<Self> {
        let exp = Experiment::preset(name).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok(Self::from_experiment(exp))
    }

    pub fn from_toml(text: &str) -> CliResult<Self> {
        toml::from_str(text).map_err(|e| CliError::Usage(format!("invalid configuration: {e}")))
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::io(format!("reading {}", path.display()), e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn experiment(&self) -> CliResult<Experiment> {
        Ok(Experiment {
            flow: self.flow.resolve()?,
            grid: self.grid,
            n_test: self.n_test,
            diffusion: self.diffusion.clone(),
            solver: self.solver.clone(),
            threshold: self.threshold.clone(),
        })
    }

    /// Digest of everything that affects results; the output section is excluded.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output = OutputSpec::default();
        if let Ok(flow) = canonical.flow.resolve() {
            canonical.flow = FlowChoice::Spec(flow);
        }
        let digest = Sha256::digest(canonical.to_toml().as_bytes());
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_round_trip() {
        for name in ftcs_core::pipeline::PRESETS {
            let cfg = RunConfig::preset(name).unwrap();
            let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
            assert_eq!(back, cfg);
            assert_eq!(
                back.experiment().unwrap(),
                Experiment::preset(name).unwrap()
            );
        }
    }

    #[test]
    fn unknown_keys_rejected() {
        let mut text = RunConfig::preset("stratospheric_6_1").unwrap().to_toml();
        text.push_str("\n[extra]\nvalue = 1\n");
        assert!(matches!(
            RunConfig::from_toml(&text),
            Err(CliError::Usage(_))
        ));
        let text = RunConfig::preset("stratospheric_6_1")
            .unwrap()
            .to_toml()
            .replace("n_test = 400", "n_test = 400\nn_tests = 3");
        assert!(RunConfig::from_toml(&text).is_err());
    }

    #[test]
    fn named_flow_resolves() {
        let mut cfg = RunConfig::preset("stratospheric_6_1").unwrap();
        cfg.flow = FlowChoice::Named("stratospheric".into());
        let back = RunConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(back.flow, cfg.flow);
        assert_eq!(back.experiment().unwrap().flow, FlowSpec::stratospheric());
        cfg.flow = FlowChoice::Named("bickley".into());
        assert!(cfg.experiment().is_err());
    }

    #[test]
    fn hash_ignores_output_only() {
        let a = RunConfig::preset("stratospheric_6_1").unwrap();
        let mut b = a.clone();
        b.output = OutputSpec {
            dir: Some("/tmp/x".into()),
            threads: Some(3),
        };
        assert_eq!(a.hash(), b.hash());
        b.n_test = 9;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
    }
}
