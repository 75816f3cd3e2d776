//! JSON run configurations. Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::de::{self, Deserializer};
use serde::{Deserialize, Serialize, Serializer};

use embedbound::bounds::LambdaMode;
use embedbound::distribution::{CoupleMeasure, DistributionSpec};
use embedbound::graph::{
    complete_ary_tree, path_graph, random_graph, random_recursive_tree, star_graph, Graph,
};
use embedbound::learner::LossSpec;
use embedbound::optim::OptimOptions;
use embedbound::rng;
use embedbound::spaces::{GFunc, SpaceSpec};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum GraphSource {
    /// Edge-list file; relative paths resolve against the config file.
    File {
        path: PathBuf,
    },
    CompleteAryTree {
        arity: usize,
        levels: usize,
    },
    Path {
        n: usize,
    },
    Star {
        leaves: usize,
    },
    RandomRecursiveTree {
        n: usize,
        seed: u64,
    },
    RandomGraph {
        n: usize,
        p: f64,
        seed: u64,
    },
}

impl GraphSource {
    pub fn build(&self, base: &Path) -> Result<Graph, CliError> {
        let g = match self {
            GraphSource::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full).map_err(|e| {
                    CliError::Validation(format!("cannot read {}: {e}", full.display()))
                })?;
                Graph::from_edge_list(&text)
            }
            GraphSource::CompleteAryTree { arity, levels } => complete_ary_tree(*arity, *levels),
            GraphSource::Path { n } => path_graph(*n),
            GraphSource::Star { leaves } => star_graph(*leaves),
            GraphSource::RandomRecursiveTree { n, seed } => {
                random_recursive_tree(*n, &mut rng::stream(*seed, 0))
            }
            GraphSource::RandomGraph { n, p, seed } => {
                random_graph(*n, *p, &mut rng::stream(*seed, 0))
            }
        };
        g.map_err(|e| CliError::Validation(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
#[derive(Default)]
pub enum MeasureSource {
    #[default]
    Uniform,
    /// Uniform over the couples that are edges of the graph.
    UniformOnEdges,
    /// One weight per couple in lexicographic order.
    Weights {
        weights: Vec<f64>,
    },
    Random {
        seed: u64,
    },
}

impl MeasureSource {
    pub fn build(&self, graph: &Graph) -> Result<CoupleMeasure, CliError> {
        let n = graph.vertex_count();
        let mu = match self {
            MeasureSource::Uniform => CoupleMeasure::uniform(n),
            MeasureSource::UniformOnEdges => CoupleMeasure::uniform_on(n, graph.edges()),
            MeasureSource::Weights { weights } => CoupleMeasure::new(n, weights.clone()),
            MeasureSource::Random { seed } => CoupleMeasure::random(n, &mut rng::stream(*seed, 0)),
        };
        mu.map_err(|e| CliError::Validation(e.to_string()))
    }
}

/// A noise exponent: a non-negative number or the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NoiseExponent(pub f64);

impl Serialize for NoiseExponent {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for NoiseExponent {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(x) if x >= 0.0 => Ok(NoiseExponent(x)),
            Raw::Text(t) if t == "inf" => Ok(NoiseExponent(f64::INFINITY)),
            _ => Err(de::Error::custom(
                "noise exponent must be a non-negative number or \"inf\"",
            )),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSpec {
    pub alpha: NoiseExponent,
    pub c: f64,
}

/// Optional replacements for individual bound constants.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundOverrides {
    pub lip_l: Option<f64>,
    pub sup_b: Option<f64>,
    pub sup_b0: Option<f64>,
    pub var_const: Option<f64>,
    pub var_exp: Option<f64>,
    pub clip_m: Option<f64>,
    pub lambda_sq: Option<f64>,
}

fn default_delta() -> f64 {
    0.05
}

fn default_lip_g2() -> f64 {
    1.0
}

fn default_lambda_mode() -> LambdaMode {
    LambdaMode::WorstMetric
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub graph: GraphSource,
    #[serde(default)]
    pub measure: MeasureSource,
    pub space: SpaceSpec,
    pub g: GFunc,
    /// Hinge constants follow from the noise condition.
    pub noise: NoiseSpec,
    #[serde(default = "default_lambda_mode")]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub overrides: BoundOverrides,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default)]
    pub erm_eps: f64,
    pub sample_sizes: Vec<f64>,
    #[serde(default = "default_lip_g2")]
    pub lip_g2: f64,
    /// Margin and violation count for the hyperbolic-versus-Euclidean
    /// threshold column; omitted when either is absent.
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub v_min: Option<usize>,
    #[serde(default)]
    pub optim: OptimOptions,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EmbedMethod {
    Cerm,
    Sarkar,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbedConfig {
    pub graph: GraphSource,
    pub method: EmbedMethod,
    /// Required for `cerm`; `sarkar` always embeds in the hyperbolic plane.
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    /// Defaults to the calibrated Sarkar threshold for trees.
    #[serde(default)]
    pub g: Option<GFunc>,
    #[serde(default)]
    pub measure: MeasureSource,
    #[serde(default = "default_xi")]
    pub xi: f64,
    #[serde(default = "default_sample_size")]
    pub sample_size: usize,
    #[serde(default)]
    pub loss: LossSpec,
    #[serde(default)]
    pub optim: OptimOptions,
    #[serde(default)]
    pub seed: u64,
}

fn default_xi() -> f64 {
    1.0
}

fn default_sample_size() -> usize {
    1000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RcConfig {
    pub graph: GraphSource,
    #[serde(default)]
    pub measure: MeasureSource,
    #[serde(default = "default_xi")]
    pub xi: f64,
    pub space: SpaceSpec,
    pub g: GFunc,
    #[serde(default)]
    pub loss: LossSpec,
    pub sample_size: usize,
    pub trials: usize,
    #[serde(default)]
    pub local_r: Option<f64>,
    #[serde(default = "default_lip_g2")]
    pub lip_g2: f64,
    #[serde(default)]
    pub optim: OptimOptions,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub graph: GraphSource,
    #[serde(default)]
    pub measure: MeasureSource,
    pub xi: f64,
    /// Defaults to the hyperbolic plane with 1.2 times the calibrated Sarkar
    /// radius (trees only).
    #[serde(default)]
    pub space: Option<SpaceSpec>,
    #[serde(default)]
    pub g: Option<GFunc>,
    #[serde(default)]
    pub loss: LossSpec,
    pub sample_sizes: Vec<usize>,
    pub trials: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_lambda_mode")]
    pub lambda_mode: LambdaMode,
    #[serde(default)]
    pub optim: OptimOptions,
    #[serde(default)]
    pub seed: u64,
}

/// Reads and parses a config file, returning it with the directory that
/// relative paths resolve against.
pub fn load<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<(T, PathBuf), CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    let cfg = serde_json::from_str(&text)
        .map_err(|e| CliError::Validation(format!("config {}: {e}", path.display())))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    Ok((cfg, base))
}

pub fn distribution(
    graph: &Graph,
    measure: &MeasureSource,
    xi: f64,
) -> Result<DistributionSpec, CliError> {
    DistributionSpec::margin(graph, measure.build(graph)?, xi)
        .map_err(|e| CliError::Validation(e.to_string()))
}
