use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use llpr::data::{BimodalSpec, CsvOptions, SplitSpec, COS2_TOY_NOISE, COS2_TOY_POINTS};
use llpr::llpr::{CalibrationGrid, CalibrationObjective};
use llpr::models::{Activation, BiasMode, MlpArchitecture};
use llpr::train::{LbfgsOptions, TrainConfig};

/// A config that failed to parse or validate; maps to exit code 2.
#[derive(Debug, thiserror::Error)]
#[error("invalid config: {0}")]
pub struct ConfigError(pub String);

fn bad<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    ToyFit,
    Benchmark,
    Ood,
    NtkStudy,
    WidthStudy,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            ExperimentKind::ToyFit => "toy-fit",
            ExperimentKind::Benchmark => "benchmark",
            ExperimentKind::Ood => "ood",
            ExperimentKind::NtkStudy => "ntk-study",
            ExperimentKind::WidthStudy => "width-study",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Cos2 {
        noise: f64,
        points: Vec<f64>,
    },
    Csv {
        path: PathBuf,
        csv: CsvOptions,
    },
    /// An entry of a dataset manifest, fetched into the cache directory.
    Manifest {
        manifest: PathBuf,
        name: String,
    },
    Bimodal {
        n_samples: usize,
        n_features: usize,
        low_fraction: f64,
        low_center: f64,
        high_center: f64,
        mode_std: f64,
        noise: f64,
    },
    Heteroscedastic {
        n_samples: usize,
        n_features: usize,
        noise: f64,
    },
}

impl DataSource {
    pub fn bimodal(spec: &BimodalSpec) -> Self {
        DataSource::Bimodal {
            n_samples: spec.n_samples,
            n_features: spec.n_features,
            low_fraction: spec.low_fraction,
            low_center: spec.low_center,
            high_center: spec.high_center,
            mode_std: spec.mode_std,
            noise: spec.noise,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AngleColumn {
    pub column: usize,
    pub degrees: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preprocess {
    pub standardize: bool,
    /// Replaced by `(cos, sin)` pairs before standardization.
    pub angle_columns: Vec<AngleColumn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToySection {
    /// Point between the training clusters whose variance is reported.
    pub probe: f64,
    pub curve_low: f64,
    pub curve_high: f64,
    pub curve_points: usize,
    pub polynomial_degree: usize,
    /// `(prefactor, mean, variance)` starting point of the Gaussian sum.
    pub gaussian_initial: Vec<[f64; 3]>,
    pub lbfgs: LbfgsOptions,
    /// ς² for the network's last layer, relative to `tr(FᵀF)/N_L`.
    pub relative_regularizer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkSection {
    pub manifest: PathBuf,
    pub datasets: Vec<String>,
    pub n_splits: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OodSection {
    pub feature: usize,
    /// In-domain samples have standardized feature value above this.
    pub threshold: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NtkSection {
    pub activations: Vec<Activation>,
    pub max_depth: usize,
    /// Input inner products of the unit-norm pairs in the gap study.
    pub inner_products: Vec<f64>,
    pub input_dim: usize,
    pub quadrature_order: usize,
    /// Correlations tabulated by the recursion check.
    pub recursion_points: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WidthSection {
    pub widths: Vec<usize>,
    pub seeds: Vec<u64>,
}

/// Everything a run depends on besides the dataset cache.
///
/// `seed` drives every random choice: split `k` of a run uses
/// `seed + k` for both the permutation and the network initialization,
/// replacing `split.seed` and `train.seed`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: ExperimentKind,
    pub seed: u64,
    pub output_dir: PathBuf,
    pub cache_dir: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data: Option<DataSource>,
    pub preprocess: Preprocess,
    pub split: SplitSpec,
    pub model: MlpArchitecture,
    pub train: TrainConfig,
    /// Absent means raw (uncalibrated) variances.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibration: Option<CalibrationGrid>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub toy: Option<ToySection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub benchmark: Option<BenchmarkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ood: Option<OodSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ntk: Option<NtkSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<WidthSection>,
}

impl ExperimentConfig {
    /// Complete defaults for one experiment kind.
    pub fn defaults(kind: ExperimentKind) -> Self {
        let mut c = Self {
            kind,
            seed: 0,
            output_dir: PathBuf::from(format!("runs/{}", kind.name())),
            cache_dir: PathBuf::from("cache"),
            data: None,
            preprocess: Preprocess {
                standardize: true,
                angle_columns: Vec::new(),
            },
            split: SplitSpec::default(),
            model: MlpArchitecture::new(1, vec![32, 32], Activation::Silu),
            train: TrainConfig::default(),
            calibration: Some(CalibrationGrid::default()),
            toy: None,
            benchmark: None,
            ood: None,
            ntk: None,
            width: None,
        };
        match kind {
            ExperimentKind::ToyFit => {
                c.data = Some(DataSource::Cos2 {
                    noise: COS2_TOY_NOISE,
                    points: COS2_TOY_POINTS.to_vec(),
                });
                c.preprocess.standardize = false;
                c.calibration = None;
                c.train.epochs = 3000;
                c.train.learning_rate = 1e-2;
                c.train.weight_decay = 0.0;
                c.train.patience_epochs = 300;
                c.toy = Some(ToySection {
                    probe: 0.4,
                    curve_low: -1.2,
                    curve_high: 1.2,
                    curve_points: 241,
                    polynomial_degree: 3,
                    gaussian_initial: vec![[0.6, -0.9, 0.4], [0.6, 0.9, 0.4]],
                    lbfgs: LbfgsOptions::default(),
                    relative_regularizer: 1e-6,
                });
            }
            ExperimentKind::Benchmark => {
                c.model = MlpArchitecture::new(1, vec![50], Activation::Silu);
                c.calibration = Some(CalibrationGrid::default().with_objective(CalibrationObjective::ValidationNll));
                c.benchmark = Some(BenchmarkSection {
                    manifest: PathBuf::from("datasets/manifest.jsonl"),
                    datasets: vec!["energy".into(), "yacht".into(), "concrete".into()],
                    n_splits: 20,
                });
            }
            ExperimentKind::Ood => {
                let spec = BimodalSpec::default();
                c.data = Some(DataSource::bimodal(&spec));
                c.model = MlpArchitecture::new(spec.n_features, vec![128, 128], Activation::Silu);
                c.split = SplitSpec::new(0.6, 0.2, 0.2, 0);
                c.ood = Some(OodSection {
                    feature: 0,
                    threshold: -0.3,
                });
            }
            ExperimentKind::NtkStudy => {
                c.calibration = None;
                c.ntk = Some(NtkSection {
                    activations: vec![Activation::Tanh, Activation::Erf, Activation::Identity, Activation::Relu, Activation::Silu],
                    max_depth: 3,
                    inner_products: vec![-0.2, -0.1, -0.05, 0.05, 0.1, 0.2],
                    input_dim: 2,
                    quadrature_order: llpr::ntk::DEFAULT_QUADRATURE_ORDER,
                    recursion_points: 21,
                });
            }
            ExperimentKind::WidthStudy => {
                c.data = Some(DataSource::Heteroscedastic {
                    n_samples: 2500,
                    n_features: 2,
                    noise: 0.1,
                });
                c.split = SplitSpec::new(0.2, 0.2, 0.6, 0);
                c.model = MlpArchitecture::new(2, vec![4, 4], Activation::Silu).with_bias(BiasMode::None);
                c.width = Some(WidthSection {
                    widths: vec![4, 16, 64, 256],
                    seeds: vec![0, 1, 2],
                });
            }
        }
        c
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let c: Self = toml::from_str(text).map_err(|e| ConfigError(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<(Self, String), ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok((Self::from_toml(&text)?, text))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Checks everything that can be checked without touching data.
    pub fn validate(&self) -> Result<(), ConfigError> {
        let wrap = |r: llpr::Result<()>| r.map_err(|e| ConfigError(e.to_string()));
        wrap(self.split.validate())?;
        wrap(self.train.validate())?;
        if self.kind != ExperimentKind::NtkStudy {
            wrap(self.model.validate())?;
        }
        if let Some(g) = &self.calibration {
            wrap(g.validate())?;
        }
        let need_data = !matches!(self.kind, ExperimentKind::Benchmark | ExperimentKind::NtkStudy);
        if need_data && self.data.is_none() {
            return bad(format!("{} needs a [data] section", self.kind.name()));
        }
        match &self.data {
            Some(DataSource::Cos2 { noise, points }) => {
                if !(*noise >= 0.0) || points.is_empty() {
                    return bad("cos2 data needs noise ≥ 0 and at least one point");
                }
            }
            Some(DataSource::Bimodal { n_samples, n_features, mode_std, low_fraction, noise, .. }) => {
                if *n_samples < 3 || *n_features == 0 || !(*mode_std > 0.0) || !(0.0..=1.0).contains(low_fraction) || !(*noise >= 0.0) {
                    return bad("bimodal data needs n_samples ≥ 3, n_features ≥ 1, mode_std > 0, low_fraction in [0, 1], noise ≥ 0");
                }
            }
            Some(DataSource::Heteroscedastic { n_samples, n_features, noise }) => {
                if *n_samples < 3 || *n_features == 0 || !(*noise >= 0.0) {
                    return bad("heteroscedastic data needs n_samples ≥ 3, n_features ≥ 1, noise ≥ 0");
                }
            }
            _ => {}
        }
        match self.kind {
            ExperimentKind::ToyFit => {
                let Some(t) = &self.toy else { return bad("toy-fit needs a [toy] section") };
                if t.curve_points < 2 || !(t.curve_high > t.curve_low) {
                    return bad("toy curve needs at least 2 points on a nonempty interval");
                }
                if t.gaussian_initial.is_empty() || t.gaussian_initial.iter().any(|g| !(g[2] > 0.0)) {
                    return bad("toy gaussian_initial needs components with positive variance");
                }
                if !(t.relative_regularizer > 0.0) {
                    return bad("toy relative_regularizer must be positive");
                }
                if !matches!(self.data, Some(DataSource::Cos2 { .. })) {
                    return bad("toy-fit uses cos2 data");
                }
            }
            ExperimentKind::Benchmark => {
                let Some(b) = &self.benchmark else { return bad("benchmark needs a [benchmark] section") };
                if b.n_splits == 0 || b.datasets.is_empty() {
                    return bad("benchmark needs at least one dataset and one split");
                }
            }
            ExperimentKind::Ood => {
                let Some(o) = &self.ood else { return bad("ood needs an [ood] section") };
                if o.feature >= self.model.input_dim {
                    return bad(format!("ood feature {} out of range for input_dim {}", o.feature, self.model.input_dim));
                }
                if self.calibration.is_none() {
                    return bad("ood needs a [calibration] grid");
                }
            }
            ExperimentKind::NtkStudy => {
                let Some(n) = &self.ntk else { return bad("ntk-study needs an [ntk] section") };
                if n.activations.is_empty() || n.max_depth == 0 || n.input_dim < 2 || n.recursion_points < 2 {
                    return bad("ntk study needs activations, max_depth ≥ 1, input_dim ≥ 2, recursion_points ≥ 2");
                }
                if n.inner_products.iter().any(|p| !(p.abs() <= 1.0)) {
                    return bad("ntk inner products must lie in [-1, 1]");
                }
                if n.quadrature_order < 2 {
                    return bad("quadrature_order must be at least 2");
                }
                if let Some(w) = &self.width {
                    self.check_width(w)?;
                }
            }
            ExperimentKind::WidthStudy => {
                let Some(w) = &self.width else { return bad("width-study needs a [width] section") };
                self.check_width(w)?;
                if self.calibration.is_none() {
                    return bad("width-study needs a [calibration] grid");
                }
            }
        }
        Ok(())
    }

    fn check_width(&self, w: &WidthSection) -> Result<(), ConfigError> {
        llpr::ntk::validate_widths(&w.widths).map_err(|e| ConfigError(e.to_string()))?;
        if w.seeds.is_empty() {
            return bad("width study needs at least one seed");
        }
        Ok(())
    }

    /// Split of run `k`.
    pub fn split_for(&self, k: u64) -> SplitSpec {
        self.split.with_seed(self.seed.wrapping_add(k))
    }

    /// Training config of run `k`.
    pub fn train_for(&self, k: u64) -> TrainConfig {
        TrainConfig {
            seed: self.seed.wrapping_add(k),
            ..self.train.clone()
        }
    }

    pub fn grid(&self) -> Option<&CalibrationGrid> {
        self.calibration.as_ref()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_and_validate() {
        for kind in [
            ExperimentKind::ToyFit,
            ExperimentKind::Benchmark,
            ExperimentKind::Ood,
            ExperimentKind::NtkStudy,
            ExperimentKind::WidthStudy,
        ] {
            let c = ExperimentConfig::defaults(kind);
            c.validate().unwrap();
            let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
            assert_eq!(back, c, "{}", kind.name());
        }
    }

    #[test]
    fn bad_fractions_rejected() {
        let mut c = ExperimentConfig::defaults(ExperimentKind::Ood);
        c.split.test = 0.3;
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_toml("kind = \"toy-fit\"\nbogus = 1\n").is_err());
    }
}
