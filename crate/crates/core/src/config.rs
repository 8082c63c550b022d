//! Run configuration: a flat key-value TOML file with a full default set,
//! merged with command-line overrides. An empty config file reproduces the
//! reference setup (T = 10 trials, K = 2, three GCN layers at 200/200/100,
//! 500 pretraining + 2500 joint epochs).

use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::error::{Error, Result};
use crate::train::TrainConfig;

/// Where samples come from: a dataset directory or the synthetic generator.
#[derive(Debug, Clone)]
pub enum DataSource {
    Directory(PathBuf),
    Synthetic { n: usize, d: usize, snr: [f64; 3] },
}

/// Fully resolved configuration for one pipeline run.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub source: DataSource,
    pub train: TrainConfig,
    /// Tune stage plan and thresholds on the test block (reference-faithful
    /// but leaky) instead of a validation carve from the training block.
    pub tune_on_test: bool,
    /// Fraction of the training block carved out for tuning when
    /// `tune_on_test` is false.
    pub tune_fraction: f64,
    pub view_costs: [f64; 3],
    pub histogram_bins: usize,
    pub out_dir: PathBuf,
    pub save_checkpoints: bool,
}

/// On-disk schema. Every key is optional; omitted keys take the defaults
/// listed here.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Dataset directory (mutually exclusive with the synth_* keys).
    pub data_dir: Option<String>,
    /// Synthetic sample count (enables the generator).
    pub synth_samples: Option<usize>,
    pub synth_features: Option<usize>,
    pub synth_snr: Option<[f64; 3]>,

    pub lr: Option<f64>,
    pub pretrain_epochs: Option<usize>,
    pub joint_epochs: Option<usize>,
    pub trials: Option<usize>,
    pub k_target: Option<f64>,
    pub dropout: Option<f64>,
    pub seed: Option<u64>,
    pub gcn_hidden: Option<Vec<usize>>,
    pub head_hidden: Option<usize>,

    pub tune_on_test: Option<bool>,
    pub tune_fraction: Option<f64>,
    pub view_costs: Option<[f64; 3]>,
    pub histogram_bins: Option<usize>,
    pub out_dir: Option<String>,
    pub save_checkpoints: Option<bool>,
}

/// Command-line overrides applied on top of the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub data_dir: Option<PathBuf>,
    pub synth: Option<(usize, usize, [f64; 3])>,
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub tune_on_test: bool,
}

impl FileConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn resolve(self, overrides: Overrides) -> Result<RunConfig> {
        let file_synth = match (self.synth_samples, self.synth_features, self.synth_snr) {
            (None, None, None) => None,
            (Some(n), d, snr) => Some((n, d.unwrap_or(10), snr.unwrap_or([3.0, 0.5, 0.5]))),
            _ => {
                return Err(Error::Config(
                    "synth_features/synth_snr given without synth_samples".to_string(),
                ))
            }
        };

        let source = match (
            overrides.data_dir,
            overrides.synth,
            self.data_dir.map(PathBuf::from),
            file_synth,
        ) {
            (Some(dir), None, _, _) => DataSource::Directory(dir),
            (None, Some((n, d, snr)), _, _) => DataSource::Synthetic { n, d, snr },
            (Some(_), Some(_), _, _) => {
                return Err(Error::Config(
                    "--data and --synth are mutually exclusive".to_string(),
                ))
            }
            (None, None, Some(dir), None) => DataSource::Directory(dir),
            (None, None, None, Some((n, d, snr))) => DataSource::Synthetic { n, d, snr },
            (None, None, Some(_), Some(_)) => {
                return Err(Error::Config(
                    "config sets both data_dir and synth_samples; pick one".to_string(),
                ))
            }
            (None, None, None, None) => {
                return Err(Error::Config(
                    "no data source: set data_dir or synth_samples (or pass --data/--synth)"
                        .to_string(),
                ))
            }
        };

        let defaults = TrainConfig::default();
        let train = TrainConfig {
            lr: self.lr.unwrap_or(defaults.lr),
            pretrain_epochs: self.pretrain_epochs.unwrap_or(defaults.pretrain_epochs),
            joint_epochs: self.joint_epochs.unwrap_or(defaults.joint_epochs),
            trials: self.trials.unwrap_or(defaults.trials),
            k_target: self.k_target.unwrap_or(defaults.k_target),
            dropout: self.dropout.unwrap_or(defaults.dropout),
            seed: overrides.seed.or(self.seed).unwrap_or(defaults.seed),
            view_subset: vec![0, 1, 2],
            gcn_hidden: self.gcn_hidden.unwrap_or(defaults.gcn_hidden),
            head_hidden: self.head_hidden.unwrap_or(defaults.head_hidden),
        };
        train.validate()?;

        let view_costs = self.view_costs.unwrap_or([1.0, 1.0, 1.0]);
        if view_costs.iter().any(|&c| c < 0.0 || !c.is_finite()) {
            return Err(Error::Config(format!(
                "view_costs must be non-negative, got {view_costs:?}"
            )));
        }
        let tune_fraction = self.tune_fraction.unwrap_or(0.2);
        if !(0.0..1.0).contains(&tune_fraction) || tune_fraction == 0.0 {
            return Err(Error::Config(format!(
                "tune_fraction {tune_fraction} outside (0, 1)"
            )));
        }
        let histogram_bins = self.histogram_bins.unwrap_or(20);
        if histogram_bins == 0 {
            return Err(Error::Config("histogram_bins must be ≥ 1".to_string()));
        }

        Ok(RunConfig {
            source,
            train,
            tune_on_test: overrides.tune_on_test || self.tune_on_test.unwrap_or(false),
            tune_fraction,
            view_costs,
            histogram_bins,
            out_dir: overrides
                .out_dir
                .or_else(|| self.out_dir.map(PathBuf::from))
                .unwrap_or_else(|| PathBuf::from("run_out")),
            save_checkpoints: self.save_checkpoints.unwrap_or(true),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_config_uses_reference_defaults() {
        let cfg: FileConfig = toml::from_str("synth_samples = 40").unwrap();
        let run = cfg.resolve(Overrides::default()).unwrap();
        assert_eq!(run.train.trials, 10);
        assert_eq!(run.train.k_target, 2.0);
        assert_eq!(run.train.gcn_hidden, vec![200, 200, 100]);
        assert_eq!(run.train.pretrain_epochs, 500);
        assert_eq!(run.train.joint_epochs, 2500);
        assert!(!run.tune_on_test);
    }

    #[test]
    fn exactly_one_source_required() {
        let cfg: FileConfig = toml::from_str("").unwrap();
        assert!(cfg.resolve(Overrides::default()).is_err());

        let cfg: FileConfig = toml::from_str("data_dir = \"x\"\nsynth_samples = 10").unwrap();
        assert!(cfg.resolve(Overrides::default()).is_err());
    }

    #[test]
    fn overrides_win_over_file() {
        let cfg: FileConfig = toml::from_str("data_dir = \"from_file\"\nseed = 5").unwrap();
        let run = cfg
            .resolve(Overrides {
                seed: Some(99),
                out_dir: Some(PathBuf::from("elsewhere")),
                tune_on_test: true,
                ..Default::default()
            })
            .unwrap();
        assert_eq!(run.train.seed, 99);
        assert!(run.tune_on_test);
        assert_eq!(run.out_dir, PathBuf::from("elsewhere"));
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(toml::from_str::<FileConfig>("mystery_knob = 3").is_err());
    }

    #[test]
    fn bad_values_rejected() {
        let cfg: FileConfig =
            toml::from_str("synth_samples = 40\nview_costs = [1.0, -2.0, 1.0]").unwrap();
        assert!(cfg.resolve(Overrides::default()).is_err());

        let cfg: FileConfig = toml::from_str("synth_samples = 40\ntune_fraction = 1.5").unwrap();
        assert!(cfg.resolve(Overrides::default()).is_err());
    }
}
