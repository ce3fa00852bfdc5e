use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use evbattery::capacity::{CapacitySettings, RegressorConfig, RegressorKind};
use evbattery::detectors::DetectorSpec;
use evbattery::evalkit::DetectionSettings;
use evbattery::exec::Execution;
use evbattery::synthgen::GenConfig;
use serde::{Deserialize, Serialize};

/// Written next to every run's outputs.
pub const RESOLVED_CONFIG: &str = "config.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum DetectorKind {
    Dyad,
    Ae,
    Variance,
}

/// Cross-validation knobs shared by detection and capacity runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Protocol {
    pub folds: usize,
    pub h_grid: Vec<f64>,
    pub tau_levels: usize,
    pub roc_grid_points: usize,
}

impl Default for Protocol {
    fn default() -> Self {
        let d = DetectionSettings::default();
        Protocol {
            folds: d.folds,
            h_grid: d.h_grid,
            tau_levels: d.tau_levels,
            roc_grid_points: d.roc_grid_points,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Master seed; generation, folds and models derive from it.
    pub seed: u64,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    /// Run on one thread even when built with the parallel feature.
    pub sequential: bool,
    pub generate: GenConfig,
    pub detector: DetectorSpec,
    pub regressor: RegressorConfig,
    pub protocol: Protocol,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 42,
            out: PathBuf::from("run"),
            data: None,
            sequential: false,
            generate: GenConfig::default(),
            detector: DetectorSpec::dyad(),
            regressor: RegressorConfig::default(),
            protocol: Protocol::default(),
        }
    }
}

pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub detector: Option<DetectorKind>,
    pub regressor: Option<RegressorKind>,
    pub anonymize: Option<bool>,
    pub folds: Option<usize>,
    pub data: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let cfg = if path.extension().is_some_and(|e| e == "json") {
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        } else {
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        };
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> anyhow::Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    /// Command-line values win; the master seed is copied into the generator.
    pub fn apply_overrides(&mut self, o: Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        self.generate.seed = self.seed;
        if let Some(out) = o.out {
            self.out = out;
        }
        if let Some(kind) = o.detector {
            let same = matches!(
                (kind, &self.detector),
                (DetectorKind::Dyad, DetectorSpec::Dyad(_))
                    | (DetectorKind::Ae, DetectorSpec::Ae(_))
                    | (DetectorKind::Variance, DetectorSpec::Variance { .. })
            );
            if !same {
                self.detector = match kind {
                    DetectorKind::Dyad => DetectorSpec::dyad(),
                    DetectorKind::Ae => DetectorSpec::ae(),
                    DetectorKind::Variance => DetectorSpec::variance(),
                };
            }
        }
        if let Some(kind) = o.regressor {
            self.regressor.kind = kind;
        }
        if let Some(a) = o.anonymize {
            self.generate.anonymize = a;
        }
        if let Some(k) = o.folds {
            self.protocol.folds = k;
        }
        if o.data.is_some() {
            self.data = o.data;
        }
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.protocol.folds < 2 {
            bail!("--folds must be at least 2");
        }
        self.generate.validate()?;
        match &self.detector {
            DetectorSpec::Dyad(c) => c.validate()?,
            DetectorSpec::Ae(c) => c.validate()?,
            DetectorSpec::Variance { .. } => {}
        }
        self.regressor.validate()?;
        Ok(())
    }

    pub fn execution(&self) -> Execution {
        if self.sequential {
            Execution::Sequential
        } else {
            Execution::default()
        }
    }

    pub fn detection_settings(&self) -> DetectionSettings {
        DetectionSettings {
            folds: self.protocol.folds,
            seed: self.seed,
            h_grid: self.protocol.h_grid.clone(),
            tau_levels: self.protocol.tau_levels,
            roc_grid_points: self.protocol.roc_grid_points,
            execution: self.execution(),
        }
    }

    pub fn capacity_settings(&self) -> CapacitySettings {
        CapacitySettings {
            folds: self.protocol.folds,
            seed: self.seed,
            execution: self.execution(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn none() -> Overrides {
        Overrides {
            seed: None,
            out: None,
            detector: None,
            regressor: None,
            anonymize: None,
            folds: None,
            data: None,
        }
    }

    #[test]
    fn toml_round_trip_with_partial_file() {
        let cfg: RunConfig = toml::from_str(
            r#"
            seed = 7
            [generate]
            n_normal = 6
            [detector]
            kind = "ae"
            dropout = 0.2
            [regressor]
            kind = "ridge"
            "#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.generate.n_normal, 6);
        assert!(matches!(&cfg.detector, DetectorSpec::Ae(c) if c.dropout == 0.2 && c.hidden == vec![64, 32, 32, 64]));
        assert_eq!(cfg.regressor.kind, RegressorKind::Ridge);
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<RunConfig>(&json).unwrap(), cfg);
    }

    #[test]
    fn overrides_take_precedence() {
        let mut cfg = RunConfig::default();
        cfg.apply_overrides(Overrides {
            seed: Some(9),
            detector: Some(DetectorKind::Variance),
            folds: Some(3),
            anonymize: Some(true),
            ..none()
        });
        assert_eq!((cfg.seed, cfg.generate.seed, cfg.protocol.folds), (9, 9, 3));
        assert!(cfg.generate.anonymize);
        assert_eq!(cfg.detector.name(), "variance");
    }

    #[test]
    fn same_detector_override_keeps_custom_settings() {
        let mut cfg = RunConfig::default();
        if let DetectorSpec::Dyad(c) = &mut cfg.detector {
            c.hidden_size = 8;
        }
        cfg.apply_overrides(Overrides {
            detector: Some(DetectorKind::Dyad),
            ..none()
        });
        assert!(matches!(&cfg.detector, DetectorSpec::Dyad(c) if c.hidden_size == 8));
    }

    #[test]
    fn too_few_folds_is_rejected() {
        let mut cfg = RunConfig::default();
        cfg.protocol.folds = 1;
        assert!(cfg.validate().is_err());
    }
}
