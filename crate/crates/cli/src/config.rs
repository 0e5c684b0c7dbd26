//! Experiment configuration: a TOML file with one table per stage, then
//! command-line overrides on top.

use std::path::{Path, PathBuf};

use chaosdesign::experiment::DiagramConfig;
use chaosdesign::skeleton::{self, Rossler, RosslerForm, VanDerPol};
use chaosdesign::{Error, EvalConfig, ReservoirSpec, Result, SearchConfig, Skeleton, TrainingConfig};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub reservoir: ReservoirSection,
    pub skeleton: SkeletonSection,
    pub training: TrainingConfig,
    pub evaluation: EvalConfig,
    pub search: SearchConfig,
    pub scan: ScanSection,
    pub diagrams: DiagramConfig,
    pub output: OutputSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ReservoirSection {
    pub n_nodes: usize,
    pub leak_rate: f64,
    pub spectral_scale: f64,
    pub input_scale: f64,
    pub seed: u64,
}

impl Default for ReservoirSection {
    fn default() -> Self {
        Self {
            n_nodes: 1000,
            leak_rate: 0.5,
            spectral_scale: 1.0,
            input_scale: 0.2,
            seed: 1,
        }
    }
}

impl ReservoirSection {
    pub fn spec(&self, input_dim: usize) -> ReservoirSpec {
        ReservoirSpec::new(
            self.n_nodes,
            input_dim,
            self.leak_rate,
            self.spectral_scale,
            self.input_scale,
            self.seed,
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SkeletonKind {
    #[default]
    Lissajous,
    Circle,
    VanDerPol,
    Rossler,
    Csv,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SkeletonSection {
    pub kind: SkeletonKind,
    /// Samples to generate; integrated skeletons default to the training
    /// plus evaluation length so they are never tiled across a seam.
    pub steps: Option<usize>,
    /// Circle period in steps.
    pub period: usize,
    pub mu: f64,
    pub c: f64,
    /// Sampling step of the integrated skeletons; generator default when absent.
    pub dt: Option<f64>,
    pub rossler_form: RosslerForm,
    /// A skeleton CSV: either raw points (with `resample`) or a file written
    /// by `skeleton`, whose sidecar then supplies label and period.
    pub path: Option<PathBuf>,
    pub resample: Option<usize>,
    pub close: bool,
    /// Zero-mean, max-abs-1 scaling; applied to CSV curves unless disabled.
    pub normalize: Option<bool>,
}

impl Default for SkeletonSection {
    fn default() -> Self {
        Self {
            kind: SkeletonKind::Lissajous,
            steps: None,
            period: 100,
            mu: VanDerPol::default().mu,
            c: Rossler::default().c,
            dt: None,
            rossler_form: RosslerForm::Standard,
            path: None,
            resample: None,
            close: false,
            normalize: None,
        }
    }
}

impl SkeletonSection {
    /// Builds the skeleton; `needed` is the number of steps the run consumes.
    pub fn build(&self, needed: usize) -> Result<(Skeleton, serde_json::Value)> {
        let source = serde_json::to_value(self).map_err(|e| Error::Format(e.to_string()))?;
        let sk = match self.kind {
            SkeletonKind::Lissajous => skeleton::lissajous(self.steps.unwrap_or(100)),
            SkeletonKind::Circle => skeleton::unit_circle(self.steps.unwrap_or(self.period), self.period)?,
            SkeletonKind::VanDerPol => {
                let mut g = VanDerPol {
                    mu: self.mu,
                    ..VanDerPol::default()
                };
                if let Some(dt) = self.dt {
                    g.dt = dt;
                }
                g.generate(self.steps.unwrap_or(needed))?
            }
            SkeletonKind::Rossler => {
                let mut g = Rossler {
                    c: self.c,
                    form: self.rossler_form,
                    ..Rossler::default()
                };
                if let Some(dt) = self.dt {
                    g.dt = dt;
                }
                g.generate(self.steps.unwrap_or(needed))?
            }
            SkeletonKind::Csv => {
                let path = self
                    .path
                    .as_deref()
                    .ok_or_else(|| Error::Input("the csv skeleton needs a path".into()))?;
                load_csv_skeleton(path, self.resample, self.close)?
            }
        };
        let normalize = self.normalize.unwrap_or(self.kind == SkeletonKind::Csv && self.resample.is_some());
        Ok((if normalize { sk.normalized() } else { sk }, source))
    }
}

/// Reads a CSV curve. With `resample` the rows are raw points to be resampled
/// along arc length; without it the file is taken as written (sidecar aware).
pub fn load_csv_skeleton(path: &Path, resample: Option<usize>, close: bool) -> Result<Skeleton> {
    match resample {
        Some(count) => skeleton::load_csv(path, count, close),
        None => chaosdesign::io::read_skeleton(path),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScanParam {
    #[default]
    Rho,
    TInit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScanSection {
    pub param: ScanParam,
    pub from: f64,
    pub to: f64,
    pub step: f64,
    /// Minimum share of grid points that must evaluate without error.
    pub min_success: f64,
}

impl Default for ScanSection {
    fn default() -> Self {
        Self {
            param: ScanParam::Rho,
            from: 1.28,
            to: 1.30,
            step: 5e-4,
            min_success: 0.9,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSection {
    pub dir: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Input(format!("cannot read config {}: {e}", path.display())))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn parse(text: &str, name: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Input(format!("{name}: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.reservoir.spec(1).validate()?;
        self.evaluation.validate()?;
        self.search.validate()?;
        if let Some(p) = &self.skeleton.path {
            if !p.exists() {
                return Err(Error::Input(format!("skeleton file {} does not exist", p.display())));
            }
        }
        if !(0.0..=1.0).contains(&self.scan.min_success) {
            return Err(Error::Input("scan.min_success must lie in [0, 1]".into()));
        }
        Ok(())
    }

    /// Steps of skeleton consumed by training plus open-loop evaluation.
    pub fn steps_needed(&self) -> usize {
        self.training.handoff_index() + self.evaluation.open_loop.steps
    }
}
