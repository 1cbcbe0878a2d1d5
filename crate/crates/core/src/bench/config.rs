use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::data::{LabelColumn, Scaling};
use crate::error::{KrvError, Result};
use crate::kernels::KernelSpec;

/// The learners the benchmark can evaluate, in report column order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LearnerKind {
    Knn,
    Wnn,
    Kernn,
    Krv,
    RvmGauss,
    RvmBern,
}

impl LearnerKind {
    pub const ALL: [LearnerKind; 6] = [
        LearnerKind::Knn,
        LearnerKind::Wnn,
        LearnerKind::Kernn,
        LearnerKind::Krv,
        LearnerKind::RvmGauss,
        LearnerKind::RvmBern,
    ];

    pub fn id(self) -> &'static str {
        match self {
            LearnerKind::Knn => "knn",
            LearnerKind::Wnn => "wnn",
            LearnerKind::Kernn => "kernn",
            LearnerKind::Krv => "krv",
            LearnerKind::RvmGauss => "rvm_gauss",
            LearnerKind::RvmBern => "rvm_bern",
        }
    }

    pub fn uses_k(self) -> bool {
        !matches!(self, LearnerKind::RvmGauss | LearnerKind::RvmBern)
    }

    pub fn uses_kernel(self) -> bool {
        !matches!(self, LearnerKind::Knn | LearnerKind::Wnn)
    }

    pub fn uses_delta(self) -> bool {
        matches!(
            self,
            LearnerKind::Krv | LearnerKind::RvmGauss | LearnerKind::RvmBern
        )
    }

    /// Learners whose fitted model is a set of relevance vectors.
    pub fn is_sparse(self) -> bool {
        self.uses_delta()
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for LearnerKind {
    type Err = KrvError;

    fn from_str(s: &str) -> Result<Self> {
        LearnerKind::ALL
            .into_iter()
            .find(|l| l.id() == s.trim().to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| KrvError::Config(format!("unknown learner {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelFamily {
    Gaussian,
    Polynomial,
}

impl fmt::Display for KernelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KernelFamily::Gaussian => "gaussian",
            KernelFamily::Polynomial => "polynomial",
        })
    }
}

impl FromStr for KernelFamily {
    type Err = KrvError;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "gaussian" | "rbf" => Ok(KernelFamily::Gaussian),
            "polynomial" | "poly" => Ok(KernelFamily::Polynomial),
            other => Err(KrvError::Config(format!("unknown kernel {other:?}"))),
        }
    }
}

pub fn default_k_grid() -> Vec<usize> {
    (1..=51).collect()
}

/// 0.05, 0.10, ..., 1.00 (computed as i/20 so every entry is the nearest
/// double to its decimal).
pub fn default_width_grid() -> Vec<f64> {
    (1..=20).map(|i| f64::from(i) / 20.0).collect()
}

pub fn default_delta_grid() -> Vec<f64> {
    vec![1e-6, 1e-5, 1e-4, 1e-3, 1e-2, 1e-1, 1.0, 10.0]
}

/// Benchmark configuration, read from TOML. Every key is optional except
/// `datasets`; unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub datasets: Vec<PathBuf>,
    pub learners: Vec<LearnerKind>,
    pub kernel: KernelFamily,
    pub k_grid: Vec<usize>,
    pub width_grid: Vec<f64>,
    pub delta_grid: Vec<f64>,
    pub poly_order: u32,
    /// Attribute rescaling applied on each training fold before kernel
    /// expansion (kernel learners only).
    pub scaling: Scaling,
    pub runs: usize,
    pub folds: usize,
    pub seed: u64,
    pub output_dir: PathBuf,
    /// `last`, a 0-based index, or a header name.
    pub label_column: String,
    /// Evaluate folds on the rayon pool; results are identical either way.
    pub parallel: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            datasets: Vec::new(),
            learners: LearnerKind::ALL.to_vec(),
            kernel: KernelFamily::Gaussian,
            k_grid: default_k_grid(),
            width_grid: default_width_grid(),
            delta_grid: default_delta_grid(),
            poly_order: 2,
            scaling: Scaling::default(),
            runs: 10,
            folds: 10,
            seed: 1,
            output_dir: PathBuf::from("report"),
            label_column: "last".to_string(),
            parallel: false,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| KrvError::Config(e.to_string()))
    }

    /// Reads a config file; relative dataset and output paths are resolved
    /// against the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| KrvError::io(path, e))?;
        let mut cfg = Self::from_toml_str(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for d in &mut cfg.datasets {
            if d.is_relative() {
                *d = base.join(&*d);
            }
        }
        if cfg.output_dir.is_relative() {
            cfg.output_dir = base.join(&cfg.output_dir);
        }
        Ok(cfg)
    }

    pub fn label(&self) -> LabelColumn {
        match self.label_column.parse() {
            Ok(l) => l,
            Err(never) => match never {},
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(KrvError::Config(m.to_string()));
        if self.learners.is_empty() {
            return bad("learner set is empty");
        }
        if self.datasets.is_empty() {
            return bad("no datasets configured");
        }
        if self.runs == 0 {
            return bad("runs must be at least 1");
        }
        if self.folds < 2 {
            return bad("folds must be at least 2");
        }
        let uses = |f: fn(LearnerKind) -> bool| self.learners.iter().any(|&l| f(l));
        if uses(LearnerKind::uses_k) && (self.k_grid.is_empty() || self.k_grid.contains(&0)) {
            return bad("k_grid must be non-empty and hold positive values");
        }
        if uses(LearnerKind::uses_kernel) && self.kernel == KernelFamily::Gaussian {
            if self.width_grid.is_empty() {
                return bad("width_grid is empty");
            }
            for &w in &self.width_grid {
                KernelSpec::gaussian(w).map_err(|e| KrvError::Config(e.to_string()))?;
            }
        }
        if uses(LearnerKind::uses_delta)
            && (self.delta_grid.is_empty() || self.delta_grid.iter().any(|d| !(*d > 0.0)))
        {
            return bad("delta_grid must be non-empty and hold positive values");
        }
        if self.kernel == KernelFamily::Polynomial && self.poly_order == 0 {
            return bad("poly_order must be at least 1");
        }
        Ok(())
    }

    /// Kernels swept by kernel learners: one per width, or the single
    /// polynomial (whose only parameter is its order).
    pub fn kernels(&self) -> Result<Vec<KernelSpec>> {
        match self.kernel {
            KernelFamily::Gaussian => self
                .width_grid
                .iter()
                .map(|&w| KernelSpec::gaussian(w))
                .collect(),
            KernelFamily::Polynomial => Ok(vec![KernelSpec::polynomial(self.poly_order)?]),
        }
    }

    /// Grid size of one learner.
    pub fn grid_size(&self, learner: LearnerKind) -> usize {
        let k = if learner.uses_k() {
            self.k_grid.len()
        } else {
            1
        };
        let kernels = if learner.uses_kernel() {
            match self.kernel {
                KernelFamily::Gaussian => self.width_grid.len(),
                KernelFamily::Polynomial => 1,
            }
        } else {
            1
        };
        let delta = if learner.uses_delta() {
            self.delta_grid.len()
        } else {
            1
        };
        k * kernels * delta
    }
}
