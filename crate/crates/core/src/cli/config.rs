//! Versioned TOML experiment configuration.
//!
//! Every table is optional and falls back to the full-scale defaults. Unknown
//! keys anywhere in the document are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::acceptance::Suite;
use crate::arch::{ArchKind, ArchitectureSpec, SamplingScheme};
use crate::error::{Error, Result};
use crate::kernel::{Kernel, KernelKind, DEFAULT_GAMMA};
use crate::net::Optimizer;
use crate::smooth::DEFAULT_GRID;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    pub kind: ArchKind,
    pub depth: usize,
    #[serde(default = "tenth")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub sigma_w: f64,
    #[serde(default = "one")]
    pub sigma_v: f64,
}

fn tenth() -> f64 {
    0.1
}
fn one() -> f64 {
    1.0
}

impl ArchConfig {
    pub fn resnet(depth: usize, alpha: f64) -> Self {
        ArchConfig { kind: ArchKind::ResNet, depth, alpha, sigma_w: 1.0, sigma_v: 1.0 }
    }

    pub fn mlp(depth: usize) -> Self {
        ArchConfig { kind: ArchKind::Mlp, depth, alpha: 0.0, sigma_w: 1.0, sigma_v: 1.0 }
    }

    pub fn spec(&self) -> Result<ArchitectureSpec> {
        let base = match self.kind {
            ArchKind::Mlp => ArchitectureSpec::mlp(self.depth),
            ArchKind::ResNet => ArchitectureSpec::resnet(self.depth, self.alpha),
        };
        let s = base.with_sigmas(self.sigma_w, self.sigma_v);
        s.validate()?;
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelName {
    GpMlp,
    NtkMlp,
    GpResnet,
    NtkResnet,
    Gaussian,
}

/// One kernel in a family. Architecture fields are ignored for the Gaussian.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelEntry {
    pub kind: KernelName,
    #[serde(default = "five")]
    pub depth: usize,
    #[serde(default = "tenth")]
    pub alpha: f64,
    #[serde(default = "one")]
    pub sigma_w: f64,
    #[serde(default = "one")]
    pub sigma_v: f64,
    #[serde(default = "gamma")]
    pub gamma: f64,
}

fn five() -> usize {
    5
}
fn gamma() -> f64 {
    DEFAULT_GAMMA
}

impl KernelEntry {
    pub fn new(kind: KernelName, depth: usize, alpha: f64) -> Self {
        KernelEntry { kind, depth, alpha, sigma_w: 1.0, sigma_v: 1.0, gamma: DEFAULT_GAMMA }
    }

    pub fn kernel(&self) -> Result<Kernel> {
        let mlp = || ArchitectureSpec::mlp(self.depth).with_sigmas(self.sigma_w, self.sigma_v);
        let res = || ArchitectureSpec::resnet(self.depth, self.alpha).with_sigmas(self.sigma_w, self.sigma_v);
        match self.kind {
            KernelName::GpMlp => Kernel::new(KernelKind::GpMlp, Some(mlp())),
            KernelName::NtkMlp => Kernel::new(KernelKind::NtkMlp, Some(mlp())),
            KernelName::GpResnet => Kernel::new(KernelKind::GpResnet, Some(res())),
            KernelName::NtkResnet => Kernel::new(KernelKind::NtkResnet, Some(res())),
            KernelName::Gaussian => Kernel::gaussian(self.gamma),
        }
    }

    /// `(depth, alpha)` as printed in CSVs; blank for kernels without them.
    pub fn columns(&self) -> (String, String) {
        match self.kind {
            KernelName::Gaussian => (String::new(), String::new()),
            KernelName::GpMlp | KernelName::NtkMlp => (self.depth.to_string(), String::new()),
            _ => (self.depth.to_string(), self.alpha.to_string()),
        }
    }

    /// Stable name used in file names and JSON keys.
    pub fn tag(&self) -> String {
        match self.kind {
            KernelName::Gaussian => format!("gaussian_g{}", self.gamma),
            KernelName::GpMlp => format!("gp_mlp_L{}", self.depth),
            KernelName::NtkMlp => format!("ntk_mlp_L{}", self.depth),
            KernelName::GpResnet => format!("gp_resnet_L{}_a{}", self.depth, self.alpha),
            KernelName::NtkResnet => format!("ntk_resnet_L{}_a{}", self.depth, self.alpha),
        }
    }
}

fn default_family() -> Vec<KernelEntry> {
    vec![
        KernelEntry::new(KernelName::NtkMlp, 5, 0.0),
        KernelEntry::new(KernelName::NtkResnet, 5, 1.0),
        KernelEntry::new(KernelName::NtkResnet, 5, 0.1),
        KernelEntry::new(KernelName::NtkResnet, 5, 0.01),
    ]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KernelSection {
    pub kernels: Vec<KernelEntry>,
    pub grid: usize,
    pub normalize: bool,
}

impl Default for KernelSection {
    fn default() -> Self {
        KernelSection { kernels: default_family(), grid: 256, normalize: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RegressSection {
    pub sampling: SamplingScheme,
    pub kernels: Vec<KernelEntry>,
    /// Exponent of the Gaussian kernel defining μ.
    pub gamma: f64,
    pub grid: usize,
}

impl Default for RegressSection {
    fn default() -> Self {
        let mut kernels = default_family();
        kernels.push(KernelEntry::new(KernelName::Gaussian, 5, 0.0));
        RegressSection { sampling: SamplingScheme::equispaced(6), kernels, gamma: DEFAULT_GAMMA, grid: DEFAULT_GRID }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EmpiricalSection {
    pub arch: ArchConfig,
    pub width: usize,
    pub seeds: usize,
    /// Angle-gap grid of the kernel profiles.
    pub grid: usize,
    /// Train one network per seed and compare with NTK regression.
    pub train: bool,
    pub sampling: SamplingScheme,
    pub lr: f64,
    pub iterations: usize,
    /// Grid of the trained-network interpolations.
    pub train_grid: usize,
}

impl Default for EmpiricalSection {
    fn default() -> Self {
        EmpiricalSection {
            arch: ArchConfig::resnet(5, 0.1),
            width: 2000,
            seeds: 30,
            grid: 64,
            train: true,
            sampling: SamplingScheme::equispaced(6),
            lr: 0.05,
            iterations: 5000,
            train_grid: 512,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DriftSection {
    pub arch: ArchConfig,
    pub widths: Vec<usize>,
    pub seeds: usize,
    pub sampling: SamplingScheme,
    /// Multiple of `1 / lambda_max` of the analytic NTK Gram.
    pub lr_scale: f64,
    pub iterations: usize,
    /// Centered fit; see `TrainConfig::center`.
    pub center: bool,
}

impl Default for DriftSection {
    fn default() -> Self {
        DriftSection {
            arch: ArchConfig::resnet(3, 0.1),
            widths: vec![64, 128, 256, 512, 1024],
            seeds: 5,
            sampling: SamplingScheme::equispaced(6),
            lr_scale: 1.0,
            iterations: 1000,
            center: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SlopeSection {
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BoundsSection {
    pub arch: ArchConfig,
    pub width: usize,
    pub input_dim: usize,
    pub c_phi: f64,
    /// Compare with the largest input-gradient norm of a network at init.
    pub empirical: Option<SlopeSection>,
}

impl Default for BoundsSection {
    fn default() -> Self {
        BoundsSection { arch: ArchConfig::resnet(5, 0.1), width: 1000, input_dim: 2, c_phi: 1.0, empirical: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GradientSection {
    pub widths: Vec<usize>,
    pub seeds: usize,
    pub coordinates: usize,
    pub depth: usize,
    pub alpha: f64,
}

impl Default for GradientSection {
    fn default() -> Self {
        GradientSection { widths: vec![32, 64, 128], seeds: 10, coordinates: 200, depth: 5, alpha: 0.1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OracleSection {
    pub covariances: usize,
    pub samples: usize,
    /// Also run the finite-difference gradient check.
    pub gradient: Option<GradientSection>,
}

impl Default for OracleSection {
    fn default() -> Self {
        OracleSection { covariances: 20, samples: 2_000_000, gradient: None }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OffNtkSection {
    pub width: usize,
    pub depth: usize,
    pub alpha: f64,
    pub seeds: usize,
    pub sampling: SamplingScheme,
    pub optimizer: Optimizer,
    pub iterations: usize,
    pub keep_best: bool,
    pub gamma: f64,
    pub grid: usize,
}

impl Default for OffNtkSection {
    fn default() -> Self {
        OffNtkSection {
            width: 500,
            depth: 5,
            alpha: 0.1,
            seeds: 30,
            sampling: SamplingScheme::equispaced(6),
            optimizer: Optimizer::adam(1e-3),
            iterations: 1000,
            keep_best: false,
            gamma: DEFAULT_GAMMA,
            grid: DEFAULT_GRID,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AllSection {
    /// Criteria to evaluate, 1 to 11.
    pub criteria: Vec<u8>,
}

impl Default for AllSection {
    fn default() -> Self {
        AllSection { criteria: (1..=11).collect() }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    /// Worker threads; 0 lets the pool decide.
    #[serde(default)]
    pub threads: usize,
    #[serde(default)]
    pub kernel: KernelSection,
    #[serde(default)]
    pub regress: RegressSection,
    #[serde(default)]
    pub empirical: EmpiricalSection,
    #[serde(default)]
    pub drift: DriftSection,
    #[serde(default)]
    pub bounds: BoundsSection,
    #[serde(default)]
    pub oracle: OracleSection,
    #[serde(default)]
    pub offntk: OffNtkSection,
    #[serde(default)]
    pub all: AllSection,
    /// Protocols of the acceptance criteria run by `all`.
    #[serde(default)]
    pub acceptance: Suite,
}

fn default_out() -> PathBuf {
    PathBuf::from("out")
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            version: SCHEMA_VERSION,
            seed: 0,
            out: default_out(),
            threads: 0,
            kernel: KernelSection::default(),
            regress: RegressSection::default(),
            empirical: EmpiricalSection::default(),
            drift: DriftSection::default(),
            bounds: BoundsSection::default(),
            oracle: OracleSection::default(),
            offntk: OffNtkSection::default(),
            all: AllSection::default(),
            acceptance: Suite::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let c: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of the canonical TOML rendering.
    /// Digest of the experiment itself; where results go and how many threads
    /// compute them do not change the numbers, so they are left out.
    pub fn hash(&self) -> String {
        let canonical = ExperimentConfig { out: PathBuf::new(), threads: 0, ..self.clone() };
        hex::encode(Sha256::digest(canonical.to_toml().as_bytes()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != SCHEMA_VERSION {
            return Err(Error::Config(format!(
                "unsupported schema version {}, this build reads version {SCHEMA_VERSION}",
                self.version
            )));
        }
        let positive = |name: &str, v: usize| {
            if v == 0 {
                Err(Error::Config(format!("{name} must be positive")))
            } else {
                Ok(())
            }
        };
        for k in self.kernel.kernels.iter().chain(&self.regress.kernels) {
            k.kernel()?;
        }
        if self.kernel.kernels.is_empty() || self.regress.kernels.is_empty() {
            return Err(Error::Config("kernel lists must not be empty".into()));
        }
        positive("kernel.grid", self.kernel.grid)?;
        positive("regress.grid", self.regress.grid)?;
        positive("empirical.width", self.empirical.width)?;
        positive("empirical.seeds", self.empirical.seeds)?;
        positive("drift.seeds", self.drift.seeds)?;
        positive("bounds.width", self.bounds.width)?;
        positive("offntk.width", self.offntk.width)?;
        positive("offntk.seeds", self.offntk.seeds)?;
        self.empirical.arch.spec()?;
        self.drift.arch.spec()?;
        self.bounds.arch.spec()?;
        if let Some(c) = self.all.criteria.iter().find(|c| !(1..=11).contains(*c)) {
            return Err(Error::Config(format!("all.criteria: no criterion {c}")));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_document_takes_defaults() {
        let c = ExperimentConfig::parse("version = 1\n").unwrap();
        assert_eq!(c.empirical.width, 2000);
        assert_eq!(c.drift.widths, vec![64, 128, 256, 512, 1024]);
        assert_eq!(c.all.criteria.len(), 11);
    }

    #[test]
    fn round_trips_through_toml() {
        let c = ExperimentConfig::default();
        let back = ExperimentConfig::parse(&c.to_toml()).unwrap();
        assert_eq!(back.hash(), c.hash());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::parse("version = 1\nwidht = 3\n").is_err());
        assert!(ExperimentConfig::parse("version = 1\n[drift]\nwidth = [1]\n").is_err());
        assert!(ExperimentConfig::parse("version = 1\n[[kernel.kernels]]\nkind = \"ntk_resnet\"\nbeta = 1\n").is_err());
    }

    #[test]
    fn bad_values_are_rejected() {
        assert!(ExperimentConfig::parse("version = 2\n").is_err());
        assert!(ExperimentConfig::parse("").is_err());
        assert!(ExperimentConfig::parse("version = 1\n[[kernel.kernels]]\nkind = \"laplace\"\n").is_err());
        assert!(ExperimentConfig::parse("version = 1\n[[kernel.kernels]]\nkind = \"gaussian\"\ngamma = -1\n").is_err());
        assert!(ExperimentConfig::parse("version = 1\n[all]\ncriteria = [12]\n").is_err());
    }

    #[test]
    fn kernel_entries_build() {
        let k = KernelEntry::new(KernelName::NtkResnet, 3, 0.5);
        assert_eq!(k.kernel().unwrap().arch().unwrap().alpha, 0.5);
        assert_eq!(k.tag(), "ntk_resnet_L3_a0.5");
        assert_eq!(KernelEntry::new(KernelName::Gaussian, 5, 0.0).columns(), (String::new(), String::new()));
    }
}
