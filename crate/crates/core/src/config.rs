//! Declarative pipeline configuration (TOML).
//!
//! Defaults reproduce the full-scale protocol: a 482×26 mesh, an 80×80
//! parameter grid over `[1, 1e4] × [5, 25]`, 2×2 subdomains, 2000 epochs of
//! Adam with batch 32, learning rate 1e-3, early-stopping patience 300 and a
//! 90/10 split, and 100 HR rows per subdomain.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autoencoder::TrainConfig;
use crate::burgers::{BurgersParams, Grid};
use crate::error::{Error, Result};
use crate::snapshots::{sample_parameters, ParameterGrid};
use crate::sqp::SqpOptions;
use crate::workflow::{AeShape, RomSizes};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
    pub x_range: (f64, f64),
    pub y_range: (f64, f64),
    pub nu: f64,
}

impl Default for MeshConfig {
    fn default() -> Self {
        Self {
            nx: 482,
            ny: 26,
            x_range: (-1.0, 1.0),
            y_range: (0.0, 0.05),
            nu: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ParameterConfig {
    pub a_range: (f64, f64),
    pub lambda_range: (f64, f64),
    pub n_a: usize,
    pub n_lambda: usize,
    /// Independent warm-start chains in the snapshot sweep.
    pub chains: usize,
}

impl Default for ParameterConfig {
    fn default() -> Self {
        Self {
            a_range: (1.0, 1e4),
            lambda_range: (5.0, 25.0),
            n_a: 80,
            n_lambda: 80,
            chains: 4,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DdConfig {
    pub n_sub_x: usize,
    pub n_sub_y: usize,
}

impl Default for DdConfig {
    fn default() -> Self {
        Self { n_sub_x: 2, n_sub_y: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RomConfig {
    /// Latent sizes to train and benchmark.
    pub sizes: Vec<RomSizes>,
    /// Out-of-sample test parameter `(a, λ)`.
    pub test_parameter: (f64, f64),
}

impl Default for RomConfig {
    fn default() -> Self {
        Self {
            sizes: [(6, 3), (8, 4), (10, 5), (16, 8)]
                .map(|(n_omega, n_gamma)| RomSizes { n_omega, n_gamma })
                .to_vec(),
            test_parameter: (7692.5384, 21.9230),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HrConfig {
    /// Sampled residual rows per subdomain.
    pub n_samples: usize,
    /// Weak-constraint rows; unset picks the rank-safe default.
    pub n_c: Option<usize>,
    /// Use `C = I` (strong constraints through the weak code path).
    pub identity_c: bool,
}

impl Default for HrConfig {
    fn default() -> Self {
        Self {
            n_samples: 100,
            n_c: None,
            identity_c: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub max_iter: usize,
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub rho_floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let d = SqpOptions::default();
        Self {
            max_iter: d.max_iter,
            abs_tol: d.abs_tol,
            rel_tol: d.rel_tol,
            rho_floor: d.rho_floor,
        }
    }
}

impl SolverConfig {
    pub fn options(&self) -> SqpOptions {
        SqpOptions {
            max_iter: self.max_iter,
            abs_tol: self.abs_tol,
            rel_tol: self.rel_tol,
            rho_floor: self.rho_floor,
            ..SqpOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    /// Timed repetitions per configuration; the median is reported.
    pub runs: usize,
    /// Layouts for the parameter-count table.
    pub parameter_layouts: Vec<(usize, usize)>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            runs: 3,
            parameter_layouts: vec![(1, 1), (2, 1), (2, 2), (4, 2), (8, 2)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkbenchConfig {
    /// Master seed for every random choice in the pipeline.
    pub seed: u64,
    /// Parent directory of the content-addressed artifact directories.
    pub artifact_root: PathBuf,
    pub mesh: MeshConfig,
    pub parameters: ParameterConfig,
    pub dd: DdConfig,
    pub rom: RomConfig,
    pub autoencoder: AeShape,
    pub training: TrainConfig,
    pub hr: HrConfig,
    pub solver: SolverConfig,
    pub bench: BenchConfig,
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            artifact_root: PathBuf::from("artifacts"),
            mesh: MeshConfig::default(),
            parameters: ParameterConfig::default(),
            dd: DdConfig::default(),
            rom: RomConfig::default(),
            autoencoder: AeShape::default(),
            training: TrainConfig::default(),
            hr: HrConfig::default(),
            solver: SolverConfig::default(),
            bench: BenchConfig::default(),
        }
    }
}

impl WorkbenchConfig {
    /// The desk-scale setup: 122×14 mesh and a 12×12 parameter grid.
    pub fn desk() -> Self {
        let mut c = Self::default();
        c.mesh.nx = 122;
        c.mesh.ny = 14;
        c.parameters.n_a = 12;
        c.parameters.n_lambda = 12;
        c.rom.sizes.truncate(2);
        c.bench.parameter_layouts = vec![(1, 1), (2, 1), (2, 2), (4, 2)];
        c
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configuration serializes")
    }

    pub fn grid(&self) -> Result<Grid> {
        Grid::new(self.mesh.nx, self.mesh.ny, self.mesh.x_range, self.mesh.y_range)
    }

    pub fn parameter_grid(&self) -> Result<ParameterGrid> {
        let p = &self.parameters;
        sample_parameters(p.a_range, p.lambda_range, p.n_a, p.n_lambda)
    }

    pub fn test_parameters(&self) -> Result<BurgersParams> {
        BurgersParams::new(self.rom.test_parameter.0, self.rom.test_parameter.1, self.mesh.nu)
    }

    /// Checks every field that can be checked without doing work.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        let grid = self.grid().map_err(|e| Error::Config(e.to_string()))?;
        if !(self.mesh.nu > 0.0) {
            return bad(format!("mesh.nu must be positive, got {}", self.mesh.nu));
        }
        self.parameter_grid().map_err(|e| Error::Config(e.to_string()))?;
        let p = &self.parameters;
        if p.a_range.0 < 1.0 || !(p.lambda_range.0 > 0.0) {
            return bad("parameter ranges need a >= 1 and lambda > 0".into());
        }
        if p.chains == 0 {
            return bad("parameters.chains must be at least 1".into());
        }
        let (mx, my) = grid.interior_dims();
        if self.dd.n_sub_x == 0 || self.dd.n_sub_y == 0 || self.dd.n_sub_x > mx || self.dd.n_sub_y > my {
            return bad(format!(
                "dd: {}x{} subdomains do not fit {mx}x{my} interior nodes",
                self.dd.n_sub_x, self.dd.n_sub_y
            ));
        }
        if self.rom.sizes.is_empty() || self.rom.sizes.iter().any(|s| s.n_omega == 0 || s.n_gamma == 0) {
            return bad("rom.sizes must list positive latent sizes".into());
        }
        self.test_parameters().map_err(|e| Error::Config(e.to_string()))?;
        let t = &self.training;
        if t.batch_size == 0 || !(t.learning_rate > 0.0) || !(t.validation_fraction > 0.0 && t.validation_fraction < 1.0) {
            return bad("training: batch_size, learning_rate and validation_fraction must be valid".into());
        }
        if !(t.plateau_factor > 0.0 && t.plateau_factor < 1.0) {
            return bad("training.plateau_factor must be in (0, 1)".into());
        }
        if self.parameter_grid()?.len() < 10 {
            return bad("at least 10 parameter points are needed for the train/validation split".into());
        }
        if self.hr.n_samples == 0 || self.hr.n_c == Some(0) {
            return bad("hr.n_samples and hr.n_c must be positive".into());
        }
        if !(self.solver.abs_tol > 0.0) || !(self.solver.rel_tol >= 0.0) || self.solver.max_iter == 0 {
            return bad("solver tolerances must be positive".into());
        }
        if self.bench.runs == 0 {
            return bad("bench.runs must be at least 1".into());
        }
        Ok(())
    }

    /// Hash of everything that determines the snapshots and layout.
    pub fn snapshot_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            mesh: &'a MeshConfig,
            parameters: &'a ParameterConfig,
            dd: &'a DdConfig,
        }
        let text = toml::to_string(&Key {
            mesh: &self.mesh,
            parameters: &self.parameters,
            dd: &self.dd,
        })
        .expect("key serializes");
        short_hash(&text)
    }

    /// Training settings with the master seed applied.
    pub fn training(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.training.clone()
        }
    }

    /// Seed of the Gaussian constraint test matrix.
    pub fn constraint_seed(&self) -> u64 {
        self.seed ^ 0x00C0_FFEE
    }

    /// Hash of everything that determines the trained networks.
    pub fn model_key(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            snapshots: String,
            autoencoder: &'a AeShape,
            training: TrainConfig,
        }
        let text = toml::to_string(&Key {
            snapshots: self.snapshot_key(),
            autoencoder: &self.autoencoder,
            training: self.training(),
        })
        .expect("key serializes");
        short_hash(&text)
    }

    /// Checkpoint directory of one latent size.
    pub fn model_dir(&self, sizes: RomSizes) -> PathBuf {
        self.artifact_dir()
            .join("models")
            .join(format!("{}x{}-{}", sizes.n_omega, sizes.n_gamma, self.model_key()))
    }

    /// Artifact directory: `<artifact_root>/<mesh>-<dd>-<hash>`.
    pub fn artifact_dir(&self) -> PathBuf {
        self.artifact_root.join(format!(
            "{}x{}-dd{}x{}-{}",
            self.mesh.nx,
            self.mesh.ny,
            self.dd.n_sub_x,
            self.dd.n_sub_y,
            self.snapshot_key()
        ))
    }
}

fn short_hash(text: &str) -> String {
    Sha256::digest(text.as_bytes())
        .iter()
        .take(8)
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_carry_protocol_constants() {
        let c = WorkbenchConfig::default();
        assert_eq!((c.mesh.nx, c.mesh.ny), (482, 26));
        assert_eq!(c.parameter_grid().unwrap().len(), 6400);
        assert_eq!(c.training.epochs, 2000);
        assert_eq!(c.training.batch_size, 32);
        assert_eq!(c.training.learning_rate, 1e-3);
        assert_eq!(c.training.patience, 300);
        assert_eq!(c.training.validation_fraction, 0.1);
        assert_eq!(c.hr.n_samples, 100);
        c.validate().unwrap();
    }

    #[test]
    fn toml_roundtrip_and_partial_files() {
        let c = WorkbenchConfig::desk();
        assert_eq!(WorkbenchConfig::from_toml(&c.to_toml()).unwrap(), c);
        let p = WorkbenchConfig::from_toml("seed = 5\n[mesh]\nnx = 62\n").unwrap();
        assert_eq!(p.seed, 5);
        assert_eq!(p.mesh.nx, 62);
        assert_eq!(p.mesh.ny, 26);
    }

    #[test]
    fn schema_errors() {
        assert!(WorkbenchConfig::from_toml("[parameters]\na_range = [100.0, 1.0]\n").is_err());
        assert!(WorkbenchConfig::from_toml("[mesh]\nbogus = 1\n").is_err());
        assert!(WorkbenchConfig::from_toml("[dd]\nn_sub_x = 0\n").is_err());
    }

    #[test]
    fn artifact_dir_depends_on_mesh_and_layout_only() {
        let a = WorkbenchConfig::desk();
        let mut b = a.clone();
        b.training.epochs = 5;
        assert_eq!(a.artifact_dir(), b.artifact_dir());
        let s = RomSizes { n_omega: 6, n_gamma: 3 };
        assert_ne!(a.model_dir(s), b.model_dir(s));
        b.dd.n_sub_x = 4;
        assert_ne!(a.artifact_dir(), b.artifact_dir());
    }
}
