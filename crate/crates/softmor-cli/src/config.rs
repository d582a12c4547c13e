//! Experiment configuration: JSON file with defaults, overridable from the
//! command line.

use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshCfg {
    pub nx: usize,
    pub ny: usize,
}

impl Default for MeshCfg {
    fn default() -> Self {
        Self { nx: 10, ny: 20 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MaterialCfg {
    pub lambda: f64,
    pub mu: f64,
    pub rho: f64,
}

impl Default for MaterialCfg {
    fn default() -> Self {
        Self { lambda: 50.0, mu: 50.0, rho: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolidCfg {
    pub mass: f64,
}

impl Default for SolidCfg {
    fn default() -> Self {
        Self { mass: 100.0 }
    }
}

/// Rayleigh damping coefficients. When absent from the config, the forward
/// scenario runs undamped and the LQR scenario uses the regularizing
/// default required for a well-posed stable/antistable split.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DampingCfg {
    pub alpha: f64,
    pub beta: f64,
}

/// Default LQR damping: strong enough that every Hamiltonian eigenvalue
/// clears the imaginary-axis tolerance and the reduced Riccati solves sit
/// in their convergent regime.
pub const LQR_DAMPING_DEFAULT: DampingCfg = DampingCfg { alpha: 0.1, beta: 0.15 };

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightsCfg {
    pub q_scale: f64,
    pub r_scale: f64,
}

impl Default for WeightsCfg {
    fn default() -> Self {
        Self { q_scale: 1.0, r_scale: 1.0 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridCfg {
    pub t_forward: f64,
    pub t_lqr: f64,
    pub n_t: usize,
}

impl Default for GridCfg {
    fn default() -> Self {
        Self { t_forward: 3.0, t_lqr: 300.0, n_t: 600 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub mesh: MeshCfg,
    pub material: MaterialCfg,
    pub solid: SolidCfg,
    /// Applied to both scenarios when set; see [`DampingCfg`].
    pub damping: Option<DampingCfg>,
    pub weights: WeightsCfg,
    pub grid: GridCfg,
    /// Desired solid displacement at the target equilibrium.
    pub target_solid: [f64; 2],
    /// Method tags to run; empty means every method of the scenario.
    pub methods: Vec<String>,
    /// Explicit basis sizes; empty means the energy rule picks one size.
    pub basis_sizes: Vec<usize>,
    /// Energy fraction for the automatic basis-size rule.
    pub energy_fraction: f64,
    /// Recorded in the manifest; the pipeline itself is deterministic.
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Repetitions for online timings (median). Zero disables timing and
    /// makes record CSVs byte-reproducible.
    pub timing_reps: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            mesh: MeshCfg::default(),
            material: MaterialCfg::default(),
            solid: SolidCfg::default(),
            damping: None,
            weights: WeightsCfg::default(),
            grid: GridCfg::default(),
            target_solid: [5.0, 5.0],
            methods: Vec::new(),
            basis_sizes: Vec::new(),
            energy_fraction: 0.999,
            seed: 0,
            out_dir: PathBuf::from("out"),
            timing_reps: 5,
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let cfg: ExperimentConfig =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mesh.nx < 1 || self.mesh.ny < 1 {
            bail!("mesh must have at least one element per axis");
        }
        if self.mesh.ny % 4 != 0 {
            bail!("ny must be divisible by 4 so the clamped strip lands on a grid line");
        }
        if self.material.lambda <= 0.0 || self.material.mu <= 0.0 || self.material.rho <= 0.0 {
            bail!("material parameters must be positive");
        }
        if self.solid.mass <= 0.0 {
            bail!("solid mass must be positive");
        }
        if self.weights.q_scale <= 0.0 || self.weights.r_scale <= 0.0 {
            bail!("weight scales must be positive");
        }
        if !(self.energy_fraction > 0.0 && self.energy_fraction <= 1.0) {
            bail!("energy fraction must be in (0, 1]");
        }
        if self.grid.n_t < 1 || self.grid.t_forward <= 0.0 || self.grid.t_lqr <= 0.0 {
            bail!("time grid must have positive final times and at least one step");
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
