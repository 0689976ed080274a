//! Declarative run configuration. Defaults reproduce the reference setup:
//! a 180 x 180 angular grid, 1024 ports at quarter-wavelength pitch, 256
//! active antennas with half-wavelength minimum spacing, and a 16 x 16
//! half-wavelength fixed array as the baseline.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::beam::{PhaseRamp, TargetRegion};
use crate::error::{BeamError, Result};
use crate::fourier::{ApertureBlock, RetrievalOptions};
use crate::geometry::{exact_sqrt, AngularGrid, PortGrid};
use crate::selection::{ResidualUpdate, SelectOptions};
use crate::steering::{StorageKind, VMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    Fixed,
    FixedPhaseopt,
    FluidPhaseopt,
}

impl Scheme {
    pub const ALL: [Scheme; 3] = [Scheme::Fixed, Scheme::FixedPhaseopt, Scheme::FluidPhaseopt];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Fixed => "fixed",
            Scheme::FixedPhaseopt => "fixed-phaseopt",
            Scheme::FluidPhaseopt => "fluid-phaseopt",
        }
    }

    pub fn uses_retrieval(self) -> bool {
        !matches!(self, Scheme::Fixed)
    }
}

impl std::str::FromStr for Scheme {
    type Err = BeamError;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| BeamError::param(format!("unknown scheme '{s}'")))
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Lengths below are in wavelengths unless noted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridConfig {
    pub azimuth_samples: usize,
    pub elevation_samples: usize,
    pub port_rows: usize,
    pub port_cols: usize,
    pub port_spacing: f64,
    pub min_spacing: f64,
    /// Carrier wavelength in meters.
    pub wavelength: f64,
    /// Elements per side of the fixed baseline array.
    pub fixed_size: usize,
    pub fixed_spacing: f64,
}

impl Default for GridConfig {
    fn default() -> Self {
        Self {
            azimuth_samples: 180,
            elevation_samples: 180,
            port_rows: 32,
            port_cols: 32,
            port_spacing: 0.25,
            min_spacing: 0.5,
            wavelength: 1.0,
            fixed_size: 16,
            fixed_spacing: 0.5,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BeamConfig {
    /// Azimuth bounds in degrees.
    pub phi_deg: [f64; 2],
    /// Elevation bounds in degrees.
    pub theta_deg: [f64; 2],
    pub phase_slope: f64,
    pub phase_ramp: PhaseRamp,
}

impl Default for BeamConfig {
    fn default() -> Self {
        Self {
            phi_deg: [30.0, 60.0],
            theta_deg: [0.0, 30.0],
            phase_slope: 0.1,
            phase_ramp: PhaseRamp::Index,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgorithmConfig {
    pub active_ports: usize,
    pub alpha: f64,
    pub retrieval_iterations: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub early_stop: Option<f64>,
    pub vmode: VMode,
    pub storage: StorageKind,
    pub aperture_block: ApertureBlock,
    pub residual_update: ResidualUpdate,
    pub normalize_columns: bool,
    /// Skip greedy picks that would make the full port count unreachable.
    pub feasibility_guard: bool,
    pub dense_cap_mib: u64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        Self {
            active_ports: 256,
            alpha: -0.01,
            retrieval_iterations: 50,
            early_stop: None,
            vmode: VMode::Decoupled,
            storage: StorageKind::Factored,
            aperture_block: ApertureBlock::Centered,
            residual_update: ResidualUpdate::Balanced,
            normalize_columns: true,
            feasibility_guard: true,
            dense_cap_mib: 256,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluationConfig {
    pub guard_cells: usize,
    pub section_theta_deg: f64,
    pub section_phi_deg: f64,
    pub db_floor: f64,
}

impl Default for EvaluationConfig {
    fn default() -> Self {
        Self {
            guard_cells: 3,
            section_theta_deg: 20.0,
            section_phi_deg: 55.0,
            db_floor: -80.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    pub scheme: Scheme,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            dir: None,
            scheme: Scheme::FluidPhaseopt,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub beam: BeamConfig,
    pub algorithm: AlgorithmConfig,
    pub evaluation: EvaluationConfig,
    pub output: OutputConfig,
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| BeamError::Config {
            path: PathBuf::from("<inline>"),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| BeamError::io(format!("reading {}", path.display()), e))?;
        toml::from_str(&text).map_err(|e| BeamError::Config {
            path: path.to_path_buf(),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config always serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        let positive = [
            ("port_spacing", g.port_spacing),
            ("wavelength", g.wavelength),
            ("fixed_spacing", g.fixed_spacing),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(BeamError::param(format!("{name} must be > 0, got {v}")));
            }
        }
        if !(g.min_spacing >= 0.0 && g.min_spacing.is_finite()) {
            return Err(BeamError::param(format!(
                "min_spacing must be >= 0, got {}",
                g.min_spacing
            )));
        }
        if g.port_rows == 0 || g.port_cols == 0 || g.fixed_size == 0 {
            return Err(BeamError::param("array dimensions must be >= 1"));
        }
        let a = &self.algorithm;
        if a.active_ports == 0 || a.active_ports > g.port_rows * g.port_cols {
            return Err(BeamError::param(format!(
                "active_ports must lie in 1..={}, got {}",
                g.port_rows * g.port_cols,
                a.active_ports
            )));
        }
        if !a.alpha.is_finite() {
            return Err(BeamError::param("alpha must be finite"));
        }
        if a.retrieval_iterations > 0 {
            let limit = g.azimuth_samples.min(g.elevation_samples);
            for (what, count) in [
                ("active_ports", a.active_ports),
                ("fixed array size", g.fixed_size * g.fixed_size),
            ] {
                match exact_sqrt(count) {
                    Some(side) if side <= limit => {}
                    Some(side) => {
                        return Err(BeamError::param(format!(
                            "{what} aperture side {side} exceeds the angular grid ({limit})"
                        )))
                    }
                    None => {
                        return Err(BeamError::param(format!(
                            "{what} = {count} must be a perfect square for phase retrieval"
                        )))
                    }
                }
            }
        }
        if let Some(tol) = a.early_stop {
            if !(tol >= 0.0 && tol.is_finite()) {
                return Err(BeamError::param(
                    "early_stop must be a finite tolerance >= 0",
                ));
            }
        }
        if !self.evaluation.db_floor.is_finite() {
            return Err(BeamError::param("db_floor must be finite"));
        }
        self.region()?;
        self.angular_grid()?;
        Ok(())
    }

    pub fn angular_grid(&self) -> Result<AngularGrid> {
        AngularGrid::new(self.grid.azimuth_samples, self.grid.elevation_samples)
    }

    pub fn fluid_grid(&self) -> Result<PortGrid> {
        let g = &self.grid;
        PortGrid::new(
            g.port_rows,
            g.port_cols,
            g.port_spacing * g.wavelength,
            g.wavelength,
        )
    }

    pub fn fixed_grid(&self) -> Result<PortGrid> {
        let g = &self.grid;
        PortGrid::new(
            g.fixed_size,
            g.fixed_size,
            g.fixed_spacing * g.wavelength,
            g.wavelength,
        )
    }

    pub fn region(&self) -> Result<TargetRegion> {
        let b = &self.beam;
        TargetRegion::new(
            b.phi_deg[0].to_radians(),
            b.phi_deg[1].to_radians(),
            b.theta_deg[0].to_radians(),
            b.theta_deg[1].to_radians(),
        )
    }

    pub fn min_spacing_m(&self) -> f64 {
        self.grid.min_spacing * self.grid.wavelength
    }

    pub fn dense_cap_bytes(&self) -> u64 {
        self.algorithm.dense_cap_mib.saturating_mul(1024 * 1024)
    }

    pub fn retrieval_options(&self) -> RetrievalOptions {
        RetrievalOptions {
            iterations: self.algorithm.retrieval_iterations,
            block: self.algorithm.aperture_block,
            early_stop: self.algorithm.early_stop,
        }
    }

    pub fn select_options(&self) -> SelectOptions {
        SelectOptions {
            sparsity: self.algorithm.active_ports,
            alpha: self.algorithm.alpha,
            min_spacing: self.min_spacing_m(),
            normalize_columns: self.algorithm.normalize_columns,
            update: self.algorithm.residual_update,
            feasibility_guard: self.algorithm.feasibility_guard,
        }
    }
}
