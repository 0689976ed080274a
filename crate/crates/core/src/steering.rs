//! Far-field steering dictionary of a port lattice.
//!
//! The phase exponent is separable in the port coordinates, so every entry
//! factors as `D(z, l(m, n)) = U(z, m) * V(z, n)`. The factored form stores
//! `Z * (M + N)` entries instead of `Z * M * N` and is the default; the dense
//! form is kept for small problems and cross-checks.

use std::f64::consts::PI;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::beam::BeamPattern;
use crate::error::{BeamError, Result};
use crate::geometry::{AngularGrid, PortGrid, Position};

/// Default ceiling for a dense dictionary allocation.
pub const DEFAULT_DENSE_CAP_BYTES: u64 = 256 * 1024 * 1024;

const COMPLEX_BYTES: u64 = std::mem::size_of::<Complex64>() as u64;

/// Spatial-frequency substitution used for the `y` axis of the aperture.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VMode {
    /// `v = sin(theta) sin(phi) / lambda`, the exact projection.
    Coupled,
    /// `v = sin(phi) / lambda`; keeps azimuth resolution near zero elevation.
    #[default]
    Decoupled,
}

impl VMode {
    /// Direction cosines `(u, v)` scaled by `lambda`, i.e. without the `1/lambda`.
    #[inline]
    pub fn direction(self, phi: f64, theta: f64) -> (f64, f64) {
        let (sin_phi, cos_phi) = phi.sin_cos();
        let sin_theta = theta.sin();
        match self {
            VMode::Coupled => (sin_theta * cos_phi, sin_theta * sin_phi),
            VMode::Decoupled => (sin_theta * cos_phi, sin_phi),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            VMode::Coupled => "coupled",
            VMode::Decoupled => "decoupled",
        }
    }
}

/// Response of a port at `port` toward `(phi, theta)`.
pub fn steering_entry(
    port: Position,
    phi: f64,
    theta: f64,
    wavelength: f64,
    vmode: VMode,
) -> Complex64 {
    let (u, v) = vmode.direction(phi, theta);
    let k = 2.0 * PI / wavelength;
    Complex64::cis(-k * (port.x * u + port.y * v))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StorageKind {
    Dense,
    #[default]
    Factored,
}

#[derive(Debug, Clone)]
enum Storage {
    Dense(Array2<Complex64>),
    /// `x_phase` is `M x Z`, `y_phase` is `N x Z`; each row is contiguous over `z`.
    Factored {
        x_phase: Array2<Complex64>,
        y_phase: Array2<Complex64>,
    },
}

/// `Z x L` steering matrix for a port lattice and angular grid.
#[derive(Debug, Clone)]
pub struct SteeringDictionary {
    ports: PortGrid,
    grid: AngularGrid,
    vmode: VMode,
    storage: Storage,
}

impl SteeringDictionary {
    pub fn build(
        ports: &PortGrid,
        grid: &AngularGrid,
        vmode: VMode,
        storage: StorageKind,
    ) -> Result<Self> {
        Self::build_with_cap(ports, grid, vmode, storage, DEFAULT_DENSE_CAP_BYTES)
    }

    pub fn build_with_cap(
        ports: &PortGrid,
        grid: &AngularGrid,
        vmode: VMode,
        storage: StorageKind,
        dense_cap_bytes: u64,
    ) -> Result<Self> {
        let z_len = grid.len();
        let storage = match storage {
            StorageKind::Dense => {
                let required = dense_bytes(z_len, ports.len());
                if required > dense_cap_bytes {
                    return Err(BeamError::Capacity {
                        required_bytes: required,
                        cap_bytes: dense_cap_bytes,
                    });
                }
                // stored transposed (L x Z) so each column is contiguous
                let mut dense = Array2::zeros((ports.len(), z_len));
                dense
                    .axis_iter_mut(Axis(0))
                    .into_par_iter()
                    .zip(ports.positions().par_iter())
                    .for_each(|(mut col, &pos)| {
                        for (z, entry) in col.iter_mut().enumerate() {
                            let (phi, theta) = grid.angle(z);
                            *entry = steering_entry(pos, phi, theta, ports.wavelength(), vmode);
                        }
                    });
                Storage::Dense(dense)
            }
            StorageKind::Factored => {
                let k = 2.0 * PI / ports.wavelength();
                let xs: Vec<f64> = (0..ports.rows()).map(|m| ports.positions()[m].x).collect();
                let ys: Vec<f64> = (0..ports.cols())
                    .map(|n| ports.positions()[n * ports.rows()].y)
                    .collect();
                let mut x_phase = Array2::zeros((xs.len(), z_len));
                let mut y_phase = Array2::zeros((ys.len(), z_len));
                for (z, (phi, theta)) in grid.angles().enumerate() {
                    let (u, v) = vmode.direction(phi, theta);
                    for (m, &x) in xs.iter().enumerate() {
                        x_phase[(m, z)] = Complex64::cis(-k * x * u);
                    }
                    for (n, &y) in ys.iter().enumerate() {
                        y_phase[(n, z)] = Complex64::cis(-k * y * v);
                    }
                }
                Storage::Factored { x_phase, y_phase }
            }
        };
        Ok(Self {
            ports: ports.clone(),
            grid: grid.clone(),
            vmode,
            storage,
        })
    }

    pub fn ports(&self) -> &PortGrid {
        &self.ports
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn vmode(&self) -> VMode {
        self.vmode
    }

    pub fn storage_kind(&self) -> StorageKind {
        match self.storage {
            Storage::Dense(_) => StorageKind::Dense,
            Storage::Factored { .. } => StorageKind::Factored,
        }
    }

    /// Number of rows `Z`.
    pub fn rows(&self) -> usize {
        self.grid.len()
    }

    /// Number of columns `L`.
    pub fn cols(&self) -> usize {
        self.ports.len()
    }

    /// Complex entries actually held in memory.
    pub fn stored_entries(&self) -> usize {
        match &self.storage {
            Storage::Dense(d) => d.len(),
            Storage::Factored { x_phase, y_phase } => x_phase.len() + y_phase.len(),
        }
    }

    /// Euclidean norm shared by every column, `sqrt(Z)`.
    pub fn column_norm(&self) -> f64 {
        (self.rows() as f64).sqrt()
    }

    #[inline]
    pub fn entry(&self, z: usize, l: usize) -> Complex64 {
        match &self.storage {
            Storage::Dense(d) => d[(l, z)],
            Storage::Factored { x_phase, y_phase } => {
                let m_len = self.ports.rows();
                x_phase[(l % m_len, z)] * y_phase[(l / m_len, z)]
            }
        }
    }

    pub fn column(&self, l: usize) -> Result<Vec<Complex64>> {
        self.check_index(l)?;
        Ok((0..self.rows()).map(|z| self.entry(z, l)).collect())
    }

    /// Adds `weight * D[:, l]` into `acc`.
    pub(crate) fn accumulate_column(&self, l: usize, weight: Complex64, acc: &mut [Complex64]) {
        match &self.storage {
            Storage::Dense(d) => {
                for (a, &e) in acc.iter_mut().zip(d.row(l).iter()) {
                    *a += e * weight;
                }
            }
            Storage::Factored { x_phase, y_phase } => {
                let m_len = self.ports.rows();
                let xs = x_phase.row(l % m_len);
                let ys = y_phase.row(l / m_len);
                for ((a, &x), &y) in acc.iter_mut().zip(xs.iter()).zip(ys.iter()) {
                    *a += x * y * weight;
                }
            }
        }
    }

    /// Hermitian inner products `<D_l, e> = sum_z conj(D(z, l)) e_z` for every column.
    ///
    /// The factored path contracts the residual with `U` first and then `V`.
    /// Each output is reduced sequentially, so the result does not depend on
    /// the worker count.
    pub fn correlate(&self, residual: &[Complex64]) -> Result<Vec<Complex64>> {
        if residual.len() != self.rows() {
            return Err(BeamError::param(format!(
                "residual length {} does not match dictionary rows {}",
                residual.len(),
                self.rows()
            )));
        }
        let out = match &self.storage {
            Storage::Dense(d) => d
                .axis_iter(Axis(0))
                .into_par_iter()
                .map(|col| {
                    col.iter()
                        .zip(residual)
                        .fold(Complex64::new(0.0, 0.0), |acc, (&a, &e)| acc + a.conj() * e)
                })
                .collect(),
            Storage::Factored { x_phase, y_phase } => match self.vmode {
                VMode::Decoupled => self.correlate_azimuth_separable(x_phase, y_phase, residual),
                VMode::Coupled => correlate_factored(x_phase, y_phase, residual),
            },
        };
        Ok(out)
    }

    /// With the decoupled substitution `V(z, n)` depends on `phi_p` only, so
    /// the elevation sum can be taken before touching `V`.
    fn correlate_azimuth_separable(
        &self,
        x_phase: &Array2<Complex64>,
        y_phase: &Array2<Complex64>,
        residual: &[Complex64],
    ) -> Vec<Complex64> {
        let p_len = self.grid.azimuth_len();
        let q_len = self.grid.elevation_len();
        let m_len = x_phase.nrows();
        let n_len = y_phase.nrows();
        // partial[m][p] = sum_q conj(U((p,q), m)) e((p,q))
        let partial: Vec<Vec<Complex64>> = (0..m_len)
            .into_par_iter()
            .map(|m| {
                let col = x_phase.row(m);
                let mut acc = vec![Complex64::new(0.0, 0.0); p_len];
                for q in 0..q_len {
                    let base = q * p_len;
                    for (p, slot) in acc.iter_mut().enumerate() {
                        *slot += col[base + p].conj() * residual[base + p];
                    }
                }
                acc
            })
            .collect();
        let mut out = vec![Complex64::new(0.0, 0.0); m_len * n_len];
        out.par_chunks_mut(m_len)
            .enumerate()
            .for_each(|(n, chunk)| {
                let ycol = y_phase.row(n);
                for (m, slot) in chunk.iter_mut().enumerate() {
                    *slot = partial[m]
                        .iter()
                        .enumerate()
                        .fold(Complex64::new(0.0, 0.0), |acc, (p, &b)| {
                            acc + ycol[p].conj() * b
                        });
                }
            });
        out
    }

    /// `y = D_A w_A` for the given support and weights.
    pub fn synthesize(&self, support: &[usize], weights: &[Complex64]) -> Result<BeamPattern> {
        if support.len() != weights.len() {
            return Err(BeamError::param(format!(
                "{} support indices but {} weights",
                support.len(),
                weights.len()
            )));
        }
        for &l in support {
            self.check_index(l)?;
        }
        if weights
            .iter()
            .any(|w| !(w.re.is_finite() && w.im.is_finite()))
        {
            return Err(BeamError::param("weights must be finite"));
        }
        let z_len = self.rows();
        let threads = rayon::current_num_threads().max(1);
        let chunk = z_len.div_ceil(threads).max(1);
        let mut y = vec![Complex64::new(0.0, 0.0); z_len];
        y.par_chunks_mut(chunk).enumerate().for_each(|(c, out)| {
            let start = c * chunk;
            for (&l, &w) in support.iter().zip(weights) {
                for (i, slot) in out.iter_mut().enumerate() {
                    *slot += self.entry(start + i, l) * w;
                }
            }
        });
        BeamPattern::matricize(&self.grid, &y)
    }

    fn check_index(&self, l: usize) -> Result<()> {
        if l >= self.cols() {
            return Err(BeamError::param(format!(
                "port index {l} out of range (L = {})",
                self.cols()
            )));
        }
        Ok(())
    }
}

/// General factored contraction: `c(m, n) = sum_z conj(V(z, n)) [conj(U(z, m)) e_z]`.
fn correlate_factored(
    x_phase: &Array2<Complex64>,
    y_phase: &Array2<Complex64>,
    residual: &[Complex64],
) -> Vec<Complex64> {
    let m_len = x_phase.nrows();
    let n_len = y_phase.nrows();
    let per_m: Vec<Vec<Complex64>> = (0..m_len)
        .into_par_iter()
        .map(|m| {
            let weighted: Vec<Complex64> = x_phase
                .row(m)
                .iter()
                .zip(residual)
                .map(|(&u, &e)| u.conj() * e)
                .collect();
            (0..n_len)
                .map(|n| {
                    y_phase
                        .row(n)
                        .iter()
                        .zip(&weighted)
                        .fold(Complex64::new(0.0, 0.0), |acc, (&v, &a)| acc + v.conj() * a)
                })
                .collect()
        })
        .collect();
    let mut out = vec![Complex64::new(0.0, 0.0); m_len * n_len];
    for (m, row) in per_m.into_iter().enumerate() {
        for (n, c) in row.into_iter().enumerate() {
            out[n * m_len + m] = c;
        }
    }
    out
}

pub fn dense_bytes(rows: usize, cols: usize) -> u64 {
    rows as u64 * cols as u64 * COMPLEX_BYTES
}

pub fn factored_bytes(rows: usize, port_rows: usize, port_cols: usize) -> u64 {
    rows as u64 * (port_rows + port_cols) as u64 * COMPLEX_BYTES
}
