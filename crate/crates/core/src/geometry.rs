//! Port lattice and angular sampling grid.
//!
//! Ports are enumerated with the row index `m` running fastest:
//! `l = n * M + m`. Angular samples are enumerated the same way,
//! `z = q * P + p`, so a beam vector is the column-stacked `P x Q` matrix.

use std::f64::consts::FRAC_PI_2;

use serde::Serialize;

use crate::error::{BeamError, Result};

/// A point on the aperture plane (z = 0), in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Position {
    pub x: f64,
    pub y: f64,
}

impl Position {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(&self, other: &Position) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

/// Regular `M x N` lattice of selectable antenna positions centered on the origin.
#[derive(Debug, Clone, PartialEq)]
pub struct PortGrid {
    rows: usize,
    cols: usize,
    spacing: f64,
    wavelength: f64,
    positions: Vec<Position>,
}

impl PortGrid {
    /// Builds an `rows x cols` lattice with inter-port `spacing`, both in meters.
    pub fn new(rows: usize, cols: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(BeamError::param(format!(
                "port grid dimensions must be >= 1, got {rows}x{cols}"
            )));
        }
        if !(spacing > 0.0 && spacing.is_finite()) {
            return Err(BeamError::param(format!(
                "port spacing must be > 0, got {spacing}"
            )));
        }
        if !(wavelength > 0.0 && wavelength.is_finite()) {
            return Err(BeamError::param(format!(
                "wavelength must be > 0, got {wavelength}"
            )));
        }
        let x_off = (rows as f64 - 1.0) / 2.0;
        let y_off = (cols as f64 - 1.0) / 2.0;
        let mut positions = Vec::with_capacity(rows * cols);
        for n in 0..cols {
            for m in 0..rows {
                positions.push(Position::new(
                    (m as f64 - x_off) * spacing,
                    (n as f64 - y_off) * spacing,
                ));
            }
        }
        Ok(Self {
            rows,
            cols,
            spacing,
            wavelength,
            positions,
        })
    }

    /// Square lattice holding `ports` positions; `ports` must be a perfect square.
    pub fn square(ports: usize, spacing: f64, wavelength: f64) -> Result<Self> {
        let side = exact_sqrt(ports).ok_or_else(|| {
            BeamError::param(format!("{ports} ports cannot form a square lattice"))
        })?;
        Self::new(side, side, spacing, wavelength)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn wavelength(&self) -> f64 {
        self.wavelength
    }

    pub fn positions(&self) -> &[Position] {
        &self.positions
    }

    pub fn position(&self, index: usize) -> Result<Position> {
        self.positions.get(index).copied().ok_or_else(|| {
            BeamError::param(format!(
                "port index {index} out of range (L = {})",
                self.len()
            ))
        })
    }

    pub fn index(&self, m: usize, n: usize) -> Result<usize> {
        if m >= self.rows || n >= self.cols {
            return Err(BeamError::param(format!(
                "lattice coordinate ({m}, {n}) outside {}x{} grid",
                self.rows, self.cols
            )));
        }
        Ok(n * self.rows + m)
    }

    pub fn coords(&self, index: usize) -> Result<(usize, usize)> {
        if index >= self.len() {
            return Err(BeamError::param(format!(
                "port index {index} out of range (L = {})",
                self.len()
            )));
        }
        Ok((index % self.rows, index / self.rows))
    }

    /// Edge lengths of the aperture `((M-1) d, (N-1) d)`.
    pub fn aperture(&self) -> (f64, f64) {
        (
            (self.rows as f64 - 1.0) * self.spacing,
            (self.cols as f64 - 1.0) * self.spacing,
        )
    }

    /// Smallest Euclidean distance over all unordered pairs of `indices`.
    ///
    /// A single index yields `+inf`.
    pub fn pairwise_min_distance(&self, indices: &[usize]) -> Result<f64> {
        if indices.is_empty() {
            return Err(BeamError::param(
                "pairwise distance needs at least one index",
            ));
        }
        let pts = indices
            .iter()
            .map(|&i| self.position(i))
            .collect::<Result<Vec<_>>>()?;
        let mut best = f64::INFINITY;
        for (i, a) in pts.iter().enumerate() {
            for b in &pts[i + 1..] {
                best = best.min(a.distance(b));
            }
        }
        Ok(best)
    }
}

/// Uniform `(phi, theta)` sampling of `[-pi/2, pi/2]^2`, endpoints included.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    phi: Vec<f64>,
    theta: Vec<f64>,
}

impl AngularGrid {
    pub fn new(azimuth_samples: usize, elevation_samples: usize) -> Result<Self> {
        if azimuth_samples < 2 || elevation_samples < 2 {
            return Err(BeamError::param(format!(
                "angular grid needs at least 2 samples per axis, got {azimuth_samples}x{elevation_samples}"
            )));
        }
        Ok(Self {
            phi: linspace(-FRAC_PI_2, FRAC_PI_2, azimuth_samples),
            theta: linspace(-FRAC_PI_2, FRAC_PI_2, elevation_samples),
        })
    }

    /// Number of azimuth samples `P`.
    pub fn azimuth_len(&self) -> usize {
        self.phi.len()
    }

    /// Number of elevation samples `Q`.
    pub fn elevation_len(&self) -> usize {
        self.theta.len()
    }

    pub fn len(&self) -> usize {
        self.phi.len() * self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn phi(&self) -> &[f64] {
        &self.phi
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    #[inline]
    pub fn flat_index(&self, p: usize, q: usize) -> usize {
        q * self.phi.len() + p
    }

    /// `(phi, theta)` of flat sample `z`.
    #[inline]
    pub fn angle(&self, z: usize) -> (f64, f64) {
        let p_len = self.phi.len();
        (self.phi[z % p_len], self.theta[z / p_len])
    }

    pub fn angles(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.theta
            .iter()
            .flat_map(move |&t| self.phi.iter().map(move |&f| (f, t)))
    }

    pub fn step(&self) -> (f64, f64) {
        (self.phi[1] - self.phi[0], self.theta[1] - self.theta[0])
    }
}

fn linspace(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    let denom = (count - 1) as f64;
    (0..count)
        .map(|i| {
            if i + 1 == count {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / denom)
            }
        })
        .collect()
}

pub(crate) fn exact_sqrt(value: usize) -> Option<usize> {
    let root = (value as f64).sqrt().round() as usize;
    (root * root == value).then_some(root)
}
