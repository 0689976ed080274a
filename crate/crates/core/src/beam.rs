//! Complex beam patterns over the angular grid and the desired-beam constructor.

use std::f64::consts::FRAC_PI_2;

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BeamError, Result};
use crate::geometry::AngularGrid;

/// Absolute slack used when testing whether an angle lies inside a closed interval.
const ANGLE_EPS: f64 = 1e-12;

/// Complex field sampled on an [`AngularGrid`]; entry `(p, q)` points toward `(phi_p, theta_q)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamPattern {
    grid: AngularGrid,
    values: Array2<Complex64>,
}

impl BeamPattern {
    pub fn new(grid: AngularGrid, values: Array2<Complex64>) -> Result<Self> {
        let expected = (grid.azimuth_len(), grid.elevation_len());
        if values.dim() != expected {
            return Err(BeamError::param(format!(
                "pattern shape {:?} does not match grid {:?}",
                values.dim(),
                expected
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: &AngularGrid) -> Self {
        let values = Array2::zeros((grid.azimuth_len(), grid.elevation_len()));
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Rebuilds a pattern from its column-stacked vector form.
    pub fn matricize(grid: &AngularGrid, g: &[Complex64]) -> Result<Self> {
        let (p_len, q_len) = (grid.azimuth_len(), grid.elevation_len());
        if g.len() != p_len * q_len {
            return Err(BeamError::param(format!(
                "vector of length {} cannot be matricized to {p_len}x{q_len}",
                g.len()
            )));
        }
        let values = Array2::from_shape_fn((p_len, q_len), |(p, q)| g[q * p_len + p]);
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    /// Column-stacked vector form, `z = q * P + p`.
    pub fn vectorize(&self) -> Vec<Complex64> {
        self.values.t().iter().copied().collect()
    }

    pub fn grid(&self) -> &AngularGrid {
        &self.grid
    }

    pub fn values(&self) -> &Array2<Complex64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<Complex64> {
        self.values
    }

    pub fn magnitude(&self) -> Array2<f64> {
        self.values.mapv(|c| c.norm())
    }

    pub fn phase(&self) -> Array2<f64> {
        self.values.mapv(|c| c.arg())
    }

    pub fn map(&self, f: impl Fn(Complex64) -> Complex64) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.mapv(f),
        }
    }

    pub(crate) fn ensure_same_grid(&self, other: &BeamPattern) -> Result<()> {
        if self.grid != other.grid {
            return Err(BeamError::param(
                "beam patterns live on different angular grids",
            ));
        }
        Ok(())
    }
}

/// Closed rectangle in `(phi, theta)`, radians.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetRegion {
    pub phi_lo: f64,
    pub phi_hi: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
}

impl TargetRegion {
    pub fn new(phi_lo: f64, phi_hi: f64, theta_lo: f64, theta_hi: f64) -> Result<Self> {
        let region = Self {
            phi_lo,
            phi_hi,
            theta_lo,
            theta_hi,
        };
        region.validate()?;
        Ok(region)
    }

    pub fn full() -> Self {
        Self {
            phi_lo: -FRAC_PI_2,
            phi_hi: FRAC_PI_2,
            theta_lo: -FRAC_PI_2,
            theta_hi: FRAC_PI_2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bounds = [self.phi_lo, self.phi_hi, self.theta_lo, self.theta_hi];
        if bounds.iter().any(|b| !b.is_finite()) {
            return Err(BeamError::param("target region bounds must be finite"));
        }
        if !(self.phi_lo < self.phi_hi && self.theta_lo < self.theta_hi) {
            return Err(BeamError::param(format!(
                "target region must have lo < hi on both axes, got {self:?}"
            )));
        }
        if bounds.iter().any(|b| b.abs() > FRAC_PI_2 + ANGLE_EPS) {
            return Err(BeamError::param(format!(
                "target region {self:?} leaves [-pi/2, pi/2]^2"
            )));
        }
        Ok(())
    }

    pub fn contains(&self, phi: f64, theta: f64) -> bool {
        phi >= self.phi_lo - ANGLE_EPS
            && phi <= self.phi_hi + ANGLE_EPS
            && theta >= self.theta_lo - ANGLE_EPS
            && theta <= self.theta_hi + ANGLE_EPS
    }

    /// `P x Q` indicator of grid samples inside the region.
    pub fn mask(&self, grid: &AngularGrid) -> Array2<bool> {
        let (phi, theta) = (grid.phi(), grid.theta());
        Array2::from_shape_fn((phi.len(), theta.len()), |(p, q)| {
            self.contains(phi[p], theta[q])
        })
    }
}

/// How the initial linear phase of the desired beam is laid out.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PhaseRamp {
    /// `k * (p + q)` over zero-based grid indices.
    #[default]
    Index,
    /// `k * (phi + theta)` with angles in radians.
    Radian,
}

/// Flat-top unit mask over `region` carrying a linear phase of slope `slope`.
pub fn desired_beam(
    grid: &AngularGrid,
    region: &TargetRegion,
    slope: f64,
    ramp: PhaseRamp,
) -> Result<BeamPattern> {
    region.validate()?;
    if !slope.is_finite() {
        return Err(BeamError::param("phase slope must be finite"));
    }
    let mask = region.mask(grid);
    if !mask.iter().any(|&inside| inside) {
        return Err(BeamError::DegenerateRegion);
    }
    let (phi, theta) = (grid.phi(), grid.theta());
    let values = Array2::from_shape_fn(mask.dim(), |(p, q)| {
        if !mask[(p, q)] {
            return Complex64::new(0.0, 0.0);
        }
        let phase = match ramp {
            PhaseRamp::Index => slope * (p + q) as f64,
            PhaseRamp::Radian => slope * (phi[p] + theta[q]),
        };
        Complex64::from_polar(1.0, phase)
    });
    BeamPattern::new(grid.clone(), values)
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use proptest::prelude::*;

    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn column_stacking_order() {
        let grid = AngularGrid::new(2, 2).unwrap();
        let (a, b, cc, d) = (c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0), c(4.0, 0.0));
        let values = ndarray::arr2(&[[a, cc], [b, d]]);
        let pattern = BeamPattern::new(grid.clone(), values).unwrap();
        assert_eq!(pattern.vectorize(), vec![a, b, cc, d]);
        assert_eq!(
            BeamPattern::matricize(&grid, &[a, b, cc, d]).unwrap(),
            pattern
        );
    }

    #[test]
    fn flat_index_at_last_row_of_first_column() {
        let grid = AngularGrid::new(7, 5).unwrap();
        // one-based (p = P, q = 1) -> z = P, zero-based z = P - 1
        assert_eq!(grid.flat_index(6, 0), 6);
    }

    #[test]
    fn matricize_rejects_wrong_length() {
        let grid = AngularGrid::new(3, 3).unwrap();
        assert!(BeamPattern::matricize(&grid, &[c(0.0, 0.0); 8]).is_err());
    }

    #[test]
    fn paper_target_beam() {
        let grid = AngularGrid::new(180, 180).unwrap();
        let region = TargetRegion::new(PI / 6.0, PI / 3.0, 0.0, PI / 6.0).unwrap();
        let g = desired_beam(&grid, &region, 0.1, PhaseRamp::Index).unwrap();
        let mag = g.magnitude();
        let support = mag.iter().filter(|&&m| m > 0.0).count();
        let expected = region.mask(&grid).iter().filter(|&&b| b).count();
        assert_eq!(support, expected);
        // 30 degree span at pi/179 spacing gives 30 samples per axis
        assert_eq!(support, 30 * 30);
        for ((p, q), v) in g.values().indexed_iter() {
            if v.norm() > 0.0 {
                assert!((v.norm() - 1.0).abs() < 1e-15);
                let expected = Complex64::from_polar(1.0, 0.1 * (p + q) as f64);
                assert!((v - expected).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn zero_slope_is_real() {
        let grid = AngularGrid::new(40, 30).unwrap();
        let region = TargetRegion::new(-0.3, 0.5, 0.1, 0.9).unwrap();
        let g = desired_beam(&grid, &region, 0.0, PhaseRamp::Index).unwrap();
        assert!(g.values().iter().all(|v| v.im == 0.0 && v.re >= 0.0));
    }

    #[test]
    fn full_region_saturates() {
        let grid = AngularGrid::new(9, 11).unwrap();
        let g = desired_beam(&grid, &TargetRegion::full(), 0.3, PhaseRamp::Radian).unwrap();
        assert!(g.magnitude().iter().all(|&m| (m - 1.0).abs() < 1e-15));
    }

    #[test]
    fn region_errors() {
        let grid = AngularGrid::new(10, 10).unwrap();
        assert!(TargetRegion::new(0.2, 0.1, 0.0, 0.1).is_err());
        assert!(TargetRegion::new(0.0, 2.0, 0.0, 0.1).is_err());
        let thin = TargetRegion::new(0.01, 0.02, 0.01, 0.02).unwrap();
        assert!(matches!(
            desired_beam(&grid, &thin, 0.1, PhaseRamp::Index),
            Err(BeamError::DegenerateRegion)
        ));
    }

    #[test]
    fn deterministic_and_symmetric() {
        let grid = AngularGrid::new(41, 21).unwrap();
        let region = TargetRegion::new(-0.4, 0.4, 0.2, 0.7).unwrap();
        let a = desired_beam(&grid, &region, 0.0, PhaseRamp::Index).unwrap();
        let b = desired_beam(&grid, &region, 0.0, PhaseRamp::Index).unwrap();
        assert_eq!(a, b);
        let p_len = grid.azimuth_len();
        for p in 0..p_len {
            for q in 0..grid.elevation_len() {
                assert_eq!(a.values()[(p, q)], a.values()[(p_len - 1 - p, q)]);
            }
        }
    }

    proptest! {
        #[test]
        fn vectorize_matricize_inverse(p_len in 2usize..9, q_len in 2usize..9, seed in any::<u64>()) {
            let grid = AngularGrid::new(p_len, q_len).unwrap();
            let g: Vec<Complex64> = (0..p_len * q_len)
                .map(|i| {
                    let t = (seed.wrapping_mul(6364136223846793005).wrapping_add(i as u64) % 1000) as f64;
                    Complex64::new(t, -t * 0.5)
                })
                .collect();
            let pattern = BeamPattern::matricize(&grid, &g).unwrap();
            prop_assert_eq!(pattern.vectorize(), g);
        }
    }
}
