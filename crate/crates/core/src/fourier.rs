//! Fourier-domain beamforming: closed-form port weights, 2-D DFT kernels and
//! iterative phase retrieval of the desired beam.

use std::f64::consts::PI;
use std::sync::Arc;

use ndarray::{Array2, Axis};
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::beam::BeamPattern;
use crate::error::{BeamError, Result};
use crate::geometry::{exact_sqrt, Position};
use crate::steering::VMode;

/// Port weights paired with the port indices they drive.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct WeightVector {
    pub support: Vec<usize>,
    pub weights: Vec<Complex64>,
}

impl WeightVector {
    pub fn new(support: Vec<usize>, weights: Vec<Complex64>) -> Result<Self> {
        if support.len() != weights.len() {
            return Err(BeamError::param("support and weights differ in length"));
        }
        let mut seen = support.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(BeamError::param("support indices must be unique"));
        }
        Ok(Self { support, weights })
    }

    pub fn len(&self) -> usize {
        self.support.len()
    }

    pub fn is_empty(&self) -> bool {
        self.support.is_empty()
    }
}

/// Closed-form weights `w_l = sum_{p,q} G(p,q) exp{+j 2pi/lambda (x_l u + y_l v)}`
/// evaluated by direct summation at arbitrary port positions.
pub fn weights_from_beam(
    beam: &BeamPattern,
    ports: &[Position],
    wavelength: f64,
    vmode: VMode,
) -> Result<Vec<Complex64>> {
    if !(wavelength > 0.0 && wavelength.is_finite()) {
        return Err(BeamError::param(format!(
            "wavelength must be > 0, got {wavelength}"
        )));
    }
    if ports.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(BeamError::param("port positions must be finite"));
    }
    let k = 2.0 * PI / wavelength;
    // Only nonzero samples contribute.
    let terms: Vec<(Complex64, f64, f64)> = beam
        .values()
        .indexed_iter()
        .filter(|(_, g)| g.norm_sqr() > 0.0)
        .map(|((p, q), &g)| {
            let (u, v) = vmode.direction(beam.grid().phi()[p], beam.grid().theta()[q]);
            (g, k * u, k * v)
        })
        .collect();
    Ok(ports
        .par_iter()
        .map(|pos| {
            terms
                .iter()
                .fold(Complex64::new(0.0, 0.0), |acc, &(g, ku, kv)| {
                    acc + g * Complex64::cis(ku * pos.x + kv * pos.y)
                })
        })
        .collect())
}

/// Cached row/column FFT plans for a fixed `P x Q` shape.
pub struct Dft2 {
    rows: usize,
    cols: usize,
    fwd_rows: Arc<dyn Fft<f64>>,
    fwd_cols: Arc<dyn Fft<f64>>,
    inv_rows: Arc<dyn Fft<f64>>,
    inv_cols: Arc<dyn Fft<f64>>,
}

impl Dft2 {
    pub fn new(rows: usize, cols: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            rows,
            cols,
            fwd_rows: planner.plan_fft_forward(rows),
            fwd_cols: planner.plan_fft_forward(cols),
            inv_rows: planner.plan_fft_inverse(rows),
            inv_cols: planner.plan_fft_inverse(cols),
        }
    }

    /// Unnormalized forward transform, `F(u,v) = sum f(x,y) exp{-j 2pi (ux/P + vy/Q)}`.
    pub fn forward(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.fwd_rows, &self.fwd_cols);
    }

    /// Inverse transform scaled by `1 / (P Q)`.
    pub fn inverse(&self, data: &mut Array2<Complex64>) {
        self.apply(data, &self.inv_rows, &self.inv_cols);
        let scale = 1.0 / (self.rows * self.cols) as f64;
        data.mapv_inplace(|c| c * scale);
    }

    fn apply(
        &self,
        data: &mut Array2<Complex64>,
        along_rows: &Arc<dyn Fft<f64>>,
        along_cols: &Arc<dyn Fft<f64>>,
    ) {
        assert_eq!(data.dim(), (self.rows, self.cols), "Dft2 shape mismatch");
        // transform each column (length P), then each row (length Q)
        let mut buf = vec![Complex64::new(0.0, 0.0); self.rows];
        for mut col in data.axis_iter_mut(Axis(1)) {
            buf.iter_mut().zip(col.iter()).for_each(|(b, &c)| *b = c);
            along_rows.process(&mut buf);
            col.iter_mut().zip(&buf).for_each(|(c, &b)| *c = b);
        }
        let mut buf = vec![Complex64::new(0.0, 0.0); self.cols];
        for mut row in data.axis_iter_mut(Axis(0)) {
            buf.iter_mut().zip(row.iter()).for_each(|(b, &c)| *b = c);
            along_cols.process(&mut buf);
            row.iter_mut().zip(&buf).for_each(|(c, &b)| *c = b);
        }
    }
}

pub fn dft2_forward(input: &Array2<Complex64>) -> Array2<Complex64> {
    let (r, c) = input.dim();
    let mut out = input.to_owned();
    Dft2::new(r, c).forward(&mut out);
    out
}

pub fn dft2_inverse(input: &Array2<Complex64>) -> Array2<Complex64> {
    let (r, c) = input.dim();
    let mut out = input.to_owned();
    Dft2::new(r, c).inverse(&mut out);
    out
}

/// Which `sqrt(S) x sqrt(S)` block of the spatial-domain matrix is kept.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ApertureBlock {
    /// Middle block after swapping quadrants (zero frequency moved to the center).
    #[default]
    Centered,
    /// Upper-left block of the unshifted matrix.
    Corner,
}

impl ApertureBlock {
    /// Whether unshifted index `i` of an axis of length `len` survives truncation to `side`.
    fn keeps(self, i: usize, len: usize, side: usize) -> bool {
        match self {
            ApertureBlock::Corner => i < side,
            ApertureBlock::Centered => {
                let shifted = (i + len / 2) % len;
                let start = (len - side) / 2;
                shifted >= start && shifted < start + side
            }
        }
    }

    fn mask(self, len: usize, side: usize) -> Vec<bool> {
        (0..len).map(|i| self.keeps(i, len, side)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RetrievalOptions {
    pub iterations: usize,
    pub block: ApertureBlock,
    /// Stop once the relative residual improvement of one iteration drops below this.
    pub early_stop: Option<f64>,
}

impl Default for RetrievalOptions {
    fn default() -> Self {
        Self {
            iterations: 50,
            block: ApertureBlock::Centered,
            early_stop: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseRetrieval {
    /// Desired magnitude carrying the refined phase.
    pub pattern: BeamPattern,
    /// Aperture-constraint residual `|| |G_desired| - |F{pad(W_c)}| ||_2`
    /// evaluated at the start of each iteration, plus one entry for the
    /// returned pattern.
    pub residuals: Vec<f64>,
    pub iterations: usize,
}

/// Iterative FFT phase retrieval under a `sqrt(S) x sqrt(S)` aperture constraint.
///
/// Each iteration inverse-transforms the beam, keeps the aperture block,
/// transforms back and replaces the phase of the desired magnitude with the
/// phase of the band-limited beam.
pub fn phase_retrieve(
    desired: &BeamPattern,
    active_ports: usize,
    options: &RetrievalOptions,
) -> Result<PhaseRetrieval> {
    let (p_len, q_len) = desired.values().dim();
    let side = exact_sqrt(active_ports).ok_or_else(|| {
        BeamError::param(format!("array size {active_ports} is not a perfect square"))
    })?;
    if side == 0 || side > p_len.min(q_len) {
        return Err(BeamError::param(format!(
            "aperture side {side} must lie in 1..={}",
            p_len.min(q_len)
        )));
    }
    let magnitude = desired.magnitude();
    let keep_rows = options.block.mask(p_len, side);
    let keep_cols = options.block.mask(q_len, side);
    let dft = Dft2::new(p_len, q_len);

    let band_limit = |g: &Array2<Complex64>| -> Array2<Complex64> {
        let mut w = g.clone();
        dft.inverse(&mut w);
        for ((p, q), v) in w.indexed_iter_mut() {
            if !(keep_rows[p] && keep_cols[q]) {
                *v = Complex64::new(0.0, 0.0);
            }
        }
        dft.forward(&mut w);
        w
    };
    let residual = |approx: &Array2<Complex64>| -> f64 {
        magnitude
            .iter()
            .zip(approx.iter())
            .map(|(&m, a)| (m - a.norm()).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    let mut current = desired.values().clone();
    let mut residuals = Vec::with_capacity(options.iterations + 1);
    let mut iterations = 0;
    let mut approx = if options.iterations > 0 {
        Some(band_limit(&current))
    } else {
        None
    };
    while let Some(band) = approx.take() {
        let err = residual(&band);
        if let (Some(tol), Some(&prev)) = (options.early_stop, residuals.last()) {
            if prev - err < tol * prev {
                residuals.push(err);
                return Ok(PhaseRetrieval {
                    pattern: BeamPattern::new(desired.grid().clone(), current)?,
                    residuals,
                    iterations,
                });
            }
        }
        residuals.push(err);
        ndarray::Zip::from(&mut current)
            .and(&magnitude)
            .and(&band)
            .for_each(|c, &m, b| *c = Complex64::from_polar(m, b.arg()));
        iterations += 1;
        approx = Some(band_limit(&current));
        if iterations == options.iterations {
            let band = approx.take().unwrap();
            residuals.push(residual(&band));
        }
    }
    Ok(PhaseRetrieval {
        pattern: BeamPattern::new(desired.grid().clone(), current)?,
        residuals,
        iterations,
    })
}

#[cfg(test)]
mod tests {
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    use super::*;
    use crate::beam::{desired_beam, PhaseRamp, TargetRegion};
    use crate::geometry::{AngularGrid, PortGrid};
    use crate::steering::{steering_entry, SteeringDictionary, StorageKind};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn random_matrix(rng: &mut StdRng, r: usize, cc: usize) -> Array2<Complex64> {
        Array2::from_shape_fn((r, cc), |_| {
            c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
        })
    }

    /// Textbook O(N^2) 2-D DFT.
    fn naive_dft2(x: &Array2<Complex64>, sign: f64) -> Array2<Complex64> {
        let (pr, qc) = x.dim();
        Array2::from_shape_fn((pr, qc), |(u, v)| {
            let mut acc = c(0.0, 0.0);
            for ((a, b), &val) in x.indexed_iter() {
                let ang =
                    sign * 2.0 * PI * ((u * a) as f64 / pr as f64 + (v * b) as f64 / qc as f64);
                acc += val * Complex64::cis(ang);
            }
            acc
        })
    }

    #[test]
    fn dft_examples() {
        let ones = Array2::from_elem((2, 2), c(1.0, 0.0));
        let f = dft2_forward(&ones);
        let expect = ndarray::arr2(&[[c(4.0, 0.0), c(0.0, 0.0)], [c(0.0, 0.0), c(0.0, 0.0)]]);
        assert!(f
            .iter()
            .zip(expect.iter())
            .all(|(a, b)| (a - b).norm() < 1e-14));

        let mut impulse = Array2::zeros((5, 3));
        impulse[(0, 0)] = c(1.0, 0.0);
        assert!(dft2_forward(&impulse)
            .iter()
            .all(|v| (v - c(1.0, 0.0)).norm() < 1e-14));
    }

    #[test]
    fn dft_matches_naive_and_inverts() {
        let mut rng = StdRng::seed_from_u64(5);
        let x = random_matrix(&mut rng, 6, 10);
        let f = dft2_forward(&x);
        let naive = naive_dft2(&x, -1.0);
        assert!(f
            .iter()
            .zip(naive.iter())
            .all(|(a, b)| (a - b).norm() < 1e-10));

        let x = random_matrix(&mut rng, 16, 16);
        let back = dft2_inverse(&dft2_forward(&x));
        assert!(back
            .iter()
            .zip(x.iter())
            .all(|(a, b)| (a - b).norm() < 1e-10));
    }

    #[test]
    fn real_input_gives_conjugate_symmetric_inverse() {
        let mut rng = StdRng::seed_from_u64(9);
        let real = Array2::from_shape_fn((7, 6), |_| c(rng.random_range(-1.0..1.0), 0.0));
        let w = dft2_inverse(&real);
        let (pr, qc) = w.dim();
        for ((a, b), v) in w.indexed_iter() {
            let mirror = w[((pr - a) % pr, (qc - b) % qc)];
            assert!((v - mirror.conj()).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_beam_gives_zero_weights() {
        let grid = AngularGrid::new(8, 8).unwrap();
        let ports = PortGrid::new(3, 3, 0.25, 1.0).unwrap();
        let w = weights_from_beam(
            &BeamPattern::zeros(&grid),
            ports.positions(),
            1.0,
            VMode::Decoupled,
        )
        .unwrap();
        assert!(w.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn impulse_weights_are_conjugate_steering() {
        let grid = AngularGrid::new(12, 10).unwrap();
        let ports = PortGrid::new(4, 3, 0.25, 1.0).unwrap();
        let (p0, q0) = (8, 3);
        let mut values = Array2::zeros((12, 10));
        values[(p0, q0)] = c(1.0, 0.0);
        let beam = BeamPattern::new(grid.clone(), values).unwrap();
        for mode in [VMode::Coupled, VMode::Decoupled] {
            let w = weights_from_beam(&beam, ports.positions(), 1.0, mode).unwrap();
            for (wl, &pos) in w.iter().zip(ports.positions()) {
                let s = steering_entry(pos, grid.phi()[p0], grid.theta()[q0], 1.0, mode);
                assert!((wl - s.conj()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn weights_match_brute_force_double_sum() {
        let mut rng = StdRng::seed_from_u64(21);
        let grid = AngularGrid::new(8, 8).unwrap();
        let beam = BeamPattern::new(grid.clone(), random_matrix(&mut rng, 8, 8)).unwrap();
        let ports: Vec<Position> = (0..3)
            .map(|_| Position::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0)))
            .collect();
        let lambda = 0.7;
        for mode in [VMode::Coupled, VMode::Decoupled] {
            let w = weights_from_beam(&beam, &ports, lambda, mode).unwrap();
            for (wl, pos) in w.iter().zip(&ports) {
                let mut acc = c(0.0, 0.0);
                for p in 0..8 {
                    for q in 0..8 {
                        let (phi, theta) = (grid.phi()[p], grid.theta()[q]);
                        let u = theta.sin() * phi.cos() / lambda;
                        let v = match mode {
                            VMode::Coupled => theta.sin() * phi.sin() / lambda,
                            VMode::Decoupled => phi.sin() / lambda,
                        };
                        acc += beam.values()[(p, q)]
                            * Complex64::cis(2.0 * PI * (u * pos.x + v * pos.y));
                    }
                }
                assert!((wl - acc).norm() < 1e-10 * acc.norm().max(1.0));
            }
        }
    }

    #[test]
    fn weights_then_synthesis_equals_dense_gram_product() {
        let mut rng = StdRng::seed_from_u64(4);
        let grid = AngularGrid::new(9, 7).unwrap();
        let ports = PortGrid::new(3, 3, 0.5, 1.0).unwrap();
        let beam = BeamPattern::new(grid.clone(), random_matrix(&mut rng, 9, 7)).unwrap();
        let d =
            SteeringDictionary::build(&ports, &grid, VMode::Coupled, StorageKind::Dense).unwrap();
        let w = weights_from_beam(&beam, ports.positions(), 1.0, VMode::Coupled).unwrap();
        let g = beam.vectorize();
        let dh_g = d.correlate(&g).unwrap();
        for (a, b) in w.iter().zip(&dh_g) {
            assert!((a - b).norm() < 1e-10);
        }
        let support: Vec<usize> = (0..ports.len()).collect();
        let y = d.synthesize(&support, &w).unwrap().vectorize();
        for (z, yz) in y.iter().enumerate() {
            let direct: Complex64 = (0..ports.len()).map(|l| d.entry(z, l) * dh_g[l]).sum();
            assert!((yz - direct).norm() < 1e-9);
        }
    }

    #[test]
    fn block_masks() {
        let centered = ApertureBlock::Centered.mask(180, 16);
        let kept: Vec<usize> = (0..180).filter(|&i| centered[i]).collect();
        let mut expected: Vec<usize> = (172..180).chain(0..8).collect();
        expected.sort_unstable();
        assert_eq!(kept, expected);
        let corner = ApertureBlock::Corner.mask(10, 3);
        assert_eq!(corner.iter().filter(|&&b| b).count(), 3);
        assert!(corner[0] && corner[2] && !corner[3]);
        // odd lengths keep the zero frequency inside the block
        assert!(ApertureBlock::Centered.mask(9, 3)[0]);
        assert_eq!(
            ApertureBlock::Centered
                .mask(9, 3)
                .iter()
                .filter(|&&b| b)
                .count(),
            3
        );
    }

    #[test]
    fn zero_iterations_is_identity() {
        let grid = AngularGrid::new(20, 20).unwrap();
        let region = TargetRegion::new(0.2, 0.8, 0.0, 0.5).unwrap();
        let g = desired_beam(&grid, &region, 0.1, PhaseRamp::Index).unwrap();
        let opts = RetrievalOptions {
            iterations: 0,
            ..Default::default()
        };
        let out = phase_retrieve(&g, 16, &opts).unwrap();
        assert_eq!(out.pattern, g);
        assert_eq!(out.iterations, 0);
        assert!(out.residuals.is_empty());
    }

    #[test]
    fn retrieval_parameter_errors() {
        let grid = AngularGrid::new(10, 10).unwrap();
        let g = BeamPattern::zeros(&grid);
        let opts = RetrievalOptions::default();
        assert!(phase_retrieve(&g, 15, &opts).is_err());
        assert!(phase_retrieve(&g, 121, &opts).is_err());
        assert!(phase_retrieve(&g, 100, &opts).is_ok());
    }

    #[test]
    fn residual_never_increases_and_magnitude_is_kept() {
        let grid = AngularGrid::new(40, 36).unwrap();
        let region = TargetRegion::new(-0.3, 0.6, 0.1, 0.9).unwrap();
        let g = desired_beam(&grid, &region, 0.2, PhaseRamp::Index).unwrap();
        for block in [ApertureBlock::Centered, ApertureBlock::Corner] {
            let opts = RetrievalOptions {
                iterations: 25,
                block,
                early_stop: None,
            };
            let out = phase_retrieve(&g, 36, &opts).unwrap();
            assert_eq!(out.residuals.len(), 26);
            assert!(out.residuals.windows(2).all(|w| w[1] <= w[0] + 1e-9));
            let mag = out.pattern.magnitude();
            assert!(mag
                .iter()
                .zip(g.magnitude().iter())
                .all(|(a, b)| (a - b).abs() < 1e-12));
        }
    }

    #[test]
    fn early_stop_cuts_iterations() {
        let grid = AngularGrid::new(30, 30).unwrap();
        let region = TargetRegion::new(-0.3, 0.6, 0.1, 0.9).unwrap();
        let g = desired_beam(&grid, &region, 0.1, PhaseRamp::Index).unwrap();
        let opts = RetrievalOptions {
            iterations: 500,
            early_stop: Some(1e-6),
            ..Default::default()
        };
        let out = phase_retrieve(&g, 25, &opts).unwrap();
        assert!(out.iterations < 500);
        assert_eq!(out.residuals.len(), out.iterations + 1);
    }
}
