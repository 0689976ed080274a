//! Greedy spacing-constrained port selection.
//!
//! A matching-pursuit loop picks, at every step, the admissible port whose
//! steering column correlates best with the current residual. Ports closer
//! than `d_min` to an already selected port are removed from the pool.
//!
//! Plain greedy picks can strand the search: on a quarter-wavelength lattice
//! with half-wavelength spacing the only 256-port packings of a 32 x 32 grid
//! are rigid, and correlation order rarely follows one. With the feasibility
//! guard enabled, a pick is accepted only if the remaining pool still holds
//! enough mutually compatible ports to reach the requested sparsity (shown by
//! an explicit completion set). Otherwise the next-best admissible port is
//! tried. The trace records the unguarded choice next to the accepted one.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{BeamError, Result};
use crate::fourier::weights_from_beam;
use crate::geometry::PortGrid;
use crate::steering::SteeringDictionary;

/// Relative slack under which two correlation magnitudes count as tied.
pub const TIE_TOLERANCE: f64 = 1e-12;

/// Relative slack on `d_min`, so ports at exactly `d_min` stay admissible
/// despite rounding in the coordinates.
const SPACING_SLACK: f64 = 1e-9;

/// How the residual is refreshed after each selection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResidualUpdate {
    /// `e = g - alpha * y / ||y||_2` with closed-form Fourier weights.
    #[default]
    Balanced,
    /// Least-squares projection `e = g - D_A D_A^+ g`.
    Conventional,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SelectOptions {
    pub sparsity: usize,
    pub alpha: f64,
    pub min_spacing: f64,
    pub normalize_columns: bool,
    pub update: ResidualUpdate,
    pub feasibility_guard: bool,
}

impl Default for SelectOptions {
    fn default() -> Self {
        Self {
            sparsity: 256,
            alpha: -0.01,
            min_spacing: 0.5,
            normalize_columns: true,
            update: ResidualUpdate::Balanced,
            feasibility_guard: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceStep {
    pub step: usize,
    pub port: usize,
    /// Unguarded argmax; differs from `port` when the feasibility guard intervened.
    pub greedy_port: usize,
    /// Correlation magnitude of the accepted port.
    pub correlation: f64,
    /// Largest correlation magnitude over admissible ports.
    pub max_correlation: f64,
    pub residual_norm: f64,
}

impl TraceStep {
    pub fn guarded(&self) -> bool {
        self.port != self.greedy_port
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Selection {
    /// Selected ports in selection order.
    pub support: Vec<usize>,
    pub weights: Vec<Complex64>,
    pub trace: Vec<TraceStep>,
}

/// Ports `j` with `0 < |pos(j) - pos(index)| < d_min`.
pub fn excluded_neighbors(grid: &PortGrid, index: usize, min_spacing: f64) -> Result<Vec<usize>> {
    if !(min_spacing >= 0.0 && min_spacing.is_finite()) {
        return Err(BeamError::param(format!(
            "d_min must be >= 0, got {min_spacing}"
        )));
    }
    let (m0, n0) = grid.coords(index)?;
    let center = grid.position(index)?;
    let reach = (min_spacing / grid.spacing()).ceil() as usize;
    let limit = min_spacing * (1.0 - SPACING_SLACK);
    let mut out = Vec::new();
    for n in n0.saturating_sub(reach)..(n0 + reach + 1).min(grid.cols()) {
        for m in m0.saturating_sub(reach)..(m0 + reach + 1).min(grid.rows()) {
            let j = grid.index(m, n)?;
            let dist = center.distance(&grid.positions()[j]);
            if j != index && dist > 0.0 && dist < limit {
                out.push(j);
            }
        }
    }
    Ok(out)
}

/// Index of the largest value among admissible entries; near-ties resolve to the lowest index.
pub fn tolerant_argmax(values: &[f64], admissible: impl Fn(usize) -> bool) -> Option<usize> {
    let best = values
        .iter()
        .enumerate()
        .filter(|&(j, _)| admissible(j))
        .map(|(_, &v)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if best == f64::NEG_INFINITY {
        return None;
    }
    let floor = best - TIE_TOLERANCE * best.abs();
    values
        .iter()
        .enumerate()
        .find(|&(j, &v)| admissible(j) && v >= floor)
        .map(|(j, _)| j)
}

/// Runs the greedy selection of `options.sparsity` ports against desired beam `g`
/// (column-stacked, length `Z`).
pub fn select_ports(
    dict: &SteeringDictionary,
    g: &[Complex64],
    options: &SelectOptions,
) -> Result<Selection> {
    let grid = dict.ports();
    let z_len = dict.rows();
    if g.len() != z_len {
        return Err(BeamError::param(format!(
            "desired beam length {} does not match dictionary rows {z_len}",
            g.len()
        )));
    }
    if options.sparsity == 0 {
        return Err(BeamError::param("sparsity must be >= 1"));
    }
    if !options.alpha.is_finite() {
        return Err(BeamError::param("alpha must be finite"));
    }
    let desired = crate::beam::BeamPattern::matricize(dict.grid(), g)?;
    let scale = if options.normalize_columns {
        1.0 / dict.column_norm()
    } else {
        1.0
    };

    let neighbors = (0..dict.cols())
        .map(|l| excluded_neighbors(grid, l, options.min_spacing))
        .collect::<Result<Vec<_>>>()?;
    let mut forbidden = vec![false; dict.cols()];
    let mut certificate = if options.feasibility_guard {
        complete_packing(&forbidden, &neighbors, grid, options.sparsity)
    } else {
        None
    };
    if options.feasibility_guard && certificate.is_none() {
        log::warn!(
            "no {}-port packing found up front; selecting without the feasibility guard",
            options.sparsity
        );
    }
    let mut support = Vec::with_capacity(options.sparsity);
    let mut weights = Vec::with_capacity(options.sparsity);
    let mut trace = Vec::with_capacity(options.sparsity);
    let mut residual = g.to_vec();
    let mut beam = vec![Complex64::new(0.0, 0.0); z_len];
    let mut basis = Orthonormalizer::default();

    for step in 1..=options.sparsity {
        let correlation: Vec<f64> = dict
            .correlate(&residual)?
            .iter()
            .map(|c| c.norm() * scale)
            .collect();
        let Some(greedy) = tolerant_argmax(&correlation, |j| !forbidden[j]) else {
            return Err(BeamError::InfeasibleSpacing {
                achieved: support.len(),
                requested: options.sparsity,
            });
        };
        let chosen = match certificate.take() {
            None => greedy,
            Some(cert) => {
                let need = options.sparsity - step;
                let (port, next) = guarded_pick(
                    greedy,
                    &correlation,
                    &forbidden,
                    &neighbors,
                    grid,
                    cert,
                    need,
                );
                certificate = Some(next);
                port
            }
        };
        forbidden[chosen] = true;
        for &j in &neighbors[chosen] {
            forbidden[j] = true;
        }
        support.push(chosen);

        match options.update {
            ResidualUpdate::Balanced => {
                // g is fixed, so earlier weights are unchanged and only the new port needs its sum
                let w = weights_from_beam(
                    &desired,
                    &[grid.positions()[chosen]],
                    grid.wavelength(),
                    dict.vmode(),
                )?[0];
                weights.push(w);
                dict.accumulate_column(chosen, w, &mut beam);
                let norm = l2_norm(&beam);
                if norm == 0.0 || !norm.is_finite() {
                    return Err(BeamError::DegenerateBeam(format!(
                        "synthesized beam has zero norm after selecting {} ports",
                        support.len()
                    )));
                }
                let gain = options.alpha / norm;
                for ((e, &gz), &yz) in residual.iter_mut().zip(g).zip(&beam) {
                    *e = gz - yz * gain;
                }
            }
            ResidualUpdate::Conventional => {
                let column = dict.column(chosen)?;
                if !basis.push(column) {
                    return Err(BeamError::DegenerateBeam(format!(
                        "port {chosen} is linearly dependent on the current support"
                    )));
                }
                residual = basis.project_out(g);
            }
        }

        let residual_norm = l2_norm(&residual);
        log::debug!(
            "select step={step} port={chosen} greedy={greedy} corr={:.6e} residual={residual_norm:.6e}",
            correlation[chosen]
        );
        trace.push(TraceStep {
            step,
            port: chosen,
            greedy_port: greedy,
            correlation: correlation[chosen],
            max_correlation: correlation[greedy],
            residual_norm,
        });
    }

    if options.update == ResidualUpdate::Conventional {
        weights = basis.least_squares(g);
    }

    Ok(Selection {
        support,
        weights,
        trace,
    })
}

/// Best admissible port that keeps a completion to the requested sparsity.
///
/// `cert` is a set of `need + 1` admissible, mutually compatible ports; any of
/// its members is always acceptable, so the search cannot fail.
fn guarded_pick(
    greedy: usize,
    correlation: &[f64],
    forbidden: &[bool],
    neighbors: &[Vec<usize>],
    grid: &PortGrid,
    cert: Vec<usize>,
    need: usize,
) -> (usize, Vec<usize>) {
    let mut order: Vec<usize> = (0..correlation.len())
        .filter(|&j| !forbidden[j] && j != greedy)
        .collect();
    order.sort_by(|&a, &b| correlation[b].total_cmp(&correlation[a]).then(a.cmp(&b)));
    for cand in std::iter::once(greedy).chain(order) {
        if let Some(pos) = cert.iter().position(|&c| c == cand) {
            let mut rest = cert;
            rest.remove(pos);
            return (cand, rest);
        }
        let mut trial = forbidden.to_vec();
        trial[cand] = true;
        for &j in &neighbors[cand] {
            trial[j] = true;
        }
        if let Some(done) = complete_packing(&trial, neighbors, grid, need) {
            return (cand, done);
        }
    }
    unreachable!("certificate members are always admissible")
}

/// Finds `need` mutually compatible ports outside `forbidden` by greedy
/// lattice scans in four orders, or `None` if every scan falls short.
fn complete_packing(
    forbidden: &[bool],
    neighbors: &[Vec<usize>],
    grid: &PortGrid,
    need: usize,
) -> Option<Vec<usize>> {
    let (rows, cols) = (grid.rows(), grid.cols());
    let column_major = |i: usize| (i % cols) * rows + i / cols;
    let orders: [&dyn Fn(usize) -> usize; 4] =
        [&|i| i, &|i| forbidden.len() - 1 - i, &column_major, &|i| {
            column_major(forbidden.len() - 1 - i)
        }];
    for order in orders {
        let mut blocked = forbidden.to_vec();
        let mut picked = Vec::with_capacity(need);
        for i in 0..blocked.len() {
            if picked.len() == need {
                break;
            }
            let l = order(i);
            if blocked[l] {
                continue;
            }
            picked.push(l);
            blocked[l] = true;
            for &j in &neighbors[l] {
                blocked[j] = true;
            }
        }
        if picked.len() == need {
            return Some(picked);
        }
    }
    None
}

pub(crate) fn l2_norm(v: &[Complex64]) -> f64 {
    v.iter().map(|c| c.norm_sqr()).sum::<f64>().sqrt()
}

fn dot(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter()
        .zip(b)
        .fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// Incremental QR of the selected columns by modified Gram-Schmidt.
#[derive(Debug, Default)]
struct Orthonormalizer {
    q: Vec<Vec<Complex64>>,
    /// Column `k` holds `R[0..=k, k]`.
    r: Vec<Vec<Complex64>>,
}

impl Orthonormalizer {
    fn push(&mut self, mut column: Vec<Complex64>) -> bool {
        let original = l2_norm(&column);
        let mut coeffs = Vec::with_capacity(self.q.len() + 1);
        // two passes keep the basis orthogonal to working precision
        let mut total = vec![Complex64::new(0.0, 0.0); self.q.len()];
        for _ in 0..2 {
            for (k, qk) in self.q.iter().enumerate() {
                let c = dot(qk, &column);
                total[k] += c;
                for (x, &qv) in column.iter_mut().zip(qk) {
                    *x -= qv * c;
                }
            }
        }
        coeffs.extend(total);
        let norm = l2_norm(&column);
        if norm <= 1e-10 * original {
            return false;
        }
        column.iter_mut().for_each(|x| *x /= norm);
        coeffs.push(Complex64::new(norm, 0.0));
        self.q.push(column);
        self.r.push(coeffs);
        true
    }

    fn project_out(&self, g: &[Complex64]) -> Vec<Complex64> {
        let mut e = g.to_vec();
        for qk in &self.q {
            let c = dot(qk, &e);
            for (x, &qv) in e.iter_mut().zip(qk) {
                *x -= qv * c;
            }
        }
        e
    }

    fn least_squares(&self, g: &[Complex64]) -> Vec<Complex64> {
        let rhs: Vec<Complex64> = self.q.iter().map(|qk| dot(qk, g)).collect();
        let k = rhs.len();
        let mut x = vec![Complex64::new(0.0, 0.0); k];
        for i in (0..k).rev() {
            let acc = (i + 1..k).fold(rhs[i], |acc, j| acc - self.r[j][i] * x[j]);
            x[i] = acc / self.r[i][i];
        }
        x
    }
}
