//! Beam quality metrics, cross-sections and CSV exporters.

use std::fmt::Write as _;

use ndarray::Array2;
use serde::Serialize;

use crate::beam::{BeamPattern, TargetRegion};
use crate::error::{BeamError, Result};

pub const DEFAULT_GUARD_CELLS: usize = 3;
pub const DEFAULT_DB_FLOOR: f64 = -80.0;

/// `sum_z |g_z - y_z|^2`.
pub fn reconstruction_error(g: &BeamPattern, y: &BeamPattern) -> Result<f64> {
    g.ensure_same_grid(y)?;
    Ok(g.values()
        .iter()
        .zip(y.values().iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum())
}

/// `|y| / max |y|`.
pub fn normalize_beam(y: &BeamPattern) -> Result<Array2<f64>> {
    let mag = y.magnitude();
    let peak = mag.iter().copied().fold(0.0_f64, f64::max);
    if peak == 0.0 || !peak.is_finite() {
        return Err(BeamError::DegenerateBeam(
            "cannot normalize an all-zero beam".into(),
        ));
    }
    Ok(mag.mapv(|m| m / peak))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionAxis {
    /// Sweep azimuth along the elevation line nearest the requested angle.
    FixedTheta,
    /// Sweep elevation along the azimuth line nearest the requested angle.
    FixedPhi,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CrossSection {
    pub axis: SectionAxis,
    /// Grid angle actually used for the fixed coordinate.
    pub fixed_angle: f64,
    /// `(swept angle in radians, normalized magnitude)`.
    pub samples: Vec<(f64, f64)>,
}

/// Nearest-sample lookup; exact ties go to the lower index.
fn nearest(axis: &[f64], angle: f64) -> Result<usize> {
    let (lo, hi) = (axis[0], axis[axis.len() - 1]);
    if !(angle >= lo - 1e-12 && angle <= hi + 1e-12) {
        return Err(BeamError::param(format!(
            "angle {angle} outside grid range [{lo}, {hi}]"
        )));
    }
    Ok(axis
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |(best, dist), (i, &a)| {
            let d = (a - angle).abs();
            if d < dist {
                (i, d)
            } else {
                (best, dist)
            }
        })
        .0)
}

pub fn cross_section(y: &BeamPattern, axis: SectionAxis, angle: f64) -> Result<CrossSection> {
    let norm = normalize_beam(y)?;
    let grid = y.grid();
    let section = match axis {
        SectionAxis::FixedTheta => {
            let q = nearest(grid.theta(), angle)?;
            CrossSection {
                axis,
                fixed_angle: grid.theta()[q],
                samples: grid
                    .phi()
                    .iter()
                    .enumerate()
                    .map(|(p, &phi)| (phi, norm[(p, q)]))
                    .collect(),
            }
        }
        SectionAxis::FixedPhi => {
            let p = nearest(grid.phi(), angle)?;
            CrossSection {
                axis,
                fixed_angle: grid.phi()[p],
                samples: grid
                    .theta()
                    .iter()
                    .enumerate()
                    .map(|(q, &theta)| (theta, norm[(p, q)]))
                    .collect(),
            }
        }
    };
    Ok(section)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BeamMetrics {
    pub reconstruction_error: f64,
    pub mainlobe_mean_gain: f64,
    pub peak_sidelobe: f64,
    pub peak_gain_db: f64,
}

impl BeamMetrics {
    pub const FIELDS: [&'static str; 4] = [
        "reconstruction_error",
        "mainlobe_mean_gain",
        "peak_sidelobe",
        "peak_gain_db",
    ];

    pub fn values(&self) -> [f64; 4] {
        [
            self.reconstruction_error,
            self.mainlobe_mean_gain,
            self.peak_sidelobe,
            self.peak_gain_db,
        ]
    }

    fn delta(&self, base: &BeamMetrics) -> [f64; 4] {
        let (a, b) = (self.values(), base.values());
        [a[0] - b[0], a[1] - b[1], a[2] - b[2], a[3] - b[3]]
    }
}

/// Metrics of beam `y` against its target `g`. Side lobes are measured outside
/// the region mask dilated by `guard_cells` samples on each axis.
pub fn evaluate(
    g: &BeamPattern,
    y: &BeamPattern,
    region: &TargetRegion,
    guard_cells: usize,
) -> Result<BeamMetrics> {
    let reconstruction_error = reconstruction_error(g, y)?;
    let norm = normalize_beam(y)?;
    let peak = y.magnitude().iter().copied().fold(0.0_f64, f64::max);
    let mask = region.mask(y.grid());
    let (inside_sum, inside_count) = norm
        .iter()
        .zip(mask.iter())
        .filter(|(_, &m)| m)
        .fold((0.0, 0usize), |(s, c), (&v, _)| (s + v, c + 1));
    if inside_count == 0 {
        return Err(BeamError::DegenerateRegion);
    }
    let guarded = dilate(&mask, guard_cells);
    let peak_sidelobe = norm
        .iter()
        .zip(guarded.iter())
        .filter(|(_, &m)| !m)
        .map(|(&v, _)| v)
        .fold(0.0_f64, f64::max);
    Ok(BeamMetrics {
        reconstruction_error,
        mainlobe_mean_gain: inside_sum / inside_count as f64,
        peak_sidelobe,
        peak_gain_db: 20.0 * peak.log10(),
    })
}

fn dilate(mask: &Array2<bool>, cells: usize) -> Array2<bool> {
    let (rows, cols) = mask.dim();
    Array2::from_shape_fn((rows, cols), |(p, q)| {
        let (p0, p1) = (p.saturating_sub(cells), (p + cells + 1).min(rows));
        let (q0, q1) = (q.saturating_sub(cells), (q + cells + 1).min(cols));
        (p0..p1).any(|a| (q0..q1).any(|b| mask[(a, b)]))
    })
}

/// One row of a comparison: a label, the beam the scheme aimed for and the beam it produced.
#[derive(Debug, Clone)]
pub struct SchemeBeams<'a> {
    pub label: &'a str,
    pub target: &'a BeamPattern,
    pub beam: &'a BeamPattern,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricsTable {
    pub rows: Vec<(String, BeamMetrics)>,
    /// `(from, to, to - from)` for every ordered pair `from < to`.
    pub deltas: Vec<(String, String, [f64; 4])>,
}

pub fn compare_configs(
    results: &[SchemeBeams<'_>],
    region: &TargetRegion,
    guard_cells: usize,
) -> Result<MetricsTable> {
    if let Some(first) = results.first() {
        for r in results {
            first.beam.ensure_same_grid(r.beam)?;
            first.beam.ensure_same_grid(r.target)?;
        }
    }
    let rows = results
        .iter()
        .map(|r| {
            Ok((
                r.label.to_string(),
                evaluate(r.target, r.beam, region, guard_cells)?,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut deltas = Vec::new();
    for (i, (a, ma)) in rows.iter().enumerate() {
        for (b, mb) in &rows[i + 1..] {
            deltas.push((a.clone(), b.clone(), mb.delta(ma)));
        }
    }
    Ok(MetricsTable { rows, deltas })
}

impl MetricsTable {
    pub fn to_csv(&self) -> String {
        let mut out = format!("scheme,{}\n", BeamMetrics::FIELDS.join(","));
        for (label, m) in &self.rows {
            out.push_str(label);
            for v in m.values() {
                let _ = write!(out, ",{}", fmt_num(v));
            }
            out.push('\n');
        }
        out
    }

    pub fn deltas_csv(&self) -> String {
        let mut out = format!(
            "from,to,{}\n",
            BeamMetrics::FIELDS.map(|f| format!("delta_{f}")).join(",")
        );
        for (a, b, d) in &self.deltas {
            let _ = write!(out, "{a},{b}");
            for v in d {
                let _ = write!(out, ",{}", fmt_num(*v));
            }
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let width = self
            .rows
            .iter()
            .map(|(l, _)| l.len())
            .max()
            .unwrap_or(6)
            .max(6);
        let mut out = format!(
            "{:<width$}  {:>14}  {:>10}  {:>10}  {:>10}\n",
            "scheme", "recon_error", "mainlobe", "sidelobe", "peak_dB"
        );
        for (label, m) in &self.rows {
            let _ = writeln!(
                out,
                "{label:<width$}  {:>14.6e}  {:>10.4}  {:>10.4}  {:>10.3}",
                m.reconstruction_error, m.mainlobe_mean_gain, m.peak_sidelobe, m.peak_gain_db
            );
        }
        out
    }
}

pub(crate) fn fmt_num(v: f64) -> String {
    format!("{v:.12e}")
}

/// `P` rows by `Q` columns of comma-separated values.
pub fn matrix_csv(values: &Array2<f64>) -> String {
    let mut out = String::with_capacity(values.len() * 20);
    for row in values.rows() {
        let mut first = true;
        for &v in row {
            if !first {
                out.push(',');
            }
            first = false;
            out.push_str(&fmt_num(v));
        }
        out.push('\n');
    }
    out
}

/// Normalized magnitude in dB, clipped at `floor_db`.
pub fn to_db(normalized: &Array2<f64>, floor_db: f64) -> Array2<f64> {
    normalized.mapv(|v| {
        if v > 0.0 {
            (20.0 * v.log10()).max(floor_db)
        } else {
            floor_db
        }
    })
}

pub fn cross_section_csv(section: &CrossSection) -> String {
    let mut out = String::from("angle_deg,magnitude\n");
    for &(angle, mag) in &section.samples {
        let _ = writeln!(out, "{},{}", fmt_num(angle.to_degrees()), fmt_num(mag));
    }
    out
}

/// Several cross-sections over the same swept axis, one magnitude column per label.
pub fn overlay_csv(sections: &[(&str, &CrossSection)]) -> Result<String> {
    let Some((_, first)) = sections.first() else {
        return Ok(String::from("angle_deg\n"));
    };
    if sections
        .iter()
        .any(|(_, s)| s.samples.len() != first.samples.len())
    {
        return Err(BeamError::param("cross-sections differ in length"));
    }
    let mut out = String::from("angle_deg");
    for (label, _) in sections {
        let _ = write!(out, ",{label}");
    }
    out.push('\n');
    for (i, &(angle, _)) in first.samples.iter().enumerate() {
        out.push_str(&fmt_num(angle.to_degrees()));
        for (_, s) in sections {
            let _ = write!(out, ",{}", fmt_num(s.samples[i].1));
        }
        out.push('\n');
    }
    Ok(out)
}
