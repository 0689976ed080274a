//! End-to-end synthesis schemes and result bundles.
//!
//! A run directory holds `heatmap.csv`, `heatmap_db.csv`, `xsec_theta.csv`,
//! `xsec_phi.csv`, `metrics.csv`, `ports.csv`, `phase_map.csv` and
//! `meta.toml`; selection and retrieval runs add `trace.csv` and
//! `residuals.csv`. Bundles are assembled in a scratch directory next to the
//! destination and renamed into place only when complete.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::beam::{desired_beam, BeamPattern, TargetRegion};
use crate::config::{RunConfig, Scheme};
use crate::error::{BeamError, Result};
use crate::evaluation::{
    compare_configs, cross_section, cross_section_csv, evaluate, fmt_num, matrix_csv,
    normalize_beam, overlay_csv, to_db, BeamMetrics, CrossSection, MetricsTable, SchemeBeams,
    SectionAxis,
};
use crate::fourier::{phase_retrieve, weights_from_beam, PhaseRetrieval};
use crate::geometry::PortGrid;
use crate::selection::{select_ports, TraceStep};
use crate::steering::{dense_bytes, factored_bytes, SteeringDictionary};

/// Environment variable naming the default output root.
pub const OUTPUT_ROOT_ENV: &str = "FLUIDBEAM_OUTPUT_ROOT";

/// Everything one scheme produced.
#[derive(Debug, Clone)]
pub struct SchemeOutcome {
    pub scheme: Scheme,
    /// Beam the scheme aimed for (desired, or phase-refined desired).
    pub target: BeamPattern,
    /// Synthesized beam after least-squares gain calibration against `target`.
    pub beam: BeamPattern,
    /// Complex gain applied to the raw synthesized beam.
    pub gain: Complex64,
    pub ports: PortGrid,
    pub support: Vec<usize>,
    pub weights: Vec<Complex64>,
    pub trace: Option<Vec<TraceStep>>,
    pub retrieval_residuals: Option<Vec<f64>>,
    pub metrics: BeamMetrics,
    pub section_theta: CrossSection,
    pub section_phi: CrossSection,
}

/// Desired beam plus lazily shared phase-retrieval results, keyed by aperture size.
pub struct Prepared {
    pub cfg: RunConfig,
    pub region: TargetRegion,
    pub desired: BeamPattern,
    retrievals: BTreeMap<usize, PhaseRetrieval>,
}

impl Prepared {
    pub fn new(cfg: &RunConfig, schemes: &[Scheme]) -> Result<Self> {
        cfg.validate()?;
        let grid = cfg.angular_grid()?;
        let region = cfg.region()?;
        let desired = desired_beam(&grid, &region, cfg.beam.phase_slope, cfg.beam.phase_ramp)?;
        let sizes: Vec<usize> = schemes
            .iter()
            .filter(|s| s.uses_retrieval())
            .map(|&s| retrieval_size(cfg, s))
            .collect::<std::collections::BTreeSet<_>>()
            .into_iter()
            .collect();
        let opts = cfg.retrieval_options();
        let retrievals = sizes
            .par_iter()
            .map(|&s| Ok((s, phase_retrieve(&desired, s, &opts)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Ok(Self {
            cfg: cfg.clone(),
            region,
            desired,
            retrievals,
        })
    }

    fn target_for(&self, scheme: Scheme) -> (&BeamPattern, Option<&PhaseRetrieval>) {
        if scheme.uses_retrieval() {
            let r = &self.retrievals[&retrieval_size(&self.cfg, scheme)];
            (&r.pattern, Some(r))
        } else {
            (&self.desired, None)
        }
    }
}

/// Aperture size handed to phase retrieval: the fixed array for the fixed
/// scheme, the active-port count for the fluid scheme.
fn retrieval_size(cfg: &RunConfig, scheme: Scheme) -> usize {
    match scheme {
        Scheme::FluidPhaseopt => cfg.algorithm.active_ports,
        _ => cfg.grid.fixed_size * cfg.grid.fixed_size,
    }
}

pub fn run_scheme(cfg: &RunConfig, scheme: Scheme) -> Result<SchemeOutcome> {
    let prepared = Prepared::new(cfg, &[scheme]).map_err(|e| with_scheme(scheme, e))?;
    run_prepared(&prepared, scheme)
}

pub fn run_prepared(prepared: &Prepared, scheme: Scheme) -> Result<SchemeOutcome> {
    run_inner(prepared, scheme).map_err(|e| with_scheme(scheme, e))
}

fn with_scheme(scheme: Scheme, e: BeamError) -> BeamError {
    match e {
        e @ BeamError::Scheme { .. } => e,
        e => BeamError::Scheme {
            scheme: scheme.to_string(),
            source: Box::new(e),
        },
    }
}

fn run_inner(prepared: &Prepared, scheme: Scheme) -> Result<SchemeOutcome> {
    let cfg = &prepared.cfg;
    let grid = prepared.desired.grid();
    let (target, retrieval) = prepared.target_for(scheme);
    let ports = match scheme {
        Scheme::FluidPhaseopt => cfg.fluid_grid()?,
        _ => cfg.fixed_grid()?,
    };
    let dict = SteeringDictionary::build_with_cap(
        &ports,
        grid,
        cfg.algorithm.vmode,
        cfg.algorithm.storage,
        cfg.dense_cap_bytes(),
    )?;

    let (support, weights, trace) = match scheme {
        Scheme::Fixed | Scheme::FixedPhaseopt => {
            let support: Vec<usize> = (0..ports.len()).collect();
            let weights =
                weights_from_beam(target, ports.positions(), ports.wavelength(), dict.vmode())?;
            (support, weights, None)
        }
        Scheme::FluidPhaseopt => {
            let selection = select_ports(&dict, &target.vectorize(), &cfg.select_options())?;
            let positions: Vec<_> = selection
                .support
                .iter()
                .map(|&l| ports.positions()[l])
                .collect();
            let weights = match cfg.algorithm.residual_update {
                crate::selection::ResidualUpdate::Balanced => {
                    weights_from_beam(target, &positions, ports.wavelength(), dict.vmode())?
                }
                crate::selection::ResidualUpdate::Conventional => selection.weights.clone(),
            };
            (selection.support, weights, Some(selection.trace))
        }
    };

    let raw = dict.synthesize(&support, &weights)?;
    let (beam, gain) = calibrate(target, &raw)?;
    let metrics = evaluate(target, &beam, &prepared.region, cfg.evaluation.guard_cells)?;
    let section_theta = cross_section(
        &beam,
        SectionAxis::FixedTheta,
        cfg.evaluation.section_theta_deg.to_radians(),
    )?;
    let section_phi = cross_section(
        &beam,
        SectionAxis::FixedPhi,
        cfg.evaluation.section_phi_deg.to_radians(),
    )?;
    Ok(SchemeOutcome {
        scheme,
        target: target.clone(),
        beam,
        gain,
        ports,
        support,
        weights,
        trace,
        retrieval_residuals: retrieval.map(|r| r.residuals.clone()),
        metrics,
        section_theta,
        section_phi,
    })
}

/// Scales `raw` by the complex gain `c = <raw, target> / <raw, raw>` minimizing `||target - c raw||`.
pub fn calibrate(target: &BeamPattern, raw: &BeamPattern) -> Result<(BeamPattern, Complex64)> {
    let (num, den) = raw
        .values()
        .iter()
        .zip(target.values().iter())
        .fold((Complex64::new(0.0, 0.0), 0.0), |(n, d), (y, g)| {
            (n + y.conj() * g, d + y.norm_sqr())
        });
    if den == 0.0 || !den.is_finite() {
        return Err(BeamError::DegenerateBeam(
            "synthesized beam is identically zero".into(),
        ));
    }
    let gain = num / den;
    Ok((raw.map(|v| v * gain), gain))
}

pub struct Comparison {
    pub outcomes: Vec<SchemeOutcome>,
    pub table: MetricsTable,
}

pub fn compare(cfg: &RunConfig) -> Result<Comparison> {
    compare_schemes(cfg, &Scheme::ALL)
}

pub fn compare_schemes(cfg: &RunConfig, schemes: &[Scheme]) -> Result<Comparison> {
    let prepared = Prepared::new(cfg, schemes)?;
    let outcomes = schemes
        .par_iter()
        .map(|&s| run_prepared(&prepared, s))
        .collect::<Result<Vec<_>>>()?;
    let labels: Vec<&str> = schemes.iter().map(|s| s.as_str()).collect();
    let rows: Vec<SchemeBeams<'_>> = outcomes
        .iter()
        .zip(&labels)
        .map(|(o, label)| SchemeBeams {
            label,
            target: &o.target,
            beam: &o.beam,
        })
        .collect();
    let table = compare_configs(&rows, &prepared.region, cfg.evaluation.guard_cells)?;
    Ok(Comparison { outcomes, table })
}

/// Resolves the output directory: explicit path, then config, then the
/// environment root, then `./results`.
pub fn output_root(cfg: &RunConfig) -> PathBuf {
    cfg.output
        .dir
        .clone()
        .or_else(|| std::env::var_os(OUTPUT_ROOT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

/// Files of a bundle, written under a scratch name and moved into place at the end.
#[derive(Default)]
pub struct Bundle {
    files: Vec<(PathBuf, String)>,
}

impl Bundle {
    pub fn add(&mut self, rel: impl Into<PathBuf>, contents: String) {
        self.files.push((rel.into(), contents));
    }

    pub fn files(&self) -> impl Iterator<Item = (&Path, &str)> {
        self.files.iter().map(|(p, c)| (p.as_path(), c.as_str()))
    }

    /// Writes the bundle to `dest`. An existing `dest` is replaced only when `overwrite` is set.
    pub fn commit(&self, dest: &Path, overwrite: bool) -> Result<()> {
        if dest.exists() && !overwrite {
            return Err(BeamError::param(format!(
                "output directory {} already exists (pass --force to replace it)",
                dest.display()
            )));
        }
        let parent = dest
            .parent()
            .filter(|p| !p.as_os_str().is_empty())
            .unwrap_or(Path::new("."));
        fs::create_dir_all(parent)
            .map_err(|e| BeamError::io(format!("creating {}", parent.display()), e))?;
        let name = dest
            .file_name()
            .ok_or_else(|| BeamError::param(format!("invalid output path {}", dest.display())))?;
        let scratch = parent.join(format!(
            ".{}.partial-{}",
            name.to_string_lossy(),
            std::process::id()
        ));
        let result = self.write_all(&scratch).and_then(|()| {
            if dest.exists() {
                fs::remove_dir_all(dest)
                    .map_err(|e| BeamError::io(format!("removing {}", dest.display()), e))?;
            }
            fs::rename(&scratch, dest)
                .map_err(|e| BeamError::io(format!("moving bundle to {}", dest.display()), e))
        });
        if result.is_err() {
            let _ = fs::remove_dir_all(&scratch);
        }
        result
    }

    fn write_all(&self, root: &Path) -> Result<()> {
        if root.exists() {
            fs::remove_dir_all(root)
                .map_err(|e| BeamError::io(format!("clearing {}", root.display()), e))?;
        }
        for (rel, contents) in &self.files {
            let path = root.join(rel);
            if let Some(dir) = path.parent() {
                fs::create_dir_all(dir)
                    .map_err(|e| BeamError::io(format!("creating {}", dir.display()), e))?;
            }
            fs::write(&path, contents)
                .map_err(|e| BeamError::io(format!("writing {}", path.display()), e))?;
        }
        Ok(())
    }
}

#[derive(Serialize)]
struct ApertureMeta {
    fluid_edge_wavelengths: f64,
    fixed_edge_wavelengths: f64,
}

#[derive(Serialize)]
struct GridMeta {
    phi_range_deg: [f64; 2],
    theta_range_deg: [f64; 2],
    azimuth_samples: usize,
    elevation_samples: usize,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    scheme: &'a str,
    vmode: &'a str,
    active_ports: usize,
    retrieval_iterations: usize,
    calibration_gain: [f64; 2],
    angular_grid: GridMeta,
    aperture: ApertureMeta,
    config: &'a RunConfig,
}

fn aperture_meta(cfg: &RunConfig) -> ApertureMeta {
    let g = &cfg.grid;
    ApertureMeta {
        fluid_edge_wavelengths: (g.port_rows.max(g.port_cols) as f64 - 1.0) * g.port_spacing,
        fixed_edge_wavelengths: (g.fixed_size as f64 - 1.0) * g.fixed_spacing,
    }
}

fn grid_meta(beam: &BeamPattern) -> GridMeta {
    let g = beam.grid();
    GridMeta {
        phi_range_deg: [
            g.phi()[0].to_degrees(),
            g.phi()[g.azimuth_len() - 1].to_degrees(),
        ],
        theta_range_deg: [
            g.theta()[0].to_degrees(),
            g.theta()[g.elevation_len() - 1].to_degrees(),
        ],
        azimuth_samples: g.azimuth_len(),
        elevation_samples: g.elevation_len(),
    }
}

fn ports_csv(outcome: &SchemeOutcome) -> String {
    let mut out = String::from("order,index,m,n,x,y,weight_re,weight_im\n");
    for (order, (&l, w)) in outcome.support.iter().zip(&outcome.weights).enumerate() {
        let (m, n) = (l % outcome.ports.rows(), l / outcome.ports.rows());
        let pos = outcome.ports.positions()[l];
        let _ = writeln!(
            out,
            "{order},{l},{m},{n},{},{},{},{}",
            fmt_num(pos.x),
            fmt_num(pos.y),
            fmt_num(w.re),
            fmt_num(w.im)
        );
    }
    out
}

fn trace_csv(trace: &[TraceStep]) -> String {
    let mut out = String::from("step,port,greedy_port,correlation,max_correlation,residual_norm\n");
    for t in trace {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            t.step,
            t.port,
            t.greedy_port,
            fmt_num(t.correlation),
            fmt_num(t.max_correlation),
            fmt_num(t.residual_norm)
        );
    }
    out
}

fn residuals_csv(residuals: &[f64]) -> String {
    let mut out = String::from("iteration,residual\n");
    for (i, r) in residuals.iter().enumerate() {
        let _ = writeln!(out, "{i},{}", fmt_num(*r));
    }
    out
}

fn metrics_row_csv(label: &str, m: &BeamMetrics) -> String {
    let mut out = format!("scheme,{}\n{label}", BeamMetrics::FIELDS.join(","));
    for v in m.values() {
        let _ = write!(out, ",{}", fmt_num(v));
    }
    out.push('\n');
    out
}

/// Adds one scheme's files under `prefix`.
pub fn scheme_bundle(
    cfg: &RunConfig,
    outcome: &SchemeOutcome,
    bundle: &mut Bundle,
    prefix: &Path,
) -> Result<()> {
    let normalized = normalize_beam(&outcome.beam)?;
    bundle.add(prefix.join("heatmap.csv"), matrix_csv(&normalized));
    bundle.add(
        prefix.join("heatmap_db.csv"),
        matrix_csv(&to_db(&normalized, cfg.evaluation.db_floor)),
    );
    bundle.add(
        prefix.join("xsec_theta.csv"),
        cross_section_csv(&outcome.section_theta),
    );
    bundle.add(
        prefix.join("xsec_phi.csv"),
        cross_section_csv(&outcome.section_phi),
    );
    bundle.add(
        prefix.join("metrics.csv"),
        metrics_row_csv(outcome.scheme.as_str(), &outcome.metrics),
    );
    bundle.add(prefix.join("ports.csv"), ports_csv(outcome));
    bundle.add(
        prefix.join("phase_map.csv"),
        matrix_csv(&outcome.target.phase()),
    );
    if let Some(trace) = &outcome.trace {
        bundle.add(prefix.join("trace.csv"), trace_csv(trace));
    }
    if let Some(res) = &outcome.retrieval_residuals {
        bundle.add(prefix.join("residuals.csv"), residuals_csv(res));
    }
    let meta = RunMeta {
        scheme: outcome.scheme.as_str(),
        vmode: cfg.algorithm.vmode.as_str(),
        active_ports: outcome.support.len(),
        retrieval_iterations: outcome
            .retrieval_residuals
            .as_ref()
            .map_or(0, |r| r.len().saturating_sub(1)),
        calibration_gain: [outcome.gain.re, outcome.gain.im],
        angular_grid: grid_meta(&outcome.beam),
        aperture: aperture_meta(cfg),
        config: &recorded_config(cfg),
    };
    bundle.add(prefix.join("meta.toml"), to_toml(&meta)?);
    Ok(())
}

pub fn comparison_bundle(cfg: &RunConfig, cmp: &Comparison) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    for o in &cmp.outcomes {
        scheme_bundle(cfg, o, &mut bundle, Path::new(o.scheme.as_str()))?;
    }
    bundle.add("metrics.csv", cmp.table.to_csv());
    bundle.add("metrics.txt", cmp.table.to_text());
    bundle.add("deltas.csv", cmp.table.deltas_csv());
    let thetas: Vec<(&str, &CrossSection)> = cmp
        .outcomes
        .iter()
        .map(|o| (o.scheme.as_str(), &o.section_theta))
        .collect();
    let phis: Vec<(&str, &CrossSection)> = cmp
        .outcomes
        .iter()
        .map(|o| (o.scheme.as_str(), &o.section_phi))
        .collect();
    bundle.add("xsec_theta.csv", overlay_csv(&thetas)?);
    bundle.add("xsec_phi.csv", overlay_csv(&phis)?);

    #[derive(Serialize)]
    struct CompareMeta<'a> {
        schemes: Vec<&'a str>,
        aperture: ApertureMeta,
        config: &'a RunConfig,
    }
    let meta = CompareMeta {
        schemes: cmp.outcomes.iter().map(|o| o.scheme.as_str()).collect(),
        aperture: aperture_meta(cfg),
        config: &recorded_config(cfg),
    };
    bundle.add("meta.toml", to_toml(&meta)?);
    Ok(bundle)
}

pub fn run_bundle(cfg: &RunConfig, outcome: &SchemeOutcome) -> Result<Bundle> {
    let mut bundle = Bundle::default();
    scheme_bundle(cfg, outcome, &mut bundle, Path::new(""))?;
    Ok(bundle)
}

/// Phase retrieval on the configured desired beam, without synthesis.
pub fn retrieval_bundle(cfg: &RunConfig) -> Result<(PhaseRetrieval, Bundle)> {
    cfg.validate()?;
    let grid = cfg.angular_grid()?;
    let region = cfg.region()?;
    let desired = desired_beam(&grid, &region, cfg.beam.phase_slope, cfg.beam.phase_ramp)?;
    let result = phase_retrieve(
        &desired,
        cfg.algorithm.active_ports,
        &cfg.retrieval_options(),
    )?;
    let mut bundle = Bundle::default();
    bundle.add("phase_map_initial.csv", matrix_csv(&desired.phase()));
    bundle.add("phase_map.csv", matrix_csv(&result.pattern.phase()));
    bundle.add("residuals.csv", residuals_csv(&result.residuals));

    #[derive(Serialize)]
    struct RetrievalMeta<'a> {
        active_ports: usize,
        iterations: usize,
        final_residual: f64,
        angular_grid: GridMeta,
        config: &'a RunConfig,
    }
    let meta = RetrievalMeta {
        active_ports: cfg.algorithm.active_ports,
        iterations: result.iterations,
        final_residual: result.residuals.last().copied().unwrap_or(f64::NAN),
        angular_grid: grid_meta(&desired),
        config: &recorded_config(cfg),
    };
    bundle.add("meta.toml", to_toml(&meta)?);
    Ok((result, bundle))
}

#[derive(Debug, Clone, Serialize)]
pub struct DictionaryStats {
    pub rows: usize,
    pub cols: usize,
    pub port_rows: usize,
    pub port_cols: usize,
    pub vmode: String,
    pub dense_entries: u64,
    pub factored_entries: u64,
    pub dense_bytes: u64,
    pub factored_bytes: u64,
    pub dense_fits_cap: bool,
    pub column_norm: f64,
    pub max_unit_modulus_error: f64,
    pub fluid_aperture_wavelengths: f64,
    pub fixed_aperture_wavelengths: f64,
}

impl DictionaryStats {
    pub fn to_toml(&self) -> Result<String> {
        to_toml(self)
    }
}

/// Size and sanity statistics of the configured fluid-grid dictionary.
pub fn dictionary_stats(cfg: &RunConfig) -> Result<DictionaryStats> {
    cfg.validate()?;
    let grid = cfg.angular_grid()?;
    let ports = cfg.fluid_grid()?;
    let dict = SteeringDictionary::build(
        &ports,
        &grid,
        cfg.algorithm.vmode,
        crate::steering::StorageKind::Factored,
    )?;
    let max_unit_modulus_error = (0..dict.cols())
        .into_par_iter()
        .map(|l| {
            (0..dict.rows())
                .map(|z| (dict.entry(z, l).norm() - 1.0).abs())
                .fold(0.0_f64, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let (z_len, l_len) = (dict.rows(), dict.cols());
    let aperture = aperture_meta(cfg);
    Ok(DictionaryStats {
        rows: z_len,
        cols: l_len,
        port_rows: ports.rows(),
        port_cols: ports.cols(),
        vmode: cfg.algorithm.vmode.as_str().to_string(),
        dense_entries: (z_len * l_len) as u64,
        factored_entries: dict.stored_entries() as u64,
        dense_bytes: dense_bytes(z_len, l_len),
        factored_bytes: factored_bytes(z_len, ports.rows(), ports.cols()),
        dense_fits_cap: dense_bytes(z_len, l_len) <= cfg.dense_cap_bytes(),
        column_norm: dict.column_norm(),
        max_unit_modulus_error,
        fluid_aperture_wavelengths: aperture.fluid_edge_wavelengths,
        fixed_aperture_wavelengths: aperture.fixed_edge_wavelengths,
    })
}

/// Config as stored in metadata; the destination is left out so bundles do
/// not depend on where they were written.
fn recorded_config(cfg: &RunConfig) -> RunConfig {
    let mut cfg = cfg.clone();
    cfg.output.dir = None;
    cfg
}

pub(crate) fn to_toml<T: Serialize>(value: &T) -> Result<String> {
    toml::to_string(value).map_err(|e| BeamError::param(format!("serializing metadata: {e}")))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_config() -> RunConfig {
        let mut cfg = RunConfig::default();
        cfg.grid.azimuth_samples = 45;
        cfg.grid.elevation_samples = 45;
        cfg.grid.port_rows = 12;
        cfg.grid.port_cols = 12;
        cfg.grid.fixed_size = 6;
        cfg.algorithm.active_ports = 36;
        cfg.algorithm.retrieval_iterations = 10;
        cfg
    }

    #[test]
    fn calibration_minimizes_error() {
        let grid = crate::geometry::AngularGrid::new(5, 5).unwrap();
        let region = TargetRegion::new(-0.5, 0.5, -0.5, 0.5).unwrap();
        let g = desired_beam(&grid, &region, 0.2, crate::beam::PhaseRamp::Index).unwrap();
        let raw = g.map(|v| v * Complex64::new(3.0, -2.0));
        let (cal, gain) = calibrate(&g, &raw).unwrap();
        assert!((gain * Complex64::new(3.0, -2.0) - 1.0).norm() < 1e-12);
        assert!(crate::evaluation::reconstruction_error(&g, &cal).unwrap() < 1e-20);
        assert!(calibrate(&g, &BeamPattern::zeros(&grid)).is_err());
    }

    #[test]
    fn every_scheme_runs_on_a_small_setup() {
        let cfg = small_config();
        let cmp = compare(&cfg).unwrap();
        assert_eq!(cmp.table.rows.len(), 3);
        let fluid = &cmp.outcomes[2];
        assert_eq!(fluid.support.len(), 36);
        assert!(fluid.ports.pairwise_min_distance(&fluid.support).unwrap() >= 0.5);
        assert_eq!(cmp.outcomes[0].support.len(), 36);
        let bundle = comparison_bundle(&cfg, &cmp).unwrap();
        let names: Vec<String> = bundle
            .files()
            .map(|(p, _)| p.display().to_string())
            .collect();
        for must in [
            "metrics.csv",
            "xsec_theta.csv",
            "fluid-phaseopt/trace.csv",
            "fixed/heatmap.csv",
        ] {
            assert!(names.iter().any(|n| n == must), "missing {must}");
        }
    }

    #[test]
    fn single_port_run_gives_flat_beam() {
        let mut cfg = small_config();
        cfg.grid.port_rows = 1;
        cfg.grid.port_cols = 1;
        cfg.algorithm.active_ports = 1;
        let out = run_scheme(&cfg, Scheme::FluidPhaseopt).unwrap();
        assert_eq!(out.support, vec![0]);
        let n = normalize_beam(&out.beam).unwrap();
        assert!(n.iter().all(|&v| (v - 1.0).abs() < 1e-12));
    }

    #[test]
    fn errors_carry_scheme_context() {
        let mut cfg = small_config();
        cfg.grid.min_spacing = 5.0;
        let err = run_scheme(&cfg, Scheme::FluidPhaseopt).unwrap_err();
        assert!(matches!(err.root(), BeamError::InfeasibleSpacing { .. }));
        assert!(err.to_string().contains("fluid-phaseopt"));
    }

    #[test]
    fn commit_is_all_or_nothing() {
        let dir = tempfile::tempdir().unwrap();
        let dest = dir.path().join("run");
        let mut bundle = Bundle::default();
        bundle.add("a.csv", "1\n".into());
        bundle.add("sub/b.csv", "2\n".into());
        bundle.commit(&dest, false).unwrap();
        assert_eq!(fs::read_to_string(dest.join("sub/b.csv")).unwrap(), "2\n");
        assert!(bundle.commit(&dest, false).is_err());
        bundle.commit(&dest, true).unwrap();
        let leftovers: Vec<_> = fs::read_dir(dir.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        assert_eq!(leftovers.len(), 1);
    }

    #[test]
    fn dictionary_stats_small() {
        let stats = dictionary_stats(&small_config()).unwrap();
        assert_eq!(stats.rows, 45 * 45);
        assert_eq!(stats.cols, 144);
        assert_eq!(stats.factored_entries, 45 * 45 * 24);
        assert!(stats.max_unit_modulus_error < 1e-12);
    }
}
