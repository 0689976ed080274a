use std::f64::consts::{FRAC_PI_2, PI};
use std::fs;

use fluidbeam::pipeline::{self, Bundle};
use fluidbeam::selection::select_ports;
use fluidbeam::{
    AngularGrid, PortGrid, ResidualUpdate, RunConfig, Scheme, SelectOptions, SteeringDictionary,
    StorageKind, VMode,
};
use num_complex::Complex64;
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Greedy selection with spacing exclusion, coupled directions and balanced residual,
/// written out directly over an explicit dictionary.
fn spacing_oracle(
    side: usize,
    spacing: f64,
    min_spacing: f64,
    grid_len: usize,
    g: &[Complex64],
    sparsity: usize,
    alpha: f64,
) -> Option<Vec<usize>> {
    let pos: Vec<(f64, f64)> = (0..side * side)
        .map(|l| {
            let c = (side as f64 - 1.0) / 2.0;
            (
                ((l % side) as f64 - c) * spacing,
                ((l / side) as f64 - c) * spacing,
            )
        })
        .collect();
    let angle = |z: usize| {
        let step = PI / (grid_len as f64 - 1.0);
        (
            -FRAC_PI_2 + (z % grid_len) as f64 * step,
            -FRAC_PI_2 + (z / grid_len) as f64 * step,
        )
    };
    let z_len = grid_len * grid_len;
    let d: Vec<Vec<Complex64>> = pos
        .iter()
        .map(|&(x, y)| {
            (0..z_len)
                .map(|z| {
                    let (phi, theta) = angle(z);
                    let arg =
                        -2.0 * PI * (x * theta.sin() * phi.cos() + y * theta.sin() * phi.sin());
                    Complex64::from_polar(1.0, arg)
                })
                .collect()
        })
        .collect();
    let mut chosen: Vec<usize> = Vec::new();
    let mut e = g.to_vec();
    let mut y = vec![Complex64::new(0.0, 0.0); z_len];
    while chosen.len() < sparsity {
        let admissible = |l: usize| {
            chosen.iter().all(|&c| {
                let dx = pos[l].0 - pos[c].0;
                let dy = pos[l].1 - pos[c].1;
                l != c && (dx * dx + dy * dy).sqrt() >= min_spacing * (1.0 - 1e-9)
            })
        };
        let mut best: Option<(usize, f64)> = None;
        for l in (0..pos.len()).filter(|&l| admissible(l)) {
            let score = (0..z_len)
                .map(|z| d[l][z].conj() * e[z])
                .sum::<Complex64>()
                .norm();
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((l, score));
            }
        }
        let (l, _) = best?;
        chosen.push(l);
        let w: Complex64 = (0..z_len).map(|z| g[z] * d[l][z].conj()).sum();
        for z in 0..z_len {
            y[z] += w * d[l][z];
        }
        let norm = y.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt();
        e = (0..z_len).map(|z| g[z] - alpha * y[z] / norm).collect();
    }
    Some(chosen)
}

#[test]
fn spaced_coupled_selection_matches_oracle() {
    let mut rng = StdRng::seed_from_u64(31);
    let (side, grid_len) = (6, 10);
    let ports = PortGrid::new(side, side, 0.25, 1.0).unwrap();
    let grid = AngularGrid::new(grid_len, grid_len).unwrap();
    let mut compared = 0;
    for storage in [StorageKind::Dense, StorageKind::Factored] {
        let dict = SteeringDictionary::build(&ports, &grid, VMode::Coupled, storage).unwrap();
        for _ in 0..3 {
            let g: Vec<Complex64> = (0..grid.len())
                .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
                .collect();
            let opts = SelectOptions {
                sparsity: 6,
                feasibility_guard: false,
                ..Default::default()
            };
            let want = spacing_oracle(side, 0.25, 0.5, grid_len, &g, 6, opts.alpha);
            match select_ports(&dict, &g, &opts) {
                Ok(sel) => {
                    assert_eq!(Some(sel.support), want);
                    compared += 1;
                }
                Err(e) => assert!(want.is_none(), "{e}"),
            }
        }
    }
    assert!(compared > 0);
}

#[test]
fn conventional_update_never_increases_the_residual() {
    let mut rng = StdRng::seed_from_u64(12);
    let ports = PortGrid::new(6, 6, 0.25, 1.0).unwrap();
    let grid = AngularGrid::new(14, 14).unwrap();
    let dict =
        SteeringDictionary::build(&ports, &grid, VMode::Decoupled, StorageKind::Factored).unwrap();
    let g: Vec<Complex64> = (0..grid.len())
        .map(|_| Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)))
        .collect();
    let opts = SelectOptions {
        sparsity: 9,
        update: ResidualUpdate::Conventional,
        ..Default::default()
    };
    let sel = select_ports(&dict, &g, &opts).unwrap();
    let norms: Vec<f64> = sel.trace.iter().map(|t| t.residual_norm).collect();
    assert!(
        norms.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)),
        "{norms:?}"
    );
}

#[test]
fn config_file_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = RunConfig::default();
    cfg.algorithm.vmode = VMode::Coupled;
    cfg.algorithm.early_stop = Some(1e-6);
    cfg.beam.phi_deg = [-20.0, 10.0];
    cfg.output.scheme = Scheme::Fixed;
    let path = tmp.path().join("run.toml");
    fs::write(&path, cfg.to_toml()).unwrap();
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(RunConfig::from_toml_str(&back.to_toml()).unwrap(), cfg);
}

#[test]
fn commit_refuses_to_clobber_and_replaces_with_overwrite() {
    let tmp = tempfile::tempdir().unwrap();
    let dest = tmp.path().join("bundle");
    let mut first = Bundle::default();
    first.add("a.csv", "1\n".to_string());
    first.add("sub/b.csv", "2\n".to_string());
    first.commit(&dest, false).unwrap();
    assert_eq!(fs::read_to_string(dest.join("sub/b.csv")).unwrap(), "2\n");

    let mut second = Bundle::default();
    second.add("c.csv", "3\n".to_string());
    assert!(second.commit(&dest, false).is_err());
    assert!(
        dest.join("a.csv").is_file(),
        "refused commit must leave the old bundle"
    );

    second.commit(&dest, true).unwrap();
    assert!(!dest.join("a.csv").exists());
    assert_eq!(fs::read_to_string(dest.join("c.csv")).unwrap(), "3\n");
    let leftovers: Vec<_> = fs::read_dir(tmp.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    assert_eq!(leftovers, vec![std::ffi::OsString::from("bundle")]);
}

#[test]
fn identical_schemes_give_identical_rows() {
    let mut cfg = RunConfig::default();
    cfg.grid.azimuth_samples = 30;
    cfg.grid.elevation_samples = 30;
    cfg.grid.fixed_size = 4;
    cfg.grid.port_rows = 8;
    cfg.grid.port_cols = 8;
    cfg.algorithm.active_ports = 16;
    cfg.algorithm.retrieval_iterations = 5;
    let cmp = pipeline::compare_schemes(&cfg, &[Scheme::Fixed, Scheme::Fixed]).unwrap();
    let csv = cmp.table.to_csv();
    let rows: Vec<&str> = csv.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0], rows[1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn full_range_region_runs_every_scheme(slope in 0.0f64..0.5) {
        let mut cfg = RunConfig::default();
        cfg.grid.azimuth_samples = 24;
        cfg.grid.elevation_samples = 24;
        cfg.grid.fixed_size = 3;
        cfg.grid.port_rows = 6;
        cfg.grid.port_cols = 6;
        cfg.algorithm.active_ports = 9;
        cfg.algorithm.retrieval_iterations = 4;
        cfg.beam.phi_deg = [-90.0, 90.0];
        cfg.beam.theta_deg = [-90.0, 90.0];
        cfg.beam.phase_slope = slope;
        let cmp = pipeline::compare(&cfg).unwrap();
        prop_assert_eq!(cmp.outcomes.len(), 3);
        for o in &cmp.outcomes {
            for v in o.metrics.values() {
                prop_assert!(v.is_finite());
            }
            prop_assert!((0.0..=1.0).contains(&o.metrics.mainlobe_mean_gain));
        }
    }
}
