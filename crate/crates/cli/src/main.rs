use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use fluidbeam::pipeline::{self, OUTPUT_ROOT_ENV};
use fluidbeam::{ApertureBlock, BeamError, ResidualUpdate, RunConfig, Scheme, StorageKind, VMode};

/// Beam synthesis on fluid-antenna port grids.
#[derive(Parser, Debug)]
#[command(name = "fluidbeam", author, version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run one synthesis scheme and write its result bundle.
    Run {
        #[command(flatten)]
        common: Common,
        /// Scheme to run (defaults to the config's `output.scheme`).
        #[arg(long, value_parser = parse_scheme)]
        scheme: Option<Scheme>,
    },
    /// Run all three schemes on one desired beam and write a comparison bundle.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Run phase retrieval only and write the refined phase map.
    PhaseRetrieve {
        #[command(flatten)]
        common: Common,
    },
    /// Write size and sanity statistics of the steering dictionary.
    ExportDictStats {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args, Debug)]
struct Common {
    /// TOML run configuration; missing keys take the built-in defaults.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Output root directory.
    #[arg(long, short, env = OUTPUT_ROOT_ENV)]
    out: Option<PathBuf>,
    /// Replace an existing result directory.
    #[arg(long)]
    force: bool,
    /// Direction-cosine model of the steering vectors.
    #[arg(long, value_enum)]
    vmode: Option<VModeArg>,
    /// Steering dictionary storage.
    #[arg(long, value_enum)]
    storage: Option<StorageArg>,
    /// Which DFT block carries the aperture constraint.
    #[arg(long, value_enum)]
    block: Option<BlockArg>,
    /// Residual refresh after each port selection.
    #[arg(long, value_enum)]
    residual_update: Option<UpdateArg>,
    /// Phase-retrieval iteration count.
    #[arg(long)]
    iterations: Option<usize>,
    /// Number of fluid ports to activate.
    #[arg(long)]
    active_ports: Option<usize>,
    /// Guard band (grid cells) between main lobe and side-lobe statistic.
    #[arg(long)]
    guard_cells: Option<usize>,
    /// Disable the completion check that keeps the spacing constraint satisfiable.
    #[arg(long)]
    no_feasibility_guard: bool,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum VModeArg {
    Coupled,
    Decoupled,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum StorageArg {
    Dense,
    Factored,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum BlockArg {
    Centered,
    Corner,
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum UpdateArg {
    Balanced,
    Conventional,
}

fn parse_scheme(s: &str) -> Result<Scheme, String> {
    s.parse::<Scheme>().map_err(|e| e.to_string())
}

impl Common {
    fn load(&self) -> fluidbeam::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(out) = &self.out {
            cfg.output.dir = Some(out.clone());
        }
        if let Some(v) = self.vmode {
            cfg.algorithm.vmode = match v {
                VModeArg::Coupled => VMode::Coupled,
                VModeArg::Decoupled => VMode::Decoupled,
            };
        }
        if let Some(s) = self.storage {
            cfg.algorithm.storage = match s {
                StorageArg::Dense => StorageKind::Dense,
                StorageArg::Factored => StorageKind::Factored,
            };
        }
        if let Some(b) = self.block {
            cfg.algorithm.aperture_block = match b {
                BlockArg::Centered => ApertureBlock::Centered,
                BlockArg::Corner => ApertureBlock::Corner,
            };
        }
        if let Some(u) = self.residual_update {
            cfg.algorithm.residual_update = match u {
                UpdateArg::Balanced => ResidualUpdate::Balanced,
                UpdateArg::Conventional => ResidualUpdate::Conventional,
            };
        }
        if let Some(n) = self.iterations {
            cfg.algorithm.retrieval_iterations = n;
        }
        if let Some(s) = self.active_ports {
            cfg.algorithm.active_ports = s;
        }
        if let Some(g) = self.guard_cells {
            cfg.evaluation.guard_cells = g;
        }
        if self.no_feasibility_guard {
            cfg.algorithm.feasibility_guard = false;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn exit_code(err: &BeamError) -> u8 {
    match err.root() {
        BeamError::Parameter(_) | BeamError::Config { .. } | BeamError::Capacity { .. } => 2,
        BeamError::InfeasibleSpacing { .. } => 3,
        BeamError::DegenerateBeam(_) | BeamError::DegenerateRegion => 4,
        _ => 1,
    }
}

fn commit(bundle: &pipeline::Bundle, dest: &Path, force: bool) -> fluidbeam::Result<()> {
    bundle.commit(dest, force)?;
    println!("wrote {}", dest.display());
    Ok(())
}

fn execute(command: Command) -> fluidbeam::Result<()> {
    match command {
        Command::Run { common, scheme } => {
            let mut cfg = common.load()?;
            if let Some(s) = scheme {
                cfg.output.scheme = s;
            }
            let outcome = pipeline::run_scheme(&cfg, cfg.output.scheme)?;
            let m = &outcome.metrics;
            println!(
                "{}: {} ports, reconstruction_error={:.6} mainlobe_mean_gain={:.6} peak_sidelobe={:.6} peak_gain_db={:.3}",
                cfg.output.scheme,
                outcome.support.len(),
                m.reconstruction_error,
                m.mainlobe_mean_gain,
                m.peak_sidelobe,
                m.peak_gain_db
            );
            let bundle = pipeline::run_bundle(&cfg, &outcome)?;
            let dest = pipeline::output_root(&cfg).join(cfg.output.scheme.as_str());
            commit(&bundle, &dest, common.force)
        }
        Command::Compare { common } => {
            let cfg = common.load()?;
            let cmp = pipeline::compare(&cfg)?;
            print!("{}", cmp.table.to_text());
            let bundle = pipeline::comparison_bundle(&cfg, &cmp)?;
            let dest = pipeline::output_root(&cfg).join("compare");
            commit(&bundle, &dest, common.force)
        }
        Command::PhaseRetrieve { common } => {
            let cfg = common.load()?;
            let (result, bundle) = pipeline::retrieval_bundle(&cfg)?;
            if let (Some(first), Some(last)) = (result.residuals.first(), result.residuals.last()) {
                println!(
                    "{} iterations, aperture residual {first:.6e} -> {last:.6e}",
                    result.iterations
                );
            }
            let dest = pipeline::output_root(&cfg).join("phase-retrieve");
            commit(&bundle, &dest, common.force)
        }
        Command::ExportDictStats { common } => {
            let cfg = common.load()?;
            let stats = pipeline::dictionary_stats(&cfg)?;
            let text = stats.to_toml()?;
            print!("{text}");
            let mut bundle = pipeline::Bundle::default();
            bundle.add("dict_stats.toml", text);
            let dest = pipeline::output_root(&cfg).join("dict-stats");
            commit(&bundle, &dest, common.force)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match execute(cli.command).context("fluidbeam failed") {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let code = err.downcast_ref::<BeamError>().map_or(1, exit_code);
            ExitCode::from(code)
        }
    }
}
