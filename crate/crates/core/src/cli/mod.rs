//! Command-line front end: `train`, `infer`, `oracle`, `gradcheck`,
//! `presets`.
//!
//! Exit codes: 0 success, 2 usage error, 3 invalid input (config, mesh,
//! material, constraints, network), 4 missing or unreadable files and
//! checkpoints, 5 optimizer divergence, 6 gradient audit above tolerance.

pub mod config;
pub mod presets;

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::bc::{build_mask_offset, resolve_tractions};
use crate::energy::EnergyWorkspace;
use crate::error::{Error, Result};
use crate::mesh::{strain_at_qp, Mesh};
use crate::network::Network;
use crate::oracle::{analytic_shear_curve, gradient_audit, shear_plastic_slope, shear_yield_stress};
use crate::post::{curve_csv, metrics, read_reference_csv, shear_curve, write_vtk, FieldSet};
use crate::solver::{StepRecord, Solver};
use config::{Config, MeshSource};
use presets::{preset_text, PRESETS};

#[derive(Parser, Debug)]
#[command(name = "demplast", version, about = "Neural displacement solver for J2 elastoplasticity")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train through every load step, writing VTK, CSV and checkpoints.
    Train(RunArgs),
    /// Replay saved per-step checkpoints on a (possibly different) mesh.
    Infer(RunArgs),
    /// Single-point analytic shear response of a material as CSV.
    Oracle(OracleArgs),
    /// Compare the analytic loss gradient with central differences.
    Gradcheck(GradArgs),
    /// Built-in problem configs.
    Presets {
        #[command(subcommand)]
        action: PresetAction,
    },
}

#[derive(Subcommand, Debug)]
pub enum PresetAction {
    /// Print preset names.
    List,
    /// Print the config text of a preset.
    Show {
        name: String,
        #[arg(long)]
        full_scale: bool,
    },
}

#[derive(Args, Debug, Clone)]
pub struct Source {
    /// Config file or preset name.
    pub config: String,
    /// Full-size mesh and network (presets only).
    #[arg(long)]
    pub full_scale: bool,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub source: Source,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Network initialization seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads for energy assembly (default: DEMPLAST_THREADS or all cores).
    #[arg(long)]
    pub threads: Option<usize>,
    /// Convergence tolerance.
    #[arg(long)]
    pub tol: Option<f64>,
    /// Run only the first n load steps.
    #[arg(long)]
    pub steps: Option<usize>,
    /// Mesh file replacing the configured mesh.
    #[arg(long)]
    pub mesh: Option<PathBuf>,
    /// Checkpoint directory (train: written, default <out>/checkpoints; infer: read, required).
    #[arg(long)]
    pub checkpoint_dir: Option<PathBuf>,
    /// Reference field CSV; enables metrics against the last step.
    #[arg(long)]
    pub reference: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct OracleArgs {
    #[command(flatten)]
    pub source: Source,
    /// Material section name (default: the first).
    #[arg(long)]
    pub material: Option<String>,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct GradArgs {
    #[command(flatten)]
    pub source: Source,
    /// Number of randomly sampled parameters.
    #[arg(long, default_value_t = 50)]
    pub count: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Load step (1-based) whose factor is applied.
    #[arg(long, default_value_t = 1)]
    pub step: usize,
    /// Central-difference step.
    #[arg(long, default_value_t = 1e-4)]
    pub h: f64,
    /// Scale applied to the output layer before the audit.
    #[arg(long, default_value_t = 1.0)]
    pub output_scale: f64,
    /// Fail (exit 6) above this relative error.
    #[arg(long, default_value_t = 1e-5)]
    pub max_rel: f64,
    #[arg(long)]
    pub threads: Option<usize>,
}

pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Checkpoint(_) => 4,
        Error::Divergence(_) => 5,
        _ => 3,
    }
}

/// Resolves a config argument: an existing file, else a preset name.
pub fn load_config(src: &Source) -> Result<Config> {
    let path = Path::new(&src.config);
    if path.is_file() {
        if src.full_scale {
            return Err(Error::Config("--full-scale applies to presets only".into()));
        }
        return Config::read(path);
    }
    match preset_text(&src.config, src.full_scale) {
        Some(text) => Config::parse(&text, Path::new(&format!("<preset {}>", src.config))),
        None => Err(Error::io(
            format!("config '{}' is neither a file nor a preset (see 'presets list')", src.config),
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        )),
    }
}

fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let n = match threads {
        Some(n) => n,
        None => match std::env::var("DEMPLAST_THREADS") {
            Ok(v) => v.trim().parse().map_err(|_| Error::Config(format!("DEMPLAST_THREADS must be an integer, got '{v}'")))?,
            Err(_) => 0,
        },
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {n} worker threads: {e}")))
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

fn apply_overrides(cfg: &mut Config, a: &RunArgs) -> Result<()> {
    if let Some(s) = a.seed {
        cfg.network.seed = s;
    }
    if let Some(t) = a.tol {
        if !(t > 0.0) {
            return Err(Error::Config(format!("--tol must be positive, got {t}")));
        }
        cfg.optimizer.tol = t;
    }
    if let Some(n) = a.steps {
        if n == 0 || n > cfg.factors.len() {
            return Err(Error::Config(format!("--steps must be in 1..={}, got {n}", cfg.factors.len())));
        }
        cfg.factors.truncate(n);
    }
    if let Some(m) = &a.mesh {
        let split_tets = cfg.mesh.as_ref().map(|m| m.split_tets).unwrap_or(false);
        cfg.mesh = Some(config::MeshConfig { source: MeshSource::File(m.clone()), split_tets });
    }
    Ok(())
}

/// Writes the per-step outputs that must survive a later failure.
struct StepWriter<'a> {
    out: &'a Path,
    mesh: &'a Mesh<f64>,
    history: String,
    prefix: &'a str,
}

impl StepWriter<'_> {
    fn on_step(&mut self, r: &StepRecord<f64>, total: usize) -> Result<()> {
        write_vtk(self.mesh, r, self.out.join(format!("{}step_{}.vtk", self.prefix, r.step)))?;
        let _ = writeln!(self.history, "{},{:?},{:?},{},{},{:.3}", r.step, r.factor, r.loss, r.iterations, r.converged, r.seconds);
        write_file(&self.out.join(format!("{}history.csv", self.prefix)), &self.history)?;
        eprintln!(
            "step {}/{total}  factor {:>9.5}  loss {:>14.6e}  iterations {:>5}  {}  {:.2}s",
            r.step,
            r.factor,
            r.loss,
            r.iterations,
            if r.converged { "converged" } else { "iteration cap" },
            r.seconds
        );
        Ok(())
    }
}

fn finish_outputs(out: &Path, prefix: &str, ws: &EnergyWorkspace<f64>, records: &[StepRecord<f64>], reference: Option<&Path>) -> Result<()> {
    let measures: Vec<f64> = ws.ops.iter().map(|o| o.measure).collect();
    let strains: Vec<Vec<_>> = records.iter().map(|r| ws.ops.iter().map(|op| strain_at_qp(op, &r.displacement)).collect()).collect();
    write_file(&out.join(format!("{prefix}curve.csv")), &curve_csv(&shear_curve(records, &strains, &measures)))?;
    if let (Some(refp), Some(last)) = (reference, records.last()) {
        let m = metrics(&FieldSet::from_record(last), &read_reference_csv(refp)?)?;
        let text = m.to_text();
        write_file(&out.join(format!("{prefix}metrics.txt")), &text)?;
        eprint!("{text}");
    }
    Ok(())
}

fn prepare_out(out: &Path, cfg: &Config) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| Error::io(format!("creating {}", out.display()), e))?;
    write_file(&out.join("config.resolved"), &cfg.to_text())
}

fn cmd_train(a: &RunArgs) -> Result<()> {
    let mut cfg = load_config(&a.source)?;
    apply_overrides(&mut cfg, a)?;
    let problem = cfg.build_problem()?;
    prepare_out(&a.out, &cfg)?;
    let ckpt = a.checkpoint_dir.clone().unwrap_or_else(|| a.out.join("checkpoints"));
    let mut net = cfg.build_network(&problem.mesh)?;
    eprintln!(
        "training: {} nodes, {} elements, {} parameters, {} load steps",
        problem.mesh.node_count(),
        problem.mesh.element_count(),
        net.param_count(),
        problem.program.len()
    );
    let mesh = problem.mesh.clone();
    let total = problem.program.len();
    let mut solver = Solver::new(problem, cfg.optimizer, Some(ckpt))?;
    let mut w = StepWriter { out: &a.out, mesh: &mesh, history: "step,factor,loss,iterations,converged,seconds\n".into(), prefix: "" };
    let records = thread_pool(a.threads)?.install(|| solver.run(&mut net, |r| w.on_step(r, total)))?;
    finish_outputs(&a.out, "", &solver.workspace, &records, a.reference.as_deref())
}

fn cmd_infer(a: &RunArgs) -> Result<()> {
    let dir = a
        .checkpoint_dir
        .as_ref()
        .ok_or_else(|| Error::Config("infer requires --checkpoint-dir".into()))?;
    let mut cfg = load_config(&a.source)?;
    apply_overrides(&mut cfg, a)?;
    let problem = cfg.build_problem()?;
    prepare_out(&a.out, &cfg)?;
    let mesh = problem.mesh.clone();
    let total = problem.program.len();
    eprintln!("inference: {} nodes, {} elements, {} load steps", mesh.node_count(), mesh.element_count(), total);
    let mut solver = Solver::new(problem, cfg.optimizer, None)?;
    let mut w = StepWriter { out: &a.out, mesh: &mesh, history: "step,factor,loss,iterations,converged,seconds\n".into(), prefix: "infer_" };
    let widths = cfg.network.widths.clone();
    let records = thread_pool(a.threads)?.install(|| solver.infer(dir, Some(&widths), |r| w.on_step(r, total)))?;
    finish_outputs(&a.out, "infer_", &solver.workspace, &records, a.reference.as_deref())
}

fn cmd_oracle(a: &OracleArgs) -> Result<()> {
    let cfg = load_config(&a.source)?;
    let mc = match &a.material {
        Some(n) => cfg
            .materials
            .iter()
            .find(|m| &m.name == n)
            .ok_or_else(|| Error::Config(format!("no material named '{n}'")))?,
        None => &cfg.materials[0],
    };
    let m = &mc.material;
    let curve = analytic_shear_curve(m, &cfg.oracle.gamma_path());
    let mut csv = String::from("step,gamma,tau,peeq\n");
    for (k, p) in curve.iter().enumerate() {
        let _ = writeln!(csv, "{},{:?},{:?},{:?}", k + 1, p.gamma, p.tau, p.ebar_p);
    }
    eprintln!(
        "material '{}': shear yield stress {:.6} MPa at gamma {:.6}, plastic slope {:.6} MPa",
        mc.name,
        shear_yield_stress(m),
        shear_yield_stress(m) / m.elastic.mu,
        shear_plastic_slope(m)
    );
    match &a.out {
        Some(p) => write_file(p, &csv),
        None => std::io::stdout()
            .write_all(csv.as_bytes())
            .map_err(|e| Error::io("writing to stdout", e)),
    }
}

fn cmd_gradcheck(a: &GradArgs) -> Result<u8> {
    let cfg = load_config(&a.source)?;
    let problem = cfg.build_problem()?;
    let factor = *problem
        .program
        .factors
        .get(a.step.wrapping_sub(1))
        .ok_or_else(|| Error::Config(format!("--step must be in 1..={}, got {}", problem.program.len(), a.step)))?;
    let mut ws = EnergyWorkspace::new(&problem.mesh, problem.materials.clone())?;
    let bc = build_mask_offset(&problem.mesh, &problem.dirichlet, factor, problem.lift)?;
    ws.set_load_step(bc, resolve_tractions(&problem.mesh, &problem.tractions)?, factor)?;
    let mut net: Network<f64> = cfg.build_network(&problem.mesh)?;
    if cfg.network.zero_output {
        return Err(Error::Config("gradcheck needs a nonzero output layer (zero_output = false)".into()));
    }
    net.scale_output_layer(a.output_scale);
    let seed = a.seed.unwrap_or(cfg.network.seed);
    let audit = thread_pool(a.threads)?.install(|| gradient_audit(&ws, &net, a.count, seed, a.h, 1e-6))?;
    println!("index,analytic,fd,rel_error");
    for s in &audit.samples {
        println!("{},{:e},{:e},{:e}", s.index, s.analytic, s.fd, s.rel_error);
    }
    eprintln!(
        "loss {:e}; {} of {} elements plastic; max relative error {:e} over {} parameters",
        audit.loss,
        audit.plastic_elements,
        problem.mesh.element_count(),
        audit.max_rel_error,
        audit.samples.len()
    );
    if audit.max_rel_error > a.max_rel {
        eprintln!("error: gradient audit exceeds tolerance {:e}", a.max_rel);
        return Ok(6);
    }
    Ok(0)
}

pub fn run(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Train(a) => cmd_train(a).map(|_| 0),
        Command::Infer(a) => cmd_infer(a).map(|_| 0),
        Command::Oracle(a) => cmd_oracle(a).map(|_| 0),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Presets { action: PresetAction::List } => {
            for p in &PRESETS {
                println!("{:<12}{}", p.name, p.summary);
            }
            Ok(0)
        }
        Command::Presets { action: PresetAction::Show { name, full_scale } } => match preset_text(name, *full_scale) {
            Some(t) => {
                print!("{t}");
                Ok(0)
            }
            None => Err(Error::Config(format!("unknown preset '{name}' (see 'presets list')"))),
        },
    }
}

pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => e.exit(),
    };
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_flags() {
        let c = Cli::try_parse_from(["demplast", "train", "bimat", "--out", "o", "--seed", "3", "--steps", "1", "--tol", "1e-5"]).unwrap();
        match c.command {
            Command::Train(a) => {
                assert_eq!(a.source.config, "bimat");
                assert_eq!(a.seed, Some(3));
                assert_eq!(a.tol, Some(1e-5));
            }
            _ => panic!(),
        }
        assert!(Cli::try_parse_from(["demplast", "bogus"]).is_err());
    }

    #[test]
    fn missing_config_is_io_error() {
        let e = load_config(&Source { config: "/nonexistent/x.cfg".into(), full_scale: false }).unwrap_err();
        assert_eq!(exit_code(&e), 4);
    }

    #[test]
    fn overrides_apply() {
        let mut cfg = load_config(&Source { config: "shear-iso".into(), full_scale: false }).unwrap();
        let a = RunArgs {
            source: Source { config: "shear-iso".into(), full_scale: false },
            out: "o".into(),
            seed: Some(9),
            threads: None,
            tol: Some(1e-4),
            steps: Some(3),
            mesh: None,
            checkpoint_dir: None,
            reference: None,
        };
        apply_overrides(&mut cfg, &a).unwrap();
        assert_eq!(cfg.factors.len(), 3);
        assert_eq!(cfg.network.seed, 9);
        assert_eq!(cfg.optimizer.tol, 1e-4);
        let bad = RunArgs { steps: Some(13), ..a };
        assert!(apply_overrides(&mut load_config(&bad.source).unwrap(), &bad).is_err());
    }
}
