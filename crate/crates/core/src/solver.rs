//! Load-stepping driver: per step rebuild the constraints, train the
//! network from the previous step's parameters, commit the converged
//! quadrature states and checkpoint. Inference replays saved parameters on
//! another mesh without optimization.

use std::path::{Path, PathBuf};
use std::time::Instant;

use crate::bc::{build_mask_offset, resolve_tractions, DirichletSpec, Lift, LoadProgram, TractionSpec};
use crate::energy::{EnergyWorkspace, FieldEvaluation};
use crate::error::{Error, Result};
use crate::material::{Material, PlasticState};
use crate::mesh::Mesh;
use crate::network::Network;
use crate::optim::{minimize, ConvergenceMonitor, Lbfgs};
use crate::scalar::Real;

/// Mesh, materials, constraints and load program.
#[derive(Clone, Debug)]
pub struct Problem<T> {
    pub mesh: Mesh<T>,
    /// Indexed by the mesh's per-element material id.
    pub materials: Vec<Material<T>>,
    pub dirichlet: Vec<DirichletSpec<T>>,
    pub tractions: Vec<TractionSpec<T>>,
    pub lift: Lift,
    pub program: LoadProgram<T>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OptimizerSettings<T> {
    pub lr: T,
    pub memory: usize,
    pub patience: usize,
    pub tol: T,
    pub max_iters_per_step: usize,
}

impl<T: Real> Default for OptimizerSettings<T> {
    fn default() -> Self {
        Self { lr: T::lit(0.5), memory: 20, patience: 10, tol: T::lit(1e-6), max_iters_per_step: 2000 }
    }
}

/// Converged solution of one load step.
#[derive(Clone, Debug)]
pub struct StepRecord<T> {
    /// 1-based.
    pub step: usize,
    pub factor: T,
    pub displacement: Vec<[T; 3]>,
    /// Committed per-element states.
    pub states: Vec<PlasticState<T>>,
    pub loss: T,
    pub iterations: usize,
    pub converged: bool,
    pub losses: Vec<T>,
    pub seconds: f64,
}

impl<T: Real> StepRecord<T> {
    pub fn mises(&self) -> Vec<T> {
        self.states.iter().map(PlasticState::von_mises).collect()
    }

    pub fn peeq(&self) -> Vec<T> {
        self.states.iter().map(|s| s.ebar_p).collect()
    }
}

pub fn checkpoint_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("step_{step}.ckpt"))
}

pub fn state_path(dir: &Path, step: usize) -> PathBuf {
    dir.join(format!("state_{step}.dat"))
}

/// Per point, little-endian `f64`: `σ(6), εᵖ(6), ε̄ᵖ, q(6)`.
pub fn write_states<T: Real>(path: &Path, states: &[PlasticState<T>]) -> Result<()> {
    let mut bytes = Vec::with_capacity(states.len() * 19 * 8);
    for s in states {
        for v in s.to_array() {
            bytes.extend_from_slice(&v.as_f64().to_le_bytes());
        }
    }
    std::fs::write(path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn read_states<T: Real>(path: &Path) -> Result<Vec<PlasticState<T>>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    if bytes.len() % (19 * 8) != 0 {
        return Err(Error::Checkpoint(format!("{}: size is not a multiple of 152 bytes", path.display())));
    }
    Ok(bytes
        .chunks_exact(19 * 8)
        .map(|rec| {
            let a: [T; 19] =
                std::array::from_fn(|k| T::lit(f64::from_le_bytes(rec[8 * k..8 * k + 8].try_into().expect("8 bytes"))));
            PlasticState::from_array(&a)
        })
        .collect())
}

pub struct Solver<T> {
    pub problem: Problem<T>,
    pub workspace: EnergyWorkspace<T>,
    pub settings: OptimizerSettings<T>,
    pub checkpoint_dir: Option<PathBuf>,
}

impl<T: Real> Solver<T> {
    pub fn new(problem: Problem<T>, settings: OptimizerSettings<T>, checkpoint_dir: Option<PathBuf>) -> Result<Self> {
        let workspace = EnergyWorkspace::new(&problem.mesh, problem.materials.clone())?;
        // Surface constraint errors before any training.
        build_mask_offset(&problem.mesh, &problem.dirichlet, T::one(), problem.lift)?;
        resolve_tractions(&problem.mesh, &problem.tractions)?;
        if let Some(dir) = &checkpoint_dir {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
        }
        Ok(Self { problem, workspace, settings, checkpoint_dir })
    }

    fn prepare_step(&mut self, factor: T) -> Result<()> {
        let p = &self.problem;
        let bc = build_mask_offset(&p.mesh, &p.dirichlet, factor, p.lift)?;
        let tr = resolve_tractions(&p.mesh, &p.tractions)?;
        self.workspace.set_load_step(bc, tr, factor)
    }

    fn finish_step(&mut self, step: usize, net: &Network<T>) -> Result<(Vec<[T; 3]>, FieldEvaluation<T>)> {
        let eval = self.workspace.evaluate(net, false)?;
        self.workspace.commit(&eval.field);
        if let Some(dir) = &self.checkpoint_dir {
            net.save_checkpoint(checkpoint_path(dir, step))?;
            write_states(&state_path(dir, step), &eval.field.states)?;
        }
        Ok((eval.displacement, eval.field))
    }

    /// Trains through every load step. `on_step` sees each record as soon as
    /// it is committed, so outputs of completed steps survive a later
    /// divergence.
    pub fn run(
        &mut self,
        net: &mut Network<T>,
        mut on_step: impl FnMut(&StepRecord<T>) -> Result<()>,
    ) -> Result<Vec<StepRecord<T>>> {
        let mut opt = Lbfgs::new(self.settings.lr, self.settings.memory)?;
        let mut records = Vec::with_capacity(self.problem.program.len());
        let factors = self.problem.program.factors.clone();
        for (k, &factor) in factors.iter().enumerate() {
            let step = k + 1;
            let t0 = Instant::now();
            self.prepare_step(factor)?;
            opt.reset();
            let mut monitor = ConvergenceMonitor::new(self.settings.patience, self.settings.tol)?;
            let mut params = net.params();
            let ws = &self.workspace;
            let mut probe = net.clone();
            let report = minimize(&mut opt, &mut monitor, &mut params, self.settings.max_iters_per_step, |p| {
                probe.set_params(p)?;
                ws.loss_and_grad(&probe)
            })
            .map_err(|e| match e {
                Error::Divergence(m) => Error::Divergence(format!("load step {step}: {m}")),
                other => other,
            })?;
            net.set_params(&params)?;
            let (displacement, field) = self.finish_step(step, net)?;
            let rec = StepRecord {
                step,
                factor,
                displacement,
                states: field.states,
                loss: field.loss,
                iterations: report.iterations,
                converged: report.converged,
                losses: report.losses,
                seconds: t0.elapsed().as_secs_f64(),
            };
            on_step(&rec)?;
            records.push(rec);
        }
        Ok(records)
    }

    /// Replays saved per-step parameters on this solver's mesh: forward
    /// evaluation, return map from the committed states, commit. No
    /// optimization.
    pub fn infer(
        &mut self,
        checkpoint_dir: &Path,
        expected_widths: Option<&[usize]>,
        mut on_step: impl FnMut(&StepRecord<T>) -> Result<()>,
    ) -> Result<Vec<StepRecord<T>>> {
        let saved = self.checkpoint_dir.take();
        let out = (|| {
            let mut records = Vec::new();
            let factors = self.problem.program.factors.clone();
            for (k, &factor) in factors.iter().enumerate() {
                let step = k + 1;
                let t0 = Instant::now();
                let path = checkpoint_path(checkpoint_dir, step);
                if !path.exists() {
                    return Err(Error::Checkpoint(format!(
                        "no checkpoint for load step {step} (expected {})",
                        path.display()
                    )));
                }
                let net = Network::<T>::load_checkpoint(&path)?;
                if let Some(w) = expected_widths {
                    if net.widths() != w {
                        return Err(Error::Checkpoint(format!(
                            "step {step}: checkpoint widths {:?} differ from configured {:?}",
                            net.widths(),
                            w
                        )));
                    }
                }
                self.prepare_step(factor)?;
                let (displacement, field) = self.finish_step(step, &net)?;
                let rec = StepRecord {
                    step,
                    factor,
                    displacement,
                    states: field.states,
                    loss: field.loss,
                    iterations: 0,
                    converged: true,
                    losses: Vec::new(),
                    seconds: t0.elapsed().as_secs_f64(),
                };
                on_step(&rec)?;
                records.push(rec);
            }
            Ok(records)
        })();
        self.checkpoint_dir = saved;
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::ValuePattern;
    use crate::material::{drive_point, ElasticConstants, HardeningLaw};
    use crate::mesh::generate_structured_box;
    use crate::oracle::shear_strain_path;

    fn iso() -> Material<f64> {
        Material::new(ElasticConstants::new(384.62, 833.33).unwrap(), HardeningLaw::isotropic(50.0, 500.0).unwrap())
            .unwrap()
    }

    fn shear_problem(divs: [usize; 3], factors: Vec<f64>, lift: Lift) -> Problem<f64> {
        let mesh = generate_structured_box([4.0, 4.0, 1.0], divs).unwrap();
        let mut dirichlet = Vec::new();
        for side in ["x_min", "x_max", "y_min", "y_max"] {
            dirichlet.push(DirichletSpec {
                name: format!("ux_{side}"),
                node_set: side.into(),
                axis: 0,
                value: ValuePattern::Affine { coef: [0.0, 0.25, 0.0], offset: 0.0 },
            });
            dirichlet.push(DirichletSpec { name: format!("uy_{side}"), node_set: side.into(), axis: 1, value: ValuePattern::Const(0.0) });
        }
        for side in ["z_min", "z_max"] {
            dirichlet.push(DirichletSpec { name: format!("uz_{side}"), node_set: side.into(), axis: 2, value: ValuePattern::Const(0.0) });
        }
        Problem { mesh, materials: vec![iso()], dirichlet, tractions: vec![], lift, program: LoadProgram::new(factors).unwrap() }
    }

    fn quick() -> OptimizerSettings<f64> {
        OptimizerSettings { max_iters_per_step: 200, tol: 1e-9, ..Default::default() }
    }

    #[test]
    fn states_file_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("s.dat");
        let m = iso();
        let states: Vec<PlasticState<f64>> =
            drive_point(&m, &shear_strain_path(&[0.1, 0.3, -0.2])).into_iter().collect();
        write_states(&p, &states).unwrap();
        assert_eq!(std::fs::metadata(&p).unwrap().len(), 3 * 152);
        assert_eq!(read_states::<f64>(&p).unwrap(), states);
    }

    #[test]
    fn zero_program_with_zero_init_gives_zero_solution() {
        let mut s = Solver::new(shear_problem([2, 2, 1], vec![0.0, 0.0], Lift::Nodal), quick(), None).unwrap();
        let mut net = Network::init(&[3, 8, 3], 1).unwrap();
        net.zero_output_layer();
        let recs = s.run(&mut net, |_| Ok(())).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert!(r.displacement.iter().all(|u| *u == [0.0; 3]));
            assert!(r.states.iter().all(|st| *st == PlasticState::zero()));
            assert_eq!(r.loss, 0.0);
        }
    }

    #[test]
    fn single_element_cyclic_matches_oracle() {
        let factors = vec![0.5, 1.0, 1.5, 1.0, 0.5, 0.0, -0.5];
        let mut s = Solver::new(shear_problem([1, 1, 1], factors.clone(), Lift::Nodal), quick(), None).unwrap();
        let mut net = Network::init(&[3, 4, 3], 2).unwrap();
        let recs = s.run(&mut net, |_| Ok(())).unwrap();
        let gammas: Vec<f64> = factors.iter().map(|f| f / 4.0).collect();
        let oracle = drive_point(&iso(), &shear_strain_path(&gammas));
        for (r, o) in recs.iter().zip(&oracle) {
            assert!((r.states[0].sigma[3] - o.sigma[3]).abs() < 1e-10);
            assert!((r.states[0].ebar_p - o.ebar_p).abs() < 1e-12);
        }
        // Plastic strain accumulates monotonically.
        assert!(recs.windows(2).all(|w| w[1].states[0].ebar_p >= w[0].states[0].ebar_p));
        assert!(recs.iter().any(|r| r.states[0].ebar_p > 0.0));
    }

    #[test]
    fn checkpoint_infer_replays_training() {
        let dir = tempfile::tempdir().unwrap();
        let prob = shear_problem([2, 2, 1], vec![0.3, 0.6], Lift::Nodal);
        let mut s = Solver::new(prob.clone(), quick(), Some(dir.path().to_path_buf())).unwrap();
        let mut net = Network::init(&[3, 6, 3], 4).unwrap();
        let trained = s.run(&mut net, |_| Ok(())).unwrap();
        assert!(checkpoint_path(dir.path(), 2).exists());
        assert_eq!(read_states::<f64>(&state_path(dir.path(), 2)).unwrap(), trained[1].states);

        let mut s2 = Solver::new(prob.clone(), quick(), None).unwrap();
        let inferred = s2.infer(dir.path(), Some(&[3, 6, 3]), |_| Ok(())).unwrap();
        for (a, b) in trained.iter().zip(&inferred) {
            assert_eq!(a.displacement, b.displacement);
            assert_eq!(a.states, b.states);
        }
        let err = Solver::new(prob.clone(), quick(), None).unwrap().infer(dir.path(), Some(&[3, 7, 3]), |_| Ok(()));
        assert!(matches!(err, Err(Error::Checkpoint(_))));

        let mut longer = prob;
        longer.program = LoadProgram::new(vec![0.3, 0.6, 0.9]).unwrap();
        match Solver::new(longer, quick(), None).unwrap().infer(dir.path(), None, |_| Ok(())) {
            Err(Error::Checkpoint(m)) => assert!(m.contains("step 3"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn training_is_deterministic() {
        let run = || {
            let mut s = Solver::new(shear_problem([2, 2, 1], vec![0.4], Lift::Nodal), quick(), None).unwrap();
            let mut net = Network::init(&[3, 6, 3], 9).unwrap();
            s.run(&mut net, |_| Ok(())).unwrap().remove(0).losses
        };
        let a = run();
        let b = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap().install(run);
        assert_eq!(a, b);
    }

    #[test]
    fn training_reduces_loss() {
        let mut s = Solver::new(shear_problem([2, 2, 1], vec![0.2], Lift::Nodal), quick(), None).unwrap();
        let mut net = Network::init(&[3, 8, 3], 3).unwrap();
        let r = s.run(&mut net, |_| Ok(())).unwrap().remove(0);
        assert!(r.loss < r.losses[0]);
        // Interior node should approach the uniform shear field.
        let centre = s.problem.mesh.nodes.iter().position(|x| *x == [2.0, 2.0, 0.0]).unwrap();
        assert!((r.displacement[centre][0] - 0.1).abs() < 1e-2);
    }
}
