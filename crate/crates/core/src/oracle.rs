//! Independent reference computations used by the tests, the acceptance
//! suite and the `oracle` / `gradcheck` subcommands.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::energy::EnergyWorkspace;
use crate::error::{Error, Result};
use crate::material::{HardeningMode, Material, PlasticState};
use crate::network::Network;
use crate::scalar::Real;
use crate::tensor::SymTensor2;

/// One point of a proportional simple-shear response.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ShearPoint<T> {
    /// Engineering shear strain `2ε₁₂`.
    pub gamma: T,
    /// `σ₁₂` (MPa).
    pub tau: T,
    pub ebar_p: T,
}

/// Scalar reduction of the return map for simple shear: plastic engineering
/// strain `γᵖ`, back stress `α = (C/3)γᵖ`, and shear yield stress
/// `σ_y0/√3 + (H/3)Σ|Δγᵖ|`.
pub fn analytic_shear_curve<T: Real>(material: &Material<T>, gamma_path: &[T]) -> Vec<ShearPoint<T>> {
    let mu = material.elastic.mu;
    let law = &material.hardening;
    let three = T::lit(3.0);
    let sqrt3 = three.sqrt();
    let (h, c) = match law.mode {
        HardeningMode::Isotropic => (law.h, T::zero()),
        HardeningMode::Kinematic => (T::zero(), law.c),
    };
    let mut gp = T::zero();
    let mut acc = T::zero();
    gamma_path
        .iter()
        .map(|&gamma| {
            let alpha = c / three * gp;
            let xi = mu * (gamma - gp) - alpha;
            let tau_y = law.sigma_y0 / sqrt3 + h / three * acc;
            if xi.abs() > tau_y {
                let dgp = (xi.abs() - tau_y) / (mu + (h + c) / three);
                gp = gp + dgp * xi.signum();
                acc = acc + dgp;
            }
            ShearPoint { gamma, tau: mu * (gamma - gp), ebar_p: acc / sqrt3 }
        })
        .collect()
}

/// Shear yield stress `σ_y0/√3`.
pub fn shear_yield_stress<T: Real>(material: &Material<T>) -> T {
    material.hardening.sigma_y0 / T::lit(3.0).sqrt()
}

/// Slope `dτ/dγ` on the plastic branch: `μ(H+C)/(3μ+H+C)`.
pub fn shear_plastic_slope<T: Real>(material: &Material<T>) -> T {
    let mu = material.elastic.mu;
    let k = material.hardening.h + material.hardening.c;
    mu * k / (T::lit(3.0) * mu + k)
}

/// Width of the elastic range after reversal under kinematic hardening:
/// `2σ_y0/√3`.
pub fn reverse_yield_window<T: Real>(material: &Material<T>) -> T {
    T::lit(2.0) * shear_yield_stress(material)
}

/// Strain path for the simple shear `u_x = (γ/2)·...`: `ε₁₂ = γ/2` per entry.
pub fn shear_strain_path<T: Real>(gamma_path: &[T]) -> Vec<SymTensor2<T>> {
    gamma_path.iter().map(|g| SymTensor2::shear12(*g * T::lit(0.5))).collect()
}

fn full(a: &SymTensor2<f64>) -> [[f64; 3]; 3] {
    let c = a.components();
    [[c[0], c[3], c[4]], [c[3], c[1], c[5]], [c[4], c[5], c[2]]]
}

fn full_contract(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

/// Term-by-term incremental free energy density computed on full 3×3
/// matrices, without the symmetric-storage contraction.
pub fn brute_force_density<T: Real>(
    material: &Material<T>,
    new: &PlasticState<T>,
    old: &PlasticState<T>,
    eps: &SymTensor2<T>,
) -> Result<f64> {
    let law = &material.hardening;
    let sig = full(&new.sigma.cast());
    let ee: [[f64; 3]; 3] = {
        let e = full(&eps.cast());
        let p = full(&new.eps_p.cast());
        std::array::from_fn(|i| std::array::from_fn(|j| e[i][j] - p[i][j]))
    };
    let dep: [[f64; 3]; 3] = {
        let a = full(&new.eps_p.cast());
        let b = full(&old.eps_p.cast());
        std::array::from_fn(|i| std::array::from_fn(|j| a[i][j] - b[i][j]))
    };
    let stored = 0.5 * full_contract(&sig, &ee);
    let dissipation = full_contract(&dep, &sig);
    match law.mode {
        HardeningMode::Isotropic => {
            let h = law.h.as_f64();
            let (e1, e0) = (new.ebar_p.as_f64(), old.ebar_p.as_f64());
            let hardening = 0.5 * h * e1 * e1;
            let correction = -h * e1 * (e1 - e0);
            Ok(stored + hardening + dissipation + correction)
        }
        HardeningMode::Kinematic => {
            let c = law.c.as_f64();
            if c == 0.0 {
                return Err(Error::Material("kinematic free energy requires C > 0".into()));
            }
            let q1 = full(&new.q.cast());
            let q0 = full(&old.q.cast());
            let dq: [[f64; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| q1[i][j] - q0[i][j]));
            Ok(stored + full_contract(&q1, &q1) / (2.0 * c) + dissipation - full_contract(&q1, &dq) / c)
        }
    }
}

/// Independent re-evaluation of the loss for a nodal field: fresh return
/// map per element from the committed state, brute-force densities and a
/// separately summed external potential.
pub fn brute_force_loss<T: Real>(ws: &EnergyWorkspace<T>, u: &[[T; 3]]) -> Result<f64> {
    let mut internal = 0.0;
    for (e, op) in ws.ops.iter().enumerate() {
        let mut g = [[0.0f64; 3]; 3];
        for (a, &n) in op.nodes.iter().enumerate() {
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] += u[n][i].as_f64() * op.grads[a][j].as_f64();
                }
            }
        }
        let eps64 = SymTensor2::new([
            g[0][0],
            g[1][1],
            g[2][2],
            0.5 * (g[0][1] + g[1][0]),
            0.5 * (g[0][2] + g[2][0]),
            0.5 * (g[1][2] + g[2][1]),
        ]);
        let eps: SymTensor2<T> = eps64.cast();
        let mat = &ws.materials[op.material];
        let old = &ws.committed[e];
        let res = mat.radial_return(old, &(eps - ws.committed_strain[e]));
        internal += op.measure.as_f64() * brute_force_density(mat, &res.new_state, old, &eps)?;
    }
    let mut external = 0.0;
    for load in &ws.tractions {
        for f in &load.facets {
            let k = f.nodes.len() as f64;
            for d in 0..3 {
                let ubar: f64 = f.nodes.iter().map(|&n| u[n][d].as_f64()).sum::<f64>() / k;
                external -= (load.vector[d] * ws.load_factor).as_f64() * ubar * f.area.as_f64();
            }
        }
    }
    Ok(internal + external)
}

/// Central differences of the loss for the listed parameters, each
/// evaluation on a fresh copy of the workspace.
pub fn fd_loss_gradient<T: Real>(ws: &EnergyWorkspace<T>, net: &Network<T>, indices: &[usize], step: T) -> Result<Vec<T>> {
    if !(step > T::zero()) {
        return Err(Error::Config("finite-difference step must be positive".into()));
    }
    let base = net.params();
    let mut probe = net.clone();
    indices
        .iter()
        .map(|&i| {
            if i >= base.len() {
                return Err(Error::Network(format!("parameter index {i} out of range")));
            }
            let mut p = base.clone();
            p[i] = base[i] + step;
            probe.set_params(&p)?;
            let lp = ws.clone().loss(&probe)?;
            p[i] = base[i] - step;
            probe.set_params(&p)?;
            let lm = ws.clone().loss(&probe)?;
            Ok((lp - lm) / (T::lit(2.0) * step))
        })
        .collect()
}

#[derive(Clone, Debug)]
pub struct GradSample {
    pub index: usize,
    pub analytic: f64,
    pub fd: f64,
    pub rel_error: f64,
}

#[derive(Clone, Debug)]
pub struct GradAudit {
    pub loss: f64,
    pub samples: Vec<GradSample>,
    pub max_rel_error: f64,
    /// Elements on the plastic branch at the audited point.
    pub plastic_elements: usize,
}

/// Compares the analytic gradient with central differences on `count`
/// randomly chosen parameters. The relative error uses
/// `max(|fd|, floor · ‖g‖_∞)` as denominator so parameters with a
/// vanishing derivative are judged against the gradient's scale.
pub fn gradient_audit<T: Real>(
    ws: &EnergyWorkspace<T>,
    net: &Network<T>,
    count: usize,
    seed: u64,
    step: T,
    floor: f64,
) -> Result<GradAudit> {
    let eval = ws.evaluate(net, true)?;
    let grad = eval.grad.expect("gradient requested");
    let n = grad.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices = sample(&mut rng, n, count.min(n)).into_vec();
    indices.sort_unstable();
    let fd = fd_loss_gradient(ws, net, &indices, step)?;
    let scale = grad.iter().fold(0.0f64, |m, g| m.max(g.as_f64().abs()));
    let samples: Vec<GradSample> = indices
        .iter()
        .zip(&fd)
        .map(|(&i, f)| {
            let (a, f) = (grad[i].as_f64(), f.as_f64());
            let denom = f.abs().max(floor * scale).max(1e-300);
            GradSample { index: i, analytic: a, fd: f, rel_error: (a - f).abs() / denom }
        })
        .collect();
    let max_rel_error = samples.iter().fold(0.0f64, |m, s| m.max(s.rel_error));
    let plastic_elements = eval.field.delta_gamma.iter().filter(|d| **d > T::zero()).count();
    Ok(GradAudit { loss: eval.field.loss.as_f64(), samples, max_rel_error, plastic_elements })
}
