//! Discrete incremental free energy of the mesh and its parameter gradient.
//!
//! Per element the one-point strain drives a radial return from the
//! committed state; the returned state's density times the integration
//! measure is summed, plus the external potential of the tractions. The
//! gradient runs back through the return map (branch frozen), the strain
//! operator, the Dirichlet mask and the network.

use rayon::prelude::*;

use crate::bc::{BoundaryFields, LoadedFacets};
use crate::error::{Error, Result};
use crate::material::{Material, PlasticState};
use crate::mesh::{build_grad_operators, strain_at_qp, GradOperator, Mesh};
use crate::network::Network;
use crate::scalar::Real;
use crate::tensor::SymTensor2;

/// Everything the loss needs for one load step.
#[derive(Clone, Debug)]
pub struct EnergyWorkspace<T> {
    pub coords: Vec<[T; 3]>,
    pub ops: Vec<GradOperator<T>>,
    pub materials: Vec<Material<T>>,
    /// Converged states of the previous step, one per element.
    pub committed: Vec<PlasticState<T>>,
    /// Total strain the committed states correspond to.
    pub committed_strain: Vec<SymTensor2<T>>,
    pub bc: BoundaryFields<T>,
    pub tractions: Vec<LoadedFacets<T>>,
    pub load_factor: T,
}

/// Result of evaluating the loss on a nodal displacement field.
#[derive(Clone, Debug)]
pub struct FieldEvaluation<T> {
    pub loss: T,
    pub internal: T,
    pub external: T,
    pub states: Vec<PlasticState<T>>,
    pub strains: Vec<SymTensor2<T>>,
    pub delta_gamma: Vec<T>,
    /// dL/du at the nodes (before the mask), if requested.
    pub nodal_grad: Option<Vec<[T; 3]>>,
}

/// Network evaluation: displacements plus the field evaluation.
#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub displacement: Vec<[T; 3]>,
    pub field: FieldEvaluation<T>,
    pub grad: Option<Vec<T>>,
}

impl<T: Real> EnergyWorkspace<T> {
    /// Zero committed state, no constraints, no tractions.
    pub fn new(mesh: &Mesh<T>, materials: Vec<Material<T>>) -> Result<Self> {
        let ops = build_grad_operators(mesh)?;
        if let Some(op) = ops.iter().find(|op| op.material >= materials.len()) {
            return Err(Error::Config(format!(
                "element {} uses material {} but only {} materials are defined",
                op.element,
                op.material,
                materials.len()
            )));
        }
        let n = ops.len();
        Ok(Self {
            coords: mesh.nodes.clone(),
            ops,
            materials,
            committed: vec![PlasticState::zero(); n],
            committed_strain: vec![SymTensor2::zero(); n],
            bc: BoundaryFields::free(mesh.node_count()),
            tractions: Vec::new(),
            load_factor: T::zero(),
        })
    }

    pub fn set_load_step(&mut self, bc: BoundaryFields<T>, tractions: Vec<LoadedFacets<T>>, factor: T) -> Result<()> {
        if bc.mask.len() != self.coords.len() {
            return Err(Error::Boundary("boundary fields do not match the mesh".into()));
        }
        self.bc = bc;
        self.tractions = tractions;
        self.load_factor = factor;
        Ok(())
    }

    /// Accepts the states of `eval` as the new converged state.
    pub fn commit(&mut self, eval: &FieldEvaluation<T>) {
        self.committed.clone_from(&eval.states);
        self.committed_strain.clone_from(&eval.strains);
    }

    pub fn total_volume(&self) -> T {
        self.ops.iter().map(|o| o.measure).sum()
    }

    /// `-Σ_facets (f·t̄ · ū_facet) A`, with `ū_facet` the nodal mean.
    pub fn external_potential(&self, u: &[[T; 3]]) -> T {
        let mut p = T::zero();
        for load in &self.tractions {
            let t = load.vector.map(|v| v * self.load_factor);
            for f in &load.facets {
                let k = T::of_usize(f.nodes.len());
                let mut ubar = [T::zero(); 3];
                for &n in &f.nodes {
                    for d in 0..3 {
                        ubar[d] = ubar[d] + u[n][d] / k;
                    }
                }
                p = p - (t[0] * ubar[0] + t[1] * ubar[1] + t[2] * ubar[2]) * f.area;
            }
        }
        p
    }

    fn external_gradient(&self, g: &mut [[T; 3]]) {
        for load in &self.tractions {
            let t = load.vector.map(|v| v * self.load_factor);
            for f in &load.facets {
                let w = f.area / T::of_usize(f.nodes.len());
                for &n in &f.nodes {
                    for d in 0..3 {
                        g[n][d] = g[n][d] - t[d] * w;
                    }
                }
            }
        }
    }

    /// Loss of a given nodal displacement field.
    pub fn evaluate_field(&self, u: &[[T; 3]], with_grad: bool) -> Result<FieldEvaluation<T>> {
        if u.len() != self.coords.len() {
            return Err(Error::Config(format!("field has {} nodes, mesh has {}", u.len(), self.coords.len())));
        }
        let per_element: Vec<_> = self
            .ops
            .par_iter()
            .enumerate()
            .map(|(e, op)| {
                let eps = strain_at_qp(op, u);
                let pe = self.materials[op.material].point_energy(
                    &self.committed[e],
                    &self.committed_strain[e],
                    &eps,
                    with_grad,
                )?;
                let forces = with_grad.then(|| op.scatter_adjoint(&pe.d_density, op.measure));
                Ok((eps, pe, forces))
            })
            .collect::<Result<_>>()?;

        let mut internal = T::zero();
        let mut states = Vec::with_capacity(per_element.len());
        let mut strains = Vec::with_capacity(per_element.len());
        let mut delta_gamma = Vec::with_capacity(per_element.len());
        let mut nodal = with_grad.then(|| vec![[T::zero(); 3]; u.len()]);
        for (op, (eps, pe, forces)) in self.ops.iter().zip(per_element) {
            internal = internal + op.measure * pe.density;
            if let (Some(g), Some(f)) = (nodal.as_mut(), forces) {
                for (&n, fa) in op.nodes.iter().zip(f) {
                    for d in 0..3 {
                        g[n][d] = g[n][d] + fa[d];
                    }
                }
            }
            states.push(pe.result.new_state);
            delta_gamma.push(pe.result.delta_gamma);
            strains.push(eps);
        }
        let external = self.external_potential(u);
        if let Some(g) = nodal.as_mut() {
            self.external_gradient(g);
        }
        let loss = internal + external;
        if !loss.is_finite() {
            return Err(Error::Divergence("loss is not finite".into()));
        }
        Ok(FieldEvaluation { loss, internal, external, states, strains, delta_gamma, nodal_grad: nodal })
    }

    /// Full chain: network → mask/offset → loss, with parameter gradient
    /// if requested.
    pub fn evaluate(&self, net: &Network<T>, with_grad: bool) -> Result<Evaluation<T>> {
        let raw = net.forward(&self.coords);
        let displacement = self.bc.apply(&raw);
        let mut field = self.evaluate_field(&displacement, with_grad)?;
        let grad = match field.nodal_grad.take() {
            Some(mut g) => {
                self.bc.mask_adjoint(&mut g);
                let p = net.backward(&self.coords, &g)?;
                field.nodal_grad = Some(g);
                Some(p)
            }
            None => None,
        };
        Ok(Evaluation { displacement, field, grad })
    }

    pub fn loss(&self, net: &Network<T>) -> Result<T> {
        Ok(self.evaluate(net, false)?.field.loss)
    }

    pub fn loss_and_grad(&self, net: &Network<T>) -> Result<(T, Vec<T>)> {
        let e = self.evaluate(net, true)?;
        Ok((e.field.loss, e.grad.expect("gradient requested")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bc::{build_mask_offset, resolve_tractions, DirichletSpec, Lift, TractionSpec, ValuePattern};
    use crate::material::{ElasticConstants, HardeningLaw};
    use crate::mesh::generate_structured_box;

    fn iso() -> Material<f64> {
        Material::new(ElasticConstants::new(384.62, 833.33).unwrap(), HardeningLaw::isotropic(50.0, 500.0).unwrap())
            .unwrap()
    }

    fn all_sides(axis: usize, value: ValuePattern<f64>) -> Vec<DirichletSpec<f64>> {
        ["x_min", "x_max", "y_min", "y_max", "z_min", "z_max"]
            .iter()
            .map(|s| DirichletSpec { name: format!("{s}{axis}"), node_set: s.to_string(), axis, value })
            .collect()
    }

    fn uniform_shear_ws(divs: [usize; 3], gamma: f64) -> EnergyWorkspace<f64> {
        let m = generate_structured_box::<f64>([1.0, 1.0, 1.0], divs).unwrap();
        let mut ws = EnergyWorkspace::new(&m, vec![iso()]).unwrap();
        let mut specs = all_sides(0, ValuePattern::Affine { coef: [0.0, gamma, 0.0], offset: 0.0 });
        specs.extend(all_sides(1, ValuePattern::Const(0.0)));
        specs.extend(all_sides(2, ValuePattern::Const(0.0)));
        let bc = build_mask_offset(&m, &specs, 1.0, Lift::Extend).unwrap();
        ws.set_load_step(bc, vec![], 1.0).unwrap();
        ws
    }

    #[test]
    fn zero_everything_gives_zero_loss() {
        let m = generate_structured_box::<f64>([1.0; 3], [2, 2, 2]).unwrap();
        let ws = EnergyWorkspace::new(&m, vec![iso()]).unwrap();
        let net = Network::<f64>::zeros(&[3, 4, 3]).unwrap();
        let (l, g) = ws.loss_and_grad(&net).unwrap();
        assert_eq!(l, 0.0);
        assert!(g.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn elastic_uniform_shear_single_element() {
        let ws = uniform_shear_ws([1, 1, 1], 0.04);
        let net = Network::<f64>::init(&[3, 5, 3], 1).unwrap();
        let e = ws.evaluate(&net, true).unwrap();
        assert!((e.field.loss - 0.30769).abs() < 1e-5, "{}", e.field.loss);
        assert!((e.field.loss - 0.5 * 2.0 * 15.3848 * 0.02).abs() < 1e-12);
        // Fully constrained: the loss does not depend on the parameters.
        assert!(e.grad.unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn plastic_single_element_matches_density() {
        let ws = uniform_shear_ws([1, 1, 1], 0.1);
        let net = Network::<f64>::zeros(&[3, 3]).unwrap();
        let l = ws.loss(&net).unwrap();
        let mat = iso();
        let eps = SymTensor2::shear12(0.05);
        let r = mat.radial_return(&PlasticState::zero(), &eps);
        assert!(r.yielded);
        let s = r.new_state;
        let brute = 0.5 * s.sigma.contract(&(eps - s.eps_p))
            + 0.5 * 500.0 * s.ebar_p * s.ebar_p
            + s.eps_p.contract(&s.sigma)
            - 500.0 * s.ebar_p * s.ebar_p;
        assert!((l - brute).abs() < 1e-12);
    }

    #[test]
    fn uniform_strain_loss_is_mesh_independent() {
        let net = Network::<f64>::zeros(&[3, 3]).unwrap();
        let l1 = uniform_shear_ws([1, 1, 1], 0.1).loss(&net).unwrap();
        let l3 = uniform_shear_ws([3, 2, 4], 0.1).loss(&net).unwrap();
        assert!((l1 - l3).abs() <= 1e-10 * l1.abs());
    }

    #[test]
    fn external_potential_examples() {
        let m = generate_structured_box::<f64>([1.0; 3], [1, 1, 1]).unwrap();
        let mut ws = EnergyWorkspace::new(&m, vec![iso()]).unwrap();
        let u = vec![[0.5, 0.0, 0.0]; 8];
        assert_eq!(ws.external_potential(&u), 0.0);
        let t = resolve_tractions(&m, &[TractionSpec { name: "t".into(), side_set: "x_max".into(), vector: [1.0, 0.0, 0.0] }])
            .unwrap();
        ws.set_load_step(BoundaryFields::free(8), t.clone(), 1.0).unwrap();
        assert!((ws.external_potential(&u) + 0.5).abs() < 1e-15);
        let t = resolve_tractions(&m, &[TractionSpec { name: "t".into(), side_set: "x_max".into(), vector: [0.0, 1.0, 0.0] }])
            .unwrap();
        ws.set_load_step(BoundaryFields::free(8), t, 1.0).unwrap();
        assert_eq!(ws.external_potential(&u), 0.0);
    }

    #[test]
    fn repeated_evaluation_is_bit_identical() {
        let m = generate_structured_box::<f64>([1.0; 3], [3, 3, 1]).unwrap();
        let ws = EnergyWorkspace::new(&m, vec![iso()]).unwrap();
        let net = Network::<f64>::init(&[3, 8, 3], 5).unwrap();
        let a = ws.loss_and_grad(&net).unwrap();
        let b = ws.loss_and_grad(&net).unwrap();
        assert_eq!(a.0.to_bits(), b.0.to_bits());
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn material_id_out_of_range() {
        let mut m = generate_structured_box::<f64>([1.0; 3], [2, 1, 1]).unwrap();
        m.material[1] = 3;
        assert!(EnergyWorkspace::new(&m, vec![iso()]).is_err());
    }

    #[test]
    fn nodal_gradient_matches_fd_with_traction() {
        let m = generate_structured_box::<f64>([1.0; 3], [2, 2, 1]).unwrap();
        let mut ws = EnergyWorkspace::new(&m, vec![iso()]).unwrap();
        let t = resolve_tractions(&m, &[TractionSpec { name: "t".into(), side_set: "x_max".into(), vector: [3.0, -1.0, 2.0] }])
            .unwrap();
        ws.set_load_step(BoundaryFields::free(m.node_count()), t, 0.7).unwrap();
        let u: Vec<[f64; 3]> = m.nodes.iter().map(|x| [0.08 * x[1] + 0.01 * x[0] * x[2], 0.02 * x[0] * x[1], -0.01 * x[2]]).collect();
        let e = ws.evaluate_field(&u, true).unwrap();
        let g = e.nodal_grad.unwrap();
        let h = 1e-7;
        for n in 0..u.len() {
            for d in 0..3 {
                let mut up = u.clone();
                up[n][d] += h;
                let mut um = u.clone();
                um[n][d] -= h;
                let fd = (ws.evaluate_field(&up, false).unwrap().loss - ws.evaluate_field(&um, false).unwrap().loss) / (2.0 * h);
                assert!((fd - g[n][d]).abs() < 1e-5 * fd.abs().max(1.0), "{n},{d}: {fd} vs {}", g[n][d]);
            }
        }
    }
}
