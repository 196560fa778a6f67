use rayon::prelude::*;

use super::{ElementKind, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::SymTensor2;

/// Reduced-integration strain operator of one element.
///
/// `grads[a]` is ∂φ_a/∂X at the single quadrature point, so the displacement
/// gradient is `G_ij = Σ_a u_a,i · grads[a][j]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradOperator<T> {
    pub element: usize,
    pub nodes: Vec<usize>,
    pub grads: Vec<[T; 3]>,
    /// Quadrature weight × |det J| (mm³).
    pub measure: T,
    pub material: usize,
}

const HEX_SIGNS: [[f64; 3]; 8] = [
    [-1.0, -1.0, -1.0],
    [1.0, -1.0, -1.0],
    [1.0, 1.0, -1.0],
    [-1.0, 1.0, -1.0],
    [-1.0, -1.0, 1.0],
    [1.0, -1.0, 1.0],
    [1.0, 1.0, 1.0],
    [-1.0, 1.0, 1.0],
];

/// Reference derivatives ∂φ_a/∂ξ at the quadrature point and the reference weight.
fn reference_gradients<T: Real>(kind: ElementKind) -> (Vec<[T; 3]>, T) {
    match kind {
        // Trilinear shape functions at ξ = (0, 0, 0): ∂φ_a/∂ξ_k = s_a,k / 8.
        ElementKind::Hex8 => (
            HEX_SIGNS.iter().map(|s| s.map(|v| T::lit(v / 8.0))).collect(),
            T::lit(8.0),
        ),
        ElementKind::Tet4 => {
            let (o, z, m) = (T::one(), T::zero(), -T::one());
            (vec![[m, m, m], [o, z, z], [z, o, z], [z, z, o]], T::lit(1.0 / 6.0))
        }
    }
}

fn invert3<T: Real>(j: &[[T; 3]; 3]) -> (T, [[T; 3]; 3]) {
    let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    let inv_det = T::one() / det;
    let inv = [
        [
            (j[1][1] * j[2][2] - j[1][2] * j[2][1]) * inv_det,
            (j[0][2] * j[2][1] - j[0][1] * j[2][2]) * inv_det,
            (j[0][1] * j[1][2] - j[0][2] * j[1][1]) * inv_det,
        ],
        [
            (j[1][2] * j[2][0] - j[1][0] * j[2][2]) * inv_det,
            (j[0][0] * j[2][2] - j[0][2] * j[2][0]) * inv_det,
            (j[0][2] * j[1][0] - j[0][0] * j[1][2]) * inv_det,
        ],
        [
            (j[1][0] * j[2][1] - j[1][1] * j[2][0]) * inv_det,
            (j[0][1] * j[2][0] - j[0][0] * j[2][1]) * inv_det,
            (j[0][0] * j[1][1] - j[0][1] * j[1][0]) * inv_det,
        ],
    ];
    (det, inv)
}

fn element_operator<T: Real>(mesh: &Mesh<T>, e: usize) -> Result<GradOperator<T>> {
    let el = &mesh.elements[e];
    let (dn, weight) = reference_gradients::<T>(el.kind);
    // J_ij = ∂X_i/∂ξ_j
    let mut jac = [[T::zero(); 3]; 3];
    for (a, &node) in el.nodes.iter().enumerate() {
        let x = &mesh.nodes[node];
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] = jac[i][j] + x[i] * dn[a][j];
            }
        }
    }
    let (det, inv) = invert3(&jac);
    if !(det > T::zero()) || !det.is_finite() {
        return Err(Error::InvertedElement { element: e, det_j: det.as_f64() });
    }
    // ∂φ_a/∂X_j = Σ_k ∂φ_a/∂ξ_k (J⁻¹)_kj
    let grads = dn
        .iter()
        .map(|d| {
            let mut g = [T::zero(); 3];
            for (j, gj) in g.iter_mut().enumerate() {
                *gj = d[0] * inv[0][j] + d[1] * inv[1][j] + d[2] * inv[2][j];
            }
            g
        })
        .collect();
    Ok(GradOperator {
        element: e,
        nodes: el.nodes.clone(),
        grads,
        measure: weight * det,
        material: mesh.material[e],
    })
}

/// One-point quadrature gradient operators for every element.
pub fn build_grad_operators<T: Real>(mesh: &Mesh<T>) -> Result<Vec<GradOperator<T>>> {
    mesh.validate()?;
    (0..mesh.element_count()).into_par_iter().map(|e| element_operator(mesh, e)).collect()
}

impl<T: Real> GradOperator<T> {
    /// Displacement gradient `G_ij = ∂u_i/∂X_j` from global nodal values.
    pub fn displacement_gradient(&self, nodal_u: &[[T; 3]]) -> [[T; 3]; 3] {
        let mut g = [[T::zero(); 3]; 3];
        for (a, &n) in self.nodes.iter().enumerate() {
            let u = &nodal_u[n];
            let d = &self.grads[a];
            for i in 0..3 {
                for j in 0..3 {
                    g[i][j] = g[i][j] + u[i] * d[j];
                }
            }
        }
        g
    }

    /// Pulls a symmetric strain adjoint back to per-node forces:
    /// `out[a][i] = scale · Σ_j g_ij ∂φ_a/∂X_j`.
    pub fn scatter_adjoint(&self, g: &SymTensor2<T>, scale: T) -> Vec<[T; 3]> {
        let m = g.to_matrix();
        self.grads
            .iter()
            .map(|d| {
                let mut f = [T::zero(); 3];
                for (i, fi) in f.iter_mut().enumerate() {
                    *fi = scale * (m[i][0] * d[0] + m[i][1] * d[1] + m[i][2] * d[2]);
                }
                f
            })
            .collect()
    }
}

/// Small strain ε = ½(G + Gᵀ) at the element's quadrature point.
pub fn strain_at_qp<T: Real>(op: &GradOperator<T>, nodal_u: &[[T; 3]]) -> SymTensor2<T> {
    SymTensor2::sym_part(&op.displacement_gradient(nodal_u))
}
