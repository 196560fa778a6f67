//! Hex8/Tet4 meshes, named node/element/side sets and boundary facets.

mod generate;
mod io;
mod shape;

use std::collections::{BTreeMap, HashMap, HashSet};

pub use generate::{generate_plate_with_hole, generate_structured_box, split_hex_to_tets};
pub use io::{parse_mesh, read_mesh, write_mesh};
pub use shape::{build_grad_operators, strain_at_qp, GradOperator};

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ElementKind {
    Hex8,
    Tet4,
}

impl ElementKind {
    pub fn node_count(self) -> usize {
        match self {
            ElementKind::Hex8 => 8,
            ElementKind::Tet4 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ElementKind::Hex8 => "hex8",
            ElementKind::Tet4 => "tet4",
        }
    }

    /// Local faces, each ordered so the right-hand normal points outward.
    pub fn faces(self) -> &'static [&'static [usize]] {
        match self {
            ElementKind::Hex8 => &[
                &[0, 3, 2, 1],
                &[4, 5, 6, 7],
                &[0, 1, 5, 4],
                &[1, 2, 6, 5],
                &[2, 3, 7, 6],
                &[3, 0, 4, 7],
            ],
            ElementKind::Tet4 => &[&[0, 2, 1], &[0, 1, 3], &[1, 2, 3], &[0, 3, 2]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Element {
    pub kind: ElementKind,
    pub nodes: Vec<usize>,
}

/// A boundary face: `(element index, local face id)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FacetRef {
    pub element: usize,
    pub face: usize,
}

#[derive(Clone, Debug)]
pub struct Mesh<T> {
    pub nodes: Vec<[T; 3]>,
    pub elements: Vec<Element>,
    pub node_sets: BTreeMap<String, Vec<usize>>,
    pub elem_sets: BTreeMap<String, Vec<usize>>,
    pub side_sets: BTreeMap<String, Vec<FacetRef>>,
    /// Material id per element.
    pub material: Vec<usize>,
}

/// Geometry of one facet under one-point (centroid) quadrature.
#[derive(Clone, Debug)]
pub struct FacetGeometry<T> {
    pub nodes: Vec<usize>,
    pub centroid: [T; 3],
    /// Unit outward normal.
    pub normal: [T; 3],
    pub area: T,
}

fn sub<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross<T: Real>(a: &[T; 3], b: &[T; 3]) -> [T; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

impl<T: Real> Mesh<T> {
    pub fn new(nodes: Vec<[T; 3]>, elements: Vec<Element>) -> Result<Self> {
        let material = vec![0; elements.len()];
        let mesh = Self {
            nodes,
            elements,
            node_sets: BTreeMap::new(),
            elem_sets: BTreeMap::new(),
            side_sets: BTreeMap::new(),
            material,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn element_count(&self) -> usize {
        self.elements.len()
    }

    /// Index checks. Jacobian positivity is checked when gradient
    /// operators are built.
    pub fn validate(&self) -> Result<()> {
        let n = self.nodes.len();
        for (e, el) in self.elements.iter().enumerate() {
            if el.nodes.len() != el.kind.node_count() {
                return Err(Error::Mesh(format!(
                    "element {e}: {} expects {} nodes, got {}",
                    el.kind.name(),
                    el.kind.node_count(),
                    el.nodes.len()
                )));
            }
            if let Some(&bad) = el.nodes.iter().find(|&&i| i >= n) {
                return Err(Error::Mesh(format!("element {e} references node {bad} of {n}")));
            }
        }
        for (name, set) in &self.node_sets {
            if let Some(&bad) = set.iter().find(|&&i| i >= n) {
                return Err(Error::Mesh(format!("nodeset {name} references node {bad} of {n}")));
            }
        }
        let m = self.elements.len();
        for (name, set) in &self.elem_sets {
            if let Some(&bad) = set.iter().find(|&&i| i >= m) {
                return Err(Error::Mesh(format!("elemset {name} references element {bad} of {m}")));
            }
        }
        for (name, set) in &self.side_sets {
            for f in set {
                if f.element >= m {
                    return Err(Error::Mesh(format!(
                        "sideset {name} references element {} of {m}",
                        f.element
                    )));
                }
                let nf = self.elements[f.element].kind.faces().len();
                if f.face >= nf {
                    return Err(Error::Mesh(format!(
                        "sideset {name}: element {} has no face {}",
                        f.element, f.face
                    )));
                }
            }
        }
        if self.material.len() != m {
            return Err(Error::Mesh("material assignment length mismatch".into()));
        }
        Ok(())
    }

    pub fn node_set(&self, name: &str) -> Result<&[usize]> {
        self.node_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Mesh(format!("unknown nodeset '{name}'")))
    }

    pub fn elem_set(&self, name: &str) -> Result<&[usize]> {
        self.elem_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Mesh(format!("unknown elemset '{name}'")))
    }

    pub fn side_set(&self, name: &str) -> Result<&[FacetRef]> {
        self.side_sets
            .get(name)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::Mesh(format!("unknown sideset '{name}'")))
    }

    /// Assigns material `id` to every element of the named set.
    pub fn assign_material(&mut self, elemset: &str, id: usize) -> Result<()> {
        let set = self.elem_set(elemset)?.to_vec();
        for e in set {
            self.material[e] = id;
        }
        Ok(())
    }

    pub fn element_centroid(&self, e: usize) -> [T; 3] {
        let el = &self.elements[e];
        let mut c = [T::zero(); 3];
        for &n in &el.nodes {
            for d in 0..3 {
                c[d] = c[d] + self.nodes[n][d];
            }
        }
        let k = T::of_usize(el.nodes.len());
        c.map(|v| v / k)
    }

    /// Axis-aligned bounding box `(min, max)`.
    pub fn bounds(&self) -> ([T; 3], [T; 3]) {
        let mut lo = [T::infinity(); 3];
        let mut hi = [T::neg_infinity(); 3];
        for p in &self.nodes {
            for d in 0..3 {
                lo[d] = lo[d].min(p[d]);
                hi[d] = hi[d].max(p[d]);
            }
        }
        (lo, hi)
    }

    pub fn facet_nodes(&self, f: FacetRef) -> Vec<usize> {
        let el = &self.elements[f.element];
        el.kind.faces()[f.face].iter().map(|&l| el.nodes[l]).collect()
    }

    pub fn facet_geometry(&self, f: FacetRef) -> FacetGeometry<T> {
        let nodes = self.facet_nodes(f);
        let p: Vec<[T; 3]> = nodes.iter().map(|&n| self.nodes[n]).collect();
        let k = T::of_usize(p.len());
        let mut centroid = [T::zero(); 3];
        for q in &p {
            for d in 0..3 {
                centroid[d] = centroid[d] + q[d] / k;
            }
        }
        // Triangle: half the edge cross product. Quad: half the diagonal
        // cross product (exact for planar quads).
        let n = if p.len() == 3 {
            cross(&sub(&p[1], &p[0]), &sub(&p[2], &p[0]))
        } else {
            cross(&sub(&p[2], &p[0]), &sub(&p[3], &p[1]))
        };
        let len = (n[0] * n[0] + n[1] * n[1] + n[2] * n[2]).sqrt();
        let area = len * T::lit(0.5);
        let normal = if len > T::zero() { n.map(|v| v / len) } else { n };
        FacetGeometry { nodes, centroid, normal, area }
    }

    /// Element faces not shared with another element.
    pub fn boundary_facets(&self) -> Vec<FacetRef> {
        let mut count: HashMap<Vec<usize>, usize> = HashMap::new();
        for (e, el) in self.elements.iter().enumerate() {
            for f in 0..el.kind.faces().len() {
                let mut key = self.facet_nodes(FacetRef { element: e, face: f });
                key.sort_unstable();
                *count.entry(key).or_default() += 1;
            }
        }
        let mut out = Vec::new();
        for (e, el) in self.elements.iter().enumerate() {
            for f in 0..el.kind.faces().len() {
                let r = FacetRef { element: e, face: f };
                let mut key = self.facet_nodes(r);
                key.sort_unstable();
                if count[&key] == 1 {
                    out.push(r);
                }
            }
        }
        out
    }

    /// Boundary facets whose nodes all belong to the named node set.
    pub fn extract_boundary_facets(&self, node_set: &str) -> Result<Vec<FacetRef>> {
        let set: HashSet<usize> = self.node_set(node_set)?.iter().copied().collect();
        Ok(self
            .boundary_facets()
            .into_iter()
            .filter(|&f| self.facet_nodes(f).iter().all(|n| set.contains(n)))
            .collect())
    }

    /// Converts the coordinate type.
    pub fn cast<U: Real>(&self) -> Mesh<U> {
        Mesh {
            nodes: self.nodes.iter().map(|p| p.map(|v| U::lit(v.as_f64()))).collect(),
            elements: self.elements.clone(),
            node_sets: self.node_sets.clone(),
            elem_sets: self.elem_sets.clone(),
            side_sets: self.side_sets.clone(),
            material: self.material.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_tet() -> Mesh<f64> {
        let nodes: Vec<[f64; 3]> = vec![[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
        let mut m = Mesh::new(nodes, vec![Element { kind: ElementKind::Tet4, nodes: vec![0, 1, 2, 3] }]).unwrap();
        m.node_sets.insert("z0".into(), vec![0, 1, 2]);
        m
    }

    #[test]
    fn tet_face_extraction() {
        let m = unit_tet();
        let f = m.extract_boundary_facets("z0").unwrap();
        assert_eq!(f.len(), 1);
        let g = m.facet_geometry(f[0]);
        assert!((g.area - 0.5).abs() < 1e-15);
        assert_eq!(g.normal, [0.0, 0.0, -1.0]);
    }

    #[test]
    fn facet_normals_point_outward() {
        let mut m = generate_structured_box::<f64>([2.0, 1.0, 1.5], [2, 3, 2]).unwrap();
        m.nodes[9][0] += 0.05;
        for mesh in [m.clone(), split_hex_to_tets(&m).unwrap()] {
            let facets = mesh.boundary_facets();
            assert!(!facets.is_empty());
            for f in facets {
                let g = mesh.facet_geometry(f);
                let c = mesh.element_centroid(f.element);
                let d: f64 = (0..3).map(|k| g.normal[k] * (g.centroid[k] - c[k])).sum();
                assert!(d > 0.0, "{f:?}");
            }
        }
    }

    #[test]
    fn dangling_index_rejected() {
        let nodes: Vec<[f64; 3]> = vec![[0.0; 3]; 8];
        let el = Element { kind: ElementKind::Hex8, nodes: vec![0, 1, 2, 3, 4, 5, 6, 99] };
        assert!(matches!(Mesh::new(nodes, vec![el]), Err(Error::Mesh(_))));
    }

    #[test]
    fn box_boundary_facet_count() {
        let m = generate_structured_box::<f64>([4.0, 4.0, 1.0], [2, 2, 1]).unwrap();
        // 2*(2*2) z-faces + 4 sides * 2 faces each.
        assert_eq!(m.boundary_facets().len(), 16);
        assert_eq!(m.extract_boundary_facets("x_max").unwrap().len(), 2);
    }
}
