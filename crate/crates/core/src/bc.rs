//! Hard Dirichlet enforcement `u = ũ ∘ m + u₀`, tractions and load programs.

use std::fmt;

use crate::error::{Error, Result};
use crate::mesh::{FacetGeometry, Mesh};
use crate::scalar::Real;

const CONFLICT_TOL: f64 = 1e-12;

/// Prescribed value as a function of the reference position, before scaling
/// by the load factor.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ValuePattern<T> {
    Const(T),
    /// `coef · X + offset`
    Affine { coef: [T; 3], offset: T },
}

impl<T: Real> ValuePattern<T> {
    pub fn eval(&self, x: &[T; 3]) -> T {
        match self {
            ValuePattern::Const(v) => *v,
            ValuePattern::Affine { coef, offset } => *offset + coef[0] * x[0] + coef[1] * x[1] + coef[2] * x[2],
        }
    }

    fn as_affine(&self) -> ([T; 3], T) {
        match self {
            ValuePattern::Const(v) => ([T::zero(); 3], *v),
            ValuePattern::Affine { coef, offset } => (*coef, *offset),
        }
    }

    /// Parses `const <v>` or `affine <expr>`, where `<expr>` is a sum of
    /// terms such as `0.25*y`, `y/4`, `-x`, `2`.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("const") {
            let v: f64 = rest.trim().parse().map_err(|_| format!("invalid constant '{}'", rest.trim()))?;
            return Ok(ValuePattern::Const(T::lit(v)));
        }
        if let Some(rest) = s.strip_prefix("affine") {
            let (coef, offset) = parse_affine(rest)?;
            return Ok(ValuePattern::Affine { coef: coef.map(T::lit), offset: T::lit(offset) });
        }
        Err(format!("expected 'const <v>' or 'affine <expr>', got '{s}'"))
    }
}

impl<T: Real> fmt::Display for ValuePattern<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ValuePattern::Const(v) => write!(f, "const {:?}", v.as_f64()),
            ValuePattern::Affine { coef, offset } => {
                write!(f, "affine {:?}*x + {:?}*y + {:?}*z + {:?}", coef[0].as_f64(), coef[1].as_f64(), coef[2].as_f64(), offset.as_f64())
            }
        }
    }
}

fn parse_affine(expr: &str) -> std::result::Result<([f64; 3], f64), String> {
    let mut coef = [0.0; 3];
    let mut offset = 0.0;
    let compact: String = expr.chars().filter(|c| !c.is_whitespace()).collect();
    if compact.is_empty() {
        return Err("empty affine expression".into());
    }
    // Split into signed terms, keeping exponent signs such as 1e-3 intact.
    let chars: Vec<char> = compact.chars().collect();
    let mut terms = Vec::new();
    let mut start = 0;
    for i in 1..chars.len() {
        if (chars[i] == '+' || chars[i] == '-') && !matches!(chars[i - 1], 'e' | 'E' | '*' | '/' | '+' | '-') {
            terms.push(chars[start..i].iter().collect::<String>());
            start = i;
        }
    }
    terms.push(chars[start..].iter().collect());
    for term in terms {
        let (sign, body) = match term.strip_prefix('-') {
            Some(b) => (-1.0, b),
            None => (1.0, term.strip_prefix('+').unwrap_or(&term)),
        };
        let mut value = sign;
        let mut var: Option<usize> = None;
        let mut op = '*';
        let mut factor = String::new();
        let flush = |factor: &str, op: char, value: &mut f64, var: &mut Option<usize>| -> std::result::Result<(), String> {
            let axis = match factor {
                "x" => Some(0),
                "y" => Some(1),
                "z" => Some(2),
                _ => None,
            };
            match axis {
                Some(a) => {
                    if op == '/' || var.is_some() {
                        return Err(format!("term '{term}' is not affine"));
                    }
                    *var = Some(a);
                }
                None => {
                    let v: f64 = factor.parse().map_err(|_| format!("invalid factor '{factor}' in '{term}'"))?;
                    if op == '*' {
                        *value *= v;
                    } else if v == 0.0 {
                        return Err(format!("division by zero in '{term}'"));
                    } else {
                        *value /= v;
                    }
                }
            }
            Ok(())
        };
        for c in body.chars() {
            if c == '*' || c == '/' {
                flush(&factor, op, &mut value, &mut var)?;
                factor.clear();
                op = c;
            } else {
                factor.push(c);
            }
        }
        flush(&factor, op, &mut value, &mut var)?;
        match var {
            Some(a) => coef[a] += value,
            None => offset += value,
        }
    }
    Ok((coef, offset))
}

#[derive(Clone, Debug, PartialEq)]
pub struct DirichletSpec<T> {
    pub name: String,
    pub node_set: String,
    pub axis: usize,
    pub value: ValuePattern<T>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TractionSpec<T> {
    pub name: String,
    pub side_set: String,
    /// MPa, scaled by the load factor.
    pub vector: [T; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct LoadProgram<T> {
    pub factors: Vec<T>,
}

impl<T: Real> LoadProgram<T> {
    pub fn new(factors: Vec<T>) -> Result<Self> {
        if factors.is_empty() {
            return Err(Error::Boundary("load program needs at least one step".into()));
        }
        if let Some(k) = factors.iter().position(|f| !f.is_finite()) {
            return Err(Error::Boundary(format!("load factor of step {} is not finite", k + 1)));
        }
        Ok(Self { factors })
    }

    pub fn len(&self) -> usize {
        self.factors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.factors.is_empty()
    }
}

/// How `u₀` is defined away from the constrained nodes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Lift {
    /// `u₀ = 0` at unconstrained node-DOFs.
    #[default]
    Nodal,
    /// Each axis's (single) prescribed pattern is evaluated at every node, so
    /// `u₀` is the pattern's extension over the whole domain.
    Extend,
}

impl Lift {
    pub fn name(self) -> &'static str {
        match self {
            Lift::Nodal => "nodal",
            Lift::Extend => "extend",
        }
    }
}

/// Per-node mask `m ∈ {0,1}³` and offset `u₀` for one load step.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundaryFields<T> {
    pub mask: Vec<[T; 3]>,
    pub offset: Vec<[T; 3]>,
}

impl<T: Real> BoundaryFields<T> {
    pub fn free(n_nodes: usize) -> Self {
        Self { mask: vec![[T::one(); 3]; n_nodes], offset: vec![[T::zero(); 3]; n_nodes] }
    }

    /// `m ∘ ũ + u₀`.
    pub fn apply(&self, raw: &[[T; 3]]) -> Vec<[T; 3]> {
        raw.iter()
            .zip(self.mask.iter().zip(&self.offset))
            .map(|(u, (m, o))| std::array::from_fn(|d| m[d] * u[d] + o[d]))
            .collect()
    }

    /// Pulls a nodal adjoint back through `diag(m)` in place.
    pub fn mask_adjoint(&self, g: &mut [[T; 3]]) {
        for (gi, m) in g.iter_mut().zip(&self.mask) {
            for d in 0..3 {
                gi[d] = gi[d] * m[d];
            }
        }
    }

    pub fn free_dof_count(&self) -> usize {
        self.mask.iter().flatten().filter(|m| **m != T::zero()).count()
    }
}

/// Builds mask and offset for the given load factor.
pub fn build_mask_offset<T: Real>(
    mesh: &Mesh<T>,
    specs: &[DirichletSpec<T>],
    factor: T,
    lift: Lift,
) -> Result<BoundaryFields<T>> {
    let n = mesh.node_count();
    let mut fields = BoundaryFields::free(n);
    let mut owner: Vec<[Option<usize>; 3]> = vec![[None; 3]; n];
    for (k, spec) in specs.iter().enumerate() {
        if spec.axis > 2 {
            return Err(Error::Boundary(format!("dirichlet '{}': axis {} out of range", spec.name, spec.axis)));
        }
        let set = mesh
            .node_set(&spec.node_set)
            .map_err(|_| Error::Boundary(format!("dirichlet '{}': unknown node set '{}'", spec.name, spec.node_set)))?;
        let a = spec.axis;
        for &node in set {
            let v = factor * spec.value.eval(&mesh.nodes[node]);
            if let Some(prev) = owner[node][a] {
                let old: T = fields.offset[node][a];
                let tol = T::lit(CONFLICT_TOL) * T::one().max(old.abs()).max(v.abs());
                if (old - v).abs() > tol {
                    return Err(Error::Boundary(format!(
                        "node {node} axis {a}: '{}' prescribes {} but '{}' prescribes {}",
                        specs[prev].name,
                        old.as_f64(),
                        spec.name,
                        v.as_f64()
                    )));
                }
                continue;
            }
            owner[node][a] = Some(k);
            fields.mask[node][a] = T::zero();
            fields.offset[node][a] = v;
        }
    }
    if lift == Lift::Extend {
        for a in 0..3 {
            let mut pattern: Option<&DirichletSpec<T>> = None;
            for spec in specs.iter().filter(|s| s.axis == a) {
                match pattern {
                    None => pattern = Some(spec),
                    Some(p) if p.value.as_affine() == spec.value.as_affine() => {}
                    Some(p) => {
                        return Err(Error::Boundary(format!(
                            "extend lift needs a single pattern per axis; '{}' and '{}' differ on axis {a}",
                            p.name, spec.name
                        )))
                    }
                }
            }
            if let Some(p) = pattern {
                for (node, x) in mesh.nodes.iter().enumerate() {
                    if owner[node][a].is_none() {
                        fields.offset[node][a] = factor * p.value.eval(x);
                    }
                }
            }
        }
    }
    Ok(fields)
}

/// Traction resolved onto facet geometry.
#[derive(Clone, Debug)]
pub struct LoadedFacets<T> {
    pub facets: Vec<FacetGeometry<T>>,
    pub vector: [T; 3],
}

pub fn resolve_tractions<T: Real>(mesh: &Mesh<T>, specs: &[TractionSpec<T>]) -> Result<Vec<LoadedFacets<T>>> {
    specs
        .iter()
        .map(|s| {
            let set = mesh
                .side_set(&s.side_set)
                .map_err(|_| Error::Boundary(format!("traction '{}': unknown side set '{}'", s.name, s.side_set)))?;
            Ok(LoadedFacets { facets: set.iter().map(|f| mesh.facet_geometry(*f)).collect(), vector: s.vector })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_structured_box;
    use proptest::prelude::*;

    fn shear_specs() -> Vec<DirichletSpec<f64>> {
        let mut v = Vec::new();
        for side in ["x_min", "x_max", "y_min", "y_max"] {
            v.push(DirichletSpec {
                name: format!("ux_{side}"),
                node_set: side.into(),
                axis: 0,
                value: ValuePattern::parse("affine y/4").unwrap(),
            });
            v.push(DirichletSpec { name: format!("uy_{side}"), node_set: side.into(), axis: 1, value: ValuePattern::Const(0.0) });
        }
        for side in ["z_min", "z_max"] {
            v.push(DirichletSpec { name: format!("uz_{side}"), node_set: side.into(), axis: 2, value: ValuePattern::Const(0.0) });
        }
        v
    }

    #[test]
    fn no_constraints_is_identity() {
        let m = generate_structured_box::<f64>([1.0; 3], [2, 2, 2]).unwrap();
        let f = build_mask_offset(&m, &[], 1.0, Lift::Nodal).unwrap();
        assert!(f.mask.iter().all(|v| *v == [1.0; 3]));
        assert!(f.offset.iter().all(|v| *v == [0.0; 3]));
        let raw: Vec<[f64; 3]> = (0..m.node_count()).map(|i| [i as f64, 1.0, -2.0]).collect();
        assert_eq!(f.apply(&raw), raw);
    }

    #[test]
    fn shear_program_at_half() {
        let m = generate_structured_box::<f64>([4.0, 4.0, 1.0], [4, 4, 1]).unwrap();
        let f = build_mask_offset(&m, &shear_specs(), 0.5, Lift::Nodal).unwrap();
        for (i, x) in m.nodes.iter().enumerate() {
            if x[1] == 4.0 {
                assert_eq!(f.offset[i][0], 0.5);
                assert_eq!(f.mask[i][0], 0.0);
            }
            assert_eq!(f.mask[i][2], 0.0);
            assert_eq!(f.offset[i][2], 0.0);
        }
        // 3×3 interior columns, two z layers, x and y free.
        assert_eq!(f.free_dof_count(), 9 * 2 * 2);
    }

    #[test]
    fn extend_lift_fills_interior() {
        let m = generate_structured_box::<f64>([4.0, 4.0, 1.0], [4, 4, 1]).unwrap();
        let f = build_mask_offset(&m, &shear_specs(), 0.5, Lift::Extend).unwrap();
        for (i, x) in m.nodes.iter().enumerate() {
            assert_eq!(f.offset[i], [0.5 * x[1] / 4.0, 0.0, 0.0]);
        }
        let mut bad = shear_specs();
        bad[0].value = ValuePattern::Const(1.0);
        assert!(build_mask_offset(&m, &bad, 0.5, Lift::Extend).is_err());
    }

    #[test]
    fn mixed_node_apply() {
        let f = BoundaryFields { mask: vec![[0.0, 1.0, 1.0]], offset: vec![[0.3, 0.0, 0.0]] };
        assert_eq!(f.apply(&[[9.0, 2.0, 5.0]]), vec![[0.3, 2.0, 5.0]]);
        let mut g = vec![[4.0, 5.0, 6.0]];
        f.mask_adjoint(&mut g);
        assert_eq!(g, vec![[0.0, 5.0, 6.0]]);
    }

    #[test]
    fn conflicting_constraints_rejected() {
        let m = generate_structured_box::<f64>([1.0; 3], [1, 1, 1]).unwrap();
        let specs = vec![
            DirichletSpec { name: "a".into(), node_set: "x_min".into(), axis: 0, value: ValuePattern::Const(0.0) },
            DirichletSpec { name: "b".into(), node_set: "y_min".into(), axis: 0, value: ValuePattern::Const(0.1) },
        ];
        assert!(matches!(build_mask_offset(&m, &specs, 1.0, Lift::Nodal), Err(Error::Boundary(_))));
        // Agreeing overlap is fine.
        let ok = vec![specs[0].clone(), DirichletSpec { value: ValuePattern::Const(0.0), ..specs[1].clone() }];
        assert!(build_mask_offset(&m, &ok, 1.0, Lift::Nodal).is_ok());
        let missing = vec![DirichletSpec { node_set: "nope".into(), ..specs[0].clone() }];
        assert!(build_mask_offset(&m, &missing, 1.0, Lift::Nodal).is_err());
    }

    #[test]
    fn affine_parser() {
        let p = |s: &str| ValuePattern::<f64>::parse(s).unwrap();
        assert_eq!(p("affine y/4"), ValuePattern::Affine { coef: [0.0, 0.25, 0.0], offset: 0.0 });
        assert_eq!(
            p("affine 0.25*y + 0.1*x - 2"),
            ValuePattern::Affine { coef: [0.1, 0.25, 0.0], offset: -2.0 }
        );
        assert_eq!(p("affine -z + 1e-3"), ValuePattern::Affine { coef: [0.0, 0.0, -1.0], offset: 1e-3 });
        assert_eq!(p("affine 2*x*3"), ValuePattern::Affine { coef: [6.0, 0.0, 0.0], offset: 0.0 });
        assert_eq!(p("const -0.5"), ValuePattern::Const(-0.5));
        assert!(ValuePattern::<f64>::parse("affine x*y").is_err());
        assert!(ValuePattern::<f64>::parse("affine 1/x").is_err());
        assert!(ValuePattern::<f64>::parse("affine 1/0").is_err());
        assert!(ValuePattern::<f64>::parse("cubic x").is_err());
        let printed = p("affine 0.25*y - 2").to_string();
        assert_eq!(ValuePattern::<f64>::parse(&printed).unwrap(), p("affine 0.25*y - 2"));
    }

    #[test]
    fn load_program_validation() {
        assert!(LoadProgram::<f64>::new(vec![]).is_err());
        assert!(LoadProgram::new(vec![0.5, f64::NAN]).is_err());
        assert_eq!(LoadProgram::new(vec![0.5]).unwrap().len(), 1);
    }

    #[test]
    fn tractions_resolve_to_facets() {
        let m = generate_structured_box::<f64>([1.0; 3], [2, 2, 1]).unwrap();
        let t = resolve_tractions(&m, &[TractionSpec { name: "t".into(), side_set: "x_max".into(), vector: [1.0, 0.0, 0.0] }]).unwrap();
        assert_eq!(t[0].facets.len(), 2);
        let area: f64 = t[0].facets.iter().map(|f| f.area).sum();
        assert!((area - 1.0).abs() < 1e-14);
        assert!(resolve_tractions(&m, &[TractionSpec { name: "t".into(), side_set: "q".into(), vector: [0.0; 3] }]).is_err());
    }

    proptest! {
        #[test]
        fn constraints_hold_exactly(raw in proptest::collection::vec(proptest::array::uniform3(-1e3f64..1e3), 18), f in -2.0f64..2.0) {
            let m = generate_structured_box::<f64>([4.0, 4.0, 1.0], [2, 2, 1]).unwrap();
            let specs = shear_specs();
            let fields = build_mask_offset(&m, &specs, f, Lift::Nodal).unwrap();
            let u = fields.apply(&raw);
            for s in &specs {
                for &n in m.node_set(&s.node_set).unwrap() {
                    prop_assert_eq!(u[n][s.axis], f * s.value.eval(&m.nodes[n]));
                }
            }
        }
    }
}
