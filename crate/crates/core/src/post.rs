//! Legacy ASCII VTK output (with a minimal reader), stress-strain curve
//! CSV, and error metrics against a reference field.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::mesh::{ElementKind, Mesh};
use crate::scalar::Real;
use crate::solver::StepRecord;

pub const VTK_HEXAHEDRON: u8 = 12;
pub const VTK_TETRA: u8 = 10;

pub fn vtk_cell_type(kind: ElementKind) -> u8 {
    match kind {
        ElementKind::Hex8 => VTK_HEXAHEDRON,
        ElementKind::Tet4 => VTK_TETRA,
    }
}

/// Arrays of a legacy VTK unstructured grid as written by [`write_vtk`].
#[derive(Clone, Debug, PartialEq, Default)]
pub struct VtkData {
    pub points: Vec<[f64; 3]>,
    pub cells: Vec<Vec<usize>>,
    pub cell_types: Vec<u8>,
    pub displacement: Vec<[f64; 3]>,
    pub mises: Vec<f64>,
    pub peeq: Vec<f64>,
    /// Full 3×3 stress per cell, row-major.
    pub stress: Vec<[f64; 9]>,
}

impl VtkData {
    pub fn from_record<T: Real>(mesh: &Mesh<T>, record: &StepRecord<T>) -> Result<Self> {
        if record.displacement.len() != mesh.node_count() || record.states.len() != mesh.element_count() {
            return Err(Error::Config("record does not match mesh dimensions".into()));
        }
        let f3 = |v: &[T; 3]| v.map(|x| x.as_f64());
        Ok(Self {
            points: mesh.nodes.iter().map(f3).collect(),
            cells: mesh.elements.iter().map(|e| e.nodes.clone()).collect(),
            cell_types: mesh.elements.iter().map(|e| vtk_cell_type(e.kind)).collect(),
            displacement: record.displacement.iter().map(f3).collect(),
            mises: record.mises().iter().map(|v| v.as_f64()).collect(),
            peeq: record.peeq().iter().map(|v| v.as_f64()).collect(),
            stress: record
                .states
                .iter()
                .map(|s| {
                    let m = s.sigma.to_matrix();
                    std::array::from_fn(|k| m[k / 3][k % 3].as_f64())
                })
                .collect(),
        })
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# vtk DataFile Version 2.0\ndemplast\nASCII\nDATASET UNSTRUCTURED_GRID");
        let _ = writeln!(s, "POINTS {} double", self.points.len());
        for p in &self.points {
            let _ = writeln!(s, "{:?} {:?} {:?}", p[0], p[1], p[2]);
        }
        let size: usize = self.cells.iter().map(|c| c.len() + 1).sum();
        let _ = writeln!(s, "CELLS {} {}", self.cells.len(), size);
        for c in &self.cells {
            let idx: Vec<String> = c.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{} {}", c.len(), idx.join(" "));
        }
        let _ = writeln!(s, "CELL_TYPES {}", self.cell_types.len());
        for t in &self.cell_types {
            let _ = writeln!(s, "{t}");
        }
        let _ = writeln!(s, "POINT_DATA {}\nVECTORS displacement double", self.points.len());
        for u in &self.displacement {
            let _ = writeln!(s, "{:?} {:?} {:?}", u[0], u[1], u[2]);
        }
        let _ = writeln!(s, "CELL_DATA {}", self.cells.len());
        for (name, data) in [("mises", &self.mises), ("peeq", &self.peeq)] {
            let _ = writeln!(s, "SCALARS {name} double 1\nLOOKUP_TABLE default");
            for v in data {
                let _ = writeln!(s, "{v:?}");
            }
        }
        let _ = writeln!(s, "TENSORS stress double");
        for t in &self.stress {
            for row in t.chunks(3) {
                let _ = writeln!(s, "{:?} {:?} {:?}", row[0], row[1], row[2]);
            }
        }
        s
    }
}

pub fn write_vtk<T: Real>(mesh: &Mesh<T>, record: &StepRecord<T>, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let text = VtkData::from_record(mesh, record)?.to_text();
    std::fs::write(path, text).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Parses the subset of legacy ASCII VTK that [`write_vtk`] produces.
pub fn parse_vtk(text: &str, path: &Path) -> Result<VtkData> {
    let mut tokens = text
        .lines()
        .enumerate()
        .skip(4)
        .flat_map(|(i, l)| l.split_whitespace().map(move |t| (i + 1, t)));
    let err = |line: usize, m: String| Error::parse(path, line, m);
    let mut next = |what: &str| -> Result<(usize, &str)> {
        tokens.next().ok_or_else(|| Error::parse(path, text.lines().count(), format!("unexpected end of file, expected {what}")))
    };
    let mut data = VtkData::default();
    macro_rules! num {
        ($ty:ty, $what:expr) => {{
            let (l, t) = next($what)?;
            t.parse::<$ty>().map_err(|_| err(l, format!("invalid {} '{}'", $what, t)))?
        }};
    }
    while let Ok((line, kw)) = next("section") {
        match kw {
            "POINTS" => {
                let n = num!(usize, "point count");
                next("type")?;
                data.points = (0..n).map(|_| Ok([num!(f64, "coordinate"), num!(f64, "coordinate"), num!(f64, "coordinate")])).collect::<Result<_>>()?;
            }
            "CELLS" => {
                let n = num!(usize, "cell count");
                let _size = num!(usize, "cell list size");
                for _ in 0..n {
                    let k = num!(usize, "cell size");
                    data.cells.push((0..k).map(|_| Ok(num!(usize, "node index"))).collect::<Result<_>>()?);
                }
            }
            "CELL_TYPES" => {
                let n = num!(usize, "cell type count");
                data.cell_types = (0..n).map(|_| Ok(num!(u8, "cell type"))).collect::<Result<_>>()?;
            }
            "POINT_DATA" | "CELL_DATA" => {
                num!(usize, "data count");
            }
            "VECTORS" => {
                let (_, name) = next("name")?;
                next("type")?;
                if name != "displacement" {
                    return Err(err(line, format!("unexpected vector field '{name}'")));
                }
                data.displacement = (0..data.points.len())
                    .map(|_| Ok([num!(f64, "component"), num!(f64, "component"), num!(f64, "component")]))
                    .collect::<Result<_>>()?;
            }
            "SCALARS" => {
                let (_, name) = next("name")?;
                next("type")?;
                next("components")?;
                next("LOOKUP_TABLE")?;
                next("table name")?;
                let v = (0..data.cells.len()).map(|_| Ok(num!(f64, "value"))).collect::<Result<Vec<_>>>()?;
                match name {
                    "mises" => data.mises = v,
                    "peeq" => data.peeq = v,
                    other => return Err(err(line, format!("unexpected scalar field '{other}'"))),
                }
            }
            "TENSORS" => {
                next("name")?;
                next("type")?;
                data.stress = (0..data.cells.len())
                    .map(|_| {
                        let mut t = [0.0; 9];
                        for v in t.iter_mut() {
                            *v = num!(f64, "component");
                        }
                        Ok(t)
                    })
                    .collect::<Result<_>>()?;
            }
            other => return Err(err(line, format!("unexpected keyword '{other}'"))),
        }
    }
    Ok(data)
}

pub fn read_vtk(path: impl AsRef<Path>) -> Result<VtkData> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_vtk(&text, path)
}

/// Measure-weighted element mean.
pub fn weighted_mean<T: Real>(values: &[T], measures: &[T]) -> T {
    let total: T = measures.iter().copied().sum();
    values.iter().zip(measures).map(|(v, m)| *v * *m).sum::<T>() / total
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurveRow<T> {
    pub step: usize,
    /// Mean engineering shear strain `2ε₁₂`.
    pub gamma: T,
    /// Mean `σ₁₂`.
    pub tau: T,
    pub peeq: T,
}

/// Volume-averaged shear response per step.
pub fn shear_curve<T: Real>(records: &[StepRecord<T>], strains: &[Vec<crate::tensor::SymTensor2<T>>], measures: &[T]) -> Vec<CurveRow<T>> {
    records
        .iter()
        .zip(strains)
        .map(|(r, eps)| {
            let g: Vec<T> = eps.iter().map(|e| e[3] * T::lit(2.0)).collect();
            let tau: Vec<T> = r.states.iter().map(|s| s.sigma[3]).collect();
            CurveRow {
                step: r.step,
                gamma: weighted_mean(&g, measures),
                tau: weighted_mean(&tau, measures),
                peeq: weighted_mean(&r.peeq(), measures),
            }
        })
        .collect()
}

pub fn curve_csv<T: Real>(rows: &[CurveRow<T>]) -> String {
    let mut s = String::from("step,gamma,tau,peeq\n");
    for r in rows {
        let _ = writeln!(s, "{},{:?},{:?},{:?}", r.step, r.gamma.as_f64(), r.tau.as_f64(), r.peeq.as_f64());
    }
    s
}

/// Reference (or test) fields for metrics: nodal displacement and element
/// scalars.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct FieldSet {
    pub displacement: Vec<[f64; 3]>,
    pub mises: Vec<f64>,
    pub peeq: Vec<f64>,
}

impl FieldSet {
    pub fn from_record<T: Real>(r: &StepRecord<T>) -> Self {
        Self {
            displacement: r.displacement.iter().map(|u| u.map(|v| v.as_f64())).collect(),
            mises: r.mises().iter().map(|v| v.as_f64()).collect(),
            peeq: r.peeq().iter().map(|v| v.as_f64()).collect(),
        }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("# reference fields\nnode,ux,uy,uz\n");
        for (i, u) in self.displacement.iter().enumerate() {
            let _ = writeln!(s, "{i},{:?},{:?},{:?}", u[0], u[1], u[2]);
        }
        s.push_str("elem,mises,peeq\n");
        for (i, (m, p)) in self.mises.iter().zip(&self.peeq).enumerate() {
            let _ = writeln!(s, "{i},{m:?},{p:?}");
        }
        s
    }
}

/// Reads `node,ux,uy,uz` and `elem,mises,peeq` sections; ids must be
/// `0..n` in order. Lines starting with `#` are ignored.
pub fn parse_reference_csv(text: &str, path: &Path) -> Result<FieldSet> {
    #[derive(PartialEq)]
    enum Section {
        None,
        Nodes,
        Elems,
    }
    let mut sec = Section::None;
    let mut out = FieldSet::default();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.trim();
        if l.is_empty() || l.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = l.split(',').map(str::trim).collect();
        match cols.as_slice() {
            ["node", "ux", "uy", "uz"] => {
                sec = Section::Nodes;
                continue;
            }
            ["elem", "mises", "peeq"] => {
                sec = Section::Elems;
                continue;
            }
            _ => {}
        }
        let nums = |from: usize| -> Result<Vec<f64>> {
            cols[from..]
                .iter()
                .map(|c| c.parse::<f64>().map_err(|_| Error::parse(path, line, format!("invalid number '{c}'"))))
                .collect()
        };
        let id: usize = cols[0].parse().map_err(|_| Error::parse(path, line, format!("invalid id '{}'", cols[0])))?;
        match sec {
            Section::None => return Err(Error::parse(path, line, "data before a section header")),
            Section::Nodes => {
                if cols.len() != 4 || id != out.displacement.len() {
                    return Err(Error::parse(path, line, "expected 'id,ux,uy,uz' with consecutive ids"));
                }
                let v = nums(1)?;
                out.displacement.push([v[0], v[1], v[2]]);
            }
            Section::Elems => {
                if cols.len() != 3 || id != out.mises.len() {
                    return Err(Error::parse(path, line, "expected 'id,mises,peeq' with consecutive ids"));
                }
                let v = nums(1)?;
                out.mises.push(v[0]);
                out.peeq.push(v[1]);
            }
        }
    }
    Ok(out)
}

pub fn read_reference_csv(path: impl AsRef<Path>) -> Result<FieldSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    parse_reference_csv(&text, path)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Metrics {
    /// Mean absolute difference of each scalar field.
    pub ad_ux: f64,
    pub ad_uy: f64,
    pub ad_uz: f64,
    pub ad_mises: f64,
    pub ad_peeq: f64,
    /// `‖u − u_ref‖₂ / ‖u_ref‖₂ · 100`; `None` when the reference norm is 0.
    pub l2_percent: Option<f64>,
}

fn mean_abs_diff(a: impl Iterator<Item = f64>, b: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for (x, y) in a.zip(b) {
        s += (x - y).abs();
        n += 1;
    }
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn metrics(test: &FieldSet, reference: &FieldSet) -> Result<Metrics> {
    if test.displacement.len() != reference.displacement.len()
        || test.mises.len() != reference.mises.len()
        || test.peeq.len() != reference.peeq.len()
    {
        return Err(Error::Config(format!(
            "reference has {} nodes / {} elements, solution has {} / {}",
            reference.displacement.len(),
            reference.mises.len(),
            test.displacement.len(),
            test.mises.len()
        )));
    }
    let comp = |f: &FieldSet, d: usize| f.displacement.iter().map(move |u| u[d]).collect::<Vec<_>>();
    let ad = |d: usize| mean_abs_diff(comp(test, d).into_iter(), comp(reference, d).into_iter());
    let mut diff2 = 0.0;
    let mut ref2 = 0.0;
    for (a, b) in test.displacement.iter().zip(&reference.displacement) {
        for d in 0..3 {
            diff2 += (a[d] - b[d]).powi(2);
            ref2 += b[d] * b[d];
        }
    }
    Ok(Metrics {
        ad_ux: ad(0),
        ad_uy: ad(1),
        ad_uz: ad(2),
        ad_mises: mean_abs_diff(test.mises.iter().copied(), reference.mises.iter().copied()),
        ad_peeq: mean_abs_diff(test.peeq.iter().copied(), reference.peeq.iter().copied()),
        l2_percent: (ref2 > 0.0).then(|| (diff2 / ref2).sqrt() * 100.0),
    })
}

impl Metrics {
    pub fn to_text(&self) -> String {
        let l2 = match self.l2_percent {
            Some(v) => format!("{v:e}"),
            None => "undefined (zero reference norm)".into(),
        };
        format!(
            "ad_ux = {:e}\nad_uy = {:e}\nad_uz = {:e}\nad_mises = {:e}\nad_peeq = {:e}\nl2_percent = {l2}\n",
            self.ad_ux, self.ad_uy, self.ad_uz, self.ad_mises, self.ad_peeq
        )
    }
}
