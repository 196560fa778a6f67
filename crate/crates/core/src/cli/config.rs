//! Sectioned `key = value` problem description.
//!
//! ```text
//! # comment
//! [mesh]
//! generator = box                  # box | plate_hole | file
//! extents = 4 4 1                  # box
//! divisions = 20 20 1              # box
//! half_width = 4                   # plate_hole (also radius, thickness,
//! n_arc = 6                        #   n_radial, n_z)
//! file = plate.mesh                # file, relative to the config file
//! split_tets = false
//!
//! [elemset.inclusion]
//! box = 1 1 0 3 3 1                # elements whose centroid lies inside
//!
//! [material.matrix]                # materials get ids in file order;
//! mu = 384.62                      # every element starts as material 0
//! kappa = 833.33
//! sigma_y0 = 50
//! H = 500
//! C = 0
//! mode = isotropic                 # isotropic | kinematic
//! elemset = all
//!
//! [network]
//! widths = 3 32 32 3
//! seed = 0
//! normalize = true
//! zero_output = false
//! lift = nodal                     # nodal | extend
//!
//! [optimizer]
//! lr = 0.5
//! lbfgs_memory = 20
//! patience = 10
//! tol = 1e-6
//! max_iters_per_step = 2000
//!
//! [dirichlet.shear_x]
//! nodeset = x_min
//! axis = x                         # x | y | z
//! value = affine y/4               # number | const <v> | affine <expr>
//!
//! [traction.top]
//! sideset = y_max
//! vector = 0 1 0
//!
//! [loadsteps]
//! factors = 0.5 1.0
//!
//! [oracle]
//! waypoints = 0.3 -0.3 0           # engineering shear strain corners
//! substeps = 100
//! ```
//!
//! Lists accept spaces or commas. Unknown sections or keys, duplicates and
//! malformed values are errors carrying the line number.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::bc::{DirichletSpec, Lift, LoadProgram, TractionSpec, ValuePattern};
use crate::error::{Error, Result};
use crate::material::{ElasticConstants, HardeningLaw, HardeningMode, Material};
use crate::mesh::{generate_plate_with_hole, generate_structured_box, read_mesh, split_hex_to_tets, Mesh};
use crate::network::{InputScaling, Network};
use crate::solver::{OptimizerSettings, Problem};

#[derive(Clone, Debug, PartialEq)]
pub enum MeshSource {
    Box { extents: [f64; 3], divisions: [usize; 3] },
    PlateHole { half_width: f64, radius: f64, thickness: f64, n_arc: usize, n_radial: usize, n_z: usize },
    File(PathBuf),
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshConfig {
    pub source: MeshSource,
    pub split_tets: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MaterialConfig {
    pub name: String,
    pub material: Material<f64>,
    pub elemset: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ElemSetConfig {
    pub name: String,
    pub lo: [f64; 3],
    pub hi: [f64; 3],
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkConfig {
    pub widths: Vec<usize>,
    pub seed: u64,
    pub normalize: bool,
    pub zero_output: bool,
    pub lift: Lift,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self { widths: vec![3, 32, 32, 3], seed: 0, normalize: true, zero_output: false, lift: Lift::Nodal }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OracleConfig {
    pub waypoints: Vec<f64>,
    pub substeps: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self { waypoints: vec![0.3, -0.3, 0.0], substeps: 100 }
    }
}

impl OracleConfig {
    /// Engineering shear strain path from 0 through the waypoints.
    pub fn gamma_path(&self) -> Vec<f64> {
        let mut out = Vec::new();
        let mut prev = 0.0;
        for &w in &self.waypoints {
            for k in 1..=self.substeps {
                out.push(prev + (w - prev) * k as f64 / self.substeps as f64);
            }
            prev = w;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Config {
    pub mesh: Option<MeshConfig>,
    pub elemsets: Vec<ElemSetConfig>,
    pub materials: Vec<MaterialConfig>,
    pub network: NetworkConfig,
    pub optimizer: OptimizerSettings<f64>,
    pub dirichlet: Vec<DirichletSpec<f64>>,
    pub tractions: Vec<TractionSpec<f64>>,
    pub factors: Vec<f64>,
    pub oracle: OracleConfig,
}

struct Entry {
    value: String,
    line: usize,
    used: bool,
}

struct Section {
    kind: String,
    name: Option<String>,
    line: usize,
    entries: BTreeMap<String, Entry>,
}

struct Ctx<'a> {
    path: &'a Path,
}

impl Ctx<'_> {
    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.path, line, msg)
    }
}

fn split_sections(text: &str, ctx: &Ctx) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let l = raw.split('#').next().unwrap_or("").trim();
        if l.is_empty() {
            continue;
        }
        if let Some(head) = l.strip_prefix('[') {
            let head = head
                .strip_suffix(']')
                .ok_or_else(|| ctx.err(line, format!("malformed section header '{l}'")))?
                .trim();
            let (kind, name) = match head.split_once('.') {
                Some((k, n)) if !n.trim().is_empty() => (k.trim().to_string(), Some(n.trim().to_string())),
                Some(_) => return Err(ctx.err(line, format!("empty section name in '{l}'"))),
                None => (head.to_string(), None),
            };
            if sections.iter().any(|s| s.kind == kind && s.name == name) {
                return Err(ctx.err(line, format!("duplicate section [{head}]")));
            }
            sections.push(Section { kind, name, line, entries: BTreeMap::new() });
            continue;
        }
        let (k, v) = l.split_once('=').ok_or_else(|| ctx.err(line, format!("expected 'key = value', got '{l}'")))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(ctx.err(line, format!("expected 'key = value', got '{l}'")));
        }
        let sec = sections.last_mut().ok_or_else(|| ctx.err(line, "key outside of any section"))?;
        if sec.entries.contains_key(k) {
            return Err(ctx.err(line, format!("duplicate key '{k}'")));
        }
        sec.entries.insert(k.to_string(), Entry { value: v.to_string(), line, used: false });
    }
    Ok(sections)
}

struct Reader<'a, 'b> {
    ctx: &'a Ctx<'b>,
    sec: &'a mut Section,
}

impl Reader<'_, '_> {
    fn raw(&mut self, key: &str) -> Option<(String, usize)> {
        self.sec.entries.get_mut(key).map(|e| {
            e.used = true;
            (e.value.clone(), e.line)
        })
    }

    fn get<V>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<V, String>) -> Result<Option<V>> {
        match self.raw(key) {
            None => Ok(None),
            Some((v, line)) => parse(&v).map(Some).map_err(|m| self.ctx.err(line, format!("key '{key}': {m}"))),
        }
    }

    fn req<V>(&mut self, key: &str, parse: impl Fn(&str) -> std::result::Result<V, String>) -> Result<V> {
        let line = self.sec.line;
        let head = self.header();
        self.get(key, parse)?.ok_or_else(|| self.ctx.err(line, format!("section [{head}] is missing key '{key}'")))
    }

    fn header(&self) -> String {
        match &self.sec.name {
            Some(n) => format!("{}.{}", self.sec.kind, n),
            None => self.sec.kind.clone(),
        }
    }

    /// Wraps a validation error with the section's line.
    fn check<V>(&self, r: Result<V>) -> Result<V> {
        r.map_err(|e| self.ctx.err(self.sec.line, format!("[{}]: {e}", self.header())))
    }

    fn finish(self) -> Result<()> {
        for (k, e) in &self.sec.entries {
            if !e.used {
                return Err(self.ctx.err(e.line, format!("unknown key '{k}' in section [{}]", self.header())));
            }
        }
        Ok(())
    }
}

fn list(s: &str) -> Vec<&str> {
    s.split(|c: char| c == ',' || c.is_whitespace()).filter(|t| !t.is_empty()).collect()
}

fn p_f64(s: &str) -> std::result::Result<f64, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(format!("expected a finite number, got '{s}'")),
    }
}

fn p_usize(s: &str) -> std::result::Result<usize, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, got '{s}'"))
}

fn p_u64(s: &str) -> std::result::Result<u64, String> {
    s.parse().map_err(|_| format!("expected a non-negative integer, got '{s}'"))
}

fn p_bool(s: &str) -> std::result::Result<bool, String> {
    match s {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(format!("expected true or false, got '{s}'")),
    }
}

fn p_f64_list(s: &str) -> std::result::Result<Vec<f64>, String> {
    list(s).into_iter().map(p_f64).collect()
}

fn p_usize_list(s: &str) -> std::result::Result<Vec<usize>, String> {
    list(s).into_iter().map(p_usize).collect()
}

fn p_f64_3(s: &str) -> std::result::Result<[f64; 3], String> {
    let v = p_f64_list(s)?;
    v.try_into().map_err(|v: Vec<f64>| format!("expected 3 numbers, got {}", v.len()))
}

fn p_usize_3(s: &str) -> std::result::Result<[usize; 3], String> {
    let v = p_usize_list(s)?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected 3 integers, got {}", v.len()))
}

fn p_axis(s: &str) -> std::result::Result<usize, String> {
    match s {
        "x" | "0" => Ok(0),
        "y" | "1" => Ok(1),
        "z" | "2" => Ok(2),
        _ => Err(format!("expected x, y or z, got '{s}'")),
    }
}

fn p_value(s: &str) -> std::result::Result<ValuePattern<f64>, String> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(ValuePattern::Const(v)),
        _ => ValuePattern::parse(s),
    }
}

fn p_mode(s: &str) -> std::result::Result<HardeningMode, String> {
    match s {
        "isotropic" => Ok(HardeningMode::Isotropic),
        "kinematic" => Ok(HardeningMode::Kinematic),
        _ => Err(format!("expected isotropic or kinematic, got '{s}'")),
    }
}

fn p_lift(s: &str) -> std::result::Result<Lift, String> {
    match s {
        "nodal" => Ok(Lift::Nodal),
        "extend" => Ok(Lift::Extend),
        _ => Err(format!("expected nodal or extend, got '{s}'")),
    }
}

fn p_name(s: &str) -> std::result::Result<String, String> {
    if s.split_whitespace().count() == 1 {
        Ok(s.to_string())
    } else {
        Err(format!("expected a single name, got '{s}'"))
    }
}

impl Config {
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let ctx = Ctx { path };
        let base = path.parent().unwrap_or(Path::new("."));
        let mut cfg = Config {
            mesh: None,
            elemsets: Vec::new(),
            materials: Vec::new(),
            network: NetworkConfig::default(),
            optimizer: OptimizerSettings::default(),
            dirichlet: Vec::new(),
            tractions: Vec::new(),
            factors: Vec::new(),
            oracle: OracleConfig::default(),
        };
        let mut saw_loadsteps = false;
        for mut sec in split_sections(text, &ctx)? {
            let named = sec.name.is_some();
            let (kind, sline) = (sec.kind.clone(), sec.line);
            let name = sec.name.clone().unwrap_or_default();
            let wants_name = matches!(kind.as_str(), "material" | "elemset" | "dirichlet" | "traction");
            let known = wants_name || matches!(kind.as_str(), "mesh" | "network" | "optimizer" | "loadsteps" | "oracle");
            if !known {
                return Err(ctx.err(sline, format!("unknown section [{kind}]")));
            }
            if wants_name != named {
                let m = if wants_name { format!("section [{kind}] needs a name, e.g. [{kind}.a]") } else { format!("section [{kind}] takes no name") };
                return Err(ctx.err(sline, m));
            }
            let mut r = Reader { ctx: &ctx, sec: &mut sec };
            match kind.as_str() {
                "mesh" => {
                    let generator = r.req("generator", |s| Ok(s.to_string()))?;
                    let source = match generator.as_str() {
                        "box" => MeshSource::Box { extents: r.req("extents", p_f64_3)?, divisions: r.req("divisions", p_usize_3)? },
                        "plate_hole" => MeshSource::PlateHole {
                            half_width: r.req("half_width", p_f64)?,
                            radius: r.req("radius", p_f64)?,
                            thickness: r.req("thickness", p_f64)?,
                            n_arc: r.req("n_arc", p_usize)?,
                            n_radial: r.req("n_radial", p_usize)?,
                            n_z: r.req("n_z", p_usize)?,
                        },
                        "file" => {
                            let f = PathBuf::from(r.req("file", |s| Ok(s.to_string()))?);
                            MeshSource::File(if f.is_absolute() { f } else { base.join(f) })
                        }
                        other => {
                            let line = r.raw("generator").map(|x| x.1).unwrap_or(sline);
                            return Err(ctx.err(line, format!("unknown mesh generator '{other}' (box, plate_hole, file)")));
                        }
                    };
                    let split_tets = r.get("split_tets", p_bool)?.unwrap_or(false);
                    cfg.mesh = Some(MeshConfig { source, split_tets });
                }
                "elemset" => {
                    let b = r.req("box", |s| {
                        let v = p_f64_list(s)?;
                        if v.len() != 6 {
                            return Err(format!("expected 6 numbers (lo xyz, hi xyz), got {}", v.len()));
                        }
                        if (0..3).any(|d| v[d] > v[d + 3]) {
                            return Err("box lower corner exceeds upper corner".into());
                        }
                        Ok(v)
                    })?;
                    cfg.elemsets.push(ElemSetConfig { name, lo: [b[0], b[1], b[2]], hi: [b[3], b[4], b[5]] });
                }
                "material" => {
                    let mu = r.req("mu", p_f64)?;
                    let kappa = r.req("kappa", p_f64)?;
                    let sy = r.req("sigma_y0", p_f64)?;
                    let h = r.get("H", p_f64)?.unwrap_or(0.0);
                    let c = r.get("C", p_f64)?.unwrap_or(0.0);
                    let mode = r.get("mode", p_mode)?.unwrap_or(HardeningMode::Isotropic);
                    let elemset = r.get("elemset", p_name)?.unwrap_or_else(|| "all".into());
                    let material = r.check(ElasticConstants::new(mu, kappa).and_then(|e| Material::new(e, HardeningLaw::new(sy, h, c, mode)?)))?;
                    cfg.materials.push(MaterialConfig { name, material, elemset });
                }
                "network" => {
                    let n = &mut cfg.network;
                    if let Some(w) = r.get("widths", p_usize_list)? {
                        n.widths = w;
                    }
                    if let Some(v) = r.get("seed", p_u64)? {
                        n.seed = v;
                    }
                    if let Some(v) = r.get("normalize", p_bool)? {
                        n.normalize = v;
                    }
                    if let Some(v) = r.get("zero_output", p_bool)? {
                        n.zero_output = v;
                    }
                    if let Some(v) = r.get("lift", p_lift)? {
                        n.lift = v;
                    }
                    let w = n.widths.clone();
                    r.check(Network::<f64>::zeros(&w).map(|_| ()))?;
                }
                "optimizer" => {
                    let o = &mut cfg.optimizer;
                    if let Some(v) = r.get("lr", p_f64)? {
                        o.lr = v;
                    }
                    if let Some(v) = r.get("lbfgs_memory", p_usize)? {
                        o.memory = v;
                    }
                    if let Some(v) = r.get("patience", p_usize)? {
                        o.patience = v;
                    }
                    if let Some(v) = r.get("tol", p_f64)? {
                        o.tol = v;
                    }
                    if let Some(v) = r.get("max_iters_per_step", p_usize)? {
                        o.max_iters_per_step = v;
                    }
                    let o = *o;
                    r.check(validate_optimizer(&o))?;
                }
                "dirichlet" => {
                    cfg.dirichlet.push(DirichletSpec {
                        name,
                        node_set: r.req("nodeset", p_name)?,
                        axis: r.req("axis", p_axis)?,
                        value: r.req("value", p_value)?,
                    });
                }
                "traction" => {
                    cfg.tractions.push(TractionSpec { name, side_set: r.req("sideset", p_name)?, vector: r.req("vector", p_f64_3)? });
                }
                "loadsteps" => {
                    saw_loadsteps = true;
                    cfg.factors = r.req("factors", p_f64_list)?;
                    let f = cfg.factors.clone();
                    r.check(LoadProgram::new(f).map(|_| ()))?;
                }
                "oracle" => {
                    if let Some(v) = r.get("waypoints", p_f64_list)? {
                        cfg.oracle.waypoints = v;
                    }
                    if let Some(v) = r.get("substeps", p_usize)? {
                        cfg.oracle.substeps = v;
                    }
                    if cfg.oracle.waypoints.is_empty() || cfg.oracle.substeps == 0 {
                        return Err(ctx.err(sline, "[oracle] needs at least one waypoint and substeps >= 1"));
                    }
                }
                _ => unreachable!(),
            }
            r.finish()?;
        }
        if cfg.materials.is_empty() {
            return Err(ctx.err(text.lines().count().max(1), "config defines no [material.<name>] section"));
        }
        if cfg.mesh.is_some() && !saw_loadsteps {
            return Err(ctx.err(text.lines().count().max(1), "config with a [mesh] needs a [loadsteps] section"));
        }
        Ok(cfg)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(format!("reading config {}", path.display()), e))?;
        Self::parse(&text, path)
    }

    /// Canonical text with every default filled in; parses back to an
    /// equal config.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let f3 = |v: &[f64; 3]| format!("{:?} {:?} {:?}", v[0], v[1], v[2]);
        let join = |v: &[f64]| v.iter().map(|x| format!("{x:?}")).collect::<Vec<_>>().join(" ");
        if let Some(m) = &self.mesh {
            s.push_str("[mesh]\n");
            match &m.source {
                MeshSource::Box { extents, divisions } => {
                    let _ = writeln!(s, "generator = box\nextents = {}\ndivisions = {} {} {}", f3(extents), divisions[0], divisions[1], divisions[2]);
                }
                MeshSource::PlateHole { half_width, radius, thickness, n_arc, n_radial, n_z } => {
                    let _ = writeln!(
                        s,
                        "generator = plate_hole\nhalf_width = {half_width:?}\nradius = {radius:?}\nthickness = {thickness:?}\nn_arc = {n_arc}\nn_radial = {n_radial}\nn_z = {n_z}"
                    );
                }
                MeshSource::File(p) => {
                    let _ = writeln!(s, "generator = file\nfile = {}", p.display());
                }
            }
            let _ = writeln!(s, "split_tets = {}\n", m.split_tets);
        }
        for e in &self.elemsets {
            let _ = writeln!(s, "[elemset.{}]\nbox = {} {}\n", e.name, f3(&e.lo), f3(&e.hi));
        }
        for m in &self.materials {
            let (el, hd) = (&m.material.elastic, &m.material.hardening);
            let _ = writeln!(
                s,
                "[material.{}]\nmu = {:?}\nkappa = {:?}\nsigma_y0 = {:?}\nH = {:?}\nC = {:?}\nmode = {}\nelemset = {}\n",
                m.name,
                el.mu,
                el.kappa,
                hd.sigma_y0,
                hd.h,
                hd.c,
                hd.mode.name(),
                m.elemset
            );
        }
        let n = &self.network;
        let widths: Vec<String> = n.widths.iter().map(|w| w.to_string()).collect();
        let _ = writeln!(
            s,
            "[network]\nwidths = {}\nseed = {}\nnormalize = {}\nzero_output = {}\nlift = {}\n",
            widths.join(" "),
            n.seed,
            n.normalize,
            n.zero_output,
            n.lift.name()
        );
        let o = &self.optimizer;
        let _ = writeln!(
            s,
            "[optimizer]\nlr = {:?}\nlbfgs_memory = {}\npatience = {}\ntol = {:?}\nmax_iters_per_step = {}\n",
            o.lr, o.memory, o.patience, o.tol, o.max_iters_per_step
        );
        for d in &self.dirichlet {
            let _ = writeln!(s, "[dirichlet.{}]\nnodeset = {}\naxis = {}\nvalue = {}\n", d.name, d.node_set, ["x", "y", "z"][d.axis], d.value);
        }
        for t in &self.tractions {
            let _ = writeln!(s, "[traction.{}]\nsideset = {}\nvector = {}\n", t.name, t.side_set, f3(&t.vector));
        }
        if !self.factors.is_empty() {
            let _ = writeln!(s, "[loadsteps]\nfactors = {}\n", join(&self.factors));
        }
        let _ = writeln!(s, "[oracle]\nwaypoints = {}\nsubsteps = {}", join(&self.oracle.waypoints), self.oracle.substeps);
        s
    }

    /// Builds the mesh, creates box element sets and assigns materials.
    pub fn build_mesh(&self) -> Result<Mesh<f64>> {
        let mc = self.mesh.as_ref().ok_or_else(|| Error::Config("config has no [mesh] section".into()))?;
        let mut mesh = match &mc.source {
            MeshSource::Box { extents, divisions } => generate_structured_box(*extents, *divisions)?,
            MeshSource::PlateHole { half_width, radius, thickness, n_arc, n_radial, n_z } => {
                generate_plate_with_hole(*half_width, *radius, *thickness, *n_arc, *n_radial, *n_z)?
            }
            MeshSource::File(p) => read_mesh(p)?,
        };
        if mc.split_tets {
            mesh = split_hex_to_tets(&mesh)?;
        }
        mesh.elem_sets.entry("all".into()).or_insert_with(|| (0..mesh.elements.len()).collect());
        for es in &self.elemsets {
            let (lo, hi) = mesh.bounds();
            let tol = 1e-9 * (0..3).map(|d| hi[d] - lo[d]).fold(0.0, f64::max);
            let inside: Vec<usize> = (0..mesh.element_count())
                .filter(|&e| {
                    let c = mesh.element_centroid(e);
                    (0..3).all(|d| c[d] >= es.lo[d] - tol && c[d] <= es.hi[d] + tol)
                })
                .collect();
            mesh.elem_sets.insert(es.name.clone(), inside);
        }
        for (id, m) in self.materials.iter().enumerate() {
            mesh.assign_material(&m.elemset, id)
                .map_err(|e| Error::Config(format!("material '{}': {e}", m.name)))?;
        }
        Ok(mesh)
    }

    pub fn build_problem(&self) -> Result<Problem<f64>> {
        Ok(Problem {
            mesh: self.build_mesh()?,
            materials: self.materials.iter().map(|m| m.material).collect(),
            dirichlet: self.dirichlet.clone(),
            tractions: self.tractions.clone(),
            lift: self.network.lift,
            program: LoadProgram::new(self.factors.clone())?,
        })
    }

    /// Fresh network for `mesh` from the `[network]` section.
    pub fn build_network(&self, mesh: &Mesh<f64>) -> Result<Network<f64>> {
        let n = &self.network;
        let mut net = Network::init(&n.widths, n.seed)?;
        if n.normalize {
            let (lo, hi) = mesh.bounds();
            net = net.with_scaling(Some(InputScaling::new(lo, hi)?));
        }
        if n.zero_output {
            net.zero_output_layer();
        }
        Ok(net)
    }
}

fn validate_optimizer(o: &OptimizerSettings<f64>) -> Result<()> {
    if !(o.lr > 0.0) {
        return Err(Error::Config(format!("lr must be positive, got {}", o.lr)));
    }
    if o.memory == 0 || o.patience == 0 || o.max_iters_per_step == 0 {
        return Err(Error::Config("lbfgs_memory, patience and max_iters_per_step must be at least 1".into()));
    }
    if !(o.tol > 0.0) {
        return Err(Error::Config(format!("tol must be positive, got {}", o.tol)));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = "[material.steel]\nmu = 384.62\nkappa = 833.33\nsigma_y0 = 50\nH = 500\n";

    fn parse(s: &str) -> Result<Config> {
        Config::parse(s, Path::new("t.cfg"))
    }

    fn line_of(r: Result<Config>) -> usize {
        match r {
            Err(Error::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn minimal_material_config() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.materials.len(), 1);
        assert_eq!(c.materials[0].material.hardening.h, 500.0);
        assert_eq!(c.network, NetworkConfig::default());
        assert!(c.mesh.is_none());
    }

    #[test]
    fn kinematic_without_c_is_rejected() {
        let s = "[material.a]\nmu = 384.62\nkappa = 833.33\nsigma_y0 = 50\nmode = kinematic\nC = 0\n";
        assert_eq!(line_of(parse(s)), 1);
    }

    #[test]
    fn negative_mu_is_rejected() {
        let s = "\n[material.a]\nmu = -1\nkappa = 833.33\nsigma_y0 = 50\n";
        let e = parse(s).unwrap_err().to_string();
        assert!(e.starts_with("t.cfg:2:"), "{e}");
    }

    #[test]
    fn unknown_key_and_section_report_lines() {
        assert_eq!(line_of(parse(&format!("{MINIMAL}sigma_y = 3\n"))), 6);
        assert_eq!(line_of(parse(&format!("{MINIMAL}[solver]\n"))), 6);
        assert_eq!(line_of(parse(&format!("{MINIMAL}mu = 3\n"))), 6);
        assert_eq!(line_of(parse("x = 1\n")), 1);
        assert_eq!(line_of(parse(&format!("{MINIMAL}[network]\nwidths = 3 a 3\n"))), 7);
        assert_eq!(line_of(parse(&format!("{MINIMAL}[network]\nwidths = 4 8 3\n"))), 6);
        assert_eq!(line_of(parse(&format!("{MINIMAL}[material]\n"))), 6);
        assert_eq!(line_of(parse(&format!("{MINIMAL}[material.steel]\n"))), 6);
    }

    #[test]
    fn mesh_needs_loadsteps() {
        let s = format!("{MINIMAL}[mesh]\ngenerator = box\nextents = 1 1 1\ndivisions = 1 1 1\n");
        assert!(parse(&s).is_err());
        assert!(parse(&format!("{s}[loadsteps]\nfactors = 1\n")).is_ok());
        assert!(parse(&format!("{s}[loadsteps]\nfactors = \n")).is_err());
    }

    #[test]
    fn full_config_roundtrip_and_build() {
        let s = format!(
            "{MINIMAL}\n[material.hard]\nmu = 384.62\nkappa = 833.33\nsigma_y0 = 60\nH = 500\nelemset = core\n\
             [elemset.core]\nbox = 1, 1, 0, 3, 3, 1\n\
             [mesh]\ngenerator = box\nextents = 4 4 1\ndivisions = 4 4 1\n\
             [network]\nwidths = 3 8 3\nseed = 7\nlift = extend\n\
             [optimizer]\ntol = 1e-7\n\
             [dirichlet.sx]\nnodeset = x_min\naxis = x\nvalue = affine y/4\n\
             [dirichlet.sy]\nnodeset = x_min\naxis = y\nvalue = 0\n\
             [traction.t]\nsideset = y_max\nvector = 0 1 0\n\
             [loadsteps]\nfactors = 0.5, 1\n"
        );
        let c = parse(&s).unwrap();
        let again = parse(&c.to_text()).unwrap();
        assert_eq!(again, c);
        assert_eq!(c.dirichlet[1].value, ValuePattern::Const(0.0));
        let p = c.build_problem().unwrap();
        assert_eq!(p.materials.len(), 2);
        // Central 2x2 block of the 4x4 grid.
        assert_eq!(p.mesh.material.iter().filter(|&&m| m == 1).count(), 4);
        let net = c.build_network(&p.mesh).unwrap();
        assert_eq!(net.widths(), vec![3, 8, 3]);
        assert!(net.scaling.is_some());
    }

    #[test]
    fn missing_elemset_is_config_error() {
        let s = format!(
            "{MINIMAL}elemset = nope\n[mesh]\ngenerator = box\nextents = 1 1 1\ndivisions = 1 1 1\n[loadsteps]\nfactors = 1\n"
        );
        assert!(matches!(parse(&s).unwrap().build_mesh(), Err(Error::Config(_))));
    }

    #[test]
    fn oracle_path() {
        let o = OracleConfig { waypoints: vec![0.2, -0.2], substeps: 2 };
        assert_eq!(o.gamma_path(), vec![0.1, 0.2, 0.0, -0.2]);
    }
}
