//! Line-oriented ASCII mesh format.
//!
//! ```text
//! # comment
//! nodes <N>
//! <x> <y> <z>                 (N lines)
//! elements <M>
//! hex8 <i0> ... <i7>          (or: tet4 <i0> ... <i3>; M lines, 0-based)
//! nodeset <name> <k>
//! <k indices, any line layout>
//! elemset <name> <k>
//! <k indices>
//! sideset <name> <k>
//! <k pairs: elem face>
//! ```

use std::fmt::Write as _;
use std::path::Path;

use super::{Element, ElementKind, FacetRef, Mesh};
use crate::error::{Error, Result};
use crate::scalar::Real;

struct Lines<'a> {
    path: &'a Path,
    inner: std::iter::Peekable<Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a>>,
    last_line: usize,
}

impl<'a> Lines<'a> {
    fn new(path: &'a Path, text: &'a str) -> Self {
        let it: Box<dyn Iterator<Item = (usize, Vec<&'a str>)> + 'a> = Box::new(
            text.lines()
                .enumerate()
                .map(|(i, l)| (i + 1, l.split('#').next().unwrap_or("")))
                .map(|(i, l)| (i, l.split_whitespace().collect::<Vec<_>>()))
                .filter(|(_, t)| !t.is_empty()),
        );
        Self { path, inner: it.peekable(), last_line: 0 }
    }

    fn next(&mut self) -> Option<(usize, Vec<&'a str>)> {
        let r = self.inner.next();
        if let Some((l, _)) = &r {
            self.last_line = *l;
        }
        r
    }

    fn err(&self, line: usize, msg: impl Into<String>) -> Error {
        Error::parse(self.path, line, msg)
    }

    fn expect_line(&mut self, what: &str) -> Result<(usize, Vec<&'a str>)> {
        let last = self.last_line;
        self.next().ok_or_else(|| self.err(last + 1, format!("unexpected end of file, expected {what}")))
    }

    /// Collects `count` whitespace-separated integers across lines.
    fn indices(&mut self, count: usize, what: &str) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(count);
        while out.len() < count {
            let (line, toks) = self.expect_line(what)?;
            for t in toks {
                if out.len() == count {
                    return Err(self.err(line, format!("too many values in {what}")));
                }
                out.push(parse_index(t).map_err(|m| self.err(line, m))?);
            }
        }
        Ok(out)
    }
}

fn parse_index(t: &str) -> std::result::Result<usize, String> {
    t.parse::<usize>().map_err(|_| format!("expected a non-negative integer, got '{t}'"))
}

fn header_count(toks: &[&str], n_tokens: usize) -> std::result::Result<usize, String> {
    if toks.len() != n_tokens {
        return Err(format!("malformed header '{}'", toks.join(" ")));
    }
    parse_index(toks[n_tokens - 1])
}

/// Parses mesh text; `path` is used only in error messages.
pub fn parse_mesh<T: Real>(text: &str, path: &Path) -> Result<Mesh<T>> {
    let mut lines = Lines::new(path, text);
    let mut nodes: Option<Vec<[T; 3]>> = None;
    let mut elements: Option<Vec<Element>> = None;
    let mut node_sets = Vec::new();
    let mut elem_sets = Vec::new();
    let mut side_sets = Vec::new();

    while let Some((line, toks)) = lines.next() {
        match toks[0] {
            "nodes" => {
                if nodes.is_some() {
                    return Err(lines.err(line, "duplicate nodes block"));
                }
                let n = header_count(&toks, 2).map_err(|m| lines.err(line, m))?;
                let mut v = Vec::with_capacity(n);
                for _ in 0..n {
                    let (l, t) = lines.expect_line("node coordinates")?;
                    if t.len() != 3 {
                        return Err(lines.err(l, format!("expected 3 coordinates, got {}", t.len())));
                    }
                    let mut p = [T::zero(); 3];
                    for (k, s) in t.iter().enumerate() {
                        let x: f64 = s.parse().map_err(|_| lines.err(l, format!("invalid coordinate '{s}'")))?;
                        if !x.is_finite() {
                            return Err(lines.err(l, format!("non-finite coordinate '{s}'")));
                        }
                        p[k] = T::lit(x);
                    }
                    v.push(p);
                }
                nodes = Some(v);
            }
            "elements" => {
                if elements.is_some() {
                    return Err(lines.err(line, "duplicate elements block"));
                }
                let m = header_count(&toks, 2).map_err(|msg| lines.err(line, msg))?;
                let mut v = Vec::with_capacity(m);
                for _ in 0..m {
                    let (l, t) = lines.expect_line("element connectivity")?;
                    let kind = match t[0] {
                        "hex8" => ElementKind::Hex8,
                        "tet4" => ElementKind::Tet4,
                        other => return Err(lines.err(l, format!("unknown element kind '{other}'"))),
                    };
                    if t.len() != kind.node_count() + 1 {
                        return Err(lines.err(
                            l,
                            format!("{} expects {} node indices, got {}", t[0], kind.node_count(), t.len() - 1),
                        ));
                    }
                    let conn = t[1..]
                        .iter()
                        .map(|s| parse_index(s))
                        .collect::<std::result::Result<Vec<_>, _>>()
                        .map_err(|m| lines.err(l, m))?;
                    v.push(Element { kind, nodes: conn });
                }
                elements = Some(v);
            }
            kw @ ("nodeset" | "elemset" | "sideset") => {
                let k = header_count(&toks, 3).map_err(|m| lines.err(line, m))?;
                let name = toks[1].to_string();
                match kw {
                    "nodeset" => node_sets.push((line, name, lines.indices(k, "nodeset")?)),
                    "elemset" => elem_sets.push((line, name, lines.indices(k, "elemset")?)),
                    _ => {
                        let flat = lines.indices(2 * k, "sideset pairs")?;
                        let facets =
                            flat.chunks(2).map(|c| FacetRef { element: c[0], face: c[1] }).collect();
                        side_sets.push((line, name, facets));
                    }
                }
            }
            other => return Err(lines.err(line, format!("unexpected keyword '{other}'"))),
        }
    }

    let nodes = nodes.ok_or_else(|| lines.err(1, "missing nodes block"))?;
    let elements = elements.ok_or_else(|| lines.err(1, "missing elements block"))?;
    let mut mesh = Mesh::new(nodes, elements)?;
    for (line, name, set) in node_sets {
        if mesh.node_sets.insert(name.clone(), set).is_some() {
            return Err(lines.err(line, format!("duplicate nodeset '{name}'")));
        }
    }
    for (line, name, set) in elem_sets {
        if mesh.elem_sets.insert(name.clone(), set).is_some() {
            return Err(lines.err(line, format!("duplicate elemset '{name}'")));
        }
    }
    for (line, name, set) in side_sets {
        if mesh.side_sets.insert(name.clone(), set).is_some() {
            return Err(lines.err(line, format!("duplicate sideset '{name}'")));
        }
    }
    mesh.elem_sets.entry("all".into()).or_insert_with(|| (0..mesh.elements.len()).collect());
    mesh.validate()?;
    Ok(mesh)
}

pub fn read_mesh<T: Real>(path: impl AsRef<Path>) -> Result<Mesh<T>> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading mesh {}", path.display()), e))?;
    parse_mesh(&text, path)
}

/// Writes a mesh in the format accepted by [`read_mesh`].
pub fn write_mesh<T: Real>(mesh: &Mesh<T>, path: impl AsRef<Path>) -> Result<()> {
    let mut s = String::new();
    let _ = writeln!(s, "nodes {}", mesh.nodes.len());
    for p in &mesh.nodes {
        let _ = writeln!(s, "{} {} {}", p[0].as_f64(), p[1].as_f64(), p[2].as_f64());
    }
    let _ = writeln!(s, "elements {}", mesh.elements.len());
    for el in &mesh.elements {
        let conn: Vec<String> = el.nodes.iter().map(|n| n.to_string()).collect();
        let _ = writeln!(s, "{} {}", el.kind.name(), conn.join(" "));
    }
    let write_list = |s: &mut String, v: &[usize]| {
        for chunk in v.chunks(16) {
            let row: Vec<String> = chunk.iter().map(|n| n.to_string()).collect();
            let _ = writeln!(s, "{}", row.join(" "));
        }
    };
    for (name, set) in &mesh.node_sets {
        let _ = writeln!(s, "nodeset {name} {}", set.len());
        write_list(&mut s, set);
    }
    for (name, set) in &mesh.elem_sets {
        let _ = writeln!(s, "elemset {name} {}", set.len());
        write_list(&mut s, set);
    }
    for (name, set) in &mesh.side_sets {
        let _ = writeln!(s, "sideset {name} {}", set.len());
        for f in set {
            let _ = writeln!(s, "{} {}", f.element, f.face);
        }
    }
    let path = path.as_ref();
    std::fs::write(path, s).map_err(|e| Error::io(format!("writing mesh {}", path.display()), e))
}
