//! Reader for Gmsh ASCII mesh files (format 2.2, and 4.1).

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use crate::error::{Error, Result};

use super::{orient, Mesh, Point, PolygonDomain};

const TRIANGLE: u32 = 2;
const TETRAHEDRON: u32 = 4;
// points, 2- and 3-node lines are boundary entities written alongside the surface mesh
const SKIPPED: [u32; 3] = [1, 8, 15];

/// Parses a mesh and reconstructs its domain from the boundary loop.
pub fn parse_msh(path: &Path) -> Result<Mesh> {
    let (vertices, elements) = read_triangles(path)?;
    let domain = boundary_polygon(&vertices, &elements).map_err(|msg| Error::Msh {
        path: path.to_owned(),
        line: 0,
        msg,
    })?;
    Mesh::new(vertices, elements, Arc::new(domain))
}

/// Parses a mesh of a known domain.
pub fn parse_msh_with_domain(path: &Path, domain: Arc<PolygonDomain>) -> Result<Mesh> {
    let (vertices, elements) = read_triangles(path)?;
    Mesh::new(vertices, elements, domain)
}

struct Lines<'a> {
    path: PathBuf,
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    line: usize,
}

impl<'a> Lines<'a> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Msh {
            path: self.path.clone(),
            line: self.line,
            msg: msg.into(),
        }
    }

    fn next_line(&mut self) -> Result<&'a str> {
        loop {
            match self.inner.next() {
                Some((i, l)) => {
                    self.line = i + 1;
                    let l = l.trim();
                    if !l.is_empty() {
                        return Ok(l);
                    }
                }
                None => return Err(self.err("unexpected end of file")),
            }
        }
    }

    fn numbers<T: std::str::FromStr>(&mut self) -> Result<Vec<T>> {
        let l = self.next_line()?;
        l.split_whitespace()
            .map(|t| t.parse::<T>().map_err(|_| self.err(format!("bad number `{t}`"))))
            .collect()
    }

    fn expect(&mut self, tag: &str) -> Result<()> {
        let l = self.next_line()?;
        if l == tag {
            Ok(())
        } else {
            Err(self.err(format!("expected `{tag}`, found `{l}`")))
        }
    }
}

fn read_triangles(path: &Path) -> Result<(Vec<Point>, Vec<[usize; 3]>)> {
    let text = fs::read_to_string(path)?;
    let mut lines = Lines {
        path: path.to_owned(),
        inner: text.lines().enumerate(),
        line: 0,
    };
    let mut version: Option<String> = None;
    let mut nodes: HashMap<u64, Point> = HashMap::new();
    let mut node_order: Vec<u64> = Vec::new();
    let mut triangles: Vec<[u64; 3]> = Vec::new();
    let mut saw_nodes = false;
    let mut saw_elements = false;

    while let Some((i, raw)) = lines.inner.next() {
        lines.line = i + 1;
        let l = raw.trim();
        if l.is_empty() {
            continue;
        }
        match l {
            "$MeshFormat" => {
                let header = lines.next_line()?;
                let mut it = header.split_whitespace();
                let v = it.next().unwrap_or_default().to_string();
                let file_type = it.next().unwrap_or("0");
                if file_type != "0" {
                    return Err(Error::MshVersion(format!("{v} (binary)")));
                }
                if v != "2.2" && v != "4.1" {
                    return Err(Error::MshVersion(v));
                }
                version = Some(v);
                lines.expect("$EndMeshFormat")?;
            }
            "$Nodes" => {
                let v = version
                    .as_deref()
                    .ok_or_else(|| lines.err("$Nodes before $MeshFormat"))?;
                if v == "2.2" {
                    read_nodes_v2(&mut lines, &mut nodes, &mut node_order)?;
                } else {
                    read_nodes_v4(&mut lines, &mut nodes, &mut node_order)?;
                }
                if nodes.is_empty() {
                    return Err(lines.err("empty $Nodes section"));
                }
                lines.expect("$EndNodes")?;
                saw_nodes = true;
            }
            "$Elements" => {
                let v = version
                    .as_deref()
                    .ok_or_else(|| lines.err("$Elements before $MeshFormat"))?;
                if v == "2.2" {
                    read_elements_v2(&mut lines, &mut triangles)?;
                } else {
                    read_elements_v4(&mut lines, &mut triangles)?;
                }
                lines.expect("$EndElements")?;
                saw_elements = true;
            }
            s if s.starts_with('$') && !s.starts_with("$End") => {
                // unknown section ($Entities, $PhysicalNames, ...): skip to its end
                let end = format!("$End{}", &s[1..]);
                loop {
                    if lines.next_line()? == end {
                        break;
                    }
                }
            }
            other => return Err(lines.err(format!("unexpected line `{other}`"))),
        }
    }
    if version.is_none() {
        return Err(lines.err("missing $MeshFormat"));
    }
    if !saw_nodes {
        return Err(lines.err("missing $Nodes section"));
    }
    if !saw_elements || triangles.is_empty() {
        return Err(lines.err("no triangles in file"));
    }

    // compact to the nodes actually used, in file order
    let mut index: HashMap<u64, usize> = HashMap::new();
    for t in &triangles {
        for tag in t {
            if !nodes.contains_key(tag) {
                return Err(lines.err(format!("element references unknown node {tag}")));
            }
            index.insert(*tag, usize::MAX);
        }
    }
    let mut vertices = Vec::with_capacity(index.len());
    for tag in node_order {
        if let Some(slot) = index.get_mut(&tag) {
            if *slot == usize::MAX {
                *slot = vertices.len();
                vertices.push(nodes[&tag]);
            }
        }
    }
    let elements = triangles
        .iter()
        .map(|t| [index[&t[0]], index[&t[1]], index[&t[2]]])
        .collect();
    Ok((vertices, elements))
}

fn read_nodes_v2(lines: &mut Lines, nodes: &mut HashMap<u64, Point>, order: &mut Vec<u64>) -> Result<()> {
    let n = lines.numbers::<usize>()?;
    let n = *n.first().ok_or_else(|| lines.err("missing node count"))?;
    for _ in 0..n {
        let l = lines.next_line()?;
        let tok: Vec<&str> = l.split_whitespace().collect();
        if tok.len() < 4 {
            return Err(lines.err("node line needs `tag x y z`"));
        }
        let tag: u64 = tok[0].parse().map_err(|_| lines.err("bad node tag"))?;
        let x: f64 = tok[1].parse().map_err(|_| lines.err("bad coordinate"))?;
        let y: f64 = tok[2].parse().map_err(|_| lines.err("bad coordinate"))?;
        nodes.insert(tag, [x, y]);
        order.push(tag);
    }
    Ok(())
}

fn read_nodes_v4(lines: &mut Lines, nodes: &mut HashMap<u64, Point>, order: &mut Vec<u64>) -> Result<()> {
    let head = lines.numbers::<u64>()?;
    if head.len() < 4 {
        return Err(lines.err("$Nodes header needs 4 numbers"));
    }
    for _ in 0..head[0] {
        let block = lines.numbers::<u64>()?;
        if block.len() < 4 {
            return Err(lines.err("node block header needs 4 numbers"));
        }
        let parametric = block[2] != 0;
        let count = block[3] as usize;
        let mut tags = Vec::with_capacity(count);
        for _ in 0..count {
            let t = lines.numbers::<u64>()?;
            tags.push(*t.first().ok_or_else(|| lines.err("missing node tag"))?);
        }
        for tag in tags {
            let c = lines.numbers::<f64>()?;
            if c.len() < 3 || (parametric && c.len() < 4) {
                return Err(lines.err("node coordinates need x y z"));
            }
            nodes.insert(tag, [c[0], c[1]]);
            order.push(tag);
        }
    }
    Ok(())
}

fn classify(lines: &Lines, ty: u32) -> Result<bool> {
    match ty {
        TRIANGLE => Ok(true),
        TETRAHEDRON => Err(lines.err("tetrahedral elements are not supported")),
        t if SKIPPED.contains(&t) => Ok(false),
        t => Err(lines.err(format!("unsupported element type {t}"))),
    }
}

fn read_elements_v2(lines: &mut Lines, out: &mut Vec<[u64; 3]>) -> Result<()> {
    let n = lines.numbers::<usize>()?;
    let n = *n.first().ok_or_else(|| lines.err("missing element count"))?;
    let mut skipped = 0usize;
    for _ in 0..n {
        let t = lines.numbers::<u64>()?;
        if t.len() < 3 {
            return Err(lines.err("element line too short"));
        }
        if !classify(lines, t[1] as u32)? {
            skipped += 1;
            continue;
        }
        let start = 3 + t[2] as usize;
        if t.len() < start + 3 {
            return Err(lines.err("triangle needs three nodes"));
        }
        out.push([t[start], t[start + 1], t[start + 2]]);
    }
    if skipped > 0 {
        log::debug!("skipped {skipped} point/line elements");
    }
    Ok(())
}

fn read_elements_v4(lines: &mut Lines, out: &mut Vec<[u64; 3]>) -> Result<()> {
    let head = lines.numbers::<u64>()?;
    if head.len() < 4 {
        return Err(lines.err("$Elements header needs 4 numbers"));
    }
    for _ in 0..head[0] {
        let block = lines.numbers::<u64>()?;
        if block.len() < 4 {
            return Err(lines.err("element block header needs 4 numbers"));
        }
        let keep = classify(lines, block[2] as u32)?;
        for _ in 0..block[3] {
            let t = lines.numbers::<u64>()?;
            if keep {
                if t.len() < 4 {
                    return Err(lines.err("triangle needs three nodes"));
                }
                out.push([t[1], t[2], t[3]]);
            }
        }
    }
    Ok(())
}

/// Chains the boundary edges of an oriented triangle soup into a polygon,
/// dropping vertices that lie on straight runs.
fn boundary_polygon(vertices: &[Point], elements: &[[usize; 3]]) -> std::result::Result<PolygonDomain, String> {
    let mut directed: HashMap<(usize, usize), ()> = HashMap::new();
    let oriented: Vec<[usize; 3]> = elements
        .iter()
        .map(|&e| {
            if orient(vertices[e[0]], vertices[e[1]], vertices[e[2]]) < 0.0 {
                [e[0], e[2], e[1]]
            } else {
                e
            }
        })
        .collect();
    for e in &oriented {
        for i in 0..3 {
            directed.insert((e[i], e[(i + 1) % 3]), ());
        }
    }
    let mut next: HashMap<usize, usize> = HashMap::new();
    for &(a, b) in directed.keys() {
        if !directed.contains_key(&(b, a)) && next.insert(a, b).is_some() {
            return Err(format!("vertex {a} starts two boundary edges"));
        }
    }
    let start = *next.keys().min().ok_or("mesh has no boundary")?;
    let mut chain = vec![start];
    let mut cur = next[&start];
    while cur != start {
        chain.push(cur);
        cur = *next.get(&cur).ok_or("open boundary chain")?;
        if chain.len() > next.len() {
            return Err("boundary chain does not close".into());
        }
    }
    if chain.len() != next.len() {
        return Err("domain has more than one boundary loop".into());
    }
    let n = chain.len();
    let scale = vertices.iter().flatten().fold(0.0f64, |m, c| m.max(c.abs())).max(1.0);
    let corners: Vec<Point> = (0..n)
        .filter(|&i| {
            let (a, b, c) = (
                vertices[chain[(i + n - 1) % n]],
                vertices[chain[i]],
                vertices[chain[(i + 1) % n]],
            );
            orient(a, b, c).abs() > 1e-12 * scale * scale
        })
        .map(|i| vertices[chain[i]])
        .collect();
    PolygonDomain::new(corners).map_err(|e| e.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(text: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(text.as_bytes()).unwrap();
        f
    }

    pub(crate) const SQUARE_V2: &str = "$MeshFormat
2.2 0 8
$EndMeshFormat
$Nodes
4
1 0 0 0
2 1 0 0
3 1 1 0
4 0 1 0
$EndNodes
$Elements
6
1 15 2 0 1 1
2 1 2 0 1 1 2
3 1 2 0 2 2 3
4 1 2 0 3 3 4
5 2 2 0 1 1 2 3
6 2 2 0 1 1 4 3
$EndElements
";

    #[test]
    fn parses_v2_fixture() {
        let f = write(SQUARE_V2);
        let m = parse_msh(f.path()).unwrap();
        assert_eq!(m.nov(), 4);
        assert_eq!(m.num_elements(), 2);
        assert_eq!(m.boundary_vertices(), &[0, 1, 2, 3]);
        // second triangle was clockwise in the file
        assert!(m.area(1) > 0.0);
        assert!((m.domain().area() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn parses_v4_fixture() {
        let text = "$MeshFormat
4.1 0 8
$EndMeshFormat
$Entities
0 0 1 0
1 0 0 0 1 1 0 0 0
$EndEntities
$Nodes
1 4 1 4
2 1 0 4
1
2
3
4
0 0 0
1 0 0
1 1 0
0 1 0
$EndNodes
$Elements
2 3 1 3
1 1 1 1
1 1 2
2 1 2 2
2 1 2 3
3 1 3 4
$EndElements
";
        let f = write(text);
        let m = parse_msh(f.path()).unwrap();
        assert_eq!((m.nov(), m.num_elements()), (4, 2));
    }

    #[test]
    fn empty_nodes_section_is_an_error() {
        let text = "$MeshFormat\n2.2 0 8\n$EndMeshFormat\n$Nodes\n0\n$EndNodes\n";
        let f = write(text);
        assert!(matches!(parse_msh(f.path()), Err(Error::Msh { .. })));
    }

    #[test]
    fn rejects_unsupported_version_and_tets() {
        let f = write("$MeshFormat\n3.0 0 8\n$EndMeshFormat\n");
        assert!(matches!(parse_msh(f.path()), Err(Error::MshVersion(_))));

        let tet = SQUARE_V2.replace("6 2 2 0 1 1 4 3", "6 4 2 0 1 1 2 3 4");
        let f = write(&tet);
        let err = parse_msh(f.path()).unwrap_err();
        assert!(err.to_string().contains("tetrahedral"), "{err}");
    }

    #[test]
    fn truncated_file_is_an_error() {
        let f = write(&SQUARE_V2[..SQUARE_V2.len() - 30]);
        assert!(parse_msh(f.path()).is_err());
    }
}
