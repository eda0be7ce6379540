//! Wavefront OBJ and ASCII PLY mesh loading. Lengths are taken as mm.
//!
//! OBJ: `v x y z [r g b]`, `vn`, `f` with any of the `v`, `v/vt`, `v//vn`,
//! `v/vt/vn` forms (negative indices allowed, polygons fan-triangulated), and
//! `o`/`g` lines opening a named component.
//! PLY: `format ascii 1.0`, vertex `x y z` with optional `nx ny nz` and
//! `red green blue` (uchar), faces as `vertex_indices`/`vertex_index` lists.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Point3, Vector3};

use crate::error::{Error, Result};
use crate::mesh::{MeshComponent, TriangleMesh};

pub fn read_mesh(path: &Path) -> Result<TriangleMesh> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(str::to_ascii_lowercase);
    let parsed = match ext.as_deref() {
        Some("obj") => parse_obj(&text),
        Some("ply") => parse_ply(&text),
        _ => Err(format!("unsupported mesh extension {ext:?} (expected .obj or .ply)")),
    };
    let mesh = parsed.map_err(|m| Error::parse(path, m))?;
    mesh.validate().map_err(|e| Error::parse(path, e.to_string()))?;
    Ok(mesh)
}

fn parse_floats(tokens: &[&str], line_no: usize) -> std::result::Result<Vec<f64>, String> {
    tokens
        .iter()
        .map(|t| {
            t.parse::<f64>()
                .map_err(|_| format!("line {line_no}: bad number {t:?}"))
        })
        .collect()
}

fn resolve_obj_index(token: &str, count: usize, line_no: usize) -> std::result::Result<usize, String> {
    let i: i64 = token
        .parse()
        .map_err(|_| format!("line {line_no}: bad index {token:?}"))?;
    let resolved = if i > 0 {
        i - 1
    } else if i < 0 {
        count as i64 + i
    } else {
        -1
    };
    if resolved < 0 || resolved as usize >= count {
        return Err(format!("line {line_no}: index {i} out of range ({count} defined)"));
    }
    Ok(resolved as usize)
}

pub fn parse_obj(text: &str) -> std::result::Result<TriangleMesh, String> {
    let mut vertices = Vec::new();
    let mut colors: Vec<Option<[f64; 3]>> = Vec::new();
    let mut vn = Vec::new();
    let mut vertex_normal: Vec<Option<usize>> = Vec::new();
    let mut triangles: Vec<[u32; 3]> = Vec::new();
    let mut components = Vec::new();
    let mut open: Option<(String, usize)> = None;

    for (line_no, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l)) {
        let line = line.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        let rest: Vec<&str> = parts.collect();
        match tag {
            "v" => {
                let vals = parse_floats(&rest, line_no)?;
                match vals.len() {
                    3 | 4 => colors.push(None),
                    6 | 7 => colors.push(Some([vals[3], vals[4], vals[5]])),
                    n => return Err(format!("line {line_no}: vertex with {n} values")),
                }
                vertices.push(Point3::new(vals[0], vals[1], vals[2]));
                vertex_normal.push(None);
            }
            "vn" => {
                let vals = parse_floats(&rest, line_no)?;
                if vals.len() != 3 {
                    return Err(format!("line {line_no}: normal needs 3 values"));
                }
                vn.push(Vector3::new(vals[0], vals[1], vals[2]));
            }
            "f" => {
                if rest.len() < 3 {
                    return Err(format!("line {line_no}: face needs at least 3 vertices"));
                }
                let mut idx = Vec::with_capacity(rest.len());
                for tok in &rest {
                    let mut fields = tok.split('/');
                    let v = resolve_obj_index(fields.next().unwrap_or(""), vertices.len(), line_no)?;
                    let _vt = fields.next();
                    if let Some(n) = fields.next().filter(|s| !s.is_empty()) {
                        let n = resolve_obj_index(n, vn.len(), line_no)?;
                        vertex_normal[v] = Some(n);
                    }
                    idx.push(v as u32);
                }
                for k in 1..idx.len() - 1 {
                    triangles.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            "o" | "g" => {
                if let Some((name, start)) = open.take() {
                    if triangles.len() > start {
                        components.push(MeshComponent {
                            name,
                            triangles: start..triangles.len(),
                        });
                    }
                }
                let name = rest.join(" ");
                open = Some((if name.is_empty() { format!("group{}", components.len()) } else { name }, triangles.len()));
            }
            _ => {}
        }
    }
    if let Some((name, start)) = open {
        if triangles.len() > start {
            components.push(MeshComponent {
                name,
                triangles: start..triangles.len(),
            });
        }
    }

    let vertex_colors = if !colors.is_empty() && colors.iter().all(Option::is_some) {
        Some(colors.into_iter().map(Option::unwrap).collect())
    } else {
        None
    };
    let vertex_normals = if !vertex_normal.is_empty() && vertex_normal.iter().all(Option::is_some) {
        Some(
            vertex_normal
                .into_iter()
                .map(|n| vn[n.unwrap()].try_normalize(1e-15).unwrap_or_else(Vector3::z))
                .collect(),
        )
    } else {
        None
    };
    Ok(TriangleMesh {
        vertices,
        triangles,
        vertex_colors,
        vertex_normals,
        components,
    })
}

pub fn parse_ply(text: &str) -> std::result::Result<TriangleMesh, String> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, "ply")) => {}
        _ => return Err("missing 'ply' magic".into()),
    }
    struct Element {
        name: String,
        count: usize,
        props: Vec<String>,
    }
    let mut elements: Vec<Element> = Vec::new();
    loop {
        let Some((no, line)) = lines.next() else {
            return Err("unterminated header".into());
        };
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.first().copied() {
            Some("format") => {
                if toks.get(1) != Some(&"ascii") {
                    return Err(format!("line {no}: only ascii PLY is supported"));
                }
            }
            Some("element") => {
                let count = toks
                    .get(2)
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| format!("line {no}: bad element line"))?;
                elements.push(Element {
                    name: toks.get(1).unwrap_or(&"").to_string(),
                    count,
                    props: Vec::new(),
                });
            }
            Some("property") => {
                let el = elements
                    .last_mut()
                    .ok_or_else(|| format!("line {no}: property before element"))?;
                el.props.push(toks.last().unwrap_or(&"").to_string());
            }
            Some("end_header") => break,
            _ => {}
        }
    }

    let mut vertices = Vec::new();
    let mut colors = Vec::new();
    let mut normals = Vec::new();
    let mut triangles = Vec::new();
    for el in &elements {
        let pos = |n: &str| el.props.iter().position(|p| p == n);
        for _ in 0..el.count {
            let Some((no, line)) = lines.next() else {
                return Err(format!("expected {} {} records", el.count, el.name));
            };
            let toks: Vec<&str> = line.split_whitespace().collect();
            match el.name.as_str() {
                "vertex" => {
                    let vals = parse_floats(&toks, no)?;
                    let get = |n: &str| -> std::result::Result<Option<f64>, String> {
                        match pos(n) {
                            Some(i) => vals
                                .get(i)
                                .copied()
                                .map(Some)
                                .ok_or_else(|| format!("line {no}: missing {n}")),
                            None => Ok(None),
                        }
                    };
                    let (Some(x), Some(y), Some(z)) = (get("x")?, get("y")?, get("z")?) else {
                        return Err("vertex element lacks x/y/z".into());
                    };
                    vertices.push(Point3::new(x, y, z));
                    if let (Some(r), Some(g), Some(b)) = (get("red")?, get("green")?, get("blue")?) {
                        colors.push([r / 255.0, g / 255.0, b / 255.0]);
                    }
                    if let (Some(x), Some(y), Some(z)) = (get("nx")?, get("ny")?, get("nz")?) {
                        normals.push(Vector3::new(x, y, z).try_normalize(1e-15).unwrap_or_else(Vector3::z));
                    }
                }
                "face" => {
                    let vals: Vec<usize> = toks
                        .iter()
                        .map(|t| t.parse().map_err(|_| format!("line {no}: bad index {t:?}")))
                        .collect::<std::result::Result<_, _>>()?;
                    let n = *vals.first().ok_or_else(|| format!("line {no}: empty face"))?;
                    if n < 3 || vals.len() < n + 1 {
                        return Err(format!("line {no}: malformed face"));
                    }
                    for k in 1..n - 1 {
                        triangles.push([vals[1] as u32, vals[k + 1] as u32, vals[k + 2] as u32]);
                    }
                }
                _ => {}
            }
        }
    }
    let n = vertices.len();
    Ok(TriangleMesh {
        vertices,
        triangles,
        vertex_colors: (colors.len() == n && n > 0).then_some(colors),
        vertex_normals: (normals.len() == n && n > 0).then_some(normals),
        components: Vec::new(),
    })
}

/// OBJ text including the colour extension and `o` groups.
pub fn to_obj_string(mesh: &TriangleMesh) -> String {
    let mut s = String::new();
    for (i, v) in mesh.vertices.iter().enumerate() {
        match &mesh.vertex_colors {
            Some(c) => {
                let c = c[i];
                let _ = writeln!(s, "v {} {} {} {} {} {}", v.x, v.y, v.z, c[0], c[1], c[2]);
            }
            None => {
                let _ = writeln!(s, "v {} {} {}", v.x, v.y, v.z);
            }
        }
    }
    if let Some(ns) = &mesh.vertex_normals {
        for n in ns {
            let _ = writeln!(s, "vn {} {} {}", n.x, n.y, n.z);
        }
    }
    let face = |s: &mut String, t: &[u32; 3]| {
        if mesh.vertex_normals.is_some() {
            let _ = writeln!(s, "f {0}//{0} {1}//{1} {2}//{2}", t[0] + 1, t[1] + 1, t[2] + 1);
        } else {
            let _ = writeln!(s, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1);
        }
    };
    let mut next = 0;
    let mut comps: Vec<&MeshComponent> = mesh.components.iter().collect();
    comps.sort_by_key(|c| c.triangles.start);
    for c in comps {
        if c.triangles.start < next {
            continue;
        }
        for t in &mesh.triangles[next..c.triangles.start] {
            face(&mut s, t);
        }
        let _ = writeln!(s, "o {}", c.name);
        for t in &mesh.triangles[c.triangles.clone()] {
            face(&mut s, t);
        }
        next = c.triangles.end;
    }
    if next < mesh.triangles.len() {
        if !mesh.components.is_empty() {
            let _ = writeln!(s, "o ungrouped");
        }
        for t in &mesh.triangles[next..] {
            face(&mut s, t);
        }
    }
    s
}

pub fn write_obj(mesh: &TriangleMesh, path: &Path) -> Result<()> {
    std::fs::write(path, to_obj_string(mesh)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn obj_with_colours_groups_and_polygons() {
        let text = "\
# test
v 0 0 0 1 0 0
v 1 0 0 1 0 0
v 1 1 0 1 0 0
v 0 1 0 1 0 0
vn 0 0 2
o plate
f 1//1 2//1 3//1 4//1
g coil a
f -4 -2 -1
";
        let m = parse_obj(text).unwrap();
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3], [0, 2, 3]]);
        assert_eq!(m.vertex_colors.as_ref().unwrap()[2], [1.0, 0.0, 0.0]);
        assert_eq!(m.vertex_normals.as_ref().unwrap()[3], Vector3::z());
        assert_eq!(m.components.len(), 2);
        assert_eq!(m.component("coil a").unwrap().triangles, 2..3);

        let again = parse_obj(&to_obj_string(&m)).unwrap();
        assert_eq!(again, m);
    }

    #[test]
    fn obj_errors_name_the_line() {
        let err = parse_obj("v 0 0 0\nf 1 2 3\n").unwrap_err();
        assert!(err.contains("line 2"), "{err}");
        assert!(parse_obj("v 0 x 0\n").unwrap_err().contains("line 1"));
    }

    #[test]
    fn ascii_ply_with_colours() {
        let text = "\
ply
format ascii 1.0
comment made by hand
element vertex 4
property float x
property float y
property float z
property uchar red
property uchar green
property uchar blue
element face 1
property list uchar int vertex_indices
end_header
0 0 0 255 0 0
1 0 0 255 0 0
1 1 0 0 255 0
0 1 0 0 0 255
4 0 1 2 3
";
        let m = parse_ply(text).unwrap();
        assert_eq!(m.vertices.len(), 4);
        assert_eq!(m.triangles, vec![[0, 1, 2], [0, 2, 3]]);
        assert_eq!(m.vertex_colors.unwrap()[3], [0.0, 0.0, 1.0]);
        assert!(parse_ply("ply\nformat binary_little_endian 1.0\nend_header\n").is_err());
    }

    #[test]
    fn read_mesh_reports_path() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.obj");
        std::fs::write(&p, "f 1 2 3\n").unwrap();
        let err = read_mesh(&p).unwrap_err().to_string();
        assert!(err.contains("bad.obj"), "{err}");
    }
}
