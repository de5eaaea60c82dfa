//! Triangle meshes and their ASCII PLY / OBJ readers.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Vector3;

use super::ModelError;

/// Brute-force diameter is used below this many vertices.
const BRUTE_FORCE_DIAMETER_LIMIT: usize = 10_000;

/// Triangle mesh in the object frame (meters).
#[derive(Debug, Clone, PartialEq)]
pub struct Mesh {
    vertices: Vec<Vector3<f64>>,
    faces: Vec<[usize; 3]>,
}

impl Mesh {
    /// Validates vertex count, non-coplanarity and face indices.
    pub fn new(vertices: Vec<Vector3<f64>>, faces: Vec<[usize; 3]>) -> Result<Self, ModelError> {
        if vertices.len() < 4 {
            return Err(ModelError::DegenerateMesh(format!(
                "need at least 4 vertices, got {}",
                vertices.len()
            )));
        }
        if let Some(v) = vertices.iter().find(|v| !v.iter().all(|c| c.is_finite())) {
            return Err(ModelError::DegenerateMesh(format!("non-finite vertex {v:?}")));
        }
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&bad) = f.iter().find(|&&i| i >= vertices.len()) {
                return Err(ModelError::DegenerateMesh(format!(
                    "face {fi} references vertex {bad}, mesh has {}",
                    vertices.len()
                )));
            }
        }
        let mesh = Self { vertices, faces };
        let thickness = mesh.min_extent();
        if thickness <= 1e-9 * mesh.bbox_diagonal().max(f64::MIN_POSITIVE) {
            return Err(ModelError::DegenerateMesh("all vertices are coplanar".into()));
        }
        Ok(mesh)
    }

    pub fn vertices(&self) -> &[Vector3<f64>] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn centroid(&self) -> Vector3<f64> {
        self.vertices.iter().sum::<Vector3<f64>>() / self.vertices.len() as f64
    }

    pub fn bounding_box(&self) -> (Vector3<f64>, Vector3<f64>) {
        let mut lo = Vector3::repeat(f64::INFINITY);
        let mut hi = Vector3::repeat(f64::NEG_INFINITY);
        for v in &self.vertices {
            lo = lo.inf(v);
            hi = hi.sup(v);
        }
        (lo, hi)
    }

    pub fn bbox_diagonal(&self) -> f64 {
        let (lo, hi) = self.bounding_box();
        (hi - lo).norm()
    }

    /// Largest vertex distance from the origin.
    pub fn bounding_radius(&self) -> f64 {
        self.vertices.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    // smallest standard deviation along a principal axis
    fn min_extent(&self) -> f64 {
        let c = self.centroid();
        let mut cov = nalgebra::Matrix3::zeros();
        for v in &self.vertices {
            let d = v - c;
            cov += d * d.transpose();
        }
        cov /= self.vertices.len() as f64;
        let eig = cov.symmetric_eigenvalues();
        eig.min().max(0.0).sqrt()
    }

    /// Checks that the object frame origin sits at the object's center:
    /// the vertex centroid must lie within 10% of the bounding-box
    /// diagonal from the origin.
    pub fn check_centered(&self) -> Result<(), ModelError> {
        let offset = self.centroid().norm();
        let limit = 0.1 * self.bbox_diagonal();
        if offset > limit {
            return Err(ModelError::Invariant(format!(
                "mesh centroid is {offset:.6} m from the origin, limit is 10% of the bounding-box diagonal ({limit:.6} m)"
            )));
        }
        Ok(())
    }

    /// Serializes as ASCII PLY. Coordinates use the shortest decimal
    /// representation that reads back to the same `f64`.
    pub fn to_ply_string(&self) -> String {
        let mut s = String::new();
        s.push_str("ply\nformat ascii 1.0\n");
        let _ = writeln!(s, "element vertex {}", self.vertices.len());
        s.push_str("property double x\nproperty double y\nproperty double z\n");
        let _ = writeln!(s, "element face {}", self.faces.len());
        s.push_str("property list uchar int vertex_indices\nend_header\n");
        for v in &self.vertices {
            let _ = writeln!(s, "{:?} {:?} {:?}", v.x, v.y, v.z);
        }
        for f in &self.faces {
            let _ = writeln!(s, "3 {} {} {}", f[0], f[1], f[2]);
        }
        s
    }

    pub fn write_ply(&self, path: &Path) -> Result<(), ModelError> {
        std::fs::write(path, self.to_ply_string()).map_err(|e| ModelError::io(path, e))
    }
}

/// Loads an ASCII PLY or OBJ mesh, chosen by file extension.
pub fn load_mesh(path: &Path) -> Result<Mesh, ModelError> {
    let bytes = std::fs::read(path).map_err(|e| ModelError::io(path, e))?;
    let ext = path.extension().and_then(|e| e.to_str()).map(str::to_ascii_lowercase);
    match ext.as_deref() {
        Some("ply") => parse_ply(&bytes),
        Some("obj") => {
            let text = std::str::from_utf8(&bytes)
                .map_err(|_| ModelError::Parse("OBJ file is not valid UTF-8".into()))?;
            parse_obj(text)
        }
        _ => Err(ModelError::Parse(format!("unsupported mesh format: {}", path.display()))),
    }
}

#[derive(Debug)]
enum PlyProperty {
    Scalar(String),
    List(String),
}

#[derive(Debug)]
struct PlyElement {
    name: String,
    count: usize,
    properties: Vec<PlyProperty>,
}

/// Parses an ASCII PLY file. Binary encodings are rejected.
pub fn parse_ply(bytes: &[u8]) -> Result<Mesh, ModelError> {
    let perr = |m: String| ModelError::Parse(m);
    let header_end = find_subslice(bytes, b"end_header")
        .ok_or_else(|| perr("PLY header has no end_header".into()))?;
    let header = std::str::from_utf8(&bytes[..header_end])
        .map_err(|_| perr("PLY header is not valid UTF-8".into()))?;
    let mut lines = header.lines();
    if lines.next().map(str::trim) != Some("ply") {
        return Err(perr("missing 'ply' magic".into()));
    }
    let mut elements: Vec<PlyElement> = Vec::new();
    let mut format_seen = false;
    for line in lines {
        let toks: Vec<&str> = line.split_whitespace().collect();
        match toks.as_slice() {
            [] | ["comment", ..] | ["obj_info", ..] => {}
            ["format", fmt, _version] => {
                if *fmt != "ascii" {
                    return Err(perr(format!("binary PLY ({fmt}) is not supported, convert to ASCII")));
                }
                format_seen = true;
            }
            ["element", name, count] => elements.push(PlyElement {
                name: (*name).to_string(),
                count: count.parse().map_err(|_| perr(format!("bad element count '{count}'")))?,
                properties: Vec::new(),
            }),
            ["property", "list", _, _, name] => elements
                .last_mut()
                .ok_or_else(|| perr("property before any element".into()))?
                .properties
                .push(PlyProperty::List((*name).to_string())),
            ["property", _, name] => elements
                .last_mut()
                .ok_or_else(|| perr("property before any element".into()))?
                .properties
                .push(PlyProperty::Scalar((*name).to_string())),
            _ => return Err(perr(format!("unrecognized PLY header line '{line}'"))),
        }
    }
    if !format_seen {
        return Err(perr("PLY header has no format line".into()));
    }
    let body = std::str::from_utf8(&bytes[header_end + b"end_header".len()..])
        .map_err(|_| perr("PLY body is not valid UTF-8".into()))?;
    let mut body_lines = body.lines().filter(|l| !l.trim().is_empty());

    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for el in &elements {
        let xyz = if el.name == "vertex" {
            let find = |n: &str| {
                el.properties
                    .iter()
                    .position(|p| matches!(p, PlyProperty::Scalar(s) if s == n))
                    .ok_or_else(|| perr(format!("vertex element lacks property '{n}'")))
            };
            Some([find("x")?, find("y")?, find("z")?])
        } else {
            None
        };
        for row in 0..el.count {
            let line = body_lines
                .next()
                .ok_or_else(|| perr(format!("file ends inside element '{}' (row {row})", el.name)))?;
            let mut toks = line.split_whitespace();
            let mut scalars: Vec<f64> = Vec::with_capacity(el.properties.len());
            let mut list: Option<Vec<usize>> = None;
            for prop in &el.properties {
                match prop {
                    PlyProperty::Scalar(name) => {
                        let t = toks.next().ok_or_else(|| perr(format!("missing '{name}' on line '{line}'")))?;
                        scalars.push(t.parse().map_err(|_| perr(format!("bad number '{t}'")))?);
                    }
                    PlyProperty::List(name) => {
                        scalars.push(f64::NAN);
                        let t = toks.next().ok_or_else(|| perr(format!("missing '{name}' count")))?;
                        let n: usize = t.parse().map_err(|_| perr(format!("bad list count '{t}'")))?;
                        let mut items = Vec::with_capacity(n);
                        for _ in 0..n {
                            let t = toks.next().ok_or_else(|| perr(format!("short list on line '{line}'")))?;
                            items.push(t.parse().map_err(|_| perr(format!("bad index '{t}'")))?);
                        }
                        if matches!(name.as_str(), "vertex_indices" | "vertex_index") {
                            list = Some(items);
                        }
                    }
                }
            }
            if toks.next().is_some() {
                return Err(perr(format!("trailing values on line '{line}'")));
            }
            if let Some([x, y, z]) = xyz {
                vertices.push(Vector3::new(scalars[x], scalars[y], scalars[z]));
            } else if el.name == "face" {
                let poly = list.ok_or_else(|| perr("face element lacks vertex_indices".into()))?;
                triangulate_into(&poly, &mut faces)?;
            }
        }
    }
    if body_lines.next().is_some() {
        return Err(perr("data after the last declared element".into()));
    }
    Mesh::new(vertices, faces)
}

/// Parses a Wavefront OBJ file (`v` and `f` records; everything else ignored).
pub fn parse_obj(text: &str) -> Result<Mesh, ModelError> {
    let perr = |m: String| ModelError::Parse(m);
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, line) in text.lines().enumerate() {
        let mut toks = line.split_whitespace();
        match toks.next() {
            Some("v") => {
                let c: Vec<f64> = toks
                    .map(|t| t.parse().map_err(|_| perr(format!("line {}: bad number '{t}'", lineno + 1))))
                    .collect::<Result<_, _>>()?;
                if c.len() < 3 {
                    return Err(perr(format!("line {}: vertex needs 3 coordinates", lineno + 1)));
                }
                vertices.push(Vector3::new(c[0], c[1], c[2]));
            }
            Some("f") => {
                let mut poly = Vec::new();
                for t in toks {
                    let idx_str = t.split('/').next().unwrap_or("");
                    let idx: i64 = idx_str
                        .parse()
                        .map_err(|_| perr(format!("line {}: bad face index '{t}'", lineno + 1)))?;
                    let resolved = match idx {
                        i if i > 0 => (i - 1) as usize,
                        i if i < 0 && (-i) as usize <= vertices.len() => vertices.len() - (-i) as usize,
                        _ => return Err(perr(format!("line {}: face index {idx} out of range", lineno + 1))),
                    };
                    poly.push(resolved);
                }
                triangulate_into(&poly, &mut faces)?;
            }
            _ => {}
        }
    }
    if let Some(bad) = faces.iter().flatten().find(|&&i| i >= vertices.len()) {
        return Err(perr(format!("face index {} out of range ({} vertices)", bad + 1, vertices.len())));
    }
    Mesh::new(vertices, faces)
}

fn triangulate_into(poly: &[usize], faces: &mut Vec<[usize; 3]>) -> Result<(), ModelError> {
    if poly.len() < 3 {
        return Err(ModelError::Parse(format!("face with {} vertices", poly.len())));
    }
    for i in 1..poly.len() - 1 {
        faces.push([poly[0], poly[i], poly[i + 1]]);
    }
    Ok(())
}

fn find_subslice(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

/// Maximum Euclidean distance over all vertex pairs.
pub fn model_diameter(mesh: &Mesh) -> f64 {
    point_set_diameter(mesh.vertices())
}

pub(crate) fn point_set_diameter(points: &[Vector3<f64>]) -> f64 {
    if points.len() <= BRUTE_FORCE_DIAMETER_LIMIT {
        brute_force_diameter(points)
    } else {
        pruned_diameter(points)
    }
}

fn brute_force_diameter(points: &[Vector3<f64>]) -> f64 {
    let mut best = 0.0f64;
    for (i, a) in points.iter().enumerate() {
        for b in &points[i + 1..] {
            best = best.max((a - b).norm_squared());
        }
    }
    best.sqrt()
}

// Exact pair search ordered by distance from the centroid. A pair (i, j)
// can only beat the incumbent when r_i + r_j exceeds it.
fn pruned_diameter(points: &[Vector3<f64>]) -> f64 {
    let c = points.iter().sum::<Vector3<f64>>() / points.len() as f64;
    let mut by_radius: Vec<(f64, usize)> = points.iter().enumerate().map(|(i, p)| ((p - c).norm(), i)).collect();
    by_radius.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut best_sq = 0.0f64;
    for (ai, &(ra, ia)) in by_radius.iter().enumerate() {
        let best = best_sq.sqrt();
        if 2.0 * ra <= best {
            break;
        }
        for &(rb, ib) in &by_radius[ai + 1..] {
            if ra + rb <= best_sq.sqrt() {
                break;
            }
            best_sq = best_sq.max((points[ia] - points[ib]).norm_squared());
        }
    }
    best_sq.sqrt()
}
