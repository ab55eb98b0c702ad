use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use super::weld::Welder;
use super::{MeshError, SourceFormat, TriangleMesh, WELD_RELATIVE_TOLERANCE};
use crate::geom::{BoundingBox, Vec3};

const ASCII_PROBE_BYTES: usize = 1024;
const BINARY_HEADER: usize = 84;
const BINARY_RECORD: usize = 50;

/// OBJ statements that describe curves or free-form surfaces.
const OBJ_UNSUPPORTED: &[&str] = &[
    "vp", "cstype", "deg", "bmat", "step", "curv", "curv2", "surf", "parm", "trim", "hole", "scrv", "sp", "end", "con",
    "l", "p",
];
/// OBJ statements that carry no geometry we need.
const OBJ_IGNORED: &[&str] = &[
    "vn", "vt", "o", "g", "s", "mg", "usemtl", "mtllib", "lod", "shadow_obj", "trace_obj", "maplib", "usemap", "c_interp",
    "d_interp", "bevel",
];

/// Format sniffing: `solid` + `facet` in the first KiB means ASCII STL; an
/// exact `84 + 50·n` length means binary STL; anything else is tried as OBJ.
pub fn detect_format(bytes: &[u8]) -> SourceFormat {
    if looks_ascii_stl(bytes) {
        SourceFormat::StlAscii
    } else if binary_size_matches(bytes) {
        SourceFormat::StlBinary
    } else {
        SourceFormat::Obj
    }
}

fn looks_ascii_stl(bytes: &[u8]) -> bool {
    let probe = &bytes[..bytes.len().min(ASCII_PROBE_BYTES)];
    let start = probe.iter().position(|b| !b.is_ascii_whitespace()).unwrap_or(probe.len());
    probe[start..].starts_with(b"solid") && probe.windows(5).any(|w| w == b"facet")
}

fn binary_facet_count(bytes: &[u8]) -> Option<u32> {
    (bytes.len() >= BINARY_HEADER).then(|| u32::from_le_bytes([bytes[80], bytes[81], bytes[82], bytes[83]]))
}

fn binary_size_matches(bytes: &[u8]) -> bool {
    binary_facet_count(bytes).is_some_and(|n| (BINARY_HEADER as u64 + BINARY_RECORD as u64 * u64::from(n)) == bytes.len() as u64)
}

/// Parses STL (ASCII or binary) or Wavefront OBJ and welds the vertices.
/// STL facet normals are ignored; orientation comes from vertex order.
pub fn parse_mesh(bytes: &[u8], filename_hint: &str) -> Result<TriangleMesh, MeshError> {
    if bytes.is_empty() {
        return Err(MeshError::Malformed("empty file".into()));
    }
    let (format, soup) = match detect_format(bytes) {
        SourceFormat::StlAscii => match parse_ascii_stl(bytes) {
            Ok(s) => (SourceFormat::StlAscii, s),
            // binary files are allowed to start with "solid"
            Err(e) if binary_size_matches(bytes) => {
                let _ = e;
                (SourceFormat::StlBinary, parse_binary_stl(bytes)?)
            }
            Err(e) => return Err(e),
        },
        SourceFormat::StlBinary => (SourceFormat::StlBinary, parse_binary_stl(bytes)?),
        SourceFormat::Obj => match parse_obj(bytes) {
            Ok(s) => (SourceFormat::Obj, s),
            Err(MeshError::Malformed(obj_msg)) => {
                return Err(MeshError::Malformed(explain_unrecognised(bytes, filename_hint, &obj_msg)));
            }
            Err(e) => return Err(e),
        },
    };
    Ok(weld(soup, format))
}

fn explain_unrecognised(bytes: &[u8], hint: &str, obj_msg: &str) -> String {
    let lower = hint.to_ascii_lowercase();
    match binary_facet_count(bytes) {
        Some(n) if lower.ends_with(".stl") || core::str::from_utf8(bytes).is_err() => {
            let expected = BINARY_HEADER as u64 + BINARY_RECORD as u64 * u64::from(n);
            format!("binary STL header declares {n} facets ({expected} bytes) but the file has {} bytes", bytes.len())
        }
        _ if lower.ends_with(".stl") => "file is neither ASCII nor binary STL".to_string(),
        _ => format!("not STL, and not valid OBJ: {obj_msg}"),
    }
}

/// Either a soup of corner triples (STL) or indexed faces (OBJ).
enum Soup {
    Facets(Vec<[Vec3; 3]>),
    Indexed { positions: Vec<Vec3>, faces: Vec<[u32; 3]> },
}

fn parse_f64(tok: Option<&str>, line: usize) -> Result<f64, MeshError> {
    let tok = tok.ok_or_else(|| MeshError::Malformed(format!("line {line}: missing number")))?;
    let v: f64 = tok.parse().map_err(|_| MeshError::Malformed(format!("line {line}: cannot parse number {tok:?}")))?;
    if !v.is_finite() {
        return Err(MeshError::Malformed(format!("line {line}: non-finite number {tok:?}")));
    }
    Ok(v)
}

fn parse_vec3<'a>(it: &mut impl Iterator<Item = &'a str>, line: usize) -> Result<Vec3, MeshError> {
    Ok(Vec3::new(parse_f64(it.next(), line)?, parse_f64(it.next(), line)?, parse_f64(it.next(), line)?))
}

fn parse_ascii_stl(bytes: &[u8]) -> Result<Soup, MeshError> {
    #[derive(PartialEq, Clone, Copy)]
    enum State {
        Outside,
        Solid,
        Facet,
        Loop,
        EndLoop,
    }
    let text = String::from_utf8_lossy(bytes);
    let mut state = State::Outside;
    let mut facets = Vec::new();
    let mut corners: Vec<Vec3> = Vec::with_capacity(3);
    let mut saw_solid = false;
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let mut toks = raw.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        let bad = |what: &str| MeshError::Malformed(format!("line {line}: unexpected {what:?}"));
        match (state, kw) {
            (State::Outside, "solid") => {
                state = State::Solid;
                saw_solid = true;
            }
            (State::Solid, "facet") => {
                if toks.next() != Some("normal") {
                    return Err(bad("facet without normal"));
                }
                // recomputed from winding later
                parse_vec3(&mut toks, line)?;
                state = State::Facet;
            }
            (State::Solid, "endsolid") => state = State::Outside,
            (State::Facet, "outer") => {
                if toks.next() != Some("loop") {
                    return Err(bad("outer"));
                }
                state = State::Loop;
                corners.clear();
            }
            (State::Loop, "vertex") => {
                if corners.len() == 3 {
                    return Err(MeshError::Malformed(format!("line {line}: facet with more than 3 vertices")));
                }
                corners.push(parse_vec3(&mut toks, line)?);
            }
            (State::Loop, "endloop") => {
                if corners.len() != 3 {
                    return Err(MeshError::Malformed(format!("line {line}: facet with {} vertices", corners.len())));
                }
                facets.push([corners[0], corners[1], corners[2]]);
                state = State::EndLoop;
            }
            (State::EndLoop, "endfacet") => state = State::Solid,
            _ => return Err(bad(kw)),
        }
        if matches!(kw, "solid" | "endsolid") {
            continue;
        }
        if toks.next().is_some() {
            return Err(MeshError::Malformed(format!("line {line}: trailing tokens after {kw:?}")));
        }
    }
    if !saw_solid || state == State::Facet || state == State::Loop || state == State::EndLoop {
        return Err(MeshError::Malformed("ASCII STL ends inside a facet".into()));
    }
    if facets.is_empty() {
        return Err(MeshError::Malformed("ASCII STL has no facets".into()));
    }
    Ok(Soup::Facets(facets))
}

fn parse_binary_stl(bytes: &[u8]) -> Result<Soup, MeshError> {
    let n = binary_facet_count(bytes).ok_or_else(|| MeshError::Malformed("binary STL shorter than its 84-byte header".into()))?;
    if !binary_size_matches(bytes) {
        let expected = BINARY_HEADER as u64 + BINARY_RECORD as u64 * u64::from(n);
        return Err(MeshError::Malformed(format!(
            "binary STL header declares {n} facets ({expected} bytes) but the file has {} bytes",
            bytes.len()
        )));
    }
    let rd = |off: usize| f64::from(f32::from_le_bytes([bytes[off], bytes[off + 1], bytes[off + 2], bytes[off + 3]]));
    let mut facets = Vec::with_capacity(n as usize);
    for k in 0..n as usize {
        let base = BINARY_HEADER + k * BINARY_RECORD + 12;
        let mut c = [Vec3::ZERO; 3];
        for (j, corner) in c.iter_mut().enumerate() {
            let o = base + 12 * j;
            *corner = Vec3::new(rd(o), rd(o + 4), rd(o + 8));
            if !corner.is_finite() {
                return Err(MeshError::Malformed(format!("facet {k}: non-finite vertex")));
            }
        }
        facets.push(c);
    }
    if facets.is_empty() {
        return Err(MeshError::Malformed("binary STL has no facets".into()));
    }
    Ok(Soup::Facets(facets))
}

fn parse_obj(bytes: &[u8]) -> Result<Soup, MeshError> {
    let text = core::str::from_utf8(bytes).map_err(|_| MeshError::Malformed("not UTF-8 text".into()))?;
    let mut positions = Vec::new();
    // Raw 1-based (already resolved for negative) indices, checked at the end.
    let mut polys: Vec<(usize, Vec<i64>)> = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("");
        let mut toks = content.split_whitespace();
        let Some(kw) = toks.next() else { continue };
        match kw {
            "v" => {
                let p = parse_vec3(&mut toks, line)?;
                // optional w
                if let Some(w) = toks.next() {
                    parse_f64(Some(w), line)?;
                }
                positions.push(p);
            }
            "f" => {
                let mut idx = Vec::new();
                for t in toks {
                    let head = t.split('/').next().unwrap_or("");
                    let k: i64 = head
                        .parse()
                        .map_err(|_| MeshError::Malformed(format!("line {line}: bad face index {t:?}")))?;
                    let resolved = match k {
                        0 => return Err(MeshError::Malformed(format!("line {line}: face index 0"))),
                        k if k < 0 => positions.len() as i64 + k + 1,
                        k => k,
                    };
                    if resolved < 1 {
                        return Err(MeshError::Malformed(format!("line {line}: face references missing vertex {k}")));
                    }
                    idx.push(resolved);
                }
                if idx.len() < 3 {
                    return Err(MeshError::Malformed(format!("line {line}: face with fewer than 3 vertices")));
                }
                polys.push((line, idx));
            }
            k if OBJ_UNSUPPORTED.contains(&k) => {
                return Err(MeshError::UnsupportedFeature(format!("line {line}: OBJ statement {k:?} (only v/f are supported)")));
            }
            k if OBJ_IGNORED.contains(&k) => {}
            k => return Err(MeshError::Malformed(format!("line {line}: unknown OBJ statement {k:?}"))),
        }
    }
    let n = positions.len() as i64;
    let mut faces = Vec::new();
    for (line, idx) in polys {
        if let Some(bad) = idx.iter().find(|&&k| k > n) {
            return Err(MeshError::Malformed(format!("line {line}: face references missing vertex {bad}")));
        }
        let i0 = (idx[0] - 1) as u32;
        for w in idx[1..].windows(2) {
            faces.push([i0, (w[0] - 1) as u32, (w[1] - 1) as u32]);
        }
    }
    if faces.is_empty() {
        return Err(MeshError::Malformed("OBJ has no faces".into()));
    }
    Ok(Soup::Indexed { positions, faces })
}

fn weld(soup: Soup, format: SourceFormat) -> TriangleMesh {
    let (positions, faces): (Vec<Vec3>, Vec<[u32; 3]>) = match soup {
        Soup::Facets(f) => {
            let positions = f.iter().flat_map(|c| c.iter().copied()).collect();
            let faces = (0..f.len() as u32).map(|k| [3 * k, 3 * k + 1, 3 * k + 2]).collect();
            (positions, faces)
        }
        Soup::Indexed { positions, faces } => (positions, faces),
    };
    let diag = BoundingBox::from_points(positions.iter().copied()).map_or(0.0, |b| b.diagonal());
    let mut welder = Welder::new(diag * WELD_RELATIVE_TOLERANCE);
    let remap: Vec<u32> = positions.iter().map(|&p| welder.insert(p)).collect();
    let mut triangles = Vec::with_capacity(faces.len());
    let mut collapsed = 0;
    for f in faces {
        let t = [remap[f[0] as usize], remap[f[1] as usize], remap[f[2] as usize]];
        if t[0] == t[1] || t[1] == t[2] || t[0] == t[2] {
            collapsed += 1;
        } else {
            triangles.push(t);
        }
    }
    // Drop vertices no triangle references (OBJ may list extras).
    let mut used = alloc::vec![u32::MAX; welder.points.len()];
    let mut vertices = Vec::new();
    for t in &mut triangles {
        for k in t.iter_mut() {
            if used[*k as usize] == u32::MAX {
                used[*k as usize] = vertices.len() as u32;
                vertices.push(welder.points[*k as usize]);
            }
            *k = used[*k as usize];
        }
    }
    TriangleMesh { vertices, triangles, source_format: format, collapsed_facets: collapsed }
}
