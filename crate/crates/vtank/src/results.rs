//! Result tables (semicolon CSV), result packaging and integrity checks.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use vtank_core::kpi::{KpiSummary, SliceCurve, TimeSeries};
use vtank_core::mesh::Polyline;
use vtank_core::query::Coordinate;
use vtank_core::PhysicalParameters;

use crate::blobs::sha256_hex;
use crate::error::{Error, Result};

pub const SIGNIFICANT_DIGITS: usize = 15;
pub const MANIFEST_FILE: &str = "results/manifest.json";

/// Files every complete run must have, relative to the workdir.
pub const REQUIRED_ARTIFACTS: [&str; 8] = [
    "results/summary.csv",
    "results/forces.csv",
    "results/motion.csv",
    "results/waterline.csv",
    "fields/pressure.vtk",
    "fields/elevation.csv",
    "fields/wetted.csv",
    "params/derived.txt",
];

/// Decimal text with 15 significant digits, trailing zeros dropped but at
/// least one fractional digit (`3.0`). Very large or small magnitudes use
/// exponent form (`1.5e-7`).
pub fn fmt_num(v: f64) -> String {
    if v == 0.0 {
        return "0.0".into();
    }
    if !v.is_finite() {
        return format!("{v}");
    }
    let s = format!("{:.*e}", SIGNIFICANT_DIGITS - 1, v);
    let (mant, exp) = s.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    let neg = mant.starts_with('-');
    let digits: String = mant.chars().filter(|c| c.is_ascii_digit()).collect();
    let digits = digits.trim_end_matches('0');
    let digits = if digits.is_empty() { "0" } else { digits };
    let sign = if neg { "-" } else { "" };
    if (-5..15).contains(&exp) {
        let (int, frac) = if exp >= 0 {
            let e = exp as usize + 1;
            if digits.len() > e {
                (digits[..e].to_string(), digits[e..].to_string())
            } else {
                (format!("{digits}{}", "0".repeat(e - digits.len())), String::new())
            }
        } else {
            ("0".to_string(), format!("{}{digits}", "0".repeat((-exp - 1) as usize)))
        };
        let frac = if frac.is_empty() { "0".to_string() } else { frac };
        format!("{sign}{int}.{frac}")
    } else {
        let (first, rest) = digits.split_at(1);
        let rest = if rest.is_empty() { "0" } else { rest };
        format!("{sign}{first}.{rest}e{exp}")
    }
}

/// A parsed semicolon table.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        self.rows.push(row);
    }

    pub fn to_text(&self) -> String {
        let mut out = self.header.join(";");
        out.push('\n');
        for r in &self.rows {
            out.push_str(&r.join(";"));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.split('\n');
        let header: Vec<String> = lines
            .next()
            .filter(|h| !h.is_empty())
            .ok_or_else(|| Error::validation("csv: missing header"))?
            .split(';')
            .map(str::to_string)
            .collect();
        let mut rows = Vec::new();
        for (i, l) in lines.enumerate() {
            if l.is_empty() {
                continue;
            }
            let r: Vec<String> = l.split(';').map(str::to_string).collect();
            if r.len() != header.len() {
                return Err(Error::validation(format!("csv line {}: {} fields, expected {}", i + 2, r.len(), header.len())));
            }
            rows.push(r);
        }
        Ok(Self { header, rows })
    }

    pub fn column(&self, name: &str) -> Result<usize> {
        self.header.iter().position(|h| h == name).ok_or_else(|| Error::validation(format!("csv: missing column {name}")))
    }

    pub fn numbers(&self, col: usize) -> Result<Vec<f64>> {
        self.rows
            .iter()
            .map(|r| r[col].parse::<f64>().map_err(|e| Error::validation(format!("csv value {:?}: {e}", r[col]))))
            .collect()
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    Table::parse(&fs::read_to_string(path)?)
}

/// Extra scalar rows appended to the summary after the KPIs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SummaryExtras {
    pub lwl: f64,
    pub re: f64,
    pub fr: f64,
    pub cf: f64,
}

pub fn summary_table(k: &KpiSummary, p: &PhysicalParameters, x: &SummaryExtras) -> Table {
    let mut t = Table::new(&["name", "value", "unit"]);
    let mut row = |n: &str, v: f64, u: &str| t.push(vec![n.into(), fmt_num(v), u.into()]);
    for (n, v, u) in k.rows() {
        row(n, v, u);
    }
    row("velocity", p.velocity, "m/s");
    row("mass", p.mass, "kg");
    row("trim_angle", p.trim_angle, "deg");
    row("water_temperature", p.water_temperature, "degC");
    row("water_z", p.water_z, "m");
    row("lwl", x.lwl, "m");
    row("re", x.re, "-");
    row("fr", x.fr, "-");
    row("cf", x.cf, "-");
    t
}

/// `name -> value` from summary.csv text.
pub fn parse_summary(text: &str) -> Result<Vec<(String, f64)>> {
    let t = Table::parse(text)?;
    if t.header != ["name", "value", "unit"] {
        return Err(Error::validation("summary.csv: unexpected header"));
    }
    let (n, v) = (t.column("name")?, t.column("value")?);
    t.rows
        .iter()
        .map(|r| Ok((r[n].clone(), r[v].parse::<f64>().map_err(|e| Error::validation(format!("summary value: {e}")))?)))
        .collect()
}

pub fn kpis_from_summary(text: &str) -> Result<KpiSummary> {
    let rows = parse_summary(text)?;
    let get = |name: &str| {
        rows.iter().find(|(n, _)| n == name).map(|(_, v)| *v).ok_or_else(|| Error::validation(format!("summary.csv: missing {name}")))
    };
    Ok(KpiSummary {
        total_drag: get("total_drag")?,
        p_max: get("p_max")?,
        p_min: get("p_min")?,
        max_wave_height_on_hull: get("max_wave_height")?,
        wsa: get("wsa")?,
        final_sink: get("final_sink")?,
        final_trim: get("final_trim")?,
    })
}

/// Value of a dashboard coordinate in a summary table.
pub fn summary_coordinate(rows: &[(String, f64)], c: Coordinate) -> Option<f64> {
    rows.iter().find(|(n, _)| n == c.as_str()).map(|(_, v)| *v)
}

pub fn series_table(series: &[&TimeSeries]) -> Table {
    let mut header = vec!["t"];
    header.extend(series.iter().map(|s| s.name.as_str()));
    let mut t = Table::new(&header);
    let n = series.first().map_or(0, |s| s.samples.len());
    for i in 0..n {
        let mut row = vec![fmt_num(series[0].samples[i].0)];
        row.extend(series.iter().map(|s| fmt_num(s.samples[i].1)));
        t.push(row);
    }
    t
}

pub fn waterline_table(lines: &[Polyline]) -> Table {
    let mut t = Table::new(&["loop", "x", "y", "z"]);
    for (i, l) in lines.iter().enumerate() {
        let pts = l.points.iter().chain(if l.closed { l.points.first() } else { None });
        for p in pts {
            t.push(vec![i.to_string(), fmt_num(p.x), fmt_num(p.y), fmt_num(p.z)]);
        }
    }
    t
}

pub fn slice_table(c: &SliceCurve) -> Table {
    let mut t = Table::new(&["s", "x", "z", "p"]);
    for p in &c.points {
        t.push(vec![fmt_num(p.s), fmt_num(p.x), fmt_num(p.z), fmt_num(p.value)]);
    }
    t
}

pub fn slice_file_name(offset: f64) -> String {
    format!("slice_{}.csv", fmt_num(offset))
}

pub struct ResultSet<'a> {
    pub kpis: &'a KpiSummary,
    pub params: &'a PhysicalParameters,
    pub extras: SummaryExtras,
    pub force: &'a TimeSeries,
    pub sink: &'a TimeSeries,
    pub trim: &'a TimeSeries,
    pub waterline: &'a [Polyline],
    pub slices: &'a [SliceCurve],
}

/// Writes the result tables into `dir`; returns the file names written.
pub fn write_results_csv(r: &ResultSet<'_>, dir: &Path) -> io::Result<Vec<String>> {
    fs::create_dir_all(dir)?;
    let mut files = vec![
        ("summary.csv".to_string(), summary_table(r.kpis, r.params, &r.extras)),
        ("forces.csv".to_string(), series_table(&[r.force])),
        ("motion.csv".to_string(), series_table(&[r.sink, r.trim])),
        ("waterline.csv".to_string(), waterline_table(r.waterline)),
    ];
    for c in r.slices {
        files.push((slice_file_name(c.offset), slice_table(c)));
    }
    for (name, t) in &files {
        fs::write(dir.join(name), t.to_text())?;
    }
    Ok(files.into_iter().map(|(n, _)| n).collect())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub files: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = serde_json::to_vec_pretty(self).expect("manifest serializes");
        v.push(b'\n');
        v
    }

    pub fn find(&self, artifact: &str) -> Option<&ManifestEntry> {
        self.files.iter().find(|e| e.path == artifact).or_else(|| {
            let hits: Vec<_> = self.files.iter().filter(|e| e.path.rsplit('/').next() == Some(artifact)).collect();
            (hits.len() == 1).then(|| hits[0])
        })
    }
}

fn list_files(root: &Path, sub: &str, out: &mut Vec<String>) -> io::Result<()> {
    let dir = root.join(sub);
    if !dir.is_dir() {
        return Ok(());
    }
    for e in fs::read_dir(&dir)? {
        let e = e?;
        let name = e.file_name().to_string_lossy().into_owned();
        let rel = format!("{sub}/{name}");
        if e.file_type()?.is_dir() {
            list_files(root, &rel, out)?;
        } else if rel != MANIFEST_FILE {
            out.push(rel);
        }
    }
    Ok(())
}

/// Digests every file under `results/`, `fields/` and `params/` into
/// `results/manifest.json`. Fails with MISSING_ARTIFACT if a required file
/// is absent.
pub fn package_results(workdir: &Path) -> Result<Manifest> {
    for a in REQUIRED_ARTIFACTS {
        if !workdir.join(a).is_file() {
            return Err(Error::Validation(format!("MISSING_ARTIFACT: {a}")));
        }
    }
    let mut paths = Vec::new();
    for sub in ["params", "fields", "results"] {
        list_files(workdir, sub, &mut paths)?;
    }
    paths.sort();
    let mut files = Vec::new();
    for p in paths {
        let bytes = fs::read(workdir.join(&p))?;
        files.push(ManifestEntry { sha256: sha256_hex(&bytes), bytes: bytes.len() as u64, path: p });
    }
    let m = Manifest { files };
    fs::write(workdir.join(MANIFEST_FILE), m.to_bytes())?;
    Ok(m)
}

/// Checks `bytes` against a manifest entry.
pub fn verify_artifact(entry: &ManifestEntry, bytes: &[u8]) -> Result<()> {
    if sha256_hex(bytes) != entry.sha256 || bytes.len() as u64 != entry.bytes {
        return Err(Error::Internal(format!("INTEGRITY: {} does not match its manifest digest", entry.path)));
    }
    Ok(())
}

/// Re-reads a packaged workdir and checks every digest.
pub fn verify_package(workdir: &Path) -> Result<Manifest> {
    let m: Manifest = serde_json::from_slice(&fs::read(workdir.join(MANIFEST_FILE))?)?;
    for e in &m.files {
        let bytes = fs::read(workdir.join(&e.path)).map_err(|_| Error::Validation(format!("MISSING_ARTIFACT: {}", e.path)))?;
        verify_artifact(e, &bytes)?;
    }
    Ok(m)
}
