//! Simulation setups: the built-in reference solver and external setups
//! made of two executables, `build_prepare` and `run`, each taking the
//! workdir as its only argument.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use vtank_core::mesh::{parse_mesh, WatertightMesh};
use vtank_core::solver::{parametrize, solve};

use crate::blobs::sha256_hex;
use crate::fields::write_fields;
use crate::inp::{LincosimInp, INP_FILE};
use crate::model::REFERENCE_SETUP;
use crate::results::fmt_num;

pub const DERIVED_FILE: &str = "params/derived.txt";

pub trait SimSetupPlugin {
    /// Consumes `lincosim.inp`, writes `params/`.
    fn build_prepare(&self, workdir: &Path) -> Result<(), String>;
    /// Consumes `params/` and the geometry, writes `fields/`.
    fn run(&self, workdir: &Path) -> Result<(), String>;
}

pub fn read_inp(workdir: &Path) -> Result<LincosimInp, String> {
    let bytes = fs::read(workdir.join(INP_FILE)).map_err(|e| format!("{INP_FILE}: {e}"))?;
    LincosimInp::parse(&bytes).map_err(|e| e.to_string())
}

/// Reads, checks and validates the hull named in the inp.
pub fn load_geometry(workdir: &Path, inp: &LincosimInp) -> Result<WatertightMesh, String> {
    let path = workdir.join(&inp.geometry.file);
    let bytes = fs::read(&path).map_err(|e| format!("geometry {}: {e}", inp.geometry.file))?;
    if sha256_hex(&bytes) != inp.geometry.digest {
        return Err(format!("geometry {} does not match its digest", inp.geometry.file));
    }
    let mesh = parse_mesh(&bytes, &inp.geometry.file).map_err(|e| e.to_string())?;
    WatertightMesh::new(mesh).map_err(|e| e.to_string())
}

pub struct ReferenceSetup;

impl SimSetupPlugin for ReferenceSetup {
    fn build_prepare(&self, workdir: &Path) -> Result<(), String> {
        let inp = read_inp(workdir)?;
        let mesh = load_geometry(workdir, &inp)?;
        let params = inp.params();
        params.validate().map_err(|e| e.to_string())?;
        let p = parametrize(&mesh, &params).map_err(|e| e.to_string())?;
        for w in &p.warnings {
            log::warn!("{w}");
        }
        let mut text = String::new();
        for (name, v) in p.derived.entries() {
            text.push_str(&format!("{name} {}\n", fmt_num(v)));
        }
        fs::create_dir_all(workdir.join("params")).map_err(|e| e.to_string())?;
        fs::write(workdir.join(DERIVED_FILE), text).map_err(|e| e.to_string())
    }

    fn run(&self, workdir: &Path) -> Result<(), String> {
        let inp = read_inp(workdir)?;
        let mesh = load_geometry(workdir, &inp)?;
        if !workdir.join(DERIVED_FILE).is_file() {
            return Err(format!("{DERIVED_FILE} missing; build_prepare has not run"));
        }
        let out = solve(&mesh, &inp.params(), inp.simulation.dof_mode).map_err(|e| e.to_string())?;
        write_fields(workdir, &out).map_err(|e| e.to_string())
    }
}

pub struct ExecSetup {
    pub dir: PathBuf,
}

impl ExecSetup {
    fn exec(&self, name: &str, workdir: &Path) -> Result<(), String> {
        let exe = self.dir.join(name);
        let out = Command::new(&exe)
            .arg(workdir)
            .current_dir(workdir)
            .output()
            .map_err(|e| format!("{}: {e}", exe.display()))?;
        if out.status.success() {
            Ok(())
        } else {
            let err = String::from_utf8_lossy(&out.stderr).trim().to_string();
            Err(if err.is_empty() { format!("{name} exited with {}", out.status) } else { err })
        }
    }
}

impl SimSetupPlugin for ExecSetup {
    fn build_prepare(&self, workdir: &Path) -> Result<(), String> {
        self.exec("build_prepare", workdir)
    }

    fn run(&self, workdir: &Path) -> Result<(), String> {
        self.exec("run", workdir)
    }
}

/// `builtin:reference`, an absolute setup directory, or a directory name
/// under `<machine root>/simsetups/`.
pub fn resolve_setup(reference: &str, machine_root: &Path) -> Result<Box<dyn SimSetupPlugin>, String> {
    if reference == REFERENCE_SETUP || reference == "reference" {
        return Ok(Box::new(ReferenceSetup));
    }
    let p = Path::new(reference);
    let dir = if p.is_absolute() { p.to_path_buf() } else { machine_root.join("simsetups").join(reference) };
    if !dir.join("build_prepare").is_file() {
        return Err("build script not found".into());
    }
    Ok(Box::new(ExecSetup { dir }))
}
