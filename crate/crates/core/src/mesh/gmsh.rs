//! Bridge to the Gmsh mesh generator, with a built-in refiner as fallback.
//!
//! The external path writes the domain as `domain.geo` and the size field
//! as a scalar-triangle post-processing view `field.pos`, runs
//! `gmsh -2 -format msh2 -o out.msh domain.geo` in a scratch directory and
//! reads the result back. The fallback path refines the guide mesh (or an
//! ear-clipped triangulation of the domain) with [`fallback_refine`].

use std::fmt::Write as _;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;

use log::{debug, warn};

use crate::error::{Error, Result};

use super::msh::parse_msh_with_domain;
use super::refine::fallback_refine_within;
use super::{Mesh, PolygonDomain, VertexField};

/// Environment variable holding the Gmsh executable path.
pub const GMSH_ENV: &str = "PARAFEM_GMSH";

/// Default vertex budget of the fallback refiner.
pub const DEFAULT_MAX_VERTICES: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Deserialize, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum GeneratorKind {
    External,
    Fallback,
}

impl std::str::FromStr for GeneratorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "external" | "gmsh" => Ok(Self::External),
            "fallback" => Ok(Self::Fallback),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}

/// How meshes are generated.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratorConfig {
    pub kind: GeneratorKind,
    pub gmsh: PathBuf,
    pub extra_flags: Vec<String>,
    /// Scratch directory root; the system temp dir when unset.
    pub work_dir: Option<PathBuf>,
    /// Use the fallback refiner if the executable cannot be started.
    pub fallback_on_missing: bool,
    /// Vertex budget of the fallback refiner. Aggressive size fields ask
    /// for far more vertices than fit in memory.
    pub max_vertices: usize,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self {
            kind: GeneratorKind::Fallback,
            gmsh: std::env::var_os(GMSH_ENV)
                .map(PathBuf::from)
                .unwrap_or_else(|| PathBuf::from("gmsh")),
            extra_flags: Vec::new(),
            work_dir: None,
            fallback_on_missing: false,
            max_vertices: DEFAULT_MAX_VERTICES,
        }
    }
}

/// Target element size for [`generate_mesh`].
#[derive(Debug, Clone, Copy)]
pub enum MeshSize<'a> {
    Uniform(f64),
    /// Per-vertex sizes on a guide mesh of the same domain.
    Field(&'a VertexField),
}

/// Writes `size` as a Gmsh ASCII post-processing view, one `ST` record per
/// element of the field's mesh.
pub fn write_background_field(size: &VertexField, path: &Path) -> Result<()> {
    if let Some((v, &s)) = size.values().iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
        return Err(Error::NonPositiveSize { vertex: v, value: s });
    }
    let mut out = BufWriter::new(fs::File::create(path)?);
    out.write_all(pos_view(size).as_bytes())?;
    out.flush()?;
    Ok(())
}

fn pos_view(size: &VertexField) -> String {
    let mesh = size.mesh();
    let s = size.values();
    let mut text = String::with_capacity(64 + 200 * mesh.num_elements());
    text.push_str("View \"size\" {\n");
    for e in mesh.elements() {
        let p = [mesh.vertices()[e[0]], mesh.vertices()[e[1]], mesh.vertices()[e[2]]];
        let _ = writeln!(
            text,
            "ST({},{},0,{},{},0,{},{},0){{{},{},{}}};",
            num(p[0][0]),
            num(p[0][1]),
            num(p[1][0]),
            num(p[1][1]),
            num(p[2][0]),
            num(p[2][1]),
            num(s[e[0]]),
            num(s[e[1]]),
            num(s[e[2]]),
        );
    }
    text.push_str("};\n");
    text
}

/// 17 significant digits: enough to round-trip any `f64`.
fn num(x: f64) -> String {
    format!("{x:.16e}")
}

fn geo_script(domain: &PolygonDomain, size: Option<f64>, background: bool) -> String {
    let lc = size.unwrap_or_else(|| domain.diameter());
    let n = domain.vertices().len();
    let mut g = String::new();
    let _ = writeln!(g, "lc = {};", num(lc));
    for (i, p) in domain.vertices().iter().enumerate() {
        let _ = writeln!(g, "Point({}) = {{{}, {}, 0, lc}};", i + 1, num(p[0]), num(p[1]));
    }
    for i in 0..n {
        let _ = writeln!(g, "Line({}) = {{{}, {}}};", i + 1, i + 1, (i + 1) % n + 1);
    }
    let loop_ids: Vec<String> = (1..=n).map(|i| i.to_string()).collect();
    let _ = writeln!(g, "Curve Loop(1) = {{{}}};", loop_ids.join(", "));
    g.push_str("Plane Surface(1) = {1};\n");
    if background {
        g.push_str(concat!(
            "Merge \"field.pos\";\n",
            "Field[1] = PostView;\n",
            "Field[1].ViewIndex = 0;\n",
            "Background Field = 1;\n",
            "Mesh.CharacteristicLengthExtendFromBoundary = 0;\n",
            "Mesh.CharacteristicLengthFromPoints = 0;\n",
            "Mesh.CharacteristicLengthFromCurvature = 0;\n",
        ));
    }
    g
}

static SCRATCH_COUNTER: AtomicUsize = AtomicUsize::new(0);

fn scratch_dir(cfg: &GeneratorConfig) -> io::Result<PathBuf> {
    let root = cfg.work_dir.clone().unwrap_or_else(std::env::temp_dir);
    let dir = root.join(format!(
        "parafem-gmsh-{}-{}",
        std::process::id(),
        SCRATCH_COUNTER.fetch_add(1, Ordering::Relaxed)
    ));
    fs::create_dir_all(&dir)?;
    Ok(dir)
}

/// Runs the external generator in `dir` on an already written `domain.geo`.
fn run_gmsh(cfg: &GeneratorConfig, dir: &Path) -> Result<PathBuf> {
    let mut cmd = Command::new(&cfg.gmsh);
    cmd.current_dir(dir)
        .args(["-2", "-format", "msh2", "-o", "out.msh", "domain.geo"])
        .args(&cfg.extra_flags);
    debug!("running {cmd:?}");
    let output = cmd.output().map_err(|e| match e.kind() {
        io::ErrorKind::NotFound | io::ErrorKind::PermissionDenied => {
            Error::GeneratorNotFound(cfg.gmsh.display().to_string())
        }
        _ => Error::Io(e),
    })?;
    if !output.status.success() {
        let stderr = String::from_utf8_lossy(&output.stderr);
        return Err(Error::GeneratorFailed(format!(
            "{} exited with {}: {}",
            cfg.gmsh.display(),
            output.status,
            stderr.lines().last().unwrap_or("")
        )));
    }
    let out = dir.join("out.msh");
    if !out.exists() {
        return Err(Error::GeneratorFailed("no out.msh produced".into()));
    }
    Ok(out)
}

fn generate_external(domain: &Arc<PolygonDomain>, size: MeshSize, cfg: &GeneratorConfig) -> Result<Mesh> {
    let dir = scratch_dir(cfg)?;
    let result = (|| {
        let geo = match size {
            MeshSize::Uniform(h) => geo_script(domain, Some(h), false),
            MeshSize::Field(f) => {
                write_background_field(f, &dir.join("field.pos"))?;
                geo_script(domain, None, true)
            }
        };
        fs::write(dir.join("domain.geo"), geo)?;
        let out = run_gmsh(cfg, &dir)?;
        parse_msh_with_domain(&out, domain.clone()).map_err(|e| match e {
            Error::GeneratorNotFound(_) => e,
            other => Error::GeneratorFailed(format!("unreadable generator output: {other}")),
        })
    })();
    let _ = fs::remove_dir_all(&dir);
    result
}

fn generate_fallback(domain: &Arc<PolygonDomain>, size: MeshSize, max_vertices: usize) -> Result<Mesh> {
    let outcome = match size {
        MeshSize::Uniform(h) => {
            if !(h > 0.0) {
                return Err(Error::NonPositiveSize { vertex: 0, value: h });
            }
            let coarse = Arc::new(Mesh::new(
                domain.vertices().to_vec(),
                domain.triangulate(),
                domain.clone(),
            )?);
            fallback_refine_within(&coarse, &VertexField::constant(coarse.clone(), h), max_vertices)?
        }
        MeshSize::Field(f) => fallback_refine_within(f.mesh(), f, max_vertices)?,
    };
    Ok(outcome.mesh)
}

/// Generates a mesh of `domain` honouring `size`.
///
/// With [`GeneratorKind::Fallback`] (or a missing executable when
/// `fallback_on_missing` is set) the result is a conforming refinement of
/// the guide mesh.
pub fn generate_mesh(domain: &Arc<PolygonDomain>, size: MeshSize, cfg: &GeneratorConfig) -> Result<Mesh> {
    if let MeshSize::Field(f) = size {
        if let Some((v, &s)) = f.values().iter().enumerate().find(|(_, &s)| !(s > 0.0)) {
            return Err(Error::NonPositiveSize { vertex: v, value: s });
        }
    }
    let mesh = match cfg.kind {
        GeneratorKind::Fallback => generate_fallback(domain, size, cfg.max_vertices)?,
        GeneratorKind::External => match generate_external(domain, size, cfg) {
            Err(Error::GeneratorNotFound(exe)) if cfg.fallback_on_missing => {
                warn!("mesh generator `{exe}` not found, using the fallback refiner");
                generate_fallback(domain, size, cfg.max_vertices)?
            }
            other => other?,
        },
    };
    if mesh.num_elements() == 0 {
        return Err(Error::GeneratorFailed("empty mesh".into()));
    }
    Ok(mesh)
}

/// Version string reported by the configured Gmsh executable.
pub fn gmsh_version(cfg: &GeneratorConfig) -> Result<String> {
    let out = Command::new(&cfg.gmsh)
        .arg("--version")
        .output()
        .map_err(|_| Error::GeneratorNotFound(cfg.gmsh.display().to_string()))?;
    if !out.status.success() {
        return Err(Error::GeneratorFailed(format!(
            "`--version` exited with {}",
            out.status
        )));
    }
    // gmsh prints its version on stderr
    let text = if out.stdout.is_empty() { out.stderr } else { out.stdout };
    Ok(String::from_utf8_lossy(&text).trim().to_string())
}
