//! TOML scenario files.
//!
//! ```toml
//! horizon = 1.0
//! steps = 8
//!
//! [mesh]                 # or: file = "plate.mesh"
//! nx = 4                 # ny defaults to nx
//! lx = 1.0
//! ly = 1.0
//! bottom = "contact"     # clamped | traction | contact
//! right = "traction"
//! top = "clamped"
//! left = "traction"
//!
//! [material]
//! viscosity = { shear = 1.0, bulk = 0.5 }
//! elasticity = { shear = 2.0, bulk = 1.0 }
//! relaxation = [{ shear = 0.5, bulk = 0.2, rate = 1.0 }]
//!
//! [law]
//! name = "quadratic"
//! stiffness = 10.0
//!
//! [load.body]
//! y = [{ c = -1.0, t = 1 }]   # -t
//!
//! [solver]
//! tol = 1e-10
//!
//! [study]
//! levels = 4
//! ```

use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{law_catalog, ContactConfig, Geometry, LawParams, Material, Relaxation, RelaxationMode};
use crate::error::{HviError, Result};
use crate::fem::{read_mesh, BoundaryRegion, IsotropicTensor, SideTagging, VectorField};
use crate::linalg::LinearSolverKind;
use crate::step::{StepAlgorithm, StepSolverConfig};

/// `c x^x y^y t^t`.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Monomial {
    pub c: f64,
    #[serde(default)]
    pub x: u32,
    #[serde(default)]
    pub y: u32,
    #[serde(default)]
    pub t: u32,
}

/// A vector field with polynomial components in `(x, y, t)`.
#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct PolyField {
    #[serde(default)]
    pub x: Vec<Monomial>,
    #[serde(default)]
    pub y: Vec<Monomial>,
}

impl PolyField {
    pub fn eval(&self, p: [f64; 2], t: f64) -> [f64; 2] {
        let sum = |terms: &[Monomial]| {
            terms
                .iter()
                .map(|m| m.c * p[0].powi(m.x as i32) * p[1].powi(m.y as i32) * t.powi(m.t as i32))
                .sum()
        };
        [sum(&self.x), sum(&self.y)]
    }

    pub fn into_field(self) -> Arc<VectorField> {
        Arc::new(move |p, t| self.eval(p, t))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSpec {
    #[serde(default)]
    pub file: Option<PathBuf>,
    #[serde(default = "four")]
    pub nx: usize,
    #[serde(default)]
    pub ny: Option<usize>,
    #[serde(default = "unit")]
    pub lx: f64,
    #[serde(default = "unit")]
    pub ly: f64,
    #[serde(default)]
    pub bottom: Option<String>,
    #[serde(default)]
    pub right: Option<String>,
    #[serde(default)]
    pub top: Option<String>,
    #[serde(default)]
    pub left: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TensorSpec {
    pub shear: f64,
    #[serde(default)]
    pub bulk: f64,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSpec {
    pub viscosity: TensorSpec,
    pub elasticity: TensorSpec,
    #[serde(default)]
    pub relaxation: Vec<RelaxationMode>,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LawSpec {
    pub name: String,
    #[serde(default)]
    pub stiffness: Option<f64>,
    #[serde(default)]
    pub r0: Option<f64>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub c_nu: Option<f64>,
    #[serde(default)]
    pub m_nu: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LoadSpec {
    #[serde(default)]
    pub body: PolyField,
    #[serde(default)]
    pub traction: PolyField,
}

#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SolverSpec {
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_iter")]
    pub max_iter: usize,
    #[serde(default = "unit")]
    pub damping: f64,
    /// `gauss_seidel` or `forward_backward`.
    #[serde(default = "default_algorithm")]
    pub algorithm: String,
    /// `auto`, `dense`, `sparse` or `pcg`.
    #[serde(default = "default_linear")]
    pub linear_solver: String,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            tol: default_tol(),
            max_iter: default_max_iter(),
            damping: 1.0,
            algorithm: default_algorithm(),
            linear_solver: default_linear(),
        }
    }
}

/// Parameters of convergence studies.
#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct StudySettings {
    #[serde(default = "four")]
    pub levels: usize,
    #[serde(default = "two")]
    pub ref_extra: usize,
    /// Smallest acceptable fitted rate.
    #[serde(default = "default_threshold")]
    pub threshold: f64,
}

impl Default for StudySettings {
    fn default() -> Self {
        Self {
            levels: 4,
            ref_extra: 2,
            threshold: default_threshold(),
        }
    }
}

fn four() -> usize {
    4
}
fn two() -> usize {
    2
}
fn unit() -> f64 {
    1.0
}
fn default_tol() -> f64 {
    1e-10
}
fn default_max_iter() -> usize {
    10_000
}
fn default_threshold() -> f64 {
    0.8
}
fn default_algorithm() -> String {
    "gauss_seidel".into()
}
fn default_linear() -> String {
    "auto".into()
}

/// Raw contents of a scenario file.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub horizon: f64,
    #[serde(default = "default_steps")]
    pub steps: usize,
    /// Refinement level applied on top of the mesh and step count.
    #[serde(default)]
    pub level: u32,
    pub mesh: MeshSpec,
    pub material: MaterialSpec,
    pub law: LawSpec,
    #[serde(default)]
    pub load: LoadSpec,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub study: StudySettings,
}

fn default_steps() -> usize {
    8
}

fn region(side: &str, tag: &Option<String>) -> Result<Option<BoundaryRegion>> {
    match tag.as_deref() {
        None => Ok(None),
        Some("clamped") => Ok(Some(BoundaryRegion::Gamma1)),
        Some("traction") => Ok(Some(BoundaryRegion::Gamma2)),
        Some("contact") => Ok(Some(BoundaryRegion::Gamma3)),
        Some(other) => Err(HviError::InvalidTagging(format!(
            "side `{side}` has unknown region `{other}` (expected clamped, traction or contact)"
        ))),
    }
}

impl Scenario {
    /// Resolves names and files; relative mesh paths are taken from `base`.
    pub fn into_config(self, base: Option<&Path>) -> Result<ContactConfig> {
        let geometry = match &self.mesh.file {
            Some(file) => {
                let path = match base {
                    Some(dir) if file.is_relative() => dir.join(file),
                    _ => file.clone(),
                };
                let reader = std::io::BufReader::new(std::fs::File::open(&path)?);
                Geometry::Mesh(Arc::new(read_mesh(reader)?))
            }
            None => {
                let m = &self.mesh;
                Geometry::Rect {
                    nx: m.nx,
                    ny: m.ny.unwrap_or(m.nx),
                    lx: m.lx,
                    ly: m.ly,
                    tagging: SideTagging {
                        bottom: region("bottom", &m.bottom)?,
                        right: region("right", &m.right)?,
                        top: region("top", &m.top)?,
                        left: region("left", &m.left)?,
                    },
                }
            }
        };
        let mat = &self.material;
        let material = Material {
            viscosity: IsotropicTensor::new(mat.viscosity.shear, mat.viscosity.bulk)?,
            elasticity: IsotropicTensor::new(mat.elasticity.shear, mat.elasticity.bulk)?,
            relaxation: Relaxation::prony(&mat.relaxation)?,
        };
        let d = LawParams::default();
        let l = &self.law;
        let law = law_catalog(
            &l.name,
            &LawParams {
                stiffness: l.stiffness.unwrap_or(d.stiffness),
                r0: l.r0.unwrap_or(d.r0),
                beta: l.beta.unwrap_or(d.beta),
                c_nu: l.c_nu,
                m_nu: l.m_nu,
            },
        )?;
        let s = &self.solver;
        let solver = StepSolverConfig {
            tol: s.tol,
            max_iter: s.max_iter,
            damping: s.damping,
            algorithm: match s.algorithm.as_str() {
                "gauss_seidel" => StepAlgorithm::GaussSeidel,
                "forward_backward" => StepAlgorithm::ForwardBackward,
                other => {
                    return Err(HviError::InvalidArgument(format!(
                        "unknown step algorithm `{other}`"
                    )))
                }
            },
            linear_solver: match s.linear_solver.as_str() {
                "auto" => LinearSolverKind::Auto,
                "dense" => LinearSolverKind::Dense,
                "sparse" => LinearSolverKind::SparseDirect,
                "pcg" => LinearSolverKind::Pcg {
                    rel_tol: 1e-13,
                    max_iter: 20_000,
                },
                other => {
                    return Err(HviError::InvalidArgument(format!(
                        "unknown linear solver `{other}`"
                    )))
                }
            },
        };
        solver.validate()?;
        let cc = ContactConfig {
            geometry,
            material,
            law,
            f0: self.load.body.into_field(),
            f_n: self.load.traction.into_field(),
            horizon: self.horizon,
            u0: None,
            steps: self.steps,
            solver,
            study: self.study,
        };
        cc.at_level(self.level)
    }
}

/// Parses scenario text; syntax and schema errors carry their line number.
pub fn parse_scenario(text: &str) -> Result<Scenario> {
    toml::from_str(text).map_err(|e| {
        let line = e
            .span()
            .map_or(0, |s| text[..s.start.min(text.len())].matches('\n').count() + 1);
        HviError::Parse {
            line,
            message: e.message().to_string(),
        }
    })
}

/// Reads and resolves a scenario file.
pub fn read_scenario(path: &Path) -> Result<ContactConfig> {
    let text = std::fs::read_to_string(path)?;
    parse_scenario(&text)?.into_config(path.parent())
}
