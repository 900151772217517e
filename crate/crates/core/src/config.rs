//! JSON run configuration. See `docs/config-schema.md` for the field reference.

use serde::{Deserialize, Serialize};

use crate::boundary::NormalDerivatives;
use crate::error::{Error, Result};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundaryKind {
    Periodic,
    Dirichlet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Placement {
    /// Nodes lie on the wall.
    #[default]
    FullWay,
    /// The wall sits half a link beyond the outermost nodes.
    HalfWay,
}

impl std::str::FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full-way" | "full" => Ok(Placement::FullWay),
            "half-way" | "half" => Ok(Placement::HalfWay),
            _ => Err(Error::Config(format!("unknown placement '{s}' (expected full-way or half-way)"))),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundaryConfig {
    pub kind: BoundaryKind,
    /// Per-axis override of `kind`; both faces of an axis share a kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub axes: Option<Vec<BoundaryKind>>,
    #[serde(default)]
    pub placement: Placement,
    /// Closure order P.
    #[serde(default = "default_boundary_order")]
    pub order: u8,
    #[serde(default)]
    pub normal_derivatives: NormalDerivatives,
}

fn default_boundary_order() -> u8 {
    4
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    /// Initialization order K.
    pub order: u8,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionConfig {
    /// Registered analytic solution: example1, example2 or example3.
    pub name: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default = "current_version")]
    pub schema_version: u32,
    pub dimension: usize,
    /// [a_l, b_l] per axis.
    pub domain: Vec<[f64; 2]>,
    pub dx: f64,
    #[serde(default = "default_c")]
    pub c: f64,
    pub u: Vec<f64>,
    /// Constant source R.
    #[serde(default)]
    pub source: f64,
    #[serde(default = "default_g")]
    pub g: f64,
    /// Explicit fourth-order moments per pair i<j (units c^4), replacing the g blend.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourth_moments: Option<Vec<f64>>,
    /// Run even when no positive-weight equilibrium exists for u.
    #[serde(default)]
    pub allow_infeasible: bool,
    pub boundary: BoundaryConfig,
    pub init: InitConfig,
    pub end_time: f64,
    pub solution: SolutionConfig,
    /// Record a trace row every this many steps (0 or absent: no trace).
    #[serde(default)]
    pub trace_every: u64,
}

fn current_version() -> u32 {
    SCHEMA_VERSION
}

fn default_c() -> f64 {
    1.0
}

fn default_g() -> f64 {
    crate::equilibrium::DEFAULT_G
}

impl SimulationConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimulationConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn dt(&self) -> f64 {
        self.dx / self.c
    }

    pub fn axis_kinds(&self) -> Vec<BoundaryKind> {
        self.boundary.axes.clone().unwrap_or_else(|| vec![self.boundary.kind; self.dimension])
    }

    pub fn has_dirichlet(&self) -> bool {
        self.axis_kinds().contains(&BoundaryKind::Dirichlet)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.schema_version != SCHEMA_VERSION {
            return bad(format!("unsupported schema_version {} (expected {SCHEMA_VERSION})", self.schema_version));
        }
        let d = self.dimension;
        if !(1..=crate::lattice::MAX_DIMENSION).contains(&d) {
            return Err(Error::Dimension(d));
        }
        if self.domain.len() != d || self.u.len() != d {
            return bad(format!("domain and u need {d} entries"));
        }
        if let Some(axes) = &self.boundary.axes {
            if axes.len() != d {
                return bad(format!("boundary.axes needs {d} entries"));
            }
        }
        if !(self.dx > 0.0) || !(self.c > 0.0) {
            return bad("dx and c must be positive".into());
        }
        for (a, [lo, hi]) in self.domain.iter().enumerate() {
            if !(hi > lo) {
                return bad(format!("axis {a}: empty domain [{lo}, {hi}]"));
            }
            cell_count(hi - lo, self.dx).ok_or_else(|| {
                Error::Config(format!("axis {a}: length {} is not a multiple of dx = {}", hi - lo, self.dx))
            })?;
        }
        if !matches!(self.init.order, 1 | 3) {
            return bad(format!("init.order must be 1 or 3, got {}", self.init.order));
        }
        if self.has_dirichlet() {
            match (self.boundary.placement, self.boundary.order) {
                (Placement::FullWay, 1 | 3 | 4) | (Placement::HalfWay, 1..=4) => {}
                (p, o) => return bad(format!("boundary.order {o} not available for {p:?}")),
            }
        }
        if !(self.end_time >= 0.0) {
            return bad("end_time must be non-negative".into());
        }
        step_count(self.end_time, self.dt())
            .ok_or_else(|| Error::Config(format!("end_time {} is not a multiple of dt = {}", self.end_time, self.dt())))?;
        Ok(())
    }
}

/// Integer n with n*dx == length up to roundoff.
pub fn cell_count(length: f64, dx: f64) -> Option<usize> {
    let n = (length / dx).round();
    (n >= 1.0 && (n * dx - length).abs() <= 1e-9 * length.max(dx)).then_some(n as usize)
}

/// Number of whole steps reaching `end_time`, refusing a partial last step.
pub fn step_count(end_time: f64, dt: f64) -> Option<u64> {
    let n = (end_time / dt).round();
    (n >= 0.0 && (n * dt - end_time).abs() <= 1e-9 * end_time.max(dt)).then_some(n as u64)
}
