use std::f64::consts::PI;
use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use crate::boundary::{NormalDerivatives, Partial, ScalarField};
use crate::config::{BoundaryConfig, BoundaryKind, InitConfig, Placement, SimulationConfig, SolutionConfig, SCHEMA_VERSION};
use crate::entropy::EntropyTrace;
use crate::error::{Error, Result};
use crate::solver::Simulation;

/// exp(-(x_1 + .. + x_d) + (u_1 + .. + u_d) t) + R t
#[derive(Debug, Clone)]
pub struct ExponentialSolution {
    pub u: Vec<f64>,
    pub source: f64,
}

impl ScalarField for ExponentialSolution {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        self.exp_part(x, t) + self.source * t
    }

    fn derivative(&self, x: &[f64], t: f64, p: Partial) -> Option<f64> {
        let speed: f64 = self.u.iter().sum();
        let space: i32 = p.x.iter().map(|&n| n as i32).sum();
        let mut v = self.exp_part(x, t) * speed.powi(p.t as i32) * if space % 2 == 0 { 1.0 } else { -1.0 };
        if p == Partial::time(1) {
            v += self.source;
        }
        Some(v)
    }
}

impl ExponentialSolution {
    fn exp_part(&self, x: &[f64], t: f64) -> f64 {
        let s: f64 = x.iter().sum();
        let speed: f64 = self.u.iter().sum();
        (-s + speed * t).exp()
    }
}

/// 1/2 - 1/2 tanh((r0 - |x - u t|) / (2 w)) on a periodic box, distance to the nearest image.
#[derive(Debug, Clone)]
pub struct TanhBubble {
    pub u: Vec<f64>,
    pub radius: f64,
    pub width: f64,
    pub lower: f64,
    pub upper: f64,
}

impl TanhBubble {
    /// Radius 1/(5(d-1)) and width (5-d)/75 on [(d-4)/2, (4-d)/2]^d.
    pub fn standard(u: Vec<f64>) -> Self {
        let d = u.len() as f64;
        TanhBubble { radius: 1.0 / (5.0 * (d - 1.0)), width: (5.0 - d) / 75.0, lower: (d - 4.0) / 2.0, upper: (4.0 - d) / 2.0, u }
    }

    fn offset(&self, x: &[f64], t: f64) -> Vec<f64> {
        let l = self.upper - self.lower;
        x.iter()
            .zip(&self.u)
            .map(|(x, u)| {
                let y = x - u * t;
                y - l * (y / l).round()
            })
            .collect()
    }
}

impl ScalarField for TanhBubble {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        let r = self.offset(x, t).iter().map(|y| y * y).sum::<f64>().sqrt();
        0.5 - 0.5 * ((self.radius - r) / (2.0 * self.width)).tanh()
    }

    fn derivative(&self, x: &[f64], t: f64, p: Partial) -> Option<f64> {
        // first derivatives only; higher ones fall back to differences
        if p.order() != 1 {
            return None;
        }
        let y = self.offset(x, t);
        let r = y.iter().map(|y| y * y).sum::<f64>().sqrt();
        if r == 0.0 {
            return Some(0.0);
        }
        let sech2 = 1.0 - ((self.radius - r) / (2.0 * self.width)).tanh().powi(2);
        let dphi_dr = sech2 / (4.0 * self.width);
        let dr = if p.t == 1 {
            -y.iter().zip(&self.u).map(|(y, u)| y * u).sum::<f64>() / r
        } else {
            let a = p.x.iter().position(|&n| n == 1).unwrap();
            y[a] / r
        };
        Some(dphi_dr * dr)
    }
}

/// sin(pi (sum_i x_i - u_i t))
#[derive(Debug, Clone)]
pub struct SineWave {
    pub u: Vec<f64>,
}

impl ScalarField for SineWave {
    fn dim(&self) -> usize {
        self.u.len()
    }

    fn value(&self, x: &[f64], t: f64) -> f64 {
        (PI * self.phase(x, t)).sin()
    }

    fn derivative(&self, x: &[f64], t: f64, p: Partial) -> Option<f64> {
        let n = p.order() as i32;
        let speed: f64 = self.u.iter().sum();
        let arg = PI * self.phase(x, t) + n as f64 * PI / 2.0;
        Some(PI.powi(n) * (-speed).powi(p.t as i32) * arg.sin())
    }
}

impl SineWave {
    fn phase(&self, x: &[f64], t: f64) -> f64 {
        x.iter().zip(&self.u).map(|(x, u)| x - u * t).sum()
    }
}

/// Registered analytic solutions by name.
pub fn solution_by_name(name: &str, u: &[f64], source: f64) -> Result<Arc<dyn ScalarField>> {
    match name {
        "example1" => Ok(Arc::new(ExponentialSolution { u: u.to_vec(), source })),
        "example2" => {
            if u.len() < 2 {
                return Err(Error::Config("example2 needs d >= 2".into()));
            }
            Ok(Arc::new(TanhBubble::standard(u.to_vec())))
        }
        "example3" => Ok(Arc::new(SineWave { u: u.to_vec() })),
        _ => Err(Error::UnknownExample(name.to_string())),
    }
}

/// Residual of d_t phi + u . grad phi - R by central differences with step h.
pub fn pde_residual(field: &dyn ScalarField, u: &[f64], source: f64, x: &[f64], t: f64, h: f64) -> f64 {
    let dt = (field.value(x, t + h) - field.value(x, t - h)) / (2.0 * h);
    let mut y = x.to_vec();
    let mut adv = 0.0;
    for a in 0..x.len() {
        y[a] = x[a] + h;
        let p = field.value(&y, t);
        y[a] = x[a] - h;
        let m = field.value(&y, t);
        y[a] = x[a];
        adv += u[a] * (p - m) / (2.0 * h);
    }
    dt + adv - source
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Refinement {
    /// dt proportional to dx (fixed c).
    Acoustic,
    /// dt proportional to dx^2 (c grows with refinement).
    Quartic,
}

impl std::str::FromStr for Refinement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "acoustic" | "1" => Ok(Refinement::Acoustic),
            "quartic" | "table" | "2" => Ok(Refinement::Quartic),
            _ => Err(Error::Config(format!("unknown refinement '{s}' (expected acoustic or quartic)"))),
        }
    }
}

/// A convergence experiment: one analytic solution run over a ladder of grid sizes.
#[derive(Debug, Clone, Serialize)]
pub struct Experiment {
    pub name: String,
    pub dimension: usize,
    pub domain: Vec<[f64; 2]>,
    pub u: Vec<f64>,
    pub source: f64,
    pub g: f64,
    pub boundary: BoundaryKind,
    pub placement: Placement,
    pub boundary_order: u8,
    pub init_order: u8,
    pub refinement: Refinement,
    pub end_time: f64,
    /// Cells per unit length; dx = 1/size.
    pub sizes: Vec<usize>,
    /// Lattice velocity at `base_size`.
    pub c0: f64,
    /// Size at which the lattice velocity equals `c0` under quartic refinement.
    pub base_size: usize,
    pub allow_infeasible: bool,
    pub trace_every: u64,
}

impl Experiment {
    /// 2D exponential on [0,1]^2 with R = 5 and Dirichlet walls, T = 10.
    pub fn example1() -> Self {
        Experiment {
            name: "example1".into(),
            dimension: 2,
            domain: vec![[0.0, 1.0]; 2],
            u: vec![0.1, 0.1],
            source: 5.0,
            g: 0.5,
            boundary: BoundaryKind::Dirichlet,
            placement: Placement::FullWay,
            boundary_order: 4,
            init_order: 3,
            refinement: Refinement::Acoustic,
            end_time: 10.0,
            sizes: vec![10, 20, 40, 80, 160],
            c0: 1.0,
            base_size: 10,
            allow_infeasible: false,
            trace_every: 0,
        }
    }

    /// Periodic tanh bubble in 2D or 3D, T = 1.
    pub fn example2(d: usize) -> Self {
        let half = (4.0 - d as f64) / 2.0;
        let (u, sizes, refinement): (_, Vec<usize>, _) = if d == 2 {
            (vec![0.4, 0.4], vec![100, 200, 400, 800], Refinement::Quartic)
        } else {
            (vec![0.1; d], vec![50, 100], Refinement::Acoustic)
        };
        Experiment {
            name: "example2".into(),
            dimension: d,
            domain: vec![[-half, half]; d],
            u,
            source: 0.0,
            g: 0.5,
            boundary: BoundaryKind::Periodic,
            placement: Placement::FullWay,
            boundary_order: 4,
            init_order: 3,
            refinement,
            end_time: 1.0,
            base_size: sizes[0],
            sizes,
            c0: 1.0,
            allow_infeasible: false,
            trace_every: 0,
        }
    }

    /// Sine wave on [-1,1]^d with R = 0, periodic by default, T = 2.
    pub fn example3(d: usize) -> Self {
        Experiment {
            name: "example3".into(),
            dimension: d,
            domain: vec![[-1.0, 1.0]; d],
            u: vec![0.1; d],
            source: 0.0,
            g: 0.5,
            boundary: BoundaryKind::Periodic,
            placement: Placement::FullWay,
            boundary_order: 4,
            init_order: 3,
            refinement: Refinement::Acoustic,
            end_time: 2.0,
            sizes: vec![4, 8],
            c0: 1.0,
            base_size: 4,
            allow_infeasible: false,
            trace_every: 0,
        }
    }

    pub fn by_name(name: &str, dimension: Option<usize>) -> Result<Self> {
        match name {
            "example1" => Ok(Experiment::example1()),
            "example2" => Ok(Experiment::example2(dimension.unwrap_or(2))),
            "example3" => Ok(Experiment::example3(dimension.unwrap_or(4))),
            _ => Err(Error::UnknownExample(name.to_string())),
        }
    }

    pub fn solution(&self) -> Result<Arc<dyn ScalarField>> {
        solution_by_name(&self.name, &self.u, self.source)
    }

    /// Lattice velocity at a given size.
    pub fn lattice_velocity(&self, size: usize) -> f64 {
        match self.refinement {
            Refinement::Acoustic => self.c0,
            Refinement::Quartic => self.c0 * size as f64 / self.base_size as f64,
        }
    }

    pub fn config_for(&self, size: usize) -> SimulationConfig {
        SimulationConfig {
            schema_version: SCHEMA_VERSION,
            dimension: self.dimension,
            domain: self.domain.clone(),
            dx: 1.0 / size as f64,
            c: self.lattice_velocity(size),
            u: self.u.clone(),
            source: self.source,
            g: self.g,
            fourth_moments: None,
            allow_infeasible: self.allow_infeasible,
            boundary: BoundaryConfig {
                kind: self.boundary,
                axes: None,
                placement: self.placement,
                order: self.boundary_order,
                normal_derivatives: NormalDerivatives::Substitute,
            },
            init: InitConfig { order: self.init_order },
            end_time: self.end_time,
            solution: SolutionConfig { name: self.name.clone() },
            trace_every: self.trace_every,
        }
    }

    /// Runs one size to the end time.
    pub fn run_size(&self, size: usize) -> Result<LevelResult> {
        let cfg = self.config_for(size);
        run_config(&cfg, self.solution()?, size)
    }

    /// Runs the whole ladder; a diverged size does not stop the ladder.
    pub fn run(&self) -> Result<ConvergenceReport> {
        let mut levels = Vec::with_capacity(self.sizes.len());
        for &size in &self.sizes {
            levels.push(self.run_size(size)?);
        }
        Ok(ConvergenceReport::from_levels(levels))
    }
}

#[derive(Debug, Clone, Serialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum LevelStatus {
    Ok,
    Diverged { step: u64 },
}

#[derive(Debug, Clone, Serialize)]
pub struct LevelResult {
    pub size: usize,
    pub dx: f64,
    pub dt: f64,
    pub c: f64,
    pub rmse: f64,
    pub status: LevelStatus,
    pub seconds: f64,
    #[serde(skip)]
    pub trace: EntropyTrace,
}

impl LevelResult {
    /// RMSE counts as unbounded when the run diverged or the error is not finite.
    pub fn blew_up(&self, threshold: f64) -> bool {
        matches!(self.status, LevelStatus::Diverged { .. }) || !(self.rmse <= threshold)
    }
}

/// Runs a configuration to its end time and measures the RMSE against `exact`.
pub fn run_config(cfg: &SimulationConfig, exact: Arc<dyn ScalarField>, size: usize) -> Result<LevelResult> {
    let start = Instant::now();
    let mut sim = Simulation::new(cfg, exact.clone())?;
    let report = sim.run_until(cfg.end_time, cfg.trace_every)?;
    let rmse = sim.rmse(exact.as_ref());
    let status = match report.divergence {
        Some(div) => LevelStatus::Diverged { step: div.step },
        None => LevelStatus::Ok,
    };
    Ok(LevelResult {
        size,
        dx: cfg.dx,
        dt: cfg.dt(),
        c: cfg.c,
        rmse: if rmse.is_finite() { rmse } else { f64::INFINITY },
        status,
        seconds: start.elapsed().as_secs_f64(),
        trace: report.trace,
    })
}

/// log(e_i / e_{i+1}) / log(dx_i / dx_{i+1}); None when either error is not positive and finite.
pub fn pair_rate(e0: f64, e1: f64, dx0: f64, dx1: f64) -> Option<f64> {
    let ok = |e: f64| e.is_finite() && e > 0.0;
    (ok(e0) && ok(e1)).then(|| (e0 / e1).ln() / (dx0 / dx1).ln())
}

/// Least-squares slope of log(rmse) against log(dx) over the usable entries.
pub fn fitted_rate(rmse: &[f64], dx: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rmse.iter().zip(dx).filter(|(e, _)| e.is_finite() && **e > 0.0).map(|(e, h)| (h.ln(), e.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

#[derive(Debug, Clone, Serialize)]
pub struct ConvergenceReport {
    pub levels: Vec<LevelResult>,
    /// Rate between each level and the previous one (first entry None).
    pub cr_pairs: Vec<Option<f64>>,
    pub fitted: Option<f64>,
}

impl ConvergenceReport {
    pub fn from_levels(levels: Vec<LevelResult>) -> Self {
        let mut cr_pairs = vec![None];
        for w in levels.windows(2) {
            let ok = |l: &LevelResult| matches!(l.status, LevelStatus::Ok);
            cr_pairs.push(if ok(&w[0]) && ok(&w[1]) { pair_rate(w[0].rmse, w[1].rmse, w[0].dx, w[1].dx) } else { None });
        }
        let converged: Vec<&LevelResult> = levels.iter().filter(|l| matches!(l.status, LevelStatus::Ok)).collect();
        let fitted = fitted_rate(
            &converged.iter().map(|l| l.rmse).collect::<Vec<_>>(),
            &converged.iter().map(|l| l.dx).collect::<Vec<_>>(),
        );
        ConvergenceReport { levels, cr_pairs, fitted }
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "size,dx,dt,rmse,cr_pair,status")?;
        for (l, cr) in self.levels.iter().zip(&self.cr_pairs) {
            let status = match l.status {
                LevelStatus::Ok => "ok".to_string(),
                LevelStatus::Diverged { step } => format!("diverged@{step}"),
            };
            let cr = cr.map_or(String::new(), |c| format!("{c:.4}"));
            writeln!(out, "{},{:.6e},{:.6e},{:.4e},{},{}", l.size, l.dx, l.dt, l.rmse, cr, status)?;
        }
        Ok(())
    }

    /// Human-readable table.
    pub fn table(&self) -> String {
        let mut s = String::from("  size        dx          dt        RMSE       CR  status\n");
        for (l, cr) in self.levels.iter().zip(&self.cr_pairs) {
            let status = match l.status {
                LevelStatus::Ok => "ok".to_string(),
                LevelStatus::Diverged { step } => format!("diverged at step {step}"),
            };
            let cr = cr.map_or("     -".to_string(), |c| format!("{c:6.3}"));
            s += &format!("{:6} {:10.3e} {:10.3e} {:11.4e} {} {}\n", l.size, l.dx, l.dt, l.rmse, cr, status);
        }
        if let Some(f) = self.fitted {
            s += &format!("fitted CR {f:.4}\n");
        }
        s
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct CrLawEntry {
    pub init_order: u8,
    pub boundary_order: u8,
    pub expected: f64,
    pub fitted: Option<f64>,
}

/// Fitted rate for every (K, P) combination next to min(K + 1, P).
pub fn cr_law_matrix(base: &Experiment, ks: &[u8], ps: &[u8]) -> Result<Vec<CrLawEntry>> {
    let mut out = Vec::new();
    for &k in ks {
        for &p in ps {
            let mut e = base.clone();
            e.init_order = k;
            e.boundary_order = p;
            let report = e.run()?;
            out.push(CrLawEntry {
                init_order: k,
                boundary_order: p,
                expected: (k as f64 + 1.0).min(p as f64),
                fitted: report.fitted,
            });
        }
    }
    Ok(out)
}
