use std::sync::Arc;

use crate::boundary::{
    boundary_jet, fullway_closure, halfway_bracket, initial_populations, partial_derivative, JetLayout,
    NormalDerivatives, Partial, ScalarField,
};
use crate::config::{cell_count, step_count, BoundaryKind, Placement, SimulationConfig};
use crate::entropy::{population_sums, EntropyTrace, TraceRecord};
use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::lattice::{Lattice, MAX_DIMENSION};

/// |phi| above this counts as divergence.
pub const DIVERGENCE_LIMIT: f64 = 1e100;

const NO_ROW: u32 = u32::MAX;

/// Uniform Cartesian grid; node index is row-major with axis 0 fastest.
#[derive(Debug, Clone)]
pub struct Grid {
    shape: Vec<usize>,
    strides: Vec<usize>,
    lower: Vec<f64>,
    upper: Vec<f64>,
    dx: f64,
    periodic: Vec<bool>,
    placement: Placement,
}

impl Grid {
    /// Periodic axes get L/dx nodes at a + i dx. Dirichlet axes get L/dx + 1 nodes on the wall
    /// (full-way) or L/dx nodes at cell centres (half-way).
    pub fn new(domain: &[[f64; 2]], dx: f64, periodic: &[bool], placement: Placement) -> Result<Self> {
        let d = domain.len();
        if !(1..=MAX_DIMENSION).contains(&d) {
            return Err(Error::Dimension(d));
        }
        let mut shape = Vec::with_capacity(d);
        for (a, [lo, hi]) in domain.iter().enumerate() {
            let cells = cell_count(hi - lo, dx)
                .ok_or_else(|| Error::Config(format!("axis {a}: length is not a multiple of dx")))?;
            let n = if periodic[a] || placement == Placement::HalfWay { cells } else { cells + 1 };
            shape.push(n);
        }
        let mut strides = vec![1; d];
        for a in 1..d {
            strides[a] = strides[a - 1] * shape[a - 1];
        }
        Ok(Grid {
            shape,
            strides,
            lower: domain.iter().map(|b| b[0]).collect(),
            upper: domain.iter().map(|b| b[1]).collect(),
            dx,
            periodic: periodic.to_vec(),
            placement,
        })
    }

    pub fn dim(&self) -> usize {
        self.shape.len()
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn is_periodic(&self, axis: usize) -> bool {
        self.periodic[axis]
    }

    pub fn placement(&self) -> Placement {
        self.placement
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn coordinate(&self, axis: usize, i: usize) -> f64 {
        let offset = if !self.periodic[axis] && self.placement == Placement::HalfWay { 0.5 } else { 0.0 };
        self.lower[axis] + (i as f64 + offset) * self.dx
    }

    pub fn index_of(&self, node: usize) -> [usize; MAX_DIMENSION] {
        let mut idx = [0; MAX_DIMENSION];
        let mut rem = node;
        for (a, n) in self.shape.iter().enumerate() {
            idx[a] = rem % n;
            rem /= n;
        }
        idx
    }

    pub fn node_of(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.strides).map(|(i, s)| i * s).sum()
    }

    pub fn position(&self, node: usize, out: &mut [f64]) {
        let idx = self.index_of(node);
        for (a, o) in out.iter_mut().enumerate().take(self.dim()) {
            *o = self.coordinate(a, idx[a]);
        }
    }

    /// Neighbour index along a unit offset; None when it leaves a non-periodic axis.
    pub fn shifted(&self, idx: &[usize], offset: &[i8]) -> Option<[usize; MAX_DIMENSION]> {
        let mut out = [0; MAX_DIMENSION];
        for a in 0..self.dim() {
            let n = self.shape[a] as i64;
            let mut j = idx[a] as i64 + offset[a] as i64;
            if j < 0 || j >= n {
                if !self.periodic[a] {
                    return None;
                }
                j = j.rem_euclid(n);
            }
            out[a] = j as usize;
        }
        Some(out)
    }
}

/// Post-collision populations f* = -f + 2 omega phi + dt omega R, node by node.
pub fn collide(f: &[f64], nodes: usize, omega: &[f64], dt: f64, source: f64) -> Vec<f64> {
    let mut phi = vec![0.0; nodes];
    for k in 0..omega.len() {
        for (p, v) in phi.iter_mut().zip(&f[k * nodes..(k + 1) * nodes]) {
            *p += v;
        }
    }
    let mut out = vec![0.0; f.len()];
    for (k, w) in omega.iter().enumerate() {
        for n in 0..nodes {
            out[k * nodes + n] = -f[k * nodes + n] + 2.0 * w * phi[n] + dt * w * source;
        }
    }
    out
}

/// Moves every post-collision population one link along its velocity. Values leaving through a
/// non-periodic face are dropped; entries of `next` with no upstream node are left untouched.
pub fn stream(grid: &Grid, lattice: &Lattice, post: &[f64], next: &mut [f64]) {
    let n = grid.len();
    for k in 0..lattice.q() {
        let e = lattice.unit_velocity(k);
        for node in 0..n {
            if let Some(dest) = grid.shifted(&grid.index_of(node), e) {
                next[k * n + grid.node_of(&dest[..grid.dim()])] = post[k * n + node];
            }
        }
    }
}

#[derive(Debug, Clone)]
struct WallNode {
    node: usize,
    normal: usize,
}

#[derive(Debug, Clone)]
struct WallLink {
    node: usize,
    k: usize,
    normal: usize,
}

#[derive(Debug, Clone)]
enum Closure {
    None,
    FullWay(Vec<WallNode>),
    HalfWay(Vec<WallLink>),
}

/// Divergence details kept alongside partial traces.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct DivergenceInfo {
    pub step: u64,
    pub node: usize,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub steps: u64,
    pub trace: EntropyTrace,
    pub divergence: Option<DivergenceInfo>,
}

/// Double-buffered populations plus everything needed to advance them.
pub struct Simulation {
    lattice: Lattice,
    eq: Equilibrium,
    grid: Grid,
    u: Vec<f64>,
    dt: f64,
    source: f64,
    f: Vec<f64>,
    next: Vec<f64>,
    step: u64,
    row_dest: Vec<u32>,
    closure: Closure,
    order: u8,
    mode: NormalDerivatives,
    datum: Arc<dyn ScalarField>,
    layout: JetLayout,
}

impl Simulation {
    /// Builds the grid, equilibrium and closures from `cfg` and initializes from `datum` at t = 0.
    pub fn new(cfg: &SimulationConfig, datum: Arc<dyn ScalarField>) -> Result<Self> {
        cfg.validate()?;
        let lattice = Lattice::new(cfg.dimension, cfg.c)?;
        let eq = match &cfg.fourth_moments {
            Some(m4) => Equilibrium::with_fourth_moments(&lattice, &cfg.u, cfg.g, m4.clone())?,
            None if cfg.allow_infeasible => Equilibrium::new_unchecked(&lattice, &cfg.u, cfg.g)?,
            None => Equilibrium::new(&lattice, &cfg.u, cfg.g)?,
        };
        if datum.dim() != cfg.dimension {
            return Err(Error::Config(format!(
                "solution '{}' is {}-dimensional, run is {}-dimensional",
                cfg.solution.name,
                datum.dim(),
                cfg.dimension
            )));
        }
        let periodic: Vec<bool> = cfg.axis_kinds().iter().map(|k| *k == BoundaryKind::Periodic).collect();
        let grid = Grid::new(&cfg.domain, cfg.dx, &periodic, cfg.boundary.placement)?;
        let mut sim = Simulation::assemble(
            lattice,
            eq,
            grid,
            cfg.dt(),
            cfg.source,
            cfg.boundary.order,
            cfg.boundary.normal_derivatives,
            datum,
        )?;
        sim.initialize(cfg.init.order)?;
        Ok(sim)
    }

    #[allow(clippy::too_many_arguments)]
    fn assemble(
        lattice: Lattice,
        eq: Equilibrium,
        grid: Grid,
        dt: f64,
        source: f64,
        order: u8,
        mode: NormalDerivatives,
        datum: Arc<dyn ScalarField>,
    ) -> Result<Self> {
        let q = lattice.q();
        let n = grid.len();
        let d = grid.dim();
        let n0 = grid.shape()[0];
        let rows = n / n0;

        let mut row_dest = vec![NO_ROW; q * rows];
        for k in 0..q {
            let mut e = lattice.unit_velocity(k).to_vec();
            e[0] = 0;
            for row in 0..rows {
                let idx = grid.index_of(row * n0);
                if let Some(dest) = grid.shifted(&idx, &e) {
                    row_dest[k * rows + row] = (grid.node_of(&dest[..d]) / n0) as u32;
                }
            }
        }

        let closure = if (0..d).all(|a| grid.is_periodic(a)) {
            Closure::None
        } else {
            match grid.placement() {
                Placement::FullWay => {
                    let mut nodes = Vec::new();
                    for node in 0..n {
                        let idx = grid.index_of(node);
                        let normal = (0..d)
                            .find(|&a| !grid.is_periodic(a) && (idx[a] == 0 || idx[a] + 1 == grid.shape()[a]));
                        if let Some(normal) = normal {
                            nodes.push(WallNode { node, normal });
                        }
                    }
                    Closure::FullWay(nodes)
                }
                Placement::HalfWay => {
                    let mut links = Vec::new();
                    for node in 0..n {
                        let idx = grid.index_of(node);
                        for k in 1..q {
                            let e = lattice.unit_velocity(k);
                            let normal = (0..d).find(|&a| {
                                let j = idx[a] as i64 - e[a] as i64;
                                !grid.is_periodic(a) && (j < 0 || j >= grid.shape()[a] as i64)
                            });
                            if let Some(normal) = normal {
                                links.push(WallLink { node, k, normal });
                            }
                        }
                    }
                    Closure::HalfWay(links)
                }
            }
        };
        if !matches!(closure, Closure::None) && mode == NormalDerivatives::Substitute {
            for a in 0..d {
                if !grid.is_periodic(a) && eq.u[a] == 0.0 {
                    return Err(Error::ZeroNormalVelocity(a));
                }
            }
        }

        Ok(Simulation {
            u: eq.u.clone(),
            lattice,
            eq,
            grid,
            dt,
            source,
            f: vec![0.0; q * n],
            next: vec![0.0; q * n],
            step: 0,
            row_dest,
            closure,
            order,
            mode,
            layout: JetLayout::new(d),
            datum,
        })
    }

    /// Sets populations from the datum at t = 0 with initialization order 1 or 3.
    pub fn initialize(&mut self, order: u8) -> Result<()> {
        let n = self.grid.len();
        let q = self.lattice.q();
        let d = self.grid.dim();
        let mut x = vec![0.0; d];
        let mut grad = vec![0.0; d];
        let mut out = vec![0.0; q];
        for node in 0..n {
            self.grid.position(node, &mut x);
            let phi0 = self.datum.value(&x, 0.0);
            if order == 3 {
                for (a, g) in grad.iter_mut().enumerate() {
                    *g = partial_derivative(self.datum.as_ref(), &x, 0.0, Partial::space(a));
                }
            }
            initial_populations(&self.lattice, &self.eq.omega, &self.u, self.dt, order, phi0, &grad, &mut out)?;
            for k in 0..q {
                self.f[k * n + node] = out[k];
            }
        }
        self.step = 0;
        Ok(())
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn equilibrium(&self) -> &Equilibrium {
        &self.eq
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.dt
    }

    /// Population-major buffer: `f[k * nodes + node]`.
    pub fn populations(&self) -> &[f64] {
        &self.f
    }

    pub fn populations_mut(&mut self) -> &mut [f64] {
        &mut self.f
    }

    pub fn phi(&self) -> Vec<f64> {
        let n = self.grid.len();
        let mut phi = self.f[..n].to_vec();
        for k in 1..self.lattice.q() {
            for (p, v) in phi.iter_mut().zip(&self.f[k * n..(k + 1) * n]) {
                *p += v;
            }
        }
        phi
    }

    /// One collide-stream-close update.
    pub fn step(&mut self) -> Result<()> {
        self.collide_stream()?;
        self.close_boundaries()?;
        std::mem::swap(&mut self.f, &mut self.next);
        self.step += 1;
        Ok(())
    }

    fn collide_stream(&mut self) -> Result<()> {
        let n = self.grid.len();
        let q = self.lattice.q();
        let n0 = self.grid.shape()[0];
        let rows = n / n0;
        let wrap = self.grid.is_periodic(0);
        let mut phi = vec![0.0; n0];
        let weights: Vec<(f64, f64, i8)> = (0..q)
            .map(|k| {
                let w = self.eq.omega[k];
                (2.0 * w, self.dt * w * self.source, self.lattice.unit_velocity(k)[0])
            })
            .collect();
        for row in 0..rows {
            let base = row * n0;
            phi.copy_from_slice(&self.f[base..base + n0]);
            for k in 1..q {
                let src = &self.f[k * n + base..k * n + base + n0];
                for (p, v) in phi.iter_mut().zip(src) {
                    *p += v;
                }
            }
            let bad = phi.iter().fold(false, |acc, p| acc | !(p.abs() <= DIVERGENCE_LIMIT));
            if bad {
                let x = phi.iter().position(|p| !(p.abs() <= DIVERGENCE_LIMIT)).unwrap_or(0);
                return Err(Error::Divergence { step: self.step + 1, node: base + x, value: phi[x] });
            }
            for (k, &(w2, sk, s0)) in weights.iter().enumerate() {
                let dest = self.row_dest[k * rows + row];
                if dest == NO_ROW {
                    continue;
                }
                let src = &self.f[k * n + base..k * n + base + n0];
                let start = k * n + dest as usize * n0;
                let dst = &mut self.next[start..start + n0];
                match s0 {
                    0 => {
                        for ((o, p), v) in dst.iter_mut().zip(&phi).zip(src) {
                            *o = w2 * p + sk - v;
                        }
                    }
                    1 => {
                        for ((o, p), v) in dst[1..].iter_mut().zip(&phi[..n0 - 1]).zip(&src[..n0 - 1]) {
                            *o = w2 * p + sk - v;
                        }
                        if wrap {
                            dst[0] = w2 * phi[n0 - 1] + sk - src[n0 - 1];
                        }
                    }
                    _ => {
                        for ((o, p), v) in dst[..n0 - 1].iter_mut().zip(&phi[1..]).zip(&src[1..]) {
                            *o = w2 * p + sk - v;
                        }
                        if wrap {
                            dst[n0 - 1] = w2 * phi[0] + sk - src[0];
                        }
                    }
                }
            }
        }
        Ok(())
    }

    fn close_boundaries(&mut self) -> Result<()> {
        let n = self.grid.len();
        let q = self.lattice.q();
        let d = self.grid.dim();
        let mut x = vec![0.0; d];
        let mut jet = vec![0.0; self.layout.len()];
        match &self.closure {
            Closure::None => {}
            Closure::FullWay(nodes) => {
                let t = (self.step + 1) as f64 * self.dt;
                let mut out = vec![0.0; q];
                for wn in nodes {
                    self.grid.position(wn.node, &mut x);
                    boundary_jet(
                        &self.layout,
                        self.datum.as_ref(),
                        &x,
                        t,
                        Some(wn.normal),
                        &self.u,
                        self.source,
                        self.mode,
                        &mut jet,
                    )?;
                    fullway_closure(&self.lattice, &self.eq.omega, self.dt, self.source, self.order, &self.layout, &jet, &mut out)?;
                    for k in 0..q {
                        self.next[k * n + wn.node] = out[k];
                    }
                }
            }
            Closure::HalfWay(links) => {
                let t = self.step as f64 * self.dt;
                let half = 0.5 * self.grid.dx();
                for link in links {
                    let node = link.node;
                    self.grid.position(node, &mut x);
                    let e = self.lattice.unit_velocity(link.k);
                    for a in 0..d {
                        x[a] -= e[a] as f64 * half;
                    }
                    boundary_jet(
                        &self.layout,
                        self.datum.as_ref(),
                        &x,
                        t,
                        Some(link.normal),
                        &self.u,
                        self.source,
                        self.mode,
                        &mut jet,
                    )?;
                    let b = halfway_bracket(
                        &self.lattice,
                        &self.eq.omega,
                        self.dt,
                        self.source,
                        self.order,
                        link.k,
                        &self.layout,
                        &jet,
                    )?;
                    let kb = self.lattice.opposite(link.k);
                    let phi: f64 = (0..q).map(|j| self.f[j * n + node]).sum();
                    let w = self.eq.omega[kb];
                    let post = -self.f[kb * n + node] + 2.0 * w * phi + self.dt * w * self.source;
                    self.next[link.k * n + node] = b - post;
                }
            }
        }
        Ok(())
    }

    /// Full-way closure values at a wall node at the current time, eliminating derivatives along
    /// `normal`. Exposed for corner checks.
    pub fn fullway_values(&self, node: usize, normal: usize) -> Result<Vec<f64>> {
        let mut x = vec![0.0; self.grid.dim()];
        self.grid.position(node, &mut x);
        let mut jet = vec![0.0; self.layout.len()];
        boundary_jet(
            &self.layout,
            self.datum.as_ref(),
            &x,
            self.time(),
            Some(normal),
            &self.u,
            self.source,
            self.mode,
            &mut jet,
        )?;
        let mut out = vec![0.0; self.lattice.q()];
        fullway_closure(&self.lattice, &self.eq.omega, self.dt, self.source, self.order, &self.layout, &jet, &mut out)?;
        Ok(out)
    }

    /// Totals for the current state. The entropy column is sum f^2/(2 omega) even if some weight
    /// is not positive.
    pub fn trace_record(&self) -> TraceRecord {
        let n = self.grid.len();
        let q = self.lattice.q();
        let total_phi = self.f.iter().sum();
        let inv: Vec<f64> = self.eq.omega.iter().map(|w| 1.0 / w).collect();
        let weighted = population_sums(&self.f, n, &inv);
        let unit = population_sums(&self.f, n, &vec![1.0; q]);
        TraceRecord {
            step: self.step,
            time: self.time(),
            total_phi,
            total_entropy: 0.5 * weighted,
            weighted_l2_unit: unit,
            weighted_l2_inv_omega: weighted,
        }
    }

    /// Advances `steps` steps, recording a trace row every `trace_every` steps (0: none).
    /// Divergence stops the run and is reported alongside the partial trace.
    pub fn run_steps(&mut self, steps: u64, trace_every: u64) -> RunReport {
        let mut trace = EntropyTrace::default();
        if trace_every > 0 {
            trace.records.push(self.trace_record());
        }
        for i in 0..steps {
            if let Err(e) = self.step() {
                let divergence = match e {
                    Error::Divergence { step, node, value } => DivergenceInfo { step, node, value },
                    _ => DivergenceInfo { step: self.step + 1, node: 0, value: f64::NAN },
                };
                return RunReport { steps: i, trace, divergence: Some(divergence) };
            }
            if trace_every > 0 && (i + 1) % trace_every == 0 {
                trace.records.push(self.trace_record());
            }
        }
        RunReport { steps, trace, divergence: None }
    }

    /// Runs to `end_time`, which must be a whole number of steps.
    pub fn run_until(&mut self, end_time: f64, trace_every: u64) -> Result<RunReport> {
        let total = step_count(end_time, self.dt)
            .ok_or_else(|| Error::Config(format!("end_time {end_time} is not a multiple of dt = {}", self.dt)))?;
        let remaining = total.checked_sub(self.step).ok_or_else(|| Error::Config("end_time already passed".into()))?;
        Ok(self.run_steps(remaining, trace_every))
    }

    /// Root-mean-square deviation of phi from `exact` at the current time.
    pub fn rmse(&self, exact: &dyn ScalarField) -> f64 {
        let phi = self.phi();
        let t = self.time();
        let mut x = vec![0.0; self.grid.dim()];
        let mut acc = 0.0;
        for (node, p) in phi.iter().enumerate() {
            self.grid.position(node, &mut x);
            let e = p - exact.value(&x, t);
            acc += e * e;
        }
        (acc / phi.len() as f64).sqrt()
    }

    /// CSV of node coordinates and phi.
    pub fn write_phi_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        let d = self.grid.dim();
        let header: Vec<String> = (1..=d).map(|a| format!("x{a}")).chain(["phi".to_string()]).collect();
        writeln!(out, "{}", header.join(","))?;
        let mut x = vec![0.0; d];
        for (node, p) in self.phi().iter().enumerate() {
            self.grid.position(node, &mut x);
            for v in &x {
                write!(out, "{v:.17e},")?;
            }
            writeln!(out, "{p:.17e}")?;
        }
        Ok(())
    }
}
