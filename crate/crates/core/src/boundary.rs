use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Lattice, MAX_DIMENSION};

/// Highest total derivative order any closure needs.
pub const MAX_ORDER: u8 = 3;

const FD_STEP: f64 = 1e-3;

/// A mixed partial derivative d_t^t d_x^x.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Partial {
    pub t: u8,
    pub x: [u8; MAX_DIMENSION],
}

impl Partial {
    pub const VALUE: Partial = Partial { t: 0, x: [0; MAX_DIMENSION] };

    pub fn time(n: u8) -> Self {
        Partial { t: n, ..Default::default() }
    }

    pub fn space(axis: usize) -> Self {
        Partial::VALUE.with_x(axis)
    }

    pub fn order(&self) -> u8 {
        self.t + self.x.iter().sum::<u8>()
    }

    pub fn with_t(mut self) -> Self {
        self.t += 1;
        self
    }

    pub fn with_x(mut self, axis: usize) -> Self {
        self.x[axis] += 1;
        self
    }

    fn without_x(mut self, axis: usize) -> Self {
        self.x[axis] -= 1;
        self
    }
}

impl std::fmt::Display for Partial {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "d_t^{}", self.t)?;
        for (a, n) in self.x.iter().enumerate() {
            if *n > 0 {
                write!(f, " d_x{}^{}", a + 1, n)?;
            }
        }
        Ok(())
    }
}

/// A smooth space-time function: analytic solution, initial datum or wall datum.
pub trait ScalarField: Send + Sync {
    fn dim(&self) -> usize;

    fn value(&self, x: &[f64], t: f64) -> f64;

    /// Analytic partial derivative, if the field provides one.
    fn derivative(&self, _x: &[f64], _t: f64, _p: Partial) -> Option<f64> {
        None
    }
}

/// Analytic derivative when available, otherwise nested fourth-order central differences.
pub fn partial_derivative(field: &dyn ScalarField, x: &[f64], t: f64, p: Partial) -> f64 {
    if p == Partial::VALUE {
        return field.value(x, t);
    }
    field.derivative(x, t, p).unwrap_or_else(|| finite_difference(field, x, t, p, FD_STEP))
}

pub(crate) fn finite_difference(field: &dyn ScalarField, x: &[f64], t: f64, p: Partial, h: f64) -> f64 {
    if p == Partial::VALUE {
        return field.value(x, t);
    }
    let stencil = [(-2.0, 1.0), (-1.0, -8.0), (1.0, 8.0), (2.0, -1.0)];
    let mut acc = 0.0;
    if p.t > 0 {
        let inner = Partial { t: p.t - 1, ..p };
        for (s, w) in stencil {
            acc += w * finite_difference(field, x, t + s * h, inner, h);
        }
    } else {
        let axis = p.x.iter().position(|&n| n > 0).expect("nonzero order");
        let inner = p.without_x(axis);
        let mut y = x.to_vec();
        for (s, w) in stencil {
            y[axis] = x[axis] + s * h;
            acc += w * finite_difference(field, &y, t, inner, h);
        }
    }
    acc / (12.0 * h)
}

/// Storage layout for all partials of total order <= 3 in (t, x_1..x_d).
#[derive(Debug, Clone)]
pub struct JetLayout {
    d: usize,
    partials: Vec<Partial>,
    slot: Vec<u16>,
}

impl JetLayout {
    pub fn new(d: usize) -> Self {
        let radix = (MAX_ORDER + 1) as usize;
        let size = radix.pow(d as u32 + 1);
        let mut partials = Vec::new();
        let mut slot = vec![u16::MAX; size];
        for code in 0..size {
            let mut rem = code;
            let t = (rem % radix) as u8;
            rem /= radix;
            let mut x = [0u8; MAX_DIMENSION];
            for xa in x.iter_mut().take(d) {
                *xa = (rem % radix) as u8;
                rem /= radix;
            }
            let p = Partial { t, x };
            if p.order() <= MAX_ORDER {
                slot[code] = partials.len() as u16;
                partials.push(p);
            }
        }
        JetLayout { d, partials, slot }
    }

    pub fn len(&self) -> usize {
        self.partials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partials.is_empty()
    }

    pub fn partials(&self) -> &[Partial] {
        &self.partials
    }

    #[inline]
    pub fn index(&self, p: Partial) -> usize {
        let radix = (MAX_ORDER + 1) as usize;
        let mut code = 0;
        for a in (0..self.d).rev() {
            code = code * radix + p.x[a] as usize;
        }
        code = code * radix + p.t as usize;
        let s = self.slot[code];
        debug_assert!(s != u16::MAX, "partial {p} outside the jet");
        s as usize
    }
}

/// How derivatives normal to a Dirichlet wall are obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NormalDerivatives {
    /// Eliminate them through the equation, using only time and tangential data.
    #[default]
    Substitute,
    /// Take them from the datum directly.
    Datum,
}

/// One elimination step: express a partial with x_j-order >= 1 through partials of lower x_j-order,
/// d_j h = (R - d_t h - sum_{l != j} u_l d_l h) / u_j.
pub fn substitute_normal_derivative(
    p: Partial,
    normal: usize,
    u: &[f64],
    source: f64,
    lookup: &mut dyn FnMut(Partial) -> Result<f64>,
) -> Result<f64> {
    if p.order() > MAX_ORDER {
        return Err(Error::UnsupportedDerivative(p.to_string()));
    }
    if p.x[normal] == 0 {
        return lookup(p);
    }
    let uj = u[normal];
    if uj == 0.0 {
        return Err(Error::ZeroNormalVelocity(normal));
    }
    let beta = p.without_x(normal);
    let mut acc = if beta == Partial::VALUE { source } else { 0.0 };
    acc -= substitute_normal_derivative(beta.with_t(), normal, u, source, lookup)?;
    for (l, &ul) in u.iter().enumerate() {
        if l != normal && ul != 0.0 {
            acc -= ul * substitute_normal_derivative(beta.with_x(l), normal, u, source, lookup)?;
        }
    }
    Ok(acc / uj)
}

/// All partials of order <= 3 of `datum` at (x, t). With a normal axis and substitution mode,
/// derivatives along that axis are rebuilt from time/tangential ones.
#[allow(clippy::too_many_arguments)]
pub fn boundary_jet(
    layout: &JetLayout,
    datum: &dyn ScalarField,
    x: &[f64],
    t: f64,
    normal: Option<usize>,
    u: &[f64],
    source: f64,
    mode: NormalDerivatives,
    out: &mut [f64],
) -> Result<()> {
    let normal = match (normal, mode) {
        (Some(j), NormalDerivatives::Substitute) => j,
        _ => {
            for (v, p) in out.iter_mut().zip(layout.partials()) {
                *v = partial_derivative(datum, x, t, *p);
            }
            return Ok(());
        }
    };
    let uj = u[normal];
    if uj == 0.0 {
        return Err(Error::ZeroNormalVelocity(normal));
    }
    for n in 0..=MAX_ORDER {
        for (i, p) in layout.partials().iter().enumerate() {
            if p.x[normal] != n {
                continue;
            }
            out[i] = if n == 0 {
                partial_derivative(datum, x, t, *p)
            } else {
                let beta = p.without_x(normal);
                let mut acc = if beta == Partial::VALUE { source } else { 0.0 };
                acc -= out[layout.index(beta.with_t())];
                for (l, &ul) in u.iter().enumerate() {
                    if l != normal && ul != 0.0 {
                        acc -= ul * out[layout.index(beta.with_x(l))];
                    }
                }
                acc / uj
            };
        }
    }
    Ok(())
}

/// Contractions of a velocity with spatial partials taken from a jet.
struct Contract<'a> {
    layout: &'a JetLayout,
    jet: &'a [f64],
    axes: Vec<(usize, f64)>,
}

impl<'a> Contract<'a> {
    fn new(layout: &'a JetLayout, jet: &'a [f64], velocity: &[f64]) -> Self {
        let axes = velocity.iter().enumerate().filter(|(_, v)| **v != 0.0).map(|(a, v)| (a, *v)).collect();
        Contract { layout, jet, axes }
    }

    fn at(&self, p: Partial) -> f64 {
        self.jet[self.layout.index(p)]
    }

    /// sum c_a d_a (base)
    fn one(&self, base: Partial) -> f64 {
        self.axes.iter().map(|&(a, c)| c * self.at(base.with_x(a))).sum()
    }

    /// sum c_a c_b d_a d_b (base)
    fn two(&self, base: Partial) -> f64 {
        let mut s = 0.0;
        for &(a, ca) in &self.axes {
            for &(b, cb) in &self.axes {
                s += ca * cb * self.at(base.with_x(a).with_x(b));
            }
        }
        s
    }

    /// sum c_a c_b c_e d_a d_b d_e h
    fn three(&self) -> f64 {
        let mut s = 0.0;
        for &(a, ca) in &self.axes {
            for &(b, cb) in &self.axes {
                for &(e, ce) in &self.axes {
                    s += ca * cb * ce * self.at(Partial::VALUE.with_x(a).with_x(b).with_x(e));
                }
            }
        }
        s
    }
}

/// Populations prescribed at a wall node (all q of them) from a jet evaluated at (x_b, t+dt).
pub fn fullway_closure(
    lattice: &Lattice,
    omega: &[f64],
    dt: f64,
    source: f64,
    order: u8,
    layout: &JetLayout,
    jet: &[f64],
    out: &mut [f64],
) -> Result<()> {
    if !matches!(order, 1 | 3 | 4) {
        return Err(Error::Config(format!("full-way closure order must be 1, 3 or 4, got {order}")));
    }
    let h = jet[layout.index(Partial::VALUE)];
    let ht = jet[layout.index(Partial::time(1))];
    let httt = jet[layout.index(Partial::time(3))];
    let dt3 = dt * dt * dt;
    for (k, vel) in lattice.velocities().iter().enumerate() {
        let c = Contract::new(layout, jet, vel);
        let mut b = h;
        if order >= 3 {
            b += -0.5 * dt * c.one(Partial::VALUE) - 0.5 * dt * ht + 0.5 * dt * source;
        }
        if order >= 4 {
            b += dt3 / 8.0 * c.one(Partial::time(2))
                + dt3 / 8.0 * c.two(Partial::time(1))
                + dt3 / 24.0 * httt
                + dt3 / 24.0 * c.three();
        }
        out[k] = omega[k] * b;
    }
    Ok(())
}

/// Equilibrium-correction bracket of the half-way closure for incoming population k, from a jet at
/// (x_b, t). The incoming value is this bracket minus the post-collision opposite population.
#[allow(clippy::too_many_arguments)]
pub fn halfway_bracket(
    lattice: &Lattice,
    omega: &[f64],
    dt: f64,
    source: f64,
    order: u8,
    k: usize,
    layout: &JetLayout,
    jet: &[f64],
) -> Result<f64> {
    if !(1..=4).contains(&order) {
        return Err(Error::Config(format!("half-way closure order must be 1..=4, got {order}")));
    }
    let kb = lattice.opposite(k);
    let sum = omega[k] + omega[kb];
    let diff = omega[k] - omega[kb];
    let c = Contract::new(layout, jet, &lattice.velocities()[k]);
    let at = |p: Partial| jet[layout.index(p)];
    let (dt2, dt3) = (dt * dt, dt * dt * dt);
    let mut b = sum * at(Partial::VALUE);
    if order >= 2 {
        b += 0.5 * dt * sum * at(Partial::time(1)) + 0.5 * dt * sum * source;
    }
    if order >= 3 {
        b -= dt2 / 8.0 * sum * c.two(Partial::VALUE) + dt2 / 4.0 * diff * c.one(Partial::time(1));
    }
    if order >= 4 {
        b -= dt3 / 8.0 * diff * c.one(Partial::time(2))
            + dt3 / 16.0 * sum * c.two(Partial::time(1))
            + dt3 / 24.0 * sum * at(Partial::time(3));
    }
    Ok(b)
}

/// Initial populations at one node: K=1 gives omega*phi0, K=3 adds (dt/2)(u - c_k).grad phi0.
pub fn initial_populations(
    lattice: &Lattice,
    omega: &[f64],
    u: &[f64],
    dt: f64,
    order: u8,
    phi0: f64,
    gradient: &[f64],
    out: &mut [f64],
) -> Result<()> {
    match order {
        1 => {
            for (o, w) in out.iter_mut().zip(omega) {
                *o = w * phi0;
            }
        }
        3 => {
            for (k, vel) in lattice.velocities().iter().enumerate() {
                let drift: f64 = (0..u.len()).map(|a| (u[a] - vel[a]) * gradient[a]).sum();
                out[k] = omega[k] * (phi0 + 0.5 * dt * drift);
            }
        }
        _ => return Err(Error::Config(format!("initialization order must be 1 or 3, got {order}"))),
    }
    Ok(())
}
