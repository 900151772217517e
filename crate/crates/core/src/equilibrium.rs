use serde::Serialize;

use crate::error::{Error, Result};
use crate::lattice::{Lattice, MomentKind};

pub const DEFAULT_G: f64 = 0.5;

/// Weights at or below this are flagged as numerically marginal in reports.
pub const MARGINAL_WEIGHT: f64 = 1e-14;

/// Feasible interval for the shared fourth-order moment, in units of c^4.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FourthMomentBounds {
    pub lower: f64,
    pub upper: f64,
}

impl FourthMomentBounds {
    pub fn feasible(&self) -> bool {
        self.lower < self.upper
    }

    pub fn blend(&self, g: f64) -> f64 {
        self.lower * g + self.upper * (1.0 - g)
    }
}

/// Bounds on x_i^2 x_j^2 / c^4 that keep every weight positive. Requires d >= 2.
pub fn fourth_moment_bounds(sigma: &[f64]) -> FourthMomentBounds {
    let d = sigma.len();
    assert!(d >= 2, "fourth-order moments need at least two dimensions");
    let df = d as f64;
    let sum_sq: f64 = sigma.iter().map(|s| s * s).sum();
    let mut lower = (-6.0 + 2.0 * df + 4.0 * sum_sq) / (3.0 * df * (df - 1.0));
    for i in 0..d {
        for j in i + 1..d {
            let (a, b) = (sigma[i], sigma[j]);
            lower = lower
                .max(((a + b).abs() - 2.0 * a * b) / 3.0)
                .max(((a - b).abs() + 2.0 * a * b) / 3.0);
        }
    }
    let upper = sigma
        .iter()
        .map(|&s| (1.0 + 2.0 * s * s - ((4.0 - df) * s).abs()) / (3.0 * (df - 1.0)))
        .fold(f64::INFINITY, f64::min);
    FourthMomentBounds { lower, upper }
}

/// Blended fourth-order moment (units c^4) and its interval. Errors when the interval is empty.
pub fn fourth_moment(sigma: &[f64], g: f64) -> Result<(f64, FourthMomentBounds)> {
    let b = fourth_moment_bounds(sigma);
    if !b.feasible() {
        return Err(Error::InfeasibleFourthMoment { lower: b.lower, upper: b.upper });
    }
    Ok((b.blend(g), b))
}

/// Equilibrium moment vector in lattice row order. `m4` holds one value per pair i<j
/// (already in units of c^4, i.e. dimensional).
pub fn moment_vector(lattice: &Lattice, u: &[f64], m4: &[f64]) -> Vec<f64> {
    let c = lattice.c();
    let d = lattice.dim();
    let pair_index = |i: usize, j: usize| (0..i).map(|a| d - 1 - a).sum::<usize>() + (j - i - 1);
    lattice
        .moment_kinds()
        .iter()
        .map(|kind| match *kind {
            MomentKind::Zeroth => 1.0,
            MomentKind::First(i) => u[i],
            MomentKind::Second(i) => (c * c + 2.0 * u[i] * u[i]) / 3.0,
            MomentKind::Cross(i, j) => 2.0 * u[i] * u[j] / 3.0,
            MomentKind::Third(_, j) => c * c * u[j] / 3.0,
            MomentKind::Fourth(i, j) => m4[pair_index(i, j)],
        })
        .collect()
}

/// Weights from the closed-form families (rest, +axis, -axis, diagonal).
pub fn closed_form_weights(lattice: &Lattice, u: &[f64], m4: &[f64]) -> Vec<f64> {
    let c = lattice.c();
    let d = lattice.dim();
    let df = d as f64;
    let (c2, c3, c4) = (c * c, c * c * c, c * c * c * c);
    let pair_index = |i: usize, j: usize| {
        let (i, j) = (i.min(j), i.max(j));
        (0..i).map(|a| d - 1 - a).sum::<usize>() + (j - i - 1)
    };
    let sum_u2: f64 = u.iter().map(|v| v * v).sum();
    let sum_m4: f64 = m4.iter().sum();
    (0..lattice.q())
        .map(|k| {
            let e = lattice.unit_velocity(k);
            let nz: Vec<usize> = (0..d).filter(|&a| e[a] != 0).collect();
            match nz.as_slice() {
                [] => (3.0 * c4 - df * c4 - 2.0 * c2 * sum_u2 + 3.0 * sum_m4) / (3.0 * c4),
                &[i] => {
                    let s = e[i] as f64;
                    let others: f64 = (0..d).filter(|&j| j != i).map(|j| m4[pair_index(i, j)]).sum();
                    (s * c3 * (4.0 - df) * u[i] + c4 + 2.0 * c2 * u[i] * u[i] - 3.0 * others) / (6.0 * c4)
                }
                &[i, j] => {
                    let (si, sj) = (e[i] as f64, e[j] as f64);
                    (3.0 * m4[pair_index(i, j)] + 2.0 * c2 * si * sj * u[i] * u[j] + c3 * (si * u[i] + sj * u[j]))
                        / (12.0 * c4)
                }
                _ => unreachable!("velocities have at most two nonzero components"),
            }
        })
        .collect()
}

/// Strict positivity of all weights; returns the verdict and min weight.
pub fn entropy_stable(omega: &[f64]) -> (bool, f64) {
    let margin = omega.iter().copied().fold(f64::INFINITY, f64::min);
    (margin > 0.0, margin)
}

/// Transport velocity, lattice velocity and the resulting equilibrium weights.
#[derive(Debug, Clone, Serialize)]
pub struct Equilibrium {
    pub u: Vec<f64>,
    pub c: f64,
    pub sigma: Vec<f64>,
    pub g: f64,
    pub epsilon: Vec<f64>,
    pub omega: Vec<f64>,
    /// One value per pair i<j, in units of c^4.
    pub m4: Vec<f64>,
    pub bounds: Option<FourthMomentBounds>,
}

impl Equilibrium {
    /// Builds the equilibrium, refusing an empty fourth-moment interval.
    pub fn new(lattice: &Lattice, u: &[f64], g: f64) -> Result<Self> {
        let eq = Self::build(lattice, u, g)?;
        if let Some(b) = eq.bounds {
            if !b.feasible() {
                return Err(Error::InfeasibleFourthMoment { lower: b.lower, upper: b.upper });
            }
        }
        Ok(eq)
    }

    /// Same blend formula, applied even when the interval is empty. For instability studies.
    pub fn new_unchecked(lattice: &Lattice, u: &[f64], g: f64) -> Result<Self> {
        Self::build(lattice, u, g)
    }

    /// Explicit per-pair fourth moments (units c^4), bypassing the blend.
    pub fn with_fourth_moments(lattice: &Lattice, u: &[f64], g: f64, m4: Vec<f64>) -> Result<Self> {
        let d = lattice.dim();
        check_velocity(lattice, u)?;
        if m4.len() != d * (d - 1) / 2 {
            return Err(Error::InvalidParameter(format!(
                "expected {} fourth-order moments, got {}",
                d * (d - 1) / 2,
                m4.len()
            )));
        }
        let c = lattice.c();
        let sigma: Vec<f64> = u.iter().map(|v| v / c).collect();
        let bounds = (d >= 2).then(|| fourth_moment_bounds(&sigma));
        let epsilon = moment_vector(lattice, u, &m4);
        let omega = lattice.inverse_matrix() * nalgebra::DVector::from_column_slice(&epsilon);
        Ok(Equilibrium { u: u.to_vec(), c, sigma, g, epsilon, omega: omega.as_slice().to_vec(), m4, bounds })
    }

    fn build(lattice: &Lattice, u: &[f64], g: f64) -> Result<Self> {
        check_velocity(lattice, u)?;
        if !(g > 0.0 && g < 1.0) {
            return Err(Error::InvalidParameter(format!("blend parameter g must lie in (0,1), got {g}")));
        }
        let d = lattice.dim();
        let c = lattice.c();
        let sigma: Vec<f64> = u.iter().map(|v| v / c).collect();
        let m4 = if d >= 2 {
            let value = fourth_moment_bounds(&sigma).blend(g) * c.powi(4);
            vec![value; d * (d - 1) / 2]
        } else {
            Vec::new()
        };
        Self::with_fourth_moments(lattice, u, g, m4)
    }

    pub fn q(&self) -> usize {
        self.omega.len()
    }

    pub fn margin(&self) -> f64 {
        entropy_stable(&self.omega).1
    }

    pub fn is_entropy_stable(&self) -> bool {
        entropy_stable(&self.omega).0 && self.bounds.map_or(true, |b| b.feasible())
    }
}

fn check_velocity(lattice: &Lattice, u: &[f64]) -> Result<()> {
    if u.len() != lattice.dim() {
        return Err(Error::InvalidParameter(format!(
            "velocity has {} components, lattice dimension is {}",
            u.len(),
            lattice.dim()
        )));
    }
    if u.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidParameter("velocity must be finite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct RegionPoint {
    pub sigma: Vec<f64>,
    pub stable: bool,
    pub margin: f64,
}

/// Entropy-stability verdict at every grid point (c = 1).
pub fn entropy_region_scan(d: usize, sigma_grid: &[Vec<f64>], g: f64) -> Result<Vec<RegionPoint>> {
    let lattice = Lattice::new(d, 1.0)?;
    sigma_grid
        .iter()
        .map(|sigma| {
            let eq = Equilibrium::new_unchecked(&lattice, sigma, g)?;
            Ok(RegionPoint { sigma: sigma.clone(), stable: eq.is_entropy_stable(), margin: eq.margin() })
        })
        .collect()
}

/// Tensor grid of n points per axis over [lo, hi]. Points are computed as lo + i*(hi-lo)/(n-1)
/// after rounding to the symmetric form so that 0 and +-1/2 are hit exactly when they lie on the grid.
pub fn sigma_grid(d: usize, lo: f64, hi: f64, n: usize) -> Vec<Vec<f64>> {
    assert!(n >= 2);
    let axis: Vec<f64> = (0..n)
        .map(|i| {
            let m = (n - 1) as f64;
            (lo * (m - i as f64) + hi * i as f64) / m
        })
        .collect();
    let total = n.pow(d as u32);
    (0..total)
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let v = axis[code % n];
                    code /= n;
                    v
                })
                .collect()
        })
        .collect()
}
