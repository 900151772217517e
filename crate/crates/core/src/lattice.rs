use nalgebra::DMatrix;

use crate::error::{Error, Result};

pub const MAX_DIMENSION: usize = 5;

/// Exponents of a velocity monomial, one per axis.
pub type Monomial = [u8; MAX_DIMENSION];

/// Kind of a natural moment row, with the axes it involves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentKind {
    Zeroth,
    First(usize),
    Second(usize),
    Cross(usize, usize),
    /// x_i^2 x_j
    Third(usize, usize),
    /// x_i^2 x_j^2, i < j
    Fourth(usize, usize),
}

impl MomentKind {
    pub fn degree(&self) -> i32 {
        match self {
            MomentKind::Zeroth => 0,
            MomentKind::First(_) => 1,
            MomentKind::Second(_) | MomentKind::Cross(..) => 2,
            MomentKind::Third(..) => 3,
            MomentKind::Fourth(..) => 4,
        }
    }

    pub fn monomial(&self) -> Monomial {
        let mut m = [0u8; MAX_DIMENSION];
        match *self {
            MomentKind::Zeroth => {}
            MomentKind::First(i) => m[i] = 1,
            MomentKind::Second(i) => m[i] = 2,
            MomentKind::Cross(i, j) => {
                m[i] = 1;
                m[j] = 1;
            }
            MomentKind::Third(i, j) => {
                m[i] = 2;
                m[j] = 1;
            }
            MomentKind::Fourth(i, j) => {
                m[i] = 2;
                m[j] = 2;
            }
        }
        m
    }
}

/// Row order of the natural-moment matrix.
///
/// | block  | rows                                   | count      |
/// |--------|----------------------------------------|------------|
/// | 0      | 1                                      | 1          |
/// | first  | x_1 .. x_d                             | d          |
/// | second | x_1^2 .. x_d^2                         | d          |
/// | cross  | x_i x_j, i<j lexicographic             | d(d-1)/2   |
/// | third  | x_1^2x_2, x_1^2x_3, .., x_2^2x_1, ..   | d(d-1)     |
/// | fourth | x_i^2 x_j^2, i<j lexicographic         | d(d-1)/2   |
pub fn moment_kinds(d: usize) -> Vec<MomentKind> {
    let mut rows = vec![MomentKind::Zeroth];
    rows.extend((0..d).map(MomentKind::First));
    rows.extend((0..d).map(MomentKind::Second));
    for i in 0..d {
        for j in i + 1..d {
            rows.push(MomentKind::Cross(i, j));
        }
    }
    for i in 0..d {
        for j in 0..d {
            if j != i {
                rows.push(MomentKind::Third(i, j));
            }
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            rows.push(MomentKind::Fourth(i, j));
        }
    }
    rows
}

/// Unit velocity directions in population order: rest, +e_i, -e_i, then for every
/// axis pair i<j the four diagonals with (c_i, c_j) = (1,1), (-1,1), (-1,-1), (1,-1).
pub fn unit_velocities(d: usize) -> Result<Vec<[i8; MAX_DIMENSION]>> {
    check_dimension(d)?;
    let mut v = vec![[0i8; MAX_DIMENSION]];
    for sign in [1i8, -1] {
        for i in 0..d {
            let mut e = [0i8; MAX_DIMENSION];
            e[i] = sign;
            v.push(e);
        }
    }
    for i in 0..d {
        for j in i + 1..d {
            for (si, sj) in DIAGONAL_SIGNS {
                let mut e = [0i8; MAX_DIMENSION];
                e[i] = si;
                e[j] = sj;
                v.push(e);
            }
        }
    }
    Ok(v)
}

const DIAGONAL_SIGNS: [(i8, i8); 4] = [(1, 1), (-1, 1), (-1, -1), (1, -1)];

fn check_dimension(d: usize) -> Result<()> {
    if (1..=MAX_DIMENSION).contains(&d) {
        Ok(())
    } else {
        Err(Error::Dimension(d))
    }
}

/// Velocities scaled by `c`.
pub fn build_velocities(d: usize, c: f64) -> Result<Vec<Vec<f64>>> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter(format!("lattice velocity must be positive, got {c}")));
    }
    Ok(unit_velocities(d)?
        .iter()
        .map(|e| e[..d].iter().map(|&s| c * s as f64).collect())
        .collect())
}

/// Natural-moment matrix: row r evaluates the r-th monomial at every velocity.
pub fn build_moment_matrix(velocities: &[Vec<f64>]) -> DMatrix<f64> {
    let q = velocities.len();
    let d = velocities.first().map_or(0, |v| v.len());
    let kinds = moment_kinds(d);
    assert_eq!(kinds.len(), q, "velocity count does not match the DdQ(2d^2+1) moment rows");
    DMatrix::from_fn(q, q, |r, k| {
        let m = kinds[r].monomial();
        velocities[k]
            .iter()
            .zip(m.iter())
            .map(|(&x, &e)| x.powi(e as i32))
            .product()
    })
}

/// Closed-form inverse of the moment matrix, assembled column by column.
pub fn build_inverse_matrix(d: usize, c: f64) -> Result<DMatrix<f64>> {
    let units = unit_velocities(d)?;
    let q = units.len();
    let kinds = moment_kinds(d);
    let rest = 0;
    let plus = |i: usize| 1 + i;
    let minus = |i: usize| 1 + d + i;
    let diagonal_start = |i: usize, j: usize| {
        // pairs before (i, j) in lexicographic order
        let before: usize = (0..i).map(|a| d - 1 - a).sum::<usize>() + (j - i - 1);
        1 + 2 * d + 4 * before
    };

    let mut inv = DMatrix::<f64>::zeros(q, q);
    for (col, kind) in kinds.iter().enumerate() {
        match *kind {
            MomentKind::Zeroth => inv[(rest, col)] = 1.0,
            MomentKind::First(i) => {
                inv[(plus(i), col)] = 0.5;
                inv[(minus(i), col)] = -0.5;
            }
            MomentKind::Second(i) => {
                inv[(rest, col)] = -1.0;
                inv[(plus(i), col)] = 0.5;
                inv[(minus(i), col)] = 0.5;
            }
            MomentKind::Cross(i, j) => {
                let s = diagonal_start(i, j);
                for l in 0..4 {
                    let e = units[s + l];
                    inv[(s + l, col)] = 0.25 * (e[i] * e[j]) as f64;
                }
            }
            MomentKind::Third(i, j) => {
                inv[(plus(j), col)] = -0.5;
                inv[(minus(j), col)] = 0.5;
                let s = diagonal_start(i.min(j), i.max(j));
                for l in 0..4 {
                    inv[(s + l, col)] = 0.25 * units[s + l][j] as f64;
                }
            }
            MomentKind::Fourth(i, j) => {
                inv[(rest, col)] = 1.0;
                for a in [i, j] {
                    inv[(plus(a), col)] = -0.5;
                    inv[(minus(a), col)] = -0.5;
                }
                let s = diagonal_start(i, j);
                for l in 0..4 {
                    inv[(s + l, col)] = 0.25;
                }
            }
        }
        let scale = c.powi(-kind.degree());
        if scale != 1.0 {
            for k in 0..q {
                inv[(k, col)] *= scale;
            }
        }
    }
    Ok(inv)
}

/// The DdQ(2d^2+1) lattice with its moment transform.
#[derive(Debug, Clone)]
pub struct Lattice {
    d: usize,
    c: f64,
    units: Vec<[i8; MAX_DIMENSION]>,
    velocities: Vec<Vec<f64>>,
    kinds: Vec<MomentKind>,
    moment_matrix: DMatrix<f64>,
    inverse_matrix: DMatrix<f64>,
    opposite: Vec<usize>,
}

impl Lattice {
    pub fn new(d: usize, c: f64) -> Result<Self> {
        let velocities = build_velocities(d, c)?;
        let units = unit_velocities(d)?;
        let moment_matrix = build_moment_matrix(&velocities);
        let inverse_matrix = build_inverse_matrix(d, c)?;
        let opposite = units
            .iter()
            .map(|e| {
                let neg: Vec<i8> = e.iter().map(|&s| -s).collect();
                units.iter().position(|o| o[..] == neg[..]).expect("velocity set closed under negation")
            })
            .collect();
        Ok(Lattice { d, c, units, velocities, kinds: moment_kinds(d), moment_matrix, inverse_matrix, opposite })
    }

    pub fn dim(&self) -> usize {
        self.d
    }

    pub fn q(&self) -> usize {
        self.units.len()
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    pub fn velocities(&self) -> &[Vec<f64>] {
        &self.velocities
    }

    /// Velocity directions with components in {-1, 0, 1}.
    pub fn unit_velocity(&self, k: usize) -> &[i8] {
        &self.units[k][..self.d]
    }

    pub fn moment_kinds(&self) -> &[MomentKind] {
        &self.kinds
    }

    pub fn moment_matrix(&self) -> &DMatrix<f64> {
        &self.moment_matrix
    }

    pub fn inverse_matrix(&self) -> &DMatrix<f64> {
        &self.inverse_matrix
    }

    pub fn opposite(&self, k: usize) -> usize {
        self.opposite[k]
    }

    pub fn opposites(&self) -> &[usize] {
        &self.opposite
    }

    /// max |M M~ - I|
    pub fn identity_residual(&self) -> f64 {
        let p = &self.moment_matrix * &self.inverse_matrix;
        let q = self.q();
        let mut worst = 0.0f64;
        for r in 0..q {
            for k in 0..q {
                let target = if r == k { 1.0 } else { 0.0 };
                worst = worst.max((p[(r, k)] - target).abs());
            }
        }
        worst
    }
}
