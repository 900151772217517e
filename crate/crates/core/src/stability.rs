use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::Serialize;

use crate::equilibrium::Equilibrium;
use crate::error::{Error, Result};
use crate::lattice::Lattice;

#[derive(Debug, Clone, Copy, Serialize)]
pub struct VerdictOptions {
    /// Allowed excess of |lambda| over 1.
    pub tol: f64,
    /// Unit-modulus eigenvalues closer than this are treated as repeated.
    pub gap_tol: f64,
    /// Singular values below this (relative to ||G||) count towards the nullity of G - lambda I.
    pub null_tol: f64,
    /// Stop scanning wavenumbers at the first violation; `max_rho` is then only a lower bound.
    pub stop_early: bool,
}

impl Default for VerdictOptions {
    fn default() -> Self {
        VerdictOptions { tol: 1e-9, gap_tol: 1e-7, null_tol: 1e-6, stop_early: false }
    }
}

/// diag(exp(-i c_k . xi / c))
pub fn shift_diagonal(lattice: &Lattice, xi: &[f64]) -> Vec<Complex64> {
    (0..lattice.q())
        .map(|k| {
            let phase: f64 = lattice.unit_velocity(k).iter().zip(xi).map(|(&e, x)| e as f64 * x).sum();
            Complex64::from_polar(1.0, -phase)
        })
        .collect()
}

fn to_complex(m: &DMatrix<f64>) -> DMatrix<Complex64> {
    m.map(|v| Complex64::new(v, 0.0))
}

/// G = M T M~ (2 eps e_1^T - I).
pub fn amplification_matrix(lattice: &Lattice, epsilon: &[f64], xi: &[f64]) -> DMatrix<Complex64> {
    let q = lattice.q();
    let t = shift_diagonal(lattice, xi);
    let m = to_complex(lattice.moment_matrix());
    let mut tm = to_complex(lattice.inverse_matrix());
    for (k, s) in t.iter().enumerate() {
        let mut row = tm.row_mut(k);
        row *= *s;
    }
    let mut collision = DMatrix::<Complex64>::from_element(q, q, Complex64::new(0.0, 0.0));
    for r in 0..q {
        collision[(r, 0)] = Complex64::new(2.0 * epsilon[r], 0.0);
        collision[(r, r)] -= Complex64::new(1.0, 0.0);
    }
    m * tm * collision
}

/// T (2 omega 1^T - I): the population-space form, similar to the moment-space G via M.
pub fn population_matrix(lattice: &Lattice, omega: &[f64], xi: &[f64]) -> DMatrix<Complex64> {
    let q = lattice.q();
    let t = shift_diagonal(lattice, xi);
    DMatrix::from_fn(q, q, |r, k| {
        let delta = if r == k { 1.0 } else { 0.0 };
        t[r] * (2.0 * omega[r] - delta)
    })
}

pub fn eigenvalues(g: &DMatrix<Complex64>) -> Result<Vec<Complex64>> {
    let schur = nalgebra::linalg::Schur::try_new(g.clone(), 1e-15, 10_000)
        .ok_or_else(|| Error::Eigen("Schur iteration did not converge".into()))?;
    let ev: DVector<Complex64> = schur.eigenvalues().ok_or_else(|| Error::Eigen("no eigenvalues".into()))?;
    Ok(ev.iter().copied().collect())
}

pub fn spectral_radius(g: &DMatrix<Complex64>) -> Result<f64> {
    Ok(eigenvalues(g)?.iter().map(|l| l.norm()).fold(0.0, f64::max))
}

/// Spectral data of one matrix: radius and whether every repeated unit-modulus eigenvalue is semisimple.
#[derive(Debug, Clone, Copy)]
pub struct SpectrumCheck {
    pub rho: f64,
    pub repeated_unit: bool,
    pub defective: bool,
}

pub fn check_spectrum(g: &DMatrix<Complex64>, opts: &VerdictOptions) -> Result<SpectrumCheck> {
    let ev = eigenvalues(g)?;
    let rho = ev.iter().map(|l| l.norm()).fold(0.0, f64::max);
    let unit: Vec<Complex64> = ev.iter().copied().filter(|l| l.norm() > 1.0 - 1e3 * opts.tol.max(1e-12)).collect();
    let mut used = vec![false; unit.len()];
    let mut repeated_unit = false;
    let mut defective = false;
    for i in 0..unit.len() {
        if used[i] {
            continue;
        }
        used[i] = true;
        let mut cluster = vec![unit[i]];
        // grow the cluster transitively
        let mut grew = true;
        while grew {
            grew = false;
            for j in 0..unit.len() {
                if !used[j] && cluster.iter().any(|c| (c - unit[j]).norm() < opts.gap_tol) {
                    used[j] = true;
                    cluster.push(unit[j]);
                    grew = true;
                }
            }
        }
        if cluster.len() > 1 {
            repeated_unit = true;
            let centre = cluster.iter().sum::<Complex64>() / cluster.len() as f64;
            let mut shifted = g.clone();
            for r in 0..shifted.nrows() {
                shifted[(r, r)] -= centre;
            }
            let sv = shifted.singular_values();
            let scale = g.norm().max(1.0);
            let nullity = sv.iter().filter(|s| **s < opts.null_tol * scale).count();
            if nullity < cluster.len() {
                defective = true;
            }
        }
    }
    Ok(SpectrumCheck { rho, repeated_unit, defective })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityVerdict {
    pub sigma: Vec<f64>,
    pub max_rho: f64,
    pub worst_xi: Vec<f64>,
    pub l2_stable: bool,
    pub entropy_stable: bool,
    /// Some sampled wavenumber has a repeated unit-modulus eigenvalue that is not semisimple.
    pub marginal: bool,
    pub min_omega: f64,
}

/// Wavenumbers 2 pi j / n per axis without the zero tuple, keeping one of each (xi, -xi) pair.
pub fn xi_samples(d: usize, n: usize) -> Vec<Vec<f64>> {
    let total = n.pow(d as u32);
    let mut out = Vec::new();
    for code in 1..total {
        let mut idx = Vec::with_capacity(d);
        let mut rem = code;
        for _ in 0..d {
            idx.push(rem % n);
            rem /= n;
        }
        let neg: usize = idx.iter().rev().fold(0, |acc, &j| acc * n + (n - j) % n);
        if neg < code {
            continue;
        }
        out.push(idx.iter().map(|&j| 2.0 * std::f64::consts::PI * j as f64 / n as f64).collect());
    }
    out
}

/// Sampled von Neumann test for the equilibrium built from (u, g); c comes from the lattice.
pub fn l2_verdict(
    lattice: &Lattice,
    u: &[f64],
    g: f64,
    xi_samples: &[Vec<f64>],
    opts: &VerdictOptions,
) -> Result<StabilityVerdict> {
    let eq = Equilibrium::new_unchecked(lattice, u, g)?;
    let mut max_rho = 0.0;
    let mut worst_xi = vec![0.0; lattice.dim()];
    let mut marginal = false;
    for xi in xi_samples {
        let m = population_matrix(lattice, &eq.omega, xi);
        let check = check_spectrum(&m, opts)?;
        if check.rho > max_rho {
            max_rho = check.rho;
            worst_xi = xi.clone();
        }
        marginal |= check.defective;
        if opts.stop_early && (marginal || max_rho > 1.0 + opts.tol) {
            break;
        }
    }
    Ok(StabilityVerdict {
        sigma: eq.sigma.clone(),
        max_rho,
        worst_xi,
        l2_stable: max_rho <= 1.0 + opts.tol && !marginal,
        entropy_stable: eq.is_entropy_stable(),
        marginal,
        min_omega: eq.margin(),
    })
}

/// L2 verdicts over a sigma grid (c = 1) with n wavenumbers per axis.
pub fn l2_region_scan(
    d: usize,
    sigma_grid: &[Vec<f64>],
    g: f64,
    n_xi: usize,
    opts: &VerdictOptions,
) -> Result<Vec<StabilityVerdict>> {
    let lattice = Lattice::new(d, 1.0)?;
    let xi = xi_samples(d, n_xi);
    sigma_grid.iter().map(|s| l2_verdict(&lattice, s, g, &xi, opts)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn sorted(mut v: Vec<Complex64>) -> Vec<Complex64> {
        v.sort_by(|a, b| a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im)));
        v
    }

    fn same_spectrum(a: &[Complex64], b: &[Complex64], tol: f64) -> bool {
        // greedy matching, fine for well-separated test spectra
        let mut used = vec![false; b.len()];
        a.iter().all(|x| {
            let best = (0..b.len()).filter(|&j| !used[j]).min_by(|&i, &j| {
                (b[i] - x).norm().total_cmp(&(b[j] - x).norm())
            });
            match best {
                Some(j) if (b[j] - x).norm() < tol => {
                    used[j] = true;
                    true
                }
                _ => false,
            }
        })
    }

    #[test]
    fn zero_wavenumber_involution() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        for d in 1..=3 {
            let lat = Lattice::new(d, 1.0).unwrap();
            for _ in 0..10 {
                let u: Vec<f64> = (0..d).map(|_| rng.gen_range(-0.2..0.2)).collect();
                let eq = Equilibrium::new(&lat, &u, rng.gen_range(0.1..0.9)).unwrap();
                let g = amplification_matrix(&lat, &eq.epsilon, &vec![0.0; d]);
                let eye = DMatrix::<Complex64>::identity(lat.q(), lat.q());
                assert!((&g * &g - eye).iter().all(|z| z.norm() < 1e-12));
                assert!((spectral_radius(&g).unwrap() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn identity_has_unit_radius() {
        let eye = DMatrix::<Complex64>::identity(5, 5);
        assert!((spectral_radius(&eye).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn moment_and_population_forms_share_spectrum() {
        let lat = Lattice::new(2, 1.0).unwrap();
        let eq = Equilibrium::new(&lat, &[0.3, -0.1], 0.5).unwrap();
        for xi in [[0.3, 1.7], [2.0, 5.0], [std::f64::consts::PI, 0.1]] {
            let a = eigenvalues(&amplification_matrix(&lat, &eq.epsilon, &xi)).unwrap();
            let b = eigenvalues(&population_matrix(&lat, &eq.omega, &xi)).unwrap();
            assert!(same_spectrum(&a, &b, 1e-10), "{a:?} {b:?}");
        }
    }

    #[test]
    fn conjugate_symmetry() {
        let lat = Lattice::new(2, 1.0).unwrap();
        let eq = Equilibrium::new(&lat, &[0.2, 0.35], 0.5).unwrap();
        let xi = [0.9, 4.1];
        let neg = [2.0 * std::f64::consts::PI - 0.9, 2.0 * std::f64::consts::PI - 4.1];
        let a = eigenvalues(&population_matrix(&lat, &eq.omega, &xi)).unwrap();
        let b: Vec<Complex64> =
            eigenvalues(&population_matrix(&lat, &eq.omega, &neg)).unwrap().iter().map(|z| z.conj()).collect();
        assert!(same_spectrum(&a, &b, 1e-10));
    }

    #[test]
    fn marginal_one_dimensional_roots() {
        let lat = Lattice::new(1, 1.0).unwrap();
        let eq = Equilibrium::new(&lat, &[0.5], 0.5).unwrap();
        for theta in [0.4, 1.3, 2.9, 4.4] {
            let ev = sorted(eigenvalues(&amplification_matrix(&lat, &eq.epsilon, &[theta])).unwrap());
            let i = Complex64::i();
            let want = sorted(vec![-(i * theta).exp(), (-i * theta / 2.0).exp(), -(-i * theta / 2.0).exp()]);
            assert!(same_spectrum(&ev, &want, 1e-10), "{ev:?} {want:?}");
        }
    }

    #[test]
    fn verdict_examples() {
        let opts = VerdictOptions::default();
        let l1 = Lattice::new(1, 1.0).unwrap();
        let xi1 = xi_samples(1, 256);
        assert!(l2_verdict(&l1, &[0.3], 0.5, &xi1, &opts).unwrap().l2_stable);
        let half = l2_verdict(&l1, &[0.5], 0.5, &xi1, &opts).unwrap();
        assert!(half.l2_stable && !half.entropy_stable);
        let fast = l2_verdict(&l1, &[0.6], 0.5, &xi1, &opts).unwrap();
        assert!(!fast.l2_stable && fast.max_rho > 1.0);
        let l2 = Lattice::new(2, 1.0).unwrap();
        let xi2 = xi_samples(2, 16);
        assert!(!l2_verdict(&l2, &[0.6, 0.0], 0.5, &xi2, &opts).unwrap().l2_stable);
        assert!(l2_verdict(&l2, &[0.3, -0.2], 0.5, &xi2, &opts).unwrap().l2_stable);
    }

    #[test]
    fn defective_block_is_flagged() {
        let mut g = DMatrix::<Complex64>::identity(3, 3);
        g[(0, 1)] = Complex64::new(1.0, 0.0);
        let c = check_spectrum(&g, &VerdictOptions::default()).unwrap();
        assert!(c.repeated_unit && c.defective);
        let eye = DMatrix::<Complex64>::identity(3, 3);
        let c = check_spectrum(&eye, &VerdictOptions::default()).unwrap();
        assert!(c.repeated_unit && !c.defective);
    }

    #[test]
    fn xi_samples_halve_the_grid() {
        let s = xi_samples(2, 4);
        // 15 nonzero tuples: 3 self-conjugate + 12 in conjugate pairs
        assert_eq!(s.len(), 3 + 6);
        assert!(s.iter().all(|x| x.iter().any(|v| *v != 0.0)));
    }
}
