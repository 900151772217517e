use serde::Serialize;

use crate::error::{Error, Result};

/// Microscopic entropy of one node: sum_k f_k^2 / (2 omega_k).
pub fn node_entropy(f: &[f64], omega: &[f64]) -> Result<f64> {
    check_weights(omega)?;
    Ok(quadratic_form(f, omega) * 0.5)
}

/// sum_k f_k^2 / omega_k without the positivity check; indefinite when some weight is negative.
pub fn quadratic_form(f: &[f64], omega: &[f64]) -> f64 {
    f.iter().zip(omega).map(|(x, w)| x * x / w).sum()
}

pub fn check_weights(omega: &[f64]) -> Result<()> {
    match omega.iter().position(|&w| !(w > 0.0)) {
        Some(index) => Err(Error::NonPositiveWeight { index, value: omega[index] }),
        None => Ok(()),
    }
}

/// Weighted squared norm sum_k a_k^2 f_k^2 over a population-major buffer
/// (`f[k * nodes + node]`).
pub fn weighted_l2(f: &[f64], nodes: usize, a_squared: &[f64]) -> Result<f64> {
    if let Some(index) = a_squared.iter().position(|&a| a == 0.0) {
        return Err(Error::InvalidParameter(format!("weight {index} is zero")));
    }
    Ok(population_sums(f, nodes, a_squared))
}

/// sum_k w_k sum_nodes f_k^2, accumulated population by population in node order.
pub(crate) fn population_sums(f: &[f64], nodes: usize, w: &[f64]) -> f64 {
    w.iter()
        .enumerate()
        .map(|(k, wk)| wk * f[k * nodes..(k + 1) * nodes].iter().map(|x| x * x).sum::<f64>())
        .sum()
}

/// Total entropy over a population-major buffer.
pub fn total_entropy(f: &[f64], nodes: usize, omega: &[f64]) -> Result<f64> {
    check_weights(omega)?;
    let inv: Vec<f64> = omega.iter().map(|w| 0.5 / w).collect();
    Ok(population_sums(f, nodes, &inv))
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct TraceRecord {
    pub step: u64,
    pub time: f64,
    pub total_phi: f64,
    /// sum f^2/(2 omega); evaluated even when a weight is negative, where it is indefinite
    pub total_entropy: f64,
    pub weighted_l2_unit: f64,
    pub weighted_l2_inv_omega: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct EntropyTrace {
    pub records: Vec<TraceRecord>,
}

impl EntropyTrace {
    /// max_n |S_n - S_0| / |S_0|
    pub fn relative_drift(&self) -> f64 {
        let Some(first) = self.records.first() else { return 0.0 };
        let s0 = first.total_entropy;
        self.records
            .iter()
            .map(|r| {
                let d = ((r.total_entropy - s0) / s0).abs();
                if d.is_nan() {
                    f64::INFINITY
                } else {
                    d
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "step,time,total_phi,total_entropy,weighted_l2_unit,weighted_l2_inv_omega")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.17e}",
                r.step, r.time, r.total_phi, r.total_entropy, r.weighted_l2_unit, r.weighted_l2_inv_omega
            )?;
        }
        Ok(())
    }
}
