//! Brute-force verification on small models: population partial correlations
//! straight from the joint covariance, partial-faithfulness checking, and
//! exhaustive validation that the nonzero coefficients are exactly the
//! variables whose partial correlations never vanish.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::pc::{joint_covariance, pc_simple_population};
use crate::sim::ModelSpec;
use crate::stats::partial_correlation;

/// Enumeration cap: 2^(p-1) conditioning sets per variable.
pub const MAX_ENUM_P: usize = 12;

/// Default zero tolerance for the oracle, looser than the selection
/// algorithm's because chained inversions accumulate more rounding.
pub const DEFAULT_ORACLE_ZERO_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Serialize)]
pub struct Violation {
    pub j: usize,
    pub s: Vec<usize>,
    pub rho_full: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FaithfulnessReport {
    pub holds: bool,
    pub violations: Vec<Violation>,
}

fn check_cap(p: usize) -> Result<()> {
    if p > MAX_ENUM_P {
        return Err(Error::Capability(format!(
            "exhaustive enumeration is capped at p <= {MAX_ENUM_P}, got p = {p}"
        )));
    }
    Ok(())
}

/// Exact (to rounding) rho(Y, X^(j) | X^(S)) by inverting the covariance
/// submatrix of (Y, X) on {Y, j} union S.
///
/// This route works on the covariance scale, independent of the
/// correlation-matrix path used by the selection algorithm.
pub fn population_partial_correlation(model: &ModelSpec, j: usize, s: &[usize]) -> Result<f64> {
    if j < 1 || j > model.p() {
        return Err(Error::Domain(format!("covariate index {j} out of range")));
    }
    let joint = joint_covariance(model)?;
    partial_correlation(&joint, 0, j, s)
        .map_err(|e| Error::Model(format!("population query failed: {e}")))
}

/// Visit every subset of `items` (all cardinalities, bitmask order).
fn for_each_subset_all<F: FnMut(&[usize])>(items: &[usize], mut f: F) {
    let n = items.len();
    let mut buf = Vec::with_capacity(n);
    for mask in 0u32..(1u32 << n) {
        buf.clear();
        for (i, &item) in items.iter().enumerate() {
            if mask & (1 << i) != 0 {
                buf.push(item);
            }
        }
        f(&buf);
    }
}

/// Check partial faithfulness by full enumeration: a zero rho(Y,j|S) for any
/// S must force the full-conditioning partial correlation to zero as well.
pub fn check_partial_faithfulness(model: &ModelSpec, zero_tol: f64) -> Result<FaithfulnessReport> {
    let p = model.p();
    check_cap(p)?;
    let joint = joint_covariance(model)?;
    let mut violations = Vec::new();
    for j in 1..=p {
        let others: Vec<usize> = (1..=p).filter(|&k| k != j).collect();
        let rho_full = partial_correlation(&joint, 0, j, &others)
            .map_err(|e| Error::Model(format!("full-conditioning query failed: {e}")))?;
        if rho_full.abs() <= zero_tol {
            continue;
        }
        let mut result = Ok(());
        for_each_subset_all(&others, |s| {
            if result.is_err() {
                return;
            }
            match partial_correlation(&joint, 0, j, s) {
                Ok(rho) => {
                    if rho.abs() <= zero_tol {
                        violations.push(Violation {
                            j,
                            s: s.to_vec(),
                            rho_full,
                        });
                    }
                }
                Err(e) => result = Err(Error::Model(format!("oracle query failed: {e}"))),
            }
        });
        result?;
    }
    Ok(FaithfulnessReport {
        holds: violations.is_empty(),
        violations,
    })
}

/// Exhaustively verify that beta_j != 0 iff rho(Y,j|S) != 0 for every
/// conditioning set S not containing j.
pub fn verify_corollary1(model: &ModelSpec, zero_tol: f64) -> Result<bool> {
    let p = model.p();
    check_cap(p)?;
    let joint = joint_covariance(model)?;
    for j in 1..=p {
        let beta_nonzero = model.beta[j - 1] != 0.0;
        let others: Vec<usize> = (1..=p).filter(|&k| k != j).collect();
        let mut all_nonzero = true;
        let mut result = Ok(());
        for_each_subset_all(&others, |s| {
            if result.is_err() || !all_nonzero {
                return;
            }
            match partial_correlation(&joint, 0, j, s) {
                Ok(rho) => {
                    if rho.abs() <= zero_tol {
                        all_nonzero = false;
                    }
                }
                Err(e) => result = Err(Error::Model(format!("oracle query failed: {e}"))),
            }
        });
        result?;
        if beta_nonzero != all_nonzero {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Cap for the random verification suite; the oracle exists for desk-scale
/// checks only.
pub const MAX_SUITE_P: usize = 6;

/// Seeded model for the random verification suite: Toeplitz or
/// equi-correlated design, peff in {1,2,3}, nonzero coefficients N(0,1) at
/// evenly spaced positions.
pub fn random_suite_model(seed: u64, index: usize, p: usize) -> Result<ModelSpec> {
    use crate::sim::{build_sigma, draw_coefficients, replicate_rng, SigmaKind};
    use nalgebra::DVector;

    if p > MAX_SUITE_P {
        return Err(Error::Capability(format!(
            "random suite is capped at p <= {MAX_SUITE_P}, got p = {p}"
        )));
    }
    if p < 1 {
        return Err(Error::Domain("p must be >= 1".into()));
    }
    let mut rng = replicate_rng(seed, index as u64);
    let kind = if index % 2 == 0 {
        SigmaKind::Toeplitz
    } else {
        SigmaKind::Equicorr
    };
    let rho = [0.0, 0.3, 0.6][index % 3];
    let peff = 1 + index % 3;
    let peff = peff.min(p);
    let sigma = build_sigma(kind, p, rho)?;
    let beta = draw_coefficients(p, peff, &mut rng)?;
    ModelSpec::new(DVector::zeros(p), sigma, beta, 0.0, 1.0)
}

/// Cross-check the selection algorithm against the oracle on one model:
/// the population output must equal the support exactly.
pub fn population_recovers_support(model: &ModelSpec, zero_tol: f64) -> Result<bool> {
    let result = pc_simple_population(model, zero_tol, None)?;
    Ok(result.selected.members() == model.support().as_slice())
}
