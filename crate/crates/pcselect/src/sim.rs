//! Gaussian linear-model construction and sampling: the standard simulation
//! designs (Toeplitz / equi-correlated), evenly spaced sparse coefficients,
//! seeded multivariate-normal draws, and the worked small-model fixtures.

use nalgebra::{DMatrix, DVector};
use rand_core::{RngCore, SeedableRng};
use rand_xoshiro::Xoshiro256PlusPlus;

use crate::error::{Error, Result};
use crate::stats::standard_normal_quantile;

/// Population model Y = delta + X beta + eps with X ~ N(mu_x, sigma_x) and
/// eps ~ N(0, sigma2).
#[derive(Debug, Clone)]
pub struct ModelSpec {
    pub mu_x: DVector<f64>,
    pub sigma_x: DMatrix<f64>,
    pub beta: DVector<f64>,
    pub delta: f64,
    pub sigma2: f64,
}

impl ModelSpec {
    pub fn new(
        mu_x: DVector<f64>,
        sigma_x: DMatrix<f64>,
        beta: DVector<f64>,
        delta: f64,
        sigma2: f64,
    ) -> Result<Self> {
        let p = beta.len();
        if mu_x.len() != p || sigma_x.nrows() != p || sigma_x.ncols() != p {
            return Err(Error::Model(format!(
                "dimension mismatch: beta has {p} entries, mu_x {}, sigma_x {}x{}",
                mu_x.len(),
                sigma_x.nrows(),
                sigma_x.ncols()
            )));
        }
        if p == 0 {
            return Err(Error::Model("model must have at least one covariate".into()));
        }
        if !(sigma2 > 0.0) {
            return Err(Error::Model(format!("sigma2 must be > 0, got {sigma2}")));
        }
        for i in 0..p {
            for j in 0..i {
                if (sigma_x[(i, j)] - sigma_x[(j, i)]).abs() > 1e-10 {
                    return Err(Error::Model(format!("sigma_x not symmetric at ({i},{j})")));
                }
            }
        }
        if sigma_x.clone().cholesky().is_none() {
            return Err(Error::Model("sigma_x is not positive definite".into()));
        }
        Ok(Self {
            mu_x,
            sigma_x,
            beta,
            delta,
            sigma2,
        })
    }

    pub fn p(&self) -> usize {
        self.beta.len()
    }

    /// 1-based indices of the nonzero coefficients.
    pub fn support(&self) -> Vec<usize> {
        (0..self.p()).filter(|&j| self.beta[j] != 0.0).map(|j| j + 1).collect()
    }
}

/// Raw n x p covariate matrix plus response.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SigmaKind {
    Toeplitz,
    Equicorr,
    Identity,
}

impl SigmaKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            SigmaKind::Toeplitz => "toeplitz",
            SigmaKind::Equicorr => "equicorr",
            SigmaKind::Identity => "identity",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "toeplitz" => Ok(SigmaKind::Toeplitz),
            "equicorr" => Ok(SigmaKind::Equicorr),
            "identity" => Ok(SigmaKind::Identity),
            other => Err(Error::Domain(format!("unknown design kind '{other}'"))),
        }
    }
}

/// Covariance matrix for the named design: Toeplitz rho^|i-j|, constant
/// off-diagonal rho, or the identity. Unit diagonal in all cases.
pub fn build_sigma(kind: SigmaKind, p: usize, rho: f64) -> Result<DMatrix<f64>> {
    if p == 0 {
        return Err(Error::Domain("p must be >= 1".into()));
    }
    match kind {
        SigmaKind::Identity => Ok(DMatrix::identity(p, p)),
        SigmaKind::Toeplitz => {
            if rho.abs() >= 1.0 {
                return Err(Error::Domain(format!(
                    "toeplitz design requires |rho| < 1, got {rho}"
                )));
            }
            Ok(DMatrix::from_fn(p, p, |i, j| {
                rho.powi((i as i32 - j as i32).abs())
            }))
        }
        SigmaKind::Equicorr => {
            let lower = if p > 1 { -1.0 / (p as f64 - 1.0) } else { -1.0 };
            if !(rho > lower && rho < 1.0) {
                return Err(Error::Domain(format!(
                    "equicorrelated design requires rho in ({lower}, 1), got {rho}"
                )));
            }
            Ok(DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { rho }))
        }
    }
}

/// 1-based indices of the nonzero coefficients: evenly spaced between 1 and p.
///
/// index_k = round(1 + (k-1)(p-1)/(peff-1)) with round-half-up; a single
/// coefficient goes to ceil(p/2).
pub fn support_indices(p: usize, peff: usize) -> Result<Vec<usize>> {
    if peff < 1 || peff > p {
        return Err(Error::Domain(format!(
            "peff must satisfy 1 <= peff <= p, got peff={peff}, p={p}"
        )));
    }
    if peff == 1 {
        return Ok(vec![(p + 1) / 2]);
    }
    Ok((1..=peff)
        .map(|k| {
            let x = 1.0 + (k as f64 - 1.0) * (p as f64 - 1.0) / (peff as f64 - 1.0);
            (x + 0.5).floor() as usize
        })
        .collect())
}

/// Coefficient vector with exactly `peff` nonzero N(0,1) entries at the
/// evenly spaced support; all other entries are exactly zero.
pub fn draw_coefficients(
    p: usize,
    peff: usize,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<DVector<f64>> {
    let support = support_indices(p, peff)?;
    let mut beta = DVector::zeros(p);
    for idx in support {
        beta[idx - 1] = standard_normal(rng);
    }
    Ok(beta)
}

/// One N(0,1) draw by inverse-CDF from the 64-bit stream.
///
/// The uniform is ((u >> 11) + 0.5) * 2^-53, strictly inside (0,1), so the
/// quantile is always defined and the stream consumes exactly one u64 per
/// normal draw.
pub fn standard_normal(rng: &mut Xoshiro256PlusPlus) -> f64 {
    let u = ((rng.next_u64() >> 11) as f64 + 0.5) * (1.0 / (1u64 << 53) as f64);
    standard_normal_quantile(u).expect("uniform draw is inside (0,1)")
}

/// Generator for the main seed.
pub fn seeded_rng(seed: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(seed)
}

/// Independent generator for replicate `r`, mixed as
/// seed_r = seed + (r+1) * 0x9E3779B97F4A7C15 (wrapping) before the usual
/// SplitMix64 seeding. Replicates can then run in parallel with streams that
/// do not depend on scheduling.
pub fn replicate_rng(seed: u64, r: u64) -> Xoshiro256PlusPlus {
    Xoshiro256PlusPlus::seed_from_u64(
        seed.wrapping_add(r.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
    )
}

/// Draw an n-row sample from the model.
///
/// Per row: p standard normals (inverse-CDF) pushed through the lower
/// Cholesky factor of sigma_x, then one residual draw. Row-major draw order
/// is part of the determinism contract.
pub fn simulate_dataset(
    model: &ModelSpec,
    n: usize,
    rng: &mut Xoshiro256PlusPlus,
) -> Result<Dataset> {
    if n < 1 {
        return Err(Error::Domain("n must be >= 1".into()));
    }
    let p = model.p();
    let chol = model
        .sigma_x
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Model("sigma_x is not positive definite".into()))?;
    let l = chol.l();
    let sd_eps = model.sigma2.sqrt();
    let mut x = DMatrix::zeros(n, p);
    let mut y = DVector::zeros(n);
    let mut z = DVector::zeros(p);
    for i in 0..n {
        for k in 0..p {
            z[k] = standard_normal(rng);
        }
        let row = &model.mu_x + &l * &z;
        let eps = sd_eps * standard_normal(rng);
        let mut dot = 0.0;
        for j in 0..p {
            x[(i, j)] = row[j];
            dot += row[j] * model.beta[j];
        }
        y[i] = model.delta + dot + eps;
    }
    let names = (1..=p).map(|j| format!("x{j}")).collect();
    Ok(Dataset { x, y, names })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FixtureId {
    Example1,
    Example2,
    Example3,
    Example4,
}

impl FixtureId {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "example1" => Ok(FixtureId::Example1),
            "example2" => Ok(FixtureId::Example2),
            "example3" => Ok(FixtureId::Example3),
            "example4" => Ok(FixtureId::Example4),
            other => Err(Error::Domain(format!("unknown fixture '{other}'"))),
        }
    }
}

/// The worked small models, with covariances computed symbolically from the
/// defining structural equations.
///
/// `example4` has three free N(0,1) coefficients which are drawn from `rng`;
/// the other fixtures are fully determined and leave the stream untouched.
pub fn fixture(id: FixtureId, rng: &mut Xoshiro256PlusPlus) -> ModelSpec {
    match id {
        // X1 = e1, X2 = X1 + e2, Y = X1 - X2 + e.
        FixtureId::Example1 => ModelSpec::new(
            DVector::zeros(2),
            DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 2.0]),
            DVector::from_column_slice(&[1.0, -1.0]),
            0.0,
            1.0,
        )
        .expect("fixture is valid"),
        // X1 = e1, X2 = X1 + e2, X3 = X1 + e3, X4 = X2 - X3 + e4, Y = X2 + e.
        FixtureId::Example2 => ModelSpec::new(
            DVector::zeros(4),
            DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, 1.0, 1.0, 0.0, //
                    1.0, 2.0, 1.0, 1.0, //
                    1.0, 1.0, 2.0, -1.0, //
                    0.0, 1.0, -1.0, 3.0,
                ],
            ),
            DVector::from_column_slice(&[0.0, 1.0, 0.0, 0.0]),
            0.0,
            1.0,
        )
        .expect("fixture is valid"),
        // X1 = e1, X2 = X1 + e2, X3 = X1 + e3, Y = X2 - X3 + e.
        FixtureId::Example3 => ModelSpec::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 1.0, 1.0, 2.0, 1.0, 1.0, 1.0, 2.0]),
            DVector::from_column_slice(&[0.0, 1.0, -1.0]),
            0.0,
            1.0,
        )
        .expect("fixture is valid"),
        // Equi-block design with rho1 = -0.4 among the three active
        // covariates and rho2 = 0.2 toward the inactive fourth.
        FixtureId::Example4 => {
            let (r1, r2) = (-0.4, 0.2);
            let sigma = DMatrix::from_row_slice(
                4,
                4,
                &[
                    1.0, r1, r1, r2, //
                    r1, 1.0, r1, r2, //
                    r1, r1, 1.0, r2, //
                    r2, r2, r2, 1.0,
                ],
            );
            let beta = DVector::from_column_slice(&[
                standard_normal(rng),
                standard_normal(rng),
                standard_normal(rng),
                0.0,
            ]);
            ModelSpec::new(DVector::zeros(4), sigma, beta, 0.0, 1.0).expect("fixture is valid")
        }
    }
}
