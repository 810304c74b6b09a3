//! Selection-quality metrics, least-squares refit on a selected support, and
//! ROC sweeps over the significance level across simulation replicates.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::pc::{pc_simple_select_opts, ActiveSet};
use crate::sim::{
    build_sigma, draw_coefficients, replicate_rng, simulate_dataset, ModelSpec, SigmaKind,
};
use crate::stats::correlation_matrix;

/// True/false positive rates; `None` marks an undefined denominator
/// (empty truth for tpr, full truth for fpr).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Confusion {
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

/// The four performance measures. The MSE pair is absent when no data was
/// available for a coefficient refit; the rates are absent when their
/// denominators vanish.
#[derive(Debug, Clone, Serialize)]
pub struct Metrics {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_coeff: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse_pred: Option<f64>,
    pub tpr: Option<f64>,
    pub fpr: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RocRow {
    pub alpha: f64,
    pub mean_tpr: f64,
    pub mean_fpr: f64,
    pub sd_tpr: f64,
    pub sd_fpr: f64,
    pub replicates: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RocTable {
    pub rows: Vec<RocRow>,
}

/// Simulation design for a ROC sweep.
#[derive(Debug, Clone)]
pub struct SimConfig {
    pub p: usize,
    pub peff: usize,
    pub n: usize,
    pub kind: SigmaKind,
    pub rho: f64,
    pub sigma2: f64,
    pub delta: f64,
    pub max_order: Option<usize>,
}

/// tpr = |selected ∩ truth| / |truth|, fpr = |selected \ truth| / (p - |truth|).
pub fn confusion(selected: &ActiveSet, truth: &ActiveSet, p: usize) -> Result<Confusion> {
    for set in [selected, truth] {
        if set.members().iter().any(|&j| j < 1 || j > p) {
            return Err(Error::Domain("index outside 1..=p".into()));
        }
    }
    let tp = selected.members().iter().filter(|j| truth.contains(**j)).count();
    let fp = selected.len() - tp;
    let tpr = if truth.is_empty() {
        None
    } else {
        Some(tp as f64 / truth.len() as f64)
    };
    let fpr = if truth.len() == p {
        None
    } else {
        Some(fp as f64 / (p - truth.len()) as f64)
    };
    Ok(Confusion { tpr, fpr })
}

/// Coefficient and prediction mean-squared errors against the population
/// model: ||bhat - beta||^2 and (bhat - beta)' Sigma_X (bhat - beta),
/// computed exactly from the model covariance.
pub fn mse_measures(beta_hat: &DVector<f64>, model: &ModelSpec) -> Result<(f64, f64)> {
    if beta_hat.len() != model.p() {
        return Err(Error::Domain(format!(
            "beta_hat has {} entries, model has p = {}",
            beta_hat.len(),
            model.p()
        )));
    }
    let diff = beta_hat - &model.beta;
    let mse_coeff = diff.norm_squared();
    let mse_pred = (diff.transpose() * &model.sigma_x * &diff)[(0, 0)];
    Ok((mse_coeff, mse_pred))
}

/// Ordinary least squares on the selected columns (with intercept); entries
/// outside the selection are exactly zero.
pub fn ols_refit(data: &crate::sim::Dataset, selected: &ActiveSet) -> Result<DVector<f64>> {
    let n = data.x.nrows();
    let p = data.x.ncols();
    let k = selected.len();
    if selected.members().iter().any(|&j| j < 1 || j > p) {
        return Err(Error::Domain("selected index outside 1..=p".into()));
    }
    let mut beta = DVector::zeros(p);
    if k == 0 {
        return Ok(beta);
    }
    if k + 1 > n {
        return Err(Error::Refit(format!(
            "cannot fit {k} coefficients plus intercept with n = {n}"
        )));
    }
    // Design with intercept column first.
    let mut design = DMatrix::zeros(n, k + 1);
    for i in 0..n {
        design[(i, 0)] = 1.0;
    }
    for (c, &j) in selected.members().iter().enumerate() {
        for i in 0..n {
            design[(i, c + 1)] = data.x[(i, j - 1)];
        }
    }
    let svd = design.clone().svd(true, true);
    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let rank_tol = 1e-10 * smax.max(1.0);
    if svd.singular_values.iter().any(|&s| s <= rank_tol) {
        let names: Vec<String> = selected
            .members()
            .iter()
            .map(|&j| data.names.get(j - 1).cloned().unwrap_or_else(|| format!("x{j}")))
            .collect();
        return Err(Error::Refit(format!(
            "rank-deficient design on columns [{}]",
            names.join(", ")
        )));
    }
    let coef = svd
        .solve(&data.y, rank_tol)
        .map_err(|e| Error::Refit(format!("least-squares solve failed: {e}")))?;
    for (c, &j) in selected.members().iter().enumerate() {
        beta[j - 1] = coef[c + 1];
    }
    Ok(beta)
}

/// Sweep the alpha grid over seeded replicates: per replicate draw
/// coefficients and data, select at every alpha, and aggregate the confusion
/// rates. Replicates run in parallel; aggregation is by replicate index, so
/// the table does not depend on scheduling.
pub fn roc_sweep(
    cfg: &SimConfig,
    alphas: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<RocTable> {
    if replicates < 1 {
        return Err(Error::Domain("replicates must be >= 1".into()));
    }
    if alphas.is_empty() {
        return Err(Error::Domain("alpha grid must be nonempty".into()));
    }
    let mut sorted = alphas.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite alphas"));
    if sorted.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Domain("alphas must be strictly increasing".into()));
    }
    for &a in &sorted {
        if !(a > 0.0 && a < 1.0) {
            return Err(Error::Domain(format!("alpha must be in (0,1), got {a}")));
        }
    }
    let sigma = build_sigma(cfg.kind, cfg.p, cfg.rho)?;
    let per_rep: Vec<Vec<Confusion>> = (0..replicates)
        .into_par_iter()
        .map(|r| -> Result<Vec<Confusion>> {
            let mut rng = replicate_rng(seed, r as u64);
            let beta = draw_coefficients(cfg.p, cfg.peff, &mut rng)?;
            let model = ModelSpec::new(
                DVector::zeros(cfg.p),
                sigma.clone(),
                beta,
                cfg.delta,
                cfg.sigma2,
            )?;
            let truth = ActiveSet::new(model.support());
            let data = simulate_dataset(&model, cfg.n, &mut rng)?;
            let stats = correlation_matrix(&data)?;
            sorted
                .iter()
                .map(|&alpha| {
                    let result = pc_simple_select_opts(&stats, alpha, cfg.max_order, false)?;
                    confusion(&result.selected, &truth, cfg.p)
                })
                .collect()
        })
        .collect::<Result<_>>()?;
    let rows = sorted
        .iter()
        .enumerate()
        .map(|(ai, &alpha)| {
            let tprs: Vec<f64> = per_rep.iter().filter_map(|r| r[ai].tpr).collect();
            let fprs: Vec<f64> = per_rep.iter().filter_map(|r| r[ai].fpr).collect();
            let (mean_tpr, sd_tpr) = mean_sd(&tprs);
            let (mean_fpr, sd_fpr) = mean_sd(&fprs);
            RocRow {
                alpha,
                mean_tpr,
                mean_fpr,
                sd_tpr,
                sd_fpr,
                replicates,
            }
        })
        .collect();
    Ok(RocTable { rows })
}

fn mean_sd(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{seeded_rng, Dataset};
    use approx::assert_abs_diff_eq;

    #[test]
    fn confusion_examples() {
        let c = confusion(&ActiveSet::new(vec![2]), &ActiveSet::new(vec![2]), 4).unwrap();
        assert_eq!(c.tpr, Some(1.0));
        assert_eq!(c.fpr, Some(0.0));

        let c = confusion(&ActiveSet::new(vec![1, 2]), &ActiveSet::new(vec![2]), 3).unwrap();
        assert_eq!(c.tpr, Some(1.0));
        assert_eq!(c.fpr, Some(0.5));

        let c = confusion(&ActiveSet::new(vec![]), &ActiveSet::new(vec![1]), 3).unwrap();
        assert_eq!(c.tpr, Some(0.0));
        assert_eq!(c.fpr, Some(0.0));
    }

    #[test]
    fn confusion_undefined_denominators() {
        let c = confusion(&ActiveSet::new(vec![1]), &ActiveSet::new(vec![]), 3).unwrap();
        assert_eq!(c.tpr, None);
        assert_eq!(c.fpr, Some(1.0 / 3.0));

        let c = confusion(&ActiveSet::new(vec![1]), &ActiveSet::new(vec![1, 2, 3]), 3).unwrap();
        assert_eq!(c.fpr, None);
        assert_abs_diff_eq!(c.tpr.unwrap(), 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn confusion_monotone_in_selection() {
        let truth = ActiveSet::new(vec![2, 5]);
        let small = confusion(&ActiveSet::new(vec![2]), &truth, 6).unwrap();
        let large = confusion(&ActiveSet::new(vec![1, 2, 5]), &truth, 6).unwrap();
        assert!(large.tpr.unwrap() >= small.tpr.unwrap());
        assert!(large.fpr.unwrap() >= small.fpr.unwrap());
    }

    #[test]
    fn mse_examples() {
        let model = ModelSpec::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[1.0, -2.0]),
            0.0,
            1.0,
        )
        .unwrap();
        let (c, p) = mse_measures(&model.beta.clone(), &model).unwrap();
        assert_eq!((c, p), (0.0, 0.0));

        let bhat = DVector::from_column_slice(&[2.0, -2.0]); // diff = e1
        let (c, p) = mse_measures(&bhat, &model).unwrap();
        assert_eq!((c, p), (1.0, 1.0));

        // Toeplitz rho = 0.5, p = 2: diagonal entry still 1.
        let model2 = ModelSpec::new(
            DVector::zeros(2),
            build_sigma(SigmaKind::Toeplitz, 2, 0.5).unwrap(),
            DVector::from_column_slice(&[1.0, -2.0]),
            0.0,
            1.0,
        )
        .unwrap();
        let (c, p) = mse_measures(&bhat, &model2).unwrap();
        assert_eq!((c, p), (1.0, 1.0));

        assert!(mse_measures(&DVector::zeros(3), &model).is_err());
    }

    #[test]
    fn mse_eigenvalue_bounds() {
        let mut rng = seeded_rng(77);
        for trial in 0..100 {
            let p = 2 + (trial % 4);
            let sigma = build_sigma(SigmaKind::Toeplitz, p, 0.6).unwrap();
            let model = ModelSpec::new(
                DVector::zeros(p),
                sigma.clone(),
                DVector::zeros(p),
                0.0,
                1.0,
            )
            .unwrap();
            let bhat = DVector::from_fn(p, |_, _| crate::sim::standard_normal(&mut rng));
            let (c, pr) = mse_measures(&bhat, &model).unwrap();
            let eig = sigma.symmetric_eigenvalues();
            let lo = eig.iter().cloned().fold(f64::INFINITY, f64::min);
            let hi = eig.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            assert!(pr >= lo * c - 1e-10 && pr <= hi * c + 1e-10);
        }
    }

    #[test]
    fn ols_empty_selection_is_zero() {
        let data = Dataset {
            x: DMatrix::identity(4, 2),
            y: DVector::from_column_slice(&[1.0, 2.0, 3.0, 4.0]),
            names: vec!["x1".into(), "x2".into()],
        };
        let beta = ols_refit(&data, &ActiveSet::new(vec![])).unwrap();
        assert_eq!(beta, DVector::zeros(2));
    }

    #[test]
    fn ols_noiseless_line() {
        let x = DMatrix::from_column_slice(5, 1, &[1.0, 2.0, 3.0, 4.0, 5.0]);
        let y = DVector::from_column_slice(&[2.0, 4.0, 6.0, 8.0, 10.0]);
        let data = Dataset {
            x,
            y,
            names: vec!["x1".into()],
        };
        let beta = ols_refit(&data, &ActiveSet::new(vec![1])).unwrap();
        assert_abs_diff_eq!(beta[0], 2.0, epsilon = 1e-10);
    }

    #[test]
    fn ols_rank_deficiency_names_columns() {
        // x2 duplicates x1.
        let x = DMatrix::from_fn(6, 2, |i, _| i as f64);
        let y = DVector::from_fn(6, |i, _| i as f64);
        let data = Dataset {
            x,
            y,
            names: vec!["x1".into(), "x2".into()],
        };
        let err = ols_refit(&data, &ActiveSet::new(vec![1, 2])).unwrap_err();
        assert!(err.to_string().contains("x1"), "got: {err}");
    }

    #[test]
    fn ols_consistency_large_n() {
        let model = ModelSpec::new(
            DVector::zeros(3),
            build_sigma(SigmaKind::Toeplitz, 3, 0.3).unwrap(),
            DVector::from_column_slice(&[1.5, 0.0, -0.7]),
            0.5,
            1.0,
        )
        .unwrap();
        let data = simulate_dataset(&model, 20_000, &mut seeded_rng(4)).unwrap();
        let beta = ols_refit(&data, &ActiveSet::new(vec![1, 2, 3])).unwrap();
        for j in 0..3 {
            assert!(
                (beta[j] - model.beta[j]).abs() <= 0.05,
                "coefficient {j}: {} vs {}",
                beta[j],
                model.beta[j]
            );
        }
    }

    #[test]
    fn roc_single_replicate_matches_manual_pipeline() {
        let cfg = SimConfig {
            p: 5,
            peff: 2,
            n: 200,
            kind: SigmaKind::Toeplitz,
            rho: 0.3,
            sigma2: 1.0,
            delta: 0.0,
            max_order: None,
        };
        let table = roc_sweep(&cfg, &[0.05], 1, 99).unwrap();
        assert_eq!(table.rows.len(), 1);

        let mut rng = replicate_rng(99, 0);
        let beta = draw_coefficients(5, 2, &mut rng).unwrap();
        let model = ModelSpec::new(
            DVector::zeros(5),
            build_sigma(SigmaKind::Toeplitz, 5, 0.3).unwrap(),
            beta,
            0.0,
            1.0,
        )
        .unwrap();
        let truth = ActiveSet::new(model.support());
        let data = simulate_dataset(&model, 200, &mut rng).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select_opts(&stats, 0.05, None, false).unwrap();
        let c = confusion(&result.selected, &truth, 5).unwrap();
        assert_eq!(table.rows[0].mean_tpr, c.tpr.unwrap());
        assert_eq!(table.rows[0].mean_fpr, c.fpr.unwrap());
        assert_eq!(table.rows[0].sd_tpr, 0.0);
    }

    #[test]
    fn roc_strong_signal_full_power() {
        let cfg = SimConfig {
            p: 5,
            peff: 2,
            n: 500,
            kind: SigmaKind::Identity,
            rho: 0.0,
            sigma2: 1e-6,
            delta: 0.0,
            max_order: None,
        };
        let table = roc_sweep(&cfg, &[0.05], 10, 1).unwrap();
        assert_eq!(table.rows[0].mean_tpr, 1.0);
    }

    #[test]
    fn roc_deterministic_across_runs() {
        let cfg = SimConfig {
            p: 8,
            peff: 2,
            n: 150,
            kind: SigmaKind::Toeplitz,
            rho: 0.5,
            sigma2: 1.0,
            delta: 0.0,
            max_order: None,
        };
        let a = roc_sweep(&cfg, &[0.01, 0.05, 0.15], 8, 3).unwrap();
        let b = roc_sweep(&cfg, &[0.01, 0.05, 0.15], 8, 3).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
    }

    #[test]
    fn roc_rejects_bad_grids() {
        let cfg = SimConfig {
            p: 4,
            peff: 1,
            n: 50,
            kind: SigmaKind::Identity,
            rho: 0.0,
            sigma2: 1.0,
            delta: 0.0,
            max_order: None,
        };
        assert!(roc_sweep(&cfg, &[], 3, 1).is_err());
        assert!(roc_sweep(&cfg, &[0.05, 0.05], 3, 1).is_err());
        assert!(roc_sweep(&cfg, &[0.05], 0, 1).is_err());
    }
}
