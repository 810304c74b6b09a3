//! The PC-simple selection algorithm: iterated partial-correlation screening
//! with conditioning sets drawn from the surviving active set, in a sample
//! version (Fisher-Z tests) and a population version (exact zeros).

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim::ModelSpec;
use crate::stats::{
    partial_correlation, test_zero_partial_correlation, SufficientStats,
};

/// Default tolerance for calling a population partial correlation zero.
pub const DEFAULT_ZERO_TOL: f64 = 1e-10;

/// Sorted set of 1-based covariate indices.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(transparent)]
pub struct ActiveSet(Vec<usize>);

impl ActiveSet {
    pub fn new(mut members: Vec<usize>) -> Self {
        members.sort_unstable();
        members.dedup();
        ActiveSet(members)
    }

    pub fn members(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, j: usize) -> bool {
        self.0.binary_search(&j).is_ok()
    }

    pub fn is_subset_of(&self, other: &ActiveSet) -> bool {
        self.0.iter().all(|j| other.contains(*j))
    }
}

/// Why a variable was kept or dropped by one test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Decision {
    Removed,
    Retained,
    NonTestableRetained,
    NonInformativeRetained,
}

/// One recorded test of the algorithm.
#[derive(Debug, Clone, Serialize)]
pub struct TraceEntry {
    /// Stage m; the conditioning set has |S| = m - 1.
    pub stage: usize,
    pub j: usize,
    pub s: Vec<usize>,
    pub rho_hat: Option<f64>,
    pub statistic: Option<f64>,
    pub decision: Decision,
}

#[derive(Debug, Clone, Serialize)]
pub struct SelectionResult {
    pub selected: ActiveSet,
    pub m_reach: usize,
    /// A^[1], A^[2], ..., A^[m_reach]; a decreasing chain.
    pub stages: Vec<ActiveSet>,
    pub trace: Vec<TraceEntry>,
    /// Significance level (sample version only).
    pub alpha: Option<f64>,
    /// Sample size (sample version only).
    pub n: Option<usize>,
    pub p: usize,
}

enum Judgment {
    Nonzero { rho: f64, statistic: Option<f64> },
    Zero { rho: f64, statistic: Option<f64> },
    NonTestable { rho: Option<f64> },
    NonInformative,
}

/// Visit k-subsets of `items` in lexicographic order; the visitor returns
/// false to stop early.
fn for_each_subset<F: FnMut(&[usize]) -> bool>(items: &[usize], k: usize, mut f: F) {
    if k > items.len() {
        return;
    }
    if k == 0 {
        f(&[]);
        return;
    }
    let mut pos: Vec<usize> = (0..k).collect();
    let mut subset = vec![0usize; k];
    loop {
        for (slot, &i) in subset.iter_mut().zip(pos.iter()) {
            *slot = items[i];
        }
        if !f(&subset) {
            return;
        }
        // Advance the rightmost position that can still move.
        let mut i = k;
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            if pos[i] < items.len() - (k - i) {
                pos[i] += 1;
                for t in i + 1..k {
                    pos[t] = pos[t - 1] + 1;
                }
                break;
            }
        }
    }
}

fn run_engine<F, T>(
    p: usize,
    judge: F,
    order_testable: T,
    max_order: Option<usize>,
    record_trace: bool,
) -> (Vec<ActiveSet>, Vec<TraceEntry>, usize)
where
    F: Fn(usize, &[usize]) -> Judgment + Sync,
    T: Fn(usize) -> bool,
{
    let all: Vec<usize> = (1..=p).collect();
    let mut stages: Vec<ActiveSet> = Vec::new();
    let mut trace: Vec<TraceEntry> = Vec::new();
    let mut m = 0usize;
    loop {
        m += 1;
        let prev: Vec<usize> = if m == 1 {
            all.clone()
        } else {
            stages[m - 2].members().to_vec()
        };
        let order = m - 1;
        let stage_m;
        if !order_testable(order) {
            // Every test at this order fails the degrees-of-freedom guard;
            // the whole stage retains conservatively.
            if record_trace {
                for &j in &prev {
                    let candidates: Vec<usize> =
                        prev.iter().copied().filter(|&k| k != j).collect();
                    let s: Vec<usize> = candidates.iter().copied().take(order).collect();
                    trace.push(TraceEntry {
                        stage: m,
                        j,
                        s,
                        rho_hat: None,
                        statistic: None,
                        decision: Decision::NonTestableRetained,
                    });
                }
            }
            stage_m = ActiveSet::new(prev.clone());
        } else {
            // A^[m-1] is frozen for the whole stage; tests across j are
            // independent and aggregated in index order.
            let results: Vec<(usize, bool, Vec<TraceEntry>)> = prev
                .par_iter()
                .map(|&j| {
                    let candidates: Vec<usize> =
                        prev.iter().copied().filter(|&k| k != j).collect();
                    let mut kept = true;
                    let mut entries = Vec::new();
                    for_each_subset(&candidates, order, |s| {
                        let (decision, rho_hat, statistic, keep_going) =
                            match judge(j, s) {
                                Judgment::Zero { rho, statistic } => {
                                    kept = false;
                                    (Decision::Removed, Some(rho), statistic, false)
                                }
                                Judgment::Nonzero { rho, statistic } => {
                                    (Decision::Retained, Some(rho), statistic, true)
                                }
                                Judgment::NonTestable { rho } => {
                                    (Decision::NonTestableRetained, rho, None, true)
                                }
                                Judgment::NonInformative => {
                                    (Decision::NonInformativeRetained, None, None, true)
                                }
                            };
                        if record_trace {
                            entries.push(TraceEntry {
                                stage: m,
                                j,
                                s: s.to_vec(),
                                rho_hat,
                                statistic,
                                decision,
                            });
                        }
                        keep_going
                    });
                    (j, kept, entries)
                })
                .collect();
            let mut members = Vec::new();
            for (j, kept, entries) in results {
                trace.extend(entries);
                if kept {
                    members.push(j);
                }
            }
            stage_m = ActiveSet::new(members);
        }
        stages.push(stage_m);
        if stages[m - 1].len() <= m {
            break;
        }
        if max_order == Some(m) {
            break;
        }
    }
    (stages, trace, m)
}

/// Stage-1 marginal correlation screening (sure independence screening).
pub fn correlation_screening(stats: &SufficientStats, alpha: f64) -> Result<ActiveSet> {
    let result = pc_simple_select_opts(stats, alpha, Some(1), false)?;
    Ok(result.stages[0].clone())
}

/// Sample PC-simple selection at significance level `alpha`.
///
/// Optionally capped at `max_order` stages; `max_order = 1` is exactly
/// correlation screening.
pub fn pc_simple_select(
    stats: &SufficientStats,
    alpha: f64,
    max_order: Option<usize>,
) -> Result<SelectionResult> {
    pc_simple_select_opts(stats, alpha, max_order, true)
}

/// As [`pc_simple_select`], with the trace recording switchable.
pub fn pc_simple_select_opts(
    stats: &SufficientStats,
    alpha: f64,
    max_order: Option<usize>,
    record_trace: bool,
) -> Result<SelectionResult> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Domain(format!("alpha must be in (0,1), got {alpha}")));
    }
    if max_order == Some(0) {
        return Err(Error::Domain("max_order must be >= 1".into()));
    }
    let n = stats.n;
    let r = &stats.r;
    let judge = |j: usize, s: &[usize]| -> Judgment {
        match partial_correlation(r, 0, j, s) {
            Err(_) => Judgment::NonInformative,
            Ok(rho) => {
                let d = test_zero_partial_correlation(rho, n, s.len(), alpha)
                    .expect("alpha validated");
                if !d.testable {
                    Judgment::NonTestable { rho: Some(rho) }
                } else if d.reject {
                    Judgment::Nonzero {
                        rho,
                        statistic: Some(d.statistic),
                    }
                } else {
                    Judgment::Zero {
                        rho,
                        statistic: Some(d.statistic),
                    }
                }
            }
        }
    };
    let order_testable = |order: usize| n as i64 - order as i64 - 3 >= 1;
    let (stages, trace, m_reach) =
        run_engine(stats.p(), judge, order_testable, max_order, record_trace);
    Ok(SelectionResult {
        selected: stages[m_reach - 1].clone(),
        m_reach,
        stages,
        trace,
        alpha: Some(alpha),
        n: Some(n),
        p: stats.p(),
    })
}

/// Covariance matrix of (Y, X) implied by the model, response at index 0:
/// cov(Y, X) = Sigma_X beta, var(Y) = beta' Sigma_X beta + sigma2.
pub fn joint_covariance(model: &ModelSpec) -> Result<DMatrix<f64>> {
    let p = model.p();
    if model.beta.len() != model.sigma_x.nrows() {
        return Err(Error::Model("beta/sigma_x dimension mismatch".into()));
    }
    let cov_yx = &model.sigma_x * &model.beta;
    let var_y = (model.beta.transpose() * &cov_yx)[(0, 0)] + model.sigma2;
    let mut joint = DMatrix::zeros(p + 1, p + 1);
    joint[(0, 0)] = var_y;
    for j in 0..p {
        joint[(0, j + 1)] = cov_yx[j];
        joint[(j + 1, 0)] = cov_yx[j];
        for k in 0..p {
            joint[(j + 1, k + 1)] = model.sigma_x[(j, k)];
        }
    }
    Ok(joint)
}

/// Rescale a covariance matrix to a correlation matrix.
pub fn cov_to_corr(cov: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let k = cov.nrows();
    let mut sd = Vec::with_capacity(k);
    for i in 0..k {
        let v = cov[(i, i)];
        if !(v > 0.0) {
            return Err(Error::Model(format!("non-positive variance at index {i}")));
        }
        sd.push(v.sqrt());
    }
    Ok(DMatrix::from_fn(k, k, |i, j| cov[(i, j)] / (sd[i] * sd[j])))
}

/// Population PC-simple: exact partial correlations from the model, with
/// "nonzero" meaning |rho| > `zero_tol`.
pub fn pc_simple_population(
    model: &ModelSpec,
    zero_tol: f64,
    max_order: Option<usize>,
) -> Result<SelectionResult> {
    if !(zero_tol >= 0.0) {
        return Err(Error::Domain("zero_tol must be >= 0".into()));
    }
    if max_order == Some(0) {
        return Err(Error::Domain("max_order must be >= 1".into()));
    }
    let joint = joint_covariance(model)?;
    let corr = cov_to_corr(&joint)?;
    let judge = |j: usize, s: &[usize]| -> Judgment {
        match partial_correlation(&corr, 0, j, s) {
            Err(_) => Judgment::NonInformative,
            Ok(rho) => {
                if rho.abs() > zero_tol {
                    Judgment::Nonzero { rho, statistic: None }
                } else {
                    Judgment::Zero { rho, statistic: None }
                }
            }
        }
    };
    let (stages, trace, m_reach) =
        run_engine(model.p(), judge, |_| true, max_order, true);
    Ok(SelectionResult {
        selected: stages[m_reach - 1].clone(),
        m_reach,
        stages,
        trace,
        alpha: None,
        n: None,
        p: model.p(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{fixture, seeded_rng, simulate_dataset, FixtureId, ModelSpec};
    use crate::stats::correlation_matrix;
    use approx::assert_abs_diff_eq;
    use nalgebra::{DMatrix, DVector};

    fn assert_nested(result: &SelectionResult) {
        for m in 1..result.stages.len() {
            assert!(
                result.stages[m].is_subset_of(&result.stages[m - 1]),
                "stage {} not nested in stage {}",
                m + 1,
                m
            );
        }
    }

    #[test]
    fn subset_visitor_lexicographic() {
        let mut seen = Vec::new();
        for_each_subset(&[1, 3, 5, 7], 2, |s| {
            seen.push(s.to_vec());
            true
        });
        assert_eq!(
            seen,
            vec![
                vec![1, 3],
                vec![1, 5],
                vec![1, 7],
                vec![3, 5],
                vec![3, 7],
                vec![5, 7]
            ]
        );
    }

    #[test]
    fn subset_visitor_edge_cases() {
        let mut count = 0;
        for_each_subset(&[1, 2], 0, |s| {
            assert!(s.is_empty());
            count += 1;
            true
        });
        assert_eq!(count, 1);
        for_each_subset(&[1, 2], 3, |_| panic!("no subsets of size 3"));
    }

    #[test]
    fn joint_covariance_example3() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let joint = joint_covariance(&model).unwrap();
        assert_abs_diff_eq!(joint[(0, 1)], 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(joint[(0, 2)], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(joint[(0, 3)], -1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(joint[(0, 0)], 3.0, epsilon = 1e-15);
    }

    #[test]
    fn joint_covariance_zero_beta() {
        let model = ModelSpec::new(
            DVector::zeros(3),
            DMatrix::identity(3, 3),
            DVector::zeros(3),
            0.0,
            2.5,
        )
        .unwrap();
        let joint = joint_covariance(&model).unwrap();
        assert_eq!(joint[(0, 0)], 2.5);
        for j in 1..4 {
            assert_eq!(joint[(0, j)], 0.0);
        }
    }

    #[test]
    fn joint_covariance_identity_unit_beta() {
        let model = ModelSpec::new(
            DVector::zeros(2),
            DMatrix::identity(2, 2),
            DVector::from_column_slice(&[1.0, 0.0]),
            0.0,
            1.0,
        )
        .unwrap();
        let joint = joint_covariance(&model).unwrap();
        assert_eq!(joint[(0, 1)], 1.0);
        assert_eq!(joint[(0, 2)], 0.0);
        assert_eq!(joint[(0, 0)], 2.0);
    }

    #[test]
    fn population_example2() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let result = pc_simple_population(&model, DEFAULT_ZERO_TOL, None).unwrap();
        assert_eq!(result.selected.members(), &[2]);
        assert_eq!(result.m_reach, 2);
        assert_nested(&result);
    }

    #[test]
    fn population_example3() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let result = pc_simple_population(&model, DEFAULT_ZERO_TOL, None).unwrap();
        assert_eq!(result.selected.members(), &[2, 3]);
        assert_eq!(result.m_reach, 2);
        assert_nested(&result);
    }

    #[test]
    fn population_example1_documents_unfaithful_failure() {
        // cor(Y, X1) = 0 by parameter cancellation, so screening drops the
        // truly active first variable.
        let model = fixture(FixtureId::Example1, &mut seeded_rng(0));
        let result = pc_simple_population(&model, DEFAULT_ZERO_TOL, None).unwrap();
        assert_eq!(result.selected.members(), &[2]);
        assert_eq!(result.m_reach, 1);
        assert_ne!(result.selected.members(), model.support().as_slice());
    }

    #[test]
    fn population_screening_superset_on_faithful_fixtures() {
        for id in [FixtureId::Example2, FixtureId::Example3, FixtureId::Example4] {
            let model = fixture(id, &mut seeded_rng(11));
            let result = pc_simple_population(&model, DEFAULT_ZERO_TOL, Some(1)).unwrap();
            let stage1 = &result.stages[0];
            for j in model.support() {
                assert!(stage1.contains(j), "{id:?}: support member {j} screened out");
            }
        }
    }

    #[test]
    fn sample_example2_large_n() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 10_000, &mut seeded_rng(424242)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        assert_eq!(result.selected.members(), &[2]);
        assert_nested(&result);
    }

    #[test]
    fn single_covariate_strong_correlation() {
        let model = ModelSpec::new(
            DVector::zeros(1),
            DMatrix::identity(1, 1),
            DVector::from_column_slice(&[2.0]),
            0.0,
            0.01,
        )
        .unwrap();
        let data = simulate_dataset(&model, 200, &mut seeded_rng(5)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        assert_eq!(result.selected.members(), &[1]);
        assert_eq!(result.m_reach, 1);
    }

    #[test]
    fn max_order_one_is_correlation_screening() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 500, &mut seeded_rng(17)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let capped = pc_simple_select(&stats, 0.05, Some(1)).unwrap();
        let screened = correlation_screening(&stats, 0.05).unwrap();
        assert_eq!(capped.selected, screened);
        assert_eq!(capped.m_reach, 1);
        assert_eq!(capped.stages.len(), 1);
    }

    #[test]
    fn screening_zero_correlations_empty() {
        let r = DMatrix::identity(4, 4);
        let stats = SufficientStats::new(
            r,
            100,
            vec!["x1".into(), "x2".into(), "x3".into()],
        )
        .unwrap();
        let set = correlation_screening(&stats, 0.05).unwrap();
        assert!(set.is_empty());
        // Empty stage 1 still reports m_reach = 1.
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        assert!(result.selected.is_empty());
        assert_eq!(result.m_reach, 1);
    }

    #[test]
    fn screening_alpha_near_one_keeps_all() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 100, &mut seeded_rng(2)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let set = correlation_screening(&stats, 1.0 - 1e-12).unwrap();
        assert_eq!(set.members(), &[1, 2, 3]);
    }

    #[test]
    fn stopping_rule_holds() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 800, &mut seeded_rng(3)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        // m_reach = min{m : |A^[m]| <= m}: earlier stages must violate it.
        for m in 1..result.m_reach {
            assert!(result.stages[m - 1].len() > m);
        }
        assert!(result.stages[result.m_reach - 1].len() <= result.m_reach);
        assert_eq!(result.selected, result.stages[result.m_reach - 1]);
    }

    #[test]
    fn trace_stage_invariants() {
        let model = fixture(FixtureId::Example2, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 400, &mut seeded_rng(8)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        assert!(!result.trace.is_empty());
        for e in &result.trace {
            assert_eq!(e.s.len(), e.stage - 1);
            assert!(!e.s.contains(&e.j));
            if e.stage >= 2 {
                let prev = &result.stages[e.stage - 2];
                assert!(prev.contains(e.j));
                for &k in &e.s {
                    assert!(prev.contains(k), "S member {k} not frozen in A^[{}]", e.stage - 1);
                }
            }
        }
    }

    #[test]
    fn no_trace_flag_same_selection() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let data = simulate_dataset(&model, 600, &mut seeded_rng(21)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let with = pc_simple_select_opts(&stats, 0.05, None, true).unwrap();
        let without = pc_simple_select_opts(&stats, 0.05, None, false).unwrap();
        assert_eq!(with.selected, without.selected);
        assert_eq!(with.m_reach, without.m_reach);
        assert!(without.trace.is_empty());
    }

    #[test]
    fn df_guard_stage_retains_everything() {
        // n = 5 allows only order-0 and order-1 tests; with three strongly
        // correlated covariates surviving, higher stages are non-testable
        // and must retain until |A^[m]| <= m.
        let model = ModelSpec::new(
            DVector::zeros(3),
            DMatrix::from_row_slice(
                3,
                3,
                &[1.0, 0.8, 0.8, 0.8, 1.0, 0.8, 0.8, 0.8, 1.0],
            ),
            DVector::from_column_slice(&[3.0, 3.0, 3.0]),
            0.0,
            0.01,
        )
        .unwrap();
        let data = simulate_dataset(&model, 5, &mut seeded_rng(2)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let result = pc_simple_select(&stats, 0.05, None).unwrap();
        assert_nested(&result);
        let has_non_testable = result
            .trace
            .iter()
            .any(|e| e.decision == Decision::NonTestableRetained);
        if result.m_reach >= 3 {
            assert!(has_non_testable);
        }
    }

    #[test]
    fn affine_invariance_of_selection() {
        let model = fixture(FixtureId::Example3, &mut seeded_rng(0));
        let mut data = simulate_dataset(&model, 300, &mut seeded_rng(13)).unwrap();
        let stats = correlation_matrix(&data).unwrap();
        let base = pc_simple_select(&stats, 0.05, None).unwrap();
        // Rescale and shift columns; flip one sign.
        let scales = [-3.0, 0.25, 1000.0];
        let shifts = [7.0, -2.0, 0.5];
        for j in 0..3 {
            for i in 0..data.x.nrows() {
                data.x[(i, j)] = data.x[(i, j)] * scales[j] + shifts[j];
            }
        }
        let stats2 = correlation_matrix(&data).unwrap();
        let rescaled = pc_simple_select(&stats2, 0.05, None).unwrap();
        assert_eq!(base.selected, rescaled.selected);
        assert_eq!(base.m_reach, rescaled.m_reach);
    }
}
