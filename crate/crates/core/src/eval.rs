//! Evaluation protocol: sampled item partitions, person-level k-fold
//! cross-validation, agreement metrics against reference-set estimates, and
//! the Studentized-residual decile analysis.
//!
//! Each sampled partition splits the items into a scoring half and a
//! reference half. Per fold, item parameters, embeddings, and both
//! regressions are trained on the in-fold persons only; held-out persons are
//! scored and compared to their reference-half EAP estimate by mean squared
//! deviation and Kendall rank correlation, for every item subset of each
//! test length.

use itertools::Itertools;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::irt::{EmConfig, GrmItemParams, NodeLikelihoodTable, PriorSpec, ResponseMatrix};
use crate::mds::{embed_train, ItemFeatures, MdsConfig, ProjectConfig};
use crate::rbscore::{train_scoring_rule, ItemPartition, TrainConfig};
use crate::reg::{fold_assignment, ols_fit, RidgeConfig};
use crate::seqdiss::{dissimilarity_matrix, ActionSequence, DissimilarityMatrix};

/// Mean squared deviation between two aligned vectors.
pub fn mse(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "mse inputs".into(),
            expected: a.len(),
            got: b.len(),
        });
    }
    if a.is_empty() {
        return Err(Error::Domain("mse of empty vectors".into()));
    }
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.len() as f64)
}

fn count_tie_pairs(sorted: &[f64]) -> u64 {
    let mut total = 0u64;
    let mut run = 1u64;
    for w in sorted.windows(2) {
        if w[0] == w[1] {
            run += 1;
        } else {
            total += run * (run - 1) / 2;
            run = 1;
        }
    }
    total + run * (run - 1) / 2
}

/// Counts inversions (strict descents) by merge sort.
fn count_inversions(values: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = values.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let (left, right) = values.split_at_mut(mid);
    let mut inversions = count_inversions(left, buf) + count_inversions(right, buf);
    let (mut i, mut j, mut k) = (0usize, 0usize, 0usize);
    while i < left.len() && j < right.len() {
        if left[i] <= right[j] {
            buf[k] = left[i];
            i += 1;
        } else {
            buf[k] = right[j];
            inversions += (left.len() - i) as u64;
            j += 1;
        }
        k += 1;
    }
    while i < left.len() {
        buf[k] = left[i];
        i += 1;
        k += 1;
    }
    while j < right.len() {
        buf[k] = right[j];
        j += 1;
        k += 1;
    }
    values.copy_from_slice(&buf[..n]);
    inversions
}

/// Tie-corrected Kendall rank correlation (tau-b) in O(n log n).
pub fn kendall_tau(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            what: "kendall inputs".into(),
            expected: a.len(),
            got: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Domain("rank correlation needs at least 2 points".into()));
    }
    if a.iter().any(|v| !v.is_finite()) || b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite values in rank correlation".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        a[i].partial_cmp(&a[j])
            .unwrap()
            .then(b[i].partial_cmp(&b[j]).unwrap())
    });
    let a_sorted: Vec<f64> = order.iter().map(|&i| a[i]).collect();
    let mut b_by_a: Vec<f64> = order.iter().map(|&i| b[i]).collect();

    let tot = (n as u64) * (n as u64 - 1) / 2;
    let xtie = count_tie_pairs(&a_sorted);
    let mut b_sorted = b_by_a.clone();
    b_sorted.sort_by(|x, y| x.partial_cmp(y).unwrap());
    let ytie = count_tie_pairs(&b_sorted);
    if xtie == tot {
        return Err(Error::UndefinedCorrelation("first argument is constant".into()));
    }
    if ytie == tot {
        return Err(Error::UndefinedCorrelation("second argument is constant".into()));
    }
    // joint ties
    let mut xytie = 0u64;
    let mut run = 1u64;
    for w in order.windows(2) {
        if a[w[0]] == a[w[1]] && b[w[0]] == b[w[1]] {
            run += 1;
        } else {
            xytie += run * (run - 1) / 2;
            run = 1;
        }
    }
    xytie += run * (run - 1) / 2;

    let mut buf = vec![0.0; n];
    let dis = count_inversions(&mut b_by_a, &mut buf);

    let con_minus_dis = tot as i64 - xtie as i64 - ytie as i64 + xytie as i64 - 2 * dis as i64;
    let denom = ((tot - xtie) as u128 * (tot - ytie) as u128) as f64;
    Ok(con_minus_dis as f64 / denom.sqrt())
}

/// Quadratic-time tau-b; the definitional oracle the fast path must match.
pub fn kendall_tau_quadratic(a: &[f64], b: &[f64]) -> Result<f64> {
    let n = a.len();
    if n < 2 || n != b.len() {
        return Err(Error::Domain("bad inputs".into()));
    }
    let mut dis = 0u64;
    let mut xtie = 0u64;
    let mut ytie = 0u64;
    let mut xytie = 0u64;
    for i in 0..n {
        for j in (i + 1)..n {
            let dx = a[i].partial_cmp(&a[j]).unwrap();
            let dy = b[i].partial_cmp(&b[j]).unwrap();
            use std::cmp::Ordering::*;
            match (dx, dy) {
                (Equal, Equal) => {
                    xtie += 1;
                    ytie += 1;
                    xytie += 1;
                }
                (Equal, _) => xtie += 1,
                (_, Equal) => ytie += 1,
                (Less, Greater) | (Greater, Less) => dis += 1,
                _ => {}
            }
        }
    }
    let tot = (n as u64) * (n as u64 - 1) / 2;
    if xtie == tot || ytie == tot {
        return Err(Error::UndefinedCorrelation("constant argument".into()));
    }
    let con_minus_dis = tot as i64 - xtie as i64 - ytie as i64 + xytie as i64 - 2 * dis as i64;
    let denom = ((tot - xtie) as u128 * (tot - ytie) as u128) as f64;
    Ok(con_minus_dis as f64 / denom.sqrt())
}

// ---------------------------------------------------------------------------
// Residual deciles
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct DecileAnalysis {
    /// Internally Studentized residuals of the simple regression of the
    /// response-based estimate on the process-based estimate.
    pub studentized: Vec<f64>,
    /// Person indices per decile bin, sizes differing by at most one.
    pub bins: Vec<Vec<usize>>,
    /// All residuals were zero; binning fell back to stable person order.
    pub degenerate: bool,
}

/// Bins persons into deciles of the Studentized residuals of
/// `theta_y ~ theta_x`.
pub fn residual_deciles(theta_y: &[f64], theta_x: &[f64]) -> Result<DecileAnalysis> {
    let n = theta_y.len();
    if n != theta_x.len() {
        return Err(Error::DimensionMismatch {
            what: "decile inputs".into(),
            expected: n,
            got: theta_x.len(),
        });
    }
    if n < 20 {
        return Err(Error::Domain("decile analysis needs at least 20 persons".into()));
    }
    let line = ols_fit(theta_x, theta_y)?;
    let xbar = theta_x.iter().sum::<f64>() / n as f64;
    let sxx: f64 = theta_x.iter().map(|x| (x - xbar) * (x - xbar)).sum();
    let residuals: Vec<f64> = theta_x
        .iter()
        .zip(theta_y)
        .map(|(x, y)| y - line.predict(*x))
        .collect();
    let rss: f64 = residuals.iter().map(|r| r * r).sum();
    let scale = theta_y.iter().map(|v| v * v).sum::<f64>().max(1.0);
    let degenerate = rss <= 1e-24 * scale;
    let studentized: Vec<f64> = if degenerate {
        vec![0.0; n]
    } else {
        let s2 = rss / (n - 2) as f64;
        theta_x
            .iter()
            .zip(&residuals)
            .map(|(x, r)| {
                let h = 1.0 / n as f64 + (x - xbar) * (x - xbar) / sxx;
                r / (s2 * (1.0 - h)).sqrt()
            })
            .collect()
    };
    let mut order: Vec<usize> = (0..n).collect();
    if !degenerate {
        order.sort_by(|&i, &j| {
            studentized[i]
                .partial_cmp(&studentized[j])
                .unwrap()
                .then(i.cmp(&j))
        });
    }
    let base = n / 10;
    let rem = n % 10;
    let mut bins = Vec::with_capacity(10);
    let mut cursor = 0usize;
    for b in 0..10 {
        let size = base + usize::from(b < rem);
        bins.push(order[cursor..cursor + size].to_vec());
        cursor += size;
    }
    Ok(DecileAnalysis {
        studentized,
        bins,
        degenerate,
    })
}

/// Person ids with the `k` smallest and `k` largest residuals; ties break by
/// person id.
pub fn extreme_residuals(
    residuals: &[f64],
    person_ids: &[String],
    k: usize,
) -> Result<(Vec<String>, Vec<String>)> {
    let n = residuals.len();
    if person_ids.len() != n {
        return Err(Error::DimensionMismatch {
            what: "extreme-residual inputs".into(),
            expected: n,
            got: person_ids.len(),
        });
    }
    if 2 * k > n {
        return Err(Error::Domain(format!("k = {k} exceeds half of {n} persons")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| {
        residuals[i]
            .partial_cmp(&residuals[j])
            .unwrap()
            .then(person_ids[i].cmp(&person_ids[j]))
    });
    let bottom: Vec<String> = order[..k].iter().map(|&i| person_ids[i].clone()).collect();
    let mut top: Vec<String> = order[n - k..]
        .iter()
        .map(|&i| person_ids[i].clone())
        .collect();
    top.reverse();
    // descending residual with id tie-break needs a stable re-sort
    let mut top_idx: Vec<usize> = order[n - k..].to_vec();
    top_idx.sort_by(|&i, &j| {
        residuals[j]
            .partial_cmp(&residuals[i])
            .unwrap()
            .then(person_ids[i].cmp(&person_ids[j]))
    });
    top = top_idx.iter().map(|&i| person_ids[i].clone()).collect();
    Ok((bottom, top))
}

// ---------------------------------------------------------------------------
// Protocol
// ---------------------------------------------------------------------------

/// One sampled split of the item pool into scoring and reference halves.
#[derive(Debug, Clone, Serialize)]
pub struct PartitionPlan {
    pub scoring: Vec<String>,
    pub reference: Vec<String>,
    pub seed: u64,
}

/// Where per-item process features come from.
pub enum FeatureSource<'a> {
    /// Raw action sequences; per fold each scoring item is embedded on the
    /// training persons and held-out persons are projected in.
    Sequences(&'a [ActionSequence]),
    /// Precomputed numeric blocks covering every person.
    Direct(&'a [ItemFeatures]),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum EstimatorKind {
    Response,
    Process,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            EstimatorKind::Response => write!(f, "response"),
            EstimatorKind::Process => write!(f, "process"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProtocolConfig {
    pub n_partitions: usize,
    pub folds: usize,
    /// Caps the scored test length; `None` runs every available length.
    pub t_max: Option<usize>,
    pub seed: u64,
    /// Embedding dimension for the sequence feature source.
    pub embed_dims: usize,
    pub augment: bool,
    pub ridge_folds: usize,
    pub lambda_grid: Option<Vec<f64>>,
    /// Size of the data-driven default shrinkage grid.
    pub lambda_count: usize,
    pub mds: MdsConfig,
    pub project: ProjectConfig,
    pub em: EmConfig,
    pub prior: PriorSpec,
    pub decile_analysis: bool,
    pub min_fold_persons: usize,
}

impl ProtocolConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            n_partitions: 30,
            folds: 5,
            t_max: None,
            seed,
            embed_dims: 30,
            augment: true,
            ridge_folds: 10,
            lambda_grid: None,
            lambda_count: 100,
            mds: MdsConfig::default(),
            project: ProjectConfig::default(),
            em: EmConfig::default(),
            prior: PriorSpec::default(),
            decile_analysis: true,
            min_fold_persons: 20,
        }
    }
}

/// Per (partition, test length, fold, estimator) agreement metrics, with the
/// per-subset values retained.
#[derive(Debug, Clone)]
pub struct MetricRecord {
    pub partition: usize,
    pub t: usize,
    pub fold: usize,
    pub estimator: EstimatorKind,
    /// Mean over item subsets of the per-subset fold MSE.
    pub mse: f64,
    /// Mean over item subsets of the per-subset fold Kendall tau.
    pub tau: f64,
    pub subset_mse: Vec<f64>,
    pub subset_tau: Vec<f64>,
}

/// Per (partition, decile) MSE against the reference estimate, averaged over
/// folds and subset choices.
#[derive(Debug, Clone, Serialize)]
pub struct DecileRecord {
    pub partition: usize,
    /// 1-based decile of the Studentized residuals.
    pub decile: usize,
    pub mse_response: f64,
    pub mse_process: f64,
}

#[derive(Debug)]
pub struct EvalReport {
    pub partitions: Vec<PartitionPlan>,
    pub records: Vec<MetricRecord>,
    pub deciles: Vec<DecileRecord>,
    pub seed: u64,
    pub folds: usize,
}

impl EvalReport {
    /// Partition-level double average: mean over folds of the per-fold
    /// subset means.
    pub fn partition_mean(&self, partition: usize, t: usize, kind: EstimatorKind) -> Option<(f64, f64)> {
        let rows: Vec<&MetricRecord> = self
            .records
            .iter()
            .filter(|r| r.partition == partition && r.t == t && r.estimator == kind)
            .collect();
        if rows.is_empty() {
            return None;
        }
        let mse = rows.iter().map(|r| r.mse).sum::<f64>() / rows.len() as f64;
        let tau = rows.iter().map(|r| r.tau).sum::<f64>() / rows.len() as f64;
        Some((mse, tau))
    }

    /// Grand mean over partitions of the partition-level averages.
    pub fn grand_mean(&self, t: usize, kind: EstimatorKind) -> Option<(f64, f64)> {
        let per_partition: Vec<(f64, f64)> = (0..self.partitions.len())
            .filter_map(|p| self.partition_mean(p, t, kind))
            .collect();
        if per_partition.is_empty() {
            return None;
        }
        let n = per_partition.len() as f64;
        Some((
            per_partition.iter().map(|v| v.0).sum::<f64>() / n,
            per_partition.iter().map(|v| v.1).sum::<f64>() / n,
        ))
    }

    pub fn t_values(&self, kind: EstimatorKind) -> Vec<usize> {
        let mut ts: Vec<usize> = self
            .records
            .iter()
            .filter(|r| r.estimator == kind)
            .map(|r| r.t)
            .collect();
        ts.sort_unstable();
        ts.dedup();
        ts
    }

    /// Mean decile-level MSEs across partitions: `(response, process)` per
    /// 1-based decile.
    pub fn decile_means(&self) -> Vec<(f64, f64)> {
        (1..=10)
            .map(|d| {
                let rows: Vec<&DecileRecord> =
                    self.deciles.iter().filter(|r| r.decile == d).collect();
                if rows.is_empty() {
                    (f64::NAN, f64::NAN)
                } else {
                    let n = rows.len() as f64;
                    (
                        rows.iter().map(|r| r.mse_response).sum::<f64>() / n,
                        rows.iter().map(|r| r.mse_process).sum::<f64>() / n,
                    )
                }
            })
            .collect()
    }
}

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc = 1usize;
    for i in 0..k {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

fn sample_partitions(
    item_ids: &[String],
    n_partitions: usize,
    seed: u64,
) -> Result<Vec<PartitionPlan>> {
    use rand::seq::SliceRandom;
    let j = item_ids.len();
    let half = j / 2;
    let available = binomial(j, half);
    if n_partitions > available {
        return Err(Error::InvalidConfig(format!(
            "{n_partitions} partitions requested but only {available} distinct splits exist"
        )));
    }
    let mut rng = crate::seed::child_rng(seed, "partitions");
    let mut seen: std::collections::BTreeSet<Vec<usize>> = Default::default();
    let mut plans = Vec::with_capacity(n_partitions);
    let mut indices: Vec<usize> = (0..j).collect();
    while plans.len() < n_partitions {
        indices.shuffle(&mut rng);
        let mut scoring: Vec<usize> = indices[..half].to_vec();
        scoring.sort_unstable();
        if !seen.insert(scoring.clone()) {
            continue;
        }
        let reference: Vec<usize> = (0..j).filter(|i| !scoring.contains(i)).collect();
        plans.push(PartitionPlan {
            scoring: scoring.iter().map(|&i| item_ids[i].clone()).collect(),
            reference: reference.iter().map(|&i| item_ids[i].clone()).collect(),
            seed: crate::seed::indexed_seed(seed, "partition", plans.len() as u64),
        });
    }
    Ok(plans)
}

/// Everything trained once per fold and shared across partitions.
struct FoldContext {
    train_idx: Vec<usize>,
    test_idx: Vec<usize>,
    params: Vec<GrmItemParams>,
    /// Node log-likelihoods for every person under this fold's calibration.
    table: NodeLikelihoodTable,
    /// Per item: numeric feature block for training persons (aligned to
    /// `train_idx`) and for test persons (aligned to `test_idx`).
    train_features: Vec<ItemFeatures>,
    test_features: Vec<ItemFeatures>,
}

fn slice_block(block: &ItemFeatures, idx: &[usize]) -> ItemFeatures {
    ItemFeatures::new(
        block.item_id.clone(),
        idx.iter().map(|&i| block.person_ids[i].clone()).collect(),
        block.values.select(ndarray::Axis(0), idx),
    )
    .expect("row count matches index length")
}

fn build_fold_context(
    responses: &ResponseMatrix,
    source: &FeatureSource<'_>,
    dmats: &[DissimilarityMatrix],
    assignment: &[usize],
    fold: usize,
    config: &ProtocolConfig,
) -> Result<FoldContext> {
    let n = responses.n_persons();
    let train_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] != fold).collect();
    let test_idx: Vec<usize> = (0..n).filter(|&i| assignment[i] == fold).collect();
    if test_idx.len() < config.min_fold_persons {
        return Err(Error::Domain(format!(
            "fold {fold} holds only {} persons; need {}",
            test_idx.len(),
            config.min_fold_persons
        )));
    }
    let train_rm = responses.subset_persons(&train_idx);
    let fit = crate::irt::fit_grm(&train_rm, &config.prior, &config.em)?;
    let table = NodeLikelihoodTable::build(responses, &fit.params, &config.prior)?;

    let (train_features, test_features) = match source {
        FeatureSource::Direct(blocks) => {
            let aligned: Result<Vec<(ItemFeatures, ItemFeatures)>> = responses
                .item_ids
                .iter()
                .map(|item_id| {
                    let block = blocks
                        .iter()
                        .find(|b| &b.item_id == item_id)
                        .ok_or_else(|| {
                            Error::InvalidConfig(format!("no feature block for item {item_id}"))
                        })?;
                    if block.person_ids != responses.person_ids {
                        return Err(Error::InvalidConfig(format!(
                            "feature block for {item_id} is not aligned to the response matrix"
                        )));
                    }
                    Ok((slice_block(block, &train_idx), slice_block(block, &test_idx)))
                })
                .collect();
            aligned?.into_iter().unzip()
        }
        FeatureSource::Sequences(_) => {
            let mut train_blocks = Vec::with_capacity(responses.n_items());
            let mut test_blocks = Vec::with_capacity(responses.n_items());
            for (j, item_id) in responses.item_ids.iter().enumerate() {
                let dmat = &dmats[j];
                let train_dmat = dmat.subset(&train_idx);
                let outcome = embed_train(&train_dmat, config.embed_dims, &config.mds)?;
                let train_ids: Vec<String> = train_idx
                    .iter()
                    .map(|&i| responses.person_ids[i].clone())
                    .collect();
                train_blocks.push(ItemFeatures::new(
                    item_id.clone(),
                    train_ids,
                    outcome.coords.clone(),
                )?);
                let mut projected =
                    ndarray::Array2::zeros((test_idx.len(), config.embed_dims));
                for (row, &i) in test_idx.iter().enumerate() {
                    let cross: Vec<f64> =
                        train_idx.iter().map(|&tr| dmat.get(tr, i)).collect();
                    let coords =
                        crate::mds::project_into(&outcome.coords, &cross, &config.project)?;
                    for (c, v) in coords.into_iter().enumerate() {
                        projected[[row, c]] = v;
                    }
                }
                let test_ids: Vec<String> = test_idx
                    .iter()
                    .map(|&i| responses.person_ids[i].clone())
                    .collect();
                test_blocks.push(ItemFeatures::new(item_id.clone(), test_ids, projected)?);
            }
            (train_blocks, test_blocks)
        }
    };

    Ok(FoldContext {
        train_idx,
        test_idx,
        params: fit.params,
        table,
        train_features,
        test_features,
    })
}

struct PartitionOutcome {
    records: Vec<MetricRecord>,
    deciles: Vec<DecileRecord>,
}

#[allow(clippy::too_many_arguments)]
fn run_partition(
    p_idx: usize,
    plan: &PartitionPlan,
    responses: &ResponseMatrix,
    folds: &[FoldContext],
    config: &ProtocolConfig,
) -> Result<PartitionOutcome> {
    let scoring_cols: Vec<usize> = plan
        .scoring
        .iter()
        .map(|id| responses.item_index(id).expect("sampled from item ids"))
        .collect();
    let reference_cols: Vec<usize> = plan
        .reference
        .iter()
        .map(|id| responses.item_index(id).expect("sampled from item ids"))
        .collect();
    let half = scoring_cols.len();
    let t_resp_max = config.t_max.unwrap_or(half).min(half);
    let t_proc_max = config
        .t_max
        .unwrap_or(half.saturating_sub(1))
        .min(half.saturating_sub(1));

    let mut records = Vec::new();
    // decile accumulators: per bin, summed over folds and subset choices
    let mut dec_sum_resp = [0.0; 10];
    let mut dec_sum_proc = [0.0; 10];
    let mut dec_count = 0usize;

    for (f_idx, ctx) in folds.iter().enumerate() {
        let reference: Vec<f64> = ctx
            .test_idx
            .iter()
            .map(|&i| ctx.table.eap(i, &reference_cols))
            .collect();

        // response-based estimates per subset size
        for t in 1..=t_resp_max {
            let mut subset_mse = Vec::new();
            let mut subset_tau = Vec::new();
            for combo in scoring_cols.iter().copied().combinations(t) {
                let est: Vec<f64> = ctx
                    .test_idx
                    .iter()
                    .map(|&i| ctx.table.eap(i, &combo))
                    .collect();
                subset_mse.push(mse(&est, &reference)?);
                subset_tau.push(kendall_tau(&est, &reference)?);
            }
            let m = subset_mse.iter().sum::<f64>() / subset_mse.len() as f64;
            let tau = subset_tau.iter().sum::<f64>() / subset_tau.len() as f64;
            records.push(MetricRecord {
                partition: p_idx,
                t,
                fold: f_idx,
                estimator: EstimatorKind::Response,
                mse: m,
                tau,
                subset_mse,
                subset_tau,
            });
        }

        // process-based estimates per subset size
        let train_rm = responses.subset_persons(&ctx.train_idx);
        let test_rm = responses.subset_persons(&ctx.test_idx);
        for t in 1..=t_proc_max {
            let mut subset_mse = Vec::new();
            let mut subset_tau = Vec::new();
            let run_deciles = config.decile_analysis && t == t_proc_max;
            for (c_idx, combo) in scoring_cols.iter().copied().combinations(t).enumerate() {
                let b1: Vec<String> = combo
                    .iter()
                    .map(|&j| responses.item_ids[j].clone())
                    .collect();
                let b2: Vec<String> = scoring_cols
                    .iter()
                    .filter(|j| !combo.contains(j))
                    .map(|&j| responses.item_ids[j].clone())
                    .collect();
                let partition = ItemPartition::new(b1, b2)?;
                let train_features = crate::rbscore::features_for_partition(
                    &ctx.train_features,
                    &partition,
                    &train_rm,
                    config.augment,
                )?;
                let ridge_seed = crate::seed::indexed_seed(
                    config.seed,
                    "ridge",
                    ((p_idx * 64 + f_idx) * 4096 + t * 256 + c_idx) as u64,
                );
                let train_config = TrainConfig {
                    ridge: RidgeConfig {
                        folds: config.ridge_folds,
                        seed: ridge_seed,
                        lambda_grid: config.lambda_grid.clone(),
                        lambda_count: config.lambda_count,
                        assignment: None,
                    },
                    ..Default::default()
                };
                let (rule, _) = train_scoring_rule(
                    &train_rm,
                    &train_features,
                    &partition,
                    &ctx.params,
                    &config.prior,
                    Vec::new(),
                    config.augment,
                    &train_config,
                )?;
                let test_features = crate::rbscore::features_for_partition(
                    &ctx.test_features,
                    &partition,
                    &test_rm,
                    config.augment,
                )?;
                let est: Vec<f64> = (0..ctx.test_idx.len())
                    .map(|i| rule.apply_to_features(&test_features.values.row(i).to_vec()))
                    .collect::<Result<_>>()?;
                subset_mse.push(mse(&est, &reference)?);
                subset_tau.push(kendall_tau(&est, &reference)?);

                if run_deciles {
                    let response_est: Vec<f64> = ctx
                        .test_idx
                        .iter()
                        .map(|&i| ctx.table.eap(i, &combo))
                        .collect();
                    let analysis = residual_deciles(&response_est, &est)?;
                    for (b, bin) in analysis.bins.iter().enumerate() {
                        let bin_mse = |v: &[f64]| {
                            bin.iter()
                                .map(|&i| (v[i] - reference[i]) * (v[i] - reference[i]))
                                .sum::<f64>()
                                / bin.len() as f64
                        };
                        dec_sum_resp[b] += bin_mse(&response_est);
                        dec_sum_proc[b] += bin_mse(&est);
                    }
                    dec_count += 1;
                }
            }
            let m = subset_mse.iter().sum::<f64>() / subset_mse.len() as f64;
            let tau = subset_tau.iter().sum::<f64>() / subset_tau.len() as f64;
            records.push(MetricRecord {
                partition: p_idx,
                t,
                fold: f_idx,
                estimator: EstimatorKind::Process,
                mse: m,
                tau,
                subset_mse,
                subset_tau,
            });
        }
    }

    let deciles = if dec_count > 0 {
        (0..10)
            .map(|b| DecileRecord {
                partition: p_idx,
                decile: b + 1,
                mse_response: dec_sum_resp[b] / dec_count as f64,
                mse_process: dec_sum_proc[b] / dec_count as f64,
            })
            .collect()
    } else {
        Vec::new()
    };
    Ok(PartitionOutcome { records, deciles })
}

/// Runs the full evaluation protocol: sampled partitions, per-fold training
/// of calibration, embeddings, and both regressions, and held-out agreement
/// metrics. Bit-reproducible for a fixed master seed.
pub fn run_protocol(
    responses: &ResponseMatrix,
    source: FeatureSource<'_>,
    config: &ProtocolConfig,
) -> Result<EvalReport> {
    let j = responses.n_items();
    if !j.is_multiple_of(2) || j < 2 {
        return Err(Error::InvalidConfig(
            "the protocol needs an even number of items".into(),
        ));
    }
    let n = responses.n_persons();
    if n < config.folds * config.min_fold_persons {
        return Err(Error::Domain(format!(
            "{n} persons cannot fill {} folds of at least {}",
            config.folds, config.min_fold_persons
        )));
    }

    let plans = sample_partitions(&responses.item_ids, config.n_partitions, config.seed)?;
    let assignment = fold_assignment(
        crate::seed::child_seed(config.seed, "folds"),
        n,
        config.folds,
    );

    // per-item dissimilarity matrices for the sequence source
    let dmats: Vec<DissimilarityMatrix> = match &source {
        FeatureSource::Sequences(seqs) => {
            let mut per_item = Vec::with_capacity(j);
            for item_id in &responses.item_ids {
                let mut by_person: std::collections::HashMap<&str, &ActionSequence> =
                    Default::default();
                for s in seqs.iter().filter(|s| &s.item_id == item_id) {
                    by_person.insert(s.person_id.as_str(), s);
                }
                let ordered: Vec<ActionSequence> = responses
                    .person_ids
                    .iter()
                    .map(|pid| {
                        by_person.get(pid.as_str()).map(|&s| s.clone()).ok_or_else(|| {
                            Error::MissingFeatures {
                                person_id: pid.clone(),
                                item_id: item_id.clone(),
                            }
                        })
                    })
                    .collect::<Result<_>>()?;
                per_item.push(dissimilarity_matrix(&ordered)?);
            }
            per_item
        }
        FeatureSource::Direct(_) => Vec::new(),
    };

    let folds: Vec<FoldContext> = (0..config.folds)
        .map(|f| build_fold_context(responses, &source, &dmats, &assignment, f, config))
        .collect::<Result<_>>()?;

    let outcomes: Vec<PartitionOutcome> = plans
        .par_iter()
        .enumerate()
        .map(|(p_idx, plan)| run_partition(p_idx, plan, responses, &folds, config))
        .collect::<Result<_>>()?;

    let mut records = Vec::new();
    let mut deciles = Vec::new();
    for outcome in outcomes {
        records.extend(outcome.records);
        deciles.extend(outcome.deciles);
    }
    Ok(EvalReport {
        partitions: plans,
        records,
        deciles,
        seed: config.seed,
        folds: config.folds,
    })
}
