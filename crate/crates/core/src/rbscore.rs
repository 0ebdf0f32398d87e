//! The two-step conditional-expectation scoring procedure.
//!
//! On a pretest sample with complete responses, the second item block's EAP
//! estimate is regressed on the first block's process features (ridge, CV
//! shrinkage) to produce the scalar summary `T_X`; the first block's EAP
//! estimate is then regressed on `T_X` (simple regression). A new person is
//! scored by the composition of the two fits applied to their features.

use serde::{Deserialize, Serialize};
use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::irt::{GrmItemParams, PriorSpec, ResponseMatrix, ThetaMethod};
use crate::mds::{
    build_feature_matrix, embed_project, EmbeddingModel, FeatureMatrix, ItemFeatures,
    ProjectConfig,
};
use crate::reg::{ols_fit, ridge_fit, LinearModel, RidgeConfig, RidgeModel};
use crate::seqdiss::{cross_dissimilarities, ActionSequence};

/// Disjoint nonempty item blocks: features come from the first, the
/// regression target from the second.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ItemPartition {
    pub b1: Vec<String>,
    pub b2: Vec<String>,
}

impl ItemPartition {
    pub fn new(b1: Vec<String>, b2: Vec<String>) -> Result<Self> {
        if b1.is_empty() || b2.is_empty() {
            return Err(Error::InvalidConfig(
                "both item blocks must be nonempty".into(),
            ));
        }
        for id in &b1 {
            if b2.contains(id) {
                return Err(Error::InvalidConfig(format!(
                    "item {id} appears in both blocks"
                )));
            }
        }
        let mut all: Vec<&String> = b1.iter().chain(&b2).collect();
        all.sort_unstable();
        if all.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("duplicate item in partition".into()));
        }
        Ok(Self { b1, b2 })
    }
}

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub ridge: RidgeConfig,
    /// `T_X` spread below which the second regression falls back to a
    /// constant model.
    pub degenerate_tol: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            ridge: RidgeConfig::default(),
            degenerate_tol: 1e-10,
        }
    }
}

/// Persisted two-step scoring artifact (`procscore.rule.v1`).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScoringRule {
    pub partition: ItemPartition,
    pub grm_params: Vec<GrmItemParams>,
    pub prior: PriorSpec,
    /// Per-first-block-item embeddings; empty for rules trained on directly
    /// supplied numeric features (such rules cannot score raw sequences).
    pub embeddings: Vec<EmbeddingModel>,
    pub f1: RidgeModel,
    pub f2: LinearModel,
    /// Set when `T_X` was (near-)constant and `f2` is a constant fallback.
    pub f2_degenerate: bool,
    pub feature_layout: Vec<String>,
    pub augment: bool,
}

impl ScoringRule {
    pub fn validate(&self) -> Result<()> {
        if self.f1.width() != self.feature_layout.len() {
            return Err(Error::DimensionMismatch {
                what: "rule feature layout".into(),
                expected: self.f1.width(),
                got: self.feature_layout.len(),
            });
        }
        for id in self.partition.b1.iter().chain(&self.partition.b2) {
            if !self.grm_params.iter().any(|p| &p.item_id == id) {
                return Err(Error::InvalidConfig(format!(
                    "item {id} is not calibrated in the rule"
                )));
            }
        }
        if !self.embeddings.is_empty() {
            let mut covered: Vec<&String> = self.embeddings.iter().map(|e| &e.item_id).collect();
            covered.sort_unstable();
            let mut b1 = self.partition.b1.iter().collect::<Vec<_>>();
            b1.sort_unstable();
            if covered != b1 {
                return Err(Error::InvalidConfig(
                    "embeddings must cover exactly the first block".into(),
                ));
            }
        }
        Ok(())
    }

    /// Applies `f2 ∘ f1` to an assembled feature row.
    pub fn apply_to_features(&self, row: &[f64]) -> Result<f64> {
        if row.len() != self.f1.width() {
            return Err(Error::DimensionMismatch {
                what: "feature row".into(),
                expected: self.f1.width(),
                got: row.len(),
            });
        }
        Ok(self.f2.predict(self.f1.predict_row(row)))
    }
}

#[derive(Debug, Clone)]
pub struct TrainDiagnostics {
    /// First-step fitted values on the pretest persons.
    pub t_x: Vec<f64>,
    pub theta_b1: Vec<f64>,
    pub theta_b2: Vec<f64>,
    pub cv_curve: Vec<(f64, f64)>,
    pub f2_degenerate: bool,
}

fn item_indices(responses: &ResponseMatrix, ids: &[String]) -> Result<Vec<usize>> {
    ids.iter()
        .map(|id| {
            responses
                .item_index(id)
                .ok_or_else(|| Error::InvalidConfig(format!("item {id} not in responses")))
        })
        .collect()
}

fn params_for<'p>(params: &'p [GrmItemParams], ids: &[String]) -> Result<Vec<&'p GrmItemParams>> {
    ids.iter()
        .map(|id| {
            params
                .iter()
                .find(|p| &p.item_id == id)
                .ok_or_else(|| Error::InvalidConfig(format!("item {id} not calibrated")))
        })
        .collect()
}

/// EAP estimates for every person over the given item ids.
pub fn eap_over_items(
    responses: &ResponseMatrix,
    params: &[GrmItemParams],
    prior: &PriorSpec,
    items: &[String],
) -> Result<Vec<f64>> {
    let cols = item_indices(responses, items)?;
    let selected: Vec<GrmItemParams> = params_for(params, items)?
        .into_iter()
        .cloned()
        .collect();
    (0..responses.n_persons())
        .map(|i| {
            let row = responses.row_on_items(i, &cols);
            crate::irt::theta_estimate_value(&row, &selected, prior, ThetaMethod::Eap)
        })
        .collect()
}

/// Fits the two conditional expectations on pretest data and assembles the
/// scoring rule.
///
/// Step 1 regresses the second block's EAP estimate on the first block's
/// features (ridge, CV-selected shrinkage). Step 2 regresses the first
/// block's EAP estimate on the step-1 fitted values; a near-constant `T_X`
/// falls back to a constant model with a warning flag.
#[allow(clippy::too_many_arguments)]
pub fn train_scoring_rule(
    responses: &ResponseMatrix,
    features_b1: &FeatureMatrix,
    partition: &ItemPartition,
    grm_params: &[GrmItemParams],
    prior: &PriorSpec,
    embeddings: Vec<EmbeddingModel>,
    augment: bool,
    config: &TrainConfig,
) -> Result<(ScoringRule, TrainDiagnostics)> {
    if features_b1.person_ids != responses.person_ids {
        return Err(Error::InvalidConfig(
            "feature matrix and responses list different persons".into(),
        ));
    }
    let theta_b2 = eap_over_items(responses, grm_params, prior, &partition.b2)?;
    let fit = ridge_fit(features_b1.values.view(), &theta_b2, &config.ridge)?;
    let t_x: Vec<f64> = (0..features_b1.n_persons())
        .map(|i| fit.model.predict_row(&features_b1.values.row(i).to_vec()))
        .collect();

    let theta_b1 = eap_over_items(responses, grm_params, prior, &partition.b1)?;
    let spread = t_x.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
        - t_x.iter().cloned().fold(f64::INFINITY, f64::min);
    let mean_b1 = theta_b1.iter().sum::<f64>() / theta_b1.len() as f64;
    let (f2, degenerate) = if spread <= config.degenerate_tol {
        (
            LinearModel {
                slope: 0.0,
                intercept: mean_b1,
            },
            true,
        )
    } else {
        (ols_fit(&t_x, &theta_b1)?, false)
    };

    let used_params: Vec<GrmItemParams> = grm_params
        .iter()
        .filter(|p| partition.b1.contains(&p.item_id) || partition.b2.contains(&p.item_id))
        .cloned()
        .collect();
    let rule = ScoringRule {
        partition: partition.clone(),
        grm_params: used_params,
        prior: prior.clone(),
        embeddings,
        f1: fit.model,
        f2,
        f2_degenerate: degenerate,
        feature_layout: features_b1.labels.clone(),
        augment,
    };
    rule.validate()?;
    Ok((
        rule,
        TrainDiagnostics {
            t_x,
            theta_b1,
            theta_b2,
            cv_curve: fit.cv_curve,
            f2_degenerate: degenerate,
        },
    ))
}

/// Training-corpus sequences indexed by item and person for operational
/// scoring.
pub struct TrainingSequences<'a> {
    by_item: HashMap<&'a str, HashMap<&'a str, &'a ActionSequence>>,
}

impl<'a> TrainingSequences<'a> {
    pub fn index(seqs: &'a [ActionSequence]) -> Self {
        let mut by_item: HashMap<&str, HashMap<&str, &ActionSequence>> = HashMap::new();
        for s in seqs {
            by_item
                .entry(s.item_id.as_str())
                .or_default()
                .insert(s.person_id.as_str(), s);
        }
        Self { by_item }
    }

    /// Sequences for one item in the order of the given person ids.
    pub fn aligned(&self, item_id: &str, person_ids: &[String]) -> Result<Vec<ActionSequence>> {
        let per_item = self.by_item.get(item_id).ok_or_else(|| {
            Error::InvalidSequence(format!("no training sequences for item {item_id}"))
        })?;
        person_ids
            .iter()
            .map(|pid| {
                per_item
                    .get(pid.as_str())
                    .map(|&s| s.clone())
                    .ok_or_else(|| Error::MissingFeatures {
                        person_id: pid.clone(),
                        item_id: item_id.to_string(),
                    })
            })
            .collect()
    }
}

/// Result of operational scoring: the estimate plus any soft warnings
/// (for example, missing scores with augmentation enabled).
#[derive(Debug, Clone)]
pub struct OperationalScore {
    pub value: f64,
    pub warnings: Vec<String>,
}

/// Scores one new person from their first-block action sequences.
///
/// Per item: cross-dissimilarities to the training sequences, out-of-sample
/// projection into the item's embedding, then score-indicator augmentation
/// when the rule was trained that way; the assembled row goes through
/// `f2 ∘ f1`. Missing scores at scoring time leave the indicator columns
/// zero, with a warning.
pub fn score_new_person(
    rule: &ScoringRule,
    new_seqs: &[ActionSequence],
    new_scores: Option<&HashMap<String, u32>>,
    train_seqs: &TrainingSequences<'_>,
    project: &ProjectConfig,
) -> Result<OperationalScore> {
    rule.validate()?;
    if rule.embeddings.is_empty() {
        return Err(Error::InvalidConfig(
            "rule was trained on direct features and cannot score raw sequences".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut row = Vec::with_capacity(rule.feature_layout.len());
    for item_id in &rule.partition.b1 {
        let model = rule
            .embeddings
            .iter()
            .find(|e| &e.item_id == item_id)
            .expect("validated: embeddings cover the first block");
        let seq = new_seqs
            .iter()
            .find(|s| &s.item_id == item_id)
            .ok_or_else(|| Error::InvalidSequence(format!("no sequence for item {item_id}")))?;
        let train = train_seqs.aligned(item_id, &model.train_ids)?;
        let cross = cross_dissimilarities(seq, &train)?;
        let coords = embed_project(model, &cross, project)?;
        row.extend(coords);
        if rule.augment {
            let params = rule
                .grm_params
                .iter()
                .find(|p| &p.item_id == item_id)
                .expect("validated: first block calibrated");
            let levels = params.n_categories();
            let mut indicators = vec![0.0; levels];
            match new_scores.and_then(|m| m.get(item_id)) {
                Some(&y) if (y as usize) < levels => indicators[y as usize] = 1.0,
                Some(&y) => {
                    return Err(Error::InvalidResponses(format!(
                        "score {y} out of range for item {item_id}"
                    )))
                }
                None => warnings.push(format!(
                    "no observed score for item {item_id}; indicator columns left zero"
                )),
            }
            row.extend(indicators);
        }
    }
    let value = rule.apply_to_features(&row)?;
    Ok(OperationalScore { value, warnings })
}

/// Least-squares combination of per-block estimates against a response-based
/// target.
#[derive(Debug, Clone)]
pub struct CombinedEstimate {
    pub weights: Vec<f64>,
    pub combined: Vec<f64>,
    /// Set when collinearity forced a ridge-stabilized solve.
    pub ridge_fallback: bool,
}

/// Finds `w` minimizing `|| target - sum_m w_m estimate_m ||^2` and returns
/// the combined estimate. Collinear inputs fall back to a ridge-stabilized
/// solve (lambda = 1e-8) with a flag.
pub fn combine_estimates(estimates: &[Vec<f64>], target: &[f64]) -> Result<CombinedEstimate> {
    let m = estimates.len();
    if m == 0 {
        return Err(Error::Domain("no estimates to combine".into()));
    }
    let n = target.len();
    if estimates.iter().any(|e| e.len() != n) {
        return Err(Error::DimensionMismatch {
            what: "estimate vectors".into(),
            expected: n,
            got: estimates
                .iter()
                .map(|e| e.len())
                .find(|&l| l != n)
                .unwrap_or(n),
        });
    }
    let mut gram = nalgebra::DMatrix::zeros(m, m);
    let mut rhs = nalgebra::DVector::zeros(m);
    for a in 0..m {
        for b in 0..m {
            gram[(a, b)] = estimates[a]
                .iter()
                .zip(&estimates[b])
                .map(|(x, y)| x * y)
                .sum();
        }
        rhs[a] = estimates[a].iter().zip(target).map(|(x, y)| x * y).sum();
    }
    // reject ill-conditioned systems, not just exactly singular ones
    let eig = gram.clone().symmetric_eigen();
    let max_eig = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
    let min_eig = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
    let well_conditioned = min_eig > 1e-10 * max_eig.max(1e-300);
    let (solution, ridge_fallback) = if well_conditioned {
        let w = gram
            .clone()
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::DegenerateDesign("combination solve failed".into()))?;
        (w, false)
    } else {
        let mut stabilized = gram;
        for k in 0..m {
            stabilized[(k, k)] += 1e-8;
        }
        let w = stabilized
            .cholesky()
            .map(|ch| ch.solve(&rhs))
            .ok_or_else(|| Error::DegenerateDesign("combination solve failed".into()))?;
        (w, true)
    };
    let weights: Vec<f64> = solution.iter().copied().collect();
    let combined: Vec<f64> = (0..n)
        .map(|i| weights.iter().zip(estimates).map(|(w, e)| w * e[i]).sum())
        .collect();
    Ok(CombinedEstimate {
        weights,
        combined,
        ridge_fallback,
    })
}

/// Column-binds per-item numeric blocks restricted to the first block's
/// items, with optional score augmentation; a convenience for pipelines that
/// already hold per-item features.
pub fn features_for_partition(
    blocks: &[ItemFeatures],
    partition: &ItemPartition,
    responses: &ResponseMatrix,
    augment: bool,
) -> Result<FeatureMatrix> {
    let selected: Vec<ItemFeatures> = partition
        .b1
        .iter()
        .map(|id| {
            blocks
                .iter()
                .find(|b| &b.item_id == id)
                .cloned()
                .ok_or_else(|| Error::InvalidConfig(format!("no feature block for item {id}")))
        })
        .collect::<Result<_>>()?;
    build_feature_matrix(
        &selected,
        augment.then_some(responses),
        augment,
        &responses.person_ids,
    )
}
