//! Stress-minimizing multidimensional scaling of sequence dissimilarities and
//! out-of-sample projection of new persons.
//!
//! Training minimizes the raw stress `sum_{i<i'} (d_ii' - ||X_i - X_i'||)^2`
//! by SMACOF majorization, initialized from classical scaling, so the stress
//! trace is nonincreasing. A new person's features minimize the analogous
//! objective against their cross-dissimilarities, via BFGS with multi-start
//! from the nearest training points.

use ndarray::{Array1, Array2};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::irt::ResponseMatrix;
use crate::seqdiss::DissimilarityMatrix;

/// A trained per-item embedding.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub item_id: String,
    pub k: usize,
    pub train_ids: Vec<String>,
    /// Row-major N x K coordinates, column-centered.
    pub coords: Vec<f64>,
    pub final_stress: f64,
    pub augment_with_score: bool,
}

impl EmbeddingModel {
    pub fn coords_array(&self) -> Array2<f64> {
        Array2::from_shape_vec((self.train_ids.len(), self.k), self.coords.clone())
            .expect("coords shape")
    }
}

#[derive(Debug, Clone)]
pub struct MdsConfig {
    pub max_iter: usize,
    /// Stop when the relative stress decrease falls below this.
    pub rel_tol: f64,
    /// Seed for the tiny jitter applied to dimensions classical scaling
    /// cannot initialize (non-positive eigenvalues).
    pub jitter_seed: u64,
}

impl Default for MdsConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            rel_tol: 1e-7,
            jitter_seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProjectConfig {
    /// Number of nearest training points used as starts (plus their centroid).
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl Default for ProjectConfig {
    fn default() -> Self {
        Self {
            starts: 5,
            max_iter: 200,
            grad_tol: 1e-10,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EmbedOutcome {
    pub coords: Array2<f64>,
    pub final_stress: f64,
    pub stress_trace: Vec<f64>,
}

/// Raw stress of a configuration against target dissimilarities.
pub fn stress_of(coords: &Array2<f64>, dmat: &DissimilarityMatrix) -> f64 {
    let n = coords.nrows();
    let mut total = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            let mut sq = 0.0;
            for k in 0..coords.ncols() {
                let diff = coords[[i, k]] - coords[[j, k]];
                sq += diff * diff;
            }
            let gap = dmat.get(i, j) - sq.sqrt();
            total += gap * gap;
        }
    }
    total
}

fn classical_scaling(dmat: &DissimilarityMatrix, k: usize) -> (Array2<f64>, usize) {
    let n = dmat.n();
    let mut dsq = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = dmat.get(i, j);
            dsq[(i, j)] = d * d;
        }
    }
    let row_means: Vec<f64> = (0..n).map(|i| dsq.row(i).sum() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut b = nalgebra::DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            b[(i, j)] = -0.5 * (dsq[(i, j)] - row_means[i] - row_means[j] + grand);
        }
    }
    let eig = nalgebra::SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &bb| {
        eig.eigenvalues[bb]
            .partial_cmp(&eig.eigenvalues[a])
            .unwrap()
    });
    let mut coords = Array2::zeros((n, k));
    let mut filled = 0;
    for (m, &idx) in order.iter().take(k).enumerate() {
        let lambda = eig.eigenvalues[idx];
        if lambda <= 0.0 {
            break;
        }
        let scale = lambda.sqrt();
        for i in 0..n {
            coords[[i, m]] = eig.eigenvectors[(i, idx)] * scale;
        }
        filled = m + 1;
    }
    (coords, filled)
}

fn center_columns(coords: &mut Array2<f64>) {
    let n = coords.nrows() as f64;
    for mut col in coords.columns_mut() {
        let mean = col.sum() / n;
        col.mapv_inplace(|v| v - mean);
    }
}

/// Embeds a dissimilarity matrix into `k` dimensions.
pub fn embed_train(dmat: &DissimilarityMatrix, k: usize, config: &MdsConfig) -> Result<EmbedOutcome> {
    let n = dmat.n();
    if k == 0 {
        return Err(Error::Domain("embedding dimension must be positive".into()));
    }
    if k >= n {
        return Err(Error::Domain(format!(
            "embedding dimension {k} must be below the number of persons {n}"
        )));
    }
    let (mut coords, filled) = classical_scaling(dmat, k);
    if filled < k {
        // break the degeneracy of all-zero columns so SMACOF can move them
        let mut rng = crate::seed::child_rng(config.jitter_seed, "mds-jitter");
        for m in filled..k {
            for i in 0..n {
                coords[[i, m]] = 1e-6 * (rng.gen::<f64>() - 0.5);
            }
        }
    }
    center_columns(&mut coords);

    let mut stress = stress_of(&coords, dmat);
    let mut trace = vec![stress];
    for _ in 0..config.max_iter {
        // Guttman transform: X <- B(X) X / n
        let mut b = Array2::zeros((n, n));
        for i in 0..n {
            let mut diag = 0.0;
            for j in 0..n {
                if i == j {
                    continue;
                }
                let mut sq = 0.0;
                for m in 0..k {
                    let diff = coords[[i, m]] - coords[[j, m]];
                    sq += diff * diff;
                }
                let dist = sq.sqrt();
                let w = if dist > 1e-12 {
                    -dmat.get(i, j) / dist
                } else {
                    0.0
                };
                b[[i, j]] = w;
                diag -= w;
            }
            b[[i, i]] = diag;
        }
        coords = b.dot(&coords) / n as f64;
        let new_stress = stress_of(&coords, dmat);
        trace.push(new_stress);
        let drop = stress - new_stress;
        stress = new_stress;
        if drop <= config.rel_tol * stress.max(1e-300) {
            break;
        }
    }
    center_columns(&mut coords);
    let final_stress = stress_of(&coords, dmat);
    Ok(EmbedOutcome {
        coords,
        final_stress,
        stress_trace: trace,
    })
}

/// Embeds one item's dissimilarities and packages the result.
pub fn embed_item(
    item_id: &str,
    dmat: &DissimilarityMatrix,
    k: usize,
    augment_with_score: bool,
    config: &MdsConfig,
) -> Result<(EmbeddingModel, Vec<f64>)> {
    let outcome = embed_train(dmat, k, config)?;
    let model = EmbeddingModel {
        item_id: item_id.to_string(),
        k,
        train_ids: dmat.ids.clone(),
        coords: outcome.coords.iter().copied().collect(),
        final_stress: outcome.final_stress,
        augment_with_score,
    };
    Ok((model, outcome.stress_trace))
}

fn project_objective(coords: &Array2<f64>, cross_d: &[f64], x: &[f64]) -> f64 {
    let mut total = 0.0;
    for (i, &d) in cross_d.iter().enumerate() {
        let mut sq = 0.0;
        for (m, &xm) in x.iter().enumerate() {
            let diff = coords[[i, m]] - xm;
            sq += diff * diff;
        }
        let gap = d - sq.sqrt();
        total += gap * gap;
    }
    total
}

fn project_gradient(coords: &Array2<f64>, cross_d: &[f64], x: &[f64], grad: &mut [f64]) {
    grad.fill(0.0);
    for (i, &d) in cross_d.iter().enumerate() {
        let mut sq = 0.0;
        for (m, &xm) in x.iter().enumerate() {
            let diff = xm - coords[[i, m]];
            sq += diff * diff;
        }
        let dist = sq.sqrt();
        if dist < 1e-12 {
            continue;
        }
        let w = -2.0 * (d - dist) / dist;
        for (m, g) in grad.iter_mut().enumerate() {
            *g += w * (x[m] - coords[[i, m]]);
        }
    }
}

/// BFGS minimization with Armijo backtracking from a single start.
fn bfgs_minimize(
    coords: &Array2<f64>,
    cross_d: &[f64],
    start: Vec<f64>,
    config: &ProjectConfig,
) -> (Vec<f64>, f64) {
    let k = start.len();
    let mut x = start;
    let mut fx = project_objective(coords, cross_d, &x);
    let mut grad = vec![0.0; k];
    project_gradient(coords, cross_d, &x, &mut grad);
    let mut h = Array2::eye(k); // inverse-Hessian approximation

    for _ in 0..config.max_iter {
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < config.grad_tol {
            break;
        }
        let g = Array1::from_vec(grad.clone());
        let mut dir = -h.dot(&g);
        if dir.dot(&g) >= 0.0 {
            dir = -g.clone();
        }
        let slope = dir.dot(&g);
        let mut step = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let cand: Vec<f64> = x.iter().zip(dir.iter()).map(|(xi, di)| xi + step * di).collect();
            let fc = project_objective(coords, cross_d, &cand);
            if fc <= fx + 1e-4 * step * slope {
                let mut new_grad = vec![0.0; k];
                project_gradient(coords, cross_d, &cand, &mut new_grad);
                // BFGS update on the inverse Hessian
                let s = Array1::from_iter(cand.iter().zip(&x).map(|(c, xi)| c - xi));
                let yv = Array1::from_iter(new_grad.iter().zip(&grad).map(|(n, o)| n - o));
                let sy = s.dot(&yv);
                if sy > 1e-12 {
                    let rho = 1.0 / sy;
                    let hy = h.dot(&yv);
                    let yhy = yv.dot(&hy);
                    let ss = outer(&s, &s);
                    let hys = outer(&hy, &s);
                    let shy = outer(&s, &hy);
                    h = &h - &((&hys + &shy) * rho) + &(ss * (rho * (1.0 + rho * yhy)));
                }
                x = cand;
                fx = fc;
                grad = new_grad;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    (x, fx)
}

fn outer(a: &Array1<f64>, b: &Array1<f64>) -> Array2<f64> {
    let mut out = Array2::zeros((a.len(), b.len()));
    for (i, &ai) in a.iter().enumerate() {
        for (j, &bj) in b.iter().enumerate() {
            out[[i, j]] = ai * bj;
        }
    }
    out
}

/// Projects a new person into a trained embedding from their
/// cross-dissimilarities to the training persons.
pub fn embed_project(
    model: &EmbeddingModel,
    cross_d: &[f64],
    config: &ProjectConfig,
) -> Result<Vec<f64>> {
    project_into(&model.coords_array(), cross_d, config)
}

/// As `embed_project`, on raw training coordinates.
pub fn project_into(
    coords: &Array2<f64>,
    cross_d: &[f64],
    config: &ProjectConfig,
) -> Result<Vec<f64>> {
    let n = coords.nrows();
    let k = coords.ncols();
    if cross_d.len() != n {
        return Err(Error::DimensionMismatch {
            what: "cross-dissimilarity vector".into(),
            expected: n,
            got: cross_d.len(),
        });
    }
    if cross_d.iter().any(|d| !d.is_finite() || !(0.0..=1.0).contains(d)) {
        return Err(Error::Domain("cross-dissimilarities must lie in [0,1]".into()));
    }

    // starts: nearest training points plus their centroid
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| cross_d[a].partial_cmp(&cross_d[b]).unwrap().then(a.cmp(&b)));
    let picks: Vec<usize> = order.into_iter().take(config.starts.max(1)).collect();
    let mut starts: Vec<Vec<f64>> = picks
        .iter()
        .map(|&i| coords.row(i).to_vec())
        .collect();
    let mut centroid = vec![0.0; k];
    for s in &starts {
        for (c, v) in centroid.iter_mut().zip(s) {
            *c += v / starts.len() as f64;
        }
    }
    starts.push(centroid);

    let mut best: Option<(Vec<f64>, f64)> = None;
    for start in starts {
        let (x, fx) = bfgs_minimize(coords, cross_d, start, config);
        if best.as_ref().is_none_or(|(_, bf)| fx < *bf) {
            best = Some((x, fx));
        }
    }
    Ok(best.expect("at least one start").0)
}

// ---------------------------------------------------------------------------
// Feature assembly
// ---------------------------------------------------------------------------

/// One item's numeric feature block, aligned to its own person list.
#[derive(Debug, Clone)]
pub struct ItemFeatures {
    pub item_id: String,
    pub person_ids: Vec<String>,
    pub labels: Vec<String>,
    pub values: Array2<f64>,
}

impl ItemFeatures {
    pub fn new(
        item_id: impl Into<String>,
        person_ids: Vec<String>,
        values: Array2<f64>,
    ) -> Result<Self> {
        let item_id = item_id.into();
        if values.nrows() != person_ids.len() {
            return Err(Error::DimensionMismatch {
                what: format!("feature rows for item {item_id}"),
                expected: person_ids.len(),
                got: values.nrows(),
            });
        }
        let labels = (0..values.ncols())
            .map(|m| format!("{item_id}:f{m}"))
            .collect();
        Ok(Self {
            item_id,
            person_ids,
            labels,
            values,
        })
    }

    /// Training-coordinate block of an embedding.
    pub fn from_embedding(model: &EmbeddingModel) -> Self {
        let values = model.coords_array();
        let labels = (0..model.k)
            .map(|m| format!("{}:mds{m}", model.item_id))
            .collect();
        Self {
            item_id: model.item_id.clone(),
            person_ids: model.train_ids.clone(),
            labels,
            values,
        }
    }
}

/// Column-bound per-person feature matrix over an item set.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    pub person_ids: Vec<String>,
    pub item_ids: Vec<String>,
    pub labels: Vec<String>,
    pub values: Array2<f64>,
    pub warnings: Vec<String>,
}

impl FeatureMatrix {
    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    pub fn width(&self) -> usize {
        self.values.ncols()
    }
}

/// One-hot encoding width for an item with `n_levels` categories.
fn indicator_labels(item_id: &str, n_levels: usize) -> Vec<String> {
    (0..n_levels).map(|c| format!("{item_id}:y={c}")).collect()
}

/// Column-binds per-item feature blocks (in block order), optionally appending
/// per-item score-indicator columns so final scores are an exact function of
/// the features.
pub fn build_feature_matrix(
    blocks: &[ItemFeatures],
    responses: Option<&ResponseMatrix>,
    augment: bool,
    persons: &[String],
) -> Result<FeatureMatrix> {
    if blocks.is_empty() {
        return Err(Error::Domain("no feature blocks supplied".into()));
    }
    if augment && responses.is_none() {
        return Err(Error::Domain(
            "score augmentation requires a response matrix".into(),
        ));
    }
    let mut labels = Vec::new();
    let mut width = 0usize;
    let mut layouts = Vec::new(); // (block col offset, indicator offset, n_levels)
    for block in blocks {
        let ind_levels = if augment {
            let rm = responses.unwrap();
            let j = rm.item_index(&block.item_id).ok_or_else(|| {
                Error::Domain(format!(
                    "item {} absent from response matrix",
                    block.item_id
                ))
            })?;
            rm.n_levels[j]
        } else {
            0
        };
        labels.extend(block.labels.iter().cloned());
        let block_off = width;
        width += block.values.ncols();
        let ind_off = width;
        if augment {
            labels.extend(indicator_labels(&block.item_id, ind_levels));
            width += ind_levels;
        }
        layouts.push((block_off, ind_off, ind_levels));
    }

    let mut values = Array2::zeros((persons.len(), width));
    let mut warnings = Vec::new();
    for (block, &(block_off, ind_off, ind_levels)) in blocks.iter().zip(&layouts) {
        let index: std::collections::HashMap<&str, usize> = block
            .person_ids
            .iter()
            .enumerate()
            .map(|(i, p)| (p.as_str(), i))
            .collect();
        let rm_col = responses.and_then(|rm| {
            rm.item_index(&block.item_id).map(|j| (rm, j))
        });
        for (row, person) in persons.iter().enumerate() {
            let src = *index.get(person.as_str()).ok_or_else(|| Error::MissingFeatures {
                person_id: person.clone(),
                item_id: block.item_id.clone(),
            })?;
            for c in 0..block.values.ncols() {
                values[[row, block_off + c]] = block.values[[src, c]];
            }
            if augment {
                let (rm, j) = rm_col.as_ref().expect("validated above");
                let person_row = rm
                    .person_ids
                    .iter()
                    .position(|p| p == person)
                    .ok_or_else(|| Error::MissingFeatures {
                        person_id: person.clone(),
                        item_id: block.item_id.clone(),
                    })?;
                match rm.score(person_row, *j) {
                    Some(y) if (y as usize) < ind_levels => {
                        values[[row, ind_off + y as usize]] = 1.0;
                    }
                    Some(y) => {
                        return Err(Error::InvalidResponses(format!(
                            "score {y} out of range for item {}",
                            block.item_id
                        )))
                    }
                    None => warnings.push(format!(
                        "no score for person {person} on item {}; indicator columns left zero",
                        block.item_id
                    )),
                }
            }
        }
    }
    Ok(FeatureMatrix {
        person_ids: persons.to_vec(),
        item_ids: blocks.iter().map(|b| b.item_id.clone()).collect(),
        labels,
        values,
        warnings,
    })
}
