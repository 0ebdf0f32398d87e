//! Graded Response Model: category probabilities, marginal-MLE item
//! calibration (EM with fixed rectangular quadrature), and latent-trait
//! estimators (MLE, EAP, BME).

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MISSING: i32 = -1;

/// Per-item Graded Response Model parameters.
///
/// `P(Y >= c | theta) = sigmoid(a * theta + d_c)` for score levels
/// `c = 1..=C`, with `d` strictly decreasing so category probabilities stay
/// positive for every theta.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct GrmItemParams {
    pub item_id: String,
    #[serde(rename = "a")]
    pub slope: f64,
    #[serde(rename = "d")]
    pub intercepts: Vec<f64>,
}

impl GrmItemParams {
    pub fn new(item_id: impl Into<String>, slope: f64, intercepts: Vec<f64>) -> Result<Self> {
        let item_id = item_id.into();
        if !slope.is_finite() || slope <= 0.0 {
            return Err(Error::InvalidItemParams {
                item_id,
                reason: format!("slope must be finite and positive, got {slope}"),
            });
        }
        if intercepts.is_empty() {
            return Err(Error::InvalidItemParams {
                item_id,
                reason: "at least one intercept required".into(),
            });
        }
        if intercepts.iter().any(|d| !d.is_finite()) {
            return Err(Error::InvalidItemParams {
                item_id,
                reason: "intercepts must be finite".into(),
            });
        }
        if intercepts.windows(2).any(|w| w[0] <= w[1]) {
            return Err(Error::InvalidItemParams {
                item_id,
                reason: format!("intercepts must be strictly decreasing, got {intercepts:?}"),
            });
        }
        Ok(Self {
            item_id,
            slope,
            intercepts,
        })
    }

    /// Number of score categories `C + 1` (levels `0..=C`).
    pub fn n_categories(&self) -> usize {
        self.intercepts.len() + 1
    }

    /// Highest score level `C`.
    pub fn max_score(&self) -> u32 {
        self.intercepts.len() as u32
    }
}

/// Standard-normal population prior with a fixed rectangular quadrature grid.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PriorSpec {
    pub quad_points: usize,
    pub theta_min: f64,
    pub theta_max: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            quad_points: 61,
            theta_min: -6.0,
            theta_max: 6.0,
        }
    }
}

impl PriorSpec {
    pub fn new(quad_points: usize, theta_min: f64, theta_max: f64) -> Result<Self> {
        if quad_points < 21 {
            return Err(Error::InvalidConfig(format!(
                "quadrature needs at least 21 nodes, got {quad_points}"
            )));
        }
        if !(theta_min < 0.0 && theta_max > 0.0) {
            return Err(Error::InvalidConfig(
                "quadrature range must straddle zero".into(),
            ));
        }
        if (theta_min + theta_max).abs() > 1e-12 {
            return Err(Error::InvalidConfig(
                "quadrature range must be symmetric about zero".into(),
            ));
        }
        Ok(Self {
            quad_points,
            theta_min,
            theta_max,
        })
    }

    /// Equally spaced nodes with renormalized standard-normal weights.
    pub fn nodes(&self) -> (Vec<f64>, Vec<f64>) {
        let q = self.quad_points;
        let step = (self.theta_max - self.theta_min) / (q - 1) as f64;
        let nodes: Vec<f64> = (0..q).map(|i| self.theta_min + step * i as f64).collect();
        let mut weights: Vec<f64> = nodes.iter().map(|&t| (-0.5 * t * t).exp()).collect();
        let total: f64 = weights.iter().sum();
        for w in &mut weights {
            *w /= total;
        }
        (nodes, weights)
    }
}

/// N x J polytomous score matrix; `MISSING` marks absent responses.
#[derive(Debug, Clone)]
pub struct ResponseMatrix {
    pub person_ids: Vec<String>,
    pub item_ids: Vec<String>,
    /// Per-item number of score levels `C_j + 1`.
    pub n_levels: Vec<usize>,
    scores: Array2<i32>,
}

impl ResponseMatrix {
    pub fn new(
        person_ids: Vec<String>,
        item_ids: Vec<String>,
        n_levels: Vec<usize>,
        scores: Array2<i32>,
    ) -> Result<Self> {
        let n = person_ids.len();
        let j = item_ids.len();
        if scores.nrows() != n || scores.ncols() != j {
            return Err(Error::InvalidResponses(format!(
                "score matrix is {}x{}, expected {}x{}",
                scores.nrows(),
                scores.ncols(),
                n,
                j
            )));
        }
        if n_levels.len() != j {
            return Err(Error::InvalidResponses(
                "one category count required per item".into(),
            ));
        }
        let mut sorted_p = person_ids.clone();
        sorted_p.sort_unstable();
        if sorted_p.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidResponses("duplicate person ids".into()));
        }
        let mut sorted_i = item_ids.clone();
        sorted_i.sort_unstable();
        if sorted_i.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidResponses("duplicate item ids".into()));
        }
        for (jx, levels) in n_levels.iter().enumerate() {
            if *levels < 2 {
                return Err(Error::InvalidResponses(format!(
                    "item {} declares {} levels; need at least 2",
                    item_ids[jx], levels
                )));
            }
            for (ix, &y) in scores.column(jx).iter().enumerate() {
                if y != MISSING && !(0..*levels as i32).contains(&y) {
                    return Err(Error::InvalidResponses(format!(
                        "score {} for person {} on item {} outside 0..={}",
                        y,
                        person_ids[ix],
                        item_ids[jx],
                        levels - 1
                    )));
                }
            }
        }
        Ok(Self {
            person_ids,
            item_ids,
            n_levels,
            scores,
        })
    }

    pub fn n_persons(&self) -> usize {
        self.person_ids.len()
    }

    pub fn n_items(&self) -> usize {
        self.item_ids.len()
    }

    pub fn score(&self, person: usize, item: usize) -> Option<u32> {
        let y = self.scores[[person, item]];
        (y != MISSING).then_some(y as u32)
    }

    pub fn scores(&self) -> &Array2<i32> {
        &self.scores
    }

    pub fn item_index(&self, item_id: &str) -> Option<usize> {
        self.item_ids.iter().position(|id| id == item_id)
    }

    /// Row restricted to the given item columns, aligned with `items`.
    pub fn row_on_items(&self, person: usize, items: &[usize]) -> Vec<Option<u32>> {
        items.iter().map(|&j| self.score(person, j)).collect()
    }

    /// Keeps the given person rows (by index), preserving order.
    pub fn subset_persons(&self, keep: &[usize]) -> ResponseMatrix {
        let mut scores = Array2::from_elem((keep.len(), self.n_items()), MISSING);
        for (r, &i) in keep.iter().enumerate() {
            scores.row_mut(r).assign(&self.scores.row(i));
        }
        ResponseMatrix {
            person_ids: keep.iter().map(|&i| self.person_ids[i].clone()).collect(),
            item_ids: self.item_ids.clone(),
            n_levels: self.n_levels.clone(),
            scores,
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Category probabilities `(P(Y=0), ..., P(Y=C))` at a given theta.
pub fn grm_category_probs(theta: f64, params: &GrmItemParams) -> Result<Vec<f64>> {
    if !theta.is_finite() {
        return Err(Error::Domain(format!("non-finite theta: {theta}")));
    }
    let c_max = params.intercepts.len();
    let mut probs = Vec::with_capacity(c_max + 1);
    let mut upper = 1.0; // P(Y >= 0)
    for c in 1..=c_max {
        let cum = sigmoid(params.slope * theta + params.intercepts[c - 1]);
        probs.push((upper - cum).max(0.0));
        upper = cum;
    }
    probs.push(upper); // P(Y >= C) - P(Y >= C+1), boundary P(Y >= C+1) = 0
    Ok(probs)
}

/// Log-likelihood of a response pattern at theta; missing entries are skipped.
pub fn pattern_log_likelihood(
    theta: f64,
    scores: &[Option<u32>],
    params: &[GrmItemParams],
) -> Result<f64> {
    if scores.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "pattern vs params".into(),
            expected: params.len(),
            got: scores.len(),
        });
    }
    let mut ll = 0.0;
    for (y, p) in scores.iter().zip(params) {
        if let Some(y) = y {
            let probs = grm_category_probs(theta, p)?;
            ll += probs[*y as usize].max(1e-300).ln();
        }
    }
    Ok(ll)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ThetaMethod {
    Mle,
    Eap,
    Bme,
}

impl std::fmt::Display for ThetaMethod {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ThetaMethod::Mle => write!(f, "MLE"),
            ThetaMethod::Eap => write!(f, "EAP"),
            ThetaMethod::Bme => write!(f, "BME"),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThetaEstimate {
    pub person_id: String,
    pub value: f64,
    pub method: ThetaMethod,
    pub item_set: Vec<String>,
}

/// Golden-section maximization of a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    const INV_PHI: f64 = 0.618_033_988_749_894_8;
    let mut x1 = hi - INV_PHI * (hi - lo);
    let mut x2 = lo + INV_PHI * (hi - lo);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    for _ in 0..100 {
        if hi - lo < 1e-10 {
            break;
        }
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + INV_PHI * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - INV_PHI * (hi - lo);
            f1 = f(x1);
        }
    }
    0.5 * (lo + hi)
}

/// Scan-then-refine maximizer over `[lo, hi]`.
fn maximize_on_interval(f: impl Fn(f64) -> f64 + Copy, lo: f64, hi: f64, scan: usize) -> f64 {
    let step = (hi - lo) / (scan - 1) as f64;
    let mut best = 0usize;
    let mut best_val = f64::NEG_INFINITY;
    for i in 0..scan {
        let v = f(lo + step * i as f64);
        if v > best_val {
            best_val = v;
            best = i;
        }
    }
    let a = lo + step * best.saturating_sub(1) as f64;
    let b = (lo + step * (best + 1) as f64).min(hi);
    golden_max(f, a, b)
}

/// Latent-trait value for one response pattern under pre-calibrated items.
pub fn theta_estimate_value(
    scores: &[Option<u32>],
    params: &[GrmItemParams],
    prior: &PriorSpec,
    method: ThetaMethod,
) -> Result<f64> {
    if scores.iter().all(|y| y.is_none()) {
        return Err(Error::Domain("empty response pattern".into()));
    }
    if scores.len() != params.len() {
        return Err(Error::DimensionMismatch {
            what: "pattern vs params".into(),
            expected: params.len(),
            got: scores.len(),
        });
    }
    match method {
        ThetaMethod::Eap => {
            let (nodes, weights) = prior.nodes();
            let loglik: Vec<f64> = nodes
                .iter()
                .map(|&t| pattern_log_likelihood(t, scores, params))
                .collect::<Result<_>>()?;
            Ok(eap_from_node_loglik(&nodes, &weights, &loglik))
        }
        ThetaMethod::Bme => {
            let obj = |t: f64| {
                -0.5 * t * t + pattern_log_likelihood(t, scores, params).unwrap_or(f64::NEG_INFINITY)
            };
            Ok(maximize_on_interval(
                obj,
                prior.theta_min,
                prior.theta_max,
                prior.quad_points.max(201),
            ))
        }
        ThetaMethod::Mle => {
            let mut all_min = true;
            let mut all_max = true;
            for (y, p) in scores.iter().zip(params) {
                if let Some(y) = y {
                    if *y != 0 {
                        all_min = false;
                    }
                    if *y != p.max_score() {
                        all_max = false;
                    }
                }
            }
            if all_min || all_max {
                return Err(Error::MleDivergence(format!(
                    "likelihood has no interior maximum for an all-{} pattern; use EAP",
                    if all_min { "minimum" } else { "maximum" }
                )));
            }
            let obj =
                |t: f64| pattern_log_likelihood(t, scores, params).unwrap_or(f64::NEG_INFINITY);
            Ok(maximize_on_interval(
                obj,
                prior.theta_min,
                prior.theta_max,
                prior.quad_points.max(201),
            ))
        }
    }
}

/// As `theta_estimate_value`, packaged with identifiers.
pub fn estimate_theta(
    person_id: &str,
    scores: &[Option<u32>],
    params: &[GrmItemParams],
    prior: &PriorSpec,
    method: ThetaMethod,
) -> Result<ThetaEstimate> {
    let value = theta_estimate_value(scores, params, prior, method)?;
    Ok(ThetaEstimate {
        person_id: person_id.to_string(),
        value,
        method,
        item_set: params.iter().map(|p| p.item_id.clone()).collect(),
    })
}

/// Posterior mean over quadrature nodes given per-node log-likelihoods.
pub fn eap_from_node_loglik(nodes: &[f64], weights: &[f64], loglik: &[f64]) -> f64 {
    let mut max = f64::NEG_INFINITY;
    for (w, ll) in weights.iter().zip(loglik) {
        let v = w.ln() + ll;
        if v > max {
            max = v;
        }
    }
    let mut num = 0.0;
    let mut den = 0.0;
    for ((t, w), ll) in nodes.iter().zip(weights).zip(loglik) {
        let p = (w.ln() + ll - max).exp();
        num += t * p;
        den += p;
    }
    num / den
}

/// Per-item, per-person node log-likelihood cache.
///
/// Lets callers form EAP estimates over arbitrary item subsets without
/// re-evaluating the GRM, which the evaluation protocol does heavily.
pub struct NodeLikelihoodTable {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// `loglik[j][[i, q]]` = log P(y_ij | theta_q); zero when missing.
    pub loglik: Vec<Array2<f64>>,
}

impl NodeLikelihoodTable {
    pub fn build(
        responses: &ResponseMatrix,
        params: &[GrmItemParams],
        prior: &PriorSpec,
    ) -> Result<Self> {
        if params.len() != responses.n_items() {
            return Err(Error::DimensionMismatch {
                what: "params vs items".into(),
                expected: responses.n_items(),
                got: params.len(),
            });
        }
        let (nodes, weights) = prior.nodes();
        let q = nodes.len();
        let n = responses.n_persons();
        let mut loglik = Vec::with_capacity(params.len());
        for (j, p) in params.iter().enumerate() {
            // category log-probs per node, computed once
            let cat_ln: Vec<Vec<f64>> = nodes
                .iter()
                .map(|&t| {
                    grm_category_probs(t, p).map(|v| {
                        v.into_iter().map(|x| x.max(1e-300).ln()).collect::<Vec<_>>()
                    })
                })
                .collect::<Result<_>>()?;
            let mut table = Array2::zeros((n, q));
            for i in 0..n {
                if let Some(y) = responses.score(i, j) {
                    for (qi, row) in cat_ln.iter().enumerate() {
                        table[[i, qi]] = row[y as usize];
                    }
                }
            }
            loglik.push(table);
        }
        Ok(Self {
            nodes,
            weights,
            loglik,
        })
    }

    /// EAP for one person over an item subset (column indices).
    pub fn eap(&self, person: usize, items: &[usize]) -> f64 {
        let q = self.nodes.len();
        let mut ll = vec![0.0; q];
        for &j in items {
            let row = self.loglik[j].row(person);
            for (acc, v) in ll.iter_mut().zip(row) {
                *acc += v;
            }
        }
        eap_from_node_loglik(&self.nodes, &self.weights, &ll)
    }

    /// EAP for every person over an item subset.
    pub fn eap_all(&self, items: &[usize]) -> Vec<f64> {
        let n = self.loglik.first().map_or(0, |t| t.nrows());
        (0..n).map(|i| self.eap(i, items)).collect()
    }
}

// ---------------------------------------------------------------------------
// Marginal-MLE calibration (Bock–Aitkin EM)
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct EmConfig {
    pub max_iter: usize,
    /// Convergence threshold on the max absolute change of any (a, d).
    pub tol: f64,
    /// Warn when calibrated on fewer persons than this.
    pub min_sample_warn: usize,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            max_iter: 500,
            tol: 1e-5,
            min_sample_warn: 100,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GrmFit {
    pub params: Vec<GrmItemParams>,
    /// Marginal log-likelihood after each EM iteration.
    pub log_likelihood: Vec<f64>,
    pub converged: bool,
    pub n_iter: usize,
    pub warnings: Vec<String>,
}

/// Internal monotone parameterization: `d_c = d_1 - sum_{k<=c} exp(g_k)`.
#[derive(Clone)]
struct ItemState {
    log_a: f64,
    d1: f64,
    gaps: Vec<f64>,
}

impl ItemState {
    fn intercepts(&self) -> Vec<f64> {
        let mut d = Vec::with_capacity(self.gaps.len() + 1);
        let mut cur = self.d1;
        d.push(cur);
        for g in &self.gaps {
            cur -= g.exp();
            d.push(cur);
        }
        d
    }

    fn to_params(&self, item_id: &str) -> Result<GrmItemParams> {
        GrmItemParams::new(item_id, self.log_a.exp(), self.intercepts())
    }

    fn as_vec(&self) -> Vec<f64> {
        let mut v = vec![self.log_a, self.d1];
        v.extend_from_slice(&self.gaps);
        v
    }

    fn from_vec(v: &[f64]) -> Self {
        Self {
            log_a: v[0],
            d1: v[1],
            gaps: v[2..].to_vec(),
        }
    }
}

/// Expected complete-data log-likelihood for one item given E-step counts
/// `r[[q, c]]`.
fn item_objective(state: &ItemState, nodes: &[f64], r: &Array2<f64>) -> f64 {
    let a = state.log_a.exp();
    let d = state.intercepts();
    let n_cat = d.len() + 1;
    let mut total = 0.0;
    for (q, &t) in nodes.iter().enumerate() {
        let mut upper = 1.0;
        for c in 0..n_cat {
            let next = if c < d.len() {
                sigmoid(a * t + d[c])
            } else {
                0.0
            };
            let p = (upper - next).max(1e-300);
            let cnt = r[[q, c]];
            if cnt > 0.0 {
                total += cnt * p.ln();
            }
            upper = next;
        }
    }
    total
}

/// Analytic gradient of `item_objective` in (log_a, d1, gaps) coordinates.
fn item_gradient(state: &ItemState, nodes: &[f64], r: &Array2<f64>) -> Vec<f64> {
    let a = state.log_a.exp();
    let d = state.intercepts();
    let c_max = d.len();
    let mut grad_a = 0.0;
    let mut grad_d = vec![0.0; c_max];
    for (q, &t) in nodes.iter().enumerate() {
        // psi[c] = P(Y >= c), psi'[c] = psi (1 - psi); boundaries have zero slope
        let mut psi = vec![0.0; c_max + 2];
        let mut dpsi = vec![0.0; c_max + 2];
        psi[0] = 1.0;
        for c in 1..=c_max {
            let s = sigmoid(a * t + d[c - 1]);
            psi[c] = s;
            dpsi[c] = s * (1.0 - s);
        }
        for c in 0..=c_max {
            let p = (psi[c] - psi[c + 1]).max(1e-300);
            let cnt = r[[q, c]];
            if cnt == 0.0 {
                continue;
            }
            let w = cnt / p;
            grad_a += w * t * (dpsi[c] - dpsi[c + 1]);
            if c >= 1 {
                grad_d[c - 1] += w * dpsi[c];
            }
            if c < c_max {
                grad_d[c] -= w * dpsi[c + 1];
            }
        }
    }
    // chain rule into the unconstrained coordinates
    let mut out = Vec::with_capacity(2 + state.gaps.len());
    out.push(a * grad_a);
    out.push(grad_d.iter().sum());
    for (m, g) in state.gaps.iter().enumerate() {
        let tail: f64 = grad_d[(m + 1)..].iter().sum();
        out.push(-g.exp() * tail);
    }
    out
}

/// One damped-Newton ascent pass for an item; never decreases the objective.
fn mstep_item(state: &ItemState, nodes: &[f64], r: &Array2<f64>) -> ItemState {
    let mut cur = state.clone();
    let mut cur_obj = item_objective(&cur, nodes, r);
    let p = cur.as_vec().len();
    for _ in 0..5 {
        let x = cur.as_vec();
        let grad = item_gradient(&cur, nodes, r);
        let gnorm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
        if gnorm < 1e-10 {
            break;
        }
        // Hessian by central differences of the analytic gradient
        let mut hess = nalgebra::DMatrix::zeros(p, p);
        for k in 0..p {
            let h = 1e-5 * (1.0 + x[k].abs());
            let mut xp = x.clone();
            xp[k] += h;
            let gp = item_gradient(&ItemState::from_vec(&xp), nodes, r);
            let mut xm = x.clone();
            xm[k] -= h;
            let gm = item_gradient(&ItemState::from_vec(&xm), nodes, r);
            for l in 0..p {
                hess[(l, k)] = (gp[l] - gm[l]) / (2.0 * h);
            }
        }
        // symmetrize, then try the Newton direction
        let hess = (&hess + hess.transpose()) * 0.5;
        let g = nalgebra::DVector::from_column_slice(&grad);
        let newton = (-&hess).cholesky().map(|ch| ch.solve(&g));
        let mut dir: Vec<f64> = match newton {
            Some(step) => step.iter().copied().collect(),
            None => grad.iter().map(|g| g / gnorm).collect(),
        };
        if dir.iter().zip(&grad).map(|(d, g)| d * g).sum::<f64>() <= 0.0 {
            dir = grad.iter().map(|g| g / gnorm).collect();
        }
        let mut scale = 1.0;
        let mut improved = false;
        for _ in 0..30 {
            let cand: Vec<f64> = x.iter().zip(&dir).map(|(xi, di)| xi + scale * di).collect();
            if cand.iter().all(|v| v.is_finite()) {
                let cand_state = ItemState::from_vec(&cand);
                let obj = item_objective(&cand_state, nodes, r);
                if obj > cur_obj {
                    cur = cand_state;
                    cur_obj = obj;
                    improved = true;
                    break;
                }
            }
            scale *= 0.5;
        }
        if !improved {
            break;
        }
    }
    cur
}

fn init_item_state(responses: &ResponseMatrix, item: usize) -> ItemState {
    let levels = responses.n_levels[item];
    let c_max = levels - 1;
    let mut counts = vec![0.0_f64; levels];
    let mut n_obs = 0.0_f64;
    for i in 0..responses.n_persons() {
        if let Some(y) = responses.score(i, item) {
            counts[y as usize] += 1.0;
            n_obs += 1.0;
        }
    }
    // empirical P(Y >= c) -> logit start values
    let mut d = Vec::with_capacity(c_max);
    let mut tail = n_obs;
    for c in 1..=c_max {
        tail -= counts[c - 1];
        let p = (tail / n_obs).clamp(0.02, 0.98);
        d.push((p / (1.0 - p)).ln());
    }
    // enforce strict decrease before converting to gap form
    for c in 1..d.len() {
        if d[c] >= d[c - 1] - 1e-3 {
            d[c] = d[c - 1] - 1e-3;
        }
    }
    let gaps = d.windows(2).map(|w| (w[0] - w[1]).ln()).collect();
    ItemState {
        log_a: 0.0,
        d1: d[0],
        gaps,
    }
}

/// Fits the GRM to all items by marginal maximum likelihood.
///
/// Bock–Aitkin EM: E-step posteriors on a fixed rectangular quadrature grid,
/// M-step per item by damped Newton in a parameterization that keeps slopes
/// positive and intercepts strictly decreasing. The marginal log-likelihood
/// trace is nondecreasing.
pub fn fit_grm(responses: &ResponseMatrix, prior: &PriorSpec, config: &EmConfig) -> Result<GrmFit> {
    let n = responses.n_persons();
    let n_items = responses.n_items();
    if n == 0 || n_items == 0 {
        return Err(Error::InvalidResponses("empty response matrix".into()));
    }
    for j in 0..n_items {
        let mut seen = std::collections::BTreeSet::new();
        for i in 0..n {
            if let Some(y) = responses.score(i, j) {
                seen.insert(y);
            }
        }
        if seen.len() < 2 {
            return Err(Error::ItemNotCalibratable {
                item_id: responses.item_ids[j].clone(),
                reason: format!("only {} observed score category(ies)", seen.len()),
            });
        }
    }
    let mut warnings = Vec::new();
    if n < config.min_sample_warn {
        warnings.push(format!(
            "calibration sample n={} is below the recommended {}",
            n, config.min_sample_warn
        ));
    }

    let (nodes, weights) = prior.nodes();
    let q = nodes.len();
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut states: Vec<ItemState> = (0..n_items)
        .map(|j| init_item_state(responses, j))
        .collect();

    let mut ll_trace = Vec::new();
    let mut converged = false;
    let mut n_iter = 0;

    for _iter in 0..config.max_iter {
        n_iter += 1;
        let params: Vec<GrmItemParams> = states
            .iter()
            .zip(&responses.item_ids)
            .map(|(s, id)| s.to_params(id))
            .collect::<Result<_>>()?;

        // E-step: per-person node posteriors
        let cat_ln: Vec<Vec<Vec<f64>>> = params
            .iter()
            .map(|p| {
                nodes
                    .iter()
                    .map(|&t| {
                        grm_category_probs(t, p)
                            .map(|v| v.into_iter().map(|x| x.max(1e-300).ln()).collect())
                    })
                    .collect::<Result<_>>()
            })
            .collect::<Result<_>>()?;

        let per_person: Vec<(Vec<f64>, f64)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut log_joint = log_w.clone();
                for (j, item_ln) in cat_ln.iter().enumerate() {
                    if let Some(y) = responses.score(i, j) {
                        for (qi, lj) in log_joint.iter_mut().enumerate() {
                            *lj += item_ln[qi][y as usize];
                        }
                    }
                }
                let max = log_joint.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                let mut post: Vec<f64> = log_joint.iter().map(|&v| (v - max).exp()).collect();
                for p in &post {
                    sum += p;
                }
                for p in &mut post {
                    *p /= sum;
                }
                (post, max + sum.ln())
            })
            .collect();

        let marginal_ll: f64 = per_person.iter().map(|(_, m)| m).sum();
        ll_trace.push(marginal_ll);

        // expected category counts per item and node
        let mut counts: Vec<Array2<f64>> = responses
            .n_levels
            .iter()
            .map(|&lv| Array2::zeros((q, lv)))
            .collect();
        for (i, (post, _)) in per_person.iter().enumerate() {
            for (j, cnt) in counts.iter_mut().enumerate() {
                if let Some(y) = responses.score(i, j) {
                    for (qi, &p) in post.iter().enumerate() {
                        cnt[[qi, y as usize]] += p;
                    }
                }
            }
        }

        // M-step: items are independent
        let new_states: Vec<ItemState> = states
            .par_iter()
            .zip(counts.par_iter())
            .map(|(s, r)| mstep_item(s, &nodes, r))
            .collect();

        let mut max_change: f64 = 0.0;
        for (old, new) in states.iter().zip(&new_states) {
            let da = (old.log_a.exp() - new.log_a.exp()).abs();
            max_change = max_change.max(da);
            for (od, nd) in old.intercepts().iter().zip(new.intercepts()) {
                max_change = max_change.max((od - nd).abs());
            }
        }
        states = new_states;
        if max_change < config.tol {
            converged = true;
            break;
        }
    }

    let params = states
        .iter()
        .zip(&responses.item_ids)
        .map(|(s, id)| s.to_params(id))
        .collect::<Result<Vec<_>>>()?;
    Ok(GrmFit {
        params,
        log_likelihood: ll_trace,
        converged,
        n_iter,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn binary_item(a: f64, d: f64) -> GrmItemParams {
        GrmItemParams::new("it", a, vec![d]).unwrap()
    }

    #[test]
    fn logistic_symmetry_at_zero() {
        let probs = grm_category_probs(0.0, &binary_item(1.0, 0.0)).unwrap();
        assert_abs_diff_eq!(probs[0], 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(probs[1], 0.5, epsilon = 1e-15);
    }

    #[test]
    fn three_category_probs_match_direct_evaluation() {
        let p = GrmItemParams::new("it", 1.0, vec![1.0, -1.0]).unwrap();
        let probs = grm_category_probs(0.0, &p).unwrap();
        let s = |z: f64| 1.0 / (1.0 + (-z).exp());
        assert_abs_diff_eq!(probs[0], 1.0 - s(1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(probs[1], s(1.0) - s(-1.0), epsilon = 1e-12);
        assert_abs_diff_eq!(probs[2], s(-1.0), epsilon = 1e-12);
        // four-decimal reading: (0.2689, 0.4622, 0.2689)
        assert!((probs[0] - 0.2689).abs() < 1e-4);
        assert!((probs[1] - 0.4622).abs() < 1e-4);
        assert!((probs[2] - 0.2689).abs() < 1e-4);
    }

    proptest::proptest! {
        #[test]
        fn probs_form_a_simplex(
            theta in -6.0f64..6.0,
            slope in 0.2f64..2.5,
            first in -2.5f64..2.5,
            gaps in proptest::collection::vec(0.1f64..1.5, 0..3),
        ) {
            let mut d = vec![first];
            for g in gaps {
                d.push(d.last().unwrap() - g);
            }
            let p = GrmItemParams::new("it", slope, d).unwrap();
            let probs = grm_category_probs(theta, &p).unwrap();
            proptest::prop_assert!(probs.iter().all(|&x| x >= 0.0));
            proptest::prop_assert!((probs.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn cumulative_prob_increases_in_theta() {
        let p = GrmItemParams::new("it", 1.3, vec![0.8, -0.6]).unwrap();
        let grid: Vec<f64> = (0..61).map(|i| -6.0 + 0.2 * i as f64).collect();
        for c in 1..=2usize {
            let mut last = f64::NEG_INFINITY;
            for &t in &grid {
                let probs = grm_category_probs(t, &p).unwrap();
                let cum: f64 = probs[c..].iter().sum();
                assert!(cum > last, "P(Y>={c}) not increasing at theta={t}");
                last = cum;
            }
        }
    }

    #[test]
    fn rejects_bad_params() {
        assert!(GrmItemParams::new("x", -1.0, vec![0.0]).is_err());
        assert!(GrmItemParams::new("x", 1.0, vec![-1.0, 0.0]).is_err());
        assert!(GrmItemParams::new("x", 1.0, vec![]).is_err());
        assert!(grm_category_probs(f64::NAN, &binary_item(1.0, 0.0)).is_err());
    }

    #[test]
    fn eap_symmetry_for_binary_item() {
        let prior = PriorSpec::default();
        let params = vec![binary_item(1.0, 0.0)];
        let up = theta_estimate_value(&[Some(1)], &params, &prior, ThetaMethod::Eap).unwrap();
        let down = theta_estimate_value(&[Some(0)], &params, &prior, ThetaMethod::Eap).unwrap();
        assert!(up > 0.0);
        assert_abs_diff_eq!(up, -down, epsilon = 1e-12);
    }

    #[test]
    fn eap_matches_dense_grid_oracle() {
        let prior = PriorSpec::default();
        let params = vec![binary_item(1.0, 0.0)];
        let eap = theta_estimate_value(&[Some(1)], &params, &prior, ThetaMethod::Eap).unwrap();
        // brute-force posterior mean on a 1e5-point grid over the same range
        let m = 100_000usize;
        let step = 12.0 / (m - 1) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for i in 0..m {
            let t = -6.0 + step * i as f64;
            let w = (-0.5 * t * t).exp();
            let l = grm_category_probs(t, &params[0]).unwrap()[1];
            num += t * w * l;
            den += w * l;
        }
        assert!((eap - num / den).abs() < 1e-4);
    }

    #[test]
    fn mle_divergence_on_extreme_patterns() {
        let prior = PriorSpec::default();
        let params = vec![
            GrmItemParams::new("a", 1.2, vec![0.5]).unwrap(),
            GrmItemParams::new("b", 0.9, vec![1.0, -1.0]).unwrap(),
        ];
        let err =
            theta_estimate_value(&[Some(1), Some(2)], &params, &prior, ThetaMethod::Mle).unwrap_err();
        assert!(matches!(err, Error::MleDivergence(_)));
        let err =
            theta_estimate_value(&[Some(0), Some(0)], &params, &prior, ThetaMethod::Mle).unwrap_err();
        assert!(matches!(err, Error::MleDivergence(_)));
        assert!(
            theta_estimate_value(&[Some(1), Some(0)], &params, &prior, ThetaMethod::Mle).is_ok()
        );
    }

    #[test]
    fn empty_pattern_is_rejected() {
        let prior = PriorSpec::default();
        let params = vec![binary_item(1.0, 0.0)];
        let err = theta_estimate_value(&[None], &params, &prior, ThetaMethod::Eap).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
    }

    #[test]
    fn eap_shrinks_toward_zero_relative_to_mle() {
        use rand::Rng;
        let prior = PriorSpec::default();
        let params = vec![
            GrmItemParams::new("a", 1.2, vec![0.7]).unwrap(),
            GrmItemParams::new("b", 0.9, vec![1.4, -0.2]).unwrap(),
            GrmItemParams::new("c", 1.6, vec![0.9, 0.1, -1.1]).unwrap(),
        ];
        let mut rng = crate::seed::child_rng(11, "shrink-test");
        let mut tested = 0;
        while tested < 40 {
            let pattern: Vec<Option<u32>> = params
                .iter()
                .map(|p| Some(rng.gen_range(0..=p.max_score())))
                .collect();
            match theta_estimate_value(&pattern, &params, &prior, ThetaMethod::Mle) {
                Ok(mle) => {
                    let eap =
                        theta_estimate_value(&pattern, &params, &prior, ThetaMethod::Eap).unwrap();
                    assert!(
                        eap.abs() <= mle.abs() + 1e-8,
                        "EAP {eap} further from 0 than MLE {mle} for {pattern:?}"
                    );
                    tested += 1;
                }
                Err(_) => continue, // extreme pattern; MLE undefined
            }
        }
    }

    #[test]
    fn quadrature_refinement_changes_eap_below_tolerance() {
        let params = vec![
            GrmItemParams::new("a", 1.2, vec![0.7]).unwrap(),
            GrmItemParams::new("b", 0.9, vec![1.4, -0.2]).unwrap(),
        ];
        let coarse = PriorSpec::new(61, -6.0, 6.0).unwrap();
        let fine = PriorSpec::new(121, -6.0, 6.0).unwrap();
        for pattern in [[Some(1), Some(2)], [Some(0), Some(1)], [Some(1), Some(0)]] {
            let a = theta_estimate_value(&pattern, &params, &coarse, ThetaMethod::Eap).unwrap();
            let b = theta_estimate_value(&pattern, &params, &fine, ThetaMethod::Eap).unwrap();
            assert!((a - b).abs() < 1e-6, "EAP moved {} on refinement", (a - b).abs());
        }
    }

    #[test]
    fn bme_is_posterior_mode() {
        let prior = PriorSpec::default();
        let params = vec![binary_item(1.4, 0.3)];
        let mode = theta_estimate_value(&[Some(1)], &params, &prior, ThetaMethod::Bme).unwrap();
        let post = |t: f64| {
            -0.5 * t * t + pattern_log_likelihood(t, &[Some(1)], &params).unwrap()
        };
        for dt in [-1e-3, 1e-3] {
            assert!(post(mode) >= post(mode + dt) - 1e-12);
        }
    }

    #[test]
    fn response_matrix_validates_scores() {
        let res = ResponseMatrix::new(
            vec!["p1".into(), "p2".into()],
            vec!["i1".into()],
            vec![2],
            ndarray::arr2(&[[0], [2]]),
        );
        assert!(res.is_err());
    }

    #[test]
    fn prior_spec_requires_a_symmetric_range() {
        assert!(PriorSpec::new(61, -6.0, 6.0).is_ok());
        assert!(PriorSpec::new(11, -6.0, 6.0).is_err());
        assert!(PriorSpec::new(61, -4.0, 6.0).is_err());
        assert!(PriorSpec::new(61, 1.0, 6.0).is_err());
        let (nodes, weights) = PriorSpec::default().nodes();
        assert_eq!(nodes.len(), 61);
        assert!((weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn estimate_theta_carries_identifiers() {
        let prior = PriorSpec::default();
        let params = vec![binary_item(1.0, 0.4)];
        let est = estimate_theta("p7", &[Some(1)], &params, &prior, ThetaMethod::Eap).unwrap();
        assert_eq!(est.person_id, "p7");
        assert_eq!(est.method, ThetaMethod::Eap);
        assert_eq!(est.item_set, vec!["it".to_string()]);
        assert!(est.value.is_finite());
    }

    #[test]
    fn duplicating_every_person_leaves_calibration_unchanged() {
        use rand::Rng;
        let mut rng = crate::seed::child_rng(41, "dup-calibration");
        let n = 150;
        let truth = [
            GrmItemParams::new("i1", 1.1, vec![0.6]).unwrap(),
            GrmItemParams::new("i2", 1.5, vec![1.1, -0.8]).unwrap(),
        ];
        let mut scores = Array2::zeros((n, 2));
        for i in 0..n {
            let theta: f64 = rng.gen_range(-2.0..2.0);
            for (j, p) in truth.iter().enumerate() {
                let probs = grm_category_probs(theta, p).unwrap();
                let u: f64 = rng.gen();
                let mut acc = 0.0;
                let mut y = probs.len() - 1;
                for (c, pr) in probs.iter().enumerate() {
                    acc += pr;
                    if u < acc {
                        y = c;
                        break;
                    }
                }
                scores[[i, j]] = y as i32;
            }
        }
        let ids: Vec<String> = (0..n).map(|i| format!("p{i}")).collect();
        let rm = ResponseMatrix::new(
            ids.clone(),
            vec!["i1".into(), "i2".into()],
            vec![2, 3],
            scores.clone(),
        )
        .unwrap();
        let mut doubled = Array2::zeros((2 * n, 2));
        for i in 0..n {
            doubled.row_mut(i).assign(&scores.row(i));
            doubled.row_mut(n + i).assign(&scores.row(i));
        }
        let dup_ids: Vec<String> = ids
            .iter()
            .cloned()
            .chain((0..n).map(|i| format!("q{i}")))
            .collect();
        let dup_rm = ResponseMatrix::new(
            dup_ids,
            vec!["i1".into(), "i2".into()],
            vec![2, 3],
            doubled,
        )
        .unwrap();
        let prior = PriorSpec::default();
        let config = EmConfig::default();
        let fit = fit_grm(&rm, &prior, &config).unwrap();
        let fit2 = fit_grm(&dup_rm, &prior, &config).unwrap();
        for (a, b) in fit.params.iter().zip(&fit2.params) {
            assert!((a.slope - b.slope).abs() < 1e-6, "{} vs {}", a.slope, b.slope);
            for (da, db) in a.intercepts.iter().zip(&b.intercepts) {
                assert!((da - db).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn constant_item_fails_calibration_with_its_name() {
        let scores = ndarray::arr2(&[[1, 0], [1, 1], [1, 0], [1, 1]]);
        let rm = ResponseMatrix::new(
            (0..4).map(|i| format!("p{i}")).collect(),
            vec!["flat".into(), "ok".into()],
            vec![2, 2],
            scores,
        )
        .unwrap();
        let err = fit_grm(&rm, &PriorSpec::default(), &EmConfig::default()).unwrap_err();
        match err {
            Error::ItemNotCalibratable { item_id, .. } => assert_eq!(item_id, "flat"),
            other => panic!("unexpected error {other}"),
        }
    }
}
