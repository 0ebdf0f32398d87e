//! Synthetic data generation and exact finite-model verification.
//!
//! `simulate_dataset` draws latent traits from a standard normal, samples
//! polytomous responses from the Graded Response Model, emits action
//! sequences from a score-conditioned grammar whose deterministic rubric
//! reproduces the drawn score exactly, and produces numeric per-item process
//! features under a configurable feature model.
//!
//! `ToyModel` carries a small discrete latent-trait model in exact rational
//! arithmetic: a prior over a few trait values, an exponential-family
//! conditional for the feature summary (integer statistic, rational
//! likelihood-ratio base), a deterministic score map so the response-based
//! estimator is measurable with respect to the features, and an independent
//! second response block. The variance-reduction identity, the monotone
//! sufficiency reduction, and the covariance positivity lemma are all checked
//! by exact enumeration over the joint support.

use ndarray::Array2;
use num::{BigInt, BigRational, One, Signed, ToPrimitive, Zero};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::irt::{GrmItemParams, ResponseMatrix};
use crate::mds::ItemFeatures;
use crate::seqdiss::ActionSequence;

// ---------------------------------------------------------------------------
// Dataset simulation
// ---------------------------------------------------------------------------

/// How numeric per-item process features relate to the latent trait.
#[derive(Debug, Clone)]
pub enum FeatureModel {
    /// Every dimension is `informativeness * theta + Normal(0, noise_sd^2)`.
    LinearGaussian {
        informativeness: f64,
        noise_sd: f64,
        dims: usize,
    },
    /// Features are exactly the one-hot encoding of the final score.
    ScoreOnly,
    /// Features carry no trait information at all.
    NoiseOnly { noise_sd: f64, dims: usize },
}

/// Score-conditioned sequence grammar. A generated sequence walks the solved
/// sub-goals `Step_1 .. Step_c` in order, with detour tokens interleaved;
/// detours are more likely at low trait values.
#[derive(Debug, Clone)]
pub struct GrammarConfig {
    pub detour_vocab: usize,
    /// Intercept of the per-slot detour probability (on the logit scale).
    pub detour_base: f64,
    /// Trait coefficient; positive values make low-trait persons wander more.
    pub detour_theta_slope: f64,
    pub max_detours_per_slot: usize,
}

impl Default for GrammarConfig {
    fn default() -> Self {
        Self {
            detour_vocab: 5,
            detour_base: -0.3,
            detour_theta_slope: 0.9,
            max_detours_per_slot: 3,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub n_persons: usize,
    pub n_items: usize,
    pub seed: u64,
    pub slope_range: (f64, f64),
    pub intercept_range: (f64, f64),
    /// Score levels per item; `None` cycles through a mixed default.
    pub n_levels: Option<Vec<usize>>,
    pub feature_model: FeatureModel,
    pub grammar: GrammarConfig,
}

impl SimConfig {
    pub fn new(n_persons: usize, n_items: usize, seed: u64) -> Self {
        Self {
            n_persons,
            n_items,
            seed,
            slope_range: (0.8, 2.0),
            intercept_range: (-2.0, 2.0),
            n_levels: None,
            feature_model: FeatureModel::LinearGaussian {
                informativeness: 1.0,
                noise_sd: 0.8,
                dims: 10,
            },
            grammar: GrammarConfig::default(),
        }
    }

    pub fn levels(&self) -> Vec<usize> {
        match &self.n_levels {
            Some(v) => v.clone(),
            None => {
                let cycle = [2usize, 4, 3, 2];
                (0..self.n_items).map(|j| cycle[j % cycle.len()]).collect()
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_persons == 0 || self.n_items == 0 {
            return Err(Error::InvalidConfig("need persons and items".into()));
        }
        if !(self.slope_range.0 > 0.0 && self.slope_range.0 <= self.slope_range.1) {
            return Err(Error::InvalidConfig("bad slope range".into()));
        }
        if self.intercept_range.0 >= self.intercept_range.1 {
            return Err(Error::InvalidConfig("bad intercept range".into()));
        }
        let levels = self.levels();
        if levels.len() != self.n_items {
            return Err(Error::InvalidConfig(
                "one category count required per item".into(),
            ));
        }
        if levels.iter().any(|&l| l < 2) {
            return Err(Error::InvalidConfig("items need at least 2 levels".into()));
        }
        if self.grammar.detour_vocab == 0 {
            // a zero score would collapse to the omission pattern
            return Err(Error::InvalidConfig(
                "grammar cannot realize score 0 without detour tokens".into(),
            ));
        }
        match &self.feature_model {
            FeatureModel::LinearGaussian {
                informativeness,
                noise_sd,
                dims,
            } => {
                if *informativeness < 0.0 || *noise_sd <= 0.0 || *dims == 0 {
                    return Err(Error::InvalidConfig(
                        "bad linear-gaussian feature model".into(),
                    ));
                }
            }
            FeatureModel::NoiseOnly { noise_sd, dims } => {
                if *noise_sd <= 0.0 || *dims == 0 {
                    return Err(Error::InvalidConfig("bad noise feature model".into()));
                }
            }
            FeatureModel::ScoreOnly => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SimulatedData {
    pub responses: ResponseMatrix,
    /// Row-major person x item order.
    pub sequences: Vec<ActionSequence>,
    /// One numeric block per item, aligned to the person order.
    pub features: Vec<ItemFeatures>,
    pub true_theta: Vec<f64>,
    pub true_params: Vec<GrmItemParams>,
}

/// The deterministic scoring rubric: the score is the highest solved
/// sub-goal `Step_k` present in the sequence.
pub fn sequence_rubric_score(seq: &ActionSequence) -> u32 {
    seq.actions
        .iter()
        .filter_map(|a| a.strip_prefix("Step_").and_then(|s| s.parse::<u32>().ok()))
        .max()
        .unwrap_or(0)
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Draws a full synthetic dataset; byte-reproducible for a fixed config.
pub fn simulate_dataset(config: &SimConfig) -> Result<SimulatedData> {
    config.validate()?;
    let n = config.n_persons;
    let j_items = config.n_items;
    let levels = config.levels();
    let width = (n as f64).log10().ceil().max(1.0) as usize + 1;
    let person_ids: Vec<String> = (0..n).map(|i| format!("p{i:0width$}")).collect();
    let item_ids: Vec<String> = (0..j_items).map(|j| format!("item{:02}", j + 1)).collect();

    // true item parameters
    let mut item_rng = crate::seed::child_rng(config.seed, "sim-items");
    let mut params = Vec::with_capacity(j_items);
    for (j, id) in item_ids.iter().enumerate() {
        let a = item_rng.gen_range(config.slope_range.0..=config.slope_range.1);
        let c_max = levels[j] - 1;
        let mut d: Vec<f64> = (0..c_max)
            .map(|_| item_rng.gen_range(config.intercept_range.0..=config.intercept_range.1))
            .collect();
        d.sort_by(|x, y| y.partial_cmp(x).unwrap());
        for c in 1..d.len() {
            if d[c] > d[c - 1] - 0.3 {
                d[c] = d[c - 1] - 0.3;
            }
        }
        params.push(GrmItemParams::new(id.clone(), a, d)?);
    }

    // latent traits
    let mut theta_rng = crate::seed::child_rng(config.seed, "sim-theta");
    let true_theta: Vec<f64> = (0..n)
        .map(|_| StandardNormal.sample(&mut theta_rng))
        .collect();

    // responses
    let mut score_rng = crate::seed::child_rng(config.seed, "sim-scores");
    let mut scores = Array2::from_elem((n, j_items), 0i32);
    for i in 0..n {
        for (j, p) in params.iter().enumerate() {
            let probs = crate::irt::grm_category_probs(true_theta[i], p)?;
            let u: f64 = score_rng.gen();
            let mut acc = 0.0;
            let mut drawn = probs.len() - 1;
            for (c, pr) in probs.iter().enumerate() {
                acc += pr;
                if u < acc {
                    drawn = c;
                    break;
                }
            }
            scores[[i, j]] = drawn as i32;
        }
    }
    let responses = ResponseMatrix::new(
        person_ids.clone(),
        item_ids.clone(),
        levels.clone(),
        scores,
    )?;

    // sequences realizing the rubric
    let mut seq_rng = crate::seed::child_rng(config.seed, "sim-seqs");
    let g = &config.grammar;
    let mut sequences = Vec::with_capacity(n * j_items);
    for i in 0..n {
        let p_detour = sigmoid(g.detour_base - g.detour_theta_slope * true_theta[i]);
        for (j, item_id) in item_ids.iter().enumerate() {
            let score = responses.score(i, j).expect("simulated scores are complete");
            let mut actions = vec!["Start".to_string()];
            let push_detours =
                |actions: &mut Vec<String>, rng: &mut rand_chacha::ChaCha12Rng, min: usize| {
                    let mut count = 0;
                    while count < min
                        || (count < g.max_detours_per_slot && rng.gen::<f64>() < p_detour)
                    {
                        let tok = rng.gen_range(1..=g.detour_vocab);
                        actions.push(format!("Detour_{tok}"));
                        count += 1;
                    }
                };
            if score == 0 {
                // tried something, achieved nothing: never the bare omission pattern
                push_detours(&mut actions, &mut seq_rng, 1);
            } else {
                for k in 1..=score {
                    push_detours(&mut actions, &mut seq_rng, 0);
                    actions.push(format!("Step_{k}"));
                }
                push_detours(&mut actions, &mut seq_rng, 0);
            }
            actions.push("Next".to_string());
            actions.push("Next_OK".to_string());
            sequences.push(ActionSequence::new(
                person_ids[i].clone(),
                item_id.clone(),
                actions,
            )?);
        }
    }

    // numeric process features
    let mut feat_rng = crate::seed::child_rng(config.seed, "sim-features");
    let mut features = Vec::with_capacity(j_items);
    for (j, item_id) in item_ids.iter().enumerate() {
        let block = match &config.feature_model {
            FeatureModel::LinearGaussian {
                informativeness,
                noise_sd,
                dims,
            } => {
                let mut values = Array2::zeros((n, *dims));
                for i in 0..n {
                    for k in 0..*dims {
                        let eps: f64 = StandardNormal.sample(&mut feat_rng);
                        values[[i, k]] = informativeness * true_theta[i] + noise_sd * eps;
                    }
                }
                values
            }
            FeatureModel::ScoreOnly => {
                let mut values = Array2::zeros((n, levels[j]));
                for i in 0..n {
                    let y = responses.score(i, j).unwrap() as usize;
                    values[[i, y]] = 1.0;
                }
                values
            }
            FeatureModel::NoiseOnly { noise_sd, dims } => {
                let mut values = Array2::zeros((n, *dims));
                for v in values.iter_mut() {
                    let eps: f64 = StandardNormal.sample(&mut feat_rng);
                    *v = noise_sd * eps;
                }
                values
            }
        };
        features.push(ItemFeatures::new(item_id.clone(), person_ids.clone(), block)?);
    }

    Ok(SimulatedData {
        responses,
        sequences,
        features,
        true_theta,
        true_params: params,
    })
}

// ---------------------------------------------------------------------------
// Exact discrete toy model
// ---------------------------------------------------------------------------

pub fn rat(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

fn rat_pow(base: &BigRational, exp: u32) -> BigRational {
    let mut acc = BigRational::one();
    for _ in 0..exp {
        acc *= base;
    }
    acc
}

fn is_simplex(v: &[BigRational]) -> bool {
    v.iter().all(|p| !p.is_negative()) && v.iter().sum::<BigRational>() == BigRational::one()
}

fn strictly_monotone(v: &[BigRational]) -> bool {
    v.len() < 2 || v.windows(2).all(|w| w[0] < w[1]) || v.windows(2).all(|w| w[0] > w[1])
}

/// Finite latent-trait model with exact rational probabilities.
///
/// The feature summary `X` takes one of a few support points; its conditional
/// given each trait value follows `P(x_k | theta_s) ∝ h_k * rho_s^{t_k}`,
/// an exponential family with integer statistic `t` and monotone natural
/// parameter whenever `rho` is monotone. The first response block's estimator
/// is a deterministic function of `X` (scores are recoverable from features);
/// the second block is conditionally independent of `X` given the trait.
#[derive(Debug, Clone)]
pub struct ToyModel {
    pub theta: Vec<BigRational>,
    pub prior: Vec<BigRational>,
    /// `x_given_theta[s][k] = P(X = x_k | theta_s)`.
    pub x_given_theta: Vec<Vec<BigRational>>,
    /// Sufficient-statistic value per feature point.
    pub t_stat: Vec<u32>,
    /// Exponential-family likelihood-ratio bases, when constructed that way.
    pub rho: Option<Vec<BigRational>>,
    /// Deterministic score map: feature point -> first-block score level.
    pub y1_of_x: Vec<usize>,
    /// First-block estimator value per score level.
    pub theta_hat_y1: Vec<BigRational>,
    /// `y2_given_theta[s][c] = P(Y_2 = c | theta_s)`.
    pub y2_given_theta: Vec<Vec<BigRational>>,
    /// Second-block estimator value per score level.
    pub theta_hat_y2: Vec<BigRational>,
}

impl ToyModel {
    /// Builds the feature conditional from exponential-family ingredients.
    #[allow(clippy::too_many_arguments)]
    pub fn exponential_family(
        theta: Vec<BigRational>,
        prior: Vec<BigRational>,
        rho: Vec<BigRational>,
        t_stat: Vec<u32>,
        base: Vec<BigRational>,
        y1_of_x: Vec<usize>,
        theta_hat_y1: Vec<BigRational>,
        y2_given_theta: Vec<Vec<BigRational>>,
        theta_hat_y2: Vec<BigRational>,
    ) -> Self {
        let x_given_theta = rho
            .iter()
            .map(|r| {
                let kernel: Vec<BigRational> = t_stat
                    .iter()
                    .zip(&base)
                    .map(|(&t, h)| h * rat_pow(r, t))
                    .collect();
                let z: BigRational = kernel.iter().sum();
                kernel.into_iter().map(|k| k / &z).collect()
            })
            .collect();
        Self {
            theta,
            prior,
            x_given_theta,
            t_stat,
            rho: Some(rho),
            y1_of_x,
            theta_hat_y1,
            y2_given_theta,
            theta_hat_y2,
        }
    }

    /// Builds from explicit conditional tables (no exponential-family form);
    /// sufficiency of `t` is validated directly.
    #[allow(clippy::too_many_arguments)]
    pub fn from_conditionals(
        theta: Vec<BigRational>,
        prior: Vec<BigRational>,
        x_given_theta: Vec<Vec<BigRational>>,
        t_stat: Vec<u32>,
        y1_of_x: Vec<usize>,
        theta_hat_y1: Vec<BigRational>,
        y2_given_theta: Vec<Vec<BigRational>>,
        theta_hat_y2: Vec<BigRational>,
    ) -> Self {
        Self {
            theta,
            prior,
            x_given_theta,
            t_stat,
            rho: None,
            y1_of_x,
            theta_hat_y1,
            y2_given_theta,
            theta_hat_y2,
        }
    }

    /// Validates a supplied joint `P(X, Y_2 | theta)` against the conditional
    /// independence requirement; a factorization failure is an error.
    pub fn check_joint_independence(&self, joint: &[Vec<Vec<BigRational>>]) -> Result<()> {
        if joint.len() != self.theta.len() {
            return Err(Error::ToyValidation(
                "joint table has wrong trait count".into(),
            ));
        }
        for (s, table) in joint.iter().enumerate() {
            if table.len() != self.t_stat.len() {
                return Err(Error::ToyValidation(
                    "joint table has wrong X support".into(),
                ));
            }
            for (k, row) in table.iter().enumerate() {
                if row.len() != self.theta_hat_y2.len() {
                    return Err(Error::ToyValidation(
                        "joint table has wrong Y2 support".into(),
                    ));
                }
                for (c, p) in row.iter().enumerate() {
                    let product = &self.x_given_theta[s][k] * &self.y2_given_theta[s][c];
                    if *p != product {
                        return Err(Error::ToyValidation(format!(
                            "responses and features are not conditionally independent \
                             given the trait (theta index {s}, x index {k}, y2 level {c})"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// `m(theta_s) = E[estimator_2 | theta_s]`.
    pub fn m_values(&self) -> Vec<BigRational> {
        self.y2_given_theta
            .iter()
            .map(|row| {
                row.iter()
                    .zip(&self.theta_hat_y2)
                    .map(|(p, v)| p * v)
                    .sum()
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let s_count = self.theta.len();
        let x_count = self.t_stat.len();
        if s_count < 2 {
            return Err(Error::ToyValidation("need at least 2 trait values".into()));
        }
        if s_count > 5 || x_count > 20 {
            return Err(Error::ToyValidation(
                "supports capped at 5 trait and 20 feature points".into(),
            ));
        }
        if self.theta.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ToyValidation(
                "trait values must be strictly increasing".into(),
            ));
        }
        if self.prior.len() != s_count
            || !is_simplex(&self.prior)
            || self.prior.iter().any(|p| p.is_zero())
        {
            return Err(Error::ToyValidation(
                "prior must be strictly positive and sum to 1".into(),
            ));
        }
        if self.x_given_theta.len() != s_count {
            return Err(Error::ToyValidation(
                "conditional table has wrong trait count".into(),
            ));
        }
        for row in &self.x_given_theta {
            if row.len() != x_count || !is_simplex(row) {
                return Err(Error::ToyValidation(
                    "feature conditionals must be distributions".into(),
                ));
            }
        }
        if let Some(rho) = &self.rho {
            if rho.len() != s_count || rho.iter().any(|r| !r.is_positive()) {
                return Err(Error::ToyValidation(
                    "likelihood-ratio bases must be positive".into(),
                ));
            }
            if rho.windows(2).any(|w| w[0] == w[1]) || !strictly_monotone(rho) {
                return Err(Error::ToyValidation(
                    "natural parameter must be strictly monotone in the trait".into(),
                ));
            }
        } else {
            // direct sufficiency: within a t-class, conditionals must be
            // proportional across trait values
            let classes = self.t_classes();
            for members in classes.values() {
                for s in 1..s_count {
                    let m0: BigRational = members
                        .iter()
                        .map(|&k| self.x_given_theta[0][k].clone())
                        .sum();
                    let ms: BigRational = members
                        .iter()
                        .map(|&k| self.x_given_theta[s][k].clone())
                        .sum();
                    for &k in members {
                        if &self.x_given_theta[0][k] * &ms != &self.x_given_theta[s][k] * &m0 {
                            return Err(Error::ToyValidation(
                                "statistic is not sufficient for the supplied conditionals".into(),
                            ));
                        }
                    }
                }
            }
        }
        if self.y1_of_x.len() != x_count
            || self.y1_of_x.iter().any(|&y| y >= self.theta_hat_y1.len())
        {
            return Err(Error::ToyValidation("bad first-block score map".into()));
        }
        if self.y2_given_theta.len() != s_count {
            return Err(Error::ToyValidation(
                "second-block table has wrong trait count".into(),
            ));
        }
        for row in &self.y2_given_theta {
            if row.len() != self.theta_hat_y2.len() || !is_simplex(row) {
                return Err(Error::ToyValidation(
                    "second-block conditionals must be distributions".into(),
                ));
            }
        }
        let m = self.m_values();
        if m.windows(2).any(|w| w[0] == w[1]) || !strictly_monotone(&m) {
            return Err(Error::ToyValidation(
                "mean of the second-block estimator must be strictly monotone in the trait".into(),
            ));
        }
        Ok(())
    }

    fn t_classes(&self) -> BTreeMap<u32, Vec<usize>> {
        let mut classes: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
        for (k, &t) in self.t_stat.iter().enumerate() {
            classes.entry(t).or_default().push(k);
        }
        classes
    }

    /// `T_X(x_k) = E[estimator_2 | X = x_k]`, the first conditional expectation.
    pub fn t_x_values(&self) -> Vec<BigRational> {
        let m = self.m_values();
        (0..self.t_stat.len())
            .map(|k| {
                let mut num = BigRational::zero();
                let mut den = BigRational::zero();
                for (s, m_s) in m.iter().enumerate() {
                    let w = &self.prior[s] * &self.x_given_theta[s][k];
                    num += m_s * &w;
                    den += w;
                }
                num / den
            })
            .collect()
    }

    /// A randomized valid exponential-family toy.
    pub fn random(seed: u64) -> ToyModel {
        let mut rng = crate::seed::child_rng(seed, "toy-model");
        let s_count = rng.gen_range(3..=5usize);
        let mut theta = Vec::with_capacity(s_count);
        let mut cur = rat(-(rng.gen_range(2..=4) as i64), 2);
        for _ in 0..s_count {
            theta.push(cur.clone());
            cur += rat(rng.gen_range(1..=4) as i64, 2);
        }
        let prior_w: Vec<i64> = (0..s_count).map(|_| rng.gen_range(1..=5)).collect();
        let total: i64 = prior_w.iter().sum();
        let prior: Vec<BigRational> = prior_w.iter().map(|&w| rat(w, total)).collect();

        // strictly monotone bases, occasionally decreasing
        let mut rho = Vec::with_capacity(s_count);
        let mut r = rat(rng.gen_range(1..=2) as i64, 2);
        for _ in 0..s_count {
            rho.push(r.clone());
            r *= rat(rng.gen_range(3..=6) as i64, 2);
        }
        if rng.gen_bool(0.5) {
            rho.reverse();
        }

        let x_count = rng.gen_range(6..=16usize);
        let t_max = rng.gen_range(2..=4u32);
        let t_stat: Vec<u32> = (0..x_count).map(|_| rng.gen_range(0..=t_max)).collect();
        let base: Vec<BigRational> = (0..x_count)
            .map(|_| rat(rng.gen_range(1..=6) as i64, rng.gen_range(1..=2) as i64))
            .collect();

        let y1_levels = rng.gen_range(2..=4usize);
        let y1_of_x: Vec<usize> = (0..x_count)
            .map(|k| {
                if k < y1_levels {
                    k // every level used at least once
                } else {
                    rng.gen_range(0..y1_levels)
                }
            })
            .collect();
        let theta_hat_y1: Vec<BigRational> = (0..y1_levels)
            .map(|_| rat(rng.gen_range(-4..=4), 2))
            .collect();

        let y2_levels = rng.gen_range(2..=4usize);
        // strictly increasing estimator values
        let mut theta_hat_y2 = Vec::with_capacity(y2_levels);
        let mut v = rat(-(rng.gen_range(1..=3) as i64), 1);
        for _ in 0..y2_levels {
            theta_hat_y2.push(v.clone());
            v += rat(rng.gen_range(1..=3) as i64, 2);
        }
        // likelihood-ratio ordered conditionals give a strictly monotone mean
        let u: Vec<i64> = (0..y2_levels).map(|_| rng.gen_range(1..=4)).collect();
        let mut kappa = Vec::with_capacity(s_count);
        let mut kv = rat(1, 1);
        for _ in 0..s_count {
            kappa.push(kv.clone());
            kv *= rat(rng.gen_range(3..=5) as i64, 2);
        }
        let y2_given_theta: Vec<Vec<BigRational>> = kappa
            .iter()
            .map(|k| {
                let kernel: Vec<BigRational> = u
                    .iter()
                    .enumerate()
                    .map(|(c, &w)| rat(w, 1) * rat_pow(k, c as u32))
                    .collect();
                let z: BigRational = kernel.iter().sum();
                kernel.into_iter().map(|x| x / &z).collect()
            })
            .collect();

        ToyModel::exponential_family(
            theta,
            prior,
            rho,
            t_stat,
            base,
            y1_of_x,
            theta_hat_y1,
            y2_given_theta,
            theta_hat_y2,
        )
    }
}

/// Exact enumeration report for the variance-reduction identity.
#[derive(Debug, Clone)]
pub struct RaoBlackwellReport {
    pub mse_y1: f64,
    pub mse_x: f64,
    pub gap: f64,
    /// Exact rational equality of `MSE(Y1) - MSE(X)` and the conditional
    /// variance term.
    pub identity_holds: bool,
    pub gap_nonnegative: bool,
    pub t_x: Vec<f64>,
    pub exact_mse_y1: BigRational,
    pub exact_mse_x: BigRational,
    pub exact_gap: BigRational,
}

/// Enumerates the joint support and checks that replacing the first-block
/// estimator by its conditional expectation given `T_X` reduces the mean
/// squared error by exactly the expected conditional variance.
pub fn exact_rao_blackwell_check(toy: &ToyModel) -> Result<RaoBlackwellReport> {
    toy.validate()?;
    let s_count = toy.theta.len();
    let x_count = toy.t_stat.len();
    let v: Vec<BigRational> = toy
        .y1_of_x
        .iter()
        .map(|&y| toy.theta_hat_y1[y].clone())
        .collect();
    let t_x = toy.t_x_values();

    // group feature points by the value of the first conditional expectation
    let mut classes: BTreeMap<BigRational, Vec<usize>> = BTreeMap::new();
    for (k, t) in t_x.iter().enumerate() {
        classes.entry(t.clone()).or_default().push(k);
    }

    // refined estimator: class-conditional mean of the first-block estimator
    let mut u_of_x = vec![BigRational::zero(); x_count];
    for members in classes.values() {
        let mut num = BigRational::zero();
        let mut den = BigRational::zero();
        for s in 0..s_count {
            for &k in members {
                let w = &toy.prior[s] * &toy.x_given_theta[s][k];
                num += &v[k] * &w;
                den += w;
            }
        }
        let u = num / den;
        for &k in members {
            u_of_x[k] = u.clone();
        }
    }

    let mut mse_y1 = BigRational::zero();
    let mut mse_x = BigRational::zero();
    for s in 0..s_count {
        for k in 0..x_count {
            let w = &toy.prior[s] * &toy.x_given_theta[s][k];
            let e1 = &v[k] - &toy.theta[s];
            let e2 = &u_of_x[k] - &toy.theta[s];
            mse_y1 += &w * (&e1 * &e1);
            mse_x += &w * (&e2 * &e2);
        }
    }

    // expected conditional variance of the estimator error given (T_X, theta)
    let mut gap = BigRational::zero();
    for s in 0..s_count {
        for members in classes.values() {
            let mut mass = BigRational::zero();
            let mut mean = BigRational::zero();
            let mut sq = BigRational::zero();
            for &k in members {
                let w = &toy.prior[s] * &toy.x_given_theta[s][k];
                mean += &v[k] * &w;
                sq += &v[k] * &v[k] * &w;
                mass += w;
            }
            if mass.is_zero() {
                continue;
            }
            let mean = mean / &mass;
            let var = sq / &mass - &mean * &mean;
            gap += &mass * var;
        }
    }

    let diff = &mse_y1 - &mse_x;
    Ok(RaoBlackwellReport {
        mse_y1: mse_y1.to_f64().unwrap_or(f64::NAN),
        mse_x: mse_x.to_f64().unwrap_or(f64::NAN),
        gap: gap.to_f64().unwrap_or(f64::NAN),
        identity_holds: diff == gap,
        gap_nonnegative: !gap.is_negative(),
        t_x: t_x.iter().map(|t| t.to_f64().unwrap_or(f64::NAN)).collect(),
        exact_mse_y1: mse_y1,
        exact_mse_x: mse_x,
        exact_gap: gap,
    })
}

/// The posterior-mean reduction `G(t) = E[m(theta) | T(X) = t]` tabulated
/// over the statistic's support.
#[derive(Debug, Clone)]
pub struct GTable {
    pub t: Vec<u32>,
    pub g: Vec<f64>,
    pub exact_g: Vec<BigRational>,
    pub strictly_monotone: bool,
    pub increasing: bool,
}

/// Tabulates `G` and reports whether it is strictly monotone; the direction
/// is free (the regression absorbs the sign).
pub fn sufficiency_monotonicity_check(toy: &ToyModel) -> Result<GTable> {
    toy.validate()?;
    let m = toy.m_values();
    let classes = toy.t_classes();
    let mut t_values = Vec::with_capacity(classes.len());
    let mut exact_g = Vec::with_capacity(classes.len());
    for (&t, members) in &classes {
        let mut num = BigRational::zero();
        let mut den = BigRational::zero();
        for (s, m_s) in m.iter().enumerate() {
            let class_mass: BigRational = members
                .iter()
                .map(|&k| toy.x_given_theta[s][k].clone())
                .sum();
            let w = &toy.prior[s] * class_mass;
            num += m_s * &w;
            den += w;
        }
        t_values.push(t);
        exact_g.push(num / den);
    }
    let increasing = exact_g.windows(2).all(|w| w[0] < w[1]);
    let decreasing = exact_g.windows(2).all(|w| w[0] > w[1]);
    Ok(GTable {
        t: t_values,
        g: exact_g.iter().map(|g| g.to_f64().unwrap_or(f64::NAN)).collect(),
        strictly_monotone: increasing || decreasing,
        increasing,
        exact_g,
    })
}

/// Exact covariance of two increasing transforms of a non-constant discrete
/// variable; the covariance is strictly positive.
pub fn lemma1_check(
    support: &[BigRational],
    masses: &[BigRational],
    f_values: &[BigRational],
    g_values: &[BigRational],
) -> Result<BigRational> {
    let n = support.len();
    if n != masses.len() || n != f_values.len() || n != g_values.len() {
        return Err(Error::ToyValidation("mismatched support lengths".into()));
    }
    if n < 2 {
        return Err(Error::ToyValidation(
            "variable is almost surely constant".into(),
        ));
    }
    if !is_simplex(masses) || masses.iter().any(|m| m.is_zero()) {
        return Err(Error::ToyValidation(
            "masses must be strictly positive and sum to 1".into(),
        ));
    }
    if support.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::ToyValidation(
            "support must be strictly increasing".into(),
        ));
    }
    for (name, vals) in [("f", f_values), ("g", g_values)] {
        if vals.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::ToyValidation(format!(
                "{name} must be strictly increasing on the support"
            )));
        }
    }
    let mean =
        |vals: &[BigRational]| -> BigRational { vals.iter().zip(masses).map(|(v, m)| v * m).sum() };
    let ef = mean(f_values);
    let eg = mean(g_values);
    let efg: BigRational = f_values
        .iter()
        .zip(g_values)
        .zip(masses)
        .map(|((f, g), m)| f * g * m)
        .sum();
    Ok(efg - ef * eg)
}
