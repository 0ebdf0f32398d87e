//! Acceptance suite: one test per release criterion, each printing a
//! PASS/FAIL line with its measured runtime. Run with `--nocapture` to see
//! the lines on success.
//!
//!  1. exact variance-reduction identity on randomized finite models
//!  2. strict monotonicity of the sufficiency reduction
//!  3. positive covariance of increasing transforms
//!  4. pipeline MSE/tau improvement of process-based scoring
//!  5. residual-decile profile of the improvement
//!  6. calibration recovery of item parameters
//!  7. estimator oracles (posterior mean, rank correlation, ridge)
//!  8. embedding contracts (monotone stress, exact configurations,
//!     projection recovery)
//!  9. byte-identical reports under a fixed seed

use std::process::Command;
use std::sync::OnceLock;
use std::time::Instant;

use num::{Signed, Zero};
use procscore::eval::{EstimatorKind, EvalReport, FeatureSource};
use procscore::irt::{EmConfig, GrmItemParams, PriorSpec, ThetaMethod};
use procscore::mds::MdsConfig;
use procscore::reg::ridge_fit_fixed;
use procscore::simgen::{
    exact_rao_blackwell_check, lemma1_check, rat, simulate_dataset, sufficiency_monotonicity_check,
    FeatureModel, SimConfig, ToyModel,
};
use procscore::ProtocolConfig;
use rand::Rng;

fn pass(criterion: usize, detail: String, started: Instant) {
    println!(
        "ACCEPTANCE {criterion}: PASS — {detail} ({:.2}s)",
        started.elapsed().as_secs_f64()
    );
}

// -- criterion 1 -------------------------------------------------------------

#[test]
fn criterion_1_variance_reduction_identity_is_exact() {
    let started = Instant::now();
    let n_models = 30usize;
    let mut max_abs_err: f64 = 0.0;
    let mut positive_gaps = 0usize;
    for seed in 0..n_models {
        let toy = ToyModel::random(seed as u64);
        let report = exact_rao_blackwell_check(&toy).expect("valid randomized model");
        assert!(
            report.identity_holds,
            "seed {seed}: MSE difference differs from the conditional-variance term"
        );
        let exact_err = (&report.exact_mse_y1 - &report.exact_mse_x - &report.exact_gap).abs();
        assert!(exact_err.is_zero(), "seed {seed}: exact mismatch");
        let float_err = (report.mse_y1 - report.mse_x - report.gap).abs();
        assert!(float_err < 1e-10, "seed {seed}: float error {float_err}");
        assert!(
            report.gap >= -1e-12,
            "seed {seed}: negative gap {}",
            report.gap
        );
        positive_gaps += usize::from(report.exact_gap.is_positive());
        max_abs_err = max_abs_err.max(float_err);
    }
    // most randomized models must actually exercise a strict reduction
    assert!(
        positive_gaps >= n_models / 2,
        "only {positive_gaps}/{n_models} models had a strictly positive gap"
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 10.0, "criterion 1 overran its budget: {elapsed:.2}s");
    pass(
        1,
        format!(
            "identity exact on {n_models} randomized models \
             ({positive_gaps} with strictly positive gap, max float error {max_abs_err:.2e})"
        ),
        started,
    );
}

// -- criterion 2 -------------------------------------------------------------

#[test]
fn criterion_2_sufficiency_reduction_is_strictly_monotone() {
    let started = Instant::now();
    let n_models = 30;
    for seed in 0..n_models {
        let toy = ToyModel::random(seed);
        let table = sufficiency_monotonicity_check(&toy).expect("valid randomized model");
        assert!(
            table.strictly_monotone,
            "seed {seed}: G not strictly monotone: {:?}",
            table.g
        );
        for w in table.exact_g.windows(2) {
            assert!(w[0] != w[1], "seed {seed}: tied G values");
        }
    }

    // deliberately broken assumptions must be rejected
    let mut bad_eta = ToyModel::random(1);
    let rho = bad_eta.rho.clone().unwrap();
    let mut broken = rho.clone();
    broken.swap(0, 1);
    bad_eta.rho = Some(broken);
    assert!(sufficiency_monotonicity_check(&bad_eta).is_err());

    let mut bad_m = ToyModel::random(2);
    let levels = bad_m.theta_hat_y2.len();
    bad_m.y2_given_theta = vec![vec![rat(1, levels as i64); levels]; bad_m.theta.len()];
    assert!(sufficiency_monotonicity_check(&bad_m).is_err());

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "criterion 2 overran its budget: {elapsed:.2}s");
    pass(
        2,
        format!("G strictly monotone on {n_models} models; broken assumptions rejected"),
        started,
    );
}

// -- criterion 3 -------------------------------------------------------------

#[test]
fn criterion_3_increasing_transforms_have_positive_covariance() {
    let started = Instant::now();
    let mut rng = procscore::seed::child_rng(33, "lemma1-acceptance");
    for trial in 0..100 {
        let n = rng.gen_range(2..=10usize);
        // strictly increasing support and transforms, strictly positive masses
        let mut support = Vec::with_capacity(n);
        let mut cur = rat(-(rng.gen_range(1..=6) as i64), 2);
        for _ in 0..n {
            support.push(cur.clone());
            cur += rat(rng.gen_range(1..=5) as i64, 3);
        }
        let weights: Vec<i64> = (0..n).map(|_| rng.gen_range(1..=7)).collect();
        let total: i64 = weights.iter().sum();
        let masses: Vec<_> = weights.iter().map(|&w| rat(w, total)).collect();
        let base_f = rng.gen_range(0..=3);
        let base_g = rng.gen_range(0..=3);
        let mut increasing = |base: i64| {
            let mut vals = Vec::with_capacity(n);
            let mut v = rat(-base, 1);
            for _ in 0..n {
                vals.push(v.clone());
                v += rat(rng.gen_range(1..=4) as i64, 2);
            }
            vals
        };
        let f = increasing(base_f);
        let g = increasing(base_g);
        let cov = lemma1_check(&support, &masses, &f, &g).expect("valid triple");
        assert!(cov.is_positive(), "trial {trial}: covariance not positive");
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "criterion 3 overran its budget: {elapsed:.2}s");
    pass(3, "covariance positive on 100 randomized triples".into(), started);
}

// -- criteria 4 and 5 share the heavy simulation runs ------------------------

struct PipelineRuns {
    reports: Vec<EvalReport>,
    elapsed_seconds: f64,
}

fn pipeline_runs() -> &'static PipelineRuns {
    static RUNS: OnceLock<PipelineRuns> = OnceLock::new();
    RUNS.get_or_init(|| {
        let started = Instant::now();
        let reports = (0..10)
            .map(|seed| {
                let mut sim = SimConfig::new(2000, 8, 9100 + seed);
                sim.n_levels = Some(vec![2, 4, 3, 2, 2, 4, 3, 2]);
                sim.feature_model = FeatureModel::LinearGaussian {
                    informativeness: 1.0,
                    noise_sd: 1.6,
                    dims: 10,
                };
                let data = simulate_dataset(&sim).expect("valid simulation config");
                let mut config = ProtocolConfig::new(501 + seed);
                config.n_partitions = 10;
                config.folds = 5;
                config.t_max = Some(3);
                config.embed_dims = 10;
                config.ridge_folds = 10;
                config.augment = true;
                config.decile_analysis = true;
                procscore::run_protocol(
                    &data.responses,
                    FeatureSource::Direct(&data.features),
                    &config,
                )
                .expect("protocol run")
            })
            .collect();
        PipelineRuns {
            reports,
            elapsed_seconds: started.elapsed().as_secs_f64(),
        }
    })
}

#[test]
fn criterion_4_process_scoring_beats_response_scoring() {
    let started = Instant::now();
    let runs = pipeline_runs();
    assert!(
        runs.elapsed_seconds < 600.0,
        "pipeline runs overran their budget: {:.1}s",
        runs.elapsed_seconds
    );
    let mut mse_wins = 0;
    let mut tau_wins = 0;
    for report in &runs.reports {
        let mut mse_all = true;
        let mut tau_all = true;
        for t in 1..=3 {
            let (resp_mse, resp_tau) = report.grand_mean(t, EstimatorKind::Response).unwrap();
            let (proc_mse, proc_tau) = report.grand_mean(t, EstimatorKind::Process).unwrap();
            mse_all &= proc_mse < resp_mse;
            tau_all &= proc_tau > resp_tau;
        }
        mse_wins += usize::from(mse_all);
        tau_wins += usize::from(tau_all);
    }
    assert!(
        mse_wins >= 8,
        "process-based MSE beat response-based at every t in only {mse_wins}/10 seeds"
    );
    assert!(
        tau_wins >= 8,
        "process-based tau beat response-based at every t in only {tau_wins}/10 seeds"
    );
    pass(
        4,
        format!(
            "process scoring won on MSE in {mse_wins}/10 and on tau in {tau_wins}/10 seeds \
             (runs took {:.0}s)",
            runs.elapsed_seconds
        ),
        started,
    );
}

#[test]
fn criterion_5_decile_profile_matches_the_expected_shape() {
    let started = Instant::now();
    let runs = pipeline_runs();
    // pooled decile means across the ten seeds
    let mut resp = [0.0; 10];
    let mut proc = [0.0; 10];
    for report in &runs.reports {
        for (b, (r, p)) in report.decile_means().into_iter().enumerate() {
            resp[b] += r / runs.reports.len() as f64;
            proc[b] += p / runs.reports.len() as f64;
        }
    }
    // extremes: process clearly better
    assert!(
        proc[0] < resp[0],
        "bottom decile: process {} vs response {}",
        proc[0],
        resp[0]
    );
    assert!(
        proc[9] < resp[9],
        "top decile: process {} vs response {}",
        proc[9],
        resp[9]
    );
    // middle deciles (4th-6th): within 25% relative
    for b in 3..6 {
        let rel = (proc[b] - resp[b]).abs() / resp[b];
        assert!(
            rel < 0.25,
            "decile {}: relative gap {rel:.3} exceeds 25% (process {}, response {})",
            b + 1,
            proc[b],
            resp[b]
        );
    }
    let detail = format!(
        "extremes favor process ({:.3}<{:.3} bottom, {:.3}<{:.3} top); middle deciles within 25%",
        proc[0], resp[0], proc[9], resp[9]
    );
    pass(5, detail, started);
}

// -- criterion 6 -------------------------------------------------------------

#[test]
fn criterion_6_calibration_recovers_item_parameters() {
    let started = Instant::now();
    let mut sim = SimConfig::new(2000, 14, 606);
    sim.slope_range = (0.8, 2.0);
    sim.intercept_range = (-2.0, 2.0);
    let data = simulate_dataset(&sim).unwrap();
    let fit = procscore::fit_grm(&data.responses, &PriorSpec::default(), &EmConfig::default())
        .unwrap();
    for w in fit.log_likelihood.windows(2) {
        assert!(w[1] >= w[0] - 1e-8, "log-likelihood decreased: {w:?}");
    }
    let mut slope_sq = 0.0;
    let mut slope_n = 0.0;
    let mut int_sq = 0.0;
    let mut int_n = 0.0;
    for (truth, est) in data.true_params.iter().zip(&fit.params) {
        slope_sq += (truth.slope - est.slope).powi(2);
        slope_n += 1.0;
        for (td, ed) in truth.intercepts.iter().zip(&est.intercepts) {
            int_sq += (td - ed).powi(2);
            int_n += 1.0;
        }
    }
    let slope_rmse = (slope_sq / slope_n).sqrt();
    let int_rmse = (int_sq / int_n).sqrt();
    assert!(slope_rmse <= 0.15, "slope RMSE {slope_rmse:.4} exceeds 0.15");
    assert!(int_rmse <= 0.20, "intercept RMSE {int_rmse:.4} exceeds 0.20");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 60.0, "criterion 6 overran its budget: {elapsed:.2}s");
    pass(
        6,
        format!("slope RMSE {slope_rmse:.3}, intercept RMSE {int_rmse:.3}, likelihood monotone"),
        started,
    );
}

// -- criterion 7 -------------------------------------------------------------

#[test]
fn criterion_7_estimator_oracles() {
    let started = Instant::now();
    let mut rng = procscore::seed::child_rng(707, "estimator-oracles");

    // EAP against a dense-grid posterior mean
    let prior = PriorSpec::default();
    let mut worst_eap: f64 = 0.0;
    for _ in 0..100 {
        let n_items = rng.gen_range(1..=5usize);
        let params: Vec<GrmItemParams> = (0..n_items)
            .map(|j| {
                let a = rng.gen_range(0.6..2.2);
                let c = rng.gen_range(1..=3usize);
                let mut d: Vec<f64> = (0..c).map(|_| rng.gen_range(-2.0..2.0)).collect();
                d.sort_by(|x, y| y.partial_cmp(x).unwrap());
                for i in 1..d.len() {
                    if d[i] > d[i - 1] - 0.25 {
                        d[i] = d[i - 1] - 0.25;
                    }
                }
                GrmItemParams::new(format!("i{j}"), a, d).unwrap()
            })
            .collect();
        let pattern: Vec<Option<u32>> = params
            .iter()
            .map(|p| Some(rng.gen_range(0..=p.max_score())))
            .collect();
        let eap =
            procscore::irt::theta_estimate_value(&pattern, &params, &prior, ThetaMethod::Eap)
                .unwrap();
        // brute-force quadrature on a 100k grid over the same range
        let m = 100_000usize;
        let step = (prior.theta_max - prior.theta_min) / (m - 1) as f64;
        let mut num = 0.0;
        let mut den = 0.0;
        for g in 0..m {
            let t = prior.theta_min + step * g as f64;
            let w = (-0.5 * t * t).exp();
            let ll = procscore::irt::pattern_log_likelihood(t, &pattern, &params).unwrap();
            let l = w * ll.exp();
            num += t * l;
            den += l;
        }
        let oracle = num / den;
        worst_eap = worst_eap.max((eap - oracle).abs());
    }
    assert!(worst_eap < 1e-4, "EAP deviates from the grid oracle by {worst_eap:.2e}");

    // Kendall tau against the quadratic definition, exact equality
    for trial in 0..50 {
        let n = rng.gen_range(5..=80usize);
        let a: Vec<f64> = (0..n).map(|_| rng.gen_range(0..7) as f64).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.gen_range(0..7) as f64).collect();
        match (
            procscore::kendall_tau(&a, &b),
            procscore::eval::kendall_tau_quadratic(&a, &b),
        ) {
            (Ok(fast), Ok(slow)) => assert_eq!(fast, slow, "trial {trial}"),
            (Err(_), Err(_)) => {}
            (fast, slow) => panic!("trial {trial}: {fast:?} vs {slow:?}"),
        }
    }

    // ridge at fixed lambda against the closed form on standardized data
    let mut worst_ridge: f64 = 0.0;
    for _ in 0..20 {
        let n = rng.gen_range(8..=30usize);
        let p = rng.gen_range(1..=4usize);
        let mut x = ndarray::Array2::zeros((n, p));
        for v in x.iter_mut() {
            *v = rng.gen_range(-2.0..2.0);
        }
        let y: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let lambda = rng.gen_range(0.0..5.0);
        let model = ridge_fit_fixed(x.view(), &y, lambda).unwrap();
        // standardized closed form (X'X + lambda I)^-1 X'y
        let n_f = n as f64;
        let means: Vec<f64> = (0..p).map(|k| x.column(k).sum() / n_f).collect();
        let scales: Vec<f64> = (0..p)
            .map(|k| {
                let var = x
                    .column(k)
                    .iter()
                    .map(|v| (v - means[k]) * (v - means[k]))
                    .sum::<f64>()
                    / n_f;
                var.sqrt().max(1e-12)
            })
            .collect();
        let ybar = y.iter().sum::<f64>() / n_f;
        let mut lhs = ndarray::Array2::zeros((p, p));
        let mut rhs = vec![0.0; p];
        for r in 0..p {
            for c in 0..p {
                let mut acc = 0.0;
                for i in 0..n {
                    acc += (x[[i, r]] - means[r]) / scales[r] * (x[[i, c]] - means[c])
                        / scales[c];
                }
                lhs[[r, c]] = acc + if r == c { lambda } else { 0.0 };
            }
            rhs[r] = (0..n)
                .map(|i| (x[[i, r]] - means[r]) / scales[r] * (y[i] - ybar))
                .sum();
        }
        let lhs_na = nalgebra::DMatrix::from_fn(p, p, |r, c| lhs[[r, c]]);
        let beta = lhs_na
            .lu()
            .solve(&nalgebra::DVector::from_column_slice(&rhs))
            .unwrap();
        for k in 0..p {
            worst_ridge = worst_ridge.max((model.weights[k] - beta[k]).abs());
        }
    }
    assert!(worst_ridge < 1e-8, "ridge deviates from the closed form by {worst_ridge:.2e}");

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 7 overran its budget: {elapsed:.2}s");
    pass(
        7,
        format!("EAP within {worst_eap:.1e}; tau exact on 50 vectors; ridge within {worst_ridge:.1e}"),
        started,
    );
}

// -- criterion 8 -------------------------------------------------------------

#[test]
fn criterion_8_embedding_contracts() {
    let started = Instant::now();
    let mut rng = procscore::seed::child_rng(808, "mds-acceptance");

    // monotone stress on 20 random matrices
    for trial in 0..20 {
        let n = rng.gen_range(8..=25usize);
        let mut values = ndarray::Array2::zeros((n, n));
        for i in 0..n {
            for j in (i + 1)..n {
                let v: f64 = rng.gen();
                values[[i, j]] = v;
                values[[j, i]] = v;
            }
        }
        let dmat = procscore::DissimilarityMatrix::from_values(
            (0..n).map(|i| format!("p{i}")).collect(),
            values,
        )
        .unwrap();
        let k = rng.gen_range(1..=4usize);
        let out = procscore::embed_train(&dmat, k, &MdsConfig::default()).unwrap();
        for w in out.stress_trace.windows(2) {
            assert!(w[1] <= w[0] + 1e-12, "trial {trial}: stress rose {w:?}");
        }
    }

    // exactly embeddable three-point configurations reach zero stress, and
    // projecting a training row recovers its coordinates
    let mut worst_recovery: f64 = 0.0;
    for trial in 0..10 {
        // random planar triangle, scaled into [0,1]
        let pts: Vec<(f64, f64)> = (0..3)
            .map(|_| (rng.gen_range(-0.3..0.3), rng.gen_range(-0.3..0.3)))
            .collect();
        let dist = |a: (f64, f64), b: (f64, f64)| {
            ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt()
        };
        let mut values = ndarray::Array2::zeros((3, 3));
        for i in 0..3 {
            for j in 0..3 {
                values[[i, j]] = dist(pts[i], pts[j]);
            }
        }
        let dmat = procscore::DissimilarityMatrix::from_values(
            vec!["a".into(), "b".into(), "c".into()],
            values,
        )
        .unwrap();
        let out = procscore::embed_train(&dmat, 2, &MdsConfig::default()).unwrap();
        assert!(
            out.final_stress <= 1e-10,
            "trial {trial}: stress {} on an embeddable configuration",
            out.final_stress
        );
        for i in 0..3 {
            let cross: Vec<f64> = (0..3).map(|j| dmat.get(i, j)).collect();
            let x = procscore::mds::project_into(
                &out.coords,
                &cross,
                &procscore::ProjectConfig::default(),
            )
            .unwrap();
            for (m, &xm) in x.iter().enumerate() {
                worst_recovery = worst_recovery.max((xm - out.coords[[i, m]]).abs());
            }
        }
    }
    assert!(
        worst_recovery < 1e-4,
        "projection missed a training point by {worst_recovery:.2e}"
    );

    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "criterion 8 overran its budget: {elapsed:.2}s");
    pass(
        8,
        format!("stress monotone on 20 matrices; exact configurations recovered within {worst_recovery:.1e}"),
        started,
    );
}

// -- criterion 9 -------------------------------------------------------------

#[test]
fn criterion_9_reports_are_byte_identical_across_runs() {
    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let bin = env!("CARGO_BIN_EXE_procscore");
    let data = dir.path().join("data");
    let status = Command::new(bin)
        .args([
            "simulate",
            "--n",
            "400",
            "--items",
            "4",
            "--seed",
            "4242",
            "--levels",
            "2,4,3,2",
            "--out-dir",
            data.to_str().unwrap(),
        ])
        .status()
        .unwrap();
    assert!(status.success());

    let evaluate = |out: &str| {
        let out_dir = dir.path().join(out);
        let status = Command::new(bin)
            .args([
                "evaluate",
                "--responses",
                data.join("responses.csv").to_str().unwrap(),
                "--features",
                data.join("features.csv").to_str().unwrap(),
                "--seed",
                "99",
                "--partitions",
                "2",
                "--folds",
                "2",
                "--t-max",
                "1",
                "--ridge-folds",
                "5",
                "--out-dir",
                out_dir.to_str().unwrap(),
            ])
            .status()
            .unwrap();
        assert!(status.success());
        (
            std::fs::read(out_dir.join("report.csv")).unwrap(),
            std::fs::read(out_dir.join("deciles.csv")).unwrap(),
            std::fs::read(out_dir.join("summary.json")).unwrap(),
        )
    };
    let first = evaluate("run1");
    let second = evaluate("run2");
    assert_eq!(first.0, second.0, "report.csv differs across reruns");
    assert_eq!(first.1, second.1, "deciles.csv differs across reruns");
    assert_eq!(first.2, second.2, "summary.json differs across reruns");
    assert!(!first.0.is_empty() && !first.1.is_empty());
    pass(
        9,
        "simulate -> evaluate reproduced report.csv, deciles.csv, summary.json byte-for-byte"
            .into(),
        started,
    );
}
