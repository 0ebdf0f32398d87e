//! End-to-end pipeline checks on simulated data: sequence dissimilarities
//! through embedding, rule training, and operational scoring.

use std::collections::HashMap;

use procscore::irt::{EmConfig, PriorSpec};
use procscore::mds::{ItemFeatures, MdsConfig, ProjectConfig};
use procscore::rbscore::{
    features_for_partition, score_new_person, train_scoring_rule, ItemPartition, TrainConfig,
    TrainingSequences,
};
use procscore::seqdiss::dissimilarity_matrix;
use procscore::simgen::{simulate_dataset, SimConfig};
use procscore::{FeatureSource, ProtocolConfig};

/// Builds per-item embedding feature blocks from raw sequences.
fn embed_blocks(
    data: &procscore::SimulatedData,
    items: &[String],
    k: usize,
) -> (Vec<procscore::EmbeddingModel>, Vec<ItemFeatures>) {
    let mut models = Vec::new();
    let mut blocks = Vec::new();
    for item_id in items {
        let seqs: Vec<procscore::ActionSequence> = data
            .sequences
            .iter()
            .filter(|s| &s.item_id == item_id)
            .cloned()
            .collect();
        let dmat = dissimilarity_matrix(&seqs).unwrap();
        let (model, trace) =
            procscore::embed_item(item_id, &dmat, k, true, &MdsConfig::default()).unwrap();
        assert!(trace.windows(2).all(|w| w[1] <= w[0] + 1e-12));
        blocks.push(ItemFeatures::from_embedding(&model));
        models.push(model);
    }
    (models, blocks)
}

#[test]
fn operational_scoring_reproduces_training_scores() {
    let mut config = SimConfig::new(90, 4, 4242);
    config.n_levels = Some(vec![2, 3, 2, 4]);
    let data = simulate_dataset(&config).unwrap();
    let item_ids = data.responses.item_ids.clone();
    let partition = ItemPartition::new(item_ids[..2].to_vec(), item_ids[2..].to_vec()).unwrap();

    let fit = procscore::fit_grm(&data.responses, &PriorSpec::default(), &EmConfig::default())
        .unwrap();
    assert!(fit
        .log_likelihood
        .windows(2)
        .all(|w| w[1] >= w[0] - 1e-8));

    let (models, blocks) = embed_blocks(&data, &partition.b1, 5);
    let features = features_for_partition(&blocks, &partition, &data.responses, true).unwrap();
    let train_config = TrainConfig {
        ridge: procscore::RidgeConfig {
            folds: 5,
            ..Default::default()
        },
        ..Default::default()
    };
    let (rule, diag) = train_scoring_rule(
        &data.responses,
        &features,
        &partition,
        &fit.params,
        &PriorSpec::default(),
        models,
        true,
        &train_config,
    )
    .unwrap();

    // training-time refined estimates
    let train_scores: Vec<f64> = diag.t_x.iter().map(|&t| rule.f2.predict(t)).collect();

    // score a handful of pretest persons operationally, from raw sequences
    let corpus = TrainingSequences::index(&data.sequences);
    for &i in &[0usize, 7, 33, 61, 89] {
        let pid = &data.responses.person_ids[i];
        let seqs: Vec<procscore::ActionSequence> = data
            .sequences
            .iter()
            .filter(|s| &s.person_id == pid && partition.b1.contains(&s.item_id))
            .cloned()
            .collect();
        let mut scores = HashMap::new();
        for (j, item) in data.responses.item_ids.iter().enumerate() {
            if partition.b1.contains(item) {
                scores.insert(item.clone(), data.responses.score(i, j).unwrap());
            }
        }
        let out = score_new_person(
            &rule,
            &seqs,
            Some(&scores),
            &corpus,
            &ProjectConfig::default(),
        )
        .unwrap();
        assert!(out.warnings.is_empty());
        assert!(
            (out.value - train_scores[i]).abs() < 0.05,
            "person {pid}: operational {} vs training {}",
            out.value,
            train_scores[i]
        );
    }

    // missing scores leave the indicators zero and warn
    let pid = &data.responses.person_ids[3];
    let seqs: Vec<procscore::ActionSequence> = data
        .sequences
        .iter()
        .filter(|s| &s.person_id == pid && partition.b1.contains(&s.item_id))
        .cloned()
        .collect();
    let out = score_new_person(&rule, &seqs, None, &corpus, &ProjectConfig::default()).unwrap();
    assert_eq!(out.warnings.len(), partition.b1.len());

    // a missing item sequence is an error naming the item
    let partial = &seqs[..1];
    let err =
        score_new_person(&rule, partial, None, &corpus, &ProjectConfig::default()).unwrap_err();
    assert!(err.to_string().contains(&partition.b1[1]));
}

#[test]
fn protocol_runs_on_raw_sequences() {
    let mut config = SimConfig::new(120, 4, 99);
    config.n_levels = Some(vec![2, 3, 2, 2]);
    let data = simulate_dataset(&config).unwrap();
    let mut protocol = ProtocolConfig::new(21);
    protocol.n_partitions = 1;
    protocol.folds = 2;
    protocol.t_max = Some(1);
    protocol.embed_dims = 4;
    protocol.ridge_folds = 5;
    protocol.decile_analysis = true;
    protocol.min_fold_persons = 20;
    let report = procscore::run_protocol(
        &data.responses,
        FeatureSource::Sequences(&data.sequences),
        &protocol,
    )
    .unwrap();
    assert_eq!(report.records.len(), 4); // 2 kinds x 1 t x 1 partition x 2 folds
    assert!(report
        .records
        .iter()
        .all(|r| r.mse.is_finite() && r.tau.is_finite()));
    // decile analysis ran at the maximum process length
    assert_eq!(report.deciles.len(), 10);
    let sizes: Vec<usize> = report.deciles.iter().map(|d| d.decile).collect();
    assert_eq!(sizes, (1..=10).collect::<Vec<_>>());
}
