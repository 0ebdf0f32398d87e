use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use procscore::irt::{EmConfig, PriorSpec, ThetaMethod};
use procscore::mds::MdsConfig;
use procscore::reg::RidgeConfig;
use procscore_bench::{bench_dataset, bench_ranks, bench_sequences};

fn bench_dissimilarity(c: &mut Criterion) {
    let mut group = c.benchmark_group("dissimilarity_matrix");
    for n in [100usize, 300] {
        let seqs = bench_sequences(n, 40, 11);
        group.bench_with_input(BenchmarkId::from_parameter(n), &seqs, |b, seqs| {
            b.iter(|| procscore::dissimilarity_matrix(seqs).unwrap());
        });
    }
    group.finish();
}

fn bench_embedding(c: &mut Criterion) {
    let seqs = bench_sequences(120, 40, 13);
    let dmat = procscore::dissimilarity_matrix(&seqs).unwrap();
    c.bench_function("smacof_embed_120x10", |b| {
        b.iter(|| procscore::embed_train(&dmat, 10, &MdsConfig::default()).unwrap());
    });
    let out = procscore::embed_train(&dmat, 10, &MdsConfig::default()).unwrap();
    let cross: Vec<f64> = (0..120).map(|j| dmat.get(0, j)).collect();
    c.bench_function("project_one_person", |b| {
        b.iter(|| {
            procscore::mds::project_into(&out.coords, &cross, &Default::default()).unwrap()
        });
    });
}

fn bench_calibration(c: &mut Criterion) {
    let data = bench_dataset(500, 6, 17);
    c.bench_function("grm_em_500x6", |b| {
        b.iter(|| {
            procscore::fit_grm(&data.responses, &PriorSpec::default(), &EmConfig::default())
                .unwrap()
        });
    });

    let fit = procscore::fit_grm(&data.responses, &PriorSpec::default(), &EmConfig::default())
        .unwrap();
    let items: Vec<usize> = (0..6).collect();
    c.bench_function("eap_batch_500", |b| {
        b.iter(|| {
            (0..data.responses.n_persons())
                .map(|i| {
                    let row = data.responses.row_on_items(i, &items);
                    procscore::irt::theta_estimate_value(
                        &row,
                        &fit.params,
                        &PriorSpec::default(),
                        ThetaMethod::Eap,
                    )
                    .unwrap()
                })
                .collect::<Vec<f64>>()
        });
    });
}

fn bench_ridge(c: &mut Criterion) {
    let data = bench_dataset(1000, 4, 19);
    // column-bind the per-item blocks into one wide design
    let width: usize = data.features.iter().map(|f| f.values.ncols()).sum();
    let mut x = ndarray::Array2::zeros((1000, width));
    let mut offset = 0;
    for block in &data.features {
        for c in 0..block.values.ncols() {
            for i in 0..1000 {
                x[[i, offset + c]] = block.values[[i, c]];
            }
        }
        offset += block.values.ncols();
    }
    let y = data.true_theta.clone();
    c.bench_function("ridge_cv_1000x40", |b| {
        b.iter(|| procscore::ridge_fit(x.view(), &y, &RidgeConfig::default()).unwrap());
    });
}

fn bench_kendall(c: &mut Criterion) {
    let (a, b_vec) = bench_ranks(2000, 23);
    c.bench_function("kendall_tau_2000", |b| {
        b.iter(|| procscore::kendall_tau(&a, &b_vec).unwrap());
    });
}

criterion_group!(
    benches,
    bench_dissimilarity,
    bench_embedding,
    bench_calibration,
    bench_ridge,
    bench_kendall
);
criterion_main!(benches);
