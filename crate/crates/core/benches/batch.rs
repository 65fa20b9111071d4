use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use medreview_core::patient::{import_patient, pre_mr, PatientRecord, TreatmentView};
use medreview_core::rules::{evaluate_batch, evaluate_batch_sequential};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[path = "../tests/common/mod.rs"]
mod common;

fn cohort(n: usize) -> Vec<(PatientRecord, TreatmentView)> {
    let k = common::knowledge();
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    (0..n)
        .map(|i| {
            let doc = common::synth::random_patient(&mut rng, k).document(&format!("b{i}"));
            let record = import_patient(&doc.to_string(), k).unwrap().record;
            let treatment = pre_mr(&record);
            (record, treatment)
        })
        .collect()
}

fn batch(c: &mut Criterion) {
    let k = common::knowledge();
    let plan = common::plan();
    let mut group = c.benchmark_group("rule_batch");
    for n in [100, 1000, 5000] {
        let cases = cohort(n);
        group.throughput(Throughput::Elements(n as u64));
        group.bench_with_input(BenchmarkId::new("sequential", n), &cases, |b, cases| {
            b.iter(|| evaluate_batch_sequential(&plan, cases, k))
        });
        group.bench_with_input(BenchmarkId::new("batch", n), &cases, |b, cases| {
            b.iter(|| evaluate_batch(&plan, cases, k))
        });
    }
    group.finish();
}

criterion_group!(benches, batch);
criterion_main!(benches);
