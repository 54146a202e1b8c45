//! Sequential vs data-parallel replication schedules.

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use sqbound::harness::{minimax_thm2_with, minimax_thm3_with};
use sqbound::learners::{LearnerKind, LearnerSpec};
use sqbound::par::Schedule;

const SCHEDULES: [(&str, Schedule); 2] = [("sequential", Schedule::Sequential), ("parallel", Schedule::Parallel)];

fn thm3_erm(c: &mut Criterion) {
    let learner = LearnerSpec::new(LearnerKind::Erm, 4.0, 1.0).unwrap();
    let mut group = c.benchmark_group("thm3_erm_d64_m256_reps200");
    group.sample_size(10);
    for (name, schedule) in SCHEDULES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| minimax_thm3_with(schedule, &learner, 1.0, 4.0, 256, 64, 200, 1).unwrap())
        });
    }
    group.finish();
}

fn thm2_vaw(c: &mut Criterion) {
    let learner = LearnerSpec::new(LearnerKind::Vaw, 4.0, 1.0).unwrap();
    let mut group = c.benchmark_group("thm2_vaw_m1024_reps500");
    group.sample_size(10);
    for (name, schedule) in SCHEDULES {
        group.bench_function(BenchmarkId::from_parameter(name), |b| {
            b.iter(|| minimax_thm2_with(schedule, &learner, 1.0, 4.0, 1024, 500, 1).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, thm3_erm, thm2_vaw);
criterion_main!(benches);
