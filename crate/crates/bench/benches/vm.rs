use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};

use opte_bench::{random_programs, random_words};
use opte_core::vm::{enumerate_programs, eval, Machine, Tape};

fn eval_random(c: &mut Criterion) {
    let programs = random_programs(1000, 12, 1);
    let inputs = random_words(3, 64, 2);
    let mut g = c.benchmark_group("vm_eval");
    g.throughput(Throughput::Elements(programs.len() as u64));
    for budget in [16u64, 256, 4096] {
        g.bench_with_input(BenchmarkId::new("fresh_machine", budget), &budget, |b, &budget| {
            b.iter(|| {
                for p in &programs {
                    black_box(eval(p, budget, &inputs).unwrap());
                }
            })
        });
        g.bench_with_input(BenchmarkId::new("reused_machine", budget), &budget, |b, &budget| {
            let tapes: Vec<&dyn Tape> = inputs.iter().map(|w| w as &dyn Tape).collect();
            let mut m = Machine::new();
            b.iter(|| {
                for p in &programs {
                    black_box(m.eval(p, budget, &tapes));
                }
            })
        });
    }
    g.finish();
}

fn enumerate(c: &mut Criterion) {
    c.bench_function("enumerate_programs_l12", |b| {
        b.iter(|| black_box(enumerate_programs(12).unwrap().map(|p| p.len_bits()).sum::<usize>()))
    });
}

criterion_group!(benches, eval_random, enumerate);
criterion_main!(benches);
