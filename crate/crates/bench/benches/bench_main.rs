use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use gridrl_bench::{case14, case14_agent, random_buffer};
use gridrl_core::{solve_newton_raphson, SacConfig, SolverOptions};

fn power_flow(c: &mut Criterion) {
    let case = case14();
    let opts = SolverOptions::default();
    c.bench_function("newton_raphson_case14_flat", |b| {
        b.iter(|| solve_newton_raphson(black_box(&case), None, &opts).unwrap())
    });
    let base = solve_newton_raphson(&case, None, &opts).unwrap();
    c.bench_function("newton_raphson_case14_warm", |b| {
        b.iter(|| solve_newton_raphson(black_box(&case), Some(&base), &opts).unwrap())
    });
}

fn policy(c: &mut Criterion) {
    let (agent, state) = case14_agent(SacConfig::default());
    c.bench_function("policy_inference_case14", |b| {
        b.iter(|| agent.act_deterministic(black_box(&state)).unwrap())
    });
}

fn sac_update(c: &mut Criterion) {
    let (mut agent, _) = case14_agent(SacConfig::default());
    let buffer = random_buffer(&mut agent, 2048);
    c.bench_function("sac_update_batch64", |b| b.iter(|| agent.update(&buffer).unwrap()));
}

criterion_group!(benches, power_flow, policy, sac_update);
criterion_main!(benches);
