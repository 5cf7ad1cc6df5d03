// SPDX-License-Identifier: Apache-2.0

//! Sequential vs rayon execution of the three batch kernels: the annulus
//! Dirichlet solve, hypothesis sampling in the classifier, and the tail
//! integral. Each pair is checked for bit-identical output before timing.

use std::hint::black_box;

use condlab::capacity::{self, SolverOptions};
use condlab::classifier::{self, CriterionSpec};
use condlab::geometry::ChartManifold;
use condlab::model::{self, WarpedModel};
use condlab::par::Exec;
use condlab::profile::Profile;
use condlab::zoo;
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

const EXECS: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn dirichlet(c: &mut Criterion) {
    let m = ChartManifold::euclidean(2);
    let w = zoo::w_lambda_alpha_field(2.0, 0.5);
    let solve = |n: usize, exec: Exec| {
        let opts = SolverOptions { exec, ..SolverOptions::default() };
        capacity::solve_dirichlet_with(&m, &w, 1.0, 4.0, n, n, &opts, None).unwrap()
    };
    let (a, b) = (solve(64, Exec::Sequential), solve(64, Exec::Parallel));
    assert_eq!(a.energy.to_bits(), b.energy.to_bits(), "execution policies disagree");
    let mut g = c.benchmark_group("dirichlet_solve");
    g.sample_size(10);
    for n in [64, 128, 256] {
        for (name, exec) in EXECS {
            g.bench_with_input(BenchmarkId::new(name, format!("{n}x{n}")), &n, |bch, &n| bch.iter(|| black_box(solve(n, exec).energy)));
        }
    }
    g.finish();
}

fn sampling(c: &mut Criterion) {
    let nc = zoo::w_lambda_alpha(2.0, 1.0).unwrap();
    let run = |budget: usize, exec: Exec| {
        let spec = zoo::w_lambda_alpha_spec(2.0, 1.0).with_budget(budget).with_exec(exec);
        classifier::classify(&nc.chart, &nc.field, &spec).unwrap()
    };
    assert_eq!(run(256, Exec::Sequential), run(256, Exec::Parallel), "execution policies disagree");
    let mut g = c.benchmark_group("classifier_sampling");
    g.sample_size(10);
    for budget in [1024, 4096] {
        for (name, exec) in EXECS {
            g.bench_with_input(BenchmarkId::new(name, budget), &budget, |bch, &k| bch.iter(|| black_box(run(k, exec).verdict)));
        }
    }
    g.finish();
    // Curvature-heavy sampling: the Einstein tensor needs nested differencing.
    let e = zoo::einstein_hyperbolic(3);
    let spec = CriterionSpec::simple(classifier::Theorem::DivergenceFree, 2.0, 1.0, classifier::CurvatureSide::UpperBound)
        .unwrap()
        .with_budget(64)
        .with_horizon(e.region.r_max);
    let mut g = c.benchmark_group("classifier_sampling_einstein");
    g.sample_size(10);
    for (name, exec) in EXECS {
        let s = spec.clone().with_exec(exec);
        g.bench_function(name, |bch| bch.iter(|| black_box(classifier::classify(&e.chart, &e.field, &s).unwrap().verdict)));
    }
    g.finish();
}

fn tail(c: &mut Criterion) {
    let m = WarpedModel::new(2.0, Profile::space_form(-1.0)).unwrap();
    let seq = model::tail_convergence_with(&m, 1.0, Exec::Sequential);
    assert_eq!(seq, model::tail_convergence_with(&m, 1.0, Exec::Parallel), "execution policies disagree");
    let mut g = c.benchmark_group("tail_integral");
    for (name, exec) in EXECS {
        g.bench_function(name, |bch| bch.iter(|| black_box(model::tail_convergence_with(&m, 1.0, exec).tail_estimate)));
    }
    g.finish();
}

criterion_group!(benches, dirichlet, sampling, tail);
criterion_main!(benches);
