use criterion::{black_box, criterion_group, criterion_main, Criterion};

use nlteleport::ancilla::{build_fock, moments_two_component, AncillaSpec};
use nlteleport::experiments::{AncillaKind, DeterministicSetup};
use nlteleport::fock::sim::{cluster_fock_ensemble, condition, JointState};
use nlteleport::gaussian::{build_cluster, ClusterParams};
use nlteleport::moments::{native_output_xi_closed, numerator_poly, Scheme, SchemeConfig};

fn engine_objective(c: &mut Criterion) {
    let cluster = build_cluster(&ClusterParams::two_mode_squeezed(8.0), 8.0).unwrap();
    let anc = moments_two_component(0.79).unwrap();
    let cfg = SchemeConfig::unity_gain(Scheme::Nonlinear, -0.2);
    c.bench_function("engine_native_xi", |b| {
        b.iter(|| {
            let poly = numerator_poly(black_box(&cluster), &anc, &cfg).unwrap();
            native_output_xi_closed(poly, -2.0, 2.0).xi_best()
        })
    });
}

fn sweep_objective(c: &mut Criterion) {
    let setup = DeterministicSetup {
        scheme: Scheme::Nonlinear,
        ancilla: AncillaKind::CubicFinite,
        s_max_db: 10.0,
        n: 0.0,
    };
    let dim = setup.bounds().len();
    let mut x = vec![0.1; dim];
    x[5] = 0.7;
    x[8] = 0.7;
    c.bench_function("sweep_objective_eval", |b| {
        b.iter(|| setup.objective_value(black_box(&x)))
    });
}

fn fock_conditioning(c: &mut Criterion) {
    let cluster = cluster_fock_ensemble(&ClusterParams::two_mode_squeezed(6.0), 6.0, 22).unwrap();
    let anc = build_fock(&AncillaSpec::TwoComponent { u: 0.79 }, 4).unwrap();
    let cfg = SchemeConfig::unity_gain(Scheme::Nonlinear, -0.219);
    let joint = JointState::build(&cluster, &anc, &cfg).unwrap();
    c.bench_function("condition_single_cell", |b| {
        b.iter(|| condition(black_box(&joint), 0.4, -0.7).unwrap().density)
    });
}

criterion_group!(
    benches,
    engine_objective,
    sweep_objective,
    fock_conditioning
);
criterion_main!(benches);
