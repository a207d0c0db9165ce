use criterion::{criterion_group, criterion_main, Criterion};
use smpc_bench::{snapshots, Fixture};
use smpc_core::ego::{EgoInput, EgoState};
use smpc_core::maneuver::{enumerate_and_solve, project_agents_high_level};
use smpc_core::qp::solve;
use smpc_core::sim::run_episode;
use smpc_core::trajectory::{control_step, ReferenceTrajectory};

fn low_level(c: &mut Criterion) {
    let fx = Fixture::load("scenario1.toml");
    let kinds = fx.kinds();
    let snaps = snapshots(&kinds, &fx.states());
    let scn = &fx.scenario;
    // close to the intersection so the crossing rows are present
    let ego = EgoState::new(85.0, 0.0, 0.0, 10.0);
    let reference = ReferenceTrajectory::cruise(ego.s, 10.0, scn.low_level.n, scn.low_level.t);
    let u_prev = EgoInput::default();
    c.bench_function("control_step", |b| {
        b.iter(|| control_step(&ego, &u_prev, &fx.path, &snaps, &reference, &scn.ego.params, &scn.low_level).unwrap())
    });
    let out = control_step(&ego, &u_prev, &fx.path, &snaps, &reference, &scn.ego.params, &scn.low_level).unwrap();
    c.bench_function("qp_solve_low_level", |b| b.iter(|| solve(&out.ocp.qp).unwrap()));
}

fn high_level(c: &mut Criterion) {
    let fx = Fixture::load("scenario1.toml");
    let kinds = fx.kinds();
    let snaps = snapshots(&kinds, &fx.states());
    let scn = &fx.scenario;
    let ego = fx.ego();
    let params = &scn.ego.params;
    c.bench_function("project_and_enumerate", |b| {
        b.iter(|| {
            let specs =
                project_agents_high_level(&ego, &snaps, &fx.path, params, &scn.high_level, scn.low_level.t).unwrap();
            enumerate_and_solve(ego.s, ego.v, 0.0, &specs, &fx.path, params, &scn.high_level).unwrap()
        })
    });
}

fn episodes(c: &mut Criterion) {
    let mut group = c.benchmark_group("episode");
    group.sample_size(10);
    for file in ["scenario1.toml", "scenario2.toml"] {
        let fx = Fixture::load(file);
        group.bench_function(file.trim_end_matches(".toml"), |b| b.iter(|| run_episode(&fx.scenario).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, low_level, high_level, episodes);
criterion_main!(benches);
