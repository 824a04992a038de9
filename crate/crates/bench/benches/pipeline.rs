//! Criterion benchmarks for the geometric core: reliability maps, the
//! 8-point solve, robust estimation, triangulation and the full per-pair
//! pose pipeline.

use criterion::{criterion_group, criterion_main, Criterion};
use flowvo_core::epipolar::{eight_point, ransac_fundamental, recover_pose};
use flowvo_core::flow::{fb_distance_and_score, occlusion_mask, CorrespondenceSet};
use flowvo_core::synthetic::{generate_scene, DenseObservations, SceneConfig, SyntheticScene};
use flowvo_core::triangulation::midpoint_triangulate;
use flowvo_core::{DetRng, PipelineConfig};
use std::hint::black_box;

struct Fixture {
    scene: SyntheticScene,
    obs: DenseObservations,
    corrs: CorrespondenceSet,
    cfg: PipelineConfig,
}

fn fixture() -> Fixture {
    let cfg = PipelineConfig::default();
    let scene = generate_scene(&SceneConfig::surface(1, 900)).unwrap();
    let obs = scene.render_pair_dense(0, 1).unwrap();
    let sparse_scene = generate_scene(&SceneConfig::points(1, 2000)).unwrap();
    let sparse = sparse_scene.render_pair_sparse(0, 1).unwrap();
    let mut rng = DetRng::new(1, "bench-noise");
    let corrs = sparse.corrupt(0.5, 0.2, &mut rng).correspondences;
    Fixture {
        scene,
        obs,
        corrs,
        cfg,
    }
}

fn bench_maps(c: &mut Criterion) {
    let f = fixture();
    c.bench_function("fb_distance_and_score 128x96", |b| {
        b.iter(|| fb_distance_and_score(black_box(&f.obs.flow_ab), &f.obs.flow_ba, 1e3).unwrap())
    });
    c.bench_function("occlusion_mask 128x96", |b| {
        b.iter(|| occlusion_mask(black_box(&f.obs.flow_ba), 0.75))
    });
}

fn bench_estimation(c: &mut Criterion) {
    let f = fixture();
    c.bench_function("eight_point 2000 correspondences", |b| {
        b.iter(|| eight_point(black_box(&f.corrs)).unwrap())
    });
    c.bench_function("ransac_fundamental 2000 x 20% outliers", |b| {
        b.iter(|| {
            let mut rng = DetRng::new(7, "ransac");
            ransac_fundamental(black_box(&f.corrs), &f.cfg.ransac, &mut rng).unwrap()
        })
    });
}

fn bench_triangulation(c: &mut Criterion) {
    let f = fixture();
    let rec = recover_pose(&f.obs.flow_ab, &f.obs.flow_ba, &f.scene.intrinsics, 3, &f.cfg).unwrap();
    let inliers = rec.correspondences.filter_by_mask(&rec.ransac_inliers);
    c.bench_function(
        &format!("midpoint_triangulate {} samples", inliers.len()),
        |b| {
            b.iter(|| {
                midpoint_triangulate(
                    black_box(&inliers),
                    &rec.hypothesis.pose,
                    &f.scene.intrinsics,
                    &f.cfg.triangulation,
                )
                .unwrap()
            })
        },
    );
}

fn bench_full_pair(c: &mut Criterion) {
    let f = fixture();
    let mut group = c.benchmark_group("pair");
    group.sample_size(20);
    group.bench_function("recover_pose noiseless 128x96", |b| {
        b.iter(|| {
            recover_pose(
                black_box(&f.obs.flow_ab),
                &f.obs.flow_ba,
                &f.scene.intrinsics,
                5,
                &f.cfg,
            )
            .unwrap()
        })
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_maps,
    bench_estimation,
    bench_triangulation,
    bench_full_pair
);
criterion_main!(benches);
