use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use histopatch::fps::{estimate_density, sample_plan, BandwidthRule};
use histopatch::retrieval::{knn_leave_one_out, wsi_leave_one_out, Exclusion};
use histopatch::rotate::{make_crop_set, rotate_continuous, CropSetConfig, Interpolation};
use histopatch::tissue::{find_contours, make_mask, ThresholdMethod};
use histopatch::vit::{ModelConfig, PathDino, WeightContainer};
use histopatch_bench::{lattice_candidates, noise_raster, random_store, tissue_slide};

fn fps(c: &mut Criterion) {
    let thumb = tissue_slide(1024, 768, 1);
    c.bench_function("mask_and_contours_1024x768", |b| {
        b.iter(|| {
            let mask = make_mask(black_box(&thumb), ThresholdMethod::Otsu).unwrap();
            find_contours(&mask)
        })
    });
    let candidates = lattice_candidates(2000);
    c.bench_function("kde_scott_2000", |b| b.iter(|| estimate_density(black_box(&candidates), BandwidthRule::Scott)));
    let model = estimate_density(&candidates, BandwidthRule::Scott).unwrap();
    c.bench_function("sample_plan_40", |b| b.iter(|| sample_plan(black_box(&model), 40, 8.0, 7)));
}

fn rotate(c: &mut Criterion) {
    let img = noise_raster(512, 2);
    c.bench_function("rotate_continuous_512", |b| {
        b.iter(|| rotate_continuous(black_box(&img), 33.0, Interpolation::Bilinear))
    });
    c.bench_function("crop_set_512", |b| b.iter(|| make_crop_set("b", black_box(&img), &CropSetConfig::default(), 3)));
}

fn vit(c: &mut Criterion) {
    let w = WeightContainer::random(ModelConfig::pathdino(224), 4).unwrap();
    let model = PathDino::new(&w).unwrap();
    let input = model.preprocess(&noise_raster(224, 5));
    let mut group = c.benchmark_group("vit");
    group.sample_size(10);
    group.bench_function("forward_224", |b| b.iter(|| model.forward(black_box(&input), false)));
    group.finish();
}

fn retrieval(c: &mut Criterion) {
    let store = random_store(50, 10, 384, 6);
    let mut group = c.benchmark_group("retrieval");
    group.sample_size(10);
    group.bench_function("knn_500x384", |b| b.iter(|| knn_leave_one_out(black_box(&store), 5, Exclusion::SameSlide)));
    group.bench_function("wsi_50_slides", |b| b.iter(|| wsi_leave_one_out(black_box(&store), 5, false)));
    group.finish();
}

criterion_group!(benches, fps, rotate, vit, retrieval);
criterion_main!(benches);
