use std::fs;
use std::path::Path;

use aedes_core::imgpipe::{
    load_dataset, load_samples, synthesize_images, write_synthetic_images, NormStats, SampleSource,
    Split, SplitName, SplitRatios, ZcaTransform, DEFAULT_IMAGE_SIZE,
};
use aedes_core::{Error, Rng};
use proptest::prelude::*;

fn write_png(path: &Path, w: u32, h: u32, value: u8) {
    let buf = vec![value; (w * h * 3) as usize];
    image::save_buffer(path, &buf, w, h, image::ExtendedColorType::Rgb8).unwrap();
}

fn two_class_tree() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("aegypti")).unwrap();
    fs::create_dir(dir.path().join("albopictus")).unwrap();
    write_png(&dir.path().join("aegypti/a.png"), 20, 10, 10);
    write_png(&dir.path().join("aegypti/b.png"), 7, 9, 200);
    write_png(&dir.path().join("albopictus/c.png"), 30, 30, 255);
    dir
}

#[test]
fn class_per_directory_layout() {
    let dir = two_class_tree();
    let (samples, report) = load_samples(dir.path(), DEFAULT_IMAGE_SIZE).unwrap();
    let labels: Vec<u8> = samples.iter().map(|s| s.label).collect();
    assert_eq!(labels, vec![0, 0, 1]);
    for s in &samples {
        assert_eq!(s.image.shape(), &[180, 180, 3]);
        assert!(s.image.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
    assert_eq!(samples[2].image.data()[0], 1.0);
    assert_eq!(report.total_loaded(), 3);
    assert_eq!(report.total_skipped(), 0);

    let (ds, _) = load_dataset(dir.path(), (8, 8), SplitRatios::default(), &Rng::new(1)).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.class_names, vec!["Ae. aegypti", "Ae. albopictus"]);
}

#[test]
fn loading_order_is_deterministic() {
    let dir = two_class_tree();
    let a = load_samples(dir.path(), (8, 8)).unwrap().0;
    let b = load_samples(dir.path(), (8, 8)).unwrap().0;
    let names = |v: &[aedes_core::imgpipe::Sample]| -> Vec<String> { v.iter().map(|s| s.source.to_string()).collect() };
    assert_eq!(names(&a), names(&b));
    assert!(a.iter().zip(&b).all(|(x, y)| x.image == y.image));
}

#[test]
fn undecodable_files_are_skipped_and_reported() {
    let dir = two_class_tree();
    fs::write(dir.path().join("albopictus/notes.txt"), "not an image").unwrap();
    fs::write(dir.path().join("albopictus/broken.png"), b"\x89PNG\r\n\x1a\ngarbage").unwrap();
    let (samples, report) = load_samples(dir.path(), (8, 8)).unwrap();
    assert_eq!(samples.len(), 3);
    assert_eq!(report.total_skipped(), 2);
    assert_eq!(report.classes[1].skipped.len(), 2);
    assert!(report.to_string().contains("skipped=2"));
}

#[test]
fn empty_class_is_fatal() {
    let dir = two_class_tree();
    for f in fs::read_dir(dir.path().join("albopictus")).unwrap() {
        fs::remove_file(f.unwrap().path()).unwrap();
    }
    assert!(matches!(load_samples(dir.path(), (8, 8)), Err(Error::Dataset(_))));
}

#[test]
fn structural_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert!(matches!(load_samples(&dir.path().join("missing"), (8, 8)), Err(Error::Dataset(_))));
    fs::create_dir(dir.path().join("only")).unwrap();
    write_png(&dir.path().join("only/x.png"), 4, 4, 1);
    assert!(matches!(load_samples(dir.path(), (8, 8)), Err(Error::Dataset(_))));
}

#[test]
fn synthetic_images_survive_disk_round_trip() {
    let rng = Rng::new(3);
    let images = synthesize_images(5, (16, 12), &rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let paths = write_synthetic_images(dir.path(), &images).unwrap();
    assert_eq!(paths.len(), 10);
    let (samples, _) = load_samples(dir.path(), (16, 12)).unwrap();
    for (img, s) in images.iter().zip(&samples) {
        assert_eq!(img.label, s.label);
        assert_eq!(img.to_tensor(), s.image);
    }
}

/// Best accuracy any single threshold on the image mean can reach, in
/// either orientation.
fn best_mean_threshold_accuracy(means: &[(f64, u8)]) -> f64 {
    let mut sorted = means.to_vec();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    let n = sorted.len();
    let total_ones = sorted.iter().filter(|m| m.1 == 1).count();
    let mut best: f64 = 0.0;
    let mut ones_below = 0;
    for k in 0..=n {
        // first k predicted 0, rest predicted 1
        let zeros_below = k - ones_below;
        let correct = zeros_below + (total_ones - ones_below);
        let acc = correct as f64 / n as f64;
        best = best.max(acc).max(1.0 - acc);
        if k < n && sorted[k].1 == 1 {
            ones_below += 1;
        }
    }
    best
}

#[test]
fn synthetic_classes_are_not_brightness_separable() {
    let images = synthesize_images(500, (64, 64), &Rng::new(7)).unwrap();
    let means: Vec<(f64, u8)> = images
        .iter()
        .map(|img| {
            let sum: f64 = img.pixels.iter().map(|&p| f64::from(p) / 255.0).sum();
            (sum / img.pixels.len() as f64, img.label)
        })
        .collect();
    let acc = best_mean_threshold_accuracy(&means);
    eprintln!("best pixel-mean threshold accuracy {acc}");
    assert!(acc <= 0.60, "pixel-mean threshold reaches {acc}");
}

#[test]
fn synthetic_dataset_determinism_and_counts() {
    let ratios = SplitRatios::default();
    let ds = aedes_core::imgpipe::generate_synthetic_dataset(100, (12, 12), &Rng::new(9), ratios).unwrap();
    assert_eq!(ds.len(), 200);
    assert_eq!(ds.samples.iter().filter(|s| s.label == 1).count(), 100);
    let again = aedes_core::imgpipe::generate_synthetic_dataset(100, (12, 12), &Rng::new(9), ratios).unwrap();
    assert_eq!(ds.fingerprint(), again.fingerprint());
    assert!(matches!(ds.samples[0].source, SampleSource::Synthetic(0)));
}

/// Well-conditioned 16-dimensional data on a pixel-intensity scale.
fn mixed_gaussian(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = Rng::new(seed);
    let mix: Vec<Vec<f64>> = (0..d)
        .map(|i| {
            (0..d)
                .map(|j| if i == j { 10.0 + 2.0 * i as f64 } else { rng.uniform_range(-2.0, 2.0) })
                .collect()
        })
        .collect();
    (0..n)
        .map(|_| {
            let z: Vec<f64> = (0..d).map(|_| rng.normal()).collect();
            (0..d).map(|j| 100.0 + (0..d).map(|k| z[k] * mix[k][j]).sum::<f64>()).collect()
        })
        .collect()
}

fn covariance(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let (n, d) = (rows.len(), rows[0].len());
    let mean: Vec<f64> = (0..d).map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / n as f64).collect();
    let mut c = vec![vec![0.0; d]; d];
    for (i, ci) in c.iter_mut().enumerate() {
        for (j, cij) in ci.iter_mut().enumerate() {
            *cij = rows.iter().map(|r| (r[i] - mean[i]) * (r[j] - mean[j])).sum::<f64>() / n as f64;
        }
    }
    c
}

#[test]
fn zca_whitens_full_rank_data() {
    let rows = mixed_gaussian(200, 16, 4);
    let z = ZcaTransform::fit(&rows, 1e-6).unwrap();
    let d = z.dim();
    for i in 0..d {
        for j in 0..d {
            assert!((z.whitening[i * d + j] - z.whitening[j * d + i]).abs() < 1e-10);
        }
    }
    let white: Vec<Vec<f64>> = rows.iter().map(|r| z.apply(r).unwrap()).collect();
    for j in 0..d {
        let m = white.iter().map(|r| r[j]).sum::<f64>() / white.len() as f64;
        assert!(m.abs() < 1e-8, "feature {j} mean {m}");
    }
    let c = covariance(&white);
    let frob: f64 = (0..d)
        .flat_map(|i| (0..d).map(move |j| (i, j)))
        .map(|(i, j)| (c[i][j] - if i == j { 1.0 } else { 0.0 }).powi(2))
        .sum::<f64>()
        .sqrt();
    eprintln!("whitened covariance deviation {frob:e}");
    assert!(frob < 1e-6, "Frobenius deviation {frob}");
}

#[test]
fn normalize_fits_per_channel() {
    let a = aedes_core::Tensor::new(&[1, 2, 3], vec![0.25, 0.0, 0.5, 0.75, 0.0, 0.5]).unwrap();
    let (stats, warnings) = NormStats::fit([&a]).unwrap();
    assert_eq!(stats.mean, vec![0.5, 0.0, 0.5]);
    assert_eq!(stats.std, vec![0.25, 1.0, 1.0]);
    assert_eq!(warnings.len(), 2);
}

proptest! {
    #[test]
    fn splits_partition_samples(labels in proptest::collection::vec(0u8..2, 4..200), seed in any::<u64>()) {
        let split = Split::stratified(&labels, SplitRatios::default(), &Rng::new(seed)).unwrap();
        let mut all: Vec<usize> = [SplitName::Train, SplitName::Val, SplitName::Test]
            .iter()
            .flat_map(|&n| split.get(n).to_vec())
            .collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..labels.len()).collect::<Vec<_>>());
    }
}
