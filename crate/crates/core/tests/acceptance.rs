//! Acceptance suite: one test per advertised guarantee, each printing a
//! single PASS/FAIL line (visible with `--nocapture`) before asserting.
//! Tolerances and runtime bounds are pinned in the constants below.

use std::time::Instant;

use pprs_core::blobs::{generate_blobs, generate_blobs_dataset};
use pprs_core::certify::{certify, Certificate, SmoothingConfig, TransformSpec};
use pprs_core::classifier::{Halfspace, NearestCentroid};
use pprs_core::eval::{
    attack_check, certified_accuracy_curve, evaluate, radius_grid, write_curve_csv, RunManifest,
};
use pprs_core::idx::{encode_idx_images, encode_idx_labels, load_idx};
use pprs_core::rng::{sample_gaussian_image, split_seed, Rng};
use pprs_core::segmentation::{
    grid_partition, operator_norm_diff, partition_average, SegScheme, Segmentation,
};
use pprs_core::stats::{clopper_pearson_lower, std_normal_cdf};
use pprs_core::{with_workers, Image64, Result};

fn announce(tag: &str, pass: bool, elapsed: f64, bound_secs: Option<f64>, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    match bound_secs {
        Some(bound) => println!(
            "ACCEPTANCE {tag}: {verdict} ({elapsed:.1}s of {bound:.0}s allowed; {detail})"
        ),
        None => println!("ACCEPTANCE {tag}: {verdict} ({elapsed:.1}s; {detail})"),
    }
}

/// Half random smooth noise images, half piecewise-constant ones, so the
/// content-driven schemes see both regimes.
fn random_test_images(count: usize, base_seed: u64) -> Vec<Image64> {
    (0..count)
        .map(|i| {
            let seed = split_seed(base_seed, i as u64);
            if i % 2 == 0 {
                let mut rng = Rng::from_seed(seed);
                sample_gaussian_image::<f64>(12, 16, 1, 1.0, &mut rng)
                    .unwrap()
                    .map(|v| 0.5 + 0.25 * v)
            } else {
                generate_blobs::<f64>(12, 16, 5, 4, seed).unwrap().0
            }
        })
        .collect()
}

fn all_schemes() -> [SegScheme; 4] {
    [
        SegScheme::Grid {
            cell_height: 3,
            cell_width: 4,
        },
        SegScheme::Slic {
            components: 6,
            compactness: 5.0,
            iterations: 4,
        },
        SegScheme::Felzenszwalb {
            scale: 0.5,
            min_size: 4,
        },
        SegScheme::Quickshift {
            kernel_size: 1.5,
            max_dist: 3.0,
            ratio: 1.0,
        },
    ]
}

#[test]
fn c1_partition_averaging_is_idempotent_across_schemes() {
    const PAIRS: usize = 100;
    const TOLERANCE: f64 = 1e-12;
    const BOUND_SECS: f64 = 10.0;

    let started = Instant::now();
    let images = random_test_images(PAIRS, 111);
    let schemes = all_schemes();
    let mut worst = 0.0f64;
    for (i, image) in images.iter().enumerate() {
        let seg = schemes[i % schemes.len()].segment(image).unwrap();
        let once = partition_average(image, &seg).unwrap();
        let twice = partition_average(&once, &seg).unwrap();
        for (a, b) in once.data().iter().zip(twice.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst <= TOLERANCE && elapsed < BOUND_SECS;
    announce(
        "c1 averaging-idempotence",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!("worst double-application drift {worst:.2e} over {PAIRS} pairs"),
    );
    assert!(worst <= TOLERANCE, "drift {worst} exceeds {TOLERANCE}");
    assert!(elapsed < BOUND_SECS);
}

#[test]
fn c2_grid_averaging_divides_noise_std_by_sqrt_cell_size() {
    const FIELDS: usize = 100_000;
    const REL_TOLERANCE: f64 = 0.03;
    const BOUND_SECS: f64 = 30.0;

    let started = Instant::now();
    let mut detail = String::new();
    let mut pass = true;
    for (cell, m) in [(2usize, 4.0f64), (4usize, 16.0f64)] {
        let seg = grid_partition(8, 8, cell, cell).unwrap();
        let mut sum = vec![0.0f64; 64];
        let mut sumsq = vec![0.0f64; 64];
        let root = Rng::from_seed(222 + cell as u64);
        for field in 0..FIELDS {
            let mut child = root.child(field as u64);
            let noise = sample_gaussian_image::<f64>(8, 8, 1, 1.0, &mut child).unwrap();
            let averaged = partition_average(&noise, &seg).unwrap();
            for (i, v) in averaged.data().iter().enumerate() {
                sum[i] += v;
                sumsq[i] += v * v;
            }
        }
        let want = 1.0 / m.sqrt();
        let mut worst_rel = 0.0f64;
        for i in 0..64 {
            let mean = sum[i] / FIELDS as f64;
            let std = (sumsq[i] / FIELDS as f64 - mean * mean).sqrt();
            worst_rel = worst_rel.max((std - want).abs() / want);
        }
        pass &= worst_rel <= REL_TOLERANCE;
        detail.push_str(&format!("m={m}: worst rel err {worst_rel:.4}; "));
    }
    let elapsed = started.elapsed().as_secs_f64();
    pass &= elapsed < BOUND_SECS;
    announce(
        "c2 effective-noise-reduction",
        pass,
        elapsed,
        Some(BOUND_SECS),
        detail.trim_end_matches("; "),
    );
    assert!(pass, "{detail}");
}

/// Linear oracle instances pinned to chosen smoothed probabilities. The
/// bias is solved so the clean margin hits `z * sigma * ||w||` exactly,
/// making `Phi(z)` the true top-class probability and `|z| * sigma` the
/// analytic certified radius.
fn oracle_instances(sigma: f64) -> Vec<(Halfspace<f64>, Image64, f64)> {
    let mut zs = Vec::with_capacity(100);
    for i in 0..20 {
        zs.push(-1.0 + i as f64 / 19.0);
    }
    for i in 0..20 {
        zs.push(0.012 + (0.24 - 0.012) * i as f64 / 19.0);
    }
    // The sampling budget bounds how sharply a probability near 1/2 can
    // be certified: the binomial bound costs about 0.005 in probability,
    // which is 5% of the radius already at z = 0.25 and is still 2.5% at
    // z = 0.5. Tightness instances therefore start at z = 0.5; below
    // that only soundness is claimed.
    for i in 0..40 {
        zs.push(0.5 + (2.326 - 0.5) * i as f64 / 39.0);
    }
    for i in 0..20 {
        zs.push(2.4 + (4.5 - 2.4) * i as f64 / 19.0);
    }

    zs.iter()
        .enumerate()
        .map(|(i, &z)| {
            let mut rng = Rng::from_seed(split_seed(3_000, i as u64));
            let weights = sample_gaussian_image::<f64>(4, 4, 1, 1.0, &mut rng).unwrap();
            let x = sample_gaussian_image::<f64>(4, 4, 1, 1.0, &mut rng).unwrap();
            let bias = z * sigma * weights.l2_norm() - weights.dot(&x).unwrap();
            let halfspace = Halfspace::new(weights, bias).unwrap();
            let prob = halfspace.smoothed_prob(&x, sigma).unwrap();
            assert!(
                (prob - std_normal_cdf(z)).abs() < 1e-9,
                "instance {i} missed its target probability"
            );
            (halfspace, x, z)
        })
        .collect()
}

fn certify_oracles(
    instances: &[(Halfspace<f64>, Image64, f64)],
    cfg: &SmoothingConfig,
) -> Vec<Certificate> {
    instances
        .iter()
        .enumerate()
        .map(|(i, (halfspace, x, _))| {
            certify(
                halfspace,
                x,
                &TransformSpec::None,
                cfg,
                &Rng::from_seed(split_seed(7_000, i as u64)),
                None,
            )
            .unwrap()
        })
        .collect()
}

#[test]
fn c3_monte_carlo_radii_are_sound_and_tight_against_the_linear_oracle() {
    const BOUND_SECS: f64 = 300.0;
    const MIN_SOUND: usize = 97;

    let started = Instant::now();
    let sigma = 1.0;
    let cfg = SmoothingConfig::new(sigma, 100, 100_000, 0.001).unwrap();
    let instances = oracle_instances(sigma);
    let certificates = certify_oracles(&instances, &cfg);

    let mut sound = 0usize;
    let mut tight_failures = Vec::new();
    let mut tight_window = 0usize;
    for ((halfspace, x, z), cert) in instances.iter().zip(&certificates) {
        let analytic = halfspace.analytic_radius(x).unwrap();
        if cert.radius <= analytic + 1e-9 {
            sound += 1;
        }
        let true_prob = std_normal_cdf(*z);
        if (0.6..=0.99).contains(&true_prob) {
            tight_window += 1;
            if cert.radius + 1e-12 < 0.95 * analytic {
                tight_failures.push((*z, cert.radius, analytic));
            }
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = sound >= MIN_SOUND && tight_failures.is_empty() && elapsed < BOUND_SECS;
    announce(
        "c3 certification-soundness-and-tightness",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!(
            "sound {sound}/100, tightness window {tight_window} instances, {} below 0.95x",
            tight_failures.len()
        ),
    );
    assert!(sound >= MIN_SOUND, "only {sound} of 100 sound");
    assert!(
        tight_failures.is_empty(),
        "radii below 0.95x analytic: {tight_failures:?}"
    );
    assert!(elapsed < BOUND_SECS);
}

#[test]
fn c4_probes_inside_the_certified_radius_never_flip_the_prediction() {
    const BOUND_SECS: f64 = 120.0;
    const TRIALS: usize = 1;

    let started = Instant::now();
    let sigma = 1.0;
    let cfg = SmoothingConfig::new(sigma, 100, 100_000, 0.001).unwrap();
    let instances = oracle_instances(sigma);
    let certificates = certify_oracles(&instances, &cfg);

    let mut probed = 0usize;
    let mut violations = 0usize;
    let mut inconclusive = 0usize;
    for (i, ((halfspace, x, _), cert)) in instances.iter().zip(&certificates).enumerate() {
        if cert.prediction.is_abstain() || cert.radius <= 0.0 {
            continue;
        }
        let worst = halfspace.worst_direction(x).unwrap();
        let outcome = attack_check(
            halfspace,
            x,
            cert,
            &TransformSpec::None,
            &cfg,
            TRIALS,
            &Rng::from_seed(split_seed(8_000, i as u64)),
            Some(&worst),
        )
        .unwrap();
        probed += 1;
        violations += outcome.violations;
        inconclusive += outcome.inconclusive;
    }
    let elapsed = started.elapsed().as_secs_f64();
    let pass = violations == 0 && probed > 50 && elapsed < BOUND_SECS;
    announce(
        "c4 attack-falsification",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!("{probed} certificates probed, {violations} violations, {inconclusive} inconclusive"),
    );
    assert_eq!(violations, 0, "a probe inside the radius flipped the prediction");
    assert!(probed > 50, "too few certificates to probe: {probed}");
    assert!(elapsed < BOUND_SECS);
}

#[test]
fn c5_binomial_lower_bound_is_calibrated() {
    const TRIALS: usize = 2000;
    const BOUND_SECS: f64 = 30.0;

    let started = Instant::now();
    let mut rng = Rng::from_seed(4242);
    let mut exceed = 0usize;
    for _ in 0..TRIALS {
        let mut successes = 0u64;
        for _ in 0..1000 {
            if rng.uniform() < 0.9 {
                successes += 1;
            }
        }
        if clopper_pearson_lower(successes, 1000, 0.001).unwrap() > 0.9 {
            exceed += 1;
        }
    }
    let rate = exceed as f64 / TRIALS as f64;

    let spot = clopper_pearson_lower(100, 100, 0.001).unwrap();
    let want = 0.001f64.powf(0.01);
    let spot_err = (spot - want).abs();

    let elapsed = started.elapsed().as_secs_f64();
    let pass = rate <= 0.005 && spot_err <= 1e-4 && elapsed < BOUND_SECS;
    announce(
        "c5 binomial-bound-calibration",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!("exceed rate {rate:.4} (cap 0.005), unanimous-count spot error {spot_err:.1e}"),
    );
    assert!(rate <= 0.005, "bound exceeded the truth in {rate} of trials");
    assert!(spot_err <= 1e-4, "closed-form spot check off by {spot_err}");
    assert!(elapsed < BOUND_SECS);
}

/// Adds one fixed Gaussian draw to every training image, the standard
/// smoothing setup of fitting the classifier on noisy examples. A
/// nearest-centroid fit on clean blobs is almost a global-mean threshold,
/// and averaging preserves the global mean of signal and noise alike, so
/// the clean fit leaves nothing for partition smoothing to improve. The
/// noisy fit leaves pixel-scale residue in the centroids, which is
/// exactly the component that partition averaging removes.
fn noisy_fit(
    clean: &pprs_core::image::LabeledDataset<f64>,
    sigma: f64,
    seed: u64,
) -> NearestCentroid<f64> {
    let mut rng = Rng::from_seed(seed);
    let first = &clean.images()[0];
    let (h, w, ch) = (first.height(), first.width(), first.channels());
    let noisy: Vec<Image64> = clean
        .images()
        .iter()
        .map(|x| {
            let noise = sample_gaussian_image::<f64>(h, w, ch, sigma, &mut rng).unwrap();
            let data: Vec<f64> = x
                .data()
                .iter()
                .zip(noise.data())
                .map(|(v, z)| v + z)
                .collect();
            Image64::new(h, w, ch, data).unwrap()
        })
        .collect();
    let dataset = pprs_core::image::LabeledDataset::new(
        noisy,
        clean.labels().to_vec(),
        clean.class_count(),
    )
    .unwrap();
    NearestCentroid::fit(&dataset).unwrap()
}

#[test]
fn c6_partition_smoothing_beats_plain_smoothing_on_blobs() {
    const BOUND_SECS: f64 = 600.0;

    let started = Instant::now();
    let train = generate_blobs_dataset::<f64>(16, 16, 3, 4, 32, 9001).unwrap();
    let test = generate_blobs_dataset::<f64>(16, 16, 3, 4, 500, 9002).unwrap();
    let classifier = noisy_fit(&train, 0.5, 9003);
    let cfg = SmoothingConfig {
        sigma: 0.5,
        n0: 50,
        n: 2000,
        alpha: 0.001,
        batch: 32,
    };
    let transforms = [
        TransformSpec::None,
        TransformSpec::Dynamic(SegScheme::Slic {
            components: 16,
            compactness: 10.0,
            iterations: 3,
        }),
    ];
    let radii = radius_grid(0.0, 1.0, 0.25).unwrap();
    let evals = evaluate(
        &classifier,
        &test,
        &transforms,
        &cfg,
        &radii,
        &Rng::from_seed(777),
        None,
    )
    .unwrap();

    let plain = &evals[0];
    let partitioned = &evals[1];
    let plain_at_quarter = plain.curve[1].certified_accuracy;
    let part_at_quarter = partitioned.curve[1].certified_accuracy;
    let elapsed = started.elapsed().as_secs_f64();
    let pass = partitioned.certified_accuracy >= plain.certified_accuracy
        && part_at_quarter > plain_at_quarter
        && elapsed < BOUND_SECS;
    announce(
        "c6 partition-smoothing-gain",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!(
            "certified accuracy {:.3} vs {:.3} plain; at r=0.25: {:.3} vs {:.3} plain",
            partitioned.certified_accuracy,
            plain.certified_accuracy,
            part_at_quarter,
            plain_at_quarter
        ),
    );
    assert!(
        partitioned.certified_accuracy >= plain.certified_accuracy,
        "partition smoothing lost on certified accuracy: {} vs {}",
        partitioned.certified_accuracy,
        plain.certified_accuracy
    );
    assert!(
        part_at_quarter > plain_at_quarter,
        "partition smoothing failed to dominate at radius 0.25: {part_at_quarter} vs {plain_at_quarter}"
    );
    assert!(elapsed < BOUND_SECS);
}

#[test]
fn c7_desk_scale_smoke_run_reproduces_its_csv_byte_for_byte() {
    const BOUND_SECS: f64 = 900.0;

    let started = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let all = generate_blobs_dataset::<f64>(28, 28, 6, 10, 2200, 5150).unwrap();
    let train_images = encode_idx_images(&all.images()[..2000]).unwrap();
    let train_labels = encode_idx_labels(&all.labels()[..2000]).unwrap();
    let test_images = encode_idx_images(&all.images()[2000..]).unwrap();
    let test_labels = encode_idx_labels(&all.labels()[2000..]).unwrap();
    for (name, bytes) in [
        ("train-images.idx", &train_images),
        ("train-labels.idx", &train_labels),
        ("test-images.idx", &test_images),
        ("test-labels.idx", &test_labels),
    ] {
        std::fs::write(dir.path().join(name), bytes).unwrap();
    }

    let pipeline = |csv_name: &str| -> (Vec<u8>, bool) {
        let train = load_idx::<f64>(
            dir.path().join("train-images.idx"),
            dir.path().join("train-labels.idx"),
        )
        .unwrap();
        let test = load_idx::<f64>(
            dir.path().join("test-images.idx"),
            dir.path().join("test-labels.idx"),
        )
        .unwrap();
        assert_eq!(train.len(), 2000);
        assert_eq!(test.len(), 200);

        let classifier = NearestCentroid::fit(&train).unwrap();
        let cfg = SmoothingConfig::new(0.5, 50, 1000, 0.001).unwrap();
        let radii = radius_grid(0.0, 2.0, 0.05).unwrap();
        let certificates: Vec<Certificate> = test
            .images()
            .iter()
            .enumerate()
            .map(|(i, x)| {
                certify(
                    &classifier,
                    x,
                    &TransformSpec::None,
                    &cfg,
                    &Rng::from_seed(split_seed(31_337, i as u64)),
                    None,
                )
                .unwrap()
            })
            .collect();
        let curve = certified_accuracy_curve(&certificates, test.labels(), &radii).unwrap();
        let nonincreasing = curve
            .windows(2)
            .all(|w| w[1].certified_accuracy <= w[0].certified_accuracy);

        let manifest = RunManifest::new(
            "idx:train/test split of the synthetic archive",
            "nearest-centroid",
            "rs",
            cfg,
            31_337,
            vec![0.5],
        );
        let path = dir.path().join(csv_name);
        let file = std::fs::File::create(&path).unwrap();
        let mut writer = std::io::BufWriter::new(file);
        write_curve_csv(&mut writer, &curve, &manifest.hash()).unwrap();
        drop(writer);
        (std::fs::read(&path).unwrap(), nonincreasing)
    };

    let (first_bytes, first_monotone) = pipeline("first.csv");
    let (second_bytes, second_monotone) = pipeline("second.csv");

    let elapsed = started.elapsed().as_secs_f64();
    let identical = first_bytes == second_bytes;
    let pass = identical && first_monotone && second_monotone && elapsed < BOUND_SECS;
    announce(
        "c7 desk-scale-smoke-run",
        pass,
        elapsed,
        Some(BOUND_SECS),
        &format!(
            "200 certificates, curve nonincreasing {first_monotone}, rerun byte-identical {identical}"
        ),
    );
    assert!(first_monotone && second_monotone, "curve rose somewhere");
    assert!(identical, "rerun CSV differs");
    assert!(elapsed < BOUND_SECS);
}

fn segment_is_connected(seg: &Segmentation, diagonals: bool) -> bool {
    let (h, w) = (seg.height(), seg.width());
    let mut claimed = vec![false; h * w];
    for part in 0..seg.partition_count() {
        let start = match seg.labels().iter().position(|&l| l as usize == part) {
            Some(p) => p,
            None => return false,
        };
        let mut queue = vec![start];
        claimed[start] = true;
        let mut reached = 0usize;
        while let Some(pix) = queue.pop() {
            reached += 1;
            let (y, x) = (pix / w, pix % w);
            let mut push = |ny: usize, nx: usize| {
                let np = ny * w + nx;
                if !claimed[np] && seg.labels()[np] as usize == part {
                    claimed[np] = true;
                    queue.push(np);
                }
            };
            if y > 0 {
                push(y - 1, x);
            }
            if y + 1 < h {
                push(y + 1, x);
            }
            if x > 0 {
                push(y, x - 1);
            }
            if x + 1 < w {
                push(y, x + 1);
            }
            if diagonals {
                if y > 0 && x > 0 {
                    push(y - 1, x - 1);
                }
                if y > 0 && x + 1 < w {
                    push(y - 1, x + 1);
                }
                if y + 1 < h && x > 0 {
                    push(y + 1, x - 1);
                }
                if y + 1 < h && x + 1 < w {
                    push(y + 1, x + 1);
                }
            }
        }
        if reached != seg.sizes()[part] {
            return false;
        }
    }
    claimed.iter().all(|&c| c)
}

#[test]
fn c8_segmentations_are_valid_partitions_and_opnorm_matches_dense_svd() {
    const IMAGES_PER_SCHEME: usize = 50;
    const OPNORM_INSTANCES: usize = 20;
    const OPNORM_REL_TOLERANCE: f64 = 0.01;

    let started = Instant::now();
    let images = random_test_images(IMAGES_PER_SCHEME, 888);
    // Each scheme is checked at the connectivity its construction
    // guarantees. Grid cells are rectangles; SLIC relabels stray
    // fragments onto 4-adjacent neighbors; quickshift with
    // max_dist < sqrt(2) can only link axially. Felzenszwalb merges over
    // the 8-neighbor graph, so diagonal-only segments are legitimate
    // there and it is verified under 8-adjacency instead.
    let cases: [(SegScheme, bool); 4] = [
        (
            SegScheme::Grid {
                cell_height: 3,
                cell_width: 4,
            },
            false,
        ),
        (
            SegScheme::Slic {
                components: 6,
                compactness: 5.0,
                iterations: 4,
            },
            false,
        ),
        (
            SegScheme::Felzenszwalb {
                scale: 0.5,
                min_size: 4,
            },
            true,
        ),
        (
            SegScheme::Quickshift {
                kernel_size: 1.5,
                max_dist: 1.3,
                ratio: 1.0,
            },
            false,
        ),
    ];
    let mut checked = 0usize;
    for (scheme, diagonals) in &cases {
        for image in &images {
            let seg = scheme.segment(image).unwrap();
            assert_eq!(
                seg.sizes().iter().sum::<usize>(),
                image.pixel_count(),
                "sizes do not cover the image under {}",
                scheme.describe()
            );
            let max_label = seg.labels().iter().copied().max().unwrap() as usize;
            assert_eq!(
                max_label + 1,
                seg.partition_count(),
                "labels not compacted under {}",
                scheme.describe()
            );
            assert!(
                segment_is_connected(&seg, *diagonals),
                "disconnected segment under {}",
                scheme.describe()
            );
            checked += 1;
        }
    }

    // Dense cross-check of the matrix-free operator norm on 3x4 grids.
    let mut worst_rel = 0.0f64;
    for i in 0..OPNORM_INSTANCES {
        let mut rng = Rng::from_seed(split_seed(999, i as u64));
        let labels_a: Vec<u32> = (0..12).map(|_| (rng.next_u64() % 4) as u32).collect();
        let labels_b: Vec<u32> = (0..12).map(|_| (rng.next_u64() % 3) as u32).collect();
        let seg_a = Segmentation::from_labels(3, 4, labels_a).unwrap();
        let seg_b = Segmentation::from_labels(3, 4, labels_b).unwrap();

        let dense = |seg: &Segmentation| {
            nalgebra::DMatrix::<f64>::from_fn(12, 12, |r, c| {
                if seg.labels()[r] == seg.labels()[c] {
                    1.0 / seg.sizes()[seg.labels()[r] as usize] as f64
                } else {
                    0.0
                }
            })
        };
        let want = (dense(&seg_a) - dense(&seg_b))
            .svd(false, false)
            .singular_values
            .max();
        let got = operator_norm_diff(&seg_a, &seg_b, 200, &mut rng).unwrap();
        if want > 1e-12 {
            worst_rel = worst_rel.max((got - want).abs() / want);
        } else {
            assert!(got <= 1e-12);
        }
    }

    let elapsed = started.elapsed().as_secs_f64();
    let pass = worst_rel <= OPNORM_REL_TOLERANCE;
    announce(
        "c8 segmentation-invariants",
        pass,
        elapsed,
        None,
        &format!(
            "{checked} segmentations valid (felzenszwalb on its 8-neighbor graph, others 4-neighbor); opnorm worst rel err {worst_rel:.2e} over {OPNORM_INSTANCES} instances"
        ),
    );
    assert!(
        worst_rel <= OPNORM_REL_TOLERANCE,
        "operator norm off by {worst_rel} relative"
    );
}

#[test]
fn c9_thread_count_never_changes_certificates() {
    let started = Instant::now();
    let data = generate_blobs_dataset::<f64>(10, 10, 4, 3, 4, 77).unwrap();
    let classifier = NearestCentroid::fit(&data).unwrap();
    let cfg = SmoothingConfig::new(0.5, 20, 400, 0.01).unwrap();
    let transform = TransformSpec::Dynamic(SegScheme::Grid {
        cell_height: 2,
        cell_width: 5,
    });
    let root = Rng::from_seed(4096);

    let run = |workers: usize| -> Result<Vec<Certificate>> {
        with_workers(Some(workers), || {
            data.images()
                .iter()
                .enumerate()
                .map(|(i, x)| certify(&classifier, x, &transform, &cfg, &root.child(i as u64), None))
                .collect()
        })
    };
    let single = run(1).unwrap();
    let quad = run(4).unwrap();

    let elapsed = started.elapsed().as_secs_f64();
    let pass = single == quad;
    announce(
        "c9 parallel-determinism",
        pass,
        elapsed,
        None,
        &format!("{} certificates identical across 1 and 4 workers", single.len()),
    );
    assert_eq!(single, quad);
}
