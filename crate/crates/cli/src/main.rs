//! Command line front end for certified smoothing with pixel
//! partitioning.
//!
//! Every run is deterministic given its argument vector and seed, writes
//! a manifest describing itself next to its outputs, and removes partial
//! outputs when it fails. The thread count never changes results.

mod specs;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write as _};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use pprs_core::certify::{
    certify, read_certificates_jsonl, write_certificates_jsonl, Certificate, SmoothingConfig,
    TransformSpec,
};
use pprs_core::eval::{
    attack_check, certified_accuracy_curve, radius_grid, sigma_sweep, write_curve_csv,
    AttackOutcome, RunManifest,
};
use pprs_core::pnm::{load_pnm, save_pnm};
use pprs_core::rng::{sample_gaussian_image, Rng};
use pprs_core::segmentation::{partition_average, SegScheme};
use pprs_core::with_workers;
use pprs_core::Dataset64;

use specs::{build_classifier, load_dataset, load_labels, OutputGuard};

const SCHEME_NAMES: [&str; 4] = ["slic", "felzenszwalb", "quickshift", "grid"];
const MODE_NAMES: [&str; 4] = ["rs", "pprs-static", "pprs-dynamic", "pprs-fixed"];
const PPRS_MODES: [(&str, &str); 3] = [
    ("mode", "pprs-static"),
    ("mode", "pprs-dynamic"),
    ("mode", "pprs-fixed"),
];

#[derive(Parser)]
#[command(
    name = "pprs",
    version,
    about = "Certify image classifiers against L2 perturbations by Gaussian \
             smoothing, plain or over averaged pixel partitions"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Partition one image and write its label map.
    Segment(SegmentArgs),
    /// Certify every image in a dataset and write one JSON certificate
    /// per line.
    Certify(CertifyArgs),
    /// Score existing certificates into a certified-accuracy curve.
    Evaluate(EvaluateArgs),
    /// Certify and score a dataset across several noise levels.
    Sweep(SweepArgs),
    /// Probe how much a partitioning scheme moves under perturbation.
    Rho(RhoArgs),
    /// Attack certificates with perturbations just inside their radii.
    Attack(AttackArgs),
    /// Write noisy and partition-averaged versions of one image.
    NoisyDemo(NoisyDemoArgs),
}

/// Per-scheme parameters; only the group matching the chosen scheme is
/// read.
#[derive(Args, Clone, Debug)]
struct SchemeFlags {
    /// Grid cell height in pixels.
    #[arg(long, default_value_t = 4, help_heading = "Scheme options")]
    cell_height: usize,
    /// Grid cell width in pixels.
    #[arg(long, default_value_t = 4, help_heading = "Scheme options")]
    cell_width: usize,
    /// Target superpixel count for slic.
    #[arg(long, default_value_t = 64, help_heading = "Scheme options")]
    components: usize,
    /// Spatial-versus-color weight for slic.
    #[arg(long, default_value_t = 10.0, help_heading = "Scheme options")]
    compactness: f64,
    /// Refinement passes for slic.
    #[arg(long, default_value_t = 10, help_heading = "Scheme options")]
    iterations: usize,
    /// Merge threshold for felzenszwalb.
    #[arg(long, default_value_t = 1.0, help_heading = "Scheme options")]
    felz_scale: f64,
    /// Smallest allowed segment for felzenszwalb.
    #[arg(long, default_value_t = 4, help_heading = "Scheme options")]
    min_size: usize,
    /// Density bandwidth for quickshift.
    #[arg(long, default_value_t = 2.0, help_heading = "Scheme options")]
    kernel_size: f64,
    /// Longest allowed parent link for quickshift.
    #[arg(long, default_value_t = 4.0, help_heading = "Scheme options")]
    max_dist: f64,
    /// Color-versus-position weight for quickshift.
    #[arg(long, default_value_t = 1.0, help_heading = "Scheme options")]
    ratio: f64,
}

impl SchemeFlags {
    fn build(&self, name: &str) -> Result<SegScheme> {
        Ok(match name {
            "grid" => SegScheme::Grid {
                cell_height: self.cell_height,
                cell_width: self.cell_width,
            },
            "slic" => SegScheme::Slic {
                components: self.components,
                compactness: self.compactness,
                iterations: self.iterations,
            },
            "felzenszwalb" => SegScheme::Felzenszwalb {
                scale: self.felz_scale,
                min_size: self.min_size,
            },
            "quickshift" => SegScheme::Quickshift {
                kernel_size: self.kernel_size,
                max_dist: self.max_dist,
                ratio: self.ratio,
            },
            other => bail!("unknown scheme {other:?}"),
        })
    }
}

/// Monte-Carlo sampling budget shared by the certifying subcommands.
#[derive(Args, Clone, Debug)]
struct SamplingFlags {
    /// Selection-phase sample count.
    #[arg(long, default_value_t = 100, help_heading = "Sampling options")]
    n0: usize,
    /// Estimation-phase sample count.
    #[arg(long, default_value_t = 10_000, help_heading = "Sampling options")]
    n: usize,
    /// Allowed per-certificate failure probability.
    #[arg(long, default_value_t = 0.001, help_heading = "Sampling options")]
    alpha: f64,
    /// Samples per unit of parallel work; never affects results.
    #[arg(long, default_value_t = 32, help_heading = "Sampling options")]
    batch: usize,
}

impl SamplingFlags {
    fn config(&self, sigma: f64) -> Result<SmoothingConfig> {
        let mut cfg = SmoothingConfig::new(sigma, self.n0, self.n, self.alpha)?;
        cfg.batch = self.batch;
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct SegmentArgs {
    /// Input image (PGM or PPM).
    #[arg(long = "in", value_name = "IMG")]
    input: PathBuf,
    /// Partitioning scheme.
    #[arg(long, value_parser = SCHEME_NAMES)]
    scheme: String,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Output label map path.
    #[arg(long, value_name = "LABELMAP")]
    out: PathBuf,
    /// Also write the partition-averaged image here.
    #[arg(long, value_name = "IMG")]
    averaged_out: Option<PathBuf>,
}

#[derive(Args)]
struct CertifyArgs {
    /// Dataset spec: idx:IMAGES,LABELS, pgmdir:DIR, or blobs:KEY=V,...
    #[arg(long)]
    dataset: String,
    /// Classifier spec: halfspace:..., centroid:DATASET, or mlp:PATH.
    #[arg(long)]
    classifier: String,
    /// Smoothing mode: plain (rs) or partition-averaged (pprs-*).
    #[arg(long, value_parser = MODE_NAMES)]
    mode: String,
    /// Partitioning scheme; required by the pprs modes.
    #[arg(long, value_parser = SCHEME_NAMES, required_if_eq_any(PPRS_MODES))]
    scheme: Option<String>,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: f64,
    #[command(flatten)]
    sampling: SamplingFlags,
    /// Partition sensitivity; adds discounted radii to each certificate.
    #[arg(long)]
    rho: Option<f64>,
    /// Base seed; results are deterministic per (argv, seed).
    #[arg(long)]
    seed: u64,
    /// Thread count (defaults to one per core); never affects results.
    #[arg(long)]
    workers: Option<usize>,
    /// Output path for newline-delimited certificate JSON.
    #[arg(long, value_name = "CERTS")]
    out: PathBuf,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Certificates written by certify.
    #[arg(long, value_name = "CERTS")]
    certs: PathBuf,
    /// Ground truth: a dataset spec or a text file of one label per line.
    #[arg(long)]
    labels: String,
    /// Radius grid as start:stop:step.
    #[arg(long, default_value = "0:2:0.05")]
    grid: String,
    /// Output CSV path.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SweepArgs {
    /// Dataset spec: idx:IMAGES,LABELS, pgmdir:DIR, or blobs:KEY=V,...
    #[arg(long)]
    dataset: String,
    /// Classifier spec: halfspace:..., centroid:DATASET, or mlp:PATH.
    #[arg(long)]
    classifier: String,
    /// Smoothing mode: plain (rs) or partition-averaged (pprs-*).
    #[arg(long, value_parser = MODE_NAMES)]
    mode: String,
    /// Partitioning scheme; required by the pprs modes.
    #[arg(long, value_parser = SCHEME_NAMES, required_if_eq_any(PPRS_MODES))]
    scheme: Option<String>,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Comma-separated noise levels.
    #[arg(long)]
    sigmas: String,
    #[command(flatten)]
    sampling: SamplingFlags,
    /// Partition sensitivity; adds discounted radii to each certificate.
    #[arg(long)]
    rho: Option<f64>,
    /// Radius grid as start:stop:step.
    #[arg(long, default_value = "0:2:0.05")]
    grid: String,
    /// Base seed; results are deterministic per (argv, seed).
    #[arg(long)]
    seed: u64,
    /// Thread count (defaults to one per core); never affects results.
    #[arg(long)]
    workers: Option<usize>,
    /// Directory receiving per-sigma curves, sweep.csv, and the manifest.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RhoArgs {
    /// Partitioning scheme to probe.
    #[arg(long, value_parser = SCHEME_NAMES)]
    scheme: String,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Dataset spec supplying the probe images.
    #[arg(long)]
    dataset: String,
    /// Number of perturbation pairs to try.
    #[arg(long, default_value_t = 16)]
    pairs: usize,
    /// Perturbation standard deviation.
    #[arg(long, default_value_t = 0.25)]
    scale: f64,
    /// Base seed for the probe.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct AttackArgs {
    /// Certificates written by certify.
    #[arg(long, value_name = "CERTS")]
    certs: PathBuf,
    /// Dataset spec; must be the one the certificates were made from.
    #[arg(long)]
    dataset: String,
    /// Classifier spec; must match the certify run.
    #[arg(long)]
    classifier: String,
    /// Smoothing mode; must match the certify run.
    #[arg(long, value_parser = MODE_NAMES)]
    mode: String,
    /// Partitioning scheme; required by the pprs modes.
    #[arg(long, value_parser = SCHEME_NAMES, required_if_eq_any(PPRS_MODES))]
    scheme: Option<String>,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Noise standard deviation; must match the certify run.
    #[arg(long)]
    sigma: f64,
    #[command(flatten)]
    sampling: SamplingFlags,
    /// Probe directions per certificate.
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Base seed for probe directions and probe predictions.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Thread count (defaults to one per core); never affects results.
    #[arg(long)]
    workers: Option<usize>,
    /// Optional JSON report path.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NoisyDemoArgs {
    /// Input image (PGM or PPM).
    #[arg(long = "in", value_name = "IMG")]
    input: PathBuf,
    /// Noise standard deviation.
    #[arg(long)]
    sigma: f64,
    /// Partitioning scheme applied to the noisy image.
    #[arg(long, value_parser = SCHEME_NAMES, default_value = "slic")]
    scheme: String,
    #[command(flatten)]
    scheme_flags: SchemeFlags,
    /// Noise seed.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Where to write the noisy image.
    #[arg(long, value_name = "IMG")]
    out_noisy: PathBuf,
    /// Where to write the partition-averaged noisy image.
    #[arg(long, value_name = "IMG")]
    out_pprs: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Segment(args) => run_segment(args),
        Command::Certify(args) => run_certify(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Sweep(args) => run_sweep(args),
        Command::Rho(args) => run_rho(args),
        Command::Attack(args) => run_attack(args),
        Command::NoisyDemo(args) => run_noisy_demo(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn run_segment(args: SegmentArgs) -> Result<()> {
    let image = load_pnm::<f64>(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let scheme = args.scheme_flags.build(&args.scheme)?;
    let seg = scheme.segment(&image)?;

    let mut guard = OutputGuard::new();
    let out = guard.claim(&args.out);
    seg.write_label_map(&out)?;
    if let Some(avg_path) = &args.averaged_out {
        let averaged = partition_average(&image, &seg)?;
        save_pnm(guard.claim(avg_path), &averaged)?;
    }
    let manifest = RunManifest::new(
        args.input.display().to_string(),
        "-",
        scheme.describe(),
        unsampled_config(0.0),
        0,
        vec![],
    );
    write_manifest(&mut guard, &manifest, &args.out)?;
    guard.commit();

    println!(
        "segmented {} into {} partitions; label map at {}",
        args.input.display(),
        seg.partition_count(),
        args.out.display()
    );
    Ok(())
}

fn run_certify(args: CertifyArgs) -> Result<()> {
    let data = load_dataset(&args.dataset)?;
    if data.is_empty() {
        bail!("dataset {:?} is empty", args.dataset);
    }
    let classifier = build_classifier(&args.classifier, &data)?;
    let transform = build_transform(&args.mode, args.scheme.as_deref(), &args.scheme_flags, &data)?;
    let cfg = args.sampling.config(args.sigma)?;

    let root = Rng::from_seed(args.seed);
    let started = Instant::now();
    let certificates = with_workers(args.workers, || -> Result<Vec<Certificate>> {
        data.images()
            .iter()
            .enumerate()
            .map(|(i, image)| {
                certify(&classifier, image, &transform, &cfg, &root.child(i as u64), args.rho)
                    .with_context(|| format!("certifying image {i}"))
            })
            .collect()
    })?;

    let mut guard = OutputGuard::new();
    let out = guard.claim(&args.out);
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = BufWriter::new(file);
    write_certificates_jsonl(&certificates, &mut writer)?;
    writer.flush()?;
    let manifest = RunManifest::new(
        args.dataset.as_str(),
        args.classifier.as_str(),
        transform.describe(),
        cfg,
        args.seed,
        vec![args.sigma],
    );
    write_manifest(&mut guard, &manifest, &args.out)?;
    guard.commit();

    let certified: Vec<&Certificate> = certificates
        .iter()
        .filter(|c| !c.prediction.is_abstain())
        .collect();
    let mean_radius = if certified.is_empty() {
        0.0
    } else {
        certified.iter().map(|c| c.radius).sum::<f64>() / certified.len() as f64
    };
    println!(
        "certified {}/{} images (mean radius {:.4} over non-abstaining) in {:.1}s; wrote {}",
        certified.len(),
        data.len(),
        mean_radius,
        started.elapsed().as_secs_f64(),
        args.out.display()
    );
    Ok(())
}

fn run_evaluate(args: EvaluateArgs) -> Result<()> {
    let file =
        File::open(&args.certs).with_context(|| format!("opening {}", args.certs.display()))?;
    let certificates = read_certificates_jsonl(BufReader::new(file))?;
    let labels = load_labels(&args.labels)?;
    let radii = parse_grid(&args.grid)?;
    let curve = certified_accuracy_curve(&certificates, &labels, &radii)?;

    let manifest = RunManifest::new(
        args.labels.as_str(),
        "-",
        format!("curve(certs={},grid={})", args.certs.display(), args.grid),
        unsampled_config(0.0),
        0,
        vec![],
    );
    let mut guard = OutputGuard::new();
    let out = guard.claim(&args.out);
    let file = File::create(&out).with_context(|| format!("creating {}", out.display()))?;
    let mut writer = BufWriter::new(file);
    write_curve_csv(&mut writer, &curve, &manifest.hash())?;
    writer.flush()?;
    write_manifest(&mut guard, &manifest, &args.out)?;
    guard.commit();

    let first = curve.first().expect("grid is nonempty");
    println!(
        "wrote {} curve points to {}; certified accuracy at r={:.2} is {:.4}",
        curve.len(),
        args.out.display(),
        first.radius,
        first.certified_accuracy
    );
    Ok(())
}

fn run_sweep(args: SweepArgs) -> Result<()> {
    let data = load_dataset(&args.dataset)?;
    if data.is_empty() {
        bail!("dataset {:?} is empty", args.dataset);
    }
    let classifier = build_classifier(&args.classifier, &data)?;
    let transform = build_transform(&args.mode, args.scheme.as_deref(), &args.scheme_flags, &data)?;
    let sigmas = parse_sigmas(&args.sigmas)?;
    let radii = parse_grid(&args.grid)?;
    let base = args.sampling.config(sigmas[0])?;

    let root = Rng::from_seed(args.seed);
    let started = Instant::now();
    let points = with_workers(args.workers, || {
        sigma_sweep(
            &classifier,
            &data,
            std::slice::from_ref(&transform),
            &base,
            &sigmas,
            &radii,
            &root,
            args.rho,
        )
    })?;

    fs::create_dir_all(&args.out_dir)
        .with_context(|| format!("creating {}", args.out_dir.display()))?;
    let manifest = RunManifest::new(
        args.dataset.as_str(),
        args.classifier.as_str(),
        transform.describe(),
        base,
        args.seed,
        sigmas.clone(),
    );
    let hash = manifest.hash();

    let mut guard = OutputGuard::new();
    for point in &points {
        let path = guard.claim(args.out_dir.join(format!("curve_sigma_{}.csv", point.sigma)));
        let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
        let mut writer = BufWriter::new(file);
        write_curve_csv(&mut writer, &point.transforms[0].curve, &hash)?;
        writer.flush()?;
    }
    let summary_path = guard.claim(args.out_dir.join("sweep.csv"));
    let file = File::create(&summary_path)
        .with_context(|| format!("creating {}", summary_path.display()))?;
    let mut writer = BufWriter::new(file);
    writeln!(writer, "# manifest_hash={hash}")?;
    writeln!(
        writer,
        "sigma,transform,certified_accuracy,certified_f_measure,avg_superpixel_size"
    )?;
    for point in &points {
        for row in &point.transforms {
            let superpixel = row
                .avg_superpixel_size
                .map(|v| format!("{v:.6}"))
                .unwrap_or_else(|| "-".into());
            writeln!(
                writer,
                "{},{},{:.6},{:.6},{}",
                point.sigma, row.transform, row.certified_accuracy, row.certified_f_measure,
                superpixel
            )?;
        }
    }
    writer.flush()?;
    let manifest_file = guard.claim(args.out_dir.join("manifest.json"));
    fs::write(&manifest_file, manifest.to_json()?)
        .with_context(|| format!("writing {}", manifest_file.display()))?;
    guard.commit();

    for point in &points {
        let row = &point.transforms[0];
        println!(
            "sigma {:<6}: certified accuracy {:.4}, f-measure {:.4}",
            point.sigma, row.certified_accuracy, row.certified_f_measure
        );
    }
    println!(
        "wrote {} curve files, sweep.csv, and manifest.json to {} in {:.1}s",
        points.len(),
        args.out_dir.display(),
        started.elapsed().as_secs_f64()
    );
    Ok(())
}

fn run_rho(args: RhoArgs) -> Result<()> {
    let data = load_dataset(&args.dataset)?;
    let scheme = args.scheme_flags.build(&args.scheme)?;
    let mut rng = Rng::from_seed(args.seed);
    let started = Instant::now();
    let rho = pprs_core::segmentation::estimate_rho(
        data.images(),
        &scheme,
        args.pairs,
        args.scale,
        &mut rng,
    )?;
    println!(
        "estimated sensitivity rho = {rho:.6} ({} pairs, perturbation scale {}, {:.1}s)",
        args.pairs,
        args.scale,
        started.elapsed().as_secs_f64()
    );

    if let Some(out) = &args.out {
        let mut guard = OutputGuard::new();
        let report = serde_json::json!({
            "rho": rho,
            "scheme": scheme.describe(),
            "dataset": args.dataset,
            "pairs": args.pairs,
            "scale": args.scale,
            "seed": args.seed,
        });
        let path = guard.claim(out);
        fs::write(&path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
        let manifest = RunManifest::new(
            args.dataset.as_str(),
            "-",
            scheme.describe(),
            unsampled_config(args.scale),
            args.seed,
            vec![],
        );
        write_manifest(&mut guard, &manifest, out)?;
        guard.commit();
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_attack(args: AttackArgs) -> Result<()> {
    let file =
        File::open(&args.certs).with_context(|| format!("opening {}", args.certs.display()))?;
    let certificates = read_certificates_jsonl(BufReader::new(file))?;
    let data = load_dataset(&args.dataset)?;
    if certificates.len() != data.len() {
        bail!(
            "{} certificates but {} dataset images; pass the dataset the certificates were made from",
            certificates.len(),
            data.len()
        );
    }
    let classifier = build_classifier(&args.classifier, &data)?;
    let transform = build_transform(&args.mode, args.scheme.as_deref(), &args.scheme_flags, &data)?;
    let cfg = args.sampling.config(args.sigma)?;

    let root = Rng::from_seed(args.seed);
    let started = Instant::now();
    let mut totals = AttackOutcome::default();
    let mut probed = 0usize;
    let mut skipped = 0usize;
    with_workers(args.workers, || -> Result<()> {
        for (i, (image, cert)) in data.images().iter().zip(&certificates).enumerate() {
            if cert.prediction.is_abstain() || !(cert.radius > 0.0) {
                skipped += 1;
                continue;
            }
            let worst = classifier.worst_direction(image)?;
            let outcome = attack_check(
                &classifier,
                image,
                cert,
                &transform,
                &cfg,
                args.trials,
                &root.child(i as u64),
                worst.as_ref(),
            )
            .with_context(|| format!("probing certificate {i}"))?;
            totals.probes += outcome.probes;
            totals.violations += outcome.violations;
            totals.inconclusive += outcome.inconclusive;
            probed += 1;
        }
        Ok(())
    })?;

    println!(
        "probed {probed} certificates ({skipped} skipped): {} probes, {} violations, {} inconclusive ({:.1}s)",
        totals.probes,
        totals.violations,
        totals.inconclusive,
        started.elapsed().as_secs_f64()
    );

    if let Some(out) = &args.out {
        let mut guard = OutputGuard::new();
        let report = serde_json::json!({
            "certificates": certificates.len(),
            "probed": probed,
            "skipped": skipped,
            "trials": args.trials,
            "probes": totals.probes,
            "violations": totals.violations,
            "inconclusive": totals.inconclusive,
            "seed": args.seed,
        });
        let path = guard.claim(out);
        fs::write(&path, serde_json::to_string_pretty(&report)?)
            .with_context(|| format!("writing {}", path.display()))?;
        let manifest = RunManifest::new(
            args.dataset.as_str(),
            args.classifier.as_str(),
            transform.describe(),
            cfg,
            args.seed,
            vec![args.sigma],
        );
        write_manifest(&mut guard, &manifest, out)?;
        guard.commit();
        println!("wrote {}", out.display());
    }
    Ok(())
}

fn run_noisy_demo(args: NoisyDemoArgs) -> Result<()> {
    let image = load_pnm::<f64>(&args.input)
        .with_context(|| format!("loading {}", args.input.display()))?;
    let scheme = args.scheme_flags.build(&args.scheme)?;
    let mut rng = Rng::from_seed(args.seed);
    let noise = sample_gaussian_image::<f64>(
        image.height(),
        image.width(),
        image.channels(),
        args.sigma,
        &mut rng,
    )?;
    let noisy = image.add(&noise)?;
    let seg = scheme.segment(&noisy)?;
    let averaged = partition_average(&noisy, &seg)?;

    let mut guard = OutputGuard::new();
    save_pnm(guard.claim(&args.out_noisy), &noisy)?;
    save_pnm(guard.claim(&args.out_pprs), &averaged)?;
    let manifest = RunManifest::new(
        args.input.display().to_string(),
        "-",
        scheme.describe(),
        unsampled_config(args.sigma),
        args.seed,
        vec![args.sigma],
    );
    write_manifest(&mut guard, &manifest, &args.out_pprs)?;
    guard.commit();

    println!(
        "wrote noisy image to {} and its {}-partition average to {}",
        args.out_noisy.display(),
        seg.partition_count(),
        args.out_pprs.display()
    );
    Ok(())
}

/// Maps a mode name to a transform. The static mode freezes the
/// segmentation of the dataset's first image and applies it everywhere.
fn build_transform(
    mode: &str,
    scheme: Option<&str>,
    flags: &SchemeFlags,
    data: &Dataset64,
) -> Result<TransformSpec> {
    if mode == "rs" {
        return Ok(TransformSpec::None);
    }
    let name = scheme.ok_or_else(|| anyhow!("mode {mode} needs --scheme"))?;
    let scheme = flags.build(name)?;
    Ok(match mode {
        "pprs-static" => {
            let first = data
                .images()
                .first()
                .ok_or_else(|| anyhow!("pprs-static needs a nonempty dataset to segment"))?;
            TransformSpec::Static(scheme.segment(first)?)
        }
        "pprs-fixed" => TransformSpec::FixedOnInput(scheme),
        "pprs-dynamic" => TransformSpec::Dynamic(scheme),
        other => bail!("unknown mode {other:?}"),
    })
}

fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let [start, stop, step] = parts.as_slice() else {
        bail!("grid must be start:stop:step, got {spec:?}");
    };
    let parse = |name: &str, v: &str| -> Result<f64> {
        v.parse()
            .with_context(|| format!("parsing grid {name} {v:?}"))
    };
    Ok(radius_grid(
        parse("start", start)?,
        parse("stop", stop)?,
        parse("step", step)?,
    )?)
}

fn parse_sigmas(spec: &str) -> Result<Vec<f64>> {
    let mut sigmas: Vec<f64> = Vec::new();
    for part in spec.split(',').filter(|p| !p.trim().is_empty()) {
        let v: f64 = part
            .trim()
            .parse()
            .with_context(|| format!("parsing sigma {part:?}"))?;
        if sigmas.contains(&v) {
            bail!("sigma {v} appears twice");
        }
        sigmas.push(v);
    }
    if sigmas.is_empty() {
        bail!("need at least one sigma");
    }
    Ok(sigmas)
}

/// Manifest placeholder for runs that draw no smoothing samples; the
/// zero counts mark the sampling fields as not applicable.
fn unsampled_config(sigma: f64) -> SmoothingConfig {
    SmoothingConfig {
        sigma,
        n0: 0,
        n: 0,
        alpha: 0.0,
        batch: 0,
    }
}

fn manifest_path(output: &Path) -> PathBuf {
    PathBuf::from(format!("{}.manifest.json", output.display()))
}

fn write_manifest(guard: &mut OutputGuard, manifest: &RunManifest, next_to: &Path) -> Result<()> {
    let path = guard.claim(manifest_path(next_to));
    fs::write(&path, manifest.to_json()?)
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
