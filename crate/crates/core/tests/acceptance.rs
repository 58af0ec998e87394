//! Acceptance suite: prints one PASS/FAIL line per criterion and exits
//! non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use rand::Rng as _;
use scanpath::clustering::kmeans;
use scanpath::eval::{
    cross_validate, deception_rate, ClassifierKind, CvConfig, ExtraTraining, Mlp, PerFoldGeneration, TrainingSource,
};
use scanpath::gaze::Dataset;
use scanpath::generator::generate_scanpath_stream;
use scanpath::model::{generate_model_traced, model_from_str, model_to_string};
use scanpath::rng;
use scanpath::shape::{fit_pca, synthesize_shift};
use scanpath::synthetic::{class_layout_dataset, gaussian_blobs};
use scanpath::{generate_batch, generate_model, BuildConfig, Error, FeatureSpec, GeneratorConfig, ScanPathModel};

const KMEANS_TOL: f64 = 1e-9;
const KMEANS_INSTANCES: usize = 200;
const KMEANS_SEEDS: u64 = 10;
const KMEANS_BUDGET: Duration = Duration::from_secs(10);

const PCA_TOL: f64 = 1e-9;
const PCA_SETS: usize = 100;

const HIERARCHY_TOL: f64 = 1e-9;

const TERMINATION_TOL: f64 = 0.02;
const TERMINATION_BRANCHES: usize = 10_000;

const FIDELITY_SIGMA: f64 = 0.02;
const FIDELITY_POINTS: usize = 10_000;
const FIDELITY_MASS: f64 = 0.95;
const FIDELITY_BUDGET: Duration = Duration::from_secs(30);

const CHANCE_MARGIN: f64 = 0.15;
const MIXED_SLACK: f64 = 0.02;
const DECEPTION_FLOOR: f64 = 0.75;
const FIXTURE_CLASSES: usize = 4;
const FIXTURE_PER_CLASS: usize = 20;
const FIXTURE_SIGMA: f64 = 0.02;

const GRADIENT_TOL: f64 = 1e-4;
const ROUND_TRIP_TOL: f64 = 1e-12;
const CLI_BUDGET: Duration = Duration::from_secs(120);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn wcss_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let d = points[0].len();
    let mut total = 0.0;
    for c in 0..k {
        let members: Vec<&Vec<f64>> = points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect();
        if members.is_empty() {
            continue;
        }
        let mut mean = vec![0.0; d];
        for m in &members {
            for (a, v) in mean.iter_mut().zip(m.iter()) {
                *a += v / members.len() as f64;
            }
        }
        total += members.iter().map(|m| sq_dist(m, &mean)).sum::<f64>();
    }
    total
}

/// Exhaustive optimum over all labelings with at most k parts.
fn brute_force_wcss(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut labels = vec![0usize; n];
    let mut best = f64::INFINITY;
    loop {
        best = best.min(wcss_of(points, &labels, k));
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn criterion_1() -> Outcome {
    let start = Instant::now();
    let mut r = rng::seeded(1001);
    let mut worst: f64 = 0.0;
    for _ in 0..KMEANS_INSTANCES {
        let n = r.gen_range(1..=8);
        let d = if r.gen_bool(0.5) { 2 } else { 3 };
        let k = r.gen_range(1..=3);
        let points: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen::<f64>()).collect()).collect();
        let best = (0..KMEANS_SEEDS)
            .map(|s| kmeans(&points, k, s).map(|a| a.wcss))
            .collect::<scanpath::Result<Vec<f64>>>()
            .map_err(|e| e.to_string())?
            .into_iter()
            .fold(f64::INFINITY, f64::min);
        worst = worst.max(best - brute_force_wcss(&points, k));
    }
    let elapsed = start.elapsed();
    check(
        worst <= KMEANS_TOL && elapsed < KMEANS_BUDGET,
        format!("{KMEANS_INSTANCES} instances, worst gap to optimum {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn criterion_2() -> Outcome {
    let mut r = rng::seeded(2002);
    let (mut orth_err, mut recon_err, mut variance_short): (f64, f64, f64) = (0.0, 0.0, 0.0);
    for _ in 0..PCA_SETS {
        let n = r.gen_range(2..=12);
        let d = r.gen_range(2..=4);
        let shifts: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();

        let full = fit_pca(&shifts, 1.0).map_err(|e| e.to_string())?;
        if full.rank() != (n - 1).min(d) {
            return Err(format!("full-rank fit kept {} of {} components", full.rank(), (n - 1).min(d)));
        }
        for (i, a) in full.components.iter().enumerate() {
            for (j, b) in full.components.iter().enumerate() {
                let want = if i == j { 1.0 } else { 0.0 };
                orth_err = orth_err.max((dot(a, b) - want).abs());
            }
        }
        for s in &shifts {
            let back = synthesize_shift(&full, &full.project(s)).map_err(|e| e.to_string())?;
            recon_err = recon_err.max(back.iter().zip(s).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
        }

        let fraction = r.gen_range(0.5..1.0);
        let part = fit_pca(&shifts, fraction).map_err(|e| e.to_string())?;
        let total: f64 = full.variances.iter().sum();
        let kept: f64 = part.variances.iter().sum();
        if part.rank() >= 1 {
            variance_short = variance_short.max(fraction - kept / total);
        }
    }
    let two = fit_pca(&[vec![1.0, 0.0], vec![-1.0, 0.0]], 0.95).map_err(|e| e.to_string())?;
    let analytic = two.mean_shift == vec![0.0, 0.0]
        && two.rank() == 1
        && two.components[0] == vec![1.0, 0.0]
        && two.variances == vec![2.0];
    check(
        orth_err <= PCA_TOL && recon_err <= PCA_TOL && variance_short <= 0.0 && analytic,
        format!(
            "{PCA_SETS} sets, orthonormality error {orth_err:.2e}, reconstruction error {recon_err:.2e}, \
             retained variance shortfall {variance_short:.2e}, two-point case {}",
            if analytic { "exact" } else { "WRONG" }
        ),
    )
}

fn criterion_3() -> Outcome {
    let ds = gaussian_blobs(&[[0.25, 0.25], [0.75, 0.75]], 0.02, 50, 2, 3003);
    let cfg = BuildConfig { max_level: 3, num_clusters: 2, ..BuildConfig::default() };
    let (model, trace) = generate_model_traced(&ds, &cfg).map_err(|e| e.to_string())?;

    let level1 = model.levels[0].len();
    let supports: Vec<usize> = model.levels[0].iter().map(|n| n.support).collect();
    let mut partition_ok = true;
    let mut mean_err: f64 = 0.0;

    for (r, rec) in ds.recordings.iter().enumerate() {
        let mut covered: Vec<usize> =
            trace.levels[0].iter().filter(|c| c.recording == r).flat_map(|c| c.points.clone()).collect();
        covered.sort_unstable();
        partition_ok &= covered == (0..rec.len()).collect::<Vec<_>>();
    }
    for l in 1..trace.levels.len() {
        for (p, parent) in trace.levels[l - 1].iter().enumerate() {
            let children: Vec<_> = trace.levels[l].iter().filter(|c| c.parent == Some(p)).collect();
            if children.is_empty() {
                partition_ok &= parent.points.len() < 2;
                continue;
            }
            let mut covered: Vec<usize> = children.iter().flat_map(|c| c.points.clone()).collect();
            covered.sort_unstable();
            let mut own = parent.points.clone();
            own.sort_unstable();
            partition_ok &= covered == own && children.iter().all(|c| c.recording == parent.recording);

            let total: usize = children.iter().map(|c| c.points.len()).sum();
            for (i, v) in parent.mean.iter().enumerate() {
                let weighted: f64 =
                    children.iter().map(|c| c.mean[i] * c.points.len() as f64).sum::<f64>() / total as f64;
                mean_err = mean_err.max((weighted - v).abs());
            }
        }
    }
    check(
        partition_ok && mean_err <= HIERARCHY_TOL && level1 == 2 && supports == vec![2, 2],
        format!(
            "{} levels, partition {}, weighted-mean error {mean_err:.2e}, level-1 nodes {level1} with support {supports:?}",
            model.depth(),
            if partition_ok { "holds" } else { "BROKEN" }
        ),
    )
}

fn layout_model(seed: u64) -> Result<ScanPathModel, String> {
    let ds = class_layout_dataset(1, FIXTURE_PER_CLASS, FIXTURE_SIGMA, seed);
    let cfg = BuildConfig { max_level: 3, num_clusters: 3, seed, ..BuildConfig::default() };
    generate_model(&ds, &cfg).map_err(|e| e.to_string())
}

fn criterion_4() -> Outcome {
    let model = layout_model(4004)?;
    let cfg = GeneratorConfig { max_clusters: 3, max_subclusters: 3, seed: 44, ..GeneratorConfig::default() };
    let a = generate_batch(&model, &cfg, 200).map_err(|e| e.to_string())?;
    let b = generate_batch(&model, &cfg, 200).map_err(|e| e.to_string())?;
    let identical = a == b;

    let mut timing_ok = true;
    for rec in &a {
        let t: Vec<f64> = rec.points().iter().map(|p| p.t.unwrap_or(f64::NAN)).collect();
        timing_ok &= t.windows(2).all(|w| w[0] <= w[1]);
        if t.len() >= 2 {
            timing_ok &= t[0] == 0.0 && t[t.len() - 1] == 1.0;
        }
    }

    let (mut draws, mut ends, mut bound_ok, mut stream) = (0usize, 0usize, true, 0u64);
    let levels = model.depth() as i32;
    while draws < TERMINATION_BRANCHES {
        let (rec, stats) = generate_scanpath_stream(&model, &cfg, stream).map_err(|e| e.to_string())?;
        bound_ok &=
            rec.len() == stats.leaves && stats.leaves <= (cfg.max_clusters * cfg.max_subclusters).pow(levels as u32);
        draws += stats.branch_draws;
        ends += stats.terminations;
        stream += 1;
    }
    let freq = ends as f64 / draws as f64;
    let expected = 1.0 / (cfg.max_clusters as f64 + 1.0);
    check(
        identical && timing_ok && bound_ok && (freq - expected).abs() <= TERMINATION_TOL,
        format!(
            "batch reproducible {identical}, timestamps ok {timing_ok}, leaf bound ok {bound_ok}, \
             termination {freq:.4} vs {expected:.4} over {draws} branches"
        ),
    )
}

fn criterion_5() -> Outcome {
    let start = Instant::now();
    let centers = [[0.2, 0.25], [0.75, 0.3], [0.45, 0.8]];
    let ds = gaussian_blobs(&centers, FIDELITY_SIGMA, 60, 10, 5005);
    let build = BuildConfig { max_level: 2, num_clusters: 3, seed: 5, ..BuildConfig::default() };
    let model = generate_model(&ds, &build).map_err(|e| e.to_string())?;
    let cfg = GeneratorConfig { max_clusters: 3, max_subclusters: 3, seed: 55, ..GeneratorConfig::default() };
    let (mut total, mut near, mut stream) = (0usize, 0usize, 0u64);
    let radius2 = (3.0 * FIDELITY_SIGMA).powi(2);
    while total < FIDELITY_POINTS {
        let (rec, _) = generate_scanpath_stream(&model, &cfg, stream).map_err(|e| e.to_string())?;
        for p in rec.points().iter().take(FIDELITY_POINTS - total) {
            total += 1;
            near += usize::from(centers.iter().any(|c| (p.x - c[0]).powi(2) + (p.y - c[1]).powi(2) <= radius2));
        }
        stream += 1;
    }
    let mass = near as f64 / total as f64;
    let elapsed = start.elapsed();
    check(
        mass >= FIDELITY_MASS && elapsed < FIDELITY_BUDGET,
        format!("{:.2}% of {total} points within 3 sigma, {:.2}s", 100.0 * mass, elapsed.as_secs_f64()),
    )
}

fn fixture() -> Dataset {
    class_layout_dataset(FIXTURE_CLASSES, FIXTURE_PER_CLASS, FIXTURE_SIGMA, 6006)
}

fn fixture_generation() -> PerFoldGeneration {
    PerFoldGeneration {
        build: BuildConfig { max_level: 2, num_clusters: 3, ..BuildConfig::default() },
        generator: GeneratorConfig { max_clusters: 3, max_subclusters: 3, ..GeneratorConfig::default() },
        per_class: FIXTURE_PER_CLASS,
    }
}

fn criterion_6() -> Outcome {
    let ds = fixture();
    let generation = fixture_generation();
    let run = |training| {
        let cfg = CvConfig { training, seed: 66, ..CvConfig::default() };
        let extra =
            if training == TrainingSource::Real { ExtraTraining::None } else { ExtraTraining::PerFold(&generation) };
        cross_validate(&ds, &cfg, extra).map(|r| (r.mean_accuracy, r.chance_level)).map_err(|e| e.to_string())
    };
    let (real, chance) = run(TrainingSource::Real)?;
    let (generated, _) = run(TrainingSource::Generated)?;
    let (mixed, _) = run(TrainingSource::Mixed)?;
    let a = generated > chance + CHANCE_MARGIN;
    let b = real >= generated;
    let c = mixed >= real - MIXED_SLACK;
    check(
        a && b && c,
        format!(
            "heatmap/centroid accuracy: generated-only {generated:.3} (chance {chance:.3}) [{}], real-only {real:.3} [{}], \
             real+generated {mixed:.3} [{}]",
            if a { "ok" } else { "low" },
            if b { "ok" } else { "below generated" },
            if c { "ok" } else { "below real" }
        ),
    )
}

fn criterion_7() -> Outcome {
    let ds = fixture();
    let setup = fixture_generation();
    let mut generated = BTreeMap::new();
    for (c, class) in ds.classes().map_err(|e| e.to_string())?.into_iter().enumerate() {
        let subset = ds.subset(&class);
        let build = BuildConfig { seed: 700 + c as u64, ..setup.build.clone() };
        let model = generate_model(&subset, &build).map_err(|e| e.to_string())?;
        let gen = GeneratorConfig { seed: 770 + c as u64, ..setup.generator.clone() };
        generated.insert(class, generate_batch(&model, &gen, 50).map_err(|e| e.to_string())?);
    }
    let heat = deception_rate(&ds, &generated, FeatureSpec::heatmap(), ClassifierKind::NearestCentroid, 7)
        .map_err(|e| e.to_string())?;
    let hov = deception_rate(&ds, &generated, FeatureSpec::hov(), ClassifierKind::NearestCentroid, 7)
        .map_err(|e| e.to_string())?;
    check(
        heat.overall_rate >= DECEPTION_FLOOR,
        format!(
            "heatmap deception {:.3} (floor {DECEPTION_FLOOR}), HOV deception {:.3} (reported only)",
            heat.overall_rate, hov.overall_rate
        ),
    )
}

fn criterion_8() -> Outcome {
    let mut r = rng::seeded(8008);
    let mlp = Mlp::new(4, 7, 3, 88);
    let xs: Vec<Vec<f64>> = (0..5).map(|_| (0..4).map(|_| r.gen_range(-1.0..1.0)).collect()).collect();
    let ys = vec![0, 1, 2, 1, 0];
    let (_, grad) = mlp.loss_and_gradient(&xs, &ys);
    let params = mlp.params();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    let mut probe = mlp.clone();
    for i in 0..params.len() {
        let mut p = params.clone();
        p[i] += h;
        probe.set_params(&p);
        let up = probe.loss_and_gradient(&xs, &ys).0;
        p[i] -= 2.0 * h;
        probe.set_params(&p);
        let down = probe.loss_and_gradient(&xs, &ys).0;
        let numeric = (up - down) / (2.0 * h);
        let rel = (grad[i] - numeric).abs() / grad[i].abs().max(numeric.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    check(worst <= GRADIENT_TOL, format!("{} parameters, worst relative error {worst:.2e}", params.len()))
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_9() -> Outcome {
    let model = layout_model(9009)?;
    let text = model_to_string(&model).map_err(|e| e.to_string())?;
    let back = model_from_str(&text).map_err(|e| e.to_string())?;
    let mut err: f64 = 0.0;
    let same_shape = back.dim == model.dim
        && back.max_level == model.max_level
        && back.build_config == model.build_config
        && back.levels.len() == model.levels.len();
    for (la, lb) in model.levels.iter().zip(&back.levels) {
        if la.len() != lb.len() {
            err = f64::INFINITY;
            continue;
        }
        for (a, b) in la.iter().zip(lb) {
            if a.level != b.level || a.support != b.support || a.shape.components.len() != b.shape.components.len() {
                err = f64::INFINITY;
            }
            err = err.max(max_diff(&a.mean_shift, &b.mean_shift));
            err = err.max(max_diff(&a.shape.mean_shift, &b.shape.mean_shift));
            err = err.max(max_diff(&a.shape.variances, &b.shape.variances));
            for (ca, cb) in a.shape.components.iter().zip(&b.shape.components) {
                err = err.max(max_diff(ca, cb));
            }
        }
    }
    let bumped = text.replacen("\"version\": 1", "\"version\": 2", 1);
    let rejected = matches!(model_from_str(&bumped), Err(Error::Version { .. }));
    check(
        same_shape && err <= ROUND_TRIP_TOL && rejected,
        format!("{} nodes, max field difference {err:.2e}, version mismatch rejected {rejected}", model.node_count()),
    )
}

fn scanpath(dir: &Path, args: &[&str]) -> Result<String, String> {
    let out =
        Command::new(env!("CARGO_BIN_EXE_scanpath")).current_dir(dir).args(args).output().map_err(|e| e.to_string())?;
    if out.status.success() {
        Ok(String::from_utf8_lossy(&out.stdout).into_owned())
    } else {
        Err(format!("`scanpath {}` failed: {}", args.join(" "), String::from_utf8_lossy(&out.stderr)))
    }
}

fn criterion_10() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    let start = Instant::now();
    scanpath(d, &["synth", "--class-count", "4", "--per-class", "20", "--seed", "10", "--out", "real.csv"])?;
    let per_class = 250;
    let mut gen_files = Vec::new();
    for c in 0..4 {
        let class = format!("c{c}");
        let model = format!("{class}.json");
        let gen = format!("{class}-gen.csv");
        scanpath(
            d,
            &[
                "train",
                "--input",
                "real.csv",
                "--class",
                &class,
                "--max-level",
                "2",
                "--clusters",
                "3",
                "--seed",
                "10",
                "--out",
                &model,
            ],
        )?;
        scanpath(
            d,
            &[
                "generate",
                "--model",
                &model,
                "--count",
                &per_class.to_string(),
                "--max-clusters",
                "3",
                "--max-subclusters",
                "3",
                "--label",
                &class,
                "--seed",
                "10",
                "--out",
                &gen,
            ],
        )?;
        gen_files.push(gen);
    }
    let mut cv = vec!["eval", "cv", "--input", "real.csv", "--folds", "5", "--seed", "10", "--gen"];
    cv.extend(gen_files.iter().map(String::as_str));
    let report = scanpath(d, &cv)?;
    let mut deceive = vec!["eval", "deceive", "--real", "real.csv", "--seed", "10", "--gen"];
    deceive.extend(gen_files.iter().map(String::as_str));
    let deception = scanpath(d, &deceive)?;
    let elapsed = start.elapsed();
    let generated: usize = gen_files
        .iter()
        .map(|f| scanpath::gaze::load_recordings(d.join(f), &Default::default()).map(|ds| ds.len()).unwrap_or(0))
        .sum();
    let accuracy = report.lines().find(|l| l.starts_with("mean accuracy")).unwrap_or("").trim().to_string();
    let rate = deception.lines().find(|l| l.starts_with("overall")).unwrap_or("").trim().to_string();
    check(
        elapsed < CLI_BUDGET && generated == 4 * per_class,
        format!("{generated} generated, {:.1}s; {accuracy}; {rate}", elapsed.as_secs_f64()),
    )
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("k-means matches exhaustive optimum", criterion_1),
        ("PCA correctness", criterion_2),
        ("hierarchy invariants", criterion_3),
        ("generation determinism and bounds", criterion_4),
        ("distributional fidelity", criterion_5),
        ("experiment-shape ordering", criterion_6),
        ("deception floor", criterion_7),
        ("MLP gradient check", criterion_8),
        ("model serialization", criterion_9),
        ("end-to-end CLI", criterion_10),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {:>2} PASS {name}: {detail} [{secs:.1}s]", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {:>2} FAIL {name}: {detail} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
