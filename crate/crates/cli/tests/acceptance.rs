//! End-to-end acceptance checks, one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 4 7`. Criteria 1 to 3
//! measure what desk-scale training learns; a FAIL there is reported but only
//! fails the run when `KINCHAIN_ACCEPTANCE_STRICT=1`. The rest always must pass.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use kinchain_core::chain::{forward_kinematics, sample_config, JointState, LinkColor, LENGTH_LABEL_WIDTH};
use kinchain_core::dataset::{
    encode_instance, generate_instance, DatasetManifest, GenerationParams, InstanceRecord, Modality, StackMode,
};
use kinchain_core::render::{render_depth, Camera, Capsule, RigParams, Scene};
use kinchain_eval::{
    accuracy, confusion, length_error, mean_length_error, run_benchmark, BenchmarkConfig, BenchmarkEntry,
    BenchmarkEvent, Evaluation, SplitData,
};
use kinchain_models::check::check_gradients;
use kinchain_models::{build_counter_conv3d, build_end_to_end, train, Architecture, Network, StackSource, Task, TrainConfig};
use nalgebra::{Point3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MV_DEPTH: Architecture = Architecture::new(Network::Conv3d, Modality::Depth, StackMode::Multiview);
const MV_GREY: Architecture = Architecture::new(Network::Conv3d, Modality::Gray, StackMode::Multiview);
const TMP_DEPTH: Architecture = Architecture::new(Network::Conv3d, Modality::Depth, StackMode::Temporal);

/// Desk-scale benchmark settings.
const PER_N: usize = 100;
const SEEDS: [u64; 3] = [0, 1, 2];
/// Every tenth timestep is kept when building stacks.
const STRIDE: usize = 10;
const SPLIT: (usize, usize) = (60, 10);

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let strict = std::env::var("KINCHAIN_ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let run = |k: usize| wanted.is_empty() || wanted.contains(&k);

    let mut lines = Vec::new();
    let mut failed = false;
    let mut record = |k: usize, asserted: bool, v: Verdict, took: Duration| {
        let status = if v.pass { "PASS" } else { "FAIL" };
        let note = if !v.pass && !asserted { " (reported, not asserted)" } else { "" };
        let line = format!("criterion {k}: {status} {}{note} [{:.0?}]", v.detail, took);
        println!("{line}");
        lines.push(line);
        failed |= asserted && !v.pass;
    };

    for (k, check) in [
        (7, criterion_renderer as fn() -> Verdict),
        (5, criterion_metrics),
        (6, criterion_determinism),
        (4, criterion_gradients),
        (8, criterion_overfit),
    ] {
        if run(k) {
            let t = Instant::now();
            let v = check();
            record(k, true, v, t.elapsed());
        }
    }
    if run(1) || run(2) || run(3) {
        let t = Instant::now();
        let [c1, c2, c3] = desk_benchmark();
        let took = t.elapsed();
        for (k, v) in [(1, c1), (2, c2), (3, c3)] {
            if run(k) {
                record(k, strict, v, took);
            }
        }
    }

    println!("acceptance summary:");
    for l in &lines {
        println!("  {l}");
    }
    if failed {
        std::process::exit(1);
    }
}

// criterion 7

/// Distance from `p` to segment `ab`.
fn segment_distance(p: &Point3<f64>, a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let s = if len2 == 0.0 { 0.0 } else { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) };
    (p - (a + ab * s)).norm()
}

/// First crossing of the capsule surface along the optical axis, found by
/// sphere tracing its distance field.
fn sphere_trace(cam: &Camera, cap: &Capsule) -> Option<f64> {
    let dir = (cam.look_at - cam.position).normalize();
    let mut t = cam.near;
    for _ in 0..1_000_000 {
        let f = segment_distance(&(cam.position + dir * t), &cap.a, &cap.b) - cap.radius;
        if f < 1e-13 {
            return Some(t);
        }
        t += f;
        if t >= cam.far {
            return None;
        }
    }
    None
}

fn unit<R: Rng>(rng: &mut R) -> Vector3<f64> {
    loop {
        let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        let n = v.norm();
        if n > 0.1 && n <= 1.0 {
            return v / n;
        }
    }
}

fn criterion_renderer() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst: f64 = 0.0;
    let mut hits = 0;
    let mut wrong = 0;
    for scene_no in 0..100 {
        // odd resolution puts a pixel center on the optical axis
        let cam = Camera {
            position: Point3::from(unit(&mut rng) * rng.gen_range(2.0..6.0)),
            look_at: Point3::from(unit(&mut rng) * rng.gen_range(0.0..1.0)),
            up: Vector3::z(),
            fov_y: rng.gen_range(0.4..1.4),
            width: 65,
            height: 49,
            near: 0.1,
            far: 10.0,
        };
        let forward = (cam.look_at - cam.position).normalize();
        let r = rng.gen_range(0.03..0.3);
        let along = unit(&mut rng);
        // `normal` is perpendicular to both the axis and the segment, so the
        // axis passes the segment line at exactly `offset`
        let normal = forward.cross(&along).normalize();
        let along = normal.cross(&forward) * rng.gen_range(-1.0..1.0) + forward * rng.gen_range(-1.0..1.0);
        let along = along.normalize();
        let miss = scene_no % 5 == 4;
        let offset = r * if miss { rng.gen_range(1.5..3.0) } else { rng.gen_range(0.0..0.7) };
        let closest = cam.position + forward * rng.gen_range(1.5..6.0) + normal * offset;
        let cap = Capsule {
            a: closest - along * rng.gen_range(0.0..0.6),
            b: closest + along * rng.gen_range(0.0..0.6),
            radius: r,
            color: LinkColor::Red,
        };
        let expected = sphere_trace(&cam, &cap);
        let scene = Scene {
            capsules: vec![cap],
            ground: None,
        };
        let depth = f64::from(render_depth(&scene, &cam).at(24, 32));
        match expected {
            Some(t) => {
                hits += 1;
                worst = worst.max((depth - t).abs());
            }
            None if miss && depth == cam.far as f32 as f64 => {}
            None => wrong += 1,
        }
    }

    let mut outside = 0;
    let mut endpoints = 0;
    let rigs = [
        RigParams::default().cameras().unwrap(),
        RigParams::default().with_resolution(64, 48).cameras().unwrap(),
    ];
    for _ in 0..1000 {
        let n = rng.gen_range(1..=6);
        let cfg = sample_config(&mut rng, n).unwrap();
        let angles = (0..n).map(|_| rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect();
        let poses = forward_kinematics(&cfg, &JointState::new(angles)).unwrap();
        for (a, b) in poses.segments() {
            for p in [a, b] {
                for cam in rigs.iter().flatten() {
                    endpoints += 1;
                    if !cam.project(&p).is_some_and(|q| q.inside(cam)) {
                        outside += 1;
                    }
                }
            }
        }
    }
    verdict(
        worst <= 1e-6 && wrong == 0 && hits >= 70 && outside == 0,
        format!(
            "center-ray depth error {worst:.2e} m over {hits} hits, {wrong} disagreements; \
             {outside} of {endpoints} endpoint projections outside the image"
        ),
    )
}

// criterion 5

fn criterion_metrics() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let pairs = 10_000;
    let truths: Vec<usize> = (0..pairs).map(|_| rng.gen_range(1..=6)).collect();
    let preds: Vec<usize> = (0..pairs)
        .map(|i| if rng.gen_bool(0.4) { truths[i] } else { rng.gen_range(1..=6) })
        .collect();

    let matrix = confusion(&preds, &truths).unwrap();
    let mut cells_ok = true;
    for t in 1..=6 {
        for p in 1..=6 {
            let brute = (0..pairs).filter(|&i| truths[i] == t && preds[i] == p).count() as u64;
            cells_ok &= matrix.counts[t - 1][p - 1] == brute;
        }
    }
    let correct = truths.iter().zip(&preds).filter(|(t, p)| t == p).count();
    let acc = accuracy(&preds, &truths).unwrap();
    let acc_ok = acc == correct as f64 / pairs as f64 && matrix.trace() == correct as u64;

    let mut worst: f64 = 0.0;
    let mut padded_truths = Vec::new();
    let mut padded_preds = Vec::new();
    for _ in 0..pairs {
        let n = rng.gen_range(1..=6);
        let mut truth = [0.0f64; LENGTH_LABEL_WIDTH];
        let mut pred = [0.0; LENGTH_LABEL_WIDTH];
        for v in truth.iter_mut().take(n + 1) {
            *v = rng.gen_range(0.05..1.5);
        }
        let m = rng.gen_range(1..=6);
        for v in pred.iter_mut().take(m + 1) {
            *v = rng.gen_range(0.0..1.5);
        }
        let mut brute = 0.0;
        for i in 0..LENGTH_LABEL_WIDTH {
            brute += (truth[i] - pred[i]).powi(2);
        }
        worst = worst.max((length_error(&truth, &pred).unwrap() - brute).abs());
        padded_truths.push(truth);
        padded_preds.push(pred);
    }
    let mean = mean_length_error(&padded_truths, &padded_preds).unwrap();
    let brute_mean = padded_truths
        .iter()
        .zip(&padded_preds)
        .map(|(t, p)| t.iter().zip(p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>())
        .sum::<f64>()
        / pairs as f64;
    worst = worst.max((mean - brute_mean).abs());
    verdict(
        cells_ok && acc_ok && worst <= 1e-9,
        format!("confusion cells exact: {cells_ok}, accuracy exact: {acc_ok}, max E_L deviation {worst:.1e} over {pairs} pairs"),
    )
}

// criterion 6

fn generate(dir: &Path, extra: &[&str]) {
    let mut args = vec!["generate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    let out = Command::new(env!("CARGO_BIN_EXE_kinchain")).args(&args).output().unwrap();
    assert!(out.status.success(), "generate failed: {}", String::from_utf8_lossy(&out.stderr));
}

/// Whole-file checksum and checksum of the body before the stored trailer.
fn checksums(dir: &Path, m: &DatasetManifest) -> Vec<(u32, u32)> {
    m.instances
        .iter()
        .map(|e| {
            let bytes = fs::read(dir.join(&e.file)).unwrap();
            (crc32fast::hash(&bytes), crc32fast::hash(&bytes[..bytes.len() - 4]))
        })
        .collect()
}

fn criterion_determinism() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let flags = ["--profile", "desk", "--per-n", "2", "--frames", "20", "--seed", "2024", "--jobs", "2"];
    generate(&a, &flags);
    generate(&b, &flags);
    let ma = DatasetManifest::load(&a).unwrap();
    let mb = DatasetManifest::load(&b).unwrap();
    let manifests_equal = fs::read(a.join("manifest.json")).unwrap() == fs::read(b.join("manifest.json")).unwrap();
    let sums_a = checksums(&a, &ma);
    let sums_b = checksums(&b, &mb);
    let files_equal = sums_a == sums_b && sums_a.iter().zip(&ma.instances).all(|(s, e)| s.1 == e.crc32);

    let victim = &ma.instances[7];
    let path = a.join(&victim.file);
    let original = fs::read(&path).unwrap();
    fs::remove_file(&path).unwrap();
    let regenerated = encode_instance(&ma.regenerate(victim).unwrap()) == original;
    generate(&a, &["--repair"]);
    let repaired = fs::read(&path).unwrap() == original;
    verdict(
        manifests_equal && files_equal && regenerated && repaired,
        format!(
            "{} instances: manifests identical {manifests_equal}, file checksums identical {files_equal}, \
             deleted {} regenerated bit-exact {regenerated}, repaired bit-exact {repaired}",
            ma.instances.len(),
            victim.id
        ),
    )
}

// criterion 4

fn criterion_gradients() -> Verdict {
    let lstm = Architecture::new(Network::CnnLstm, Modality::Depth, StackMode::Temporal);
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut parts = Vec::new();
    for (name, task, arch) in [
        ("conv3d counter", Task::Count, MV_DEPTH),
        ("cnn-lstm counter", Task::Count, lstm),
        ("length regressor", Task::Lengths(3), MV_DEPTH),
        ("end-to-end", Task::EndToEnd, MV_DEPTH),
    ] {
        let report = check_gradients(task, arch, 11, 200).unwrap();
        worst = worst.max(report.max_rel_error);
        if report.checked == 0 {
            worst = f64::INFINITY;
        }
        parts.push(format!("{name} {:.1e} ({} params)", report.max_rel_error, report.checked));
    }
    let took = start.elapsed();
    verdict(
        worst <= 1e-4 && took <= Duration::from_secs(300),
        format!("max relative error {worst:.1e}: {}", parts.join(", ")),
    )
}

// criterion 8

fn criterion_overfit() -> Verdict {
    let params = GenerationParams {
        frames: 1,
        ..GenerationParams::desk_scale()
    };
    let insts: Vec<InstanceRecord> = (0..20)
        .map(|k| generate_instance(800 + k as u64, k % 6 + 1, &params).unwrap())
        .collect();
    let src = StackSource::new(insts.iter().collect(), Modality::Depth, StackMode::Multiview);
    let dims = [params.rig.count, params.rig.height_px, params.rig.width];
    let scale = (1.0 / params.rig.far) as f32;
    let cfg = TrainConfig {
        epochs: 200,
        batch_size: 4,
        stacks_per_instance: 1,
        val_stacks_per_instance: 1,
        ..TrainConfig::default()
    };
    let mut counter = build_counter_conv3d(MV_DEPTH, dims, scale, 3).unwrap();
    let h = train(&mut counter, &src, Some(&src), &cfg, |_| {}).unwrap();
    let counted = h.records.iter().find(|r| r.val_metric == Some(1.0)).map(|r| r.epoch);
    let mut e2e = build_end_to_end(MV_DEPTH, dims, scale, 3).unwrap();
    let h = train(&mut e2e, &src, Some(&src), &cfg, |_| {}).unwrap();
    let fitted = h
        .records
        .iter()
        .find(|r| r.val_metric.is_some_and(|e| e < 1e-2))
        .map(|r| r.epoch);
    let show = |e: Option<usize>| e.map_or("never".to_string(), |e| format!("epoch {e}"));
    verdict(
        counted.is_some() && fitted.is_some(),
        format!(
            "20 stacks: counter accuracy 1.0 at {}, end-to-end E_L < 1e-2 at {}",
            show(counted),
            show(fitted)
        ),
    )
}

// criteria 1 to 3

/// 100 chains per link count at desk scale, split 60/10/30 within each count.
fn desk_split(seed: u64) -> SplitData {
    let params = GenerationParams::desk_scale();
    assert_eq!((params.rig.width, params.rig.height_px, params.rig.count, params.frames), (64, 48, 8, 100));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = SplitData::default();
    for n in 1..=6 {
        let mut order: Vec<usize> = (0..PER_N).collect();
        order.shuffle(&mut rng);
        for (rank, k) in order.into_iter().enumerate() {
            let inst_seed = (seed << 32) | ((n as u64) << 16) | k as u64;
            let inst = generate_instance(inst_seed, n, &params).unwrap().subsample(STRIDE);
            if rank < SPLIT.0 {
                data.train.push(inst);
            } else if rank < SPLIT.0 + SPLIT.1 {
                data.val.push(inst);
            } else {
                data.test.push(inst);
            }
        }
    }
    data
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn desk_benchmark() -> [Verdict; 3] {
    let entries: Vec<BenchmarkEntry> = [
        (MV_DEPTH, Evaluation::Count),
        (MV_DEPTH, Evaluation::Lengths),
        (MV_DEPTH, Evaluation::EndToEnd),
        (TMP_DEPTH, Evaluation::Count),
        (MV_GREY, Evaluation::Count),
    ]
    .into_iter()
    .map(|(arch, evaluation)| BenchmarkEntry { arch, evaluation })
    .collect();

    let (mut mv, mut tmp, mut grey, mut naive, mut e2e) = (vec![], vec![], vec![], vec![], vec![]);
    for seed in SEEDS {
        let data = desk_split(seed);
        let cfg = BenchmarkConfig {
            train: TrainConfig {
                epochs: 30,
                seed,
                stacks_per_instance: 4,
                ..TrainConfig::default()
            },
            test_stacks_per_instance: 0,
        };
        let start = Instant::now();
        let outcome = run_benchmark(&data, &entries, &cfg, |e| match e {
            BenchmarkEvent::Training { arch, task } => {
                eprintln!("  seed {seed}: training {arch} {task} [{:.0?}]", start.elapsed())
            }
            BenchmarkEvent::Row(row) => eprintln!(
                "  seed {seed}: {} {} accuracy {:?} error {:?}",
                row.arch, row.evaluation, row.accuracy, row.error
            ),
            BenchmarkEvent::Epoch { .. } => {}
        })
        .unwrap();
        let rows = &outcome.report.rows;
        mv.push(rows[0].accuracy.unwrap());
        naive.push(rows[1].error.unwrap());
        e2e.push(rows[2].error.unwrap());
        tmp.push(rows[3].accuracy.unwrap());
        grey.push(rows[4].accuracy.unwrap());
    }

    let first = mv[0];
    let c1 = verdict(
        first >= 0.80 && first >= 3.0 / 6.0,
        format!(
            "CONV3D-Depth-MV test accuracy {first:.3} after 30 epochs (needs >= 0.80 and >= 0.500), \
             seeds {:?}",
            rounded(&mv)
        ),
    );
    let (m_mv, m_tmp, m_grey) = (mean(&mv), mean(&tmp), mean(&grey));
    let c2 = verdict(
        m_mv - m_tmp >= 0.03 && m_mv - m_grey >= 0.03,
        format!(
            "mean accuracy MV-depth {m_mv:.3}, TMP-depth {m_tmp:.3}, MV-grey {m_grey:.3} \
             (margins {:+.3}, {:+.3}; need >= 0.03 each)",
            m_mv - m_tmp,
            m_mv - m_grey
        ),
    );
    let (m_e2e, m_naive) = (mean(&e2e), mean(&naive));
    let c3 = verdict(
        m_e2e <= m_naive,
        format!(
            "mean E_L end-to-end {m_e2e:.4} vs naive {m_naive:.4} (seeds {:?} vs {:?})",
            rounded(&e2e),
            rounded(&naive)
        ),
    );
    [c1, c2, c3]
}

fn rounded(v: &[f64]) -> Vec<f64> {
    v.iter().map(|x| (x * 1000.0).round() / 1000.0).collect()
}
