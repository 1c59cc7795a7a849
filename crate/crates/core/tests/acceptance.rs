//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any failed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use d2c::cad::{CadCommand, CadKind, CadSequence, CAD_PARAM_COUNT, UNUSED};
use d2c::checkpoint::Checkpoint;
use d2c::geom::{reconstruct, sample_shape, PointCloud, Vec3};
use d2c::ingest::{drawing_from_svg, drawing_to_svg, segments_to_svg, Point2, Segment, ViewBox};
use d2c::loss::{args_loss, soft_target, ARG_CLASSES};
use d2c::metrics::{acc_cmd, acc_param, chamfer, MetricsReport};
use d2c::nn::model::{Dropout, Fusion, Model, ModelConfig, Sample, ViewMode};
use d2c::pipeline::evaluate;
use d2c::svg::{dequantize_coord, make_token, pad_drawing, quantize_coord, SvgKind, ViewLabel};
use d2c::synth::{generate_dataset, GenSpec};
use d2c::train::{TrainConfig, Trainer};

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---------------------------------------------------------------- 1

fn brute_soft_target(y: u16, alpha: f64, tol: u16) -> Vec<f64> {
    let mut t = vec![0.0; ARG_CLASSES];
    if y == UNUSED {
        t[UNUSED as usize] = 1.0;
        return t;
    }
    let mut z = 0.0;
    for k in 0..UNUSED as i64 {
        let d = (k - y as i64).abs();
        if d <= tol as i64 {
            z += (-alpha * d as f64).exp();
        }
    }
    for k in 0..UNUSED as i64 {
        let d = (k - y as i64).abs();
        if d <= tol as i64 {
            t[k as usize] = (-alpha * d as f64).exp() / z;
        }
    }
    t
}

fn soft_target_oracle() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let y = rng.gen_range(0..=UNUSED);
        let alpha = rng.gen_range(0.05..6.0);
        let tol = rng.gen_range(0..12);
        let got = soft_target(y, ARG_CLASSES, alpha, tol);
        let want = brute_soft_target(y, alpha, tol);
        worst = got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(worst, f64::max);
    }
    check(worst <= 1e-9, || format!("max abs error {worst:e}"))?;
    let t5 = soft_target(5, ARG_CLASSES, 2.0, 3)[5];
    check((t5 - 0.76204).abs() <= 1e-5, || format!("worked example gives {t5}"))?;
    Ok(format!("max abs error {worst:.1e}, worked example {t5:.5}"))
}

// ---------------------------------------------------------------- 2

fn random_sequence(rng: &mut ChaCha8Rng, len: usize) -> CadSequence {
    let n = rng.gen_range(0..len);
    let kinds = [CadKind::Sol, CadKind::Line, CadKind::Arc, CadKind::Circle, CadKind::Extrude];
    let cmds: Vec<CadCommand> = (0..n)
        .map(|_| {
            let mut args = [0u16; CAD_PARAM_COUNT];
            args.iter_mut().for_each(|a| *a = rng.gen_range(0..256));
            CadCommand::masked(*kinds.choose(rng).unwrap(), args)
        })
        .collect();
    CadSequence::from_content(&cmds, len).unwrap()
}

fn hard_ce_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let n = 60;
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let gt = random_sequence(&mut rng, n);
        let logits = ndarray::Array2::from_shape_fn((n, CAD_PARAM_COUNT * ARG_CLASSES), |_| rng.gen_range(-6.0..6.0));
        let mut total = 0.0;
        for (i, c) in gt.commands().iter().enumerate() {
            for j in 0..CAD_PARAM_COUNT {
                let row: Vec<f64> = (0..ARG_CLASSES).map(|k| logits[[i, j * ARG_CLASSES + k]]).collect();
                let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = m + row.iter().map(|x| (x - m).exp()).sum::<f64>().ln();
                total += lse - row[c.params.0[j] as usize];
            }
        }
        let want = total / (n * CAD_PARAM_COUNT) as f64;
        let got = args_loss(&logits, &gt, 2.0, 0).unwrap();
        worst = worst.max((got - want).abs());
    }
    check(worst <= 1e-9, || format!("max abs difference {worst:e}"))?;
    Ok(format!("max abs difference {worst:.1e} over 100 tensors"))
}

// ---------------------------------------------------------------- 3

fn gradient_check() -> Outcome {
    let config = ModelConfig {
        d_model: 16,
        enc_blocks: 1,
        dec_blocks: 1,
        heads: 2,
        ffn_dim: 32,
        drawing_len: 8,
        cad_len: 4,
        view_mode: ViewMode::Iso,
        ..ModelConfig::desk()
    };
    let mut model = Model::new(config, 3).unwrap();
    let tokens: Vec<_> = [[20.0, 30.0, 0.0, 0.0, 0.0, 0.0, 150.0, 30.0], [150.0, 30.0, 160.0, 80.0, 120.0, 140.0, 60.0, 170.0]]
        .iter()
        .enumerate()
        .map(|(i, p)| make_token(if i == 0 { SvgKind::LineTo } else { SvgKind::CubicBezier }, Some(*p)).unwrap())
        .collect();
    let drawing = pad_drawing(&tokens, ViewLabel::Isometric).unwrap();
    let gt = CadSequence::from_content(
        &[CadCommand::SOL, CadCommand::circle(120, 140, 60), CadCommand::extrude([128, 128, 120, 130, 128, 128, 200, 128, 0, 0])],
        4,
    )
    .unwrap();
    let sample = Sample::new(&model, &[&drawing], &gt, 2.0, 3).unwrap();
    let beta = 2.0;
    let loss = |m: &Model| m.loss_and_grads(&sample, beta, &mut Dropout::train(0.1, 77)).unwrap().0;
    let (_, grads) = model.loss_and_grads(&sample, beta, &mut Dropout::train(0.1, 77)).unwrap();
    let h = 1e-5;
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst: (f64, String) = (0.0, String::new());
    let mut checked = 0;
    for p in 0..model.params.len() {
        let g = grads[p].clone();
        let (rows, cols) = g.dim();
        // Every entry of small tensors; for large ones the largest gradients plus random picks.
        let mut picks: Vec<(usize, usize)> = if rows * cols <= 64 {
            (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect()
        } else {
            let mut all: Vec<(usize, usize)> = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).collect();
            all.sort_by(|a, b| g[[b.0, b.1]].abs().total_cmp(&g[[a.0, a.1]].abs()));
            let mut v: Vec<_> = all[..12].to_vec();
            v.extend((0..12).map(|_| (rng.gen_range(0..rows), rng.gen_range(0..cols))));
            v
        };
        picks.dedup();
        for (r, c) in picks {
            let orig = model.params.values[p][[r, c]];
            model.params.values[p][[r, c]] = orig + h;
            let up = loss(&model);
            model.params.values[p][[r, c]] = orig - h;
            let down = loss(&model);
            model.params.values[p][[r, c]] = orig;
            let numeric = (up - down) / (2.0 * h);
            let analytic = g[[r, c]];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            checked += 1;
            if rel > worst.0 {
                worst = (rel, format!("{}[{r},{c}] analytic {analytic:e} numeric {numeric:e}", model.params.names[p]));
            }
        }
    }
    check(worst.0 <= 1e-4, || format!("max relative error {:.2e} at {}", worst.0, worst.1))?;
    Ok(format!("max relative error {:.2e} over {checked} entries in {} tensors", worst.0, model.params.len()))
}

// ---------------------------------------------------------------- 4

fn oracle_acc_cmd(p: &CadSequence, g: &CadSequence) -> f64 {
    let mut hits = 0.0;
    for i in 0..g.len() {
        if p.commands()[i].kind == g.commands()[i].kind {
            hits += 1.0;
        }
    }
    hits / g.len() as f64
}

fn oracle_acc_param(p: &CadSequence, g: &CadSequence) -> Option<f64> {
    let (mut hits, mut total) = (0usize, 0usize);
    for i in 0..g.len() {
        let (pc, gc) = (p.commands()[i], g.commands()[i]);
        if pc.kind != gc.kind {
            continue;
        }
        for j in 0..CAD_PARAM_COUNT {
            if gc.params.0[j] != UNUSED {
                total += 1;
                if (pc.params.0[j] as i32 - gc.params.0[j] as i32).abs() < 3 {
                    hits += 1;
                }
            }
        }
    }
    (total > 0).then(|| hits as f64 / total as f64)
}

fn oracle_chamfer(a: &[Vec3], b: &[Vec3]) -> f64 {
    let one = |x: &[Vec3], y: &[Vec3]| {
        let mut s = 0.0;
        for p in x {
            let mut best = f64::INFINITY;
            for q in y {
                let d = (p.x - q.x).powi(2) + (p.y - q.y).powi(2) + (p.z - q.z).powi(2);
                if d < best {
                    best = d;
                }
            }
            s += best;
        }
        s / x.len() as f64
    };
    one(a, b) + one(b, a)
}

fn metric_oracles() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..30);
        let gt = random_sequence(&mut rng, len);
        // Perturb a copy so matches and near misses both occur.
        let mut cmds: Vec<CadCommand> = gt.content().to_vec();
        for c in &mut cmds {
            if rng.gen_bool(0.2) {
                let mut args = c.params.0;
                args.iter_mut().for_each(|a| *a = if *a == UNUSED { rng.gen_range(0..256) } else { *a });
                *c = CadCommand::masked([CadKind::Line, CadKind::Circle, CadKind::Extrude][rng.gen_range(0..3)], args);
            }
            for a in c.params.0.iter_mut().filter(|a| **a != UNUSED) {
                *a = (*a as i32 + rng.gen_range(-4..=4)).clamp(0, 255) as u16;
            }
        }
        let pred = CadSequence::from_content(&cmds, len).unwrap();
        let a = acc_cmd(&pred, &gt).unwrap();
        worst = worst.max((a - oracle_acc_cmd(&pred, &gt)).abs());
        match (acc_param(&pred, &gt, 3.0).unwrap(), oracle_acc_param(&pred, &gt)) {
            (Some(x), Some(y)) => worst = worst.max((x - y).abs()),
            (None, None) => {}
            other => return Err(format!("acc_param definedness differs: {other:?}")),
        }
        let cloud = |rng: &mut ChaCha8Rng| PointCloud {
            points: (0..rng.gen_range(1..60))
                .map(|_| Vec3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
                .collect(),
        };
        let (x, y) = (cloud(&mut rng), cloud(&mut rng));
        worst = worst.max((chamfer(&x, &y).unwrap() - oracle_chamfer(&x.points, &y.points)).abs());
    }
    check(worst <= 1e-12, || format!("max deviation {worst:e}"))?;
    Ok(format!("max deviation {worst:.1e} over 1000 instances"))
}

// ---------------------------------------------------------------- 5

fn random_drawing(rng: &mut ChaCha8Rng) -> (Vec<Segment>, ViewBox) {
    let w = rng.gen_range(20.0..500.0);
    let h = rng.gen_range(20.0..500.0);
    let vb = ViewBox::new(rng.gen_range(-100.0..100.0), rng.gen_range(-100.0..100.0), w, h);
    let pt = |rng: &mut ChaCha8Rng| Point2::new(vb.min_x + rng.gen_range(0.0..w), vb.min_y + rng.gen_range(0.0..h));
    let mut segs = Vec::new();
    for _ in 0..rng.gen_range(1..5) {
        let n = rng.gen_range(2..6);
        let pts: Vec<Point2> = (0..n).map(|_| pt(rng)).collect();
        let closed = n > 2 && rng.gen_bool(0.6);
        let m = if closed { n } else { n - 1 };
        for i in 0..m {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            segs.push(if rng.gen_bool(0.3) {
                Segment::Cubic { start: a, c1: pt(rng), c2: pt(rng), end: b }
            } else {
                Segment::Line { start: a, end: b }
            });
        }
    }
    (segs, vb)
}

fn ingest_determinism() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut tokens = 0;
    for case in 0..200 {
        let (segs, vb) = random_drawing(&mut rng);
        let view = ViewLabel::ALL[case % 4];
        let base = drawing_from_svg(&segments_to_svg(&segs, vb), view).map_err(|e| format!("case {case}: {e}"))?;
        let mut shuffled = segs.clone();
        shuffled.shuffle(&mut rng);
        let perm = drawing_from_svg(&segments_to_svg(&shuffled, vb), view).map_err(|e| format!("case {case}: {e}"))?;
        check(perm == base, || format!("case {case}: permutation changed tokens"))?;
        let again = drawing_from_svg(&drawing_to_svg(&base), view).map_err(|e| format!("case {case}: {e}"))?;
        check(again == base, || format!("case {case}: not idempotent"))?;
        tokens += base.content_len();
    }
    Ok(format!("200 drawings ({tokens} tokens) permutation-invariant and idempotent"))
}

// ---------------------------------------------------------------- 6

fn geometry_sanity() -> Outcome {
    // Sketch square (0,0)-(1,1) on xy, origin near 0, scale near 1.
    let cube = CadSequence::from_content(
        &[
            CadCommand::SOL,
            CadCommand::line(255, 128),
            CadCommand::line(255, 255),
            CadCommand::line(128, 255),
            CadCommand::line(128, 128),
            CadCommand::extrude([128, 128, 127, 127, 127, 127, 255, 128, 0, 0]),
        ],
        60,
    )
    .unwrap();
    let solid = reconstruct(&cube).map_err(|r| format!("cube invalid: {r}"))?;
    let (lo, hi) = solid.bbox();
    let side = [hi.x - lo.x, hi.y - lo.y, hi.z - lo.z];
    check(side.iter().all(|s| (s - 1.0).abs() < 0.02), || format!("not near-unit: sides {side:?}"))?;
    let tau = solid.on_tolerance();
    let pc = sample_shape(&solid, 2000, 1).map_err(|e| e.to_string())?;
    check(pc.len() == 2000, || format!("{} points", pc.len()))?;
    for p in &pc.points {
        let (a, l, h) = (p.to_array(), lo.to_array(), hi.to_array());
        let inside = (0..3).all(|i| a[i] >= l[i] - tau && a[i] <= h[i] + tau);
        let on_face = (0..3).any(|i| (a[i] - l[i]).abs() <= tau || (a[i] - h[i]).abs() <= tau);
        check(inside && on_face, || format!("point {p:?} off the cube faces"))?;
    }
    let k = 8000;
    let a = sample_shape(&solid, k, 2).map_err(|e| e.to_string())?;
    let b = sample_shape(&solid, k, 3).map_err(|e| e.to_string())?;
    let cd = chamfer(&a.normalized_by(&b), &b.normalized_by(&b)).unwrap();
    check(cd <= 5e-4, || format!("chamfer {cd:e} at K={k}"))?;
    Ok(format!("2000 points on faces (tau {tau:.0e}); chamfer {cd:.2e} at K={k}"))
}

// ---------------------------------------------------------------- 7 and 9

const MAX_STEPS: u64 = 3000;
const CHECK_EVERY: u64 = 100;

fn meets_targets(r: &MetricsReport) -> bool {
    r.acc_cmd >= 0.98 && r.acc_param.unwrap_or(0.0) >= 0.90 && r.ir <= 0.05
}

struct OverfitRun {
    data: Vec<d2c::record::Record>,
    config: TrainConfig,
    steps: u64,
    report: MetricsReport,
    final_weights: Vec<ndarray::Array2<f64>>,
    /// Serialized training checkpoints keyed by step.
    snapshots: Vec<(u64, Vec<u8>)>,
}

fn overfit_run() -> Result<OverfitRun, String> {
    let data = generate_dataset(&GenSpec::default(), 64, 7).map_err(|e| e.to_string())?;
    let config = TrainConfig { seed: 7, ..TrainConfig::desk() };
    let mut trainer = Trainer::new(ModelConfig::desk(), config.clone(), &data).map_err(|e| e.to_string())?;
    let snapshot = |t: &Trainer| {
        let mut buf = Vec::new();
        t.checkpoint().write_to(&mut buf).expect("in-memory write");
        (t.steps_taken(), buf)
    };
    let mut snapshots = vec![snapshot(&trainer)];
    let mut report = None;
    while trainer.steps_taken() < MAX_STEPS {
        trainer.step().map_err(|e| e.to_string())?;
        if trainer.steps_taken() % CHECK_EVERY == 0 {
            snapshots.push(snapshot(&trainer));
            let r = evaluate(&trainer.model, &data, 200, 0).map_err(|e| e.to_string())?;
            if meets_targets(&r) {
                report = Some(r);
                break;
            }
        }
    }
    let steps = trainer.steps_taken();
    let report = match report {
        Some(_) => evaluate(&trainer.model, &data, 2000, 0).map_err(|e| e.to_string())?,
        None => evaluate(&trainer.model, &data, 2000, 0).map_err(|e| e.to_string())?,
    };
    Ok(OverfitRun { data, config, steps, report, final_weights: trainer.model.params.values.clone(), snapshots })
}

/// Mean loss over consecutive 100-step windows.
fn window_means(model: ModelConfig, data: &[d2c::record::Record], windows: usize) -> Result<Vec<f64>, String> {
    let config = TrainConfig { seed: 7, ..TrainConfig::desk() };
    let mut t = Trainer::new(model, config, data).map_err(|e| e.to_string())?;
    let mut out = Vec::new();
    for _ in 0..windows {
        let mut sum = 0.0;
        for _ in 0..100 {
            sum += t.step().map_err(|e| e.to_string())?.loss;
        }
        out.push(sum / 100.0);
    }
    Ok(out)
}

fn overfit(run: &Result<OverfitRun, String>) -> Outcome {
    let run = run.as_ref().map_err(|e| e.clone())?;
    let r = &run.report;
    let summary = format!(
        "{} steps: acc_cmd {:.4}, acc_param {}, ir {:.3}",
        run.steps,
        r.acc_cmd,
        r.acc_param.map_or("n/a".into(), |v| format!("{v:.4}")),
        r.ir
    );
    check(meets_targets(r), || format!("targets missed after {summary}"))?;
    let mut ablations = Vec::new();
    for (name, cfg) in [
        ("guidance off", ModelConfig { guidance: false, ..ModelConfig::desk() }),
        ("fusion add", ModelConfig { fusion: Fusion::Add, ..ModelConfig::desk() }),
    ] {
        let w = window_means(cfg, &run.data, 3)?;
        check(w.windows(2).all(|p| p[1] < p[0]), || format!("{name}: window losses {w:?} not decreasing"))?;
        ablations.push(format!("{name} {:.3}>{:.3}>{:.3}", w[0], w[1], w[2]));
    }
    Ok(format!("{summary}; {}", ablations.join(", ")))
}

fn resume_determinism(run: &Result<OverfitRun, String>) -> Outcome {
    let run = run.as_ref().map_err(|e| e.clone())?;
    let mid_target = (run.steps / 2) / CHECK_EVERY * CHECK_EVERY;
    let (mid, bytes) = run.snapshots.iter().rev().find(|(s, _)| *s <= mid_target).ok_or("no snapshot")?;
    let ck = Checkpoint::read_from(&mut bytes.as_slice()).map_err(|e| e.to_string())?;
    let mut t = Trainer::resume(&ck, run.config.clone(), &run.data).map_err(|e| e.to_string())?;
    while t.steps_taken() < run.steps {
        t.step().map_err(|e| e.to_string())?;
    }
    let same = t.model.params.values.iter().zip(&run.final_weights).all(|(a, b)| {
        a.iter().zip(b.iter()).all(|(x, y)| x.to_bits() == y.to_bits())
    });
    check(same, || format!("weights differ after resuming at step {mid} of {}", run.steps))?;
    Ok(format!("resumed at step {mid}, {} steps: bit-identical weights", run.steps))
}

// ---------------------------------------------------------------- 8

fn quantization() -> Outcome {
    for b in 0..=255u16 {
        let v = dequantize_coord(b).map_err(|e| e.to_string())?;
        let back = quantize_coord(v).map_err(|e| e.to_string())?;
        check(back == b, || format!("bin {b} -> {v} -> {back}"))?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut worst: f64 = 0.0;
    for _ in 0..100_000 {
        let v = rng.gen_range(0.0..=200.0);
        let r = dequantize_coord(quantize_coord(v).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
        worst = worst.max((r - v).abs());
    }
    check(worst <= 100.0 / 255.0 + 1e-9, || format!("max round-trip error {worst}"))?;
    Ok(format!("256 bins exact; max round-trip error {worst:.4} (bound {:.4})", 100.0 / 255.0))
}

// ----------------------------------------------------------------

fn run_one(n: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let t0 = Instant::now();
    let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
    });
    let secs = t0.elapsed().as_secs_f64();
    match &outcome {
        Ok(msg) => println!("criterion {n} {name}: PASS ({msg}) [{secs:.1}s]"),
        Err(msg) => println!("criterion {n} {name}: FAIL ({msg}) [{secs:.1}s]"),
    }
    outcome.is_ok()
}

fn main() -> ExitCode {
    let filter: Vec<usize> = std::env::var("D2C_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let wanted = |n: usize| filter.is_empty() || filter.contains(&n);
    let mut ok = true;
    if wanted(1) {
        ok &= run_one(1, "soft-target oracle", soft_target_oracle);
    }
    if wanted(2) {
        ok &= run_one(2, "hard cross-entropy equivalence", hard_ce_equivalence);
    }
    if wanted(3) {
        ok &= run_one(3, "gradient check", gradient_check);
    }
    if wanted(4) {
        ok &= run_one(4, "metric oracles", metric_oracles);
    }
    if wanted(5) {
        ok &= run_one(5, "ingest determinism", ingest_determinism);
    }
    if wanted(6) {
        ok &= run_one(6, "geometry sanity", geometry_sanity);
    }
    if wanted(7) || wanted(9) {
        let t0 = Instant::now();
        let run = catch_unwind(overfit_run).unwrap_or_else(|_| Err("overfit run panicked".into()));
        let train_secs = t0.elapsed().as_secs_f64();
        if wanted(7) {
            ok &= run_one(7, &format!("overfit experiment (training {train_secs:.0}s)"), || overfit(&run));
        }
        if wanted(9) {
            ok &= run_one(9, "resume determinism", || resume_determinism(&run));
        }
    }
    if wanted(8) {
        ok &= run_one(8, "quantization", quantization);
    }
    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
