//! Acceptance criteria, one PASS/FAIL line each. Exits nonzero on any failure.

mod common;

use std::time::{Duration, Instant};

use common::{check_gradients, project, randn, rel_err, H};
use freqspoof_core::data::{
    generate_toy_dataset, FrameSequence, Label, RgbImage, Split, ToyConfig,
};
use freqspoof_core::eval::{acer, apcer_bpcer, eer_threshold, hter, tpr_at_fpr, ScoreRecord};
use freqspoof_core::model::{encode_sequence, total_loss, Batch, Network, NetworkConfig};
use freqspoof_core::spectral::{
    fft2d, ifft2d, sample_block_mask, synthesize_sequence, transfer_spoof_pattern, BlockMask,
    MaskParams, Plane,
};
use freqspoof_core::tensor::{init_normal, Tape, Var};
use freqspoof_core::training::{
    evaluate_split, score_sequences, train, ThresholdPolicy, TrainConfig, TrainLog,
};
use freqspoof_core::Tensor;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn records(spoof_missed: usize, live_rejected: usize, per_class: usize) -> Vec<ScoreRecord> {
    let mut out = Vec::new();
    for i in 0..per_class {
        let s = if i < spoof_missed { 0.2 } else { 0.9 };
        out.push(ScoreRecord::new(format!("s{i}"), Label::Spoof, s).unwrap());
        let l = if i < live_rejected { 0.8 } else { 0.1 };
        out.push(ScoreRecord::new(format!("l{i}"), Label::Live, l).unwrap());
    }
    out
}

fn metric_arithmetic() -> Outcome {
    let mut detail = Vec::new();
    for (missed, rejected, apcer_e, bpcer_e, acer_e) in [
        (23, 10, 0.023, 0.010, 0.0165),
        (49, 33, 0.049, 0.033, 0.041),
    ] {
        let (a, b) =
            apcer_bpcer(&records(missed, rejected, 1000), 0.5).map_err(|e| e.to_string())?;
        ensure(a == apcer_e && b == bpcer_e, || format!("rates {a} {b}"))?;
        let c = acer(a, b);
        ensure(c == acer_e, || format!("acer {c} != {acer_e}"))?;
        detail.push(format!("acer {c}"));
    }
    Ok(detail.join(", "))
}

fn op_errors() -> Vec<(&'static str, f64)> {
    let worst = |errs: Vec<f64>| errs.into_iter().fold(0.0, f64::max);
    let mut out = Vec::new();
    let x = randn(&[1, 2, 5, 5], 1);
    let w = randn(&[3, 2, 3, 3], 2);
    for (stride, pad) in [(1, 1), (2, 1), (1, 0)] {
        out.push((
            "conv2d",
            worst(check_gradients(&[x.clone(), w.clone()], |t, v| {
                let y = t.conv2d(v[0], v[1], stride, pad).unwrap();
                project(t, y, 3)
            })),
        ));
    }
    let x = randn(&[1, 3, 8, 8], 4);
    out.push((
        "depthwise",
        worst(check_gradients(&[x, randn(&[3, 1, 5, 5], 5)], |t, v| {
            let y = t.depthwise_conv2d(v[0], v[1], 1, 2).unwrap();
            project(t, y, 6)
        })),
    ));
    out.push((
        "pointwise",
        worst(check_gradients(
            &[randn(&[2, 4, 3, 3], 7), randn(&[5, 4, 1, 1], 8)],
            |t, v| {
                let y = t.pointwise_conv2d(v[0], v[1]).unwrap();
                project(t, y, 9)
            },
        )),
    ));
    out.push((
        "maxpool",
        worst(check_gradients(&[randn(&[1, 2, 6, 6], 10)], |t, v| {
            let y = t.maxpool2d(v[0], 2, 2).unwrap();
            project(t, y, 11)
        })),
    ));
    out.push((
        "instance_norm",
        worst(check_gradients(&[randn(&[2, 3, 4, 4], 12)], |t, v| {
            let y = t.instance_norm(v[0], 1e-5).unwrap();
            project(t, y, 13)
        })),
    ));
    out.push((
        "layer_norm",
        worst(check_gradients(&[randn(&[2, 3, 4, 4], 14)], |t, v| {
            let y = t.layer_norm(v[0], 1e-5).unwrap();
            project(t, y, 15)
        })),
    ));
    let mut x = randn(&[1, 2, 4, 4], 16);
    for v in x.data_mut() {
        if v.abs() < 1e-3 {
            *v = 0.5;
        }
    }
    out.push((
        "relu",
        worst(check_gradients(&[x], |t, v| {
            let y = t.relu(v[0]);
            project(t, y, 17)
        })),
    ));
    out.push((
        "sigmoid",
        worst(check_gradients(&[randn(&[1, 1, 4, 4], 18)], |t, v| {
            let y = t.sigmoid(v[0]);
            project(t, y, 19)
        })),
    ));
    out.push((
        "fully_connected",
        worst(check_gradients(
            &[randn(&[3, 5], 20), randn(&[5, 4], 21), randn(&[4], 22)],
            |t, v| {
                let y = t.fully_connected(v[0], v[1], v[2]).unwrap();
                project(t, y, 23)
            },
        )),
    ));
    out.push((
        "channel_bias",
        worst(check_gradients(
            &[randn(&[2, 3, 2, 2], 24), randn(&[3], 25)],
            |t, v| {
                let y = t.add_channel_bias(v[0], v[1]).unwrap();
                project(t, y, 26)
            },
        )),
    ));
    out.push((
        "cross_entropy",
        worst(check_gradients(&[randn(&[4, 2], 27)], |t, v| {
            t.softmax_cross_entropy(v[0], &[0, 1, 1, 0]).unwrap()
        })),
    ));
    out.push((
        "l2_loss",
        worst(check_gradients(
            &[randn(&[1, 1, 8, 8], 28), randn(&[1, 1, 8, 8], 29)],
            |t, v| t.l2_loss(v[0], v[1]).unwrap(),
        )),
    ));
    out.push((
        "structural",
        worst(check_gradients(
            &[randn(&[2, 3], 30), randn(&[2, 3], 31)],
            |t, v| {
                let s = t.add(v[0], v[1]).unwrap();
                let c = t.concat(&[s, v[1]]).unwrap();
                let st = t.stack(&[c, c]).unwrap();
                let one = t.select(st, 1).unwrap();
                let r = t.reshape(one, &[3, 4]).unwrap();
                let sc = t.scale(r, 0.7);
                let p = project(t, sc, 32);
                let q = project(t, v[0], 33);
                t.sum_scalars(&[p, q]).unwrap()
            },
        )),
    ));
    out
}

fn tiny_loss(net: &Network<f64>, batch: &Batch<f64>) -> (f64, Tape<f64>, Vec<Var>) {
    let mut tape = Tape::new();
    let b = net.bind(&mut tape);
    let out = net.forward(&mut tape, &b, batch).unwrap();
    let labels = tape.constant(batch.depth.clone());
    let l = total_loss(&mut tape, out.depth, labels, out.logits, &batch.labels, 1.0).unwrap();
    tape.backward(l).unwrap();
    (tape.scalar(l), tape, b.vars().to_vec())
}

fn end_to_end_error() -> f64 {
    let cfg = NetworkConfig::new(16, 2, 1.0 / 16.0).unwrap();
    let mut net = Network::<f64>::new(cfg, 20).unwrap();
    for (i, p) in net.params.iter_mut().enumerate() {
        p.value = init_normal(p.value.dims(), 0.0, 0.3, 100 + i as u64).unwrap();
    }
    let ds = generate_toy_dataset(&ToyConfig::new(1, 1, 2, 16, 21)).unwrap();
    let enc: Vec<_> = ds
        .samples
        .iter()
        .map(|s| encode_sequence(&s.sequence, &cfg).unwrap())
        .collect();
    let batch = Batch::new(&enc.iter().collect::<Vec<_>>(), &cfg).unwrap();
    let (_, tape, vars) = tiny_loss(&net, &batch);
    let mut rng = ChaCha8Rng::seed_from_u64(22);
    let (mut analytic, mut numeric) = (Vec::new(), Vec::new());
    for _ in 0..12 {
        let pi = rng.random_range(0..net.params.len());
        let ei = rng.random_range(0..net.params.as_slice()[pi].value.len());
        analytic.push(tape.grad(vars[pi]).unwrap()[ei]);
        let mut plus = net.clone();
        plus.params.as_mut_slice()[pi].value.data_mut()[ei] += H;
        let mut minus = net.clone();
        minus.params.as_mut_slice()[pi].value.data_mut()[ei] -= H;
        numeric.push((tiny_loss(&plus, &batch).0 - tiny_loss(&minus, &batch).0) / (2.0 * H));
    }
    rel_err(&analytic, &numeric)
}

fn gradient_suite() -> Outcome {
    let ops = op_errors();
    let (name, worst) = ops
        .iter()
        .fold(("", 0.0), |m, &(n, e)| if e > m.1 { (n, e) } else { m });
    ensure(worst < 1e-3, || format!("{name} relative error {worst:e}"))?;
    let e2e = end_to_end_error();
    ensure(e2e < 1e-2, || format!("end-to-end relative error {e2e:e}"))?;
    Ok(format!(
        "{} op checks max {worst:.1e} ({name}), end-to-end {e2e:.1e}",
        ops.len()
    ))
}

fn random_plane(h: usize, w: usize, seed: u64, lo: f64, hi: f64) -> Plane {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Plane::new(h, w, (0..h * w).map(|_| rng.random_range(lo..hi)).collect()).unwrap()
}

fn random_sequence(label: Label, n: usize, seed: u64) -> FrameSequence {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let frames = (0..3)
        .map(|_| {
            RgbImage::new(
                n,
                n,
                (0..3 * n * n)
                    .map(|_| rng.random_range(0.35f32..0.65))
                    .collect(),
            )
            .unwrap()
        })
        .collect();
    FrameSequence::new("seq", label, frames).unwrap()
}

/// Centered bins where the spectra of `a` and `b` differ in any channel.
fn changed_bins(a: &RgbImage, b: &RgbImage) -> Vec<bool> {
    let n = a.height * a.width;
    let mut out = vec![false; n];
    for c in 0..3 {
        let x = fft2d(&a.channel(c)).unwrap().centered();
        let y = fft2d(&b.channel(c)).unwrap().centered();
        for i in 0..n {
            out[i] |= (x.re[i] - y.re[i]).abs() + (x.im[i] - y.im[i]).abs() > 1e-3;
        }
    }
    out
}

fn mirror_closed(m: &BlockMask) -> bool {
    let (rows, cols) = m.grid();
    let blocks = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c)));
    let region = m.region();
    let (h, w) = (m.height, m.width);
    blocks
        .filter(|&b| m.is_selected(b))
        .all(|(r, c)| m.is_selected((rows - 1 - r, cols - 1 - c)))
        && (0..h * w).all(|i| region[i] == region[((h - i / w) % h) * w + (w - i % w) % w])
}

fn spectral_suite() -> Outcome {
    let (mut round, mut parseval, mut ident) = (0.0f64, 0.0f64, 0.0f64);
    let params = MaskParams {
        block_size: 4,
        replace_fraction: 0.3,
        exclusion_radius: 0.25,
    };
    for seed in 0..50 {
        let (h, w) = if seed % 2 == 0 { (64, 64) } else { (32, 128) };
        let x = random_plane(h, w, seed, 0.0, 1.0);
        let s = fft2d(&x).map_err(|e| e.to_string())?;
        round = round.max(ifft2d(&s).map_err(|e| e.to_string())?.max_abs_diff(&x));
        let spatial: f64 = x.data.iter().map(|v| v * v).sum();
        parseval = parseval.max(((spatial - s.energy() / (h * w) as f64) / spatial).abs());

        let live = random_plane(32, 32, seed, 0.0, 1.0);
        let spoof = random_plane(32, 32, seed + 500, 0.0, 1.0);
        let empty = transfer_spoof_pattern(&live, &spoof, &BlockMask::empty(32, 32, 4)).unwrap();
        let mask = sample_block_mask(seed, 32, 32, &params).map_err(|e| e.to_string())?;
        let same = transfer_spoof_pattern(&live, &live, &mask).unwrap();
        ident = ident
            .max(empty.max_abs_diff(&live))
            .max(same.max_abs_diff(&live));
        ensure(mirror_closed(&mask), || {
            format!("mask of seed {seed} is not mirror-closed")
        })?;

        let l = random_sequence(Label::Live, 32, seed);
        let d = random_sequence(Label::Spoof, 32, seed + 1000);
        let (out, mask) = synthesize_sequence(&l, &d, seed, &params).map_err(|e| e.to_string())?;
        let region = mask.region();
        for t in 0..3 {
            ensure(changed_bins(&out.frames[t], &l.frames[t]) == region, || {
                format!("seed {seed} frame {t} changed bins differ from the frame-0 mask")
            })?;
        }
    }
    ensure(round < 1e-5, || format!("round trip {round:e}"))?;
    ensure(parseval < 1e-4, || format!("Parseval {parseval:e}"))?;
    ensure(ident < 1e-5, || format!("identity transfer {ident:e}"))?;
    Ok(format!(
        "round trip {round:.1e}, Parseval {parseval:.1e}, identities {ident:.1e}, 50 seeds"
    ))
}

fn shape_conformance() -> Outcome {
    let cfg = NetworkConfig::new(256, 10, 1.0).map_err(|e| e.to_string())?;
    let net = Network::<f32>::new(cfg, 0).unwrap();
    let mut tape = Tape::new();
    let b = net.bind(&mut tape);
    let frame = tape.constant(Tensor::full(&[1, 6, 256, 256], 0.5));
    let sp = net
        .spatial_forward(&mut tape, &b, frame)
        .map_err(|e| e.to_string())?;
    let spectra = tape.constant(Tensor::full(&[1, 10, 256, 256], 0.5));
    let freq = net
        .freqtemp_forward(&mut tape, &b, spectra)
        .map_err(|e| e.to_string())?;
    let depth = tape.constant(Tensor::full(&[1, 10, 32, 32], 0.5));
    let temporal = net
        .temporal_forward(&mut tape, &b, depth)
        .map_err(|e| e.to_string())?;
    let (feature, logits) = net
        .fuse_and_classify(&mut tape, &b, temporal, freq)
        .map_err(|e| e.to_string())?;
    let mut got: Vec<Vec<usize>> = sp
        .stages
        .iter()
        .map(|&v| tape.value(v).dims().to_vec())
        .collect();
    for v in [sp.depth, freq, temporal, feature, logits] {
        got.push(tape.value(v).dims().to_vec());
    }
    let expect: Vec<Vec<usize>> = vec![
        vec![1, 64, 128, 128],
        vec![1, 64, 64, 64],
        vec![1, 64, 64, 64],
        vec![1, 128, 32, 32],
        vec![1, 256, 32, 32],
        vec![1, 512, 32, 32],
        vec![1, 1, 32, 32],
        vec![1, 64, 16, 16],
        vec![1, 64, 16, 16],
        vec![1, 512],
        vec![1, 2],
    ];
    ensure(got == expect, || format!("shapes {got:?}"))?;
    Ok("spatial 256->32, depth 32, freq 16, temporal 16, feature 512".into())
}

struct ToyRun {
    log: TrainLog,
    acer: f64,
}

fn toy_run() -> Result<ToyRun, String> {
    let seed = 7;
    let data = ToyConfig::new(96, 96, 3, 64, seed).with_splits(16, 16);
    let ds = generate_toy_dataset(&data).map_err(|e| e.to_string())?;
    let cfg = NetworkConfig::new(64, 3, 0.25).map_err(|e| e.to_string())?;
    let enc = |s: Split| {
        ds.split(s)
            .map(|q| encode_sequence(q, &cfg).unwrap())
            .collect::<Vec<_>>()
    };
    let (tr, va, te) = (enc(Split::Train), enc(Split::Val), enc(Split::Test));
    let config = TrainConfig {
        seq_len: 3,
        seed,
        ..TrainConfig::default()
    };
    let mut net = Network::<f32>::new(cfg, seed).map_err(|e| e.to_string())?;
    let log = train(&config, &mut net, &tr, |_, _| {}).map_err(|e| e.to_string())?;
    let val = score_sequences(&net, &va, 16).map_err(|e| e.to_string())?;
    let ev =
        evaluate_split(&net, &te, &ThresholdPolicy::EerOn(val), 16).map_err(|e| e.to_string())?;
    Ok(ToyRun {
        log,
        acer: ev.report.acer,
    })
}

fn toy_learning(run: &ToyRun) -> Outcome {
    ensure(run.log.epochs.len() == 10, || "expected 10 epochs".into())?;
    let (first, last) = (run.log.epochs[0].loss, run.log.epochs[9].loss);
    ensure(run.acer <= 0.05, || format!("test ACER {}", run.acer))?;
    ensure(last < 0.5 * first, || format!("loss {first} -> {last}"))?;
    Ok(format!(
        "test ACER {}, loss {first:.3} -> {last:.3}",
        run.acer
    ))
}

fn schedule_conformance(run: Option<&ToyRun>) -> Outcome {
    let steps = &run.ok_or("toy run failed")?.log.steps;
    let (s0, end) = (steps[0], steps[steps.len() - 1]);
    ensure(s0.lr_spatial == 0.3 && s0.lr_freq == 0.0, || {
        format!("step 0 rates {} {}", s0.lr_spatial, s0.lr_freq)
    })?;
    ensure(end.lr_spatial < 1e-4, || {
        format!("final lr_spatial {}", end.lr_spatial)
    })?;
    let warm = steps
        .iter()
        .find(|s| s.epoch == 5)
        .ok_or("no step in epoch 5")?;
    ensure(warm.lr_freq == 0.03, || {
        format!("lr_freq at warmup end {}", warm.lr_freq)
    })?;
    for w in steps.windows(2) {
        ensure(w[1].lr_spatial <= w[0].lr_spatial, || {
            format!("lr_spatial rises at step {}", w[1].step)
        })?;
        let freq_ok = if w[1].epoch < 5 {
            w[1].lr_freq >= w[0].lr_freq
        } else {
            w[1].lr_freq == 0.03
        };
        ensure(freq_ok, || {
            format!("lr_freq misbehaves at step {}", w[1].step)
        })?;
    }
    Ok(format!(
        "{} steps, warmup ends at step {}",
        steps.len(),
        warm.step
    ))
}

/// Counting oracle: every quantity recomputed from raw decisions.
fn oracle(recs: &[ScoreRecord], t: f64, targets: &[f64]) -> ((f64, f64), Vec<f64>, (f64, f64)) {
    let rates = |t: f64| {
        let spoof: Vec<_> = recs.iter().filter(|r| r.label == Label::Spoof).collect();
        let live: Vec<_> = recs.iter().filter(|r| r.label == Label::Live).collect();
        let m = spoof.iter().filter(|r| r.score < t).count();
        let r = live.iter().filter(|r| r.score >= t).count();
        (m, spoof.len(), r, live.len())
    };
    let frac =
        |(m, s, r, l): (usize, usize, usize, usize)| (m as f64 / s as f64, r as f64 / l as f64);
    let mut ts: Vec<f64> = Vec::new();
    for r in recs {
        if !ts.contains(&r.score) {
            ts.push(r.score);
        }
    }
    ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let tprs = targets
        .iter()
        .map(|&target| {
            ts.iter()
                .copied()
                .chain([f64::INFINITY])
                .map(|t| frac(rates(t)))
                .filter(|&(_, fpr)| fpr <= target)
                .map(|(apcer, _)| 1.0 - apcer)
                .fold(0.0, f64::max)
        })
        .collect();
    let mut best: Option<(usize, usize, f64)> = None;
    for &t in &ts {
        let (m, s, r, l) = rates(t);
        let (a, b) = (m * l, r * s);
        let gap = a.max(b) - a.min(b);
        if best.is_none_or(|(g, d, _)| gap * d < g * (s * l)) {
            best = Some((gap, s * l, t));
        }
    }
    let te = best.unwrap().2;
    let (far, frr) = frac(rates(te));
    (frac(rates(t)), tprs, (te, (frr + far) / 2.0))
}

fn metric_oracle() -> Outcome {
    let targets = [0.01, 0.05, 0.1, 0.3];
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let grid = [10u32, 100, 1000][rng.random_range(0..3)];
        let n = 2 + (seed as usize % 199);
        let recs: Vec<ScoreRecord> = (0..n)
            .map(|i| {
                // both classes always present
                let live = i == 0 || (i > 1 && rng.random::<bool>());
                let label = if live { Label::Live } else { Label::Spoof };
                ScoreRecord::new(
                    format!("r{i}"),
                    label,
                    rng.random_range(0..=grid) as f64 / grid as f64,
                )
                .unwrap()
            })
            .collect();
        let t: f64 = rng.random_range(0.0..1.0);
        let (rates, tprs, eer) = oracle(&recs, t, &targets);
        let fail = |what: &str| format!("seed {seed}: {what} disagrees with the oracle");
        let got = apcer_bpcer(&recs, t).map_err(|e| e.to_string())?;
        ensure(got == rates, || fail("apcer/bpcer"))?;
        ensure(acer(got.0, got.1) == (rates.0 + rates.1) / 2.0, || {
            fail("acer")
        })?;
        ensure(hter(got.1, got.0) == (rates.1 + rates.0) / 2.0, || {
            fail("hter")
        })?;
        ensure(
            tpr_at_fpr(&recs, &targets).map_err(|e| e.to_string())? == tprs,
            || fail("tpr@fpr"),
        )?;
        ensure(
            eer_threshold(&recs).map_err(|e| e.to_string())? == eer,
            || fail("eer"),
        )?;
    }
    Ok("1000 random score sets".into())
}

fn report(name: &str, limit: Duration, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let outcome = f();
    let elapsed = start.elapsed();
    let outcome = outcome.and_then(|d| {
        if elapsed <= limit {
            Ok(d)
        } else {
            Err(format!("{d}; took {elapsed:.1?}, limit {limit:?}"))
        }
    });
    match &outcome {
        Ok(d) => println!("PASS {name}: {d} [{elapsed:.2?}]"),
        Err(d) => println!("FAIL {name}: {d} [{elapsed:.2?}]"),
    }
    outcome.is_ok()
}

fn main() {
    let secs = Duration::from_secs;
    let mut ok = true;
    ok &= report("metric arithmetic", secs(1), metric_arithmetic);
    ok &= report("gradient suite", secs(120), gradient_suite);
    ok &= report("spectral suite", secs(60), spectral_suite);
    ok &= report("shape conformance", secs(60), shape_conformance);
    let mut run = None;
    ok &= report("toy end-to-end learning", secs(15 * 60), || {
        let r = toy_run()?;
        let outcome = toy_learning(&r);
        run = Some(r);
        outcome
    });
    ok &= report("schedule conformance", secs(1), || {
        schedule_conformance(run.as_ref())
    });
    ok &= report("metric oracle equivalence", secs(60), metric_oracle);
    if !ok {
        std::process::exit(1);
    }
}
