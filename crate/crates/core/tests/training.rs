use freqspoof_core::data::{generate_toy_dataset, Label, Split, ToyConfig};
use freqspoof_core::eval::{apcer_bpcer, ScoreRecord};
use freqspoof_core::model::{encode_sequence, EncodedSequence, Network, NetworkConfig};
use freqspoof_core::training::{
    evaluate_scores, evaluate_split, group_of, score_sequences, train, Group, ThresholdPolicy,
    TrainConfig,
};
use freqspoof_core::Error;

fn cfg() -> NetworkConfig {
    NetworkConfig::new(16, 2, 1.0 / 16.0).unwrap()
}

fn data(n: usize, seed: u64) -> Vec<EncodedSequence> {
    let ds = generate_toy_dataset(&ToyConfig::new(n, n, 2, 16, seed)).unwrap();
    ds.split(Split::Train)
        .map(|s| encode_sequence(s, &cfg()).unwrap())
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        warmup_epochs: epochs / 2,
        batch_size: 4,
        seq_len: 2,
        seed: 3,
        ..TrainConfig::default()
    }
}

fn snapshot(net: &Network<f32>, group: Group) -> Vec<u32> {
    net.params
        .iter()
        .filter(|p| group_of(&p.name).unwrap() == group)
        .flat_map(|p| p.value.data().iter().map(|v| v.to_bits()))
        .collect()
}

#[test]
fn runs_are_bitwise_reproducible() {
    let d = data(4, 1);
    let run = || {
        let mut net = Network::<f32>::new(cfg(), 9).unwrap();
        let log = train(&quick(2), &mut net, &d, |_, _| {}).unwrap();
        (net, log)
    };
    let (a, la) = run();
    let (b, lb) = run();
    assert_eq!(la, lb);
    for (p, q) in a.params.iter().zip(b.params.iter()) {
        let pb: Vec<u32> = p.value.data().iter().map(|v| v.to_bits()).collect();
        let qb: Vec<u32> = q.value.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(pb, qb, "{}", p.name);
    }
}

#[test]
fn schedule_log_conforms() {
    let d = data(4, 2);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    let config = quick(4);
    let log = train(&config, &mut net, &d, |_, _| {}).unwrap();
    let steps = &log.steps;
    assert_eq!(steps.len(), 8);
    assert_eq!(steps[0].lr_spatial, 0.3);
    assert_eq!(steps[0].lr_freq, 0.0);
    // epoch 2 is the end of a 2-epoch warmup
    let boundary = steps.iter().find(|s| s.epoch == 2).unwrap();
    assert_eq!(boundary.lr_freq, 0.03);
    assert!(steps.last().unwrap().lr_spatial < 1e-4);
    for w in steps.windows(2) {
        assert!(w[1].lr_spatial <= w[0].lr_spatial);
        if w[1].epoch < 2 {
            assert!(w[1].lr_freq >= w[0].lr_freq);
        } else {
            assert_eq!(w[1].lr_freq, 0.03);
        }
    }
    assert_eq!(log.epochs.len(), 4);
    assert!(log
        .epochs
        .iter()
        .all(|e| (0.0..=1.0).contains(&e.acer) && e.loss.is_finite()));
}

#[test]
fn spatial_group_stays_fixed_after_freeze() {
    let d = data(4, 3);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    // freeze once the cosine rate drops below half its base
    let config = TrainConfig {
        freeze_ratio: 0.5,
        ..quick(4)
    };
    let mut snaps = Vec::new();
    let log = train(&config, &mut net, &d, |s, n| {
        snaps.push((
            s.spatial_frozen,
            snapshot(n, Group::Spatial),
            snapshot(n, Group::Freq),
        ))
    })
    .unwrap();
    let first_frozen = log.steps.iter().position(|s| s.spatial_frozen).unwrap();
    assert!(first_frozen > 0 && first_frozen < log.steps.len() - 1);
    for i in first_frozen..snaps.len() {
        assert!(snaps[i].0);
        assert_eq!(
            snaps[i].1,
            snaps[i - 1].1,
            "spatial moved at frozen step {i}"
        );
    }
    assert_ne!(snaps[first_frozen].2, snaps.last().unwrap().2);
}

#[test]
fn zero_frequency_rate_isolates_the_group() {
    let d = data(4, 4);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    let before = snapshot(&net, Group::Freq);
    let spatial_before = snapshot(&net, Group::Spatial);
    let config = TrainConfig {
        lr_freq: 0.0,
        ..quick(2)
    };
    train(&config, &mut net, &d, |_, _| {}).unwrap();
    assert_eq!(before, snapshot(&net, Group::Freq));
    assert_ne!(spatial_before, snapshot(&net, Group::Spatial));
}

#[test]
fn zero_epochs_leave_the_network_untouched() {
    let d = data(2, 5);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    let init = net.clone();
    let log = train(&quick(0), &mut net, &d, |_, _| {}).unwrap();
    assert!(log.steps.is_empty());
    assert_eq!(net, init);
}

#[test]
fn non_finite_loss_aborts_with_diagnostics() {
    let d = data(2, 6);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    net.params
        .get_mut("fusion.classifier.bias")
        .unwrap()
        .value
        .data_mut()[0] = f32::NAN;
    let err = train(&quick(1), &mut net, &d, |_, _| {}).unwrap_err();
    match err {
        Error::Numeric(msg) => assert!(msg.contains("step 0") && msg.contains("lr_spatial")),
        other => panic!("unexpected {other:?}"),
    }
}

#[test]
fn empty_or_mismatched_inputs_are_rejected() {
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    assert!(train(&quick(1), &mut net, &[], |_, _| {}).is_err());
    let config = TrainConfig {
        seq_len: 3,
        ..quick(1)
    };
    assert!(train(&config, &mut net, &data(2, 7), |_, _| {}).is_err());
    assert!(evaluate_split(&net, &[], &ThresholdPolicy::Fixed(0.5), 4).is_err());
}

#[test]
fn constant_model_errors_sum_to_one() {
    let d = data(3, 8);
    let mut net = Network::<f32>::new(cfg(), 9).unwrap();
    for name in ["fusion.classifier.weight", "fusion.classifier.bias"] {
        net.params.get_mut(name).unwrap().value.data_mut().fill(0.0);
    }
    for t in [0.25, 0.5, 0.75] {
        let ev = evaluate_split(&net, &d, &ThresholdPolicy::Fixed(t), 4).unwrap();
        assert!(ev.scores.iter().all(|s| s.score == 0.5));
        assert_eq!(ev.report.apcer + ev.report.bpcer, 1.0);
    }
}

#[test]
fn perfect_scores_and_oracle_agreement() {
    let perfect: Vec<ScoreRecord> = (0..6)
        .map(|i| {
            let label = if i < 3 { Label::Live } else { Label::Spoof };
            ScoreRecord::new(format!("{i}"), label, if i < 3 { 0.0 } else { 1.0 }).unwrap()
        })
        .collect();
    let ev = evaluate_scores(perfect.clone(), &ThresholdPolicy::EerOn(perfect)).unwrap();
    assert_eq!(ev.report.acer, 0.0);

    let d = data(4, 9);
    let net = Network::<f32>::new(cfg(), 10).unwrap();
    let scores = score_sequences(&net, &d, 3).unwrap();
    assert_eq!(scores.len(), d.len());
    let ev = evaluate_split(&net, &d, &ThresholdPolicy::EerOn(scores.clone()), 3).unwrap();
    assert_eq!(ev.scores, scores);
    let t = ev.report.threshold;
    let spoof: Vec<_> = scores.iter().filter(|s| s.label == Label::Spoof).collect();
    let live: Vec<_> = scores.iter().filter(|s| s.label == Label::Live).collect();
    let apcer = spoof.iter().filter(|s| s.score < t).count() as f64 / spoof.len() as f64;
    let bpcer = live.iter().filter(|s| s.score >= t).count() as f64 / live.len() as f64;
    assert_eq!((ev.report.apcer, ev.report.bpcer), (apcer, bpcer));
    assert_eq!(apcer_bpcer(&scores, t).unwrap(), (apcer, bpcer));
}
