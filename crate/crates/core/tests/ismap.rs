use cartogan_core::ismap::*;
use cartogan_core::render::{RasterTile, Rgba};

fn maps(n: usize) -> Vec<RasterTile> {
    // Flat background crossed by a dark line: a crude map stand-in.
    (0..n)
        .map(|i| {
            let mut t = RasterTile::new(64, Rgba::rgb(240, 238, 230)).unwrap();
            for x in 0..64 {
                t.set(x, ((i * 7) % 64) as u32, [90, 90, 90]);
            }
            t
        })
        .collect()
}

fn tiny_cfg(seed: u64) -> IsMapConfig {
    IsMapConfig { epochs: 2, seed, image_size: 64, holdout: 0.25, ..Default::default() }
}

fn zeroed() -> IsMapClassifier {
    let mut c = train_ismap(&maps(2), &nonmap_set(0, 2, 64).unwrap(), &IsMapConfig { epochs: 1, image_size: 64, holdout: 0.0, ..Default::default() }).unwrap();
    for t in c.net.params.tensors_mut() {
        t.data_mut().iter_mut().for_each(|v| *v = 0.0);
    }
    c
}

#[test]
fn table_rows_are_internally_consistent() {
    // Reference (precision, recall, F1) rows per model/zoom, rounded to 3 places.
    let rows = [(1.000, 0.995, 0.998), (0.989, 0.732, 0.841), (1.000, 1.000, 1.000), (0.992, 0.911, 0.950)];
    for (p, r, f1) in rows {
        let got = f1_score(p, r).unwrap();
        assert!((got - f1).abs() <= 0.001, "P={p} R={r}: {got} vs {f1}");
    }
}

#[test]
fn metric_identities_hold_for_all_small_counts() {
    for tp in 0..6u64 {
        for fp in 0..6 {
            for fn_ in 0..6 {
                for tn in 0..6 {
                    let c = ConfusionCounts { tp, fp, fn_, tn };
                    let r = metrics(c);
                    for v in [r.precision, r.recall, r.accuracy, r.f1] {
                        assert!((0.0..=1.0).contains(&v));
                    }
                    if r.precision + r.recall > 0.0 {
                        let f1 = 2.0 * r.precision * r.recall / (r.precision + r.recall);
                        assert!((r.f1 - f1).abs() < 1e-12);
                    }
                    if c.total() > 0 {
                        assert_eq!(r.accuracy, (tp + tn) as f64 / c.total() as f64);
                    }
                }
            }
        }
    }
    let ones = metrics(ConfusionCounts { tp: 7, fp: 0, fn_: 0, tn: 3 });
    assert_eq!((ones.precision, ones.recall, ones.accuracy, ones.f1), (1.0, 1.0, 1.0, 1.0));
}

#[test]
fn twenty_item_hand_tally() {
    // Predictions for 12 known maps then 8 known non-maps.
    let pos = [true, true, false, true, true, true, false, true, true, true, true, false];
    let neg = [false, true, false, false, false, true, false, false];
    // Hand count: 9 maps hit, 3 missed; 2 false alarms, 6 rejections.
    let c = ConfusionCounts::tally(&pos, &neg);
    assert_eq!(c, ConfusionCounts { tp: 9, fp: 2, fn_: 3, tn: 6 });
    // Treating non-map as the positive class trades tp with tn and fp with fn.
    let flip = |v: &[bool]| v.iter().map(|b| !b).collect::<Vec<_>>();
    assert_eq!(ConfusionCounts::tally(&flip(&neg), &flip(&pos)), c.swapped());
    let r = metrics(c);
    assert!((r.precision - 9.0 / 11.0).abs() < 1e-12);
    assert!((r.recall - 0.75).abs() < 1e-12);
    assert!((r.accuracy - 0.75).abs() < 1e-12);
}

#[test]
fn logit_zero_is_labelled_map() {
    let c = Classification::from_logit(0.0);
    assert_eq!((c.probability, c.is_map), (0.5, true));
    assert!(!Classification::from_logit(-1e-9).is_map);
    let z = zeroed();
    let out = z.classify(&maps(1)[0]).unwrap();
    assert_eq!((out.probability, out.is_map), (0.5, true));
}

#[test]
fn one_epoch_takes_one_step_per_item() {
    let cfg = IsMapConfig { epochs: 1, image_size: 64, holdout: 0.0, ..Default::default() };
    let c = train_ismap(&maps(3), &nonmap_set(0, 4, 64).unwrap(), &cfg).unwrap();
    assert_eq!(c.steps, 7);
    assert_eq!(c.epoch_losses.len(), 1);
    let c = train_ismap(&maps(8), &nonmap_set(0, 8, 64).unwrap(), &tiny_cfg(1)).unwrap();
    // 25% of each class held out.
    assert_eq!(c.holdout.count, 4);
    assert_eq!(c.steps, 2 * 12);
}

#[test]
fn training_is_seed_deterministic() {
    let (m, n) = (maps(8), nonmap_set(2, 8, 64).unwrap());
    let a = train_ismap(&m, &n, &tiny_cfg(4)).unwrap();
    let b = train_ismap(&m, &n, &tiny_cfg(4)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.holdout.accuracy, b.holdout.accuracy);
    let t = &n[3];
    assert_eq!(a.classify(t).unwrap(), a.classify(t).unwrap());
}

#[test]
fn bad_training_inputs() {
    let n = nonmap_set(0, 4, 64).unwrap();
    assert!(train_ismap(&[], &n, &tiny_cfg(0)).is_err());
    assert!(train_ismap(&maps(4), &[], &tiny_cfg(0)).is_err());
    let big = nonmap_set(0, 2, 128).unwrap();
    assert!(train_ismap(&maps(4), &big, &tiny_cfg(0)).is_err());
    assert!(train_ismap(&maps(4), &n, &IsMapConfig { holdout: 1.0, ..tiny_cfg(0) }).is_err());
    assert!(train_ismap(&maps(4), &n, &IsMapConfig { image_size: 20, ..tiny_cfg(0) }).is_err());
}

#[test]
fn evaluate_symmetry_and_order() {
    let (m, n) = (maps(8), nonmap_set(5, 8, 64).unwrap());
    let c = train_ismap(&m, &n, &IsMapConfig { epochs: 1, ..tiny_cfg(5) }).unwrap();
    let pos: Vec<RasterTile> = m.iter().chain(&n[..3]).cloned().collect();
    let neg: Vec<RasterTile> = n[3..].iter().chain(&m[..2]).cloned().collect();
    let r = c.evaluate(&pos, &neg).unwrap();
    assert_eq!(r.counts.total(), (pos.len() + neg.len()) as u64);
    // Exchanging the sets keeps every prediction, so hits on the old
    // positives become false alarms and misses become rejections.
    let k = r.counts;
    let want = ConfusionCounts { tp: k.fp, fp: k.tp, fn_: k.tn, tn: k.fn_ };
    assert_eq!(c.evaluate(&neg, &pos).unwrap().counts, want);
    let (mut p2, mut n2) = (pos.clone(), neg.clone());
    p2.reverse();
    n2.rotate_left(2);
    assert_eq!(c.evaluate(&p2, &n2).unwrap(), r);
    assert!(c.evaluate(&[], &neg).is_err());
    assert!(c.evaluate(&pos, &[]).is_err());
    assert!(c.classify(&RasterTile::new(128, Rgba::rgb(0, 0, 0)).unwrap()).is_err());
}

#[test]
fn perfect_evaluation_reports_ones() {
    let mut z = zeroed();
    // Constant logit of +5 everywhere: every input is a map.
    let last = z.net.params.len() - 1;
    z.net.params.tensors_mut()[last].data_mut()[0] = 5.0;
    let r = z.evaluate(&maps(3), &maps(1)).unwrap();
    assert_eq!(r.counts, ConfusionCounts { tp: 3, fp: 1, fn_: 0, tn: 0 });
    let r = metrics(ConfusionCounts { tp: 3, fp: 0, fn_: 0, tn: 2 });
    assert!(r.undefined.is_empty() && r.f1 == 1.0);
}

#[test]
fn classifier_checkpoint_round_trip() {
    let (m, n) = (maps(4), nonmap_set(6, 4, 64).unwrap());
    let c = train_ismap(&m, &n, &IsMapConfig { epochs: 1, ..tiny_cfg(6) }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("ismap.cgt");
    c.save(&path).unwrap();
    let back = IsMapClassifier::load(&path).unwrap();
    assert_eq!(back, c);
    for t in m.iter().chain(&n) {
        assert_eq!(back.classify(t).unwrap(), c.classify(t).unwrap());
    }
    let e = IsMapClassifier::load(&dir.path().join("gone.cgt")).unwrap_err().to_string();
    assert!(e.contains("gone.cgt"), "{e}");
}
