use proptest::prelude::*;
use spanforge::corpus::Point3;
use spanforge::metrics::{
    contact_precision, contacts_from_coords, global_identity, kabsch_rmsd, q_accuracy, shannon_profile, spearman,
    ContactRatio, IdentityDenominator, Scoring,
};

fn seq(max: usize) -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(b"ACDEGKLW".to_vec()), 1..=max)
        .prop_map(|v| String::from_utf8(v).unwrap())
}

fn points(n: std::ops::Range<usize>) -> impl Strategy<Value = Vec<Point3>> {
    prop::collection::vec(prop::array::uniform3(-20.0f64..20.0), n)
}

/// Rotation about a unit axis by Rodrigues' formula.
fn rotate(p: &Point3, axis: Point3, angle: f64) -> Point3 {
    let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
    let k = axis.map(|v| v / n);
    let (s, c) = angle.sin_cos();
    let dot = k[0] * p[0] + k[1] * p[1] + k[2] * p[2];
    let cross = [k[1] * p[2] - k[2] * p[1], k[2] * p[0] - k[0] * p[2], k[0] * p[1] - k[1] * p[0]];
    std::array::from_fn(|i| p[i] * c + cross[i] * s + k[i] * dot * (1.0 - c))
}

proptest! {
    #[test]
    fn identity_is_symmetric(a in seq(30), b in seq(30)) {
        let s = Scoring::default();
        for d in [IdentityDenominator::AlignmentLength, IdentityDenominator::ShorterSequence] {
            let ab = global_identity(&a, &b, &s, d).unwrap();
            let ba = global_identity(&b, &a, &s, d).unwrap();
            prop_assert_eq!(ab.identity, ba.identity);
            prop_assert_eq!(ab.score, ba.score);
            prop_assert!((0.0..=1.0).contains(&ab.identity));
        }
        prop_assert_eq!(global_identity(&a, &a, &s, IdentityDenominator::AlignmentLength).unwrap().identity, 1.0);
    }

    #[test]
    fn entropy_bounds_and_row_order(rows in prop::collection::vec(seq(1).prop_map(|s| s.repeat(6)), 2..30), shift in 0usize..30) {
        let profile = shannon_profile(&rows, false).unwrap();
        for (col, h) in profile.values.iter().enumerate() {
            let distinct: std::collections::BTreeSet<u8> = rows.iter().map(|r| r.as_bytes()[col]).collect();
            prop_assert!(*h >= 0.0 && *h <= (distinct.len() as f64).log2() + 1e-12);
        }
        let mut rotated = rows.clone();
        rotated.rotate_left(shift % rows.len());
        prop_assert_eq!(shannon_profile(&rotated, false).unwrap(), profile);
    }

    #[test]
    fn kabsch_ignores_rigid_motion(a in points(3..25), b_noise in points(25..26), axis in prop::array::uniform3(0.1f64..1.0), angle in -3.1f64..3.1, t in prop::array::uniform3(-50.0f64..50.0)) {
        let b: Vec<Point3> = a.iter().zip(&b_noise).map(|(p, n)| std::array::from_fn(|i| p[i] + 0.1 * n[i])).collect();
        let moved: Vec<Point3> = b.iter().map(|p| {
            let r = rotate(p, axis, angle);
            std::array::from_fn(|i| r[i] + t[i])
        }).collect();
        let base = kabsch_rmsd(&a, &b).unwrap();
        prop_assert!((kabsch_rmsd(&a, &moved).unwrap() - base).abs() <= 1e-9);
        prop_assert!((kabsch_rmsd(&b, &a).unwrap() - base).abs() <= 1e-9);
    }

    #[test]
    fn spearman_ignores_monotone_transforms(x in prop::collection::vec(-5.0f64..5.0, 3..40), y in prop::collection::vec(-5.0f64..5.0, 40)) {
        let y = &y[..x.len()];
        if let Ok(r) = spearman(&x, y) {
            let tx: Vec<f64> = x.iter().map(|v| v.exp() * 3.0 + 1.0).collect();
            let ty: Vec<f64> = y.iter().map(|v| v * v * v).collect();
            prop_assert!((spearman(&tx, &ty).unwrap() - r).abs() < 1e-12);
        }
    }

    #[test]
    fn contact_precision_ignores_monotone_transforms(l in 8usize..20, scores in prop::collection::vec(0.0f64..1.0, 400), truth in prop::collection::vec(any::<bool>(), 400)) {
        let (s, t) = (&scores[..l * l], &truth[..l * l]);
        let squashed: Vec<f64> = s.iter().map(|v| (5.0 * v).tanh()).collect();
        for ratio in [ContactRatio::L1, ContactRatio::L5, ContactRatio::Divisor(2)] {
            prop_assert_eq!(
                contact_precision(s, t, l, ratio, 6).unwrap(),
                contact_precision(&squashed, t, l, ratio, 6).unwrap()
            );
        }
    }
}

#[test]
fn q_accuracy_skips_ignored_labels() {
    let pred = ['H', 'E', 'C', 'H'];
    let truth = ['H', 'H', 'C', 'X'];
    assert_eq!(q_accuracy(&pred, &truth, Some(&'X')).unwrap(), 2.0 / 3.0);
    assert!(q_accuracy(&pred[..2], &truth, None).is_err());
}

#[test]
fn contacts_use_distance_threshold() {
    let coords: Vec<Point3> = (0..4).map(|i| [5.0 * i as f64, 0.0, 0.0]).collect();
    let c = contacts_from_coords(&coords, 8.0);
    assert!(c[1] && !c[2] && c[4] && c[2 * 4 + 3]);
}
