use fairshift::synthetic::*;
use proptest::prelude::*;

#[test]
fn spec_distribution() {
    let specs: Vec<_> = (0..10_000u64).map(sample_task_spec).collect();
    for phi in PHI_CHOICES {
        let f = specs.iter().filter(|s| s.phi == phi).count() as f64 / 1e4;
        assert!((0.23..=0.27).contains(&f), "phi {phi}: {f}");
    }
    let mean = specs.iter().map(|s| s.slope).sum::<f64>() / 1e4;
    assert!(mean.abs() <= 0.15, "{mean}");
    assert!(specs.iter().all(|s| (-5.0..=5.0).contains(&s.slope)));
}

#[test]
fn mixture_and_component_moments() {
    let mut rng = fairshift::seed::rng(1);
    let pts = sample_mixture(50_000, &mut rng);
    for c in 0..2 {
        let m = pts.iter().map(|p| p[c]).sum::<f64>() / 5e4;
        assert!(m.abs() <= 0.1, "coordinate {c}: {m}");
    }

    let pts: Vec<[f64; 2]> = (0..50_000).map(|_| DIST_POSITIVE.sample(&mut rng)).collect();
    let m0 = pts.iter().map(|p| p[0]).sum::<f64>() / 5e4;
    let m1 = pts.iter().map(|p| p[1]).sum::<f64>() / 5e4;
    let cov = pts.iter().map(|p| (p[0] - m0) * (p[1] - m1)).sum::<f64>() / 5e4;
    assert!((cov - 1.0).abs() <= 0.15, "{cov}");
    let var0 = pts.iter().map(|p| (p[0] - m0).powi(2)).sum::<f64>() / 5e4;
    assert!((var0 - 5.0).abs() <= 0.2, "{var0}");
}

#[test]
fn equal_densities_give_even_odds() {
    // Bisect along the segment between the two means for equal densities.
    let phi = 2.0;
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    let point = |t: f64| {
        let xr = [2.0 - 4.0 * t, 2.0 - 4.0 * t];
        rotate(xr, -phi)
    };
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let xr = rotate(point(mid), phi);
        if DIST_POSITIVE.density(xr) > DIST_NEGATIVE.density(xr) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    assert!((protected_probability(point(lo), phi) - 0.5).abs() < 1e-9);
}

fn abs_corr(a: &[u8], y: &[u8]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let my = y.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
    let (mut c, mut va, mut vy) = (0.0, 0.0, 0.0);
    for (&ai, &yi) in a.iter().zip(y) {
        let (da, dy) = (f64::from(ai) - ma, f64::from(yi) - my);
        c += da * dy;
        va += da * da;
        vy += dy * dy;
    }
    (c / (va * vy).sqrt()).abs()
}

/// |corr(a, y)| with labels by distribution membership, frozen from an
/// independent numpy simulation (20,000 points): 0.091 at phi 2, 0.539 at
/// 4, 0.129 at 8 and 0.633 at 16.
#[test]
fn phi_correlation_matches_simulation() {
    let mut rng = fairshift::seed::rng(5);
    let mut pts = Vec::new();
    let mut y = Vec::new();
    for i in 0..20_000 {
        let pos = i % 2 == 0;
        pts.push(if pos { DIST_POSITIVE.sample(&mut rng) } else { DIST_NEGATIVE.sample(&mut rng) });
        y.push(u8::from(pos));
    }
    for (phi, expected) in [(2.0, 0.091), (4.0, 0.539), (8.0, 0.129), (16.0, 0.633)] {
        let a = assign_sensitive(&pts, &y, phi, &mut rng).unwrap();
        let c = abs_corr(&a, &y);
        assert!((c - expected).abs() < 0.03, "phi {phi}: {c}");
    }
}

#[test]
fn biased_set_contract() {
    let set = make_biased_finetune_set(3, 1000).unwrap();
    assert_eq!(set.support.n_rows(), 5);
    assert!(set.support.labels().iter().all(|&y| y == 1));
    assert!(set.support.sensitive().iter().all(|&a| a == 0));
    assert_eq!(set.evaluation.n_rows(), 1000);
    set.evaluation.validate().unwrap();
    assert_eq!(set, make_biased_finetune_set(3, 1000).unwrap());
    assert_ne!(set.support, make_biased_finetune_set(4, 1000).unwrap().support);
    // Labels follow distribution membership: positives sit around (2, 2).
    let x = set.evaluation.features();
    let mean_pos: f64 = (0..1000).filter(|&i| set.evaluation.labels()[i] == 1).map(|i| x[[i, 0]] + x[[i, 1]]).sum::<f64>()
        / set.evaluation.labels().iter().filter(|&&y| y == 1).count() as f64;
    assert!(mean_pos > 3.0, "{mean_pos}");
    assert!(make_biased_finetune_set(3, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn training_points_follow_line_rule(seed in any::<u64>(), n in 1usize..200) {
        let spec = sample_task_spec(seed);
        let ds = sample_training_points(&spec, n).unwrap();
        ds.validate().unwrap();
        let x = ds.features();
        for i in 0..n {
            prop_assert_eq!(ds.labels()[i], u8::from(x[[i, 1]] > spec.slope * x[[i, 0]]));
        }
    }

    #[test]
    fn sensitive_is_row_equivariant(seed in 0u64..1000, phi in prop::sample::select(PHI_CHOICES.to_vec())) {
        let mut rng = fairshift::seed::rng(seed);
        let pts = sample_mixture(30, &mut rng);
        let u: Vec<f64> = (0..30).map(|i| (i as f64 + 0.5) / 30.0).collect();
        let a = sensitive_from_uniforms(&pts, &u, phi);
        let perm: Vec<usize> = (0..30).rev().collect();
        let pp: Vec<[f64; 2]> = perm.iter().map(|&i| pts[i]).collect();
        let pu: Vec<f64> = perm.iter().map(|&i| u[i]).collect();
        let b = sensitive_from_uniforms(&pp, &pu, phi);
        prop_assert_eq!(b, perm.iter().map(|&i| a[i]).collect::<Vec<_>>());
    }
}
