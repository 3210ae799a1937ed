use memoprobe_core::stats::{bonferroni, kruskal_wallis, mann_whitney_u, Method};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `U_x` by direct pair counting, ties counting one half.
fn u_by_pairs(x: &[f64], y: &[f64]) -> f64 {
    let mut u = 0.0;
    for a in x {
        for b in y {
            if a > b {
                u += 1.0;
            } else if a == b {
                u += 0.5;
            }
        }
    }
    u
}

/// Two-sided permutation p-value by enumerating every split of the
/// pooled sample into groups of the original sizes.
fn brute_force_p(x: &[f64], y: &[f64]) -> f64 {
    let pooled: Vec<f64> = x.iter().chain(y).copied().collect();
    let n = pooled.len();
    let nx = x.len();
    let center = (x.len() * y.len()) as f64 / 2.0;
    let observed = (u_by_pairs(x, y) - center).abs();
    let (mut extreme, mut total) = (0u64, 0u64);
    for mask in 0u32..(1 << n) {
        if mask.count_ones() as usize != nx {
            continue;
        }
        let (mut gx, mut gy) = (Vec::with_capacity(nx), Vec::with_capacity(n - nx));
        for (i, v) in pooled.iter().enumerate() {
            if mask & (1 << i) != 0 {
                gx.push(*v);
            } else {
                gy.push(*v);
            }
        }
        total += 1;
        // U values are multiples of 1/2, so the comparison is exact
        if (u_by_pairs(&gx, &gy) - center).abs() >= observed {
            extreme += 1;
        }
    }
    extreme as f64 / total as f64
}

#[test]
fn exact_mann_whitney_matches_permutation_enumeration() {
    let mut rng = ChaCha8Rng::seed_from_u64(20_240_601);
    for fixture in 0..200 {
        let nx = rng.random_range(1..=8);
        let ny = rng.random_range(1..=8);
        let tied = fixture % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| -> f64 {
            if tied {
                rng.random_range(0..5) as f64 / 4.0
            } else {
                rng.random::<f64>()
            }
        };
        let x: Vec<f64> = (0..nx).map(|_| draw(&mut rng)).collect();
        let y: Vec<f64> = (0..ny).map(|_| draw(&mut rng)).collect();
        let got = mann_whitney_u(&x, &y).unwrap();
        assert_eq!(got.method, Method::Exact);
        let want = brute_force_p(&x, &y);
        assert!(
            (got.p_value - want).abs() < 1e-12,
            "fixture {fixture}: x={x:?} y={y:?} got {} want {want}",
            got.p_value
        );
        let u = u_by_pairs(&x, &y);
        assert_eq!(got.statistic, u.min((nx * ny) as f64 - u));
    }
}

#[test]
fn kruskal_wallis_reference_case() {
    let r = kruskal_wallis(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0], vec![7.0, 8.0, 9.0]]).unwrap();
    assert!((r.statistic - 7.2).abs() < 1e-9);
    // chi-square survival at 7.2 with 2 df is exp(-3.6)
    assert!((r.p_value - (-3.6f64).exp()).abs() < 1e-12);
}

#[test]
fn bonferroni_reference_case() {
    assert_eq!(bonferroni(&[0.01; 5]), vec![0.05; 5]);
    assert_eq!(bonferroni(&[0.3, 0.5]), vec![0.6, 1.0]);
}

#[test]
fn large_samples_use_the_normal_approximation() {
    let x: Vec<f64> = (0..20).map(f64::from).collect();
    let y: Vec<f64> = (10..35).map(f64::from).collect();
    let r = mann_whitney_u(&x, &y).unwrap();
    assert_eq!(r.method, Method::NormalApprox);
    // scipy.stats.mannwhitneyu(x, y, method="asymptotic")
    assert!((r.p_value - 5.154410524602544e-06).abs() / 5.154410524602544e-06 < 1e-9);
}
