use nica::eval::{hsic_independence, ks_uniformity, mcc, CorrelationMode, HSIC_MIN_PERMUTATIONS, HSIC_MIN_POINTS};
use nica::rng;
use nica::Tensor;
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn noise(t: usize, d: usize, seed: u64) -> Tensor {
    let mut r = rng::stream(seed);
    Tensor::from_fn(t, d, |_, _| StandardNormal.sample(&mut r))
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for k in 0..=p.len() {
            let mut q = p.clone();
            q.insert(k, n - 1);
            out.push(q);
        }
    }
    out
}

/// Componentwise signed permutation with positive scales: `z_j = sign_j · scale_j · s_{perm_j}`.
fn scramble(s: &Tensor, perm: &[usize], signs: &[bool], scales: &[f64]) -> Tensor {
    Tensor::from_fn(s.rows(), perm.len(), |t, j| {
        let v = scales[j] * s.get(t, perm[j]);
        if signs[j] {
            -v
        } else {
            v
        }
    })
}

fn indeterminacy(d: usize) -> impl Strategy<Value = (Vec<usize>, Vec<bool>, Vec<f64>)> {
    (
        Just((0..d).collect::<Vec<_>>()).prop_shuffle(),
        prop::collection::vec(any::<bool>(), d),
        prop::collection::vec(0.01f64..100.0, d),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn signed_scaled_permutations_score_one(
        (d, (perm, signs, scales)) in (1usize..=6).prop_flat_map(|d| (Just(d), indeterminacy(d))),
        seed in any::<u64>(),
    ) {
        let s = noise(200, d, seed);
        let z = scramble(&s, &perm, &signs, &scales);
        let rep = mcc(&s, &z, CorrelationMode::Pearson).unwrap();
        prop_assert!((rep.mcc - 1.0).abs() <= 1e-12, "mcc {}", rep.mcc);
        prop_assert_eq!(rep.assignment, perm);
    }

    #[test]
    fn rank_mode_ignores_monotone_warps(
        (d, (perm, signs, scales)) in (1usize..=6).prop_flat_map(|d| (Just(d), indeterminacy(d))),
        seed in any::<u64>(),
    ) {
        let s = noise(200, d, seed);
        let z = scramble(&s, &perm, &signs, &scales);
        let warped = Tensor::from_fn(z.rows(), d, |t, j| {
            let v = z.get(t, j);
            match j % 3 {
                0 => v * v * v + 2.0 * v,
                1 => v.atan(),
                _ => v / (1.0 + v.abs()),
            }
        });
        let rep = mcc(&s, &warped, CorrelationMode::Spearman).unwrap();
        prop_assert!((rep.mcc - 1.0).abs() <= 1e-12, "mcc {}", rep.mcc);
    }

    #[test]
    fn assignment_value_equals_brute_force(d in 1usize..=6, mixing in any::<u64>()) {
        let mut r = rng::stream(mixing);
        let s = noise(300, d, mixing ^ 1);
        let a: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| r.random::<f64>() - 0.5).collect()).collect();
        let z = Tensor::from_fn(300, d, |t, j| (0..d).map(|k| a[j][k] * s.get(t, k)).sum());
        let corr: Vec<Vec<f64>> = (0..d).map(|i| (0..d).map(|j| pearson(&s.col(i), &z.col(j)).abs()).collect()).collect();
        let best = permutations(d)
            .iter()
            .map(|p| (0..d).map(|j| corr[p[j]][j]).sum::<f64>() / d as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        let rep = mcc(&s, &z, CorrelationMode::Pearson).unwrap();
        prop_assert!((rep.mcc - best).abs() <= 1e-12, "hungarian {} brute force {}", rep.mcc, best);
    }
}

#[test]
fn hsic_false_rejection_rate_is_near_level() {
    let trials = 100;
    let rejections = (0..trials)
        .filter(|&k| {
            let z = noise(HSIC_MIN_POINTS, 2, rng::derive_seed(0x45c, k));
            hsic_independence(&z, HSIC_MIN_PERMUTATIONS, rng::derive_seed(0x9e7, k))
                .unwrap()
                .reject
        })
        .count();
    assert!(
        (1..=10).contains(&rejections),
        "{rejections} of {trials} independent pairs rejected"
    );
}

#[test]
fn ks_of_exact_grid_is_half_step() {
    let n = 1000;
    let grid: Vec<f64> = (0..n).map(|i| (i as f64 + 0.5) / n as f64).collect();
    assert!((ks_uniformity(&grid).unwrap() - 0.5 / n as f64).abs() < 1e-12);
}
