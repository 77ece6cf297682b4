use nica::datagen::{
    build_mixing, generate_ar_sources, generate_nonstat_ar_sources, generate_nonstationary_sources, ArFunction, ArSpec,
    Innovation, LambdaSampler, NonstatArSpec, NonstationarySpec, SigmaSchedule, SourceSpec,
};
use nica::rng;
use nica::Tensor;
use proptest::prelude::*;
use proptest::test_runner::RngSeed;
use rand_distr::{Distribution, StandardNormal};

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| v.to_bits()).collect()
}

fn spec_strategy() -> impl Strategy<Value = SourceSpec> {
    let innovation = prop_oneof![
        (0.5f64..2.0).prop_map(|scale| Innovation::Laplace { scale }),
        (0.5f64..2.0).prop_map(|sigma| Innovation::Gaussian { sigma }),
        (0.5f64..2.0).prop_map(|half_width| Innovation::Uniform { half_width }),
    ];
    let function = prop_oneof![
        (-0.9f64..0.9).prop_map(|rho| ArFunction::Linear { rho }),
        (0.1f64..2.0).prop_map(|gain| ArFunction::TanhSaturating { gain }),
    ];
    let ar = (1usize..=4, 10usize..300, function, innovation).prop_map(|(d, t, r, inn)| ArSpec::uniform(d, t, r, inn));
    prop_oneof![
        (1usize..=4, 2usize..6, 5usize..50).prop_map(|(d, n_segments, points_per_segment)| {
            SourceSpec::Nonstationary(NonstationarySpec {
                d,
                n_segments,
                points_per_segment,
                lambda: LambdaSampler::default(),
            })
        }),
        ar.clone().prop_map(SourceSpec::Ar),
        (ar, 5usize..40).prop_map(|(ar, segment_len)| SourceSpec::NonstatAr(NonstatArSpec {
            ar,
            sigma: SigmaSchedule::LogUniform {
                min: 0.5,
                max: 2.0,
                segment_len
            },
        })),
    ]
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64
}

fn cross_correlation(a: &[f64], b: &[f64], lag: usize) -> f64 {
    let (a, b) = (&a[lag..], &b[..b.len() - lag]);
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let cov: f64 = a.iter().zip(b).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = a.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = b.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn same_spec_and_seed_give_identical_datasets(spec in spec_strategy(), seed in any::<u64>()) {
        let a = spec.generate(seed).unwrap();
        let b = spec.generate(seed).unwrap();
        prop_assert_eq!(bits(&a.x), bits(&b.x));
        prop_assert_eq!(bits(a.s_true.as_ref().unwrap()), bits(b.s_true.as_ref().unwrap()));
        prop_assert_eq!(&a.segments, &b.segments);
        prop_assert_eq!(a.meta, b.meta);
    }

    #[test]
    fn mixing_inverts_on_normal_points(d in 1usize..=8, layers in 0usize..=3, seed in any::<u64>()) {
        let net = build_mixing(d, layers, 10.0, seed).unwrap();
        let mut r = rng::stream(seed ^ 0x5eed);
        let s = Tensor::from_fn(1000, d, |_, _| StandardNormal.sample(&mut r));
        let back = net.inverse(&net.forward(&s).unwrap()).unwrap();
        prop_assert!(back.sub(&s).unwrap().max_abs() <= 1e-8);
    }
}

// Sampling tolerances hold with high but not certain probability, so the
// statistical cases run from a fixed seed.
proptest! {
    #![proptest_config(ProptestConfig { cases: 8, rng_seed: RngSeed::Fixed(0xda7a), ..ProptestConfig::default() })]

    #[test]
    fn ar_components_are_uncorrelated_at_small_lags(rho in -0.3f64..0.3, seed in any::<u64>()) {
        let t = 8000;
        let spec = ArSpec::uniform(3, t, ArFunction::Linear { rho }, Innovation::Laplace { scale: 1.0 });
        let s = generate_ar_sources(&spec, seed).unwrap().s_true.unwrap();
        let bound = 4.0 / (t as f64).sqrt();
        for i in 0..3 {
            for j in 0..3 {
                if i == j {
                    continue;
                }
                for lag in 0..=5 {
                    let c = cross_correlation(&s.col(i), &s.col(j), lag);
                    prop_assert!(c.abs() < bound, "components {i},{j} lag {lag}: {c}");
                }
            }
        }
    }

    #[test]
    fn segment_halves_share_variance(seed in any::<u64>()) {
        let spec = NonstationarySpec { d: 2, n_segments: 4, points_per_segment: 4096, lambda: LambdaSampler::default() };
        let s = generate_nonstationary_sources(&spec, seed).unwrap().s_true.unwrap();
        for tau in 0..4 {
            for i in 0..2 {
                let col = s.slice_rows(tau * 4096, (tau + 1) * 4096).col(i);
                let (a, b) = (variance(&col[..2048]), variance(&col[2048..]));
                prop_assert!((a / b - 1.0).abs() < 0.15, "segment {tau} component {i}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn constant_unit_sigma_matches_plain_ar() {
    let ar = ArSpec::uniform(
        2,
        500,
        ArFunction::TanhSaturating { gain: 0.9 },
        Innovation::Gaussian { sigma: 1.0 },
    );
    let plain = generate_ar_sources(&ar, 7).unwrap();
    let modulated = generate_nonstat_ar_sources(
        &NonstatArSpec {
            ar,
            sigma: SigmaSchedule::Constant { value: 1.0 },
        },
        7,
    )
    .unwrap();
    assert_eq!(bits(&plain.x), bits(&modulated.x));
}
