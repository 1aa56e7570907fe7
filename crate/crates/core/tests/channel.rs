use icae::channel::{awgn, noise_sigma, superpose, ChannelParams, RngStream};
use icae::Tensor2;
use proptest::prelude::*;

fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

#[test]
fn channel_params_derive_sigma() {
    let p = ChannelParams::new(10.0, 0.0, 0.5).unwrap();
    assert_eq!(p.sigma, 1.0);
    assert!(ChannelParams::new(-1.0, 0.0, 0.5).is_err());
}

#[test]
fn awgn_zero_sigma_is_silent() {
    let t = awgn(7, 3, 0.0, &mut RngStream::new(1).rng());
    assert!(t.data().iter().all(|&v| v == 0.0));
}

#[test]
fn awgn_moments() {
    let t = awgn(125_000, 8, 1.0, &mut RngStream::new(42).rng());
    let n = t.data().len() as f64;
    let mean = t.data().iter().sum::<f64>() / n;
    let var = t.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    assert!(mean.abs() < 0.01, "mean {mean}");
    assert!((var - 1.0).abs() < 0.01, "variance {var}");
}

#[test]
fn awgn_passes_kolmogorov_smirnov() {
    let t = awgn(100_000, 1, 1.0, &mut RngStream::new(7).rng());
    let mut v = t.data().to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let d = v
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal_cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max);
    // asymptotic 1% critical value
    let critical = 1.628 / n.sqrt();
    assert!(d < critical, "D = {d}, critical {critical}");
}

#[test]
fn streams_are_reproducible_and_distinct() {
    let s = RngStream::new(9).derive(3);
    let a = awgn(4, 4, 1.0, &mut s.rng());
    let b = awgn(4, 4, 1.0, &mut s.rng());
    assert_eq!(a, b);
    let c = awgn(4, 4, 1.0, &mut RngStream::new(9).derive(4).rng());
    assert_ne!(a, c);
    let d = awgn(4, 4, 1.0, &mut RngStream::new(10).derive(3).rng());
    assert_ne!(a, d);
}

#[test]
fn superpose_examples() {
    let z = Tensor2::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let w = Tensor2::from_rows(&[vec![0.0, 1.0]]).unwrap();
    let zero = Tensor2::zeros(1, 2);
    assert_eq!(superpose(&z, &w, 0.0, &zero).unwrap(), z);
    assert_eq!(superpose(&z, &w, 10.0, &zero).unwrap().data(), &[1.0, 10.0]);
    let neg = z.map(|v| -v);
    assert!(superpose(&z, &neg, 1.0, &zero)
        .unwrap()
        .data()
        .iter()
        .all(|&v| v == 0.0));
    assert!(superpose(&z, &Tensor2::zeros(2, 2), 1.0, &zero).is_err());
}

proptest! {
    #[test]
    fn sigma_decreases_in_snr_and_rate(s in -10.0f64..20.0, ds in 0.01f64..5.0, r in 0.05f64..1.0, dr in 0.01f64..0.5) {
        let base = noise_sigma(s, r).unwrap();
        prop_assert!(noise_sigma(s + ds, r).unwrap() < base);
        prop_assert!(noise_sigma(s, r + dr).unwrap() < base);
        let want = (1.0 / (2.0 * r * 10f64.powf(s / 10.0))).sqrt();
        prop_assert!((base - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn superpose_is_elementwise_sum(
        vals in proptest::collection::vec(-5.0f64..5.0, 24),
        alpha in 0.0f64..25.0,
    ) {
        let z = Tensor2::from_vec(2, 4, vals[..8].to_vec()).unwrap();
        let w = Tensor2::from_vec(2, 4, vals[8..16].to_vec()).unwrap();
        let n = Tensor2::from_vec(2, 4, vals[16..].to_vec()).unwrap();
        let y = superpose(&z, &w, alpha, &n).unwrap();
        for i in 0..8 {
            let r = y.data()[i] - z.data()[i] - alpha * w.data()[i] - n.data()[i];
            // rounding only
            prop_assert!(r.abs() <= 4.0 * f64::EPSILON * (1.0 + alpha) * 5.0, "{r}");
        }
    }
}
