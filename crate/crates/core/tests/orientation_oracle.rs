use brightdyn::orientation::{
    circular_convolve, make_impulse_response, modulate, FeedbackCoefficients, ImpulseParams,
    OrientationProfile,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn brute(h: &[f64], p: &[f64]) -> Vec<f64> {
    let n = h.len() as i64;
    (0..n)
        .map(|m| {
            (0..n)
                .map(|k| h[k as usize] * p[(m - k).rem_euclid(n) as usize])
                .sum()
        })
        .collect()
}

fn random_profile(rng: &mut ChaCha8Rng, n: usize) -> OrientationProfile {
    OrientationProfile::new((0..n).map(|_| rng.gen_range(-10.0..10.0)).collect()).unwrap()
}

#[test]
fn circular_convolution_matches_brute_force() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..100 {
        let h = random_profile(&mut rng, 12);
        let p = random_profile(&mut rng, 12);
        let fast = circular_convolve(&h, &p).unwrap();
        for (a, b) in fast.values().iter().zip(brute(h.values(), p.values())) {
            assert!((a - b).abs() <= 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn every_shift_commutes_with_convolution() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let h = random_profile(&mut rng, 12);
    let p = random_profile(&mut rng, 12);
    let base = circular_convolve(&h, &p).unwrap();
    for s in 0..12 {
        let moved = circular_convolve(&h, &p.shifted(s)).unwrap();
        let expect = base.shifted(s);
        for (a, b) in moved.values().iter().zip(expect.values()) {
            assert!((a - b).abs() <= 1e-12);
        }
    }
}

#[test]
fn random_parameter_sets_are_balanced() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..50 {
        let sigma_i = rng.gen_range(5.0..120.0);
        let params = ImpulseParams {
            sigma_e_deg: rng.gen_range(1.0..sigma_i),
            sigma_i_deg: sigma_i,
            theta_k_deg: rng.gen_range(0.0..180.0),
            theta_l_deg: rng.gen_range(0.0..180.0),
        };
        let h = make_impulse_response(&params, 12).unwrap();
        assert!(h.samples.sum().abs() <= 1e-12, "{params:?}");
        // Balanced kernels remove any constant from a profile.
        let flat = OrientationProfile::new(vec![3.5; 12]).unwrap();
        let out = circular_convolve(&h.samples, &flat).unwrap();
        assert!(out.values().iter().all(|v| v.abs() < 1e-12));
    }
}

#[test]
fn t2_facilitates_the_orthogonal_orientation() {
    let h = make_impulse_response(&ImpulseParams::t2(), 12).unwrap();
    // Unimodal profile peaked at 30°.
    let p = OrientationProfile::new(
        (0..12)
            .map(|i| {
                let d = ((i as f64 * 15.0 - 30.0 + 90.0).rem_euclid(180.0)) - 90.0;
                (-(d * d) / (2.0 * 20.0f64.powi(2))).exp()
            })
            .collect(),
    )
    .unwrap();
    let fb = circular_convolve(&h.samples, &p).unwrap();
    let (_, arg) = fb.peak_abs();
    assert_eq!(arg, 8, "{:?}", fb.values());
    assert!(fb.values()[8] > 0.0);
    assert!(fb.values()[2] < 0.0);

    let out = modulate(&p, &h, &FeedbackCoefficients::uniform(1, 1.0, 1.0), 0).unwrap();
    assert!(out.values()[8] > p.values()[8]);
    assert!(out.values()[2] < p.values()[2]);
}

#[test]
fn t1_sampled_kernel_follows_the_continuum_shape() {
    let params = ImpulseParams::t1();
    let h = make_impulse_response(&params, 12).unwrap();
    let v = h.samples.values();
    assert!(v[0] > 0.0);
    assert_eq!(h.samples.peak_abs().1, 0);
    assert!(v[6] < 0.0);
    // Same sign pattern as the unwrapped densities where the excitatory lobe
    // is negligible.
    for (m, &hm) in v.iter().enumerate().take(10).skip(3) {
        let theta = (m as f64 * 15.0 + 90.0).rem_euclid(180.0) - 90.0;
        assert!(hm < 0.0 && params.density(theta) < 0.0, "{m}");
    }
}
