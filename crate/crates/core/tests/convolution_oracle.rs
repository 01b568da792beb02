use brightdyn::convolution::{convolve, Field};
use brightdyn::filterbank::Kernel2D;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Direct zero-padded 2-D convolution.
fn direct(img: &Field, k: &Kernel2D) -> Vec<f64> {
    let (w, h) = (img.width as isize, img.height as isize);
    let r = k.radius() as isize;
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (sx, sy) = (x - dx, y - dy);
                    if sx >= 0 && sx < w && sy >= 0 && sy < h {
                        acc += k.at(dx, dy) * img.get(sx as usize, sy as usize);
                    }
                }
            }
            out[(y * w + x) as usize] = acc;
        }
    }
    out
}

#[test]
fn spectral_matches_direct_on_random_images() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..20 {
        let img = Field::from_vec(
            64,
            64,
            (0..64 * 64).map(|_| rng.gen_range(0.0..100.0)).collect(),
        )
        .unwrap();
        let k =
            Kernel2D::from_taps(9, (0..81).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
        let fast = convolve(&img, &k).unwrap();
        let slow = direct(&img, &k);
        let scale = slow.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in fast.data.iter().zip(&slow) {
            assert!((a - b).abs() <= 1e-9 * scale, "{a} vs {b}");
        }
    }
}

#[test]
fn non_square_image_with_kernel_near_full_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (w, h) = (23, 17);
    let img =
        Field::from_vec(w, h, (0..w * h).map(|_| rng.gen_range(-5.0..5.0)).collect()).unwrap();
    let k = Kernel2D::from_taps(17, (0..289).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap();
    let fast = convolve(&img, &k).unwrap();
    let slow = direct(&img, &k);
    for (a, b) in fast.data.iter().zip(&slow) {
        assert!((a - b).abs() < 1e-9, "{a} vs {b}");
    }
}
