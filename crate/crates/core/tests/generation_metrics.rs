//! FID, PSNR, SSIM and the LPIPS form under random inputs.

use pcbdefect::init::seeded_rng;
use pcbdefect::metrics::{fid, gradient_pyramid, lpips_form, psnr, ssim, FeatureStats, LpipsLayer, SsimConfig, SsimWindow};
use pcbdefect::Tensor;
use proptest::prelude::*;

/// `A A^T` for a random square `A`: symmetric positive semi-definite.
fn random_stats(d: usize, seed: u64) -> FeatureStats {
    let mut rng = seeded_rng(seed);
    let a = Tensor::random_normal(&[d, d], &mut rng);
    let mut cov = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            cov[i * d + j] = (0..d).map(|k| a.data()[i * d + k] * a.data()[j * d + k]).sum();
        }
    }
    let mean = Tensor::random_normal(&[d], &mut rng).into_data();
    FeatureStats::new(mean, cov).unwrap()
}

fn image(seed: u64, h: usize, w: usize) -> Tensor {
    Tensor::random_uniform(&[1, 1, h, w], 0.0, 255.0, &mut seeded_rng(seed)).map(f64::round)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn fid_self_distance_vanishes(d in 1usize..7, seed in any::<u64>()) {
        let s = random_stats(d, seed);
        prop_assert!(fid(&s, &s).unwrap().abs() < 1e-6);
    }

    #[test]
    fn fid_is_symmetric_and_non_negative(d in 1usize..6, a in any::<u64>(), b in any::<u64>()) {
        let (x, y) = (random_stats(d, a), random_stats(d, b));
        let (xy, yx) = (fid(&x, &y).unwrap(), fid(&y, &x).unwrap());
        prop_assert!(xy >= -1e-9);
        prop_assert!((xy - yx).abs() <= 1e-7 * (1.0 + xy.abs()));
    }

    #[test]
    fn ssim_bounded_and_symmetric(a in any::<u64>(), b in any::<u64>(), gaussian in any::<bool>()) {
        let (x, y) = (image(a, 12, 10), image(b, 12, 10));
        let mut cfg = SsimConfig::default();
        if gaussian {
            cfg.window = SsimWindow::Gaussian { sigma: 1.5 };
        }
        let v = ssim(&x, &y, &cfg).unwrap();
        prop_assert!((-1.0..=1.0).contains(&v));
        prop_assert!((v - ssim(&y, &x, &cfg).unwrap()).abs() < 1e-12);
        prop_assert_eq!(ssim(&x, &x, &cfg).unwrap(), 1.0);
    }

    #[test]
    fn psnr_falls_as_offset_grows(seed in any::<u64>(), small in 1.0f64..10.0, factor in 1.5f64..4.0) {
        let x = image(seed, 8, 8).map(|v| v.clamp(50.0, 150.0));
        let near = psnr(&x, &x.map(|v| v + small), 255.0).unwrap();
        let far = psnr(&x, &x.map(|v| v + small * factor), 255.0).unwrap();
        prop_assert!(near > far);
    }

    #[test]
    fn lpips_form_is_symmetric_and_zero_on_self(a in any::<u64>(), b in any::<u64>()) {
        let layers = |x: &Tensor, y: &Tensor| -> Vec<LpipsLayer> {
            gradient_pyramid(x, 3).unwrap().into_iter().zip(gradient_pyramid(y, 3).unwrap())
                .map(|(x, y)| LpipsLayer { x, y, weight: 1.0 }).collect()
        };
        let (x, y) = (image(a, 16, 16).scale(1.0 / 255.0), image(b, 16, 16).scale(1.0 / 255.0));
        prop_assert_eq!(lpips_form(&layers(&x, &x)).unwrap(), 0.0);
        let d = lpips_form(&layers(&x, &y)).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!((d - lpips_form(&layers(&y, &x)).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn unit_offset_psnr_closed_form() {
    let x = image(3, 16, 16).map(|v| v.min(254.0));
    let v = psnr(&x, &x.map(|v| v + 1.0), 255.0).unwrap();
    assert!((v - 20.0 * 255f64.log10()).abs() < 1e-9);
    assert!((v - 48.1308).abs() < 1e-3);
}
