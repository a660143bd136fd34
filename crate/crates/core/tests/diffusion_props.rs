//! Schedule and sampler properties over random latents and timesteps.

use pcbdefect::diffusion::{
    ddim_sample, ddim_step, ddim_timesteps, forward_noising, make_schedule, ConditionedModel, Denoiser, OracleDenoiser,
    UNetConfig,
};
use pcbdefect::init::seeded_rng;
use pcbdefect::Tensor;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_noise_inverts_any_single_step(t in 1usize..=50, seed in any::<u64>()) {
        let sched = make_schedule(50, 1e-4, 0.02).unwrap();
        let mut rng = seeded_rng(seed);
        let z0 = Tensor::random_normal(&[1, 2, 4, 4], &mut rng);
        let eps = Tensor::random_normal(&[1, 2, 4, 4], &mut rng);
        let zt = forward_noising(&z0, t, &eps, &sched).unwrap();
        prop_assert!(ddim_step(&zt, &eps, t, 0, &sched).unwrap().max_abs_diff(&z0) < 1e-9);
    }

    #[test]
    fn oracle_chain_recovers_latent(steps in 1usize..=50, seed in any::<u64>()) {
        let sched = make_schedule(50, 1e-4, 0.02).unwrap();
        let mut rng = seeded_rng(seed);
        let z0 = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let eps = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
        let zt = forward_noising(&z0, 50, &eps, &sched).unwrap();
        let oracle = OracleDenoiser { z0: z0.clone(), schedule: sched.clone() };
        let ts = ddim_timesteps(50, steps).unwrap();
        let out = ddim_sample(&zt, &ts, &sched, |z, t| oracle.predict(z, t, None)).unwrap();
        prop_assert!(out.max_abs_diff(&z0) < 1e-7);
    }

    #[test]
    fn timesteps_span_start_to_zero(start in 1usize..200, frac in 0.0f64..1.0) {
        let steps = 1 + ((start - 1) as f64 * frac) as usize;
        let ts = ddim_timesteps(start, steps).unwrap();
        prop_assert_eq!(ts.len(), steps + 1);
        prop_assert_eq!(ts[0], start);
        prop_assert_eq!(*ts.last().unwrap(), 0);
        prop_assert!(ts.windows(2).all(|w| w[0] > w[1]));
    }

    #[test]
    fn alpha_bar_strictly_decreasing(steps in 2usize..200, lo in 1e-5f64..1e-2, span in 1e-4f64..0.05) {
        let s = make_schedule(steps, lo, lo + span).unwrap();
        prop_assert!(s.alpha_bars().windows(2).all(|w| w[0] > w[1]));
        prop_assert!(s.alpha_bar(steps) > 0.0);
    }
}

#[test]
fn fresh_model_ignores_conditions_on_many_inputs() {
    let model = ConditionedModel::seeded(&UNetConfig::default(), 3, 8, 16, &mut seeded_rng(40)).unwrap();
    for seed in 0..8 {
        let mut rng = seeded_rng(seed);
        let cond_map = Tensor::random_uniform(&[1, 3, 16, 16], 0.0, 1.0, &mut rng);
        let text = Tensor::random_normal(&[8], &mut rng);
        let z = Tensor::random_normal(&[1, 4, 16, 16], &mut rng);
        let t = 1 + seed as usize * 6;
        let plain = model.unet.predict(&z, t, None).unwrap();
        // zero convs hide the condition map but a non-zero text vector still
        // shifts the modulation, so only the zero-text case is transparent
        let zero_text = Tensor::zeros(&[8]);
        let with = pcbdefect::diffusion::injection_forward_map(&z, t, &cond_map, &zero_text, &model.unet, &model.encoder, &model.mods)
            .unwrap();
        assert!(with.bitwise_eq(&plain), "seed {seed}");
        let shifted = pcbdefect::diffusion::injection_forward_map(&z, t, &cond_map, &text, &model.unet, &model.encoder, &model.mods)
            .unwrap();
        assert!(shifted.max_abs_diff(&plain) > 0.0, "seed {seed}");
    }
}
