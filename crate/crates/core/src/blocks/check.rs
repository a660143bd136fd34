//! The block invariant sweep: every named case builds its own seeded
//! parameters, compares a block against an identity or a brute-force
//! oracle, and reports pass or fail. Cases run in parallel; each case's
//! seed depends only on its position, so results do not depend on
//! scheduling.

use rayon::prelude::*;
use serde::Serialize;

use crate::blocks::backbone::{backbone_traced, neck_fuse, neck_inputs, BackboneConfig, BackboneParams, NeckParams};
use crate::blocks::dpca::{
    clcf_frozen_vjp_fl, clcf_fuse, clcf_fuse_frozen, clcf_traced, dpca_gate, dpca_traced, ClcfParams, DpcaConfig, DpcaParams,
    GATE_SHUFFLE_GROUPS,
};
use crate::blocks::irsa::{irsa_forward, irsa_traced, IrsaConfig, IrsaParams, BATCH_NORM_EPS};
use crate::blocks::shift::{shift_wise_conv, Direction, ShiftSpec};
use crate::error::{invalid, Result};
use crate::init::{child_seed, seeded_rng};
use crate::ops::{channel_shuffle, grad_check, shuffle_permutation, ConvParams};
use crate::reference::{naive_attention, naive_channel_shuffle, naive_conv, naive_resize, naive_shift};
use crate::tensor::{concat_channels, Tensor};
use crate::tolerance::{BLOCK_ORACLE, GRAD_CHECK_REL};

/// Outcome of one case.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckResult {
    pub block: &'static str,
    pub case: &'static str,
    pub passed: bool,
    pub detail: String,
}

type CaseFn = fn(u64) -> Result<(bool, String)>;

/// Block names in sweep order.
pub const BLOCKS: [&str; 6] = ["shift", "irsa", "dpca", "clcf", "backbone", "neck"];

const CASES: &[(&str, &str, CaseFn)] = &[
    ("shift", "constant-border", shift_constant_border),
    ("shift", "ramp-delay", shift_ramp_delay),
    ("shift", "index-remap-oracle", shift_oracle),
    ("shift", "indivisible-channels", shift_indivisible),
    ("irsa", "zero-merge-residual", irsa_zero_merge),
    ("irsa", "uniform-attention", irsa_uniform_attention),
    ("irsa", "composition-oracle", irsa_oracle),
    ("irsa", "shape-sweep", irsa_shape_sweep),
    ("irsa", "convex-hull", irsa_convex_hull),
    ("dpca", "zero-gate-half", dpca_zero_gate),
    ("dpca", "gate-range", dpca_gate_range),
    ("dpca", "composition-oracle", dpca_oracle),
    ("dpca", "shuffle-permutation", dpca_shuffle_permutation),
    ("clcf", "equal-inputs-triple", clcf_equal_inputs),
    ("clcf", "half-gate", clcf_half_gate),
    ("clcf", "elementwise-oracle", clcf_oracle),
    ("clcf", "frozen-gate-gradient", clcf_gradient),
    ("backbone", "tap-shapes", backbone_shapes),
    ("backbone", "finite-output", backbone_finite),
    ("backbone", "stage-composition", backbone_composition),
    ("backbone", "indivisible-input", backbone_indivisible),
    ("neck", "zero-gate-fusion", neck_zero_gate),
    ("neck", "shape-preservation", neck_shapes),
    ("neck", "direct-composition", neck_composition),
];

/// Names of every case as `block/case`.
pub fn case_names() -> Vec<String> {
    CASES.iter().map(|(b, c, _)| format!("{b}/{c}")).collect()
}

/// Runs every case whose block equals `filter` (or whose `block/case`
/// name equals it); all cases when `filter` is `None`.
pub fn run_checks(filter: Option<&str>, base_seed: u64) -> Result<Vec<CheckResult>> {
    let selected: Vec<(usize, &(&str, &str, CaseFn))> = CASES
        .iter()
        .enumerate()
        .filter(|(_, (b, c, _))| filter.is_none_or(|f| f == *b || f == format!("{b}/{c}")))
        .collect();
    if selected.is_empty() {
        return Err(invalid(format!("no block check matches {:?}; blocks are {}", filter.unwrap_or(""), BLOCKS.join(", "))));
    }
    Ok(selected
        .into_par_iter()
        .map(|(i, &(block, case, f))| {
            let (passed, detail) = match f(child_seed(base_seed, i as u64)) {
                Ok(r) => r,
                Err(e) => (false, format!("error: {e}")),
            };
            CheckResult { block, case, passed, detail }
        })
        .collect())
}

fn within(err: f64, tol: f64) -> (bool, String) {
    (err < tol, format!("max error {err:.3e} (tolerance {tol:.0e})"))
}

fn exact(ok: bool, what: &str) -> (bool, String) {
    (ok, if ok { what.to_string() } else { format!("violated: {what}") })
}

fn shift_constant_border(_seed: u64) -> Result<(bool, String)> {
    let spec = ShiftSpec::new(Direction::ALL.to_vec(), ConvParams::identity_depthwise(8, 3))?;
    let x = Tensor::full(&[1, 8, 5, 5], 3.0);
    let y = shift_wise_conv(&x, &spec)?;
    let mut ok = true;
    for (g, d) in Direction::ALL.iter().enumerate() {
        let (dy, dx) = d.offset();
        for yy in 0..5 {
            for xx in 0..5 {
                let vacated = (dy == 1 && yy == 0) || (dy == -1 && yy == 4) || (dx == 1 && xx == 0) || (dx == -1 && xx == 4);
                ok &= y.at4(0, g, yy, xx) == if vacated { 0.0 } else { 3.0 };
            }
        }
    }
    Ok(exact(ok, "interior keeps value, vacated strip is zero"))
}

fn shift_ramp_delay(_seed: u64) -> Result<(bool, String)> {
    let spec = ShiftSpec::new(vec![Direction::Right], ConvParams::identity_depthwise(1, 3))?;
    let x = Tensor::from_fn(&[1, 1, 4, 7], |i| (i % 7) as f64);
    let y = shift_wise_conv(&x, &spec)?;
    let expect = Tensor::from_fn(&[1, 1, 4, 7], |i| (i % 7).saturating_sub(1) as f64);
    Ok(exact(y.bitwise_eq(&expect), "right shift delays the ramp by one column"))
}

fn shift_oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let spec = ShiftSpec::seeded(8, 8, &mut rng)?;
    let x = Tensor::random_normal(&[1, 8, 5, 5], &mut rng);
    let offsets: Vec<_> = spec.directions.iter().map(|d| d.offset()).collect();
    let expect = naive_conv(&naive_shift(&x, &offsets), &spec.dw);
    Ok(within(shift_wise_conv(&x, &spec)?.max_abs_diff(&expect), BLOCK_ORACLE))
}

fn shift_indivisible(seed: u64) -> Result<(bool, String)> {
    let failed = matches!(ShiftSpec::seeded(6, 4, &mut seeded_rng(seed)), Err(crate::Error::Dimension(_)));
    Ok(exact(failed, "6 channels in 4 groups is a dimension error"))
}

fn irsa_zero_merge(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let mut p = IrsaParams::seeded(&IrsaConfig::new(8), &mut rng)?;
    p.zero_merge();
    let x = Tensor::random_normal(&[1, 8, 6, 6], &mut rng);
    let t = irsa_traced(&x, &p)?;
    let ok = t.out.data().iter().all(|&v| v == 0.0) && t.y.bitwise_eq(&x.add(&t.pre)?);
    Ok(exact(ok, "X_out is exactly zero and y equals x + X_pre bitwise"))
}

fn irsa_uniform_attention(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let p = IrsaParams::seeded(&IrsaConfig { cbr_kernel: 1, ..IrsaConfig::new(4) }, &mut rng)?;
    let x = Tensor::full(&[1, 4, 5, 5], rng_value(&mut rng));
    let t = irsa_traced(&x, &p)?;
    let v = naive_conv(&t.expand, &p.attn.proj_v);
    let mut err: f64 = 0.0;
    for ch in 0..v.shape()[1] {
        let mean = v.plane(0, ch).iter().sum::<f64>() / 25.0;
        err = t.att.plane(0, ch).iter().fold(err, |e, a| e.max((a - mean).abs()));
    }
    Ok(within(err, BLOCK_ORACLE))
}

fn rng_value(rng: &mut crate::init::SeededRng) -> f64 {
    use rand::Rng;
    rng.random_range(-1.0..1.0)
}

fn naive_irsa(x: &Tensor, p: &IrsaParams) -> Tensor {
    let conv = naive_conv(x, &p.cbr.conv);
    let bn = &p.cbr.bn;
    let (_, c, h, w) = conv.dims4().unwrap();
    let pre = Tensor::from_fn(conv.shape(), |i| {
        let ch = (i / (h * w)) % c;
        let v = (conv.data()[i] - bn.mean[ch]) / (bn.var[ch] + BATCH_NORM_EPS).sqrt() * bn.gamma[ch] + bn.beta[ch];
        v.max(0.0)
    });
    let expand = naive_conv(&pre, &p.expand);
    let q = naive_conv(&pre, &p.attn.proj_q);
    let k = naive_conv(&pre, &p.attn.proj_k);
    let v = naive_conv(&expand, &p.attn.proj_v);
    let dh = q.shape()[1] / p.attn.heads;
    let att = naive_attention(&q, &k, &v, &vec![1.0 / (dh as f64).sqrt(); p.attn.heads]);
    let offsets: Vec<_> = p.shift.directions.iter().map(|d| d.offset()).collect();
    let swc = naive_conv(&naive_shift(&att, &offsets), &p.shift.dw);
    let out = naive_conv(&att.add(&swc).unwrap(), &p.merge);
    x.add(&pre).unwrap().add(&out).unwrap()
}

fn irsa_oracle(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let p = IrsaParams::seeded(&IrsaConfig::new(4), &mut rng)?;
    let x = Tensor::random_normal(&[1, 4, 6, 6], &mut rng);
    Ok(within(irsa_forward(&x, &p)?.max_abs_diff(&naive_irsa(&x, &p)), BLOCK_ORACLE))
}

fn irsa_shape_sweep(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let (mut ran, mut rejected) = (0, 0);
    for c in [4, 8, 16] {
        for ratio in [1, 2, 4] {
            for g in [1, 2, 4, 8] {
                let cfg = IrsaConfig { ratio, shift_groups: g, ..IrsaConfig::new(c) };
                match IrsaParams::seeded(&cfg, &mut rng) {
                    Ok(p) => {
                        let x = Tensor::random_normal(&[1, c, 4, 4], &mut rng);
                        if irsa_forward(&x, &p)?.shape() != x.shape() {
                            return Ok((false, format!("shape changed for C={c} ratio={ratio} G={g}")));
                        }
                        ran += 1;
                    }
                    Err(crate::Error::Dimension(_)) if (c * ratio) % g != 0 => rejected += 1,
                    Err(e) => return Ok((false, format!("C={c} ratio={ratio} G={g}: {e}"))),
                }
            }
        }
    }
    Ok((true, format!("{ran} shapes preserved, {rejected} indivisible combinations rejected")))
}

fn irsa_convex_hull(seed: u64) -> Result<(bool, String)> {
    let mut rng = seeded_rng(seed);
    let p = IrsaParams::seeded(&IrsaConfig::new(8), &mut rng)?;
    let x = Tensor::random_normal(&[1, 8, 5, 5], &mut rng);
    let t = irsa_traced(&x, &p)?;
    let v = naive_conv(&t.expand, &p.attn.proj_v);
    let slack = 1e-12;
    let ok = (0..v.shape()[1]).all(|ch| {
        let vp = v.plane(0, ch);
        let lo = vp.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = vp.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        t.att.plane(0, ch).iter().all(|&a| a >= lo - slack && a <= hi + slack)
    });
    Ok(exact(ok, "attended values stay inside the per-channel range of V"))
}

fn dpca_params(seed: u64) -> Result<(DpcaParams, crate::init::SeededRng)> {
    let mut rng = seeded_rng(seed);
    Ok((DpcaParams::seeded(&DpcaConfig::new(4), &mut rng)?, rng))
}

fn dpca_zero_gate(seed: u64) -> Result<(bool, String)> {
    let (mut p, mut rng) = dpca_params(seed)?;
    p.zero_gate();
    let x = Tensor::random_normal(&[1, 8, 4, 4], &mut rng);
    Ok(exact(dpca_gate(&x, &p)?.data().iter().all(|&v| v == 0.5), "gate is exactly 0.5"))
}

fn dpca_gate_range(seed: u64) -> Result<(bool, String)> {
    let (p, mut rng) = dpca_params(seed)?;
    let x = Tensor::random_uniform(&[2, 8, 4, 4], -50.0, 50.0, &mut rng);
    Ok(exact(dpca_gate(&x, &p)?.data().iter().all(|&v| v > 0.0 && v < 1.0), "gate strictly inside (0, 1)"))
}

fn naive_dpca(x: &Tensor, p: &DpcaParams) -> Tensor {
    let qkv = naive_conv(x, &p.qkv);
    let local = naive_conv(&naive_channel_shuffle(&naive_conv(&qkv, &p.local_dw), p.local_shuffle), &p.local_group);
    let q = naive_conv(&qkv, &p.global.proj_q);
    let k = naive_conv(&qkv, &p.global.proj_k);
    let v = naive_conv(&qkv, &p.global.proj_v);
    let scales: Vec<f64> = p.global.head_scale.iter().map(|a| 1.0 / a).collect();
    let global = naive_conv(&naive_attention(&q, &k, &v, &scales), &p.global_out).add(&qkv).unwrap();
    let mixed = naive_channel_shuffle(&concat_channels(&[&local, &global, x]).unwrap(), GATE_SHUFFLE_GROUPS);
    naive_conv(&mixed, &p.gate).map(|v| 1.0 / (1.0 + (-v).exp()))
}

fn dpca_oracle(seed: u64) -> Result<(bool, String)> {
    let (mut p, mut rng) = dpca_params(seed)?;
    p.global.head_scale = vec![0.5, 2.0];
    let x = Tensor::random_normal(&[1, 8, 4, 4], &mut rng);
    Ok(within(dpca_gate(&x, &p)?.max_abs_diff(&naive_dpca(&x, &p)), BLOCK_ORACLE))
}

fn dpca_shuffle_permutation(seed: u64) -> Result<(bool, String)> {
    let (p, mut rng) = dpca_params(seed)?;
    let x = Tensor::random_normal(&[1, 8, 3, 3], &mut rng);
    let t = dpca_traced(&x, &p)?;
    let mut ok = true;
    for (input, groups) in [(&t.qkv, p.local_shuffle), (&concat_channels(&[&t.local, &t.global, &x])?, GATE_SHUFFLE_GROUPS)] {
        let c = input.shape()[1];
        let perm = shuffle_permutation(c, groups)?;
        let mut seen = perm.clone();
        seen.sort_unstable();
        ok &= seen == (0..c).collect::<Vec<_>>();
        let shuffled = channel_shuffle(input, groups)?;
        ok &= (0..c).all(|o| shuffled.plane(0, o) == input.plane(0, perm[o]));
    }
    Ok(exact(ok, "shuffles are channel permutations"))
}

fn clcf_params(seed: u64) -> Result<(ClcfParams, crate::init::SeededRng)> {
    let mut rng = seeded_rng(seed);
    Ok((ClcfParams::seeded(&DpcaConfig::new(4), &mut rng)?, rng))
}

fn clcf_equal_inputs(seed: u64) -> Result<(bool, String)> {
    let (p, mut rng) = clcf_params(seed)?;
    let f = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
    let t = clcf_traced(&f, &f, &p)?;
    let ok = t.mix.bitwise_eq(&f.map(|v| 3.0 * v)) && t.output.bitwise_eq(&naive_conv(&f.map(|v| 3.0 * v), &p.proj));
    Ok(exact(ok, "projection input is exactly 3F"))
}

fn clcf_half_gate(seed: u64) -> Result<(bool, String)> {
    let (mut p, mut rng) = clcf_params(seed)?;
    p.dpca.zero_gate();
    let fl = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
    let fh = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
    let t = clcf_traced(&fl, &fh, &p)?;
    Ok(within(t.mix.max_abs_diff(&fl.add(&fh)?.scale(1.5)), BLOCK_ORACLE))
}

fn clcf_oracle(seed: u64) -> Result<(bool, String)> {
    let (p, mut rng) = clcf_params(seed)?;
    let fl = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
    let fh = Tensor::random_normal(&[1, 4, 4, 4], &mut rng);
    let w = naive_dpca(&concat_channels(&[&fl, &fh])?, &p.dpca);
    let mix = Tensor::from_fn(fl.shape(), |i| {
        let (a, b, g) = (fl.data()[i], fh.data()[i], w.data()[i]);
        g * a + (1.0 - g) * b + (a + b)
    });
    Ok(within(clcf_fuse(&fl, &fh, &p)?.max_abs_diff(&naive_conv(&mix, &p.proj)), BLOCK_ORACLE))
}

fn clcf_gradient(seed: u64) -> Result<(bool, String)> {
    let (p, mut rng) = clcf_params(seed)?;
    let fl = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
    let fh = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
    let gate = dpca_gate(&concat_channels(&[&fl, &fh])?, &p.dpca)?;
    let up = Tensor::random_normal(&[1, 4, 3, 3], &mut rng);
    let err = grad_check(
        |v| Ok(clcf_fuse_frozen(v, &fh, &gate, &p.proj)?.mul(&up)?.sum()),
        |_| clcf_frozen_vjp_fl(&gate, &p.proj, &up),
        &fl,
        1e-5,
    )?;
    Ok(within(err, GRAD_CHECK_REL))
}

fn backbone_setup(seed: u64) -> Result<(BackboneParams, Tensor, crate::init::SeededRng)> {
    let mut rng = seeded_rng(seed);
    let p = BackboneParams::seeded(&BackboneConfig::default(), &mut rng)?;
    let img = Tensor::random_uniform(&[1, 3, 64, 64], 0.0, 1.0, &mut rng);
    Ok((p, img, rng))
}

fn backbone_shapes(seed: u64) -> Result<(bool, String)> {
    let (p, img, _) = backbone_setup(seed)?;
    let (_, pyr) = backbone_traced(&img, &p)?;
    let shapes: Vec<Vec<usize>> = pyr.levels().iter().map(|t| t.shape().to_vec()).collect();
    let ok = shapes == vec![vec![1, 16, 8, 8], vec![1, 16, 4, 4], vec![1, 16, 2, 2]];
    Ok((ok, format!("taps {shapes:?}")))
}

fn backbone_finite(seed: u64) -> Result<(bool, String)> {
    let (p, img, _) = backbone_setup(seed)?;
    let (_, pyr) = backbone_traced(&img, &p)?;
    Ok(exact(pyr.levels().iter().all(|t| t.is_finite()), "all taps finite"))
}

fn backbone_composition(seed: u64) -> Result<(bool, String)> {
    let (p, img, _) = backbone_setup(seed)?;
    let (inputs, pyr) = backbone_traced(&img, &p)?;
    let mut ok = true;
    for (i, tap) in [(1, &pyr.s3), (2, &pyr.s4), (3, &pyr.s5)] {
        ok &= irsa_forward(&inputs[i], &p.stages[i].irsa)?.bitwise_eq(tap);
    }
    Ok(exact(ok, "each tap equals a direct IRSA call on its stage input"))
}

fn backbone_indivisible(seed: u64) -> Result<(bool, String)> {
    let (p, _, _) = backbone_setup(seed)?;
    let failed = matches!(backbone_traced(&Tensor::zeros(&[1, 3, 40, 64]), &p), Err(crate::Error::Dimension(_)));
    Ok(exact(failed, "40x64 input is a dimension error"))
}

fn neck_setup(seed: u64) -> Result<(crate::blocks::PyramidFeatures, NeckParams)> {
    let mut rng = seeded_rng(seed);
    let pyr = crate::blocks::PyramidFeatures {
        s3: Tensor::random_normal(&[1, 8, 8, 8], &mut rng),
        s4: Tensor::random_normal(&[1, 8, 4, 4], &mut rng),
        s5: Tensor::random_normal(&[1, 8, 2, 2], &mut rng),
    };
    Ok((pyr, NeckParams::seeded(8, &mut rng)?))
}

fn neck_zero_gate(seed: u64) -> Result<(bool, String)> {
    let (pyr, mut p) = neck_setup(seed)?;
    for c in [&mut p.large, &mut p.medium, &mut p.small] {
        c.dpca.zero_gate();
    }
    let fused = neck_fuse(&pyr, &p)?;
    let pairs = [
        (&pyr.s3, naive_resize(&pyr.s4, 8, 8), &p.large, &fused.s3),
        (&pyr.s4, naive_resize(&pyr.s5, 4, 4), &p.medium, &fused.s4),
        (&pyr.s5, naive_resize(&pyr.s4, 2, 2), &p.small, &fused.s5),
    ];
    let mut err: f64 = 0.0;
    for (l, h, c, got) in pairs {
        err = err.max(naive_conv(&l.add(&h)?.scale(1.5), &c.proj).max_abs_diff(got));
    }
    Ok(within(err, BLOCK_ORACLE))
}

fn neck_shapes(seed: u64) -> Result<(bool, String)> {
    let (pyr, p) = neck_setup(seed)?;
    let fused = neck_fuse(&pyr, &p)?;
    let same = fused.levels().iter().zip(pyr.levels()).all(|(a, b)| a.shape() == b.shape());
    Ok(exact(same, "every level keeps its shape"))
}

fn neck_composition(seed: u64) -> Result<(bool, String)> {
    let (pyr, p) = neck_setup(seed)?;
    let fused = neck_fuse(&pyr, &p)?;
    let [(l3, h3), (l4, h4), (l5, h5)] = neck_inputs(&pyr)?;
    let ok = clcf_fuse(&l3, &h3, &p.large)?.bitwise_eq(&fused.s3)
        && clcf_fuse(&l4, &h4, &p.medium)?.bitwise_eq(&fused.s4)
        && clcf_fuse(&l5, &h5, &p.small)?.bitwise_eq(&fused.s5);
    Ok(exact(ok, "neck equals three direct fusion calls"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn full_sweep_passes() {
        let results = run_checks(None, 0).unwrap();
        assert_eq!(results.len(), CASES.len());
        for r in &results {
            assert!(r.passed, "{}/{}: {}", r.block, r.case, r.detail);
        }
    }

    #[test]
    fn sweep_is_deterministic_and_filterable() {
        let a = run_checks(Some("clcf"), 3).unwrap();
        let b = run_checks(Some("clcf"), 3).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|r| r.block == "clcf"));
        assert_eq!(run_checks(Some("irsa/shape-sweep"), 0).unwrap().len(), 1);
        assert!(run_checks(Some("nope"), 0).is_err());
    }
}
