//! Noise schedule, forward noising and deterministic DDIM stepping.

use std::fmt::Write as _;

use crate::error::{invalid, Result};
use crate::tensor::Tensor;

/// `betas[t - 1]` is β_t for `t = 1..=T`; `alpha_bars[t]` is the running
/// product of `1 - β_i` with `alpha_bars[0] = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSchedule {
    betas: Vec<f64>,
    alpha_bars: Vec<f64>,
}

impl NoiseSchedule {
    pub fn from_betas(betas: Vec<f64>) -> Result<Self> {
        if betas.is_empty() {
            return Err(invalid("schedule needs at least one step"));
        }
        if let Some(b) = betas.iter().find(|&&b| !(b > 0.0 && b < 1.0)) {
            return Err(invalid(format!("beta {b} outside (0, 1)")));
        }
        let mut alpha_bars = Vec::with_capacity(betas.len() + 1);
        alpha_bars.push(1.0);
        let mut acc = 1.0;
        for b in &betas {
            acc *= 1.0 - b;
            alpha_bars.push(acc);
        }
        if alpha_bars.windows(2).any(|w| !(w[1] < w[0])) || acc <= 0.0 {
            return Err(invalid("alpha-bar must be strictly decreasing and positive"));
        }
        Ok(Self { betas, alpha_bars })
    }

    /// Number of diffusion steps `T`.
    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn betas(&self) -> &[f64] {
        &self.betas
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t]
    }

    pub fn alpha_bars(&self) -> &[f64] {
        &self.alpha_bars
    }

    fn check_t(&self, t: usize) -> Result<()> {
        if t > self.steps() {
            return Err(invalid(format!("timestep {t} beyond schedule length {}", self.steps())));
        }
        Ok(())
    }

    /// `t,beta,alpha_bar` rows for `t = 1..=T`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,beta,alpha_bar\n");
        for t in 1..=self.steps() {
            let _ = writeln!(out, "{t},{:?},{:?}", self.beta(t), self.alpha_bar(t));
        }
        out
    }
}

/// Linearly spaced betas from `beta_start` to `beta_end`.
pub fn make_schedule(steps: usize, beta_start: f64, beta_end: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(invalid("schedule needs T >= 1"));
    }
    if !(0.0 < beta_start && beta_start <= beta_end && beta_end < 1.0) {
        return Err(invalid(format!("need 0 < beta_start <= beta_end < 1, got {beta_start}, {beta_end}")));
    }
    let betas = if steps == 1 {
        vec![beta_start]
    } else {
        (0..steps).map(|i| beta_start + (beta_end - beta_start) * i as f64 / (steps - 1) as f64).collect()
    };
    NoiseSchedule::from_betas(betas)
}

/// `sqrt(ab) * z0 + sqrt(1 - ab) * eps` for an explicit alpha-bar.
pub fn noise_with_alpha_bar(z0: &Tensor, alpha_bar: f64, eps: &Tensor) -> Result<Tensor> {
    let (a, s) = (alpha_bar.sqrt(), (1.0 - alpha_bar).sqrt());
    z0.zip_map(eps, |z, e| a * z + s * e)
}

/// Samples `q(z_t | z_0)` with the supplied noise.
pub fn forward_noising(z0: &Tensor, t: usize, eps: &Tensor, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    noise_with_alpha_bar(z0, sched.alpha_bar(t), eps)
}

/// One deterministic DDIM update from `t` to `t_prev`.
///
/// `t_prev == t` returns `z_t` untouched; `t_prev > t` is rejected.
pub fn ddim_step(z_t: &Tensor, eps_hat: &Tensor, t: usize, t_prev: usize, sched: &NoiseSchedule) -> Result<Tensor> {
    sched.check_t(t)?;
    if t_prev > t {
        return Err(invalid(format!("DDIM step must move backwards, got {t} -> {t_prev}")));
    }
    z_t.expect_same_shape(eps_hat)?;
    if t_prev == t {
        return Ok(z_t.clone());
    }
    let (ab_t, ab_prev) = (sched.alpha_bar(t), sched.alpha_bar(t_prev));
    let (a_t, s_t) = (ab_t.sqrt(), (1.0 - ab_t).sqrt());
    let (a_prev, s_prev) = (ab_prev.sqrt(), (1.0 - ab_prev).sqrt());
    z_t.zip_map(eps_hat, |z, e| {
        let z0_hat = (z - s_t * e) / a_t;
        a_prev * z0_hat + s_prev * e
    })
}

/// Evenly spaced, strictly decreasing timesteps from `t_start` down to 0,
/// `steps + 1` entries long.
pub fn ddim_timesteps(t_start: usize, steps: usize) -> Result<Vec<usize>> {
    if steps == 0 || steps > t_start {
        return Err(invalid(format!("cannot take {steps} DDIM steps from t = {t_start}")));
    }
    Ok((0..=steps)
        .map(|i| ((t_start * (steps - i)) as f64 / steps as f64).round() as usize)
        .collect())
}

/// Runs DDIM over consecutive pairs of `timesteps`, asking `predict` for
/// the noise estimate at each step.
pub fn ddim_sample<F>(z_start: &Tensor, timesteps: &[usize], sched: &NoiseSchedule, mut predict: F) -> Result<Tensor>
where
    F: FnMut(&Tensor, usize) -> Result<Tensor>,
{
    let mut z = z_start.clone();
    for pair in timesteps.windows(2) {
        let eps = predict(&z, pair[0])?;
        z = ddim_step(&z, &eps, pair[0], pair[1], sched)?;
    }
    Ok(z)
}
