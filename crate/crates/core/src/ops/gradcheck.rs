use crate::error::{invalid, Error, Result};
use crate::tensor::Tensor;
use crate::tolerance::GRAD_CHECK_DENOM_EPS;

/// Compares an analytic gradient against central differences.
///
/// Returns `max_i |a_i - n_i| / (|a_i| + |n_i| + 1e-12)` where `a` is
/// `grad_f(x)` and `n_i = (f(x + h e_i) - f(x - h e_i)) / 2h`.
pub fn grad_check<F, G>(f: F, grad_f: G, x: &Tensor, h: f64) -> Result<f64>
where
    F: Fn(&Tensor) -> Result<f64>,
    G: Fn(&Tensor) -> Result<Tensor>,
{
    if !(1e-6..=1e-3).contains(&h) {
        return Err(invalid(format!("finite-difference step {h} outside [1e-6, 1e-3]")));
    }
    let analytic = grad_f(x)?;
    x.expect_same_shape(&analytic)?;
    let mut probe = x.clone();
    let mut worst: f64 = 0.0;
    for i in 0..x.len() {
        let orig = probe.data()[i];
        probe.data_mut()[i] = orig + h;
        let fp = f(&probe)?;
        probe.data_mut()[i] = orig - h;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!("non-finite objective while probing element {i}")));
        }
        let numeric = (fp - fm) / (2.0 * h);
        let a = analytic.data()[i];
        worst = worst.max((a - numeric).abs() / (a.abs() + numeric.abs() + GRAD_CHECK_DENOM_EPS));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::init::seeded_rng;

    #[test]
    fn linear_and_quadratic() {
        let mut rng = seeded_rng(9);
        let x = Tensor::random_uniform(&[3, 4], -2.0, 2.0, &mut rng);
        let e = grad_check(|t| Ok(t.sum()), |t| Ok(Tensor::full(t.shape(), 1.0)), &x, 1e-4).unwrap();
        assert!(e < 1e-8, "{e}");
        let e = grad_check(|t| Ok(t.data().iter().map(|v| v * v).sum()), |t| Ok(t.scale(2.0)), &x, 1e-4).unwrap();
        assert!(e < 1e-6, "{e}");
    }

    #[test]
    fn detects_wrong_gradient_and_bad_step() {
        let x = Tensor::full(&[2], 1.0);
        let e = grad_check(|t| Ok(t.sum()), |t| Ok(Tensor::full(t.shape(), 2.0)), &x, 1e-4).unwrap();
        assert!(e > 0.3);
        assert!(grad_check(|t| Ok(t.sum()), |t| Ok(t.clone()), &x, 1e-1).is_err());
        let r = grad_check(|_| Ok(f64::NAN), |t| Ok(t.clone()), &x, 1e-4);
        assert!(matches!(r, Err(Error::Numeric(_))));
    }
}
