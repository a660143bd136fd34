use crate::tensor::Tensor;

/// Logistic sigmoid, evaluated on the branch that keeps `exp` bounded.
#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
pub fn silu(x: f64) -> f64 {
    x * sigmoid(x)
}

#[inline]
pub fn relu(x: f64) -> f64 {
    x.max(0.0)
}

pub fn sigmoid_t(x: &Tensor) -> Tensor {
    x.map(sigmoid)
}

pub fn silu_t(x: &Tensor) -> Tensor {
    x.map(silu)
}

pub fn relu_t(x: &Tensor) -> Tensor {
    x.map(relu)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_is_stable_at_extremes() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(sigmoid(1000.0), 1.0);
        assert_eq!(sigmoid(-1000.0), 0.0);
        assert!((sigmoid(2.0) + sigmoid(-2.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn silu_zero_and_sign() {
        assert_eq!(silu(0.0), 0.0);
        assert!(silu(-1.0) < 0.0 && silu(1.0) > 0.0);
        assert!((silu(1.0) - 1.0 / (1.0 + (-1f64).exp())).abs() < 1e-15);
    }
}
