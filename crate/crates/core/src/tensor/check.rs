//! Central finite-difference gradient checking.

use crate::error::Result;

use super::{NodeId, Tape, Tensor};

/// Compares the analytic gradient of a scalar-valued tape function against
/// central finite differences at `x`.
///
/// `f` must be a pure function of its leaf node: it is re-invoked on a fresh
/// tape for every perturbed evaluation. Returns the maximum over entries of
/// `|analytic - central| / (|analytic| + |central| + 1e-12)`.
pub fn finite_diff_check(
    f: impl Fn(&mut Tape, NodeId) -> Result<NodeId>,
    x: &Tensor,
    step: f64,
) -> Result<f64> {
    let analytic = {
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let loss = f(&mut tape, leaf)?;
        tape.backward(loss)?;
        tape.grad(leaf)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; x.len()])
    };

    let eval = |point: &Tensor| -> Result<f64> {
        let mut tape = Tape::new();
        let leaf = tape.leaf(point.clone());
        let loss = f(&mut tape, leaf)?;
        tape.value(loss).scalar()
    };

    let mut worst = 0.0_f64;
    for i in 0..x.len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += step;
        let mut minus = x.clone();
        minus.data_mut()[i] -= step;
        let central = (eval(&plus)? - eval(&minus)?) / (2.0 * step);
        let a = analytic[i];
        let rel = (a - central).abs() / (a.abs() + central.abs() + 1e-12);
        worst = worst.max(rel);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sum_of_squares_checks_out() {
        let x = Tensor::from_vec(2, 3, vec![0.3, -1.2, 0.7, 1.9, -0.4, 0.05]).unwrap();
        let err = finite_diff_check(
            |tape, leaf| {
                let sq = tape.square(leaf)?;
                tape.sum(sq)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let x = Tensor::from_vec(1, 3, vec![0.4, 0.5, 0.6]).unwrap();
        let err = finite_diff_check(
            |tape, _leaf| {
                let c = tape.constant(Tensor::filled(1, 1, 7.0));
                tape.scale(c, 1.0)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn matmul_chain_matches_finite_differences() {
        let a = Tensor::from_vec(3, 3, vec![0.5, -1.0, 0.25, 1.5, 0.75, -0.5, 0.1, 1.2, -0.9])
            .unwrap();
        let b = Tensor::from_vec(3, 3, vec![1.1, 0.2, -0.7, 0.4, -1.3, 0.6, -0.2, 0.9, 1.4])
            .unwrap();
        let err = finite_diff_check(
            |tape, leaf| {
                let bn = tape.constant(b.clone());
                let prod = tape.matmul(leaf, bn)?;
                tape.sum(prod)
            },
            &a,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-5, "relative error {err}");
    }

    #[test]
    fn abs_gradient_is_sign_away_from_zero() {
        let x = Tensor::from_vec(1, 4, vec![0.8, -0.6, 1.4, -1.1]).unwrap();
        let mut tape = Tape::new();
        let leaf = tape.leaf(x.clone());
        let a = tape.abs(leaf).unwrap();
        let s = tape.sum(a).unwrap();
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(leaf).unwrap(), &[1.0, -1.0, 1.0, -1.0]);

        let err = finite_diff_check(
            |tape, leaf| {
                let a = tape.abs(leaf)?;
                tape.sum(a)
            },
            &x,
            1e-6,
        )
        .unwrap();
        assert!(err < 1e-6, "relative error {err}");
    }
}
