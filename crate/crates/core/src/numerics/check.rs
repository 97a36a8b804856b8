//! Central finite-difference gradient oracle.

use crate::error::{Error, Result};
use crate::numerics::tensor::Tensor;

/// Compares an analytic gradient against central finite differences of
/// `f`, elementwise, and returns the largest relative error.
///
/// The effective step is measured from the actually-stored f32 values
/// (`(x+h) - (x-h)` after rounding), which removes the input-rounding
/// term from the estimate. Relative error for an element is
/// `|a - n| / max(|a|, |n|, 1)`.
pub fn finite_difference_check<F>(
    mut f: F,
    analytic: &Tensor,
    params: &Tensor,
    step: f64,
) -> Result<f64>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    if step <= 0.0 {
        return Err(Error::invalid_argument(format!(
            "finite difference step must be positive, got {step}"
        )));
    }
    if analytic.shape() != params.shape() {
        return Err(Error::ShapeMismatch {
            op: "finite_difference_check",
            lhs: analytic.shape().to_vec(),
            rhs: params.shape().to_vec(),
        });
    }
    let mut max_rel = 0.0f64;
    let mut work = params.clone();
    for i in 0..params.len() {
        let x = params.data()[i] as f64;
        let xp = (x + step) as f32;
        // Choose the negative point as 2x - xp so the midpoint of the two
        // stored f32 values is x itself (exact by Sterbenz for small steps),
        // killing the midpoint-shift term of the central estimate.
        let xm = (2.0 * x - xp as f64) as f32;
        work.data_mut()[i] = xp;
        let fp = f(&work)?;
        work.data_mut()[i] = xm;
        let fm = f(&work)?;
        work.data_mut()[i] = params.data()[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite objective at element {i}: f(+)={fp}, f(-)={fm}"
            )));
        }
        let numeric = (fp - fm) / (xp as f64 - xm as f64);
        let a = analytic.data()[i] as f64;
        let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1.0);
        if rel > max_rel {
            max_rel = rel;
        }
    }
    Ok(max_rel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::tape::Tape;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn quadratic_is_exact_up_to_float_noise() {
        // f(x) = sum x_i^2, computed in f64; central differences are exact
        // on quadratics, so only floating-point noise remains.
        let params = Tensor::new(vec![5], vec![3.0, -1.5, 0.25, 2.0, -4.0]).unwrap();
        let analytic = Tensor::new(
            vec![5],
            params.data().iter().map(|&v| 2.0 * v).collect(),
        )
        .unwrap();
        let f = |p: &Tensor| -> crate::Result<f64> {
            Ok(p.data().iter().map(|&v| (v as f64) * (v as f64)).sum())
        };
        let err = finite_difference_check(f, &analytic, &params, 1e-3).unwrap();
        assert!(err < 1e-8, "max relative error {err}");
    }

    #[test]
    fn rejects_zero_step() {
        let params = Tensor::scalar(1.0);
        let analytic = Tensor::scalar(2.0);
        let f = |p: &Tensor| -> crate::Result<f64> { Ok((p.data()[0] as f64).powi(2)) };
        assert!(finite_difference_check(f, &analytic, &params, 0.0).is_err());
    }

    #[test]
    fn reports_non_finite_objective() {
        let params = Tensor::scalar(1.0);
        let analytic = Tensor::scalar(0.0);
        let f = |_: &Tensor| -> crate::Result<f64> { Ok(f64::NAN) };
        assert!(matches!(
            finite_difference_check(f, &analytic, &params, 1e-3),
            Err(crate::Error::Numeric(_))
        ));
    }

    #[test]
    fn tape_composite_graph_matches_finite_differences() {
        // relu(x W) followed by softmax + label-smoothed CE, checked
        // against the oracle for every weight.
        let mut rng = ChaCha20Rng::seed_from_u64(1234);
        let w0 = Tensor::randn(&[4, 6], 0.0, 0.8, &mut rng);
        let x = Tensor::randn(&[3, 4], 0.0, 1.0, &mut rng);
        let run = |w: &Tensor| -> crate::Result<(f64, Option<Tensor>)> {
            let mut tape = Tape::new();
            let wid = tape.leaf(w.clone());
            let xid = tape.constant(x.clone());
            let h = tape.matmul(xid, wid)?;
            let r = tape.relu(h);
            let loss = tape.cross_entropy_ls(r, &[1, 0, 5], &[1.0, 1.0, 0.5], 0.1)?;
            let value = tape.scalar_f64(loss)?;
            let grads = tape.backward(loss)?;
            Ok((value, grads.get(wid).cloned()))
        };
        let (_, analytic) = run(&w0).unwrap();
        let err = finite_difference_check(
            |w| run(w).map(|(v, _)| v),
            &analytic.unwrap(),
            &w0,
            1e-3,
        )
        .unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }
}
