use crate::error::{Error, Result};

/// Compares an analytic gradient to central finite differences of `loss`.
///
/// Returns the worst per-coordinate relative error, falling back to absolute
/// error where both gradient values are near zero.
pub fn grad_check<F>(loss: F, analytic: &[f64], point: &[f64], delta: f64) -> Result<f64>
where
    F: Fn(&[f64]) -> Result<f64>,
{
    if delta <= 0.0 {
        return Err(Error::Input(format!("grad_check delta must be > 0, got {delta}")));
    }
    if analytic.len() != point.len() {
        return Err(Error::dimension(
            "grad_check analytic vs point",
            &[analytic.len()],
            &[point.len()],
        ));
    }
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for i in 0..point.len() {
        x[i] = point[i] + delta;
        let fp = loss(&x)?;
        x[i] = point[i] - delta;
        let fm = loss(&x)?;
        x[i] = point[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::Numeric(format!(
                "non-finite loss during finite differences at coordinate {i}"
            )));
        }
        let fd = (fp - fm) / (2.0 * delta);
        let a = analytic[i];
        let scale = a.abs().max(fd.abs());
        let err = if scale < 1e-6 {
            (a - fd).abs()
        } else {
            (a - fd).abs() / scale
        };
        worst = worst.max(err);
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffcore::Tape;

    #[test]
    fn quadratic_matches_exactly() {
        // f(x) = x^2 at x=3: analytic 6, FD 6
        let err = grad_check(|x| Ok(x[0] * x[0]), &[6.0], &[3.0], 1e-5).unwrap();
        assert!(err < 1e-9, "err {err}");
    }

    #[test]
    fn catches_a_wrong_gradient() {
        let err = grad_check(|x| Ok(x[0] * x[0]), &[5.0], &[3.0], 1e-5).unwrap();
        assert!(err > 0.1);
    }

    #[test]
    fn tape_mse_gradient_agrees() {
        let target = vec![0.2, -0.4, 0.9];
        let eval = |p: &[f64]| -> crate::error::Result<(f64, Vec<f64>)> {
            let mut t = Tape::new();
            let x = t.input(vec![1, 3], p.to_vec())?;
            let y = t.input(vec![1, 3], target.clone())?;
            let l = t.mse_loss(x, y)?;
            t.backward(l)?;
            Ok((t.scalar(l), t.grad(x).to_vec()))
        };
        let point = vec![0.5, 0.1, -0.3];
        let (_, g) = eval(&point).unwrap();
        let err = grad_check(|p| eval(p).map(|(l, _)| l), &g, &point, 1e-5).unwrap();
        assert!(err < 1e-9, "err {err}");
    }
}
