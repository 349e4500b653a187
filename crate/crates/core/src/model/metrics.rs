use nalgebra::DVector;

use crate::error::{MvmlError, Result};

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a != b {
        return Err(MvmlError::Metric(format!(
            "{a} predictions for {b} targets"
        )));
    }
    if a == 0 {
        return Err(MvmlError::Metric("empty input".into()));
    }
    Ok(())
}

/// Mean squared error divided by the (population) variance of the targets.
pub fn nmse(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    let n = targets.len() as f64;
    let mean = targets.mean();
    let var = targets.iter().map(|t| (t - mean) * (t - mean)).sum::<f64>() / n;
    if !(var > 0.0) {
        return Err(MvmlError::Metric("targets have zero variance".into()));
    }
    let mse = (predictions - targets).norm_squared() / n;
    Ok(mse / var)
}

/// Coefficient of determination, `1 − nmse`.
pub fn r2(predictions: &DVector<f64>, targets: &DVector<f64>) -> Result<f64> {
    Ok(1.0 - nmse(predictions, targets)?)
}

pub fn accuracy(predicted: &[i64], truth: &[i64]) -> Result<f64> {
    check_lengths(predicted.len(), truth.len())?;
    let hits = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(hits as f64 / truth.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(x)
    }

    #[test]
    fn nmse_edges() {
        let t = v(&[1.0, 2.0, 4.0, -1.0]);
        assert_eq!(nmse(&t, &t).unwrap(), 0.0);
        let flat = DVector::from_element(4, t.mean());
        assert!((nmse(&flat, &t).unwrap() - 1.0).abs() < 1e-15);
        assert!((r2(&flat, &t).unwrap()).abs() < 1e-15);
        assert_eq!(r2(&t, &t).unwrap(), 1.0);
        assert!(matches!(nmse(&t, &v(&[1.0; 4])), Err(MvmlError::Metric(_))));
    }

    #[test]
    fn nmse_direct_formula() {
        let p = v(&[0.5, 1.0, 3.0]);
        let t = v(&[1.0, 2.0, 6.0]);
        // mean 3, var (4 + 1 + 9)/3, mse (0.25 + 1 + 9)/3
        let expected = 10.25 / 14.0;
        assert!((nmse(&p, &t).unwrap() - expected).abs() < 1e-15);
        assert!((nmse(&p, &t).unwrap() + r2(&p, &t).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(accuracy(&[1, 0, 1, 0], &[1, 1, 1, 1]).unwrap(), 0.5);
        assert!(accuracy(&[], &[]).is_err());
        assert!(accuracy(&[1], &[1, 2]).is_err());
    }
}
