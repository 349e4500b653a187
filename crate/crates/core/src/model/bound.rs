use crate::error::{MvmlError, Result};
use crate::multiview::GramStack;

/// Inputs of the empirical Rademacher complexity bound for the class
/// `{x ↦ Γ_A(x)* u : A ≻ 0, ‖A‖_F ≤ α, ‖u‖ ≤ β}`.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    /// Metric-norm budget, `‖A‖_F ≤ α`.
    pub alpha: f64,
    /// Hypothesis-norm budget, `‖u‖ ≤ β`.
    pub beta: f64,
    /// `q_l = tr(K_l²)` per view.
    pub traces: Vec<f64>,
    pub n: usize,
}

impl BoundInputs {
    pub fn from_grams(alpha: f64, beta: f64, grams: &GramStack) -> Self {
        let traces = (0..grams.views())
            .map(|l| grams.block(l).iter().map(|k| k * k).sum())
            .collect();
        Self {
            alpha,
            beta,
            traces,
            n: grams.n(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RademacherBound {
    /// `β √(α ‖q‖₁) / n`.
    pub exact: f64,
    /// `β √(α τ v / n)`.
    pub tau_form: f64,
    /// `max_l tr(K_l²) / n`.
    pub tau: f64,
}

pub fn rademacher_bound(inputs: &BoundInputs) -> Result<RademacherBound> {
    let BoundInputs {
        alpha,
        beta,
        ref traces,
        n,
    } = *inputs;
    if !(alpha > 0.0 && beta > 0.0) {
        return Err(MvmlError::Input(format!(
            "alpha and beta must be positive, got {alpha} and {beta}"
        )));
    }
    if n == 0 || traces.is_empty() {
        return Err(MvmlError::Input(
            "bound needs at least one sample and one view".into(),
        ));
    }
    if traces.iter().any(|&q| !(q >= 0.0)) {
        return Err(MvmlError::Input("tr(K_l²) must be non-negative".into()));
    }
    let nf = n as f64;
    let v = traces.len() as f64;
    let q1: f64 = traces.iter().sum();
    let tau = traces.iter().cloned().fold(0.0, f64::max) / nf;
    Ok(RademacherBound {
        exact: beta * (alpha * q1).sqrt() / nf,
        tau_form: beta * (alpha * tau * v / nf).sqrt(),
        tau,
    })
}
