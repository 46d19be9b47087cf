use crate::error::{Error, Result};

use super::{Gradients, ParameterSet};

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index of the worst entry.
    pub worst: Option<(String, usize)>,
    /// Analytic and central-difference derivatives at the worst entry.
    pub worst_values: (f64, f64),
    pub checked: usize,
}

/// Compares analytic gradients against central differences.
///
/// `f` returns the scalar value and its analytic gradients at the given
/// parameters. Every trainable scalar is perturbed by `±eps`; the relative
/// error is `|analytic - numeric| / max(|analytic|, |numeric|, 1e-8)` and the
/// maximum over all scalars is reported. Trainable entries missing from the
/// analytic gradients count as zero.
pub fn grad_check<F>(mut f: F, params: &ParameterSet, eps: f64) -> Result<GradCheckReport>
where
    F: FnMut(&ParameterSet) -> Result<(f64, Gradients)>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be > 0, got {eps}")));
    }
    let (value, analytic) = f(params)?;
    if !value.is_finite() {
        return Err(Error::NonFinite("grad_check base value".into()));
    }
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        worst_values: (0.0, 0.0),
        checked: 0,
    };
    let mut probe = params.clone();
    let names: Vec<String> = params
        .iter()
        .filter(|(_, p)| p.trainable)
        .map(|(n, _)| n.to_string())
        .collect();
    for name in names {
        let len = params.tensor(&name)?.len();
        for i in 0..len {
            let original = params.tensor(&name)?.data()[i];
            probe.get_mut(&name).unwrap().tensor.data_mut()[i] = original + eps;
            let (plus, _) = f(&probe)?;
            probe.get_mut(&name).unwrap().tensor.data_mut()[i] = original - eps;
            let (minus, _) = f(&probe)?;
            probe.get_mut(&name).unwrap().tensor.data_mut()[i] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite(format!("grad_check at {name}[{i}]")));
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let a = analytic.get(&name).map_or(0.0, |g| g[i]);
            let denom = a.abs().max(numeric.abs()).max(1e-8);
            let rel = (a - numeric).abs() / denom;
            report.checked += 1;
            if rel > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = rel;
                report.worst = Some((name.clone(), i));
                report.worst_values = (a, numeric);
            }
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::{sigmoid, Tensor};

    #[test]
    fn linear_function_is_exact() {
        let w = [0.5, -2.0, 3.25];
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![1.0, 0.5, -0.75]).unwrap(), true).unwrap();
        let report = grad_check(
            |p| {
                let x = p.data("x")?;
                let v = w.iter().zip(x).map(|(a, b)| a * b).sum();
                let mut g = Gradients::new();
                g.insert("x", w.to_vec());
                Ok((v, g))
            },
            &p,
            1e-6,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-9, "{report:?}");
        assert_eq!(report.checked, 3);
    }

    #[test]
    fn sigmoid_derivative_at_zero() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![0.0]).unwrap(), true).unwrap();
        let report = grad_check(
            |p| {
                let x = p.data("x")?[0];
                let s = sigmoid(x);
                let mut g = Gradients::new();
                g.insert("x", vec![s * (1.0 - s)]);
                Ok((s, g))
            },
            &p,
            1e-5,
        )
        .unwrap();
        assert!(report.max_relative_error < 1e-6);
        assert_eq!(sigmoid(0.0) * (1.0 - sigmoid(0.0)), 0.25);
    }

    #[test]
    fn wrong_gradient_is_detected() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![2.0]).unwrap(), true).unwrap();
        let report = grad_check(
            |p| {
                let x = p.data("x")?[0];
                let mut g = Gradients::new();
                g.insert("x", vec![x]); // should be 2x
                Ok((x * x, g))
            },
            &p,
            1e-6,
        )
        .unwrap();
        assert!(report.max_relative_error > 0.4);
    }

    #[test]
    fn non_finite_value_is_an_error() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![1.0]).unwrap(), true).unwrap();
        let r = grad_check(|_| Ok((f64::INFINITY, Gradients::new())), &p, 1e-6);
        assert!(matches!(r, Err(Error::NonFinite(_))));
    }

    #[test]
    fn frozen_entries_are_skipped() {
        let mut p = ParameterSet::new();
        p.insert("x", Tensor::vector(vec![1.0]).unwrap(), false).unwrap();
        let report = grad_check(|_| Ok((1.0, Gradients::new())), &p, 1e-6).unwrap();
        assert_eq!(report.checked, 0);
    }
}
