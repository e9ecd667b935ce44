//! Reverse-mode gradients against central finite differences.

use super::graph::{Graph, GraphError, Workspace};
use super::real::{Dd, Real};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GradCheck {
    pub max_rel_error: f64,
    /// Parameter index where the maximum occurs.
    pub worst: Option<usize>,
}

/// Relative error `|a - n| / max(1e-8, |a| + |n|)`.
pub fn rel_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `seed · d(output)/d(params)` computed by `backward` with central
/// differences of step `eps`. The differences are evaluated in double-double
/// precision and skipped for parameters the pass does not read. `tamper`
/// may alter the analytic gradient (test hook).
pub fn grad_check(
    graph: &Graph,
    inputs: &[f64],
    params: &[f64],
    seed: &[f64],
    eps: f64,
    tamper: Option<&dyn Fn(&mut [f64])>,
) -> Result<GradCheck, GraphError> {
    let mut ws = Workspace::<f64>::new(graph);
    graph.forward(&mut ws, inputs, params)?;
    let mut analytic = vec![0.0; params.len()];
    graph.backward(&mut ws, params, seed, &mut analytic);
    if let Some(f) = tamper {
        f(&mut analytic);
    }

    let mut wd = Workspace::<Dd>::new(graph);
    let mut p: Vec<Dd> = params.iter().map(|&v| Dd::from_f64(v)).collect();
    let mut objective = |p: &[Dd]| -> Result<Dd, GraphError> {
        graph.forward(&mut wd, inputs, p)?;
        Ok(graph
            .output_values(&wd)
            .iter()
            .zip(seed)
            .fold(Dd::zero(), |s, (y, c)| s + *y * Dd::from_f64(*c)))
    };
    let h = Dd::from_f64(eps);
    let mut worst = GradCheck {
        max_rel_error: 0.0,
        worst: None,
    };
    let read = graph.params_read(inputs, params.len());
    for i in 0..params.len() {
        // parameters the forward pass never reads have a true gradient of 0
        let numeric = if read[i] {
            let base = p[i];
            p[i] = base + h;
            let up = objective(&p)?;
            p[i] = base - h;
            let down = objective(&p)?;
            p[i] = base;
            ((up - down) / (h + h)).to_f64()
        } else {
            0.0
        };
        let e = rel_error(analytic[i], numeric);
        if e > worst.max_rel_error || worst.worst.is_none() {
            worst = GradCheck {
                max_rel_error: e,
                worst: Some(i),
            };
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::graph::ParamRef;

    #[test]
    fn constant_graph_has_zero_error() {
        let mut g = Graph::new();
        g.param(ParamRef { sets: vec![0], selector: None }, 2);
        let k = g.constant(&[0.3, 0.4]);
        let c = g.sum(k);
        g.set_output(c);
        let r = grad_check(&g, &[], &[0.3, 0.4], &[1.0], 1e-5, None).unwrap();
        assert_eq!(r.max_rel_error, 0.0);
    }

    #[test]
    fn tiny_gradients_are_resolved() {
        // d/dw S(w * e^-40) is about 1e-18; plain f64 differences give noise
        let mut g = Graph::new();
        let w = g.param(ParamRef { sets: vec![0], selector: None }, 1);
        let k = g.scalar((-40.0f64).exp());
        let z = g.mul(w, k);
        let y = g.sigmoid(z);
        g.set_output(y);
        let r = grad_check(&g, &[], &[0.7], &[1.0], 1e-5, None).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
    }

    #[test]
    fn tampering_is_detected() {
        let mut g = Graph::new();
        let w = g.param(ParamRef { sets: vec![0], selector: None }, 1);
        let y = g.sigmoid(w);
        g.set_output(y);
        let bump = |gr: &mut [f64]| gr[0] *= 1.01;
        let r = grad_check(&g, &[], &[0.2], &[1.0], 1e-5, Some(&bump)).unwrap();
        assert!(r.max_rel_error > 1e-3);
    }

    #[test]
    fn unselected_sets_must_have_zero_gradient() {
        let mut g = Graph::new();
        let w = g.param(ParamRef { sets: vec![0, 1], selector: Some(0) }, 1);
        let y = g.sigmoid(w);
        g.set_output(y);
        assert_eq!(g.params_read(&[1.0], 2), vec![false, true]);
        let r = grad_check(&g, &[1.0], &[0.2, -0.4], &[1.0], 1e-5, None).unwrap();
        assert!(r.max_rel_error < 1e-10, "{r:?}");
        // a gradient leaking into the unselected set is reported
        let leak = |gr: &mut [f64]| gr[0] = 1e-3;
        let r = grad_check(&g, &[1.0], &[0.2, -0.4], &[1.0], 1e-5, Some(&leak)).unwrap();
        assert_eq!(r.worst, Some(0));
        assert_eq!(r.max_rel_error, 1.0);
    }
}
