//! Graph fragments for each transformation rule.

use crate::autodiff::{Graph, NodeId};

/// Soft conjunction `S((Σ x_i - k + 0.5) p)`.
pub fn t_conj(g: &mut Graph, children: &[NodeId], p: f64) -> NodeId {
    let k = children.len() as f64;
    connective(g, children, k - 0.5, p)
}

/// Soft disjunction `S((Σ x_i - 0.5) p)`.
pub fn t_disj(g: &mut Graph, children: &[NodeId], p: f64) -> NodeId {
    connective(g, children, 0.5, p)
}

fn connective(g: &mut Graph, children: &[NodeId], offset: f64, p: f64) -> NodeId {
    assert!(children.len() >= 2, "connectives take at least two operands");
    let all = g.concat(children);
    let s = g.sum(all);
    let off = g.scalar(offset);
    let z = g.sub(s, off);
    let pn = g.scalar(p);
    let z = g.mul(z, pn);
    g.sigmoid(z)
}

/// `1 - x`.
pub fn t_neg(g: &mut Graph, x: NodeId) -> NodeId {
    g.one_minus(x)
}

/// Input wrapped so that no gradient reaches it.
pub fn t_strict_gate(g: &mut Graph, input: NodeId) -> NodeId {
    g.stop_gradient(input)
}

/// `(x - min) / (max - min)` per component.
pub fn normalize(g: &mut Graph, x: NodeId, min: &[f64], max: &[f64]) -> NodeId {
    let lo = g.constant(min);
    let range: Vec<f64> = min.iter().zip(max).map(|(a, b)| b - a).collect();
    let r = g.constant(&range);
    let d = g.sub(x, lo);
    g.div(d, r)
}

/// `S((x̂ - w_t) p)`.
pub fn t_above(g: &mut Graph, xhat: NodeId, wt: NodeId, p: f64) -> NodeId {
    let d = g.sub(xhat, wt);
    let pn = g.scalar(p);
    let z = g.mul(d, pn);
    g.sigmoid(z)
}

/// `S((w_t - x̂) p)`.
pub fn t_below(g: &mut Graph, xhat: NodeId, wt: NodeId, p: f64) -> NodeId {
    let d = g.sub(wt, xhat);
    let pn = g.scalar(p);
    let z = g.mul(d, pn);
    g.sigmoid(z)
}

/// Centers on a uniform grid over `[0, 1]`; a single center sits at 0.5.
pub fn mu_grid(c: usize) -> Vec<f64> {
    match c {
        0 => vec![],
        1 => vec![0.5],
        _ => (0..c).map(|i| i as f64 / (c - 1) as f64).collect(),
    }
}

/// Gaussian width: the grid spacing, or 1 for a single center.
pub fn rbf_sigma(c: usize) -> f64 {
    if c >= 2 {
        1.0 / (c - 1) as f64
    } else {
        1.0
    }
}

/// `S(w_b + Σ w_a,i exp(-(μ_i - x̂)² / 2σ²))`.
pub fn t_rbf1d(g: &mut Graph, xhat: NodeId, mu: &[f64], sigma: f64, wa: NodeId, wb: NodeId) -> NodeId {
    let m = g.constant(mu);
    let d = g.sub(m, xhat);
    let sq = g.square(d);
    gaussian_readout(g, sq, sigma, wa, wb)
}

/// 2D variant over centers `(mu_x[k], mu_y[k])` with Euclidean distance.
pub fn t_rbf2d(
    g: &mut Graph,
    xhat: NodeId,
    yhat: NodeId,
    mu_x: &[f64],
    mu_y: &[f64],
    sigma: f64,
    wa: NodeId,
    wb: NodeId,
) -> NodeId {
    let mx = g.constant(mu_x);
    let my = g.constant(mu_y);
    let dx = g.sub(mx, xhat);
    let dy = g.sub(my, yhat);
    let sx = g.square(dx);
    let sy = g.square(dy);
    let sq = g.add(sx, sy);
    gaussian_readout(g, sq, sigma, wa, wb)
}

fn gaussian_readout(g: &mut Graph, sq_dist: NodeId, sigma: f64, wa: NodeId, wb: NodeId) -> NodeId {
    let k = g.scalar(-1.0 / (2.0 * sigma * sigma));
    let z = g.mul(sq_dist, k);
    let phi = g.exp(z);
    let weighted = g.mul(wa, phi);
    let s = g.sum(weighted);
    let z = g.add(s, wb);
    g.sigmoid(z)
}

/// `c x c` grid flattened row-major: returns `(mu_x, mu_y)`.
pub fn mu_grid_2d(c: usize) -> (Vec<f64>, Vec<f64>) {
    let axis = mu_grid(c);
    let mut xs = Vec::with_capacity(c * c);
    let mut ys = Vec::with_capacity(c * c);
    for &a in &axis {
        for &b in &axis {
            xs.push(a);
            ys.push(b);
        }
    }
    (xs, ys)
}

/// `S(b_o + Σ_i w_o,i ReLU(b_h,i + Σ_j W_h,ij x_j))` with `c` hidden units.
#[allow(clippy::too_many_arguments)]
pub fn t_categories(
    g: &mut Graph,
    x: NodeId,
    m: usize,
    c: usize,
    wh: NodeId,
    bh: NodeId,
    wo: NodeId,
    bo: NodeId,
) -> NodeId {
    let pre = g.matvec(wh, x, c, m);
    let pre = g.add(pre, bh);
    let h = g.relu(pre);
    let o = g.mul(wo, h);
    let s = g.sum(o);
    let z = g.add(s, bo);
    g.sigmoid(z)
}

/// Pre-softmax transform for grouped classes followed by softmax. Classes
/// are laid out fast first, then slow.
pub fn classify_head(g: &mut Graph, o_slow: NodeId, o_fast: NodeId, gate: NodeId) -> NodeId {
    let slow = g.add(o_slow, gate);
    let keep = g.one_minus(gate);
    let fast = g.mul(o_fast, keep);
    let logits = g.concat(&[fast, slow]);
    g.softmax(logits)
}

/// Number of trainable weights of a categorical block.
pub fn categories_param_count(m: usize, c: usize) -> usize {
    c * m + 2 * c + 1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autodiff::{ParamRef, Workspace};
    use approx::assert_abs_diff_eq;

    fn run(g: &mut Graph, out: NodeId, params: &[f64]) -> Vec<f64> {
        g.set_output(out);
        let mut ws = Workspace::new(g);
        g.forward(&mut ws, &[], params).unwrap();
        g.output_values(&ws).to_vec()
    }

    fn consts(g: &mut Graph, xs: &[f64]) -> Vec<NodeId> {
        xs.iter().map(|&x| g.scalar(x)).collect()
    }

    fn param(g: &mut Graph, start: usize, len: usize) -> NodeId {
        g.param(ParamRef { sets: vec![start], selector: None }, len)
    }

    #[test]
    fn conjunction_values() {
        let mut g = Graph::new();
        let xs = consts(&mut g, &[1.0, 1.0, 1.0]);
        let c = t_conj(&mut g, &xs, 10.0);
        assert_abs_diff_eq!(run(&mut g, c, &[])[0], 0.993307, epsilon = 1e-6);

        let mut g = Graph::new();
        let xs = consts(&mut g, &[1.0, 1.0, 0.5]);
        let c = t_conj(&mut g, &xs, 10.0);
        assert_eq!(run(&mut g, c, &[])[0], 0.5);
    }

    #[test]
    fn negation_of_one_is_zero() {
        let mut g = Graph::new();
        let x = g.scalar(1.0);
        let n = t_neg(&mut g, x);
        assert_eq!(run(&mut g, n, &[])[0], 0.0);
    }

    #[test]
    fn threshold_values() {
        let mut g = Graph::new();
        let x = g.scalar(150.0);
        let xh = normalize(&mut g, x, &[100.0], &[200.0]);
        let w = param(&mut g, 0, 1);
        let a = t_above(&mut g, xh, w, 10.0);
        assert_eq!(run(&mut g, a, &[0.5])[0], 0.5);

        let mut g = Graph::new();
        let x = g.scalar(200.0);
        let xh = normalize(&mut g, x, &[100.0], &[200.0]);
        let w = param(&mut g, 0, 1);
        let a = t_above(&mut g, xh, w, 10.0);
        assert_abs_diff_eq!(run(&mut g, a, &[0.5])[0], 0.993307, epsilon = 1e-6);
    }

    #[test]
    fn rbf1d_values() {
        let mut g = Graph::new();
        let x = g.scalar(0.0);
        let wa = param(&mut g, 0, 2);
        let wb = param(&mut g, 2, 1);
        let r = t_rbf1d(&mut g, x, &mu_grid(2), rbf_sigma(2), wa, wb);
        assert_abs_diff_eq!(run(&mut g, r, &[4.0, 0.0, -2.0])[0], 0.880797, epsilon = 1e-6);

        let mut g = Graph::new();
        let x = g.scalar(0.37);
        let wa = param(&mut g, 0, 20);
        let wb = param(&mut g, 20, 1);
        let r = t_rbf1d(&mut g, x, &mu_grid(20), rbf_sigma(20), wa, wb);
        assert_eq!(run(&mut g, r, &[0.0; 21])[0], 0.5);
    }

    #[test]
    fn rbf2d_values() {
        let (mx, my) = mu_grid_2d(2);
        let mut g = Graph::new();
        let x = g.scalar(mx[0]);
        let y = g.scalar(my[0]);
        let wa = param(&mut g, 0, 4);
        let wb = param(&mut g, 4, 1);
        let r = t_rbf2d(&mut g, x, y, &mx, &my, rbf_sigma(2), wa, wb);
        // the other centers sit at distance 1 or sqrt(2) and carry weight 0
        assert_abs_diff_eq!(run(&mut g, r, &[4.0, 0.0, 0.0, 0.0, -2.0])[0], 0.880797, epsilon = 1e-6);
    }

    #[test]
    fn grid_shapes() {
        assert_eq!(mu_grid(1), [0.5]);
        assert_eq!(rbf_sigma(1), 1.0);
        assert_eq!(mu_grid(3), [0.0, 0.5, 1.0]);
        assert_eq!(rbf_sigma(20), 1.0 / 19.0);
        assert_eq!(mu_grid_2d(20).0.len(), 400);
    }

    #[test]
    fn categories_values() {
        let mut g = Graph::new();
        let x = g.constant(&[1.0, 0.0]);
        let wh = param(&mut g, 0, 2);
        let bh = param(&mut g, 2, 1);
        let wo = param(&mut g, 3, 1);
        let bo = param(&mut g, 4, 1);
        let out = t_categories(&mut g, x, 2, 1, wh, bh, wo, bo);
        let params = [1.0, 0.0, 0.0, 1.0, -0.5];
        assert_abs_diff_eq!(run(&mut g, out, &params)[0], 0.622459, epsilon = 1e-6);
        assert_eq!(categories_param_count(2, 1), 5);
    }

    #[test]
    fn head_examples() {
        let mut g = Graph::new();
        let os = g.constant(&[0.0]);
        let of = g.constant(&[0.0]);
        let gate = g.scalar(1.0);
        let h = classify_head(&mut g, os, of, gate);
        let probs = run(&mut g, h, &[]);
        assert_abs_diff_eq!(probs[0], 0.268941, epsilon = 1e-6);
        assert_abs_diff_eq!(probs[1], 0.731059, epsilon = 1e-6);

        // gate 0 leaves the logits alone
        let mut g = Graph::new();
        let os = g.constant(&[0.3, -1.0]);
        let of = g.constant(&[2.0, 0.5]);
        let gate = g.scalar(0.0);
        let h = classify_head(&mut g, os, of, gate);
        let probs = run(&mut g, h, &[]);
        let logits = [2.0f64, 0.5, 0.3, -1.0];
        let z: f64 = logits.iter().map(|v| v.exp()).sum();
        for (p, l) in probs.iter().zip(logits) {
            assert_abs_diff_eq!(*p, l.exp() / z, epsilon = 1e-12);
        }
    }
}
