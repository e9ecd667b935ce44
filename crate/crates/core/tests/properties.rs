//! Property tests for the connectives, blocks, autodiff ops and the DSL.

use proptest::prelude::*;

use rulefuzz::autodiff::{grad_check, Adam, Graph, NodeId, ParamRef, ParamStore, Workspace};
use rulefuzz::dsl::{expr_to_string, parse_expr};
use rulefuzz::fuzzify::blocks::*;

fn eval(g: &Graph, inputs: &[f64], params: &[f64]) -> Vec<f64> {
    let mut ws = Workspace::<f64>::new(g);
    g.forward(&mut ws, inputs, params).unwrap();
    g.output_values(&ws).to_vec()
}

fn inputs(g: &mut Graph, n: usize) -> Vec<NodeId> {
    (0..n).map(|i| g.input(i, 1)).collect()
}

fn param(g: &mut Graph, start: usize, len: usize) -> NodeId {
    g.param(
        ParamRef {
            sets: vec![start],
            selector: None,
        },
        len,
    )
}

fn unit_vec(k: std::ops::Range<usize>) -> impl Strategy<Value = Vec<f64>> {
    k.prop_flat_map(|k| prop::collection::vec(0.0..=1.0f64, k))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn de_morgan(xs in unit_vec(2..6), p in 1.5..20.0f64) {
        let mut g = Graph::new();
        let x = inputs(&mut g, xs.len());
        let d = t_disj(&mut g, &x, p);
        let negs: Vec<_> = x.iter().map(|&n| t_neg(&mut g, n)).collect();
        let c = t_conj(&mut g, &negs, p);
        let nc = t_neg(&mut g, c);
        let both = g.concat(&[d, nc]);
        g.set_output(both);
        let out = eval(&g, &xs, &[]);
        prop_assert!((out[0] - out[1]).abs() < 1e-12, "{} vs {}", out[0], out[1]);
    }

    // p is capped by arity so that |z| < 30: beyond that the logistic rounds
    // to 0 or 1 in f64 and can only be non-decreasing.
    #[test]
    fn connectives_strictly_increase(
        (xs, p) in unit_vec(2..6).prop_flat_map(|xs| {
            let cap = 28.0 / (xs.len() as f64 + 0.5);
            (Just(xs), 1.5..cap)
        }),
        pick in any::<prop::sample::Index>(),
        delta in 1e-3..0.5f64,
    ) {
        let i = pick.index(xs.len());
        let mut up = xs.clone();
        up[i] += delta;
        for disj in [false, true] {
            let mut g = Graph::new();
            let x = inputs(&mut g, xs.len());
            let out = if disj { t_disj(&mut g, &x, p) } else { t_conj(&mut g, &x, p) };
            g.set_output(out);
            let a = eval(&g, &xs, &[])[0];
            let b = eval(&g, &up, &[])[0];
            prop_assert!(b > a, "disj={disj}: {a} !< {b}");
            prop_assert!(a > 0.0 && a < 1.0);
        }
    }

    #[test]
    fn threshold_complementarity_is_exact(xhat in -1.0..2.0f64, wt in 0.0..=1.0f64, p in 1.5..10.0f64) {
        let mut g = Graph::new();
        let x = g.input(0, 1);
        let w = param(&mut g, 0, 1);
        let a = t_above(&mut g, x, w, p);
        let b = t_below(&mut g, x, w, p);
        let both = g.concat(&[a, b]);
        g.set_output(both);
        let out = eval(&g, &[xhat], &[wt]);
        prop_assert_eq!(out[0] + out[1], 1.0);
    }

    #[test]
    fn softmax_is_a_distribution(z in prop::collection::vec(-50.0..50.0f64, 1..12)) {
        let mut g = Graph::new();
        let x = g.input(0, z.len());
        let s = g.softmax(x);
        g.set_output(s);
        let out = eval(&g, &z, &[]);
        prop_assert!(out.iter().all(|&v| v >= 0.0));
        prop_assert!((out.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn clamped_thresholds_stay_inside_bounds(
        grads in prop::collection::vec(-1e6..1e6f64, 2),
        lr in 1e-3..10.0f64,
        steps in 1usize..20,
        lo in -1e4..1e4f64,
        width in 1e-3..1e4f64,
    ) {
        let mut ps = ParamStore::new();
        ps.alloc("above", &[0.5], Some((0.0, 1.0)));
        ps.alloc("below", &[0.5], Some((0.0, 1.0)));
        ps.reset_optimizer();
        let adam = Adam::default();
        for _ in 0..steps {
            adam.step(&mut ps, &grads, lr).unwrap();
            ps.apply_clamps();
            for &w in &ps.values {
                prop_assert!((0.0..=1.0).contains(&w));
                // decision boundary in raw units
                let x = lo + w * width;
                prop_assert!(x >= lo && x <= lo + width);
            }
        }
    }
}

/// Analytic vs finite-difference gradient of `g` at random points.
fn check_graph(g: &Graph, x: &[f64], params: &[f64], seed: &[f64]) -> Result<(), TestCaseError> {
    let r = grad_check(g, x, params, seed, 1e-6, None).unwrap();
    prop_assert!(r.max_rel_error < 1e-4, "error {} at {:?}", r.max_rel_error, r.worst);
    Ok(())
}

fn seeds(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1.0..1.0f64, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn gradcheck_elementwise_ops(
        a in prop::collection::vec(-2.0..2.0f64, 3),
        b in prop::collection::vec(0.5..2.0f64, 3),
        seed in seeds(3),
    ) {
        // a: params, b: inputs (kept away from zero for div)
        type Build = fn(&mut Graph, NodeId, NodeId) -> NodeId;
        let ops: [(&str, Build); 9] = [
            ("add", |g, p, x| g.add(p, x)),
            ("sub", |g, p, x| g.sub(x, p)),
            ("mul", |g, p, x| g.mul(p, x)),
            ("div", |g, p, x| g.div(p, x)),
            ("div-denominator", |g, p, x| { let e = g.exp(p); g.div(x, e) }),
            ("exp", |g, p, _| g.exp(p)),
            ("square", |g, p, _| g.square(p)),
            ("sigmoid", |g, p, _| g.sigmoid(p)),
            ("one-minus", |g, p, _| g.one_minus(p)),
        ];
        for (name, build) in ops {
            let mut g = Graph::new();
            let p = param(&mut g, 0, 3);
            let x = g.input(0, 3);
            let out = build(&mut g, p, x);
            g.set_output(out);
            check_graph(&g, &b, &a, &seed).map_err(|e| TestCaseError::fail(format!("{name}: {e}")))?;
        }
    }

    #[test]
    fn gradcheck_relu_away_from_kink(
        a in prop::collection::vec(prop_oneof![-2.0..-0.01f64, 0.01..2.0f64], 4),
        seed in seeds(4),
    ) {
        let mut g = Graph::new();
        let p = param(&mut g, 0, 4);
        let r = g.relu(p);
        g.set_output(r);
        check_graph(&g, &[], &a, &seed)?;
    }

    #[test]
    fn gradcheck_reductions(a in prop::collection::vec(-3.0..3.0f64, 6), seed in seeds(5)) {
        let mut g = Graph::new();
        let p = param(&mut g, 0, 3);
        let q = param(&mut g, 3, 3);
        let s = g.sum(p);
        let sm = g.softmax(q);
        let c = g.concat(&[s, sm]);
        let t = g.sum(c);
        let all = g.concat(&[t, s, sm]);
        let sel = g.sum(all);
        let tail = g.concat(&[sel, sm]);
        let part = g.softmax(tail);
        let out = g.concat(&[s, part]);
        g.set_output(out);
        check_graph(&g, &[], &a, &seed)?;
    }

    #[test]
    fn gradcheck_matvec(a in prop::collection::vec(-1.0..1.0f64, 12), x in prop::collection::vec(-1.0..1.0f64, 4), seed in seeds(3)) {
        let mut g = Graph::new();
        let m = param(&mut g, 0, 12);
        let xi = g.input(0, 4);
        let y = g.matvec(m, xi, 3, 4);
        g.set_output(y);
        check_graph(&g, &x, &a, &seed)?;
    }

    #[test]
    fn gradcheck_threshold_blocks(xhat in -0.5..1.5f64, wt in 0.0..1.0f64, p in 1.5..10.0f64, s in -1.0..1.0f64) {
        for above in [true, false] {
            let mut g = Graph::new();
            let x = g.input(0, 1);
            let w = param(&mut g, 0, 1);
            let o = if above { t_above(&mut g, x, w, p) } else { t_below(&mut g, x, w, p) };
            g.set_output(o);
            check_graph(&g, &[xhat], &[wt], &[s])?;
        }
    }

    #[test]
    fn gradcheck_rbf_blocks(
        pt in prop::collection::vec(0.0..1.0f64, 2),
        w in prop::collection::vec(-0.5..0.5f64, 17),
        s in -1.0..1.0f64,
    ) {
        // 1D, 5 centers: w[0..5] amplitudes, w[5] bias
        let mut g = Graph::new();
        let x = g.input(0, 1);
        let wa = param(&mut g, 0, 5);
        let wb = param(&mut g, 5, 1);
        let o = t_rbf1d(&mut g, x, &mu_grid(5), rbf_sigma(5), wa, wb);
        g.set_output(o);
        check_graph(&g, &pt[..1], &w[..6], &[s])?;

        // 2D, 4 centers on a 2x2 grid
        let (mx, my) = mu_grid_2d(2);
        let mut g = Graph::new();
        let x = g.input(0, 1);
        let y = g.input(1, 1);
        let wa = param(&mut g, 0, 4);
        let wb = param(&mut g, 4, 1);
        let o = t_rbf2d(&mut g, x, y, &mx, &my, rbf_sigma(2), wa, wb);
        g.set_output(o);
        check_graph(&g, &pt, &w[..5], &[s])?;
    }

    #[test]
    fn gradcheck_categories_block(
        x in prop::collection::vec(prop_oneof![Just(0.0), Just(1.0)], 4),
        w in prop::collection::vec(-1.0..1.0f64, categories_param_count(4, 3)),
        s in -1.0..1.0f64,
    ) {
        // hidden pre-activations on the ReLU kink have no derivative
        let pre = |h: usize| w[12 + h] + (0..4).map(|j| w[h * 4 + j] * x[j]).sum::<f64>();
        prop_assume!((0..3).all(|h| pre(h).abs() > 1e-3));
        let mut g = Graph::new();
        let xi = g.input(0, 4);
        let wh = param(&mut g, 0, 12);
        let bh = param(&mut g, 12, 3);
        let wo = param(&mut g, 15, 3);
        let bo = param(&mut g, 18, 1);
        let o = t_categories(&mut g, xi, 4, 3, wh, bh, wo, bo);
        g.set_output(o);
        check_graph(&g, &x, &w, &[s])?;
    }

    #[test]
    fn gradcheck_connectives(w in prop::collection::vec(-2.0..2.0f64, 3), p in 1.5..10.0f64, s in -1.0..1.0f64) {
        let mut g = Graph::new();
        let leaves: Vec<_> = (0..3).map(|i| { let q = param(&mut g, i, 1); g.sigmoid(q) }).collect();
        let c = t_conj(&mut g, &leaves, p);
        let n = t_neg(&mut g, leaves[0]);
        let d = t_disj(&mut g, &[c, n, leaves[2]], p);
        g.set_output(d);
        check_graph(&g, &[], &w, &[s])?;
    }

    #[test]
    fn gradcheck_classify_head(w in prop::collection::vec(-2.0..2.0f64, 5), seed in seeds(4)) {
        let mut g = Graph::new();
        let slow = param(&mut g, 0, 2);
        let fast = param(&mut g, 2, 2);
        let gp = param(&mut g, 4, 1);
        let gate = g.sigmoid(gp);
        let o = classify_head(&mut g, slow, fast, gate);
        g.set_output(o);
        check_graph(&g, &[], &w, &seed)?;
    }

    #[test]
    fn stop_gradient_blocks_upstream_params(w in prop::collection::vec(-2.0..2.0f64, 2), s in -1.0..1.0f64) {
        let mut g = Graph::new();
        let a = param(&mut g, 0, 1);
        let b = param(&mut g, 1, 1);
        let ea = g.exp(a);
        let sg = g.stop_gradient(ea);
        let o = g.mul(sg, b);
        g.set_output(o);
        let mut ws = Workspace::<f64>::new(&g);
        g.forward(&mut ws, &[], &w).unwrap();
        let mut grad = vec![0.0; 2];
        g.backward(&mut ws, &w, &[s], &mut grad);
        prop_assert_eq!(grad[0], 0.0);
        prop_assert!((grad[1] - s * w[0].exp()).abs() < 1e-12);
    }
}

/// Random expression text over the operator set of the rule language.
fn expr_text() -> impl Strategy<Value = String> {
    let leaf = prop_oneof![
        (0u32..1000).prop_map(|n| n.to_string()),
        (0u32..1000, 1u32..100).prop_map(|(a, b)| format!("{a}.{b}")),
        prop::sample::select(vec!["x", "NOW", "shift.start", "worker.pos", "a.b.c"]).prop_map(String::from),
    ];
    leaf.prop_recursive(5, 48, 3, |inner| {
        let bin = prop::sample::select(vec!["+", "-", "*", "/", "<", ">", "<=", ">=", "==", "&&", "||"]);
        prop_oneof![
            (inner.clone(), bin, inner.clone(), any::<bool>()).prop_map(|(a, op, b, paren)| {
                if paren {
                    format!("({a}) {op} ({b})")
                } else {
                    format!("{a} {op} {b}")
                }
            }),
            inner.clone().prop_map(|a| format!("!({a})")),
            inner.clone().prop_map(|a| format!("-({a})")),
            (inner.clone(), 1u32..4).prop_map(|(a, k)| format!("({a}) ^ {k}")),
            prop::collection::vec(inner, 1..3).prop_map(|args| format!("f({})", args.join(", "))),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(500))]

    #[test]
    fn pretty_printed_expressions_reparse(src in expr_text()) {
        let Ok(mut a) = parse_expr(&src) else {
            // chained comparisons and similar are rejected; nothing to compare
            return Ok(());
        };
        let printed = expr_to_string(&a);
        let mut b = parse_expr(&printed).map_err(|e| TestCaseError::fail(format!("{printed}: {e}")))?;
        a.clear_spans();
        b.clear_spans();
        prop_assert_eq!(a, b, "{} -> {}", src, printed);
    }
}
