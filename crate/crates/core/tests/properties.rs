use bsde_order::checker::{c_required, c_required_uniform};
use bsde_order::dsl::{parse_expr, BinaryOp, Env, Expr, UnaryOp, Var, VarContext};
use bsde_order::geometry::{
    dist_halfspace, hess_sq_dist, order_ge, project_halfspace, projection_oracle, quad_form, Direction, HalfSpace,
};
use bsde_order::harness::sample_ordered_terminals;
use bsde_order::linalg::{dot, Mat};
use bsde_order::solver::{solve, BsdeSpec, SchemeConfig};
use bsde_order::{Generator, TerminalFn};
use proptest::prelude::*;

fn direction(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-3.0..3.0f64, n).prop_filter("nonzero", |v| v.iter().map(|x| x * x).sum::<f64>() > 1e-2)
}

fn pair_of_vecs(max_n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (1..=max_n).prop_flat_map(|n| (direction(n), prop::collection::vec(-10.0..10.0f64, n)))
}

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0.0..100.0f64).prop_map(Expr::num),
        Just(Expr::t()),
        (0..2usize).prop_map(Expr::y),
        (0..2usize, 0..2usize).prop_map(|(k, j)| Expr::z(k, j)),
        (0..2usize).prop_map(Expr::z_row_norm),
    ]
}

fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(5, 48, 2, |inner| {
        let unary = prop_oneof![
            Just(UnaryOp::Neg),
            Just(UnaryOp::Abs),
            Just(UnaryOp::Pos),
            Just(UnaryOp::NegPart),
            Just(UnaryOp::Exp),
            Just(UnaryOp::Sin),
        ];
        let binary = prop_oneof![
            Just(BinaryOp::Add),
            Just(BinaryOp::Sub),
            Just(BinaryOp::Mul),
            Just(BinaryOp::Div),
            Just(BinaryOp::Min),
            Just(BinaryOp::Max),
        ];
        prop_oneof![
            (unary, inner.clone()).prop_map(|(op, a)| Expr::unary(op, a)),
            (binary, inner.clone(), inner).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
        ]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn printed_expressions_parse_back(e in expr(), y in prop::collection::vec(-2.0..2.0f64, 2),
                                      z in prop::collection::vec(-2.0..2.0f64, 4), t in 0.0..1.0f64) {
        let ctx = VarContext::state(2, 2);
        let text = e.to_string();
        let back = parse_expr(&text, &ctx).unwrap();
        prop_assert_eq!(back.to_string(), text);
        let z = Mat::from_rows(2, 2, z);
        let env = Env::state(t, &y, &z);
        let (a, b) = (e.eval(&env), back.eval(&env));
        prop_assert!(a.to_bits() == b.to_bits() || (a.is_nan() && b.is_nan()), "{} vs {}", a, b);
    }

    #[test]
    fn projection_is_nearest_point_of_k((q, y) in pair_of_vecs(6), seed in any::<u64>()) {
        let dir = Direction::new(&q).unwrap();
        let k = HalfSpace::new(dir.clone());
        let p = project_halfspace(&k, &y).unwrap();
        prop_assert!(dir.inner(&p).unwrap() >= -1e-12);
        let gap: f64 = y.iter().zip(&p).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
        prop_assert!((gap - dist_halfspace(&k, &y).unwrap()).abs() <= 1e-12);
        // Any other point of K is at least as far away.
        let mut rng = bsde_order::sampling::stream_rng(seed, 0);
        for _ in 0..16 {
            let mut x: Vec<f64> = bsde_order::sampling::uniform_box(&mut rng, q.len(), 10.0);
            let lvl = dir.inner(&x).unwrap();
            if lvl < 0.0 {
                for (xi, qi) in x.iter_mut().zip(dir.as_slice()) {
                    *xi -= 2.0 * lvl * qi;
                }
            }
            let other: f64 = y.iter().zip(&x).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            prop_assert!(gap <= other + 1e-9);
        }
    }

    #[test]
    fn closed_form_matches_linear_system((q, y) in pair_of_vecs(6)) {
        let dir = Direction::new(&q).unwrap();
        let k = HalfSpace::new(dir.clone());
        match projection_oracle(&dir, &y) {
            Ok((u, d)) => {
                let p = project_halfspace(&k, &y).unwrap();
                for (a, b) in p.iter().zip(&u) {
                    prop_assert!((a - b).abs() <= 1e-9);
                }
                prop_assert!((dist_halfspace(&k, &y).unwrap() - d).abs() <= 1e-9);
            }
            Err(_) => {
                prop_assert_eq!(project_halfspace(&k, &y).unwrap(), y.clone());
                prop_assert_eq!(dist_halfspace(&k, &y).unwrap(), 0.0);
            }
        }
    }

    #[test]
    fn quadratic_form_is_squared_norm((q, _y) in pair_of_vecs(6), d in 1..4usize, seed in any::<u64>()) {
        let n = q.len();
        let dir = Direction::new(&q).unwrap();
        let mut rng = bsde_order::sampling::stream_rng(seed, 1);
        let z = Mat::from_rows(n, d, bsde_order::sampling::uniform_box(&mut rng, n * d, 3.0));
        let below: Vec<f64> = dir.as_slice().iter().map(|v| -v).collect();
        let h = hess_sq_dist(&HalfSpace::new(dir.clone()), &below).unwrap();
        let ztq = z.transpose_mul(dir.as_slice());
        prop_assert!((quad_form(&h, &z).unwrap() / 2.0 - dot(&ztq, &ztq)).abs() <= 1e-12 * (1.0 + dot(&ztq, &ztq)));
    }

    #[test]
    fn order_is_total_and_scale_invariant(q in direction(4), a in prop::collection::vec(-5.0..5.0f64, 4),
                                          b in prop::collection::vec(-5.0..5.0f64, 4), lam in 0.01..100.0f64) {
        let dir = Direction::new(&q).unwrap();
        prop_assert!(order_ge(&dir, &a, &b).unwrap() || order_ge(&dir, &b, &a).unwrap());
        prop_assert!(order_ge(&dir, &a, &a).unwrap());
        // Exact scaling can flip ties by rounding; stay away from them.
        let gap = dir.inner(&a).unwrap() - dir.inner(&b).unwrap();
        prop_assume!(gap.abs() > 1e-9);
        let scale = |v: &[f64]| v.iter().map(|x| x * lam).collect::<Vec<_>>();
        prop_assert_eq!(order_ge(&dir, &a, &b).unwrap(), order_ge(&dir, &scale(&a), &scale(&b)).unwrap());
        let scaled_q = Direction::new(&scale(&q)).unwrap();
        prop_assert_eq!(order_ge(&dir, &a, &b).unwrap(), order_ge(&scaled_q, &a, &b).unwrap());
    }

    #[test]
    fn uniform_form_agrees_with_general(y in prop::collection::vec(-4.0..4.0f64, 3),
                                        yp in prop::collection::vec(-4.0..4.0f64, 3),
                                        z in prop::collection::vec(-4.0..4.0f64, 3),
                                        zp in prop::collection::vec(-4.0..4.0f64, 3)) {
        let g1 = Generator::parse(3, 1, &["y2 - abs(z1)", "sin(y3) + z2", "max(y1, z3)"], Some(2.0), "g1").unwrap();
        let g2 = Generator::parse(3, 1, &["y1 * 0.5", "-z2", "y3 - y2"], Some(2.0), "g2").unwrap();
        let q = Direction::<f64>::uniform(3);
        let (z, zp) = (Mat::from_rows(3, 1, z), Mat::from_rows(3, 1, zp));
        let a = c_required(&g1, &g2, &q, 0.4, &y, &yp, &z, &zp).unwrap();
        let b = c_required_uniform(&g1, &g2, 0.4, &y, &yp, &z, &zp).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs()));
    }

    #[test]
    fn sampled_pairs_are_ordered(q in direction(3), seed in any::<u64>(), w in -4.0..4.0f64, w2 in -4.0..4.0f64) {
        let dir = Direction::new(&q).unwrap();
        let base = TerminalFn::parse(3, 2, &["w1", "sin(w2)", "w1 * w2"]).unwrap();
        for pair in sample_ordered_terminals(&dir, &base, 6, seed).unwrap() {
            let a = pair.first.eval(&[w, w2]).unwrap();
            let b = pair.second.eval(&[w, w2]).unwrap();
            prop_assert!(order_ge(&dir, &a, &b).unwrap() || dir.inner(&a).unwrap() - dir.inner(&b).unwrap() > -1e-12);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn tree_reproduces_affine_martingales(a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64, n in 1..7usize) {
        // Y_t = a + b·W_t + c·W2_t, Z = (b, c).
        let xi = TerminalFn::parse(1, 2, &[&format!("{a} + {b} * w1 + {c} * w2")]).unwrap();
        let spec = BsdeSpec::new(Generator::zero(1, 2), xi, 1.0).unwrap();
        let sol = solve::<f64>(&spec, &SchemeConfig::tree(n)).unwrap();
        prop_assert!((sol.y(0, 0)[0] - a).abs() <= 1e-12);
        for k in 0..n {
            for s in 0..sol.states(k) {
                let z = sol.z(k, s);
                prop_assert!((z[0] - b).abs() <= 1e-12 && (z[1] - c).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn tree_solution_is_monotone_in_terminal(shift in 0.0..1.0f64, n in 2..7usize) {
        // Δt·μ ≤ 1/2 keeps the implicit step contractive.
        let g = Generator::parse(1, 1, &["sin(y1) + 0.5 * abs(z1)"], Some(1.0), "g").unwrap();
        let lo = TerminalFn::parse(1, 1, &["w1 * w1"]).unwrap();
        let hi = TerminalFn::parse(1, 1, &[&format!("w1 * w1 + {shift} * pos(w1)")]).unwrap();
        let s1 = solve::<f64>(&BsdeSpec::new(g.clone(), hi, 1.0).unwrap(), &SchemeConfig::tree(n)).unwrap();
        let s2 = solve::<f64>(&BsdeSpec::new(g, lo, 1.0).unwrap(), &SchemeConfig::tree(n)).unwrap();
        for k in 0..=n {
            for s in 0..s1.states(k) {
                prop_assert!(s1.y(k, s)[0] - s2.y(k, s)[0] >= -1e-9);
            }
        }
    }
}

#[test]
fn var_round_trip_names() {
    let ctx = VarContext::state(2, 3);
    for (text, v) in [("t", Var::Time), ("y2", Var::Y(1)), ("z2_3", Var::Z(1, 2)), ("abs(z1)", Var::ZRowNorm(0))] {
        assert_eq!(parse_expr(text, &ctx).unwrap(), Expr::Var(v));
        assert_eq!(Expr::Var(v).to_string(), text);
    }
}
