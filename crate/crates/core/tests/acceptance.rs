//! Acceptance criteria AC1–AC8. Prints one `[PASS]`/`[FAIL]` line per
//! criterion and exits non-zero if any criterion fails.

use std::f64::consts::E;
use std::process::ExitCode;
use std::time::Instant;

use bsde_order::checker::{
    c_required, check_componentwise_equality, check_condition_ii, check_necessary_order, detect_structure,
    Classification, ProbeSchedule,
};
use bsde_order::cli::{emit_tables, run_examples};
use bsde_order::dsl::{builtin, estimate_lipschitz, Generator, Region, TerminalFn, LIPSCHITZ_SAFETY};
use bsde_order::geometry::{
    dist_halfspace, hess_sq_dist, project_halfspace, projection_oracle, quad_form, Direction, GeometryError,
    HalfSpace,
};
use bsde_order::harness::{doubled_consistency, run_comparison, sample_ordered_terminals, ComparisonOrder, TerminalPair};
use bsde_order::linalg::{dot, Mat};
use bsde_order::sampling::{stream_rng, uniform_box};
use bsde_order::solver::{solve, BsdeSpec, SchemeConfig, Solution};

const SEED: u64 = 7;

struct Outcome {
    failures: Vec<String>,
    notes: Vec<String>,
}

impl Outcome {
    fn new() -> Self {
        Outcome { failures: Vec::new(), notes: Vec::new() }
    }

    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if ok {
            self.notes.push(what);
        } else {
            self.failures.push(what);
        }
    }

    fn close(&mut self, label: &str, value: f64, target: f64, tol: f64) {
        let err = (value - target).abs();
        self.check(err <= tol, format!("{label}: {value:.12} vs {target:.12} (error {err:.3e}, tolerance {tol:.0e})"));
    }
}

type Run = fn(&mut Outcome) -> Result<(), String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn root(sol: &Solution<f64>) -> &[f64] {
    sol.y(0, 0)
}

fn ac1(o: &mut Outcome) -> Result<(), String> {
    let (g1, g2) = (builtin("ex31_g1").map_err(err)?, builtin("ex31_g2").map_err(err)?);
    let q = Direction::<f64>::unit(2, 0);
    let z = Mat::zeros(2, 1);
    for y1 in [-1.0, -0.5, -0.25, -0.125] {
        let c = c_required(&g1, &g2, &q, 0.5, &[y1, -3.0], &[0.0, 0.0], &z, &z).map_err(err)?;
        o.close(&format!("C_required at y1 = {y1}"), c, -8.0 / y1, 1e-12);
    }
    let r = check_condition_ii(&g1, &g2, &q, &ProbeSchedule::with_seed(SEED)).map_err(err)?;
    o.check(r.classification == Classification::Divergent, format!("classification {:?}", r.classification));
    match r.growth_exponent {
        Some(s) => o.close("growth exponent", s, -1.0, 0.05),
        None => o.check(false, "no growth exponent"),
    }
    Ok(())
}

fn ac2(o: &mut Outcome) -> Result<(), String> {
    let g = builtin("ex32_g").map_err(err)?;
    let xi1 = TerminalFn::constant(&[0.0, 0.0], 1);
    let xi2 = TerminalFn::constant(&[0.0, 1.0], 1);
    let spec2 = BsdeSpec::new(g.clone(), xi2.clone(), 1.0).map_err(err)?;
    let ode = solve::<f64>(&spec2, &SchemeConfig::ode(64)).map_err(err)?;
    o.close("ODE Y2_1(0)", root(&ode)[0], E - 1.0, 1e-6);
    let pair = [TerminalPair { first: xi1, second: xi2 }];
    let order = ComparisonOrder::Direction(Direction::<f64>::unit(2, 0));
    let cmp = run_comparison(&g, &g, &order, &pair, 1.0, &SchemeConfig::ode(64)).map_err(err)?;
    let ode_margin = cmp.trials[0].root_margin;
    o.close("ODE margin at t = 0", ode_margin, -(E - 1.0), 1e-6);
    let tree = run_comparison(&g, &g, &order, &pair, 1.0, &SchemeConfig::tree(16)).map_err(err)?;
    o.close("tree N=16 margin at t = 0 vs ODE", tree.trials[0].root_margin, ode_margin, 0.05);
    let region = Region::default();
    let m1 = detect_structure::<f64>(&g, 0, &region, 256, SEED).map_err(err)?;
    let m2 = detect_structure::<f64>(&g, 1, &region, 256, SEED).map_err(err)?;
    o.check(!m1.diagonal, format!("structure i=1 diagonal = {}", m1.diagonal));
    o.check(m2.diagonal, format!("structure i=2 diagonal = {}", m2.diagonal));
    Ok(())
}

fn ac3(o: &mut Outcome) -> Result<(), String> {
    let g2 = Generator::parse(1, 1, &["sin(y1) + z1"], Some(1.0), "g2").map_err(err)?;
    let g1 = Generator::parse(1, 1, &["sin(y1) + z1 + 1"], Some(1.0), "g1").map_err(err)?;
    let mu_hat = estimate_lipschitz::<f64>(&g2, &Region::default(), 4, 4000, SEED).map_err(err)? / LIPSCHITZ_SAFETY;
    let q = Direction::<f64>::unit(1, 0);
    let r = check_condition_ii(&g1, &g2, &q, &ProbeSchedule::with_seed(SEED)).map_err(err)?;
    let bound = 2.0 * mu_hat * mu_hat + 0.01;
    o.check(r.classification == Classification::Bounded, format!("classification {:?}", r.classification));
    o.check(
        r.sup_c_required <= bound,
        format!("sup C_required {:.6} <= 2 mu_hat^2 + 0.01 = {bound:.6} (mu_hat {mu_hat:.6})", r.sup_c_required),
    );
    let base = TerminalFn::parse(1, 1, &["sin(w1)"]).map_err(err)?;
    let pairs = sample_ordered_terminals(&q, &base, 100, SEED).map_err(err)?;
    let cmp = run_comparison(&g1, &g2, &ComparisonOrder::Direction(q), &pairs, 1.0, &SchemeConfig::tree(12)).map_err(err)?;
    let m = cmp.min_margin.unwrap_or(f64::NEG_INFINITY);
    o.check(pairs.len() == 100 && m >= -1e-9, format!("min margin over {} pairs: {m:.3e}", pairs.len()));
    Ok(())
}

/// `∂/∂y_j` of `∇d²_K(y) = 2(y − Π_K(y))` by central differences of the
/// linear-system projection.
fn oracle_hessian(q: &Direction<f64>, y: &[f64], h: f64) -> Result<Vec<f64>, GeometryError> {
    let n = y.len();
    let grad = |p: &[f64]| -> Result<Vec<f64>, GeometryError> {
        match projection_oracle(q, p) {
            Ok((u, _)) => Ok(p.iter().zip(&u).map(|(a, b)| 2.0 * (a - b)).collect()),
            Err(GeometryError::NotBinding(_)) => Ok(vec![0.0; n]),
            Err(e) => Err(e),
        }
    };
    let mut hess = vec![0.0; n * n];
    for j in 0..n {
        let (mut up, mut dn) = (y.to_vec(), y.to_vec());
        up[j] += h;
        dn[j] -= h;
        let (gu, gd) = (grad(&up)?, grad(&dn)?);
        for i in 0..n {
            hess[i * n + j] = (gu[i] - gd[i]) / (2.0 * h);
        }
    }
    Ok(hess)
}

fn ac4(o: &mut Outcome) -> Result<(), String> {
    let h = 1e-4;
    let (mut proj_err, mut dist_err, mut hess_err) = (0.0_f64, 0.0_f64, 0.0_f64);
    let mut binding = 0;
    for i in 0..10_000u64 {
        let mut rng = stream_rng(SEED, i);
        let n = 1 + (i % 6) as usize;
        let q = loop {
            let v: Vec<f64> = uniform_box(&mut rng, n, 1.0);
            if dot(&v, &v) > 1e-2 {
                break Direction::new(&v).map_err(err)?;
            }
        };
        let y = loop {
            let v: Vec<f64> = uniform_box(&mut rng, n, 5.0);
            if q.inner(&v).map_err(err)?.abs() > 1e-2 {
                break v;
            }
        };
        let k = HalfSpace::new(q.clone());
        let p = project_halfspace(&k, &y).map_err(err)?;
        let d = dist_halfspace(&k, &y).map_err(err)?;
        match projection_oracle(&q, &y) {
            Ok((u, dd)) => {
                binding += 1;
                proj_err = proj_err.max(p.iter().zip(&u).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                dist_err = dist_err.max((d - dd).abs());
            }
            Err(GeometryError::NotBinding(_)) => {
                proj_err = proj_err.max(p.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
                dist_err = dist_err.max(d.abs());
            }
            Err(e) => return Err(err(e)),
        }
        let hs = hess_sq_dist(&k, &y).map_err(err)?;
        let oracle = oracle_hessian(&q, &y, h).map_err(err)?;
        hess_err = hess_err.max(hs.matrix.as_slice().iter().zip(&oracle).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max));
    }
    o.check(proj_err <= 1e-9, format!("projection max error {proj_err:.3e} ({binding} binding of 10000)"));
    o.check(dist_err <= 1e-9, format!("distance max error {dist_err:.3e}"));
    o.check(hess_err <= 1e-9, format!("Hessian max error {hess_err:.3e}"));
    let mut quad_err = 0.0_f64;
    for i in 0..1000u64 {
        let mut rng = stream_rng(SEED + 1, i);
        let n = 1 + (i % 6) as usize;
        let d = 1 + (i / 6 % 3) as usize;
        let q = Direction::new(&uniform_box::<f64, _>(&mut rng, n, 1.0)).map_err(err)?;
        let z = Mat::from_rows(n, d, uniform_box(&mut rng, n * d, 2.0));
        let qs = q.as_slice();
        let mut direct = 0.0;
        for a in 0..n {
            for b in 0..n {
                direct += qs[a] * qs[b] * dot(z.row(a), z.row(b));
            }
        }
        let ztq = z.transpose_mul(qs);
        let below: Vec<f64> = qs.iter().map(|v| -v).collect();
        let from_hessian = quad_form(&hess_sq_dist(&HalfSpace::new(q.clone()), &below).map_err(err)?, &z).map_err(err)? / 2.0;
        quad_err = quad_err.max((direct - dot(&ztq, &ztq)).abs()).max((from_hessian - dot(&ztq, &ztq)).abs());
    }
    o.check(quad_err <= 1e-12, format!("quadratic-form identity max error {quad_err:.3e}"));
    Ok(())
}

fn ac5(o: &mut Outcome) -> Result<(), String> {
    let xi = TerminalFn::parse(1, 1, &["w1"]).map_err(err)?;
    let mart = solve::<f64>(&BsdeSpec::new(Generator::zero(1, 1), xi, 1.0).map_err(err)?, &SchemeConfig::tree(10)).map_err(err)?;
    let mut zmax = 0.0_f64;
    for k in 0..10 {
        for s in 0..mart.states(k) {
            zmax = zmax.max((mart.z(k, s)[0] - 1.0).abs());
        }
    }
    o.check(root(&mart)[0].abs() <= 1e-12, format!("martingale Y(root) = {:.3e}", root(&mart)[0]));
    o.check(zmax <= 1e-12, format!("martingale max |Z - 1| = {zmax:.3e}"));

    let g = builtin("linear(-1, 0, 0)").map_err(err)?;
    let spec = BsdeSpec::new(g, TerminalFn::parse(1, 1, &["w1 + 1"]).map_err(err)?, 1.0).map_err(err)?;
    let exact = (-1.0_f64).exp();
    let y8 = root(&solve::<f64>(&spec, &SchemeConfig::tree(8)).map_err(err)?)[0];
    let y16 = root(&solve::<f64>(&spec, &SchemeConfig::tree(16)).map_err(err)?)[0];
    o.close("tree N=16 Y(root)", y16, exact, 0.05);
    let ratio = (y8 - exact).abs() / (y16 - exact).abs();
    o.check((1.6..=2.4).contains(&ratio), format!("error ratio N=8/N=16 = {ratio:.4}"));
    let lsmc = solve::<f64>(&spec, &SchemeConfig::lsmc(16, 20_000, 2, 7)).map_err(err)?;
    o.close("LSMC Y(root) vs tree N=16", root(&lsmc)[0], y16, 0.1);
    Ok(())
}

fn ac6(o: &mut Outcome) -> Result<(), String> {
    let scheme = SchemeConfig::tree(8);
    let (a1, a2) = (builtin("ex31_g1").map_err(err)?, builtin("ex31_g2").map_err(err)?);
    let b = builtin("ex32_g").map_err(err)?;
    let cases = [
        ("affine shift pair", &a1, &a2, ["abs(w1)", "w1"], ["0", "w1"]),
        ("row norm pair", &b, &b, ["0", "0"], ["0", "1"]),
    ];
    for (name, g1, g2, t1, t2) in cases {
        let xi1 = TerminalFn::parse(2, 1, &t1).map_err(err)?;
        let xi2 = TerminalFn::parse(2, 1, &t2).map_err(err)?;
        let q = Direction::<f64>::unit(2, 0);
        let r = doubled_consistency(g1, g2, &xi1, &xi2, &q, 1.0, &scheme).map_err(err)?;
        o.check(r.residual <= 1e-8, format!("{name}: max |Ybar - (Y1 - Y2, Y2)| = {:.3e}", r.residual));
    }
    Ok(())
}

fn ac7(o: &mut Outcome) -> Result<(), String> {
    let (g1, g2) = (builtin("ex31_g1").map_err(err)?, builtin("ex31_g2").map_err(err)?);
    let q = Direction::<f64>::unit(2, 0);
    let region = Region::default();
    let fwd = check_necessary_order(&g1, &g2, &q, &region, 10_000, SEED).map_err(err)?;
    o.check(fwd.holds, "necessary order holds");
    o.close("necessary order margin", fwd.min_margin, 1.0, 1e-12);
    let back = check_necessary_order(&g2, &g1, &q, &region, 10_000, SEED).map_err(err)?;
    o.check(!back.holds, "swapped order fails");
    o.close("swapped margin", back.min_margin, -1.0, 1e-12);
    let e1 = check_componentwise_equality::<f64>(&g1, &g2, 0, &region, 10_000, SEED).map_err(err)?;
    let e2 = check_componentwise_equality::<f64>(&g1, &g2, 1, &region, 10_000, SEED).map_err(err)?;
    o.check(!e1.equal, "component 1 unequal");
    o.close("component 1 gap", e1.max_gap, 1.0, 1e-12);
    o.check(e2.equal && e2.max_gap <= 1e-12, format!("component 2 equal (gap {:.3e})", e2.max_gap));
    Ok(())
}

fn without_timing(text: &str) -> String {
    text.lines().filter(|l| !l.contains("elapsed_seconds")).collect::<Vec<_>>().join("\n")
}

fn ac8(o: &mut Outcome) -> Result<(), String> {
    let dir = tempfile::tempdir().map_err(err)?;
    let mut texts = Vec::new();
    for run in 0..2 {
        let report = run_examples(SEED);
        o.check(report.all_hold(), format!("golden run {run}: all checks hold"));
        let out = dir.path().join(format!("run{run}"));
        emit_tables(&report, &out).map_err(err)?;
        texts.push(std::fs::read_to_string(out.join("report.json")).map_err(err)?);
    }
    o.check(texts[0] != texts[1] || texts[0].contains("elapsed_seconds"), "timing field present");
    o.check(without_timing(&texts[0]) == without_timing(&texts[1]), "report.json identical modulo timing");
    Ok(())
}

fn main() -> ExitCode {
    let criteria: [(&str, f64, Run); 8] = [
        ("AC1 affine shift C_required and divergence", 5.0, ac1),
        ("AC2 row norm counterexample", 10.0, ac2),
        ("AC3 scalar comparison bound", 20.0, ac3),
        ("AC4 projection calculus", 5.0, ac4),
        ("AC5 solver oracles", 60.0, ac5),
        ("AC6 doubled-system identity", 10.0, ac6),
        ("AC7 necessary condition and equality", 5.0, ac7),
        ("AC8 golden suite determinism", 120.0, ac8),
    ];
    let mut all = true;
    for (name, limit, run) in criteria {
        let mut o = Outcome::new();
        let start = Instant::now();
        if let Err(e) = run(&mut o) {
            o.failures.push(format!("error: {e}"));
        }
        let secs = start.elapsed().as_secs_f64();
        if secs >= limit {
            o.failures.push(format!("runtime {secs:.2} s exceeds {limit} s"));
        }
        let ok = o.failures.is_empty();
        all &= ok;
        let id = &name[..3];
        println!("[{}] {id} {} ({secs:.2} s, limit {limit} s)", if ok { "PASS" } else { "FAIL" }, &name[4..]);
        for f in &o.failures {
            println!("       failed: {f}");
        }
        for n in &o.notes {
            println!("       ok: {n}");
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
