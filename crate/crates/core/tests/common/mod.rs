//! Shared fixtures and invariant checks. The checks take an RNG so the proptest
//! suites and the acceptance gate run the same code.
#![allow(dead_code)]

use std::path::PathBuf;

use mtdc_opf::case_file::load_case;
use mtdc_opf::matrices::{build_ac_coefficients, build_dc_coefficients, trace_product};
use mtdc_opf::network::{normalize_wind, AcBus, AcLine, DcBus, DcLine};
use mtdc_opf::recovery::{diagnose_rank, extract_state, lift_ac, lift_dc, recover_rank1_ac, recover_rank1_dc};
use mtdc_opf::relaxation::{assemble, ConicProblem, ConstraintKind, ConstraintRole, LinearExpr, SparseSym, Subject};
use mtdc_opf::sdp::{compile, solve, SolveStatus, SolverOptions};
use mtdc_opf::verifier::brute_force_opf;
use mtdc_opf::{solve_case, NetworkCase, PipelineOptions};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::rngs::StdRng;
use rand::Rng;

pub type Check = Result<(), String>;

/// The desk-scale cases used for oracle comparison.
pub const SMALL_CASES: [&str; 5] = ["ac2", "ac3", "dc2", "dc3", "hybrid4"];

/// Relative slack allowed when the oracle beats the relaxation: oracle points
/// are feasible only to the verifier tolerance.
pub const ORACLE_SLACK: f64 = 1e-5;

pub fn case_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("cases").join(format!("{name}.json"))
}

pub fn bundled(name: &str) -> NetworkCase {
    load_case(case_path(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

pub fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Check {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

pub fn rel_diff(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-300)
}

/// Recursive numeric comparison of two JSON documents.
pub fn json_close(a: &serde_json::Value, b: &serde_json::Value, tol: f64, path: &str) -> Check {
    use serde_json::Value as V;
    match (a, b) {
        (V::Number(x), V::Number(y)) => {
            let (x, y) = (x.as_f64().unwrap(), y.as_f64().unwrap());
            ensure((x - y).abs() <= tol * (1.0 + x.abs()), || format!("{path}: {x} vs {y}"))
        }
        (V::Array(x), V::Array(y)) => {
            ensure(x.len() == y.len(), || format!("{path}: length {} vs {}", x.len(), y.len()))?;
            x.iter().zip(y).enumerate().try_for_each(|(i, (p, q))| json_close(p, q, tol, &format!("{path}[{i}]")))
        }
        (V::Object(x), V::Object(y)) => {
            ensure(x.len() == y.len(), || format!("{path}: key sets differ"))?;
            x.iter().try_for_each(|(k, p)| match y.get(k) {
                Some(q) => json_close(p, q, tol, &format!("{path}.{k}")),
                None => Err(format!("{path}.{k} missing")),
            })
        }
        _ => ensure(a == b, || format!("{path}: {a} vs {b}")),
    }
}

fn ac_bus(id: usize) -> AcBus {
    AcBus {
        id,
        v_min: 0.9,
        v_max: 1.1,
        p_load: 0.0,
        q_load: 0.0,
        is_slack: id == 1,
    }
}

/// Connected AC network on `n` buses: a random spanning tree plus extra lines
/// (parallel lines allowed), positive series conductance, capacitive shunts.
pub fn random_ac_network(rng: &mut StdRng, n: usize) -> NetworkCase {
    let mut case = NetworkCase {
        name: "random".into(),
        base_mva: 100.0,
        ac_buses: (1..=n).map(ac_bus).collect(),
        ..Default::default()
    };
    let line = |rng: &mut StdRng, from: usize, to: usize| AcLine {
        from,
        to,
        series_admittance: Complex64::new(rng.gen_range(0.5..10.0), -rng.gen_range(1.0..40.0)),
        shunt_admittance: Complex64::new(0.0, rng.gen_range(0.0..0.2)),
        s_max: None,
    };
    for k in 1..n {
        let parent = rng.gen_range(0..k);
        case.ac_lines.push(line(rng, parent, k));
    }
    for _ in 0..rng.gen_range(0..=n) {
        let (a, b) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if a != b {
            case.ac_lines.push(line(rng, a, b));
        }
    }
    case
}

pub fn random_dc_network(rng: &mut StdRng, n: usize) -> NetworkCase {
    let bus = |id: usize| DcBus {
        id,
        v_min: 0.9,
        v_max: 1.1,
        p_min: -1.0,
        p_max: 1.0,
        is_master: id == 1,
        v_master: (id == 1).then_some(1.0),
    };
    let mut case = NetworkCase {
        name: "random_dc".into(),
        base_mva: 100.0,
        dc_buses: (1..=n).map(bus).collect(),
        ..Default::default()
    };
    for k in 1..n {
        let from = rng.gen_range(0..k);
        case.dc_lines.push(DcLine {
            from,
            to: k,
            conductance: rng.gen_range(1.0..1000.0),
            p_max: 10.0,
        });
    }
    case
}

pub fn random_voltages(rng: &mut StdRng, n: usize) -> Vec<Complex64> {
    (0..n)
        .map(|_| Complex64::from_polar(rng.gen_range(0.9..1.1), rng.gen_range(-0.6..0.6)))
        .collect()
}

/// Bus injections `V_k conj(I_k)` with currents summed line by line.
fn direct_injections(case: &NetworkCase, v: &[Complex64]) -> Vec<Complex64> {
    let mut current = vec![Complex64::new(0.0, 0.0); v.len()];
    for l in &case.ac_lines {
        let (a, b) = (l.from, l.to);
        current[a] += l.series_admittance * (v[a] - v[b]) + l.shunt_admittance * v[a];
        current[b] += l.series_admittance * (v[b] - v[a]) + l.shunt_admittance * v[b];
    }
    v.iter().zip(&current).map(|(vk, ik)| vk * ik.conj()).collect()
}

fn direct_flow(l: &AcLine, vf: Complex64, vt: Complex64) -> Complex64 {
    vf * (l.series_admittance * (vf - vt) + l.shunt_admittance * vf).conj()
}

fn symmetric_exactly(a: &DMatrix<f64>) -> bool {
    a == &a.transpose()
}

/// Trace forms of the AC coefficient matrices against complex arithmetic.
pub fn check_ac_trace_identities(rng: &mut StdRng) -> Check {
    let n = rng.gen_range(2..=5);
    let case = random_ac_network(rng, n);
    let v = random_voltages(rng, n);
    let w = lift_ac(&v);
    let c = build_ac_coefficients(&case);
    let s = direct_injections(&case, &v);
    let tol = 1e-10;
    let mut total_p = 0.0;
    for k in 0..n {
        let (p, q) = (trace_product(&c.bus_p[k], &w), trace_product(&c.bus_q[k], &w));
        ensure((p - s[k].re).abs() < tol, || format!("bus {k} P: {p} vs {}", s[k].re))?;
        ensure((q - s[k].im).abs() < tol, || format!("bus {k} Q: {q} vs {}", s[k].im))?;
        let vm = trace_product(&c.bus_v[k], &w);
        ensure((vm - v[k].norm_sqr()).abs() < 1e-12, || format!("bus {k} |V|^2"))?;
        for m in [&c.bus_p[k], &c.bus_q[k], &c.bus_v[k]] {
            ensure(symmetric_exactly(m), || format!("bus {k} matrix not symmetric"))?;
        }
        ensure(c.bus_v[k].iter().filter(|&&x| x != 0.0).count() == 2, || "M_k must have two entries".into())?;
        // nonzeros only on bus k and its neighbours
        let mut allowed = vec![k];
        for l in &case.ac_lines {
            if l.from == k {
                allowed.push(l.to);
            } else if l.to == k {
                allowed.push(l.from);
            }
        }
        let touches = |i: usize| allowed.contains(&(i % n));
        for ((i, j), x) in c.bus_p[k].iter().enumerate().map(|(idx, x)| ((idx % (2 * n), idx / (2 * n)), x)) {
            ensure(*x == 0.0 || (touches(i) && touches(j)), || format!("bus {k} P has entry at ({i}, {j})"))?;
        }
        total_p += p;
    }
    let mut line_loss = 0.0;
    for (i, l) in case.ac_lines.iter().enumerate() {
        let sf = direct_flow(l, v[l.from], v[l.to]);
        let st = direct_flow(l, v[l.to], v[l.from]);
        let pf = trace_product(&c.line_p[i][0], &w);
        let pt = trace_product(&c.line_p[i][1], &w);
        let qf = trace_product(&c.line_q[i][0], &w);
        ensure((pf - sf.re).abs() < tol && (pt - st.re).abs() < tol, || format!("line {i} P"))?;
        ensure((qf - sf.im).abs() < tol, || format!("line {i} Q"))?;
        ensure(pf + pt >= -tol, || format!("line {i} negative loss {}", pf + pt))?;
        line_loss += sf.re + st.re;
    }
    ensure((total_p - line_loss).abs() < tol, || format!("injections sum {total_p} vs loss {line_loss}"))
}

/// Trace forms of the DC coefficient matrices against the flow formula.
pub fn check_dc_trace_identities(rng: &mut StdRng) -> Check {
    let n = rng.gen_range(2..=6);
    let case = random_dc_network(rng, n);
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
    let w = lift_dc(&v);
    let c = build_dc_coefficients(&case);
    for (i, l) in case.dc_lines.iter().enumerate() {
        let (f, t) = (l.from, l.to);
        let expect = l.conductance * (v[f] * v[f] - v[f] * v[t]);
        let got = trace_product(&c.line_flow[i][0], &w);
        ensure((got - expect).abs() < 1e-10 * (1.0 + expect.abs()), || format!("line {i}: {got} vs {expect}"))?;
        ensure(symmetric_exactly(&c.line_flow[i][0]), || "line matrix not symmetric".into())?;
    }
    for r in 0..n {
        let sum: f64 = c.conductance.row(r).iter().sum();
        ensure(sum.abs() < 1e-9, || format!("row {r} sums to {sum}"))?;
        ensure(symmetric_exactly(&c.bus_p[r]), || "bus matrix not symmetric".into())?;
        ensure(c.bus_v[r].iter().filter(|&&x| x != 0.0).count() == 1, || "M_i must have one entry".into())?;
    }
    let flat = lift_dc(&vec![1.02; n]);
    for (i, m) in c.line_flow.iter().enumerate() {
        let f = trace_product(&m[0], &flat);
        ensure(f.abs() < 1e-12, || format!("line {i} carries {f} at uniform voltage"))?;
    }
    Ok(())
}

fn max_abs_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max)
}

/// recover(lift(V)) = V, also after a global phase rotation of V.
pub fn check_recovery_round_trip(rng: &mut StdRng) -> Check {
    let n = rng.gen_range(2..=8);
    let slack = rng.gen_range(0..n);
    let mut v = random_voltages(rng, n);
    let phase = v[slack].conj() / v[slack].norm();
    v.iter_mut().for_each(|x| *x *= phase);
    let back = recover_rank1_ac(&lift_ac(&v), slack).map_err(|e| e.to_string())?;
    ensure(max_abs_diff(&back, &v) < 1e-9, || format!("AC round trip off by {}", max_abs_diff(&back, &v)))?;

    let rot = Complex64::from_polar(1.0, rng.gen_range(-3.1..3.1));
    let rotated: Vec<Complex64> = v.iter().map(|x| x * rot).collect();
    let back = recover_rank1_ac(&lift_ac(&rotated), slack).map_err(|e| e.to_string())?;
    ensure(max_abs_diff(&back, &v) < 1e-9, || "rotated profile recovered differently".into())?;

    let vd: Vec<f64> = (0..n).map(|_| rng.gen_range(0.9..1.1)).collect();
    let master = rng.gen_range(0..n);
    let back = recover_rank1_dc(&lift_dc(&vd), master).map_err(|e| e.to_string())?;
    let err = back.iter().zip(&vd).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    ensure(err < 1e-9 && back.iter().all(|&x| x > 0.0), || format!("DC round trip off by {err}"))
}

/// The state extracted from a rotated profile is the same state.
pub fn check_gauge_invariance(rng: &mut StdRng) -> Check {
    let case = normalize_wind(&bundled("hybrid4")).map_err(|e| e.to_string())?;
    let slack = case.slack_bus().unwrap();
    let mut v = random_voltages(rng, case.n_ac());
    let phase = v[slack].conj() / v[slack].norm();
    v.iter_mut().for_each(|x| *x *= phase);
    let vd: Vec<f64> = (0..case.n_dc()).map(|_| rng.gen_range(0.9..1.1)).collect();
    let rot = Complex64::from_polar(1.0, rng.gen_range(-3.1..3.1));
    let rotated: Vec<Complex64> = v.iter().map(|x| x * rot).collect();
    let a = extract_state(&case, &[], &recover_rank1_ac(&lift_ac(&v), slack).unwrap(), &vd);
    let b = extract_state(&case, &[], &recover_rank1_ac(&lift_ac(&rotated), slack).unwrap(), &vd);
    let (a, b) = (serde_json::to_value(&a).unwrap(), serde_json::to_value(&b).unwrap());
    json_close(&a, &b, 1e-9, "state")
}

/// `||W - X X^T|| / ||W|| <= 10 lambda2 / lambda1` for a nearly rank-1 W.
pub fn check_reconstruction_bound(rng: &mut StdRng) -> Check {
    let n = rng.gen_range(3..=8);
    let x = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let y = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
    let eps = 10f64.powf(rng.gen_range(-12.0..-6.0));
    let w = &x * x.transpose() + eps * &y * y.transpose();
    let d = diagnose_rank(&w, 1e5).map_err(|e| e.to_string())?;
    ensure(d.eigenvalues.windows(2).all(|p| p[0] >= p[1]), || "eigenvalues not descending".into())?;
    let bound = 10.0 * d.eigenvalues[1].abs() / d.eigenvalues[0] + 1e-14;
    ensure(d.reconstruction_defect <= bound, || format!("defect {} > {bound}", d.reconstruction_defect))
}

fn blocks_close(a: &[DMatrix<f64>], b: &[DMatrix<f64>], tol: f64) -> Check {
    for (i, (x, y)) in a.iter().zip(b).enumerate() {
        let d = (x - y).norm() / x.norm().max(1e-300);
        ensure(d <= tol, || format!("block {i} differs by {d:.3e}"))?;
    }
    Ok(())
}

/// Two solves of the same case give bitwise-identical results.
pub fn check_determinism(name: &str) -> Check {
    let case = normalize_wind(&bundled(name)).map_err(|e| e.to_string())?;
    let form = compile(&assemble(&case).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let opts = SolverOptions::default();
    let a = solve(&form, &opts).map_err(|e| e.to_string())?;
    let b = solve(&form, &opts).map_err(|e| e.to_string())?;
    ensure(a.iterations == b.iterations, || "iteration counts differ".into())?;
    ensure(a.primal_objective.to_bits() == b.primal_objective.to_bits(), || "objectives differ".into())?;
    blocks_close(&a.blocks, &b.blocks, 0.0)
}

/// Scaling the objective scales the optimum and leaves the W blocks unchanged.
/// The solver's gap test is relative to `1 + |objective|`, so for optima well
/// below 1 the tolerance is tightened towards 1e-8 of the objective (floored at
/// 1e-10, around where round-off takes over on the DC cases).
pub fn check_objective_scaling(name: &str, factor: f64) -> Check {
    let case = normalize_wind(&bundled(name)).map_err(|e| e.to_string())?;
    let problem = assemble(&case).map_err(|e| e.to_string())?;
    let mut scaled = problem.clone();
    scaled.objective = scaled.objective.scaled(factor);
    let (form, scaled_form) = (compile(&problem).unwrap(), compile(&scaled).unwrap());
    let estimate = solve(&form, &SolverOptions::default()).map_err(|e| e.to_string())?.primal_objective;
    let smallest = estimate.abs() * factor.min(1.0);
    let opts = SolverOptions {
        gap_tol: (1e-8 * smallest.min(1.0)).max(1e-10),
        ..Default::default()
    };
    let a = solve(&form, &opts).map_err(|e| e.to_string())?;
    let b = solve(&scaled_form, &opts).map_err(|e| e.to_string())?;
    ensure(a.status == SolveStatus::Optimal && b.status == SolveStatus::Optimal, || format!("{name} x{factor}: {} / {}", a.status, b.status))?;
    let r = rel_diff(b.primal_objective, factor * a.primal_objective);
    ensure(r <= 1e-7, || format!("{name}: scaled objective off by {r:.3e}"))?;
    let w = |s: &mtdc_opf::sdp::ConicSolution| {
        [problem.layout.ac_block, problem.layout.dc_block]
            .into_iter()
            .flatten()
            .map(|i| s.blocks[i].clone())
            .collect::<Vec<_>>()
    };
    blocks_close(&w(&a), &w(&b), 1e-7).map_err(|e| format!("{name} x{factor}: {e}"))
}

pub struct OracleComparison {
    pub sdp: f64,
    pub oracle: f64,
    pub verified: bool,
    pub rank_one: bool,
    pub seconds: f64,
}

/// Solve a bundled small case and its brute-force oracle.
pub fn oracle_comparison(name: &str) -> Result<OracleComparison, String> {
    let case = bundled(name);
    let start = std::time::Instant::now();
    let out = solve_case(&case, &PipelineOptions::default()).map_err(|e| e.to_string())?;
    let seconds = start.elapsed().as_secs_f64();
    let state = out.state.as_ref().ok_or_else(|| format!("{name}: {:?}", out.outcome))?;
    let oracle = brute_force_opf(&out.case, 9, Some(7)).map_err(|e| e.to_string())?;
    let rank_one = [&out.ac_rank, &out.dc_rank]
        .into_iter()
        .flatten()
        .all(|d| d.effective_rank == mtdc_opf::recovery::EffectiveRank::One);
    Ok(OracleComparison {
        sdp: state.objective(),
        oracle: oracle.objective,
        verified: out.outcome == mtdc_opf::pipeline::Outcome::Verified,
        rank_one,
        seconds,
    })
}

/// Relaxation value never exceeds the oracle (up to its feasibility slack).
pub fn check_oracle_dominance(name: &str) -> Check {
    let c = oracle_comparison(name)?;
    ensure(c.sdp <= c.oracle * (1.0 + ORACLE_SLACK) + 1e-9, || {
        format!("{name}: relaxation {} above oracle {}", c.sdp, c.oracle)
    })
}

fn pin(p: &mut ConicProblem, expr: LinearExpr, v: f64) {
    p.push(
        ConstraintRole::DcVoltage,
        Subject::DcBus { id: 1 },
        ConstraintKind::Linear {
            expr,
            lower: Some(v),
            upper: Some(v),
        },
    );
}

/// `min x` over a 1x1 PSD block; optimum 0.
pub fn nonnegative_scalar_problem() -> ConicProblem {
    let mut p = ConicProblem::default();
    let x = p.add_block("x", 1);
    p.objective = LinearExpr::trace(x, SparseSym::unit(1, 0, 0));
    p
}

/// `min Tr W` with `W_11 = 1`; optimum 1 at `W = diag(1, 0)`.
pub fn trace_problem() -> ConicProblem {
    let mut p = ConicProblem::default();
    let w = p.add_block("W", 2);
    pin(&mut p, LinearExpr::trace(w, SparseSym::unit(2, 0, 0)), 1.0);
    p.objective = LinearExpr::trace(w, SparseSym::from_dense(&DMatrix::identity(2, 2)));
    p
}

/// Line loss of the bundled two-bus DC case, solved by hand:
/// `g V2 (V2 - 1) = -0.5` with `g = 10`.
pub fn dc2_closed_form() -> (f64, f64) {
    let v2 = (1.0 + (1.0f64 - 4.0 * 0.05).sqrt()) / 2.0;
    (v2, 10.0 * (1.0 - v2).powi(2))
}

/// The three analytic engine problems with their optimal values.
pub fn micro_problems() -> Vec<(&'static str, ConicProblem, f64)> {
    let dc2 = assemble(&normalize_wind(&bundled("dc2")).unwrap()).unwrap();
    vec![
        ("x >= 0", nonnegative_scalar_problem(), 0.0),
        ("trace", trace_problem(), 1.0),
        ("dc2", dc2, dc2_closed_form().1),
    ]
}

/// Solve to default tolerances within 50 iterations and hit the known value.
pub fn check_micro_problem(name: &str, p: &ConicProblem, expected: f64) -> Check {
    let sol = solve(&compile(p).map_err(|e| e.to_string())?, &SolverOptions::default()).map_err(|e| e.to_string())?;
    ensure(sol.status == SolveStatus::Optimal, || format!("{name}: {}", sol.status))?;
    ensure(sol.relative_gap <= 1e-8, || format!("{name}: gap {}", sol.relative_gap))?;
    ensure(sol.iterations < 50, || format!("{name}: {} iterations", sol.iterations))?;
    ensure((sol.primal_objective - expected).abs() <= 1e-8 * (1.0 + expected.abs()), || {
        format!("{name}: objective {} vs {expected}", sol.primal_objective)
    })
}
