//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

mod common;

use std::time::{Duration, Instant};

use common::*;
use mtdc_opf::pipeline::Outcome;
use mtdc_opf::recovery::EffectiveRank;
use mtdc_opf::report::{Comparison, SolveReport};
use mtdc_opf::{solve_case, PipelineOptions, SolveOutcome};
use rand::rngs::StdRng;
use rand::SeedableRng;

/// Detail line on success, reason on failure.
type Verdict = Result<String, String>;

/// Seeds per randomized invariant when run inline here.
const INVARIANT_SEEDS: u64 = 50;

fn solved(name: &str) -> Result<SolveOutcome, String> {
    solve_case(&bundled(name), &PipelineOptions::default()).map_err(|e| format!("{name}: {e}"))
}

fn rank_one(out: &SolveOutcome) -> bool {
    [&out.ac_rank, &out.dc_rank]
        .into_iter()
        .flatten()
        .all(|d| d.effective_rank == EffectiveRank::One)
}

fn desk_scale() -> Verdict {
    let mut worst = 0.0f64;
    for name in SMALL_CASES {
        let c = oracle_comparison(name)?;
        ensure(c.verified && c.rank_one, || format!("{name}: not a verified rank-1 solve"))?;
        let d = rel_diff(c.sdp, c.oracle);
        ensure(d <= 1e-3, || format!("{name}: relaxation {} vs oracle {}", c.sdp, c.oracle))?;
        ensure(c.seconds < 5.0, || format!("{name}: {:.2}s", c.seconds))?;
        worst = worst.max(d);
    }
    Ok(format!("worst relative gap to oracle {worst:.2e}"))
}

fn rank_certificate(dc8: &SolveOutcome) -> Verdict {
    let d = dc8.dc_rank.as_ref().ok_or("no W_DC diagnostics")?;
    ensure(d.ratio_12 >= 1e5, || format!("ratio {:.3e}", d.ratio_12))?;
    Ok(format!("W_DC lambda1/lambda2 = {:.3e}", d.ratio_12))
}

fn verification_gate(outs: &[&SolveOutcome]) -> Verdict {
    let mut n = 0;
    for out in outs {
        if out.solution.status != mtdc_opf::sdp::SolveStatus::Optimal || !rank_one(out) {
            continue;
        }
        let name = &out.case.name;
        let r = out.residuals.as_ref().ok_or_else(|| format!("{name}: no residual report"))?;
        ensure(r.max_residual <= 1e-5, || format!("{name}: residual {:.2e}", r.max_residual))?;
        ensure(r.violations.is_empty(), || format!("{name}: {:?}", r.violations))?;
        n += 1;
    }
    ensure(n == outs.len(), || format!("only {n} of {} solves were optimal and rank 1", outs.len()))?;
    Ok(format!("{n} rank-1 solves verified"))
}

fn tightness(outs: &[&SolveOutcome]) -> Verdict {
    let mut worst = 0.0f64;
    for out in outs {
        for t in &out.tightness {
            worst = worst.max(t.slack);
            ensure(t.slack <= 1e-6, || format!("{}: slack {:.2e} on {}-{}", out.case.name, t.slack, t.bus_k_id, t.bus_m_id))?;
        }
    }
    Ok(format!("largest loss-inequality slack {worst:.2e}"))
}

fn directional(ac: &SolveReport, hybrid: &SolveReport) -> Verdict {
    for r in [ac, hybrid] {
        ensure(r.outcome == Outcome::Verified, || format!("{}: {:?}", r.case.name, r.outcome))?;
    }
    let c = Comparison::new(ac, hybrid).ok_or("missing state")?;
    ensure(c.other_cost < c.base_cost, || "hybrid cost not below AC-only cost".into())?;
    ensure(c.other_ac_loss_mw < c.base_ac_loss_mw, || "hybrid AC loss not below AC-only loss".into())?;
    Ok(format!(
        "cost {:.2} -> {:.2} $/h, AC loss {:.2} -> {:.2} MW",
        c.base_cost, c.other_cost, c.base_ac_loss_mw, c.other_ac_loss_mw
    ))
}

fn binding_flags(hybrid: &SolveReport) -> Verdict {
    let lines: Vec<String> = hybrid.binding_dc_lines().map(|l| format!("{}-{}", l.from, l.to)).collect();
    ensure(lines.iter().any(|l| l == "1-4"), || "line 1-4 not flagged".into())?;
    Ok(format!("binding DC lines {}", lines.join(", ")))
}

fn invariants() -> Verdict {
    let start = Instant::now();
    let randomized: [(&str, fn(&mut StdRng) -> Check); 5] = [
        ("AC trace identities", check_ac_trace_identities),
        ("DC trace identities", check_dc_trace_identities),
        ("recovery round trip", check_recovery_round_trip),
        ("gauge invariance", check_gauge_invariance),
        ("reconstruction bound", check_reconstruction_bound),
    ];
    for (label, check) in randomized {
        for seed in 0..INVARIANT_SEEDS {
            check(&mut StdRng::seed_from_u64(seed)).map_err(|e| format!("{label}, seed {seed}: {e}"))?;
        }
    }
    for name in ["ac3", "dc3", "hybrid4"] {
        check_determinism(name)?;
        for k in [0.1, 7.0] {
            check_objective_scaling(name, k)?;
        }
    }
    for name in SMALL_CASES {
        check_oracle_dominance(name)?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < Duration::from_secs(300), || format!("took {elapsed:?}"))?;
    Ok(format!("{INVARIANT_SEEDS} seeds per randomized check, {:.1}s", elapsed.as_secs_f64()))
}

fn engine_bar() -> Verdict {
    let problems = micro_problems();
    for (name, p, expected) in &problems {
        check_micro_problem(name, p, *expected)?;
    }
    Ok(format!("{} problems", problems.len()))
}

fn main() {
    let dc8 = solved("cigre_b4_dc8");
    let ac = solved("ieee39_9");
    let hybrid = solved("hybrid_39_9_mtdc");
    let small: Vec<_> = SMALL_CASES.iter().map(|n| solved(n)).collect();

    let large = || -> Result<(&SolveOutcome, &SolveOutcome, &SolveOutcome), String> {
        Ok((dc8.as_ref()?, ac.as_ref()?, hybrid.as_ref()?))
    };
    let all = || -> Result<Vec<&SolveOutcome>, String> {
        let (a, b, c) = large().map_err(|e| e.to_string())?;
        let mut v = vec![a, b, c];
        for s in &small {
            v.push(s.as_ref().map_err(|e| e.to_string())?);
        }
        Ok(v)
    };
    let reports = || -> Result<(SolveReport, SolveReport), String> {
        let (_, a, h) = large().map_err(|e| e.to_string())?;
        Ok((SolveReport::new(a), SolveReport::new(h)))
    };

    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("1 relaxation exact on desk-scale cases", Box::new(desk_scale)),
        ("2 rank certificate on the 8-bus DC grid", Box::new(|| rank_certificate(dc8.as_ref()?))),
        ("3 verification gate", Box::new(|| verification_gate(&all()?))),
        ("4 loss-inequality tightness", Box::new(|| tightness(&all()?))),
        ("5 hybrid lowers cost and AC loss", Box::new(|| {
            let (a, h) = reports()?;
            directional(&a, &h)
        })),
        ("6 binding DC line flagged", Box::new(|| binding_flags(&reports()?.1))),
        ("7 invariant suites", Box::new(invariants)),
        ("8 engine micro-problems", Box::new(engine_bar)),
    ];

    let mut failed = 0;
    for (label, check) in &criteria {
        match check() {
            Ok(detail) => println!("PASS  {label} ({detail})"),
            Err(e) => {
                failed += 1;
                println!("FAIL  {label}: {e}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
