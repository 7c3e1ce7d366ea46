//! Case to verified operating point: normalize, relax, solve, certify rank,
//! recover, extract and verify.

use std::time::Instant;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::network::{normalize_wind, NetworkCase};
use crate::recovery::{
    diagnose_rank, extract_state, recover_rank1_ac, recover_rank1_dc, recover_rank2_ac,
    EffectiveRank, RankDiagnostics, RecoveredState, DEFAULT_RANK_THRESHOLD,
};
use crate::relaxation::{assemble, ConicProblem};
use crate::sdp::{compile, solve, ConicSolution, SolveStatus, SolverOptions};
use crate::verifier::{tightness_check, verify, ResidualReport, TightnessEntry, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, Serialize)]
pub struct PipelineOptions {
    pub solver: SolverOptions,
    pub rank_threshold: f64,
    pub verify_tol: f64,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        PipelineOptions {
            solver: SolverOptions::default(),
            rank_threshold: DEFAULT_RANK_THRESHOLD,
            verify_tol: DEFAULT_TOLERANCE,
        }
    }
}

/// Where the pipeline stopped.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "detail", rename_all = "snake_case")]
pub enum Outcome {
    /// Optimal, recovered and verified.
    Verified,
    /// The solver did not reach an optimum.
    NotOptimal(SolveStatus),
    RecoveryFailed(String),
    VerificationFailed,
}

#[derive(Debug, Clone, Serialize, Default)]
pub struct Timings {
    pub assemble_seconds: f64,
    pub solve_seconds: f64,
    pub recover_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone)]
pub struct SolveOutcome {
    /// The case after wind normalization, as actually solved.
    pub case: NetworkCase,
    pub problem: ConicProblem,
    pub solution: ConicSolution,
    pub outcome: Outcome,
    pub ac_rank: Option<RankDiagnostics>,
    pub dc_rank: Option<RankDiagnostics>,
    pub state: Option<RecoveredState>,
    pub residuals: Option<ResidualReport>,
    pub tightness: Vec<TightnessEntry>,
    pub timings: Timings,
}

fn recover(
    case: &NetworkCase,
    problem: &ConicProblem,
    sol: &ConicSolution,
    opts: &PipelineOptions,
    ac_rank: &mut Option<RankDiagnostics>,
    dc_rank: &mut Option<RankDiagnostics>,
) -> Result<RecoveredState> {
    let layout = &problem.layout;
    let q: Vec<f64> = layout.dcdc_q.iter().map(|&s| sol.scalars[s]).collect();
    let v_dc = match sol.w_dc(layout) {
        Some(w) => {
            let d = diagnose_rank(w, opts.rank_threshold)?;
            let rank = d.effective_rank;
            *dc_rank = Some(d);
            if rank != EffectiveRank::One {
                return Err(Error::Recovery(format!("DC voltage matrix has effective rank {rank}")));
            }
            recover_rank1_dc(w, case.master_bus().expect("validated case"))?
        }
        None => Vec::new(),
    };
    let v_ac = match sol.w_ac(layout) {
        Some(w) => {
            let slack = case.slack_bus().expect("validated case");
            let mut d = diagnose_rank(w, opts.rank_threshold)?;
            let v = match d.effective_rank {
                EffectiveRank::One => recover_rank1_ac(w, slack),
                _ => recover_rank2_ac(w, slack, &mut d, |v| {
                    let st = extract_state(case, &q, v, &v_dc);
                    verify(case, &st, opts.verify_tol).max_residual
                }),
            };
            *ac_rank = Some(d);
            let v = v?;
            if ac_rank.as_ref().unwrap().effective_rank == EffectiveRank::Two {
                let st = extract_state(case, &q, &v, &v_dc);
                let r = verify(case, &st, opts.verify_tol);
                if !r.pass {
                    return Err(Error::Recovery(format!(
                        "rank-2 recovered point fails verification (max residual {:.3e}, {} bound violations)",
                        r.max_residual,
                        r.violations.len()
                    )));
                }
            }
            v
        }
        None => Vec::new(),
    };
    let mut st = extract_state(case, &q, &v_ac, &v_dc);
    st.ac_rank = ac_rank.clone();
    st.dc_rank = dc_rank.clone();
    Ok(st)
}

/// Run the full pipeline on a validated case. Errors are reserved for malformed
/// input and numerical breakdown; solver, recovery and verification verdicts
/// are reported through [`SolveOutcome::outcome`].
pub fn solve_case(case: &NetworkCase, opts: &PipelineOptions) -> Result<SolveOutcome> {
    let start = Instant::now();
    case.validate()?;
    let case = normalize_wind(case)?;
    let problem = assemble(&case)?;
    let form = compile(&problem)?;
    let assemble_seconds = start.elapsed().as_secs_f64();
    let solution = solve(&form, &opts.solver)?;
    let t_rec = Instant::now();

    let mut out = SolveOutcome {
        outcome: Outcome::NotOptimal(solution.status),
        ac_rank: None,
        dc_rank: None,
        state: None,
        residuals: None,
        tightness: Vec::new(),
        timings: Timings {
            assemble_seconds,
            solve_seconds: solution.solve_seconds,
            ..Default::default()
        },
        case,
        problem,
        solution,
    };
    if out.solution.status == SolveStatus::Optimal {
        out.tightness = tightness_check(&out.case, &out.problem.layout, &out.solution.scalars);
        match recover(&out.case, &out.problem, &out.solution, opts, &mut out.ac_rank, &mut out.dc_rank) {
            Ok(st) => {
                let r = verify(&out.case, &st, opts.verify_tol);
                out.outcome = if r.pass {
                    Outcome::Verified
                } else {
                    Outcome::VerificationFailed
                };
                out.residuals = Some(r);
                out.state = Some(st);
            }
            Err(e @ (Error::Recovery(_) | Error::Numerical(_))) => {
                out.outcome = Outcome::RecoveryFailed(e.to_string());
            }
            Err(e) => return Err(e),
        }
    }
    out.timings.recover_seconds = t_rec.elapsed().as_secs_f64();
    out.timings.total_seconds = start.elapsed().as_secs_f64();
    Ok(out)
}
