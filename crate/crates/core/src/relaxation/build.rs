use crate::error::{Error, Result};
use crate::matrices::CoefficientSet;
use crate::network::NetworkCase;

use super::{
    ConicProblem, ConstraintKind, ConstraintRole as R, LinearExpr, LmiSense, SparseSym, Subject,
};

/// Shared state while the blocks of a relaxation are emitted.
pub struct Builder<'a> {
    pub case: &'a NetworkCase,
    pub coeffs: CoefficientSet,
    pub problem: ConicProblem,
    ac_p: Vec<SparseSym>,
    ac_q: Vec<SparseSym>,
    dc_p: Vec<SparseSym>,
}

impl<'a> Builder<'a> {
    pub fn new(case: &'a NetworkCase) -> Self {
        let coeffs = CoefficientSet::build(case);
        let ac_p = coeffs.ac.iter().flat_map(|c| c.bus_p.iter().map(SparseSym::from_dense)).collect();
        let ac_q = coeffs.ac.iter().flat_map(|c| c.bus_q.iter().map(SparseSym::from_dense)).collect();
        let dc_p = coeffs.dc.iter().flat_map(|c| c.bus_p.iter().map(SparseSym::from_dense)).collect();
        Builder {
            case,
            coeffs,
            problem: ConicProblem {
                name: case.name.clone(),
                ..Default::default()
            },
            ac_p,
            ac_q,
            dc_p,
        }
    }

    pub fn finish(self) -> ConicProblem {
        self.problem
    }

    fn ac_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.case.n_ac()).collect();
        idx.sort_by_key(|&k| self.case.ac_buses[k].id);
        idx
    }

    fn dc_order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.case.n_dc()).collect();
        idx.sort_by_key(|&k| self.case.dc_buses[k].id);
        idx
    }

    /// Net AC injection at `bus` plus its load: the power supplied by the device there.
    fn ac_device_power(&self, bus: usize, reactive: bool) -> LinearExpr {
        let block = self.problem.layout.ac_block.expect("AC block emitted first");
        let b = &self.case.ac_buses[bus];
        let (a, load) = if reactive {
            (&self.ac_q[bus], b.q_load)
        } else {
            (&self.ac_p[bus], b.p_load)
        };
        LinearExpr::trace(block, a.clone()).add(LinearExpr::constant(load))
    }

    /// DC injection at `bus` as seen by the attached device.
    fn dc_injection(&self, bus: usize) -> LinearExpr {
        match self.problem.layout.dc_injection.get(bus).copied().flatten() {
            Some(s) => LinearExpr::scalar(s, 1.0),
            None => LinearExpr::trace(
                self.problem.layout.dc_block.expect("DC block emitted first"),
                self.dc_p[bus].clone(),
            ),
        }
    }
}

fn range(expr: LinearExpr, lower: f64, upper: f64) -> ConstraintKind {
    ConstraintKind::Linear {
        expr,
        lower: Some(lower),
        upper: Some(upper),
    }
}

fn at_least(expr: LinearExpr, lower: f64) -> ConstraintKind {
    ConstraintKind::Linear {
        expr,
        lower: Some(lower),
        upper: None,
    }
}

/// `[[-r^2, a, b], [a, -1, 0], [b, 0, -1]] <= 0`, i.e. `a^2 + b^2 <= r^2`.
fn disc_lmi(radius: f64, a: LinearExpr, b: LinearExpr) -> ConstraintKind {
    ConstraintKind::Lmi {
        dim: 3,
        sense: LmiSense::Nsd,
        entries: vec![
            (0, 0, LinearExpr::constant(-radius * radius)),
            (0, 1, a),
            (0, 2, b),
            (1, 1, LinearExpr::constant(-1.0)),
            (2, 2, LinearExpr::constant(-1.0)),
        ],
    }
}

/// Emit the AC lifted-voltage block with injection, voltage, line-limit, cost
/// epigraph and slack-angle constraints, and the AC loss objective term.
pub fn build_ac_block(b: &mut Builder<'_>) -> Result<()> {
    let case = b.case;
    let Some(ac) = b.coeffs.ac.as_ref() else {
        return Ok(());
    };
    let n = case.n_ac();
    let slack = case
        .slack_bus()
        .ok_or_else(|| Error::model("AC network has no slack bus"))?;
    let block = b.problem.add_block("W_AC", 2 * n);
    b.problem.layout.ac_block = Some(block);

    for k in b.ac_order() {
        let bus = &case.ac_buses[k];
        let subject = Subject::AcBus { id: bus.id };
        let (pmin, pmax, qmin, qmax) = case.ac_injection_bounds(k);
        b.problem.push(
            R::AcActiveInjection,
            subject,
            range(LinearExpr::trace(block, b.ac_p[k].clone()), pmin, pmax),
        );
        b.problem.push(
            R::AcReactiveInjection,
            subject,
            range(LinearExpr::trace(block, b.ac_q[k].clone()), qmin, qmax),
        );
        b.problem.push(
            R::AcVoltage,
            subject,
            range(
                LinearExpr::trace(block, SparseSym::from_dense(&ac.bus_v[k])),
                bus.v_min * bus.v_min,
                bus.v_max * bus.v_max,
            ),
        );
    }

    let mut lines: Vec<usize> = (0..case.ac_lines.len()).collect();
    lines.sort_by_key(|&i| {
        let l = &case.ac_lines[i];
        (case.ac_buses[l.from].id, case.ac_buses[l.to].id, i)
    });
    for &i in &lines {
        let line = &case.ac_lines[i];
        let (from, to) = (case.ac_buses[line.from].id, case.ac_buses[line.to].id);
        if let Some(s) = line.s_max {
            for (dir, role) in [(0, R::AcLineLimitFrom), (1, R::AcLineLimitTo)] {
                let p = LinearExpr::trace(block, SparseSym::from_dense(&ac.line_p[i][dir]));
                let q = LinearExpr::trace(block, SparseSym::from_dense(&ac.line_q[i][dir]));
                b.problem
                    .push(role, Subject::AcLine { index: i, from, to }, disc_lmi(s, p, q));
            }
        }
    }

    let mut gens: Vec<usize> = (0..case.generators.len()).collect();
    gens.sort_by_key(|&g| (case.ac_buses[case.generators[g].bus].id, g));
    b.problem.layout.gen_cost = vec![usize::MAX; case.generators.len()];
    for g in gens {
        let gen = &case.generators[g];
        let bus_id = case.ac_buses[gen.bus].id;
        if gen.c2 < 0.0 || !gen.c2.is_finite() {
            return Err(Error::model(format!(
                "generator at bus {bus_id} has a non-convex cost (c2 = {})",
                gen.c2
            )));
        }
        let alpha = b.problem.add_scalar(format!("alpha[{bus_id}]"));
        b.problem.layout.gen_cost[g] = alpha;
        let p = b.ac_device_power(gen.bus, false);
        let subject = Subject::Generator { index: g, bus: bus_id };
        // alpha >= c2 P^2 + c1 P + c0
        let affine = p
            .clone()
            .scaled(gen.c1)
            .add(LinearExpr::constant(gen.c0))
            .add(LinearExpr::scalar(alpha, -1.0));
        let kind = if gen.c2 > 0.0 {
            ConstraintKind::Lmi {
                dim: 2,
                sense: LmiSense::Nsd,
                entries: vec![
                    (0, 0, affine),
                    (0, 1, p.scaled(gen.c2.sqrt())),
                    (1, 1, LinearExpr::constant(-1.0)),
                ],
            }
        } else {
            at_least(affine.scaled(-1.0), 0.0)
        };
        b.problem.push(R::GenCostEpigraph, subject, kind);
        b.problem.objective.add_scalar(alpha, 1.0);
    }

    b.problem.push(R::AcPsd, Subject::Block { index: block }, ConstraintKind::Psd { block });
    b.problem.push(
        R::SlackReference,
        Subject::AcBus {
            id: case.ac_buses[slack].id,
        },
        range(LinearExpr::trace(block, SparseSym::unit(2 * n, slack + n, slack + n)), 0.0, 0.0),
    );

    for &i in &lines {
        let mut loss = ac.line_p[i][0].clone();
        loss += &ac.line_p[i][1];
        b.problem.objective.add_trace(block, &SparseSym::from_dense(&loss), 1.0);
    }
    Ok(())
}

/// Emit the DC voltage block with DC/DC converter variables, injection,
/// voltage and line-limit constraints, and the DC loss objective term.
pub fn build_dc_block(b: &mut Builder<'_>) -> Result<()> {
    let case = b.case;
    let Some(dc) = b.coeffs.dc.as_ref() else {
        return Ok(());
    };
    let n = case.n_dc();
    if case.master_bus().is_none() {
        return Err(Error::model("DC network has no master bus"));
    }
    let block = b.problem.add_block("W_DC", n);
    b.problem.layout.dc_block = Some(block);

    let p = &mut b.problem;
    for (d, conv) in case.dcdc_converters.iter().enumerate() {
        let subject = Subject::DcDcConverter { index: d };
        let q = p.add_scalar(format!("q[{d}]"));
        let s = p.add_scalar(format!("s[{d}]"));
        let t = p.add_scalar(format!("t[{d}]"));
        let u = p.add_scalar(format!("u[{d}]"));
        p.layout.dcdc_q.push(q);
        p.layout.dcdc_s.push(s);
        p.layout.dcdc_t.push(t);
        p.layout.dcdc_u.push(u);
        p.push(
            R::DcDcFlowLimit,
            subject,
            ConstraintKind::ScalarBound {
                scalar: q,
                lower: Some(-conv.q_max),
                upper: Some(conv.q_max),
            },
        );
        for sign in [-1.0, 1.0] {
            let e = LinearExpr::scalar(u, 1.0).add(LinearExpr::scalar(q, sign));
            p.push(R::AuxAbsFlow, subject, at_least(e, 0.0));
        }
        p.push(
            R::AuxSquareFlow,
            subject,
            ConstraintKind::Lmi {
                dim: 2,
                sense: LmiSense::Psd,
                entries: vec![
                    (0, 0, LinearExpr::scalar(t, 1.0)),
                    (0, 1, LinearExpr::scalar(q, 1.0)),
                    (1, 1, LinearExpr::constant(1.0)),
                ],
            },
        );
        let loss = LinearExpr::scalar(s, 2.0)
            .add(LinearExpr::scalar(t, -conv.gamma))
            .add(LinearExpr::scalar(u, -conv.beta));
        p.push(R::DcDcLoss, subject, at_least(loss, conv.delta));
        // each terminal is charged its half of the loss
        p.objective.add_scalar(s, 2.0);
    }

    p.layout.dc_injection = vec![None; n];
    for k in b.dc_order() {
        let bus = &case.dc_buses[k];
        let subject = Subject::DcBus { id: bus.id };
        let network = LinearExpr::trace(block, b.dc_p[k].clone());
        let p = &mut b.problem;
        let terminals: Vec<(usize, f64)> = case
            .dcdc_converters
            .iter()
            .enumerate()
            .filter_map(|(d, c)| {
                if c.bus_k == k {
                    Some((d, 1.0))
                } else if c.bus_m == k {
                    Some((d, -1.0))
                } else {
                    None
                }
            })
            .collect();
        if terminals.is_empty() {
            p.push(R::DcInjection, subject, range(network, bus.p_min, bus.p_max));
        } else {
            let inj = p.add_scalar(format!("p_dc[{}]", bus.id));
            p.layout.dc_injection[k] = Some(inj);
            p.push(
                R::DcInjection,
                subject,
                ConstraintKind::ScalarBound {
                    scalar: inj,
                    lower: Some(bus.p_min),
                    upper: Some(bus.p_max),
                },
            );
            // p_k = network outflow + s_d + (+-) q_d
            let mut balance = LinearExpr::scalar(inj, 1.0).add(network.scaled(-1.0));
            for (d, sign) in terminals {
                balance.add_scalar(p.layout.dcdc_s[d], -1.0);
                balance.add_scalar(p.layout.dcdc_q[d], -sign);
            }
            p.push(R::DcNodalBalance, subject, range(balance, 0.0, 0.0));
        }
        let (lo, hi) = match (bus.is_master, bus.v_master) {
            (true, Some(v)) => (v * v, v * v),
            _ => (bus.v_min * bus.v_min, bus.v_max * bus.v_max),
        };
        p.push(
            R::DcVoltage,
            subject,
            range(LinearExpr::trace(block, SparseSym::from_dense(&dc.bus_v[k])), lo, hi),
        );
    }

    let p = &mut b.problem;
    let mut lines: Vec<usize> = (0..case.dc_lines.len()).collect();
    lines.sort_by_key(|&i| {
        let l = &case.dc_lines[i];
        (case.dc_buses[l.from].id, case.dc_buses[l.to].id, i)
    });
    for &i in &lines {
        let line = &case.dc_lines[i];
        let subject = Subject::DcLine {
            index: i,
            from: case.dc_buses[line.from].id,
            to: case.dc_buses[line.to].id,
        };
        for (dir, role) in [(0, R::DcLineLimitFrom), (1, R::DcLineLimitTo)] {
            let flow = LinearExpr::trace(block, SparseSym::from_dense(&dc.line_flow[i][dir]));
            p.push(role, subject, range(flow, -line.p_max, line.p_max));
        }
    }
    p.push(R::DcPsd, Subject::Block { index: block }, ConstraintKind::Psd { block });
    for &i in &lines {
        let mut loss = dc.line_flow[i][0].clone();
        loss += &dc.line_flow[i][1];
        p.objective.add_trace(block, &SparseSym::from_dense(&loss), 1.0);
    }
    Ok(())
}

/// Emit converter power balance and capacity constraints linking the blocks.
pub fn build_coupling(b: &mut Builder<'_>) -> Result<()> {
    let case = b.case;
    for (c, conv) in case.acdc_converters.iter().enumerate() {
        let Some(ac_bus) = conv.ac_bus else {
            continue;
        };
        if b.problem.layout.ac_block.is_none() || b.problem.layout.dc_block.is_none() {
            return Err(Error::model("converter coupling needs both AC and DC blocks"));
        }
        let subject = Subject::AcDcConverter { index: c };
        let pac = b.ac_device_power(ac_bus, false);
        let qac = b.ac_device_power(ac_bus, true);
        let balance = pac.clone().scaled(conv.efficiency).add(b.dc_injection(conv.dc_bus));
        b.problem.push(R::ConverterBalance, subject, range(balance, 0.0, 0.0));
        b.problem
            .push(R::ConverterCapacity, subject, disc_lmi(conv.s_conv, pac, qac));
    }
    Ok(())
}

/// Build the full relaxation for a case: AC block, DC block, then coupling.
pub fn assemble(case: &NetworkCase) -> Result<ConicProblem> {
    let mut b = Builder::new(case);
    build_ac_block(&mut b)?;
    build_dc_block(&mut b)?;
    build_coupling(&mut b)?;
    Ok(b.finish())
}
