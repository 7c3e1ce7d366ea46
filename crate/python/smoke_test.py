"""Smoke test for the Python bindings.

Build and install first:

    pip install maturin
    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import json
from pathlib import Path

import mtdc_opf

CASES = Path(__file__).resolve().parent.parent / "crates" / "core" / "cases"


def main():
    dc2 = mtdc_opf.Case.load(str(CASES / "dc2.json"))
    assert (dc2.n_ac, dc2.n_dc) == (0, 2), dc2

    report = mtdc_opf.solve(dc2)
    assert report.verified, report.outcome
    v2 = (1 + (1 - 4 * 0.05) ** 0.5) / 2
    loss_mw = 100 * 10 * (1 - v2) ** 2
    assert abs(report.dc_loss_mw - loss_mw) < 1e-4, (report.dc_loss_mw, loss_mw)
    assert report.dc_eigen_ratio > 1e5

    oracle = mtdc_opf.oracle_objective(dc2, resolution=21)
    assert abs(oracle - loss_mw / 100) < 1e-4 * loss_mw / 100

    state = report.state_json()
    check = mtdc_opf.verify_state(dc2, state)
    assert check.passed and check.max_residual < 1e-5, check
    tampered = json.loads(state)
    tampered["v_dc"][1] += 0.01
    assert not mtdc_opf.verify_state(dc2, json.dumps(tampered)).passed

    same = json.loads(mtdc_opf.compare(report, report))
    assert same["cost_delta"] == 0 and not same["cost_reduced"]

    back = mtdc_opf.Case.from_json(dc2.to_json())
    assert mtdc_opf.dump_problem_text(back) == mtdc_opf.dump_problem_text(dc2)
    assert "dc_injection" in mtdc_opf.dump_problem_text(dc2)

    hybrid = mtdc_opf.solve(mtdc_opf.Case.load(str(CASES / "hybrid_39_9_mtdc.json")))
    assert hybrid.verified and (1, 4) in hybrid.binding_dc_lines, hybrid.binding_dc_lines

    try:
        mtdc_opf.Case.from_json("{")
    except ValueError:
        pass
    else:
        raise AssertionError("malformed case accepted")

    print(f"ok: dc2 loss {report.dc_loss_mw:.6f} MW, hybrid cost {hybrid.total_cost:.2f} $/h")


if __name__ == "__main__":
    main()
