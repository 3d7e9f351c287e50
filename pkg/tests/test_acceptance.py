"""Acceptance criteria 1-10, run through the pipeline stages at their stated tolerances.

The heavy runs (T^3 trefoil mesh, collapse, extraction for three knots) are
done once per session; criterion 10 repeats everything with a fresh
workspace and compares the written artifacts byte for byte.  A pass/fail
line per criterion is printed in the terminal summary.
"""

import shutil
import time
from pathlib import Path

import numpy as np
import pytest

from conftest import ACCEPTANCE
from nodalknot.config import ExperimentConfig
from nodalknot.pipeline import StageError, Workspace, run_stage

pytestmark = pytest.mark.slow

# runtime budgets in seconds
BUDGET = {1: 120, 2: 120, 3: 900, 4: 600, 5: 300, 6: 1200, 7: 600, 8: 600, 9: 120}

TREFOIL_STAGES = ("model-spectrum", "tube-verify", "highdim", "sweep-eps", "collapse", "extract")
# the other knots only need the collapsed pair and its invariants
OTHER_KNOTS = {"circle": "circle", "figure-eight": "figure-eight"}
LIGHT = {"solver": {"random_states": 0}, "extract": {"trials": 0}}


def _run(cfg: ExperimentConfig, stages) -> dict:
    ws = Workspace(cfg)
    out = {}
    for name in stages:
        t = time.perf_counter()
        try:
            res = run_stage(name, ws, "acceptance")
            out[name] = {"result": res, "error": None, "seconds": res.seconds, "timings": dict(res.timings)}
        except StageError as exc:
            out[name] = {"result": None, "error": str(exc), "seconds": time.perf_counter() - t, "timings": {}}
    return out


def run_everything(root: Path) -> dict:
    runs = {"trefoil": _run(ExperimentConfig.from_dict({"output": {"dir": str(root / "trefoil")}}),
                            TREFOIL_STAGES)}
    for key, knot in OTHER_KNOTS.items():
        cfg = ExperimentConfig.from_dict({**LIGHT, "knot": {"name": knot}, "output": {"dir": str(root / key)}})
        runs[key] = _run(cfg, ("collapse", "extract"))
    return runs


@pytest.fixture(scope="session")
def workdir(tmp_path_factory):
    return tmp_path_factory.mktemp("acceptance")


@pytest.fixture(scope="session")
def first(workdir):
    runs = run_everything(workdir / "run")
    shutil.copytree(workdir / "run", workdir / "first")
    return runs


def _stage(runs, knot, name):
    entry = runs[knot][name]
    if entry["result"] is None:
        return None, entry["error"]
    return entry["result"], None


def _checks(res) -> dict:
    return {c.name: c for c in res.checks}


def record(n: int, ok: bool, detail: str):
    ACCEPTANCE[n] = (bool(ok), detail)
    assert ok, f"criterion {n}: {detail}"


def test_criterion_01_model_spectrum_oracle(first):
    res, err = _stage(first, "trefoil", "tube-verify")
    if res is None:
        record(1, False, err)
    model = np.array(res.results["model"])
    assert np.allclose(model, [0.0, 3.38996, 3.38996, 9.32836, 9.32836, 14.68197], atol=5e-6)
    worst = max(max(lv["relative_errors"]) for lv in res.results["levels"])
    at_default = max(res.results["levels"][0]["relative_errors"])
    slope = res.results["slopes"][0]
    secs = first["trefoil"]["tube-verify"]["seconds"]
    ok = worst < 0.03 and 1.7 <= slope <= 2.3 and secs < BUDGET[1]
    record(1, ok, f"max rel err {worst:.4f} (default h {at_default:.4f}) < 0.03; slope {slope:.3f} in [1.7, 2.3]; "
                  f"{secs:.0f}s")


def test_criterion_02_degeneracy_structure(first):
    res, err = _stage(first, "trefoil", "tube-verify")
    if res is None:
        record(2, False, err)
    levels = res.results["levels"]
    split = max(lv["split"] for lv in levels)
    ratio = levels[-1]["ratio"]
    dim = _checks(res)["cluster_dimension"].value
    secs = first["trefoil"]["tube-verify"]["seconds"]
    ok = dim == 2 and split < 1e-6 and abs(ratio / 2.752 - 1) < 0.10 and secs < BUDGET[2]
    record(2, ok, f"cluster dim {dim}, split {split:.2e} < 1e-6, mu3/mu1 {ratio:.4f} vs 2.752; {secs:.0f}s")


def test_criterion_03_shrinking_exterior(first):
    res, err = _stage(first, "trefoil", "sweep-eps")
    if res is None:
        record(3, False, err)
    diffs = res.results["abs_diff"]
    slope = res.results["slope"]
    mono = all(b < a for a, b in zip(diffs, diffs[1:]))
    secs = first["trefoil"]["sweep-eps"]["seconds"]
    ok = res.results["eps"] == [0.1, 0.01, 0.001, 0.0001] and mono and slope >= 0.4 and secs < BUDGET[3]
    record(3, ok, f"|lambda1 - mu1h| = {', '.join(f'{d:.4g}' for d in diffs)}; slope {slope:.3f} >= 0.4; "
                  f"{secs:.0f}s (includes mesh and assembly)")


def test_criterion_04_hadamard_formula(first):
    res, err = _stage(first, "trefoil", "collapse")
    if res is None:
        record(4, False, err)
    jd = res.results["jacobian_discrepancy"]
    secs = first["trefoil"]["collapse"]["timings"]["jacobians"]
    ok = jd["base"] < 1e-3 and jd["random_max"] < 1e-2 and jd["constant_law"] < 1e-6 and secs < BUDGET[4]
    record(4, ok, f"base {jd['base']:.2e} < 1e-3, 5 random max {jd['random_max']:.2e} < 1e-2, "
                  f"constant law {jd['constant_law']:.2e} < 1e-6; {secs:.0f}s")


def test_criterion_05_conformal_identity(first):
    res, err = _stage(first, "trefoil", "collapse")
    if res is None:
        record(5, False, err)
    ci = res.results["conformal_identity"]
    worst = max(ci["errors"].values())
    secs = first["trefoil"]["collapse"]["timings"]["conformal_identity"]
    ok = sorted(float(k) for k in ci["errors"]) == [-0.3, 0.3] and len(ci["reference"]) == 6 \
        and worst < 1e-10 and secs < BUDGET[5]
    record(5, ok, f"max rel error {worst:.2e} < 1e-10 over k <= 6, s1 = +-0.3; {secs:.0f}s")


def test_criterion_06_eigenvalue_collapse(first):
    res, err = _stage(first, "trefoil", "collapse")
    if res is None:
        record(6, False, err)
    st = res.results["state"]
    secs = first["trefoil"]["collapse"]["timings"]["newton"]
    ok = (st["converged"] and st["split"] < 1e-8 and st["iterations"] <= 10 and st["eps"] == 0.01
          and st["gap"] > 0.5 * 5.94 and secs < BUDGET[6])
    record(6, ok, f"split {st['split']:.2e} < 1e-8 in {st['iterations']} iterations, gap {st['gap']:.3f} > 2.97; "
                  f"{secs:.0f}s")


def test_criterion_07_knotted_nodal_line(first):
    details, ok = [], True
    for knot, expected in (("trefoil", 3), ("circle", 1), ("figure-eight", 5)):
        res, err = _stage(first, knot, "extract")
        if res is None:
            ok = False
            details.append(f"{knot}: {err}")
            continue
        ch = _checks(res)
        comp = res.results.get("component", {})
        det = res.results.get("invariants", {}).get("determinant")
        secs = first[knot]["extract"]["timings"].get("extraction", first[knot]["extract"]["seconds"])
        good = (ch["in_tube_components"].value == 1 and comp.get("closed") and abs(comp.get("winding", 0)) == 1
                and comp.get("sigma2", 0) > 0.1 and det == expected and secs < BUDGET[7])
        ok &= bool(good)
        details.append(f"{knot}: det {det} (want {expected}), winding {comp.get('winding')}, "
                       f"sigma2 {comp.get('sigma2', float('nan')):.3f}, {secs:.0f}s")
    record(7, ok, "; ".join(details))


def test_criterion_08_structural_stability(first):
    res, err = _stage(first, "trefoil", "extract")
    if res is None:
        record(8, False, err)
    st = res.results["stability"]
    rho = first["trefoil"]["collapse"]["result"].results["geometry"]["rho"]
    limit = 10 * 0.01 * 2 * rho  # ten delta times the tube diameter
    secs = first["trefoil"]["extract"]["timings"]["stability"]
    ok = (st["trials"] == 20 and st["delta"] == 0.01 and st["all_persist"] and st["determinant_unchanged"]
          and st["max_hausdorff"] < limit and secs < BUDGET[8])
    record(8, ok, f"20 trials persist: {st['all_persist']}, determinant unchanged: {st['determinant_unchanged']}, "
                  f"Hausdorff {st['max_hausdorff']:.4g} < {limit:g}; {secs:.0f}s")


def test_criterion_09_higher_dimensions(first):
    res, err = _stage(first, "trefoil", "highdim")
    if res is None:
        record(9, False, err)
    cases = res.results["cases"]
    ok = set(cases) == {"d3_m2", "d4_m2", "d5_m3"}
    parts = []
    for key, e in cases.items():
        good = (e["cluster_dimension"] == e["m"] and e["gram_min_eigenvalue"] > 0
                and all(e[v]["certificate"] > 0 and np.isfinite(e[v]["hadamard"]["condition"])
                        for v in ("constant_first", "all_eigenmode")))
        ok &= good
        parts.append(f"{key} {'ok' if good else 'FAIL'}")
    diff = cases["d3_m2"]["tube_model_difference"]
    secs = first["trefoil"]["highdim"]["seconds"]
    ok = ok and diff < 1e-8 and secs < BUDGET[9]
    record(9, ok, f"{', '.join(parts)}; (3,2) vs tube model {diff:.1e} < 1e-8; {secs:.0f}s")


def test_criterion_10_determinism(first, workdir):
    run_everything(workdir / "run")
    a, b = workdir / "first", workdir / "run"
    files = sorted(p.relative_to(a) for p in a.rglob("*") if p.is_file() and p.name != "manifest.json")
    other = sorted(p.relative_to(b) for p in b.rglob("*") if p.is_file() and p.name != "manifest.json")
    differ = [str(f) for f in files if (a / f).read_bytes() != (b / f).read_bytes()] if files == other else ["file set"]
    record(10, not differ and len(files) > 0,
           f"{len(files)} artifacts (manifests excluded) " + ("bit-identical" if not differ else f"differ: {differ}"))
