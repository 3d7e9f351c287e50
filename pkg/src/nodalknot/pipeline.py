"""Experiment stages: each computes its results, writes artifacts into its own
directory and records pass/fail checks in ``summary.json``.

The stages share one :class:`Workspace`, which builds the framed tube, the
periodic mesh and the reference-metric assembler once per configuration.
Everything numeric is deterministic for a fixed configuration and seed.
"""

from __future__ import annotations

import csv
import logging
import platform
import time
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Any, Callable, Optional

import numpy as np

from . import __version__, collapse, eigen, highdim, io, knotgeom, nodal, specfun
from .config import ConfigError, ExperimentConfig
from .fem import FormAssembler, assemble, assemble_weighted_eps, mesh_product_tube, mesh_torus3

log = logging.getLogger(__name__)

# acceptance thresholds
MODEL_REL_TOL = 0.03
SLOPE_RANGE = (1.7, 2.3)
SPLIT_SYMMETRIC = 1e-6
RATIO_TOL = 0.10
SWEEP_MIN_SLOPE = 0.4
HADAMARD_BASE_TOL = 1e-3
HADAMARD_RANDOM_TOL = 1e-2
CONSTANT_LAW_TOL = 1e-6
CONFORMAL_IDENTITY_TOL = 1e-10
COLLAPSE_SPLIT_TOL = 1e-8
GAP_FRACTION = 0.5
SIGMA2_MIN = 0.1
HAUSDORFF_FACTOR = 10.0
HIGHDIM_MATCH_TOL = 1e-8

STAGES = ("model-spectrum", "tube-verify", "sweep-eps", "collapse", "extract", "highdim")


class StageError(RuntimeError):
    """A stage could not produce its results (artifacts written so far are kept)."""

    def __init__(self, stage: str, msg: str):
        super().__init__(f"{stage}: {msg}")
        self.stage = stage


@dataclass
class Check:
    name: str
    value: Any
    requirement: str
    passed: bool

    def to_dict(self) -> dict:
        return {"name": self.name, "value": self.value, "requirement": self.requirement,
                "passed": bool(self.passed)}


@dataclass
class StageResult:
    stage: str
    results: dict = field(default_factory=dict)
    checks: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    seconds: float = 0.0
    error: Optional[str] = None
    timings: dict = field(default_factory=dict)  # sub-step wall times, manifest only

    def check(self, name: str, value, requirement: str, passed) -> bool:
        self.checks.append(Check(name, value, requirement, bool(passed)))
        return bool(passed)

    @property
    def passed(self) -> bool:
        return self.error is None and all(c.passed for c in self.checks)

    def summary(self) -> dict:
        """Everything but timings (those go to the manifest)."""
        return {"stage": self.stage, "passed": self.passed, "error": self.error,
                "checks": [c.to_dict() for c in self.checks], "results": self.results,
                "artifacts": sorted(self.artifacts)}


def versions() -> dict:
    import scipy

    out = {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__,
           "nodalknot": __version__}
    try:
        import pypardiso

        out["pypardiso"] = getattr(pypardiso, "__version__", "unknown")
    except ImportError:
        out["pypardiso"] = None
    return out


# ---------------------------------------------------------------------------
# shared geometry
# ---------------------------------------------------------------------------
class Workspace:
    """Lazily built tube, mesh, assembler and spectral contexts for one config."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self._contexts: dict = {}
        self.collapse_state: Optional[collapse.CollapseState] = None

    @cached_property
    def tube(self) -> knotgeom.FramedTube:
        m = self.cfg["metric"]
        tube = knotgeom.build_frame(self.cfg.curve(), n_samples=int(self.cfg["mesh"]["frame_samples"]),
                                    rho=float(m["rho"]), width=float(m["width"]))
        self.reach_margin = self.cfg.validate_geometry(tube)
        return tube

    @cached_property
    def mesh(self):
        t = time.perf_counter()
        mesh = mesh_torus3(int(self.cfg["mesh"]["base"]), self.tube,
                           elements_across=int(self.cfg["mesh"]["elements_across"]))
        log.info("mesh: %d vertices, %d tets (%.1fs)", mesh.n_vertices, mesh.n_tets, time.perf_counter() - t)
        return mesh

    def field(self, eps: float = 1.0) -> knotgeom.MetricField:
        return knotgeom.MetricField(self.tube, self.cfg.metric_config(eps))

    @cached_property
    def assembler(self) -> FormAssembler:
        """Reference geometry on the whole mesh (``eps = 1`` field)."""
        t = time.perf_counter()
        asm = FormAssembler(self.mesh, self.field(1.0), int(self.cfg["mesh"]["quadrature_order"]))
        log.info("assembler ready (%.1fs)", time.perf_counter() - t)
        return asm

    @cached_property
    def directions(self) -> collapse.ConformalDirections:
        return collapse.default_directions(float(self.cfg["metric"]["A"]), self.tube.width)

    def context(self, count: int = 3, eps: Optional[float] = None) -> collapse.SpectralContext:
        eps = float(self.cfg["metric"]["eps"]) if eps is None else float(eps)
        key = (count, eps)
        if key not in self._contexts:
            c0 = self.assembler.scale_factor(self.field(eps))
            self._contexts[key] = collapse.SpectralContext(self.assembler, self.directions, base_scale=c0,
                                                           seed=self.cfg.seed, count=count)
        return self._contexts[key]

    def geometry_info(self) -> dict:
        tube = self.tube
        return {"knot": self.cfg["knot"]["name"], "rho": tube.rho, "width": tube.width,
                "reach_margin": self.reach_margin, "frame_winding": tube.winding,
                "holonomy": tube.holonomy}


def _stage_dir(cfg: ExperimentConfig, stage: str) -> Path:
    d = cfg.out_dir / stage
    d.mkdir(parents=True, exist_ok=True)
    return d


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _slope(x, y) -> float:
    return float(np.polyfit(np.log(np.asarray(x, float)), np.log(np.asarray(y, float)), 1)[0])


# ---------------------------------------------------------------------------
# stages
# ---------------------------------------------------------------------------
def model_spectrum(ws: Workspace, res: StageResult, out: Path) -> None:
    A = float(ws.cfg["metric"]["A"])
    spec = specfun.model_tube_spectrum(A=A, count=8)
    spec.to_csv(out / "model_spectrum.csv")
    res.artifacts.append("model_spectrum.csv")
    cl = spec.first_cluster()
    res.results.update({"A": A, "values": spec.values(8).tolist(),
                        "first_cluster": {"value": cl.mu, "multiplicity": cl.multiplicity},
                        "eq_a_threshold": knotgeom.eq_a_threshold()})
    res.check("first_cluster_multiplicity", cl.multiplicity, "== 2", cl.multiplicity == 2)


def tube_verify(ws: Workspace, res: StageResult, out: Path) -> None:
    cfg = ws.cfg
    A = float(cfg["metric"]["A"])
    order = int(cfg["mesh"]["quadrature_order"])
    model = specfun.model_tube_spectrum(A=A, count=6).values(6)
    levels, rows = [], []
    last = None
    for nr in cfg["mesh"]["tube_rings"]:
        h = 1.0 / nr
        pm = mesh_product_tube(max(16, 2 * nr), h, A)
        forms = assemble(pm, knotgeom.ProductTubeField(A=A), order)
        pairs = eigen.lowest_pairs(forms, 5, seed=cfg.seed)
        vals = pairs.values[:6]
        rel = np.abs(vals[1:] - model[1:]) / model[1:]
        split = float((vals[2] - vals[1]) / vals[1])
        levels.append({"rings": nr, "h": h, "vertices": pm.n_vertices, "values": vals.tolist(),
                       "relative_errors": rel.tolist(), "split": split, "ratio": float(vals[3] / vals[1])})
        rows += [(nr, h, k, vals[k], model[k], (abs(vals[k] - model[k]) / model[k]) if k else 0.0)
                 for k in range(6)]
        last = (pm, pairs)
    _write_csv(out / "tube_spectrum.csv", ["rings", "h", "index", "fem", "model", "relative_error"], rows)
    pm, pairs = last
    io.write_vtk_tets(out / "tube_modes.vtk", pm, {f"mode{k}": pairs.vectors[:, k] for k in range(1, 4)},
                      title="standalone tube, finest level")
    res.artifacts += ["tube_spectrum.csv", "tube_modes.vtk"]
    hs = [lv["h"] for lv in levels]
    slopes = [_slope(hs, [lv["relative_errors"][k] for lv in levels]) for k in range(5)]
    model_ratio = float(model[3] / model[1])
    res.results.update({"model": model.tolist(), "levels": levels, "slopes": slopes, "model_ratio": model_ratio})
    worst = max(max(lv["relative_errors"]) for lv in levels)
    res.check("relative_error_all_levels", worst, f"< {MODEL_REL_TOL}", worst < MODEL_REL_TOL)
    res.check("convergence_slope_mu1", slopes[0], f"in [{SLOPE_RANGE[0]}, {SLOPE_RANGE[1]}]",
              SLOPE_RANGE[0] <= slopes[0] <= SLOPE_RANGE[1])
    split = max(lv["split"] for lv in levels)
    res.check("cluster_split", split, f"< {SPLIT_SYMMETRIC}", split < SPLIT_SYMMETRIC)
    clusters = eigen.find_clusters(pairs.values[1:6])
    res.check("cluster_dimension", len(clusters[0]), "== 2", len(clusters[0]) == 2)
    dev = max(abs(lv["ratio"] / model_ratio - 1.0) for lv in levels)
    res.check("ratio_mu3_mu1", dev, f"relative deviation < {RATIO_TOL}", dev < RATIO_TOL)


def sweep_eps(ws: Workspace, res: StageResult, out: Path) -> None:
    cfg = ws.cfg
    order = int(cfg["mesh"]["quadrature_order"])
    tube_asm = FormAssembler(ws.mesh, ws.field(1.0), order, mask=ws.mesh.tags == knotgeom.TUBE_INTERIOR)
    tube_vals = eigen.lowest_pairs(tube_asm.forms(), 4, seed=cfg.seed).values
    mu_h = float(tube_vals[1])
    eps_list = [float(e) for e in cfg["metric"]["eps_list"]]
    rows, diffs, values = [], [], []
    for e in eps_list:
        vals = eigen.lowest_pairs(assemble_weighted_eps(ws.mesh, e, assembler=ws.assembler), 4,
                                  seed=cfg.seed).values
        diffs.append(abs(float(vals[1]) - mu_h))
        values.append(vals.tolist())
        rows.append([e] + [float(v) for v in vals[1:5]] + [diffs[-1]])
        log.info("eps = %g: lambda_1 = %.8g, |lambda_1 - mu_1h| = %.4g", e, vals[1], diffs[-1])
    _write_csv(out / "sweep_eps.csv", ["eps", "lambda1", "lambda2", "lambda3", "lambda4", "abs_diff_mu1"], rows)
    res.artifacts.append("sweep_eps.csv")
    slope = _slope(eps_list, diffs)
    res.results.update({"geometry": ws.geometry_info(), "vertices": ws.mesh.n_vertices,
                        "tube_neumann": tube_vals.tolist(), "mu1_h": mu_h, "eps": eps_list,
                        "values": values, "abs_diff": diffs, "slope": slope})
    mono = all(b < a for a, b in zip(diffs, diffs[1:]))
    res.check("monotone_decrease", diffs, "strictly decreasing", mono)
    res.check("loglog_slope", slope, f">= {SWEEP_MIN_SLOPE}", slope >= SWEEP_MIN_SLOPE)


def _jacobian_record(ctx, cl, delta) -> dict:
    jh = collapse.hadamard_jacobian(ctx, cl)
    jf = collapse.fd_jacobian(ctx, cl, delta)
    law = float(np.max(np.abs(jh.J[:, 0] + 2.0 * cl.values) / cl.values))
    return {"s": cl.s.tolist(), "values": cl.values.tolist(), "hadamard": jh.H.tolist(), "fd": jf.H.tolist(),
            "discrepancy": collapse.relative_discrepancy(jh, jf), "constant_law_error": law}


def collapse_stage(ws: Workspace, res: StageResult, out: Path) -> None:
    cfg = ws.cfg
    sol = cfg["solver"]
    eps = float(cfg["metric"]["eps"])
    s0 = np.asarray(cfg["metric"]["s_start"], dtype=float)
    ctx = ws.context(3)
    res.results.update({"geometry": ws.geometry_info(), "vertices": ws.mesh.n_vertices, "eps": eps,
                        "directions": list(ws.directions.labels), "direction_margin": ws.directions.margin})
    n_random = int(sol["random_states"])
    t0 = time.perf_counter()
    if n_random > 0:
        # analytic against central-difference Jacobians
        base = ctx.cluster(s0)
        records = [_jacobian_record(ctx, base, float(sol["fd_delta"]))]
        rng = np.random.default_rng(cfg.seed)
        radius = float(sol["random_radius"])
        for _ in range(n_random):
            s = s0 + rng.uniform(-radius, radius, size=len(s0))
            records.append(_jacobian_record(ctx, ctx.cluster(s), float(sol["fd_delta"])))
        io.write_json(out / "jacobians.json", records)
        res.artifacts.append("jacobians.json")
        d_base = records[0]["discrepancy"]
        d_rand = max(r["discrepancy"] for r in records[1:])
        law = max(r["constant_law_error"] for r in records)
        res.results["jacobian_discrepancy"] = {"base": d_base, "random_max": d_rand, "constant_law": law}
        res.check("hadamard_vs_fd_base", d_base, f"< {HADAMARD_BASE_TOL}", d_base < HADAMARD_BASE_TOL)
        res.check("hadamard_vs_fd_random", d_rand, f"< {HADAMARD_RANDOM_TOL}", d_rand < HADAMARD_RANDOM_TOL)
        res.check("constant_direction_law", law, f"< {CONSTANT_LAW_TOL}", law < CONSTANT_LAW_TOL)
        res.timings["jacobians"] = time.perf_counter() - t0

        # exact rescaling along the constant direction
        t0 = time.perf_counter()
        ctx6 = ws.context(6)
        sb = np.array(records[1]["s"])
        sb[0] = 0.0
        ref = ctx6.cluster(sb).pairs.values[1:7]
        shift = float(sol["conformal_shift"])
        errs = {}
        for sh in (shift, -shift):
            e1 = np.zeros_like(sb)
            e1[0] = sh
            vals = ctx6.cluster(sb + e1).pairs.values[1:7]
            errs[repr(sh)] = float(np.max(np.abs(vals - np.exp(-2.0 * sh) * ref) / vals))
        worst = max(errs.values())
        res.results["conformal_identity"] = {"s": sb.tolist(), "reference": ref.tolist(), "errors": errs}
        res.check("conformal_identity", worst, f"< {CONFORMAL_IDENTITY_TOL}", worst < CONFORMAL_IDENTITY_TOL)
        res.timings["conformal_identity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    state = collapse.newton_collapse(ctx, s0, eps=eps, tol_split=float(sol["newton_tol_split"]),
                                     tol_target=float(sol["newton_tol_target"]),
                                     max_iters=int(sol["newton_max_iters"]), step_cap=float(sol["step_cap"]),
                                     fd_delta=float(sol["fd_delta"]))
    ws.collapse_state = state
    res.timings["newton"] = time.perf_counter() - t0
    state.write_trace(out / "trace.csv")
    io.write_json(out / "state.json", {**state.to_json(), "config_hash": cfg.digest()})
    res.artifacts += ["trace.csv", "state.json"]
    model = specfun.model_tube_spectrum(A=float(cfg["metric"]["A"]), count=6).values(6)
    model_gap = float(model[3] - model[1])
    iters = len(state.history) - 1
    res.results.update({"state": state.to_json(), "history": state.history, "model_gap": model_gap})
    res.check("split", state.split, f"< {COLLAPSE_SPLIT_TOL}", state.converged and state.split < COLLAPSE_SPLIT_TOL)
    res.check("iterations", iters, f"<= {sol['newton_max_iters']}", iters <= int(sol["newton_max_iters"]))
    res.check("gap_certificate", state.gap, f"> {GAP_FRACTION} x {model_gap:.6g}", state.gap > GAP_FRACTION * model_gap)


def _load_state(ws: Workspace, out_root: Path) -> Optional[np.ndarray]:
    import json

    path = out_root / "collapse" / "state.json"
    if not path.exists():
        return None
    data = json.loads(path.read_text())
    if data.get("config_hash") != ws.cfg.digest() or not data.get("converged"):
        return None
    return np.asarray(data["s"], dtype=float)


def model_pair_references(ws: Workspace) -> list[np.ndarray]:
    """The model Neumann pair ``(cos, sin)`` at the mesh vertices inside the tube, zero elsewhere."""
    ch = ws.tube.chart_inverse(ws.mesh.points)
    inside = ch.tag == knotgeom.TUBE_INTERIOR
    s, z = np.nan_to_num(ch.s), np.nan_to_num(ch.z)
    pair = [specfun.model_eigenfunction(1, 1, angular=a, A=float(ws.cfg["metric"]["A"])) for a in ("cos", "sin")]
    return [np.where(inside, v(s, z), 0.0) for v in pair]


def extract_stage(ws: Workspace, res: StageResult, out: Path) -> None:
    cfg = ws.cfg
    ex = cfg["extract"]
    if ws.collapse_state is not None:
        s = ws.collapse_state.s
    else:
        s = _load_state(ws, cfg.out_dir)
        if s is None:
            raise StageError("extract", "no converged collapse state for this configuration; run 'collapse' first")
    count = int(cfg["solver"]["count"])
    t0 = time.perf_counter()
    cl = ws.context(count).cluster(s)
    aligned = eigen.subspace_align(cl.pairs, model_pair_references(ws), cl.forms.M, [1, 2])
    u1, u2 = aligned.vectors[:, 1], aligned.vectors[:, 2]
    curve = nodal.extract_intersection(ws.mesh, u1, u2)
    inside = nodal.tube_components(curve, ws.tube)
    res.results.update({"s": np.asarray(s).tolist(), "values": cl.pairs.values.tolist(),
                        "split": cl.split, "components": [len(c) for c in curve.components],
                        "warnings": list(curve.warnings)})
    flags = np.zeros(len(curve.components))
    for i, _ in inside:
        flags[i] = 1.0
    io.write_vtk_polylines(out / "nodal_curve.vtk", curve.polylines, [c.closed for c in curve.components],
                           {"in_tube": [np.full(len(c), f) for c, f in zip(curve.components, flags)]})
    io.write_vtk_tets(out / "fields.vtk", ws.mesh, {"u1": u1, "u2": u2}, title="aligned degenerate pair")
    res.artifacts += ["nodal_curve.vtk", "fields.vtk"]
    res.check("in_tube_components", len(inside), "== 1", len(inside) == 1)
    if not inside:
        return
    idx, tc = inside[0]
    comp = curve.components[idx]
    io.write_obj_polylines(out / "knot.obj", [comp.points], [comp.closed])
    res.artifacts.append("knot.obj")
    sigma, where = nodal.transversality(comp)
    diagram = nodal.project_diagram(comp, seed=cfg.seed, retries=int(ex["projection_retries"]))
    alex = nodal.alexander(diagram)
    inv = {**diagram.to_dict(), **alex.to_dict()}
    io.write_json(out / "invariants.json", inv)
    res.artifacts.append("invariants.json")
    res.results.update({"component": {"index": idx, "points": len(comp), "closed": comp.closed,
                                      "winding": tc.winding, "max_radius": tc.max_radius, "length": comp.length,
                                      "sigma2": sigma, "sigma2_location": np.asarray(where).tolist()},
                        "invariants": inv})
    res.check("closed", comp.closed, "closed loop", comp.closed)
    res.check("winding", tc.winding, "== +-1", abs(tc.winding) == 1)
    res.check("transversality", sigma, f"> {SIGMA2_MIN}", sigma > SIGMA2_MIN)
    expected = cfg.expected_determinant()
    if expected is not None:
        res.check("determinant", alex.determinant, f"== {expected}", alex.determinant == expected)

    res.timings["extraction"] = time.perf_counter() - t0
    trials = int(ex["trials"])
    if trials > 0:
        t0 = time.perf_counter()
        delta = float(ex["delta"])
        extras = [cl.pairs.vectors[:, k] for k in range(3, count + 1)]
        rep = nodal.stability_test(ws.mesh, u1, u2, delta, trials, ws.tube, extras, seed=cfg.seed,
                                   baseline_index=idx)
        io.write_json(out / "stability.json", rep)
        res.artifacts.append("stability.json")
        limit = HAUSDORFF_FACTOR * delta * 2.0 * ws.tube.rho
        res.results["stability"] = {k: v for k, v in rep.items() if k != "records"}
        res.check("stability_persists", rep["all_persist"], f"all {trials} trials", rep["all_persist"])
        res.check("stability_determinant", rep["determinant_unchanged"], "unchanged", rep["determinant_unchanged"])
        res.check("stability_hausdorff", rep["max_hausdorff"], f"< {limit:.6g}", rep["max_hausdorff"] < limit)
        res.timings["stability"] = time.perf_counter() - t0


def highdim_stage(ws: Workspace, res: StageResult, out: Path) -> None:
    h = ws.cfg["highdim"]
    a, mu_max = float(h["a"]), float(h["mu_max"])
    cases = [tuple(int(v) for v in c) for c in h["cases"]]
    rep = highdim.report(cases, a, mu_max)
    for key, entry in rep.items():
        d, m = entry["d"], entry["m"]
        res.check(f"{key}_cluster_dimension", entry["cluster_dimension"], f"== {m}", entry["cluster_dimension"] == m)
        res.check(f"{key}_gram_positive", entry["gram_min_eigenvalue"], "> 0", entry["gram_min_eigenvalue"] > 0)
        for variant in ("constant_first", "all_eigenmode"):
            v = entry[variant]
            res.check(f"{key}_{variant}_certificate", v["certificate"], "> 0", v["certificate"] > 0)
            cond = v["hadamard"]["condition"]
            res.check(f"{key}_{variant}_nonsingular", cond, "finite condition", np.isfinite(cond))
        if (d, m) == (3, 2):
            ref = collapse.model_hadamard(A=a, mu_max=mu_max)
            mat = np.array(entry["constant_first"]["hadamard"]["matrix"])
            diff = float(np.max(np.abs(mat - ref)) / np.max(np.abs(ref)))
            entry["tube_model_hadamard"] = ref.tolist()
            entry["tube_model_difference"] = diff
            res.check(f"{key}_matches_tube_model", diff, f"< {HIGHDIM_MATCH_TOL}", diff < HIGHDIM_MATCH_TOL)
    io.write_json(out / "highdim.json", rep)
    res.artifacts.append("highdim.json")
    res.results["cases"] = rep


STAGE_FUNCTIONS: dict[str, Callable] = {
    "model-spectrum": model_spectrum,
    "tube-verify": tube_verify,
    "sweep-eps": sweep_eps,
    "collapse": collapse_stage,
    "extract": extract_stage,
    "highdim": highdim_stage,
}


def run_stage(name: str, ws: Workspace, command: str = "") -> StageResult:
    """Run one stage, always writing ``summary.json`` and ``manifest.json``.

    Exceptions are recorded in the summary and re-raised as :class:`StageError`.
    """
    cfg = ws.cfg
    out = _stage_dir(cfg, name)
    (out / "config.toml").write_text(cfg.to_toml())
    res = StageResult(name)
    t = time.perf_counter()
    failure = None
    try:
        STAGE_FUNCTIONS[name](ws, res, out)
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - recorded and re-raised
        res.error = f"{type(exc).__name__}: {exc}"
        failure = exc
    res.seconds = time.perf_counter() - t
    io.write_json(out / "summary.json", res.summary())
    io.write_json(out / "manifest.json", {"stage": name, "command": command, "config_hash": cfg.digest(),
                                          "seed": cfg.seed, "versions": versions(),
                                          "timings": {"seconds": res.seconds, **res.timings}})
    if failure is not None:
        if isinstance(failure, StageError):
            raise failure
        raise StageError(name, res.error) from failure
    return res


# ---------------------------------------------------------------------------
# report
# ---------------------------------------------------------------------------
def collate(out_root: Path) -> dict:
    """Gather every ``*/summary.json`` below ``out_root`` into one report."""
    import json

    stages = {}
    for path in sorted(Path(out_root).glob("*/summary.json")):
        data = json.loads(path.read_text())
        stages[path.parent.name] = data
    failed = [f"{st}:{c['name']}" for st, d in stages.items() for c in d["checks"] if not c["passed"]]
    failed += [f"{st}:error" for st, d in stages.items() if d.get("error")]
    return {"stages": stages, "failed": failed, "passed": bool(stages) and not failed}


def write_report(out_root: Path, report: dict) -> None:
    out_root = Path(out_root)
    io.write_json(out_root / "report.json", report)
    rows = []
    for st, d in report["stages"].items():
        for c in d["checks"]:
            v = c["value"]
            rows.append([st, c["name"], v if isinstance(v, (int, float, bool, str)) else io.dumps(v).replace("\n", ""),
                         c["requirement"], "pass" if c["passed"] else "FAIL"])
        if d.get("error"):
            rows.append([st, "error", d["error"], "no error", "FAIL"])
    _write_csv(out_root / "report.csv", ["stage", "check", "value", "requirement", "status"], rows)
