"""Scenario runner: named experiments that write CSV traces and JSON summaries.

    epholonomy run --scenario ep-minus --rho 1.0 --steps 20000 --out out/
    epholonomy sweep --scenario ep-minus --vary rho=0.2,0.5,1.0,1.5,1.9 --out sweep/

Exit codes: 0 all checks pass, 2 a check failed, 3 invalid config,
4 numerical abort (EP clearance, coarse steps, lost positivity).
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path as FsPath

import numpy as np

from . import model, paths
from .errors import DomainError, EPHolonomyError, NumericalAbort
from .generators import solve_generator_pair
from .metric import joint_transport
from .model import MODEL, BasePoint, flatness_residuals
from .transport import (
    EP_CLEARANCE,
    classify_holonomy,
    integrate_transport,
    lambda_trace,
    reference_power,
)

log = logging.getLogger(__name__)

EXIT_PASS = 0
EXIT_CHECK_FAILED = 2
EXIT_INVALID_CONFIG = 3
EXIT_NUMERICAL_ABORT = 4

SCENARIOS = (
    "no-ep",
    "ep-minus",
    "ep-plus",
    "both-eps",
    "winding",
    "gate-cycle",
    "flatness-scan",
    "k-check",
    "metric-check",
)
LAMBDA_TOL = 1e-7
SOLVER_TOL = 1e-9
RESIDUAL_TOL = 1e-10


class ConfigError(EPHolonomyError, ValueError):
    pass


@dataclass(frozen=True)
class ScenarioConfig:
    scenario: str
    r: float | None = None  # origin circle radius; >1 for both-eps (default 3)
    rho: float = 1.0
    winding: int = 1
    steps: int = 20000
    time_slice: float = 0.0
    tolerance: float = 1e-6
    output_dir: str = "out"
    seed: int = 0
    grid: int = 41
    trace_stride: int = 20
    record_time: bool = True

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise ConfigError(f"unknown scenario {self.scenario!r}; choose from {', '.join(SCENARIOS)}")
        if self.steps < 1000:
            raise ConfigError(f"steps must be >= 1000, got {self.steps}")
        if not self.tolerance > 0:
            raise ConfigError(f"tolerance must be positive, got {self.tolerance}")
        if self.grid < 2:
            raise ConfigError("grid must be >= 2")
        if self.trace_stride < 1:
            raise ConfigError("trace_stride must be >= 1")
        if self.scenario == "both-eps":
            if not self.radius > 1:
                raise ConfigError(f"both-eps needs a radius > 1, got {self.radius}")
        elif self.scenario in ("no-ep", "metric-check"):
            if not 0 < self.radius < 1:
                raise ConfigError(f"r must lie in (0, 1), got {self.radius}")
        if self.scenario in ("ep-minus", "ep-plus", "winding", "gate-cycle", "metric-check"):
            if not 0 < self.rho < 2:
                raise ConfigError(f"rho must lie in (0, 2), got {self.rho}")

    @property
    def radius(self) -> float:
        if self.r is not None:
            return self.r
        return 3.0 if self.scenario == "both-eps" else 0.5

    def params(self) -> dict:
        d = dataclasses.asdict(self)
        for key in ("scenario", "output_dir", "record_time"):
            d.pop(key)
        d["r"] = self.radius
        return d

    def key(self) -> str:
        payload = json.dumps({"scenario": self.scenario, **self.params()}, sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()[:16]


@dataclass
class Check:
    name: str
    passed: bool
    value: float | None
    tol: float | None

    def to_dict(self):
        return {"name": self.name, "pass": self.passed, "value": self.value, "tol": self.tol}

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["pass"], d["value"], d["tol"])


@dataclass
class RunSummary:
    scenario: str
    params: dict
    holonomy: np.ndarray | None = None
    label: str | None = None
    distance: float | None = None
    max_lambda_dev: float | None = None
    est_error: float | None = None
    wall_time_s: float = 0.0
    checks: list[Check] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    def check(self, name: str, value: float, tol: float, passed: bool | None = None) -> None:
        """Record a check; passes when ``value < tol`` unless ``passed`` is given."""
        value = float(value)
        ok = value < tol if passed is None else passed
        self.checks.append(Check(name, bool(ok), value, float(tol)))

    def to_dict(self) -> dict:
        hol = None
        if self.holonomy is not None:
            hol = {"re": self.holonomy.real.tolist(), "im": self.holonomy.imag.tolist()}
        return {
            "scenario": self.scenario,
            "params": self.params,
            "holonomy": hol,
            "classification": {"label": self.label, "distance": self.distance},
            "max_lambda_dev": self.max_lambda_dev,
            "est_error": self.est_error,
            "wall_time_s": self.wall_time_s,
            "checks": [c.to_dict() for c in self.checks],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunSummary":
        hol = d.get("holonomy")
        if hol is not None:
            hol = np.array(hol["re"]) + 1j * np.array(hol["im"])
        return cls(
            scenario=d["scenario"],
            params=d["params"],
            holonomy=hol,
            label=d["classification"]["label"],
            distance=d["classification"]["distance"],
            max_lambda_dev=d["max_lambda_dev"],
            est_error=d["est_error"],
            wall_time_s=d["wall_time_s"],
            checks=[Check.from_dict(c) for c in d["checks"]],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunSummary":
        return cls.from_dict(json.loads(text))


def _fmt(v) -> str:
    return f"{v:.16e}"


TRACE_COLUMNS = (
    ["s", "theta", "x", "y"]
    + [f"U{a}{b}_{part}" for a in range(2) for b in range(2) for part in ("re", "im")]
    + ["lambda_re", "lambda_im", "lambda_ref_re", "lambda_ref_im", "xi_offdiag"]
)


def write_trace(fname, result, theta, lam=None, lam_ref=None, offdiag=None, stride: int = 1) -> None:
    n = len(result.s)
    idx = list(range(0, n, stride))
    if idx[-1] != n - 1:
        idx.append(n - 1)
    nan = float("nan")
    with open(fname, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for k in idx:
            U = result.U[k]
            row = [result.s[k], theta[k], result.coords[k, 1], result.coords[k, 2]]
            for a in range(2):
                for b in range(2):
                    row += [U[a, b].real, U[a, b].imag]
            row += [lam[k].real, lam[k].imag] if lam is not None else [nan, nan]
            row += [lam_ref[k].real, lam_ref[k].imag] if lam_ref is not None else [nan, nan]
            row.append(offdiag[k] if offdiag is not None else nan)
            w.writerow([_fmt(v) for v in row])


def _loop_path(cfg: ScenarioConfig) -> tuple[paths.Path, int]:
    """Path and the expected power of I for a loop scenario."""
    sc = cfg.scenario
    if sc == "no-ep":
        return paths.LoopSpec("circle_origin", cfg.radius, 1, cfg.time_slice).path(), 0
    if sc == "ep-minus":
        return paths.LoopSpec("circle_ep_minus", cfg.rho, 1, cfg.time_slice).path(), 1
    if sc == "ep-plus":
        return paths.LoopSpec("circle_ep_plus", cfg.rho, 1, cfg.time_slice).path(), -1
    if sc == "both-eps":
        return paths.circle((0.0, 0.0), cfg.radius, cfg.time_slice), 2
    if sc in ("winding", "gate-cycle"):
        w = cfg.winding if sc == "winding" else 4
        return paths.LoopSpec("circle_ep_minus", cfg.rho, w, cfg.time_slice).path(), w
    raise ConfigError(f"{sc} is not a loop scenario")


def _lambda_reference(cfg: ScenarioConfig, theta: np.ndarray):
    sc = cfg.scenario
    if sc == "no-ep":
        return model.lambda_exact_O(cfg.radius, theta)
    if sc in ("ep-minus", "winding", "gate-cycle"):
        return model.lambda_ref_minus(cfg.rho, theta)
    if sc == "ep-plus":
        # the generator along gamma_+ is the negative of the one along gamma_-
        return 1 / model.lambda_ref_minus(cfg.rho, theta)
    return None


def _run_loop(cfg: ScenarioConfig, summary: RunSummary, out: FsPath | None) -> None:
    path, power = _loop_path(cfg)
    res = integrate_transport(path, steps=cfg.steps)
    summary.holonomy = res.holonomy
    summary.est_error = res.est_error
    cls = classify_holonomy(res.holonomy, cfg.tolerance)
    summary.label = cls.label
    summary.distance = float(np.linalg.norm(res.holonomy - reference_power(power)))
    # loop angle; reversed traversal runs it backwards
    theta = np.sign(cfg.winding) * res.s if cfg.scenario == "winding" else res.s

    lam = lam_ref = off = None
    fixed_slice = cfg.time_slice == 0.0
    if fixed_slice:
        summary.check("holonomy_distance", summary.distance, cfg.tolerance)
    if fixed_slice and cfg.scenario != "both-eps":
        trace = lambda_trace(res)
        lam, off = trace.values, trace.offdiag
        lam_ref = _lambda_reference(cfg, theta)
        summary.max_lambda_dev = float(np.max(np.abs(lam - lam_ref)))
        summary.check("lambda_vs_reference", summary.max_lambda_dev, LAMBDA_TOL)
    det_dev = float(np.max(np.abs(np.linalg.det(res.U) - 1)))
    summary.check("det_U_is_one", det_dev, 1e-8)

    if cfg.scenario == "gate-cycle":
        psi0 = np.array([1.0, 0.0], dtype=complex)
        one = model.I_HOL @ psi0
        expected = [psi0, one, -psi0, -one, psi0]
        for k in range(1, 5):
            j = int(np.argmin(np.abs(res.s - 2 * math.pi * k)))
            got = res.U[j] @ psi0
            summary.check(f"gate_step_{k}", np.linalg.norm(got - expected[k]), max(cfg.tolerance, 1e-5))

    if out is not None:
        write_trace(out / "trace.csv", res, theta, lam, lam_ref, off, cfg.trace_stride)


def report_flatness(
    bounds: tuple[float, float, float, float] = (-2.0, 2.0, -2.0, 2.0),
    grid: int = 41,
    t: float = 0.0,
    fname=None,
    clearance: float = EP_CLEARANCE,
) -> np.ndarray:
    """Curvature residuals on a grid, skipping points within ``clearance`` of an EP.

    Returns rows (x, y, r_tx, r_ty, r_xy, ep_distance) with NaN residuals for
    skipped points; the CSV marks them with ``skip``.
    """
    if grid < 2:
        raise ConfigError("grid must be >= 2")
    x0, x1, y0, y1 = bounds
    X, Y = np.meshgrid(np.linspace(x0, x1, grid), np.linspace(y0, y1, grid), indexing="ij")
    x, y = X.ravel(), Y.ravel()
    dist = MODEL.ep_locus().distance(np.stack([x, y], axis=-1))
    ok = dist >= clearance
    rows = np.full((len(x), 6), np.nan)
    rows[:, 0], rows[:, 1], rows[:, 5] = x, y, dist
    if ok.any():
        r_tx, r_ty, r_xy = flatness_residuals(x[ok], y[ok], t)
        rows[ok, 2], rows[ok, 3], rows[ok, 4] = r_tx, r_ty, r_xy
    if fname is not None:
        with open(fname, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "residual_tq_x", "residual_tq_y", "residual_xy", "distance_to_nearest_EP"])
            for row, keep in zip(rows, ok):
                cells = [_fmt(v) for v in row]
                if not keep:
                    cells[2:5] = ["skip"] * 3
                w.writerow(cells)
    return rows


def _run_flatness(cfg, summary, out):
    rows = report_flatness(grid=cfg.grid, t=cfg.time_slice, fname=None if out is None else out / "flatness.csv")
    res = rows[:, 2:5]
    worst = float(np.nanmax(res)) if np.isfinite(res).any() else 0.0
    summary.check("max_curvature_residual", worst, cfg.tolerance)


def random_admissible_points(n: int, seed: int, box: float = 2.0, exclusion: float = 0.05) -> np.ndarray:
    rng = np.random.default_rng(seed)
    pts = []
    locus = MODEL.ep_locus()
    while len(pts) < n:
        p = rng.uniform(-box, box, size=2)
        if locus.distance(p) >= exclusion:
            pts.append(p)
    return np.array(pts)


def _run_k_check(cfg, summary, out):
    pts = random_admissible_points(1000, cfg.seed)
    worst_closed = worst_res = 0.0
    rows = []
    for x, y in pts:
        p = BasePoint(cfg.time_slice, (x, y))
        for i, closed in ((0, model.kx_closed), (1, model.ky_closed)):
            pair = solve_generator_pair(MODEL, i, p)
            k0 = closed(x, y, 0.0)
            k1 = closed(x, y, 1.0) - k0
            dev = max(np.linalg.norm(pair.K0 - k0), np.linalg.norm(pair.K1 - k1))
            r1, r2 = pair.residuals(MODEL)
            worst_closed = max(worst_closed, dev)
            worst_res = max(worst_res, r1, r2)
            rows.append((x, y, i, dev, r1, r2))
    summary.check("solver_vs_closed_form", worst_closed, SOLVER_TOL)
    summary.check("determining_residual", worst_res, RESIDUAL_TOL)
    if out is not None:
        with open(out / "k_check.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y", "direction", "closed_form_dev", "residual_commute", "residual_relation"])
            for x, y, i, dev, r1, r2 in rows:
                w.writerow([_fmt(x), _fmt(y), i, _fmt(dev), _fmt(r1), _fmt(r2)])


def _run_metric_check(cfg, summary, out):
    loops = {
        "origin": paths.circle_origin(cfg.radius, cfg.time_slice),
        "ep_minus": paths.circle_ep_minus(cfg.rho, cfg.time_slice),
        "ep_plus": paths.circle_ep_plus(cfg.rho, cfg.time_slice),
    }
    for name, path in loops.items():
        j = joint_transport(path, psi0=[1.0, 0.0], steps=cfg.steps)
        summary.check(f"{name}_norm_drift", j.norm.max_deviation, cfg.tolerance)
        summary.check(f"{name}_metric_positive", j.metric.min_eigenvalue, 0.0, passed=j.metric.min_eigenvalue > 0)
        summary.check(f"{name}_holonomy_consistency", j.consistency, 5 * j.est_error)
        summary.est_error = max(summary.est_error or 0.0, j.est_error)


def run_scenario(cfg: ScenarioConfig, write: bool = True) -> RunSummary:
    """Run one scenario, optionally writing its files into ``cfg.output_dir``."""
    summary = RunSummary(cfg.scenario, cfg.params())
    out = None
    if write:
        out = FsPath(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    if cfg.scenario == "flatness-scan":
        _run_flatness(cfg, summary, out)
    elif cfg.scenario == "k-check":
        _run_k_check(cfg, summary, out)
    elif cfg.scenario == "metric-check":
        _run_metric_check(cfg, summary, out)
    else:
        _run_loop(cfg, summary, out)
    summary.wall_time_s = time.perf_counter() - start if cfg.record_time else 0.0
    if out is not None:
        (out / "summary.json").write_text(summary.to_json())
    return summary


def _sweep_one(cfg: ScenarioConfig) -> dict:
    try:
        s = run_scenario(cfg)
        return {"config": dataclasses.asdict(cfg), "summary": s.to_dict(),
                "exit_code": EXIT_PASS if s.passed else EXIT_CHECK_FAILED}
    except (NumericalAbort, ConfigError, DomainError) as exc:
        return {"config": dataclasses.asdict(cfg), "error": f"{type(exc).__name__}: {exc}",
                "exit_code": EXIT_NUMERICAL_ABORT if isinstance(exc, NumericalAbort) else EXIT_INVALID_CONFIG}


def sweep(configs: list[ScenarioConfig], output_dir, workers: int = 1) -> dict:
    """Run every config into ``output_dir/<config key>/`` and write ``index.json``.

    Per-run errors are recorded and the sweep continues. The index is written
    once, after all runs finish, in input order.
    """
    if not configs:
        raise ConfigError("empty sweep")
    root = FsPath(output_dir)
    root.mkdir(parents=True, exist_ok=True)
    placed = [dataclasses.replace(c, output_dir=str(root / c.key())) for c in configs]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_sweep_one, placed))
    else:
        results = [_sweep_one(c) for c in placed]
    index = {c.key(): r for c, r in zip(placed, results)}
    (root / "index.json").write_text(json.dumps(index, indent=2) + "\n")
    return index


# -- command line -----------------------------------------------------------

_FIELD_TYPES = {
    "scenario": str,
    "r": float,
    "rho": float,
    "winding": int,
    "steps": int,
    "time_slice": float,
    "tolerance": float,
    "output_dir": str,
    "seed": int,
    "grid": int,
    "trace_stride": int,
}
_ALIASES = {"t": "time_slice", "tol": "tolerance", "out": "output_dir"}


def read_config_file(fname) -> dict:
    """Flat ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, raw in enumerate(FsPath(fname).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{fname}:{n}: expected key = value")
        key, value = (part.strip() for part in line.split("=", 1))
        key = _ALIASES.get(key, key.replace("-", "_"))
        if key not in _FIELD_TYPES:
            raise ConfigError(f"{fname}:{n}: unknown key {key!r}")
        try:
            out[key] = _FIELD_TYPES[key](value)
        except ValueError as exc:
            raise ConfigError(f"{fname}:{n}: bad value for {key}: {value!r}") from exc
    return out


def _add_run_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scenario", choices=SCENARIOS)
    p.add_argument("--r", type=float, dest="r")
    p.add_argument("--rho", type=float)
    p.add_argument("--winding", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--t", type=float, dest="time_slice")
    p.add_argument("--tol", type=float, dest="tolerance")
    p.add_argument("--out", dest="output_dir")
    p.add_argument("--seed", type=int)
    p.add_argument("--grid", type=int)
    p.add_argument("--trace-stride", type=int, dest="trace_stride")
    p.add_argument("--config", help="flat key = value file; flags take precedence")
    p.add_argument("--no-timing", action="store_true", help="write wall_time_s = 0 for byte-stable output")


def _config_from_args(args) -> dict:
    merged = read_config_file(args.config) if args.config else {}
    for key in _FIELD_TYPES:
        value = getattr(args, key, None)
        if value is not None:
            merged[key] = value
    if "scenario" not in merged:
        raise ConfigError("no scenario given (use --scenario or a config file)")
    merged["record_time"] = not args.no_timing
    return merged


def _parse_vary(spec: str) -> tuple[str, list]:
    if "=" not in spec:
        raise ConfigError(f"--vary expects key=v1,v2,..., got {spec!r}")
    key, values = spec.split("=", 1)
    key = _ALIASES.get(key.strip(), key.strip().replace("-", "_"))
    if key not in _FIELD_TYPES or key in ("scenario", "output_dir"):
        raise ConfigError(f"cannot vary {key!r}")
    try:
        return key, [_FIELD_TYPES[key](v) for v in values.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"bad values in --vary {spec!r}") from exc


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="epholonomy", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run_flags(sub.add_parser("run", help="run one scenario"))
    sw = sub.add_parser("sweep", help="run a grid of scenarios")
    _add_run_flags(sw)
    sw.add_argument("--vary", action="append", default=[], help="key=v1,v2,... (repeatable; cartesian product)")
    sw.add_argument("--workers", type=int, default=1)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING)
    try:
        base = _config_from_args(args)
        if args.command == "run":
            summary = run_scenario(ScenarioConfig(**base))
            for c in summary.checks:
                print(f"{'PASS' if c.passed else 'FAIL'} {c.name}: {c.value:.3e} (tol {c.tol:.1e})")
            return EXIT_PASS if summary.passed else EXIT_CHECK_FAILED
        grid = [base]
        for spec in args.vary:
            key, values = _parse_vary(spec)
            grid = [{**g, key: v} for g in grid for v in values]
        out_root = base.get("output_dir", "out")
        index = sweep([ScenarioConfig(**g) for g in grid], out_root, args.workers)
        codes = [r["exit_code"] for r in index.values()]
        for key, r in index.items():
            print(f"{key} exit={r['exit_code']} {r.get('error', '')}".rstrip())
        return max(codes)
    except (ConfigError, DomainError) as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_INVALID_CONFIG
    except NumericalAbort as exc:
        print(f"numerical abort: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL_ABORT


if __name__ == "__main__":
    sys.exit(main())
