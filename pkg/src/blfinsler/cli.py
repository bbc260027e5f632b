"""Command-line front end.

Usage::

    blfinsler COMMAND --config experiment.ini [--out DIR] [--seed N]
              [--quadrature-resolution N] [--grid N] [--tolerance X]

The config is an INI file; values are parsed as JSON when possible
(numbers, lists, booleans) and kept as strings otherwise. Sections:

``[experiment]``   ``schema`` (must be 1), ``seed``, ``tolerance``
``[metric]``       source metric: ``kind``, ``dimension``, ``bounds`` and kind parameters
``[target_metric]`` target metric for map commands (defaults to ``[metric]``)
``[map]``          ``kind`` in identity / linear (``matrix``) / dilation (``a``) /
                   remark2 (``f``) / grid (``csv``), optional ``step``
``[quadrature]``   ``scheme``, ``resolution``
``[grid]``         ``resolution``, ``stencil``
``[params]``       command specific parameters

Every run writes ``report.json`` with a ``header`` (timestamp, flags) and a
deterministic ``body``. Exit status: 0 pass, 1 check failed, 2 bad config
or module error.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import os
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from . import binet_legendre as bl
from . import quadrature as quad
from .errors import ConfigurationError, FinslerError
from .finsler_core import Domain, MetricSpec, build_zoo_metric, check_axioms
from .maps import (blowup_isometry_test, christoffel_transform_residual, dilation_check,
                   distortion_at, grid_map, identity_map, dilation_map, linear_map,
                   pullback_residual, remark2_map)
from .metric_space import bilipschitz_check, distance
from .regularity import bl_regularity_probe

COMMANDS = ("bl-compute", "bl-exact", "distance", "bilipschitz", "isometry-check", "blowup",
            "qc-distortion", "christoffel-residual", "dilation-check", "holder-probe", "axioms")
SCHEMA_VERSION = 1
REPORT_VERSION = 1


@dataclass
class ExperimentConfig:
    command: str
    metric: dict
    target_metric: dict | None = None
    map: dict | None = None
    quadrature: dict = field(default_factory=dict)
    grid: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    seed: int = 0
    tolerance: float | None = None
    source: str = ""

    def to_dict(self) -> dict:
        return {"command": self.command, "metric": self.metric, "target_metric": self.target_metric,
                "map": self.map, "quadrature": self.quadrature, "grid": self.grid,
                "params": self.params, "seed": self.seed, "tolerance": self.tolerance}


def _value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text.strip()


def parse_config(text: str, command: str) -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigurationError(f"malformed config: {exc}") from None
    sec = {s: {k: _value(v) for k, v in cp.items(s)} for s in cp.sections()}
    exp = sec.get("experiment", {})
    if exp.get("schema", SCHEMA_VERSION) != SCHEMA_VERSION:
        raise ConfigurationError(f"unsupported config schema {exp.get('schema')}")
    if "metric" not in sec:
        raise ConfigurationError("config needs a [metric] section")
    unknown = set(sec) - {"experiment", "metric", "target_metric", "map", "quadrature", "grid", "params"}
    if unknown:
        raise ConfigurationError(f"unknown config sections {sorted(unknown)}")
    return ExperimentConfig(command, sec["metric"], sec.get("target_metric"), sec.get("map"),
                            sec.get("quadrature", {}), sec.get("grid", {}), sec.get("params", {}),
                            int(exp.get("seed", 0)), exp.get("tolerance"), text)


def metric_from(section: dict):
    s = dict(section)
    try:
        kind = s.pop("kind")
    except KeyError:
        raise ConfigurationError("metric section needs 'kind'") from None
    n = int(s.pop("dimension", len(s["bounds"]) if "bounds" in s else 2))
    bounds = s.pop("bounds", None)
    return build_zoo_metric(MetricSpec(kind, n, s, bounds))


def map_from(section: dict | None, source: Domain, target: Domain):
    s = dict(section or {"kind": "identity"})
    kind = s.get("kind", "identity")
    step = s.get("step")
    if kind == "identity":
        phi = identity_map(source, step)
    elif kind == "linear":
        phi = linear_map(s["matrix"], source, target, step)
    elif kind == "dilation":
        phi = dilation_map(float(s["a"]), source, target, step)
    elif kind == "remark2":
        phi = remark2_map(str(s.get("f", "t + 0.3*sin(t)")), source, target, step)
    elif kind == "grid":
        phi = load_grid_map(s["csv"], target, step)
    else:
        raise ConfigurationError(f"unknown map kind {kind!r}")
    return phi


def load_grid_map(path, target=None, step=None):
    """CSV with columns ``x1..xn, y1..yn`` on a full regular grid (any row order)."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    n = data.shape[1] // 2
    axes = [np.unique(data[:, k]) for k in range(n)]
    shape = tuple(len(a) for a in axes)
    if int(np.prod(shape)) != len(data):
        raise ConfigurationError("grid map CSV is not a full regular grid")
    idx = tuple(np.searchsorted(a, data[:, k]) for k, a in enumerate(axes))
    vals = np.empty(shape + (n,))
    vals[idx] = data[:, n:]
    return grid_map(axes, vals, target, step)


def rule_from(cfg: ExperimentConfig, F, overrides: dict):
    scheme = cfg.quadrature.get("scheme")
    res = overrides.get("quadrature_resolution") or cfg.quadrature.get("resolution")
    return quad.build(F.dimension, scheme, res, seed=cfg.seed, kinked=F.kind == "polyhedral")


def _grid(cfg, overrides, default):
    return int(overrides.get("grid") or cfg.grid.get("resolution", default))


def _pts(value, n):
    arr = np.asarray(value, dtype=float)
    return arr.reshape(-1, n)


def _csv(rows, header) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in r])
    return buf.getvalue()


# ----------------------------------------------------------------------------
# commands: each returns (passed, body, {filename: text})


def cmd_axioms(cfg, ov):
    F = metric_from(cfg.metric)
    tol = cfg.tolerance or 1e-9
    rep = check_axioms(F, int(cfg.params.get("samples", 1000)), cfg.seed, tol)
    return rep.passed, {"c0": F.c0, "reversible": F.reversible, **rep.to_dict()}, {}


def cmd_bl_compute(cfg, ov):
    F = metric_from(cfg.metric)
    q = rule_from(cfg, F, ov)
    res = _grid(cfg, ov, 5)
    fld = bl.bl_field(F, res, q)
    eig = np.linalg.eigvalsh(fld.tensors.reshape(-1, F.dimension, F.dimension))
    body = {"resolution": list(fld.resolution), "provenance": fld.provenance,
            "min_eigenvalue": float(eig.min()), "max_eigenvalue": float(eig.max()),
            "nodes": int(np.prod(fld.resolution)), "field_files": ["field.json", "field.csv"]}
    return True, body, {"field.json": bl.field_to_json(fld), "field.csv": bl.field_to_csv(fld)}


def cmd_bl_exact(cfg, ov):
    F = metric_from(cfg.metric)
    verts = cfg.params.get("vertices", F.params.get("vertices"))
    if verts is None:
        raise ConfigurationError("bl-exact needs a polyhedral metric or params.vertices")
    g = bl.bl_polyhedral_exact(verts)
    q = rule_from(cfg, F, ov)
    gq = bl.bl_tensor_at(F, F.domain.center, q)
    diff = float(np.max(np.abs(g - gq)))
    tol = cfg.tolerance or 1e-3
    return diff <= tol, {"exact": g.tolist(), "quadrature": gq.tolist(), "difference": diff,
                         "tolerance": tol, "quadrature_resolution": q.resolution}, {}


def cmd_distance(cfg, ov):
    F = metric_from(cfg.metric)
    p, q = cfg.params.get("p"), cfg.params.get("q")
    if p is None or q is None:
        raise ConfigurationError("distance needs params.p and params.q")
    stencil = int(cfg.grid.get("stencil", 16))
    r = distance(F, p, q, _grid(cfg, ov, 101), stencil)
    body = {"p": p, "q": q, "stencil": stencil, **r.to_dict()}
    expected = cfg.params.get("expected")
    passed = True
    if expected is not None:
        tol = cfg.tolerance or 0.005
        body["expected"] = expected
        body["relative_error"] = abs(r.value - expected) / max(abs(expected), 1e-300)
        passed = body["relative_error"] <= tol
    return passed, body, {"witness.csv": _csv(r.witness.tolist(),
                                              [f"x{i + 1}" for i in range(F.dimension)])}


def cmd_bilipschitz(cfg, ov):
    F = metric_from(cfg.metric)
    P = cfg.params
    rep = bilipschitz_check(F, P.get("C"), int(P.get("pairs", 1000)), cfg.seed,
                            float(P.get("slack", 0.05)), P.get("K"), _grid(cfg, ov, 41),
                            int(cfg.grid.get("stencil", 16)))
    return rep.passed, {"c0": F.c0, **rep.to_dict()}, {}


def _pair(cfg):
    F1 = metric_from(cfg.metric)
    F2 = metric_from(cfg.target_metric) if cfg.target_metric else F1
    phi = map_from(cfg.map, F1.domain, F2.domain)
    return F1, F2, phi


def _test_points(cfg, F1, phi):
    if "points" in cfg.params:
        return _pts(cfg.params["points"], F1.dimension)
    k = int(cfg.params.get("points_per_axis", 5))
    shrink = float(cfg.params.get("shrink", 0.9))
    return F1.domain.center + shrink * (F1.domain.lattice(k) - F1.domain.center)


def cmd_isometry(cfg, ov):
    F1, F2, phi = _pair(cfg)
    pts = _test_points(cfg, F1, phi)
    dirs = cfg.params.get("directions")
    res = [pullback_residual(F1, F2, phi, x, dirs) for x in pts]
    tol = cfg.tolerance or 1e-6
    worst = int(np.argmax(res))
    return max(res) <= tol, {"residuals": res, "max_residual": max(res), "tolerance": tol,
                             "worst_point": pts[worst].tolist(), "points": len(pts)}, {}


def cmd_blowup(cfg, ov):
    F1, F2, phi = _pair(cfg)
    x = cfg.params.get("x", F1.domain.center.tolist())
    ts = cfg.params.get("ts", [0.1, 0.05, 0.025])
    rep = blowup_isometry_test(F1, F2, phi, x, ts, cfg.params.get("directions"))
    min_order = float(cfg.params.get("min_order", 0.9))
    tol = cfg.tolerance or 1e-6
    body = {"x": x, **rep.to_dict(), "required_order": min_order,
            "limit_is_isometry": rep.linear_residual <= tol, "tolerance": tol}
    return rep.monotone and rep.min_order >= min_order, body, {}


def cmd_qc(cfg, ov):
    F1, F2, phi = _pair(cfg)
    pts = _test_points(cfg, F1, phi)
    out = [distortion_at(F1, F2, phi, x, cfg.params.get("directions")) for x in pts]
    tol = cfg.tolerance or 1e-9
    max_h = float(cfg.params.get("max_H", 1.0 + tol))
    Hs = [d.H for d in out]
    body = {"points": pts.tolist(), "H": Hs, "mu": [d.mu for d in out], "max_H": max(Hs),
            "bound": max_h}
    return max(Hs) <= max_h, body, {}


def cmd_christoffel(cfg, ov):
    F1, F2, phi = _pair(cfg)
    levels = int(cfg.params.get("levels", 3))
    base = _grid(cfg, ov, 11)
    q1, q2 = rule_from(cfg, F1, ov), rule_from(cfg, F2, ov)
    resolutions, residuals = [], []
    for k in range(levels):
        N = (base - 1) * 2 ** k + 1
        g1 = bl.bl_field(F1, N, q1)
        g2 = bl.bl_field(F2, N, q2)
        step = min(g1.spacing)
        residuals.append(christoffel_transform_residual(g1, g2, phi.with_step(step)))
        resolutions.append(N)
    orders = [float(np.log2(a / b)) if a > 0 and b > 0 else float("inf")
              for a, b in zip(residuals, residuals[1:])]
    min_order = float(cfg.params.get("min_order", 1.0))
    tol = cfg.tolerance or 1e-12
    passed = residuals[-1] <= tol or (len(orders) > 0 and min(orders) >= min_order)
    return passed, {"resolutions": resolutions, "residuals": residuals, "orders": orders,
                    "required_order": min_order, "tolerance": tol}, {}


def cmd_dilation(cfg, ov):
    F = metric_from(cfg.metric)
    a = float(cfg.params.get("a", (cfg.map or {}).get("a", 2.0)))
    phi = map_from(cfg.map or {"kind": "dilation", "a": a}, F.domain, F.domain)
    rep = dilation_check(F, phi, a, int(cfg.params.get("pairs", 20)), cfg.seed,
                         cfg.tolerance or 0.01, _grid(cfg, ov, 101), int(cfg.grid.get("stencil", 16)))
    return rep.passed, rep.to_dict(), {}


def cmd_holder(cfg, ov):
    F = metric_from(cfg.metric)
    q = rule_from(cfg, F, ov)
    alpha = float(cfg.params.get("alpha", 1.0))
    res = cfg.params.get("resolutions", [11, 21, 41])
    rep = bl_regularity_probe(F, alpha, res, q, int(cfg.params.get("pairs", 2000)), cfg.seed,
                              cfg.tolerance or 0.05)
    trace = _csv(zip(rep.resolutions, rep.seminorms, rep.sup_norms),
                 ["resolution", "seminorm", "sup_norm"])
    return rep.stable, rep.to_dict(), {"trace.csv": trace}


HANDLERS = {
    "axioms": cmd_axioms, "bl-compute": cmd_bl_compute, "bl-exact": cmd_bl_exact,
    "distance": cmd_distance, "bilipschitz": cmd_bilipschitz, "isometry-check": cmd_isometry,
    "blowup": cmd_blowup, "qc-distortion": cmd_qc, "christoffel-residual": cmd_christoffel,
    "dilation-check": cmd_dilation, "holder-probe": cmd_holder,
}


def _clean(obj):
    """Make a report body JSON-serialisable (numpy scalars/arrays, non-finite floats)."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else repr(v)
    return obj


def run(command: str, cfg: ExperimentConfig, out_dir: str, overrides: dict | None = None) -> int:
    """Execute one command and write its artifacts; returns the exit status."""
    overrides = overrides or {}
    os.makedirs(out_dir, exist_ok=True)
    header = {"report_version": REPORT_VERSION, "package_version": __version__,
              "timestamp": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "flags": overrides}
    body = {"command": command, "config": cfg.to_dict(), "seed": cfg.seed}
    status = 2
    files: dict = {}
    try:
        if command not in HANDLERS:
            raise ConfigurationError(f"unknown command {command!r}; expected one of {COMMANDS}")
        passed, result, files = HANDLERS[command](cfg, overrides)
        body.update(result=result, passed=bool(passed))
        status = 0 if passed else 1
    except FinslerError as exc:
        body.update(error={"type": type(exc).__name__, "message": str(exc)}, passed=False)
    except (KeyError, TypeError, ValueError) as exc:
        body.update(error={"type": "ConfigurationError", "message": f"{type(exc).__name__}: {exc}"},
                    passed=False)
    body["exit_status"] = status
    report = {"header": header, "body": _clean(body)}
    for name, text in files.items():
        bl._atomic_write(os.path.join(out_dir, name), text)
    bl._atomic_write(os.path.join(out_dir, "report.json"),
                     json.dumps(report, indent=1, sort_keys=True) + "\n")
    return status


def report_body_bytes(path) -> bytes:
    """Canonical bytes of a report body, for determinism checks."""
    with open(path) as fh:
        return json.dumps(json.load(fh)["body"], sort_keys=True).encode()


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="blfinsler", description=__doc__.split("\n")[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--out", default="out")
    ap.add_argument("--seed", type=int)
    ap.add_argument("--quadrature-resolution", type=int)
    ap.add_argument("--grid", type=int)
    ap.add_argument("--tolerance", type=float)
    args = ap.parse_args(argv)
    overrides = {k: v for k, v in vars(args).items()
                 if k in ("seed", "quadrature_resolution", "grid", "tolerance") and v is not None}
    try:
        with open(args.config) as fh:
            cfg = parse_config(fh.read(), args.command)
    except (OSError, ConfigurationError) as exc:
        print(f"blfinsler: configuration error: {exc}", file=sys.stderr)
        return 2
    if args.seed is not None:
        cfg.seed = args.seed
    if args.tolerance is not None:
        cfg.tolerance = args.tolerance
    status = run(args.command, cfg, args.out, overrides)
    with open(os.path.join(args.out, "report.json")) as fh:
        body = json.load(fh)["body"]
    if "error" in body:
        print(f"blfinsler: {body['error']['type']}: {body['error']['message']}", file=sys.stderr)
    else:
        print(f"{args.command}: {'PASS' if body['passed'] else 'FAIL'} -> {args.out}/report.json")
    return status


if __name__ == "__main__":
    sys.exit(main())
