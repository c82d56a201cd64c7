"""Command-line interface: ``geospline <command> [options]``.

Every command writes one JSON report (to ``--out`` or stdout) that embeds the
fully resolved run configuration. ``--curves`` additionally writes a CSV table of
curve samples for plotting.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .bezier import SplineSpec
from .bezierfold import discrete_geodesic, discrete_mean, discrete_path_energy
from .io import (
    dumps_report,
    ingest_csv,
    ingest_hurdat2,
    intensity_class,
    spline_from_dict,
    spline_to_dict,
)
from .manifolds import Sphere, manifold_from_string
from .regression import FitOptions, fit_spline, normalize_groups
from .sasaki import sasaki_spline_mean
from .stats import hotelling_t2_permutation, log_coordinates, pga

COMMANDS = ("fit", "mean", "geodesic", "pga", "normalize", "test", "eval")


@dataclass
class RunConfig:
    input: list = field(default_factory=list)
    format: str = "csv"
    manifold: str | None = None
    degrees: list = field(default_factory=lambda: [3])
    closed: bool = False
    metric: str = "integral"
    ell: int = 2
    quadrature: int = 16
    t0: float | None = None
    seed: int = 0
    samples: int = 200
    max_iter: int = 500
    grad_tol: float = 1e-8
    method: str = "gauss_newton"
    permutations: int = 1000
    sasaki_steps: int = 100
    subjects: list = field(default_factory=list)
    spline: str | None = None
    t: list = field(default_factory=list)

    def validate(self):
        if self.format not in ("csv", "hurdat2"):
            raise ValueError(f"unknown format {self.format!r}")
        if self.metric not in ("integral", "sasaki"):
            raise ValueError(f"unknown metric {self.metric!r}")
        if self.ell < 1 or self.quadrature < 1 or self.samples < 2:
            raise ValueError("ell and quadrature must be >= 1 and samples >= 2")
        if self.permutations < 1 or self.sasaki_steps < 1:
            raise ValueError("permutations and sasaki_steps must be >= 1")
        if self.manifold is not None:
            manifold_from_string(self.manifold)
        self.degrees = [int(k) for k in self.degrees]
        self.spec  # validates the degree list

    @property
    def spec(self) -> SplineSpec:
        return SplineSpec(tuple(self.degrees), self.closed)

    @property
    def fit_options(self) -> FitOptions:
        return FitOptions(max_iter=self.max_iter, grad_tol=self.grad_tol, method=self.method)


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _str_list(text):
    return [x.strip() for x in text.split(",") if x.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    a = common.add_argument
    a("--input", action="append", help="input file; repeat for several groups")
    a("--format", choices=("csv", "hurdat2"))
    a("--manifold", help="euclidean:d or sphere:d (default: inferred from the data)")
    a("--degrees", type=_int_list, help="segment degrees, e.g. 3,3")
    a("--closed", action="store_true", help="closed (periodic) splines")
    a("--metric", choices=("integral", "sasaki"))
    a("--ell", type=int, help="number of steps of discrete geodesics")
    a("--quadrature", type=int, help="trapezoid subintervals per segment")
    a("--t0", type=float, help="reference time for normalize")
    a("--seed", type=int)
    a("--samples", type=int, help="curve samples per spline for --curves")
    a("--max-iter", dest="max_iter", type=int)
    a("--grad-tol", dest="grad_tol", type=float)
    a("--method", choices=("gradient_descent", "gauss_newton"))
    a("--permutations", type=int)
    a("--sasaki-steps", dest="sasaki_steps", type=int)
    a("--subjects", type=_str_list, help="comma-separated subject ids (geodesic uses two)")
    a("--spline", help="stored spline or fit report (eval)")
    a("--t", type=_float_list, help="comma-separated spline parameters (eval)")
    a("--config", help="JSON file with option values; command-line flags take precedence")
    a("--out", help="report path (default: stdout)")
    a("--curves", help="CSV path for curve samples")

    parser = argparse.ArgumentParser(prog="geospline", description="Bezier splines on manifolds")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    helps = {
        "fit": "fit one spline per subject",
        "mean": "mean spline of all subjects",
        "geodesic": "discrete geodesic between two subjects' splines",
        "pga": "principal geodesic analysis of the subjects' splines",
        "normalize": "remove group trends and move residuals to time t0",
        "test": "two-sample permutation test between two input files",
        "eval": "evaluate a stored spline",
    }
    for name in COMMANDS:
        sub.add_parser(name, parents=[common], help=helps[name])
    return parser


def resolve_config(ns: argparse.Namespace) -> RunConfig:
    values = {}
    if getattr(ns, "config", None):
        with open(ns.config, encoding="utf-8") as fh:
            values.update(json.load(fh))
    names = {f.name for f in fields(RunConfig)}
    unknown = set(values) - names
    if unknown:
        raise ValueError(f"unknown config keys: {', '.join(sorted(unknown))}")
    values.update({k: v for k, v in vars(ns).items() if k in names})
    cfg = RunConfig(**values)
    cfg.validate()
    return cfg


# -- helpers ------------------------------------------------------------------------


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("GEOSPLINE_THREADS", "1")))
    except ValueError:
        return 1


def _map(fn, items):
    items = list(items)
    n = _workers()
    if n == 1 or len(items) < 2:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(n) as pool:
        return list(pool.map(fn, items))


def _load(cfg: RunConfig, path):
    if cfg.format == "hurdat2":
        ds = ingest_hurdat2(path)
        if cfg.manifold is not None and manifold_from_string(cfg.manifold) != Sphere(2):
            raise ValueError("HURDAT2 tracks live on sphere:2")
        return ds
    return ingest_csv(path, cfg.manifold)


def _datasets(cfg, need=None):
    if not cfg.input:
        raise ValueError("--input is required")
    if need is not None and len(cfg.input) != need:
        raise ValueError(f"this command needs exactly {need} --input files")
    return [_load(cfg, p) for p in cfg.input]


def _unit_times(t):
    lo, hi = float(t[0]), float(t[-1])
    if hi <= lo:
        raise ValueError("a subject needs samples at two or more distinct times")
    return (t - lo) / (hi - lo), lo, hi


def _fit_all(cfg, ds):
    spec, opts, M = cfg.spec, cfg.fit_options, ds.manifold

    def one(item):
        sid, (t, q) = item
        tu, lo, hi = _unit_times(t)
        rep = fit_spline(M, tu, q, spec, opts)
        return sid, rep, (lo, hi)

    return _map(one, ds.items())


def _fit_entry(sid, rep, span, ds):
    entry = {
        "subject": sid,
        "n_samples": int(ds.subjects[sid][0].size),
        "t_range": list(span),
        "sse": rep.sse,
        "r2": rep.r2,
        "iterations": rep.iterations,
        "converged": rep.converged,
        "final_grad_norm": rep.final_grad_norm,
        "spline": spline_to_dict(rep.spline),
    }
    meta = ds.metadata.get(sid, {})
    if "max_wind" in meta:
        entry["peak_wind"] = float(np.max(meta["max_wind"]))
        entry["intensity_class"] = intensity_class(meta["max_wind"])
    if "span_days" in meta:
        entry["span_days"] = float(meta["span_days"])
    return entry


def _write_curves(path, rows, dim):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["subject", "t"] + [f"x{i}" for i in range(dim)])
        for sid, ts, pts in rows:
            for t, p in zip(ts, pts):
                w.writerow([sid, format(float(t), ".17g")] + [format(float(x), ".17g") for x in p])


def _curve(spline, n, lo=0.0, hi=None):
    """Samples of ``spline`` over its domain, labelled with times in [lo, hi]."""
    s = np.linspace(0.0, spline.domain_length, n)
    hi = spline.domain_length if hi is None else hi
    return lo + (hi - lo) * s / spline.domain_length, spline(s)


# -- commands -----------------------------------------------------------------------


def cmd_fit(cfg):
    (ds,) = _datasets(cfg, 1)
    fits = _fit_all(cfg, ds)
    curves = [(sid, *_curve(rep.spline, cfg.samples, *span)) for sid, rep, span in fits]
    result = {"manifold": str(ds.manifold), "subjects": [_fit_entry(sid, r, s, ds) for sid, r, s in fits]}
    return result, curves, ds.manifold.ambient_dim


def _mean_of(cfg, splines):
    if cfg.metric == "sasaki":
        return sasaki_spline_mean(splines, steps=cfg.sasaki_steps)
    return discrete_mean(splines, cfg.ell, per_segment=cfg.quadrature, map_fn=_map)


def cmd_mean(cfg):
    (ds,) = _datasets(cfg, 1)
    fits = _fit_all(cfg, ds)
    mean = _mean_of(cfg, [r.spline for _, r, _ in fits])
    result = {
        "manifold": str(ds.manifold),
        "n_subjects": len(fits),
        "mean": spline_to_dict(mean),
        "fits": [{"subject": sid, "sse": r.sse, "r2": r.r2} for sid, r, _ in fits],
    }
    return result, [("mean", *_curve(mean, cfg.samples))], ds.manifold.ambient_dim


def cmd_geodesic(cfg):
    (ds,) = _datasets(cfg, 1)
    ids = cfg.subjects or list(ds.subjects)[:2]
    if len(ids) != 2 or any(i not in ds.subjects for i in ids):
        raise ValueError("geodesic needs two existing subjects (use --subjects a,b)")
    sub = type(ds)(ds.manifold, {i: ds.subjects[i] for i in ids}, {})
    fits = _fit_all(cfg, sub)
    path = discrete_geodesic(fits[0][1].spline, fits[1][1].spline, cfg.ell, per_segment=cfg.quadrature)
    result = {
        "manifold": str(ds.manifold),
        "endpoints": ids,
        "energy": discrete_path_energy(path, cfg.quadrature),
        "energy_history": path.energy_history,
        "steps": [spline_to_dict(s) for s in path.steps],
    }
    curves = [(f"step{j}", *_curve(s, cfg.samples)) for j, s in enumerate(path.steps)]
    return result, curves, ds.manifold.ambient_dim


def cmd_pga(cfg):
    (ds,) = _datasets(cfg, 1)
    fits = _fit_all(cfg, ds)
    res = pga([r.spline for _, r, _ in fits], cfg.metric, cfg.ell, cfg.sasaki_steps, cfg.quadrature, map_fn=_map)
    ids = [sid for sid, _, _ in fits]
    result = {
        "manifold": str(ds.manifold),
        "metric": cfg.metric,
        "mean": spline_to_dict(res.mean),
        "variances": res.variances,
        "explained": res.explained(),
        "scores": {sid: res.scores[i] for i, sid in enumerate(ids)},
        "modes": [m.generators for m in res.modes],
    }
    classes = {e["subject"]: e["intensity_class"] for e in (_fit_entry(s, r, p, ds) for s, r, p in fits)
               if "intensity_class" in e}
    if classes:
        result["intensity_class"] = classes
    return result, [("mean", *_curve(res.mean, cfg.samples))], ds.manifold.ambient_dim


def cmd_normalize(cfg):
    if cfg.t0 is None:
        raise ValueError("normalize needs --t0")
    sets = _datasets(cfg)
    if len(sets) == 1:
        groups = list(sets[0].items())
    else:
        groups = []
        for path, ds in zip(cfg.input, sets):
            t = np.concatenate([v[0] for v in ds.subjects.values()])
            q = np.concatenate([v[1] for v in ds.subjects.values()])
            groups.append((Path(path).stem, (t, q)))
    M = sets[0].manifold
    if any(ds.manifold != M for ds in sets):
        raise ValueError("all inputs must live on the same manifold")
    out = normalize_groups(M, [g for _, g in groups], cfg.spec, cfg.t0, cfg.fit_options)
    result = {"manifold": str(M), "t0": cfg.t0, "groups": []}
    curves = []
    for (gid, (t, _)), g in zip(groups, out):
        result["groups"].append({
            "group": gid,
            "base_point": g.base,
            "sse": g.fit.sse,
            "r2": g.fit.r2,
            "spline": spline_to_dict(g.fit.spline),
            "residual_norms": np.linalg.norm(g.residuals, axis=-1),
            "normalized": g.points,
        })
        curves.append((gid, t, g.points))
    return result, curves, M.ambient_dim


def cmd_test(cfg):
    sets = _datasets(cfg, 2)
    M = sets[0].manifold
    if sets[1].manifold != M:
        raise ValueError("both groups must live on the same manifold")
    fits = [_fit_all(cfg, ds) for ds in sets]
    splines = [r.spline for f in fits for _, r, _ in f]
    mean, Z = log_coordinates(splines, cfg.metric, cfg.ell, cfg.sasaki_steps, cfg.quadrature, map_fn=_map)
    na = len(fits[0])
    rep = hotelling_t2_permutation(Z[:na], Z[na:], cfg.permutations, cfg.seed, workers=_workers())
    result = {
        "manifold": str(M),
        "metric": cfg.metric,
        "n_a": na,
        "n_b": len(fits[1]),
        "statistic": rep.statistic,
        "p_value": rep.p_value,
        "permutations": rep.permutations,
        "pooled_mean": spline_to_dict(mean),
    }
    return result, [], M.ambient_dim


def _stored_spline(cfg):
    if not cfg.spline:
        raise ValueError("eval needs --spline PATH")
    with open(cfg.spline, encoding="utf-8") as fh:
        doc = json.load(fh)
    if "control_points" in doc:
        return "spline", spline_from_dict(doc)
    entries = doc.get("result", doc).get("subjects")
    if not entries:
        raise ValueError(f"{cfg.spline} holds neither a spline nor a fit report")
    want = cfg.subjects[0] if cfg.subjects else entries[0]["subject"]
    for e in entries:
        if e["subject"] == want:
            return want, spline_from_dict(e["spline"])
    raise ValueError(f"subject {want!r} not found in {cfg.spline}")


def cmd_eval(cfg):
    sid, spline = _stored_spline(cfg)
    t = np.array(cfg.t, dtype=float) if cfg.t else np.linspace(0.0, spline.domain_length, cfg.samples)
    vals = spline(t)
    result = {
        "subject": sid,
        "spline": spline_to_dict(spline),
        "t": t,
        "values": vals,
    }
    return result, [(sid, t, vals)], spline.manifold.ambient_dim


HANDLERS = {
    "fit": cmd_fit,
    "mean": cmd_mean,
    "geodesic": cmd_geodesic,
    "pga": cmd_pga,
    "normalize": cmd_normalize,
    "test": cmd_test,
    "eval": cmd_eval,
}


def _execute(ns) -> dict:
    cfg = resolve_config(ns)
    result, curves, dim = HANDLERS[ns.command](cfg)
    if getattr(ns, "curves", None):
        _write_curves(ns.curves, curves, dim)
    return {"command": ns.command, "version": __version__, "config": asdict(cfg), "result": result}


def run(argv=None) -> dict:
    """Parse ``argv``, run the command and return the report document."""
    return _execute(build_parser().parse_args(argv))


def main(argv=None) -> int:
    ns = build_parser().parse_args(argv)
    try:
        report = _execute(ns)
    except Exception as exc:  # every failure is reported in machine-readable form
        err = {"error": {"command": ns.command, "type": type(exc).__name__, "message": str(exc)}}
        sys.stderr.write(dumps_report(err))
        return 1
    text = dumps_report(report)
    out = getattr(ns, "out", None)
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        try:
            sys.stdout.write(text)
            sys.stdout.flush()
        except BrokenPipeError:  # reader went away, e.g. piped into head
            os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
    return 0


if __name__ == "__main__":
    sys.exit(main())
