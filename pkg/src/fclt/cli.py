"""Command line runner: ``fclt <command> --config <path> [options]``.

Exit codes: 0 success, 1 a verification failed, 2 configuration or
input error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import traceback

import numpy as np

from . import bounds, harness, models, stein
from .core import ModelValidationError, PathGrid, RngStream
from .functionals import functional_from_dict, make_chi, CylinderFunctional

COMMANDS = ("bound", "simulate", "verify", "rate", "stein-check")
RATE_SLOPE = (-0.55, -0.35)
RATE_SPREAD = 0.10


class ConfigError(ValueError):
    pass


def load_config(path):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from None
    if not isinstance(cfg, dict):
        raise ConfigError("config must be a JSON object")
    return cfg


def _model(cfg):
    if "model" not in cfg:
        raise ConfigError("config needs a 'model' descriptor")
    try:
        return models.model_from_dict(cfg["model"])
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad model descriptor: {exc}") from None
    except ModelValidationError as exc:
        raise ConfigError(f"invalid model: {'; '.join(exc.violations)}") from None


def _functional(cfg, required=True):
    d = cfg.get("functional")
    if d is None:
        if required:
            raise ConfigError("config needs a 'functional' descriptor")
        return None
    try:
        return functional_from_dict(d)
    except (KeyError, TypeError) as exc:
        raise ConfigError(f"bad functional descriptor: {exc}") from None


def _regime(model, cfg, g=None, n=None):
    R = int(cfg.get("refinement", 4))
    if isinstance(model, models.ScansModel):
        if n is not None:
            model = models.ScansModel(model.p, model.m, n, model.a, model.support, model.probs)
        return models.scans_regime(model, cfg.get("regime", "block"), g, R)
    if isinstance(model, models.UStatModel):
        if n is not None:
            model = models.UStatModel(model.kernel, n, model.sampler)
        return models.ustat_regime(model, R)
    if n is not None:
        model = models.IidModel(model.sigma, n, model.law)
    return models.iid_regime(model, R, cfg.get("variant", "proof"))


def _emit(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def cmd_bound(cfg):
    model = _model(cfg)
    g = _functional(cfg, required=False)
    report = _regime(model, cfg, g).report
    print(f"regime {report.regime}, norm class {report.norm_class}")
    for t in report.terms:
        se = f" ± {t.se:.3g}" if t.se else ""
        tag = "" if t.weighted else " (unweighted)"
        print(f"  {t.name:<20} {t.paper_id:<24} {t.value:.6g}{se}{tag}")
    if g is not None:
        print(f"total with certified norm: {bounds.total(report, g):.6g}")
    else:
        print(f"total at unit norm: {report.total:.6g}")
    if cfg.get("format") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["name", "value", "se", "paper_id", "weighted"])
        for t in report.terms:
            w.writerow([t.name, t.value, t.se, t.paper_id, t.weighted])
        _emit(buf.getvalue(), cfg.get("out"))
    else:
        _emit(report.to_json(indent=2), cfg.get("out"))
    return 0


def cmd_simulate(cfg):
    model = _model(cfg)
    regime = _regime(model, cfg)
    size = int(cfg.get("samples", 8))
    gen = RngStream(int(cfg.get("seed", 0))).generator()
    paths = regime.sampler_y(gen, size)
    end = paths.values[..., -1, :]
    print(f"{size} paths of {regime.name}, n={regime.n}, grid N={paths.N}")
    print(f"  mean Y(1) = {np.round(end.mean(axis=0), 6).tolist()}")
    if cfg.get("format") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["path", "q", "t"] + [f"y{k}" for k in range(paths.p)])
        for b in range(size):
            for q in range(paths.N + 1):
                w.writerow([b, q, q / paths.N] + paths.values[b, q].tolist())
        _emit(buf.getvalue(), cfg.get("out"))
    else:
        _emit(json.dumps(paths.to_dict()), cfg.get("out"))
    return 0


def cmd_verify(cfg):
    model = _model(cfg)
    g = _functional(cfg)
    regime = _regime(model, cfg, g)
    try:
        rep = harness.verify(g, regime, int(cfg.get("samples", 20_000)), int(cfg.get("seed", 0)))
    except harness.NormClassMismatch as exc:
        raise ConfigError(str(exc)) from None
    row = rep.to_row()
    print(", ".join(f"{k}={v}" for k, v in row.items()))
    if cfg.get("format") == "csv":
        _emit(harness.reports_to_csv([rep]), cfg.get("out"))
    else:
        _emit(harness.reports_to_json([rep]), cfg.get("out"))
    return 0 if rep.passed else 1


def cmd_rate(cfg):
    model = _model(cfg)
    g = _functional(cfg, required=False)
    ns = [int(x) for x in cfg.get("ns", [2 ** k for k in range(6, 15)])]
    if any(b <= a for a, b in zip(ns, ns[1:])):
        raise ConfigError("n-grid must be strictly increasing")
    totals = [_regime(model, cfg, g, n).report.total for n in ns]
    fit = harness.rate_fit(list(zip(ns, totals)))
    norm = [math.sqrt(n) * t / math.sqrt(math.log(n)) for n, t in zip(ns, totals)]
    spread = max(norm) / min(norm) - 1.0
    ok = RATE_SLOPE[0] <= fit.slope <= RATE_SLOPE[1] and spread < RATE_SPREAD
    for n, t in zip(ns, totals):
        print(f"  n={n:<8d} total={t:.6g}")
    print(f"slope {fit.slope:.4f} (r2 {fit.r2:.4f}), spread of √n·total/√log n {spread:.3%}: "
          f"{'pass' if ok else 'FAIL'}")
    doc = {"ns": ns, "totals": totals, "slope": fit.slope, "intercept": fit.intercept,
           "r2": fit.r2, "spread": spread, "pass": ok}
    if cfg.get("format") == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "total"])
        w.writerows(zip(ns, totals))
        _emit(buf.getvalue(), cfg.get("out"))
    else:
        _emit(json.dumps(doc, indent=2), cfg.get("out"))
    return 0 if ok else 1


def cmd_stein_check(cfg):
    """Stationary decomposition, Stein null and generator-semigroup checks
    on a two-summand, two-coordinate Gaussian model."""
    from .core import DependencyModel

    seed = int(cfg.get("seed", 0))
    samples = int(cfg.get("samples", 100_000))
    stream = RngStream(seed)
    a = stream.generator(chunk=10 ** 6).standard_normal((4, 4))
    cov = a @ a.T / 4 + 0.1 * np.eye(4)
    dm = DependencyModel(2, 2, (2, 2), (frozenset({0, 1}),) * 2)
    N = 2
    results = []
    for j, v in enumerate((0.0, 0.7, 50.0)):
        rep = stein.check_stationary_decomposition(dm, cov, 0.3, v, samples, stream.split(j), N)
        results.append((f"stationary v={v}", rep.passed, rep.max_deviation))
    dn = stein.gaussian_dn_sampler(cov, dm, N)
    for j, name in enumerate(("linear", "square")):
        f = CylinderFunctional(make_chi(name, 2), [0.5, 1.0], [0, 1])
        est = stein.stein_null_check(f, dn, samples, stream.split(10 + j))
        results.append((f"stein null {name}", abs(est.mean) <= 3 * est.se, est.mean))
    f = CylinderFunctional(make_chi("cos-mean", 2), [0.5, 1.0], [0, 1])
    w = PathGrid(np.array([[0.0, 0.0], [0.3, -0.2], [0.5, 0.4]]))
    gc = stein.generator_semigroup_check(f, w, dn, samples, stream.split(20))
    results.append(("generator vs semigroup", gc.passed, gc.extrapolated - gc.generator.mean))
    for name, ok, val in results:
        print(f"  {name:<26} {'pass' if ok else 'FAIL'}  ({val:.3g})")
    doc = [{"check": n, "pass": bool(o), "value": float(v)} for n, o, v in results]
    _emit(json.dumps(doc, indent=2), cfg.get("out"))
    return 0 if all(o for _, o, _ in results) else 1


HANDLERS = {"bound": cmd_bound, "simulate": cmd_simulate, "verify": cmd_verify,
            "rate": cmd_rate, "stein-check": cmd_stein_check}


def build_parser():
    ap = argparse.ArgumentParser(prog="fclt", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=COMMANDS)
    ap.add_argument("--config", required=True)
    ap.add_argument("--seed", type=int)
    ap.add_argument("--samples", type=int)
    ap.add_argument("--out")
    ap.add_argument("--format", choices=("csv", "json"))
    return ap


def _origin(exc):
    mods = [f.filename for f in traceback.extract_tb(exc.__traceback__) if "fclt" in f.filename]
    if not mods:
        return "fclt"
    return "fclt." + mods[-1].rsplit("/", 1)[-1].removesuffix(".py")


def run(cfg, command):
    if command not in HANDLERS:
        raise ConfigError(f"unknown command {command!r}")
    return HANDLERS[command](cfg)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        for key in ("seed", "samples", "out", "format"):
            val = getattr(args, key)
            if val is not None:
                cfg[key] = val
        return run(cfg, args.command)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, KeyError, TypeError) as exc:
        print(f"error in {_origin(exc)}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
