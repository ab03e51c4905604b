"""Command-line front end: ``fisdim <command> <config.json> [flags]``."""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import __version__
from . import expr as ex
from . import fif
from .dimension import (DEFAULT_MARGIN, analyze, default_dim_level, default_eval_level,
                        default_n_max)
from .errors import ConfigError, FisdimError, ValidationError
from .fif import FisSystem
from .grid import NodeGrid
from .oscillation import osc_vector
from .scaling import DEFAULT_REFINE, check_conditions, rho_sequence

__all__ = ["Config", "load", "parse_config", "main", "run"]

_REQUIRED = ("n_axis", "domain", "z", "S", "g", "h")
_OPTIONAL = ("lambda_S", "lambda_q", "refine", "eval_level", "n_max", "tol")
DEFAULT_TOL = 1e-8


@dataclass(frozen=True)
class Config:
    n_axis: int
    domain: tuple[float, float, float, float]
    z: np.ndarray
    S: str
    g: str
    h: str
    lambda_S: float | None = None
    lambda_q: float | None = None
    refine: int | None = None
    eval_level: int | None = None
    n_max: int | None = None
    tol: float | None = None

    def grid(self) -> NodeGrid:
        x0, xN, y0, yN = self.domain
        return NodeGrid(self.n_axis, x0, xN, y0, yN, self.z)

    def system(self) -> FisSystem:
        return FisSystem.from_strings(self.grid(), self.S, self.g, self.h,
                                      lambda_S=self.lambda_S, lambda_q=self.lambda_q)


def _reject_constant(name):
    raise ValueError(f"non-finite literal {name} is not JSON")


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return (_is_int(v) or isinstance(v, float)) and math.isfinite(v)


def parse_config(data) -> Config:
    """Validate a decoded JSON object; raise ``ConfigError`` listing every problem."""
    errors: list[tuple[str, str]] = []
    if not isinstance(data, dict):
        raise ConfigError([("<root>", "config must be a JSON object")])
    for key in sorted(set(data) - set(_REQUIRED) - set(_OPTIONAL)):
        errors.append((key, "unknown field"))
    for key in _REQUIRED:
        if key not in data:
            errors.append((key, "missing required field"))

    N = data.get("n_axis")
    if "n_axis" in data and not (_is_int(N) and N >= 2):
        errors.append(("n_axis", "must be an integer >= 2"))
        N = None

    dom = data.get("domain")
    if "domain" in data:
        if not (isinstance(dom, list) and len(dom) == 4 and all(_is_num(v) for v in dom)):
            errors.append(("domain", "must be [x0, xN, y0, yN] of finite numbers"))
            dom = None
        elif not (dom[1] > dom[0] and dom[3] > dom[2]):
            errors.append(("domain", "need x0 < xN and y0 < yN"))
        elif not math.isclose(dom[1] - dom[0], dom[3] - dom[2], rel_tol=1e-12, abs_tol=0.0):
            errors.append(("domain", "domain must be square (N=M >= 2 and |I|=|J|)"))

    z = data.get("z")
    if "z" in data:
        ok = (isinstance(z, list) and all(isinstance(r, list) for r in z)
              and all(_is_num(v) for r in z for v in r))
        if not ok:
            errors.append(("z", "must be a nested list of finite numbers"))
            z = None
        elif N is not None and (len(z) != N + 1 or any(len(r) != N + 1 for r in z)):
            errors.append(("z", "z must be (N+1)x(N+1)"))

    for key in ("S", "g", "h"):
        if key not in data:
            continue
        v = data[key]
        if not isinstance(v, str):
            errors.append((key, "must be an expression string"))
            continue
        try:
            ex.parse(v)
        except FisdimError as err:
            errors.append((key, str(err)))

    for key in ("lambda_S", "lambda_q", "tol"):
        v = data.get(key)
        if v is not None and not (_is_num(v) and v >= 0):
            errors.append((key, "must be a finite number >= 0"))
    if data.get("tol") == 0:
        errors.append(("tol", "must be > 0"))
    for key, lo in (("refine", 0), ("eval_level", 1), ("n_max", 1)):
        v = data.get(key)
        if v is not None and not (_is_int(v) and v >= lo):
            errors.append((key, f"must be an integer >= {lo}"))

    if errors:
        raise ConfigError(errors)
    cfg = Config(N, tuple(float(v) for v in dom), np.array(z, dtype=float),
                 data["S"], data["g"], data["h"],
                 **{k: data.get(k) for k in _OPTIONAL})
    try:
        cfg.grid()
    except (ValueError, FisdimError) as err:
        raise ConfigError([("z", str(err))]) from err
    return cfg


def load(path) -> Config:
    """Read a strict UTF-8 JSON config file."""
    try:
        text = Path(path).read_bytes().decode("utf-8")
    except OSError as err:
        raise ConfigError([("<file>", f"cannot read {path}: {err.strerror}")]) from err
    except UnicodeDecodeError as err:
        raise ConfigError([("<file>", f"not UTF-8: {err}")]) from err
    try:
        data = json.loads(text, parse_constant=_reject_constant)
    except ValueError as err:
        raise ConfigError([("<file>", f"invalid JSON: {err}")]) from err
    return parse_config(data)


# --------------------------------------------------------------------------
# Output helpers

def _clean(obj):
    """Make ``obj`` JSON-safe: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        return f if math.isfinite(f) else repr(f)
    return obj


def dumps(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, indent=2, allow_nan=False) + "\n"


def _csv(header: str, rows) -> str:
    lines = [header] + [",".join(v if isinstance(v, str) else
                                 (str(v) if isinstance(v, int) else f"{v:.17g}") for v in r)
                        for r in rows]
    return "\n".join(lines) + "\n"


class _Output:
    """Collects primary artifacts; writes them to ``--out`` or stdout."""

    def __init__(self, out: str | None, primary: str):
        self.out = Path(out) if out else None
        self.primary = primary
        self.files: dict[str, str] = {}

    def add(self, name: str, text: str):
        self.files[name] = text

    def flush(self, argv: list[str], started: float):
        if self.out is None:
            sys.stdout.write(self.files[self.primary])
            return
        self.out.mkdir(parents=True, exist_ok=True)
        for name, text in sorted(self.files.items()):
            (self.out / name).write_text(text, encoding="utf-8")
        meta = {"argv": argv, "version": __version__, "files": sorted(self.files),
                "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
                "elapsed_s": round(time.time() - started, 3)}
        (self.out / "meta.json").write_text(dumps(meta), encoding="utf-8")


# --------------------------------------------------------------------------
# Commands

def _settings(cfg: Config, args) -> dict:
    N = cfg.n_axis
    n_max = args.n_max or cfg.n_max or default_n_max(N)
    need = n_max
    if args.command == "osc":
        need = args.n + args.k
    fallback = (default_dim_level(N, n_max) if args.command == "dim"
                else default_eval_level(need))
    level = args.level or cfg.eval_level or fallback
    return {"n_max": n_max, "eval_level": level,
            "refine": cfg.refine if cfg.refine is not None else DEFAULT_REFINE,
            "tol": args.tol or cfg.tol or DEFAULT_TOL}


def cmd_validate(cfg: Config, args, out: _Output) -> int:
    sysm = cfg.system()
    report = fif.validate(sysm)
    conds = check_conditions(sysm.S, sysm.grid, lambda_S=report.lambda_S)
    out.add("validate.json", dumps({"validation": report.to_dict(),
                                    "conditions": conds.to_dict()}))
    if not report.ok:
        raise ValidationError("system failed validation", report.failures)
    return 0


def cmd_render(cfg: Config, args, out: _Output) -> int:
    st = _settings(cfg, args)
    gf = fif.evaluate(cfg.system(), st["eval_level"])
    out.add("heightmap.csv", gf.to_csv())
    return 0


def cmd_spectra(cfg: Config, args, out: _Output) -> int:
    st = _settings(cfg, args)
    sysm = cfg.system()
    seq = rho_sequence(sysm.S, sysm.grid, st["n_max"], st["refine"], st["tol"],
                       keep_matrices=out.out is not None)
    doc = seq.to_dict()
    doc["settings"] = {k: st[k] for k in ("n_max", "refine", "tol")}
    out.add("spectra.json", dumps(doc))
    for n, (up, low) in enumerate(seq.matrices, start=1):
        out.add(f"upper_n{n}.mtx", up.to_matrix_market())
        out.add(f"lower_n{n}.mtx", low.to_matrix_market())
    return 0


def cmd_dim(cfg: Config, args, out: _Output) -> int:
    st = _settings(cfg, args)
    rep = analyze(cfg.system(), st["eval_level"], st["n_max"], st["refine"], st["tol"])
    out.add("report.json", dumps(rep.to_dict()))
    out.add("report.txt", rep.to_text())
    N = rep.N
    out.add("boxcount.csv", _csv("n,log_count,n_log_N",
                                 [(n, math.log(c), n * math.log(N))
                                  for n, _, c in rep.boxcount.table]))
    out.add("osc_estimator.csv", _csv("n,e_n", list(enumerate(rep.osc_estimator_sequence, 1))))
    out.add("ratios.csv", _csv("p,r_p", rep.divergence.ratios))
    return 0


def cmd_osc(cfg: Config, args, out: _Output) -> int:
    st = _settings(cfg, args)
    if st["eval_level"] < args.n + args.k + DEFAULT_MARGIN:
        st["eval_level"] = args.n + args.k + DEFAULT_MARGIN
    gf = fif.evaluate(cfg.system(), st["eval_level"])
    out.add("oscvector.csv", osc_vector(gf, args.n, args.k).to_csv())
    return 0


COMMANDS = {
    "validate": (cmd_validate, "validate.json"),
    "render": (cmd_render, "heightmap.csv"),
    "spectra": (cmd_spectra, "spectra.json"),
    "dim": (cmd_dim, "report.json"),
    "osc": (cmd_osc, "oscvector.csv"),
}


class _JsonArgumentParser(argparse.ArgumentParser):
    def error(self, message):
        sys.stderr.write(dumps({"error": "UsageError", "message": message}))
        sys.exit(2)


def _parser() -> argparse.ArgumentParser:
    p = _JsonArgumentParser(prog="fisdim",
                                description="Box dimension of fractal interpolation surfaces.")
    p.add_argument("command", choices=sorted(COMMANDS))
    p.add_argument("config", help="JSON config file")
    p.add_argument("--level", type=int, help="evaluation grid level m")
    p.add_argument("--n-max", type=int, dest="n_max", help="largest matrix level")
    p.add_argument("--n", type=int, default=1, help="word length for osc")
    p.add_argument("--k", type=int, default=1, help="refinement depth for osc")
    p.add_argument("--out", help="directory for artifacts and meta.json")
    p.add_argument("--tol", type=float, help="spectral enclosure tolerance")
    p.add_argument("--version", action="version", version=f"fisdim {__version__}")
    return p


def _limit_threads():
    raw = os.environ.get("FISDIM_THREADS")
    if not raw:
        return None
    try:
        n = int(raw)
    except ValueError:
        raise ConfigError([("FISDIM_THREADS", f"not an integer: {raw!r}")])
    if n < 1:
        raise ConfigError([("FISDIM_THREADS", "must be >= 1")])
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def run(argv: list[str] | None = None) -> int:
    """Run one command; errors go to stderr as JSON and give exit code 1 (2 for usage)."""
    argv = list(sys.argv[1:] if argv is None else argv)
    args = _parser().parse_args(argv)
    started = time.time()
    try:
        limiter = _limit_threads()
        try:
            cfg = load(args.config)
            for flag in ("level", "n_max", "n", "k"):
                v = getattr(args, flag)
                if v is not None and v < (0 if flag == "k" else 1):
                    raise ConfigError([(f"--{flag.replace('_', '-')}", "out of range")])
            func, primary = COMMANDS[args.command]
            out = _Output(args.out, primary)
            try:
                code = func(cfg, args, out)
            finally:
                if out.files:
                    out.flush(argv, started)
        finally:
            if limiter is not None:
                limiter.unregister()
    except FisdimError as err:
        sys.stderr.write(dumps(err.to_dict()))
        return 1
    except (ValueError, OSError) as err:
        sys.stderr.write(dumps({"error": type(err).__name__, "message": str(err)}))
        return 1
    return code


def main() -> None:
    sys.exit(run())
