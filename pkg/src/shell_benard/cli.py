"""Command-line front-end.

    shell-benard {spectrum,critical,reduce,evolve,friction} [--config PATH]
                 [--out DIR] [--seed N]

Each command reads an optional JSON config, merges it over documented
defaults, echoes the resolved settings into its output metadata and writes
results to ``--out`` (printing the JSON summary to stdout).  Exit codes:
0 success, 2 usage or configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import io
import json
import math
import os
import sys
from math import pi, sqrt

import numpy as np

from . import __version__
from .dynamics import (
    IntegrationError,
    NoAttractorError,
    ReducedState,
    attractor,
    integrate,
    logistic_norm,
    reconstruct,
)
from .harmonics import ResolutionError
from .reduction import (
    GalerkinReduction,
    StructuralError,
    closed_form_table,
    compare_tables,
    default_grid,
    reduced_model,
)
from .spectrum import (
    DegenerateCriticalPoint,
    PhysicalParams,
    critical_rayleigh,
    friction_ratio_for_pattern,
    scan_spectrum,
    write_spectrum_csv,
)

EXIT_OK, EXIT_USAGE, EXIT_NUMERIC = 0, 2, 3

DEFAULTS = {
    "spectrum": {
        "Pr": 1.0, "r": 2.0 / pi, "lambda": None, "sigma0": 0.0, "sigma1": 0.0,
        "l_min": 0, "l_max": 4, "n_min": 1, "n_max": 3, "m_all": False,
    },
    "critical": {"r": 2.0 / pi, "sigma0": 0.0, "sigma1": 0.0, "l_scan": None},
    "reduce": {"Pr": 1.0, "r": None, "l_c": 1, "n_z": 17, "atol": 1e-12},
    "evolve": {
        "Pr": 1.0, "r": None, "l_c": 1, "epsilon": 0.01, "x0": None,
        "t_end": None, "n_out": 201, "rtol": 1e-9, "atol": 1e-12,
        "attractor_samples": 32, "reconstruct": False, "n_z": 17,
    },
    "friction": {"a": 6.4e6, "h": 1.0e4, "l_c": 6, "sigma0": 1.0e4},
}


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _num(x: float) -> str:
    if not math.isfinite(x):
        return "null"
    return format(x, ".17g")


def dumps(obj, indent: int = 2, _level: int = 0) -> str:
    """JSON text with floats written to 17 significant digits.

    Non-finite floats become ``null``.  Keys are emitted in sorted order.
    """
    pad = " " * (indent * (_level + 1))
    end = " " * (indent * _level)
    if isinstance(obj, bool) or obj is None:
        return json.dumps(obj)
    if isinstance(obj, (int, np.integer)):
        return str(int(obj))
    if isinstance(obj, (float, np.floating)):
        return _num(float(obj))
    if isinstance(obj, str):
        return json.dumps(obj, ensure_ascii=False)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [
            f"{pad}{json.dumps(str(k), ensure_ascii=False)}: {dumps(v, indent, _level + 1)}"
            for k, v in sorted(obj.items(), key=lambda kv: str(kv[0]))
        ]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple, np.ndarray)):
        if len(obj) == 0:
            return "[]"
        items = [pad + dumps(v, indent, _level + 1) for v in obj]
        return "[\n" + ",\n".join(items) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _write(out_dir, name: str, text: str, binary: bool = False) -> None:
    if out_dir is None:
        return
    path = os.path.join(out_dir, name)
    if binary:
        with open(path, "wb") as fh:
            fh.write(text)
    else:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# config handling
# ---------------------------------------------------------------------------


def load_config(command: str, path: str | None) -> dict:
    cfg = dict(DEFAULTS[command])
    if path is None:
        return cfg
    try:
        with open(path, encoding="utf-8") as fh:
            user = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path!r}: {exc}") from exc
    if not isinstance(user, dict):
        raise ConfigError("config must be a JSON object")
    unknown = sorted(set(user) - set(cfg))
    if unknown:
        raise ConfigError(f"unknown config keys for {command!r}: {', '.join(unknown)}")
    cfg.update(user)
    return cfg


def _int(cfg, key, lo=None):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, int):
        raise ConfigError(f"{key} must be an integer")
    if lo is not None and v < lo:
        raise ConfigError(f"{key} must be >= {lo}")
    return v


def _float(cfg, key, positive=False, nonneg=False):
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"{key} must be a finite number")
    if positive and v <= 0:
        raise ConfigError(f"{key} must be > 0")
    if nonneg and v < 0:
        raise ConfigError(f"{key} must be >= 0")
    return float(v)


def _aspect_for(l_c: int) -> float:
    """Free-slip aspect ratio at which degree ``l_c`` is optimally selected."""
    return sqrt(2.0 * l_c * (l_c + 1.0)) / pi


def _params(cfg, lam=0.0) -> PhysicalParams:
    try:
        return PhysicalParams(
            Pr=_float(cfg, "Pr", positive=True),
            lam=lam,
            r=_float(cfg, "r", positive=True),
            sigma0=_float(cfg, "sigma0", nonneg=True) if "sigma0" in cfg else 0.0,
            sigma1=_float(cfg, "sigma1", nonneg=True) if "sigma1" in cfg else 0.0,
        )
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _resolve_r(cfg) -> None:
    l_c = _int(cfg, "l_c", lo=1)
    if cfg["r"] is None:
        cfg["r"] = _aspect_for(l_c)


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------


def cmd_spectrum(cfg, out_dir, seed):
    p = _params(cfg)
    crit = critical_rayleigh(p.r, p.sigma0, p.sigma1)
    lam = crit.lambda_c if cfg["lambda"] is None else _float(cfg, "lambda", nonneg=True)
    p = p.with_lambda(lam)
    l_range = range(_int(cfg, "l_min", 0), _int(cfg, "l_max", 0) + 1)
    n_range = range(_int(cfg, "n_min", 1), _int(cfg, "n_max", 0) + 1)
    rows = scan_spectrum(p, l_range, n_range, m_all=bool(cfg["m_all"]))
    buf = io.StringIO(newline="")
    write_spectrum_csv(rows, buf)
    _write(out_dir, "spectrum.csv", buf.getvalue())
    summary = {
        "command": "spectrum",
        "config": cfg,
        "lambda": lam,
        "lambda_c": crit.lambda_c,
        "rows": len(rows),
        "max_beta": max((e.beta for e in rows), default=None),
    }
    return summary


def cmd_critical(cfg, out_dir, seed):
    r = _float(cfg, "r", positive=True)
    s0 = _float(cfg, "sigma0", nonneg=True)
    s1 = _float(cfg, "sigma1", nonneg=True)
    l_scan = None if cfg["l_scan"] is None else _int(cfg, "l_scan", 1)
    crit = critical_rayleigh(r, s0, s1, l_scan=l_scan)
    return {
        "command": "critical",
        "config": cfg,
        "lambda_c": crit.lambda_c,
        "R_c": crit.R_c,
        "l_c": crit.l_c,
        "degenerate": crit.degenerate,
        "l_scan": crit.l_scan,
    }


def cmd_reduce(cfg, out_dir, seed):
    _resolve_r(cfg)
    l_c = cfg["l_c"]
    p = _params(cfg)
    crit = critical_rayleigh(p.r)
    if crit.degenerate:
        raise DegenerateCriticalPoint(f"degenerate critical point at r={p.r!r}")
    if crit.l_c != l_c:
        raise ConfigError(f"aspect ratio r={p.r!r} selects l_c={crit.l_c}, not {l_c}")
    p = p.with_lambda(crit.lambda_c)
    grid = default_grid(l_c, p.r, n_z=_int(cfg, "n_z", 2))
    red = GalerkinReduction(p, l_c, grid)
    model = reduced_model(p, l_c, grid, reduction=red)
    coeffs = red.coefficients().nonzero(_float(cfg, "atol", nonneg=True))
    summary = {
        "command": "reduce",
        "config": cfg,
        "l_c": l_c,
        "lambda_c": model.lambda_c,
        "q": model.q,
        "closed_form_q": model.closed_form_q,
        "isotropy_residual": model.isotropy_residual,
        "validation": model.validation,
        "modes": sorted(str(m) for m in coeffs.forms),
    }
    if l_c in (1, 2):
        ref = closed_form_table(p.Pr, l_c, p.r)
        summary["closed_form_comparison"] = compare_tables(coeffs, ref)
    _write(out_dir, "coefficients.json", coeffs.to_json() + "\n")
    return summary


def _initial_state(cfg, l_c, rng):
    if cfg["x0"] is None:
        v = 0.01 * rng.standard_normal(2 * l_c + 1)
    else:
        v = np.asarray(cfg["x0"], dtype=float)
        if v.shape != (2 * l_c + 1,):
            raise ConfigError(f"x0 must list {2 * l_c + 1} real coordinates")
    return ReducedState.from_real(v)


def dump_fields(field, grid) -> tuple[bytes, dict]:
    """Flat little-endian float64 dump of the real parts of ``(u_θ, u_φ, w, T)``.

    Each block is laid out z-major, then θ (north to south), then φ.
    """
    blocks = [field.u[0], field.u[1], field.w, field.T]
    data = b"".join(np.ascontiguousarray(b.real, dtype="<f8").tobytes() for b in blocks)
    meta = {
        "dtype": "<f8",
        "order": ["u_theta", "u_phi", "w", "T"],
        "shape": list(field.w.shape),
        "layout": "z-major, then theta, then phi",
        "theta": grid.theta.tolist(),
        "phi": grid.phi.tolist(),
        "z": grid.z.tolist(),
        "r": grid.r,
        "max_imag": max(float(np.abs(b.imag).max()) for b in blocks),
    }
    return data, meta


def cmd_evolve(cfg, out_dir, seed):
    _resolve_r(cfg)
    l_c = cfg["l_c"]
    p = _params(cfg)
    crit = critical_rayleigh(p.r)
    if crit.degenerate:
        raise DegenerateCriticalPoint(f"degenerate critical point at r={p.r!r}")
    if crit.l_c != l_c:
        raise ConfigError(f"aspect ratio r={p.r!r} selects l_c={crit.l_c}, not {l_c}")
    eps = _float(cfg, "epsilon")
    if not -1.0 < eps <= 0.1:
        raise ConfigError("epsilon must lie in (-1, 0.1]")
    p_c = p.with_lambda(crit.lambda_c)
    grid = default_grid(l_c, p.r, n_z=_int(cfg, "n_z", 2))
    red = GalerkinReduction(p_c, l_c, grid)
    base = reduced_model(p_c, l_c, grid, reduction=red)
    lam = crit.lambda_c * (1.0 + eps)
    beta = base.beta_plus(lam)
    model = base.with_rates(beta)
    rng = np.random.default_rng(seed)
    s0 = _initial_state(cfg, l_c, rng)
    t_end = cfg["t_end"]
    t_end = (20.0 / abs(beta) if beta != 0 else 100.0) if t_end is None else _float(cfg, "t_end", positive=True)
    t_eval = np.linspace(0.0, t_end, _int(cfg, "n_out", 2))
    traj = integrate(model, s0, t_end, rtol=_float(cfg, "rtol", positive=True),
                     atol=_float(cfg, "atol", positive=True), t_eval=t_eval)
    buf = io.StringIO(newline="")
    traj.write_csv(buf)
    _write(out_dir, "trajectory.csv", buf.getvalue())
    logistic = logistic_norm(beta, model.q, s0.N, traj.t)
    summary = {
        "command": "evolve",
        "config": cfg,
        "seed": seed,
        "lambda_c": crit.lambda_c,
        "lambda": lam,
        "beta_plus": beta,
        "q": model.q,
        "validation": base.validation,
        "N_initial": s0.N,
        "N_final": float(traj.N[-1]),
        "logistic_max_error": float(np.max(np.abs(traj.N - logistic))),
        "caveat": "cubic truncation; quantitative validity away from lambda_c is not established",
    }
    try:
        est = attractor(model, _int(cfg, "attractor_samples", 1), seed=seed)
        summary["attractor"] = {
            "radius": est.radius,
            "samples": len(est.samples),
            "all_steady": bool(est.steady.all()),
            "kind": "sphere of degenerate steady states (invariant-manifold estimate)",
        }
    except NoAttractorError as exc:
        summary["attractor"] = {"radius": None, "reason": str(exc)}
    if cfg["reconstruct"]:
        fld = reconstruct(model, red.coefficients(), traj.state(-1), grid)
        data, meta = dump_fields(fld, grid)
        _write(out_dir, "fields.bin", data, binary=True)
        _write(out_dir, "fields.json", dumps(meta) + "\n")
        summary["fields_max_imag"] = meta["max_imag"]
    return summary


def cmd_friction(cfg, out_dir, seed):
    l_c = _int(cfg, "l_c", lo=1)
    a = _float(cfg, "a", positive=True)
    h = _float(cfg, "h", positive=True)
    if h >= a:
        raise ConfigError("require h < a")
    pat = friction_ratio_for_pattern(a, h, l_c, sigma0=_float(cfg, "sigma0", positive=True))
    return {
        "command": "friction",
        "config": cfg,
        "sigma_ratio": pat.ratio,
        "l_c": pat.l_c,
        "l_c_exact": pat.l_c_exact,
        "consistent": pat.consistent,
        "aspect": pat.aspect,
        "selecting_ratios": list(pat.selecting_ratios),
    }


COMMANDS = {
    "spectrum": cmd_spectrum,
    "critical": cmd_critical,
    "reduce": cmd_reduce,
    "evolve": cmd_evolve,
    "friction": cmd_friction,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shell-benard",
        description="Convection onset, center-manifold reduction and amplitude "
        "dynamics on a spherical shell.",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name, help=COMMANDS[name].__name__.replace("cmd_", "") + " pipeline")
        sp.add_argument("--config", metavar="PATH", help="JSON config overriding defaults")
        sp.add_argument("--out", metavar="DIR", help="directory for result files")
        sp.add_argument("--seed", type=int, default=0, metavar="N", help="random seed (default 0)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = load_config(args.command, args.config)
        if args.out is not None:
            os.makedirs(args.out, exist_ok=True)
        summary = COMMANDS[args.command](cfg, args.out, args.seed)
        summary["version"] = __version__
        text = dumps(summary) + "\n"
        _write(args.out, f"{args.command}.json", text)
        sys.stdout.write(text)
        return EXIT_OK
    except (ConfigError, ResolutionError) as exc:
        print(f"shell-benard {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DegenerateCriticalPoint, StructuralError, IntegrationError, ArithmeticError) as exc:
        print(f"shell-benard {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (ValueError, OSError) as exc:
        print(f"shell-benard {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
