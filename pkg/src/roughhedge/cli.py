"""Batch command-line surface.

Subcommands: price, hedge, curve, simulate, validate.  Configuration comes
from a JSON file (--config); outputs are CSV/JSON files carrying the fully
resolved configuration and library version in a header, so identical
config + seed reproduces byte-identical files.

Exit codes: 0 ok, 1 usage, 2 validation/domain, 3 numerical accuracy.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import __version__
from .errors import AccuracyError, DomainError, NumericalError, ValidationError
from .model import (ForwardVarianceCurve, MeanReversionCurve,
                    RoughHestonParams, curve_from_json, curve_to_json,
                    forward_variance_from_theta, theta_from_forward_variance)
from .pricing import QuadratureConfig, VanillaSpec, price_surface
from .special_fn import GridFn, TimeGrid

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3


def _params_from(cfg: dict) -> RoughHestonParams:
    try:
        block = cfg["params"]
        return RoughHestonParams(
            alpha=float(block["alpha"]), lam=float(block["lambda"]),
            nu=float(block["nu"]), rho=float(block["rho"]),
            v0=float(block["v0"]), s0=float(block.get("s0", 1.0)))
    except KeyError as exc:
        raise ValidationError(f"config missing parameter {exc}") from exc


def _load_curve(cfg: dict, params: RoughHestonParams):
    """Returns (theta_curve, xi_curve); whichever kind the file held is
    converted so both are available."""
    path = cfg.get("curve_file")
    if path is None:
        grid = TimeGrid.uniform(float(cfg.get("horizon", 1.0)),
                                int(cfg.get("curve_nodes", 256)))
        theta = MeanReversionCurve.flat(params.v0, grid)
        return theta, forward_variance_from_theta(params, theta)
    with open(path, encoding="utf-8") as fh:
        kind, grid, vals = curve_from_json(fh.read())
    if kind == "theta":
        theta = MeanReversionCurve(GridFn(grid, vals))
        theta.validate(params)
        return theta, forward_variance_from_theta(params, theta)
    xi = ForwardVarianceCurve(GridFn(grid, vals)).validate()
    return theta_from_forward_variance(params, xi), xi


def _header(cfg: dict, seed) -> str:
    resolved = dict(cfg)
    resolved["seed"] = seed
    resolved["version"] = __version__
    return "# " + json.dumps(resolved, sort_keys=True) + "\n"


def _write(out_path: str | None, text: str):
    if out_path is None:
        sys.stdout.write(text)
    else:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write(text)


def cmd_price(cfg: dict, out: str | None, seed: int) -> int:
    params = _params_from(cfg)
    _, xi = _load_curve(cfg, params)
    strikes = [float(k) for k in cfg.get("strikes", [params.s0])]
    maturities = [float(t) for t in cfg.get("maturities", [1.0])]
    qc = cfg.get("quadrature", {})
    q = QuadratureConfig(
        damping=qc.get("damping"), b_max=qc.get("b_max"),
        n_nodes=int(qc.get("n_nodes", 32)), n_steps=int(qc.get("n_steps", 512)))
    kind = cfg.get("kind", "call")
    prices, details, errors = price_surface(params, xi, strikes, maturities, q)
    if errors:
        raise AccuracyError("; ".join(f"({i},{j}): {m}" for i, j, m in errors))
    det_map = {(i, j): d for i, j, d in details}
    lines = [_header(cfg, seed), "strike,maturity,price,damping_used,tail_bound\n"]
    for i, k in enumerate(strikes):
        for j, t in enumerate(maturities):
            d = det_map[(i, j)]
            px = d.price if kind == "call" else d.price - params.s0 + k
            lines.append(f"{k:.10g},{t:.10g},{px:.12g},{d.damping:.10g},"
                         f"{d.tail_bound:.6g}\n")
    _write(out, "".join(lines))
    return EXIT_OK


def cmd_hedge(cfg: dict, out: str | None, seed: int) -> int:
    from .hedging import replicate
    params = _params_from(cfg)
    theta, _ = _load_curve(cfg, params)
    spec = VanillaSpec(float(cfg.get("strike", params.s0)),
                       float(cfg.get("maturity", 1.0)),
                       cfg.get("kind", "call"))
    rep = replicate(params, theta, spec,
                    n_steps=int(cfg.get("n_steps", 256)),
                    n_paths=int(cfg.get("n_paths", 1000)),
                    seed=seed)
    body = _header(cfg, seed) + rep.to_csv()
    _write(out, body)
    summary_path = (out + ".summary.json") if out else None
    _write(summary_path, rep.summary_json() + "\n")
    return EXIT_OK


def cmd_curve(cfg: dict, out: str | None, seed: int) -> int:
    params = _params_from(cfg)
    direction = cfg.get("direction")
    if direction not in ("theta-to-xi", "xi-to-theta"):
        raise ValidationError("curve command needs direction "
                              "'theta-to-xi' or 'xi-to-theta'")
    theta, xi = _load_curve(cfg, params)
    if direction == "theta-to-xi":
        text = curve_to_json("xi", xi.grid, np.asarray(xi.xi.values, dtype=float))
    else:
        text = curve_to_json("theta", theta.grid,
                             np.asarray(theta.theta.values, dtype=float))
    _write(out, _header(cfg, seed) + text + "\n")
    return EXIT_OK


def cmd_simulate(cfg: dict, out: str | None, seed: int) -> int:
    from .simulate import (HawkesConfig, events_to_csv, pathset_to_csv,
                           simulate_hawkes, simulate_rough_heston)
    params = _params_from(cfg)
    theta, _ = _load_curve(cfg, params)
    model = cfg.get("model", "rough-heston")
    if model == "rough-heston":
        grid = TimeGrid.uniform(float(cfg.get("maturity", 1.0)),
                                int(cfg.get("n_steps", 256)))
        ps = simulate_rough_heston(params, theta, grid,
                                   int(cfg.get("n_paths", 100)), seed)
        body = pathset_to_csv(ps, max_paths=int(cfg.get("max_export_paths", 100)))
    elif model == "hawkes":
        hc = HawkesConfig(float(cfg.get("t_scale", 200.0)),
                          float(cfg.get("t_max", 1.0)), params, theta)
        res = simulate_hawkes(hc, seed)
        body = events_to_csv(res)
    else:
        raise ValidationError(f"unknown simulation model {model!r}")
    _write(out, _header(cfg, seed) + body)
    return EXIT_OK


def cmd_validate(cfg: dict, out: str | None, seed: int) -> int:
    """Desk-scale invariant sweep; exit 2 with the node list on violations."""
    from .charfn import char_fn, char_fn_fv
    params = _params_from(cfg)
    theta, xi = _load_curve(cfg, params)
    report = [_header(cfg, seed)]
    failures = 0

    def check(name, ok, detail=""):
        nonlocal failures
        report.append(f"{name}: {'PASS' if ok else 'FAIL'} {detail}\n")
        failures += 0 if ok else 1

    theta.validate(params)
    report.append("curve admissibility: PASS\n")
    xi.validate()
    report.append("forward variance nonnegative: PASS\n")

    t_end = float(xi.grid.horizon)
    r0 = char_fn(params, theta, 0.0, t_end)
    r1 = char_fn(params, theta, 1.0, t_end)
    check("R(0,T)=1", abs(r0 - 1.0) < 1e-10, f"|err|={abs(r0-1):.2e}")
    check("R(1,T)=1", abs(r1 - 1.0) < 1e-10, f"|err|={abs(r1-1):.2e}")
    z = 1.5 + 2.0j
    bridge = abs(char_fn(params, theta, z, t_end, n_steps=1024)
                 - char_fn_fv(params, xi, z, t_end, n_steps=1024))
    check("theta/xi bridge", bridge < 1e-6, f"|diff|={bridge:.2e}")

    rt = theta_from_forward_variance(params, xi, validate=False)
    dev = np.nanmax(np.abs(np.asarray(rt.theta.values[2:], dtype=float)
                           - np.asarray(theta.values_at(xi.grid.nodes[2:]), dtype=float)))
    check("theta<->xi roundtrip", dev < 5e-3 * (1 + params.v0), f"max dev={dev:.2e}")

    _write(out, "".join(report))
    if failures:
        raise ValidationError(f"{failures} validation checks failed")
    return EXIT_OK


_COMMANDS = {
    "price": cmd_price,
    "hedge": cmd_hedge,
    "curve": cmd_curve,
    "simulate": cmd_simulate,
    "validate": cmd_validate,
}


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="roughhedge",
        description="Pricing and hedging engine for rough-volatility "
                    "square-root models")
    parser.add_argument("command", choices=sorted(_COMMANDS))
    parser.add_argument("--config", required=True, help="JSON config file")
    parser.add_argument("--out", default=None, help="output path (stdout if absent)")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker threads (env ROUGHHEDGE_THREADS fallback)")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK

    threads = args.threads
    if threads is None:
        threads = int(os.environ.get("ROUGHHEDGE_THREADS", "1"))
    if threads < 1:
        _err("usage", "--threads must be >= 1")
        return EXIT_USAGE

    try:
        with open(args.config, encoding="utf-8") as fh:
            cfg = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        _err("usage", f"cannot read config: {exc}")
        return EXIT_USAGE

    cfg.setdefault("threads", threads)
    try:
        return _COMMANDS[args.command](cfg, args.out, args.seed)
    except (ValidationError, DomainError) as exc:
        _err("validation", str(exc), getattr(exc, "nodes", None))
        return EXIT_VALIDATION
    except (AccuracyError, NumericalError) as exc:
        _err("numerical", str(exc))
        return EXIT_NUMERICAL


def _err(kind: str, message: str, nodes=None):
    doc = {"error": kind, "message": message}
    if nodes:
        doc["nodes"] = nodes
    sys.stderr.write(json.dumps(doc) + "\n")


if __name__ == "__main__":
    sys.exit(main())
