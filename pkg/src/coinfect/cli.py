"""Command-line interface.

Subcommands:
    info      thresholds, scenario and the bifurcation point K0
    branch    trace the coexistence branch next to its reference branch
    simulate  integrate one trajectory
    sweep     vary one basic rate and tabulate scenario, K0 and branch distance

Parameters come from a flat TOML or JSON file; any ``--<key>`` flag overrides
the file, and without a file the canonical worked set is used.

Exit codes: 0 success, 2 invalid input, 3 continuation failure, 4 integration
failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .continuation import continue_branch, nearest_equilibrium, stable_point
from .equilibria import (
    branch_distance,
    classify_scenario,
    derived_quantities,
    reference_branch,
    transition_points,
)
from .errors import (
    CoinfectError,
    NoBifurcation,
    NonConvergent,
    StepUnderflow,
    StepUnderflowODE,
    ValidationError,
)
from .model import CONFIG_KEYS, Params, canonical_params, load_config, validate_params
from .stability import find_K0, smallness_ratio

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_CONTINUATION = 3
EXIT_INTEGRATION = 4

BASIC_KEYS = ("r", "alpha1", "alpha2", "alpha3", "mu1", "mu2", "mu3", "eta1", "eta2")
BRANCH_EXTRA = ("ref_S", "ref_I1", "ref_I2", "ref_I12")


# ---------------------------------------------------------------------------
# helpers


def _params(args, **changes) -> Params:
    overrides = {k: getattr(args, k) for k in CONFIG_KEYS if getattr(args, k) is not None}
    overrides.update(changes)
    if args.config:
        return load_config(args.config, overrides)
    data = canonical_params().to_mapping()
    data.update(overrides)
    return validate_params(Params.from_mapping(data))


def _emit(text: str, path: str | None) -> None:
    if path:
        Path(path).write_text(text)
    else:
        sys.stdout.write(text)


def _notice(msg: str) -> None:
    print(f"notice: {msg}", file=sys.stderr)


def _num(v):
    return None if v is None else float(v)


def info_report(p) -> dict:
    """Plain-data summary used by ``info`` and by each ``sweep`` row."""
    dq = derived_quantities(p)
    sc = classify_scenario(p)
    rep = {
        "params": p.to_mapping(),
        "sigma": list(dq.sigma),
        "A": list(dq.A),
        "eta_star": list(dq.eta_star),
        "delta_alpha": dq.delta_alpha,
        "delta_mu": dq.delta_mu,
        "K_thresholds": {f"K{i + 1}": _num(k) for i, k in enumerate(dq.k_thresholds)},
        "scenario": sc.name,
        "scenario_inequality": sc.inequality,
        "smallness_ratio": smallness_ratio(p),
    }
    try:
        bp = find_K0(p)
    except NoBifurcation:
        return rep
    rep["K0"] = bp.K0
    rep["asymptotic_K0"] = bp.asymptotic_K0
    rep["K0_relative_gap"] = abs(bp.K0 - bp.asymptotic_K0) / bp.K0
    rep["small_eigenvalue"] = float(np.real(bp.small_eigenvalue))
    return rep


def _format_table(rep: dict) -> str:
    lines = []
    for key, val in rep.items():
        if isinstance(val, dict):
            val = ", ".join(f"{k}={'-' if v is None else f'{v:.10g}'}" for k, v in val.items())
        elif isinstance(val, list):
            val = ", ".join(f"{v:.10g}" for v in val)
        elif isinstance(val, float):
            val = f"{val:.10g}"
        lines.append(f"{key:<20} {val}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# subcommands


def cmd_info(args) -> int:
    rep = info_report(_params(args))
    _emit(json.dumps(rep, indent=2) + "\n" if args.json else _format_table(rep), args.output)
    return EXIT_OK


def _reference_rows(p, Ks):
    rows = []
    for K in Ks:
        ref = reference_branch(p, K)
        row = {"K": repr(float(K)), "reference": ref.label}
        row.update({c: repr(float(v)) for c, v in zip(BRANCH_EXTRA, ref.x)})
        rows.append(row)
    return rows


def _branch_output(p, branch, Ks, fmt) -> str:
    ref_rows = _reference_rows(p, Ks)
    if branch is None:
        rows, events = ref_rows, []
    else:
        rows = [dict(b, **r) for b, r in zip(branch.csv_rows(), ref_rows)]
        events = branch.events
    if fmt == "json":
        return json.dumps({
            "scenario": classify_scenario(p).name,
            "K0": None if branch is None else branch.K0,
            "complete": True if branch is None else branch.complete,
            "events": [{"K": e.K, "kind": e.kind.value, "detail": e.detail} for e in events],
            "records": rows,
        }, indent=1) + "\n"
    cols = ["K", "S", "I1", "I2", "I12", "type_code", "stability", "provenance",
            "detJ", "A", "B", "C", "boundary_case", "reference", "distance", *BRANCH_EXTRA]
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: row.get(k, "") for k in cols})
    for e in events:
        buf.write(f"# event,{e.K!r},{e.kind.value},{e.detail}\n")
    return buf.getvalue()


def _default_k_max(p) -> float:
    return 4.0 * transition_points(p)[-1][0]


def cmd_branch(args) -> int:
    p = _params(args)
    k_max = args.k_max or _default_k_max(p)
    try:
        bp = find_K0(p)
    except NoBifurcation:
        _notice("eta1* < 1: no coexistence branch, writing the reference branch only")
        Ks = np.linspace(k_max / args.n_points, k_max, args.n_points)
        _emit(_branch_output(p, None, Ks, args.out), args.output)
        return EXIT_OK
    if k_max <= bp.K0:
        raise ValueError(f"--k-max {k_max} must exceed K0 = {bp.K0}")
    try:
        branch = continue_branch(p, k_max, bp=bp)
        code = EXIT_OK
    except StepUnderflow as exc:
        branch = exc.branch
        code = EXIT_CONTINUATION
        print(f"error: StepUnderflow: {exc}", file=sys.stderr)
        if branch is None:
            return code
    _emit(_branch_output(p, branch, branch.K, args.out), args.output)
    return code


def _parse_x0(text: str, p, seed: int) -> np.ndarray:
    if text == "random":
        rng = np.random.default_rng(seed)
        a1, a2, a3 = p.alpha
        hi = np.array([p.K, p.r / a1, p.r / a2, p.r / a3])
        return np.append(rng.uniform(0.0, 1.0, 4) * hi, 0.0)
    try:
        vals = [p.K if t.strip() == "K" else float(t) for t in text.split(",")]
    except ValueError:
        raise ValueError(f"cannot parse --x0 {text!r}") from None
    x = np.asarray(vals, dtype=float)
    if x.size == 4:
        x = np.append(x, 0.0)
    if x.size != 5:
        raise ValueError(f"--x0 needs 4 or 5 comma-separated values, got {x.size}")
    if np.any(x < 0) or not np.all(np.isfinite(x)):
        raise ValueError(f"--x0 must be finite and non-negative, got {text!r}")
    return x


def cmd_simulate(args) -> int:
    from . import sim

    p = _params(args)
    x0 = _parse_x0(args.x0, p, args.seed)
    t_end = args.t_end or 1e4 / p.r
    traj = sim.integrate(p, x0, t_end, rtol=args.rtol, atol=args.atol)
    footer = [f"final t={float(traj.times[-1])!r} flag={traj.terminal_flag.value} clipped={traj.n_clipped}"]
    try:
        rec, dist = nearest_equilibrium(p, traj.final)
        footer.append(f"nearest {rec.label} ({rec.stability.value}) distance={dist!r}")
    except CoinfectError as exc:
        footer.append(f"nearest unavailable: {type(exc).__name__}")
    _emit(traj.to_csv(footer="\n".join(footer)), args.output)
    return EXIT_OK


def _parse_range(text: str) -> np.ndarray:
    try:
        a, b, n = text.split(":")
        a, b, n = float(a), float(b), int(n)
    except ValueError:
        raise ValueError(f"--range must look like a:b:n, got {text!r}") from None
    if n < 1:
        raise ValueError("--range needs n >= 1")
    return np.array([a]) if n == 1 else np.linspace(a, b, n)


SWEEP_COLUMNS = ("value", "scenario", "eta1_star", "eta2_star", "K0", "asymptotic_K0",
                 "probe_K", "probe_type", "reference", "distance")


def _sweep_point(args, value, probe_K):
    value = float(value)
    try:
        p = _params(args, **{args.param: value})
    except ValidationError as exc:
        return None, f"{args.param}={value!r} skipped: {type(exc).__name__}: {exc}"
    rep = info_report(p)
    row = {
        "value": repr(value), "scenario": rep["scenario"],
        "eta1_star": repr(rep["eta_star"][0]), "eta2_star": repr(rep["eta_star"][1]),
        "K0": repr(rep["K0"]) if "K0" in rep else "",
        "asymptotic_K0": repr(rep["asymptotic_K0"]) if "K0" in rep else "",
        "probe_K": repr(float(probe_K)),
    }
    note = None
    try:
        rec = stable_point(p, probe_K)
        row["probe_type"] = rec.code_str
        row["reference"] = reference_branch(p, probe_K).label
        row["distance"] = repr(branch_distance(p, probe_K, rec.x))
    except CoinfectError as exc:
        note = f"{args.param}={value!r}: no branch point at K={probe_K}: {type(exc).__name__}"
    return row, note


def _threads() -> int:
    try:
        n = int(os.environ.get("COINFECT_THREADS", ""))
    except ValueError:
        n = os.cpu_count() or 1
    return max(1, n)


def cmd_sweep(args) -> int:
    if args.param not in BASIC_KEYS:
        raise ValueError(f"--param must be a basic rate ({', '.join(BASIC_KEYS)}), got {args.param!r}")
    values = _parse_range(args.range)
    base = _params(args)
    probe_K = args.probe_k or base.K
    with ThreadPoolExecutor(max_workers=min(_threads(), len(values))) as pool:
        results = list(pool.map(lambda v: _sweep_point(args, v, probe_K), values))
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=("param",) + SWEEP_COLUMNS, lineterminator="\n")
    w.writeheader()
    n_valid = 0
    for row, note in results:
        if note:
            _notice(note)
        if row is not None:
            n_valid += 1
            w.writerow({"param": args.param, **{k: row.get(k, "") for k in SWEEP_COLUMNS}})
    if n_valid == 0:
        print("error: every sweep point is invalid", file=sys.stderr)
        return EXIT_INVALID
    _emit(buf.getvalue(), args.output)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .equilibria import records_to_csv
    from .oracle import grid_equilibria

    p = _params(args)
    recs = grid_equilibria(p, args.k, args.n_seeds, args.seed)
    _emit(records_to_csv(recs), args.output)
    return EXIT_OK


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("config", nargs="?", help="TOML or JSON parameter file")
    common.add_argument("-o", "--output", help="output file (default: stdout)")
    grp = common.add_argument_group("parameter overrides")
    for key in CONFIG_KEYS:
        grp.add_argument(f"--{key}", type=float, metavar="X")

    parser = argparse.ArgumentParser(prog="coinfect", description="Equilibrium branches, bifurcation and simulation of the coinfection model.")
    sub = parser.add_subparsers(dest="command", required=True,
                                metavar="{info,branch,simulate,sweep}")

    p = sub.add_parser("info", parents=[common], help="thresholds, scenario and K0")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_info)

    p = sub.add_parser("branch", parents=[common], help="trace the coexistence branch")
    p.add_argument("--k-max", type=float, help="end of the K range (default: 4x last threshold)")
    p.add_argument("--out", choices=("csv", "json"), default="csv")
    p.add_argument("--n-points", type=int, default=200,
                   help="grid size when only the reference branch exists")
    p.set_defaults(func=cmd_branch)

    p = sub.add_parser("simulate", parents=[common], help="integrate one trajectory")
    p.add_argument("--x0", default="random",
                   help="'S,I1,I2,I12[,R]' ('K' stands for the carrying capacity) or 'random'")
    p.add_argument("--t-end", type=float, help="final time (default: 1e4/r)")
    p.add_argument("--rtol", type=float, default=1e-10)
    p.add_argument("--atol", type=float, default=1e-12)
    p.add_argument("--seed", type=int, default=0, help="seed for --x0 random")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("sweep", parents=[common], help="vary one basic rate")
    p.add_argument("--param", required=True, help="basic rate to vary, e.g. eta1")
    p.add_argument("--range", required=True, help="a:b:n, n evenly spaced values")
    p.add_argument("--probe-k", type=float, help="K for the distance column (default: config K)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("oracle", parents=[common])
    p.add_argument("--k", type=float, help="carrying capacity (default: config K)")
    p.add_argument("--n-seeds", type=int, default=1000)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValidationError, ValueError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (StepUnderflowODE, NonConvergent) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTEGRATION
    except CoinfectError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CONTINUATION


if __name__ == "__main__":
    sys.exit(main())
