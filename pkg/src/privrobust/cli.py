"""Command-line interface.

Every command accepts ``--config FILE.json``; explicit flags override the
file.  With ``--out PREFIX`` results go to ``PREFIX.csv`` plus a JSON
sidecar ``PREFIX.json`` holding the effective configuration and the
library version; otherwise the CSV is printed.  Exit codes: 0 success,
2 invalid input, 3 infeasible budget, 4 complexity guard.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from . import __version__
from .bounds import discrepancy_bound
from .errors import (
    Infeasible,
    InvalidParam,
    ParseError,
    PrivRobustError,
    TooLarge,
    ValidationError,
)
from .experiments import ExperimentConfig, parse_family, run
from .io import dump_json, format_matrix, format_samples, format_table, read_alphabet, read_matrix, read_samples
from .measures import leakage, parse_measure, utility
from .mechanisms import uniform_design, worst_case_utility, design_in_family
from .preprocess import MergeMap, apply_merge_samples, fit_merge_map
from .prob import Mechanism, empirical, new_joint, new_mechanism

EXIT_OK, EXIT_INVALID, EXIT_INFEASIBLE, EXIT_GUARD = 0, 2, 3, 4


def _json_arg(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise argparse.ArgumentTypeError(f"invalid JSON: {exc}") from None


def _csv_floats(text: str):
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _csv_ints(text: str):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _csv_strs(text: str):
    return [v.strip() for v in text.split(",") if v.strip()]


def _add_common(p: argparse.ArgumentParser, *, source=True, specs=True) -> None:
    p.add_argument("--config", type=Path, help="JSON config; flags override its fields")
    p.add_argument("--out", help="output prefix for PREFIX.csv and PREFIX.json")
    if source:
        p.add_argument("--matrix", type=_json_arg, help="joint distribution as a JSON matrix")
        p.add_argument("--samples", help="sample CSV with header s,x")
        p.add_argument("--s-alphabet", dest="s_alphabet", help="file with one S label per line")
        p.add_argument("--x-alphabet", dest="x_alphabet", help="file with one X label per line")
    if specs:
        p.add_argument("--leakage", help="leakage measure, e.g. pc, f:chi2, arimoto(2)")
        p.add_argument("--utility", help="utility measure")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="privrobust", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("measure", help="evaluate leakage and utility of a mechanism")
    _add_common(p)
    p.add_argument("--mechanism", type=_json_arg, help="mechanism as a JSON matrix (rows sum to 1)")
    p.add_argument("--mechanism-csv", dest="mechanism_csv", help="mechanism matrix CSV")

    p = sub.add_parser("bound", help="finite-sample discrepancy certificates")
    _add_common(p, specs=False)
    p.add_argument("--measures", type=_csv_strs, help="comma-separated measures (default pc)")
    p.add_argument("--sides", type=_csv_strs, help="privacy,utility (default both)")
    p.add_argument("--beta", type=float, help="confidence parameter in (0, 1)")
    p.add_argument("--n", type=int, help="sample count (required with --matrix)")

    p = sub.add_parser("design", help="best mechanism of a family under a leakage budget")
    _add_common(p)
    p.add_argument("--family", help="rr, z, z:<xbar> or grid:<N>:<step>")
    p.add_argument("--eps", type=float, help="leakage budget")

    p = sub.add_parser("uniform", help="design private for every distribution in an l1 ball")
    _add_common(p)
    p.add_argument("--family", help="rr, z, z:<xbar> or grid:<N>:<step>")
    p.add_argument("--eps", type=float, help="leakage budget")
    p.add_argument("--r", type=float, help="ball radius")
    p.add_argument("--m", type=int, help="ball samples for verification (default 500)")
    p.add_argument("--seed", type=int, help="seed for ball sampling (default 0)")

    p = sub.add_parser("preprocess", help="merge rare X symbols into a sink symbol")
    _add_common(p, source=False, specs=False)
    p.add_argument("--samples", help="sample CSV with header s,x")
    p.add_argument("--gamma", type=float, help="merge threshold on the X-marginal")
    p.add_argument("--map", dest="map_path", help="apply a saved merge map instead of fitting one")

    p = sub.add_parser("experiment", help="seeded experiments")
    p.add_argument("experiment", choices=("discrepancy", "convergence", "uniform"))
    _add_common(p)
    p.add_argument("--seed", type=int, help="master seed (required here or in the config)")
    p.add_argument("--n-values", dest="n_values", type=_csv_ints)
    p.add_argument("--eps", type=float)
    p.add_argument("--eps-grid", dest="eps_grid", type=_csv_floats)
    p.add_argument("--r-values", dest="r_values", type=_csv_floats)
    p.add_argument("--family")
    p.add_argument("--beta", type=float)
    p.add_argument("--gamma", type=float)
    p.add_argument("--trials", type=int)
    p.add_argument("--m", type=int)
    p.add_argument("--n-outputs", dest="n_outputs", type=int)
    p.add_argument("--step", type=float)
    return parser


# ------------------------------------------------------------------ plumbing


def _load_config(args) -> dict:
    cfg = {}
    if getattr(args, "config", None) is not None:
        try:
            cfg = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ParseError(str(exc), path=str(args.config)) from None
        except json.JSONDecodeError as exc:
            raise ParseError(exc.msg, path=str(args.config), line=exc.lineno) from None
        if not isinstance(cfg, dict):
            raise ParseError("config must be a JSON object", path=str(args.config))
    skip = {"command", "config", "experiment"}
    for key, value in vars(args).items():
        if key not in skip and value is not None:
            cfg[key] = value
    return cfg


def _source(cfg: dict, *, required=True):
    """Joint distribution and, for sample input, the sample count."""
    if cfg.get("matrix") is not None and cfg.get("samples") is not None:
        raise InvalidParam("give either matrix or samples, not both")
    if cfg.get("matrix") is not None:
        return new_joint(cfg["matrix"]), None
    if cfg.get("samples") is not None:
        s_a = read_alphabet(cfg["s_alphabet"]) if cfg.get("s_alphabet") else None
        x_a = read_alphabet(cfg["x_alphabet"]) if cfg.get("x_alphabet") else None
        samples = read_samples(cfg["samples"], s_a, x_a)
        return empirical(samples), len(samples)
    if required:
        raise InvalidParam("a distribution is required: pass --matrix or --samples")
    return None, None


def _emit(args, cfg: dict, csv_text: str, extra: dict) -> None:
    if args.out:
        Path(f"{args.out}.csv").write_text(csv_text, encoding="utf-8")
        side = {"command": args.command, "config": cfg, "version": __version__, **extra}
        Path(f"{args.out}.json").write_text(dump_json(side), encoding="utf-8")
    else:
        sys.stdout.write(csv_text)


def _mechanism(cfg: dict, q) -> Mechanism:
    if cfg.get("mechanism") is not None:
        return new_mechanism(cfg["mechanism"], q.x_alphabet)
    if cfg.get("mechanism_csv"):
        labels, rows = read_matrix(cfg["mechanism_csv"])
        if tuple(labels) != q.x_alphabet.labels:
            raise InvalidParam(f"mechanism rows {labels} do not match X alphabet {list(q.x_alphabet.labels)}")
        return new_mechanism(rows, q.x_alphabet)
    raise InvalidParam("a mechanism is required: pass --mechanism or --mechanism-csv")


# ------------------------------------------------------------------ commands


def cmd_measure(args) -> None:
    cfg = _load_config(args)
    q, _ = _source(cfg)
    w = _mechanism(cfg, q)
    rows = []
    for side, key, fn in (("privacy", "leakage", leakage), ("utility", "utility", utility)):
        spec = parse_measure(cfg.get(key, "pc"))
        rows.append({"side": side, "measure": str(spec), "value": fn(spec, q, w), "units": spec.units})
    _emit(args, cfg, format_table(("side", "measure", "value", "units"), rows), {"results": rows})


def cmd_bound(args) -> None:
    cfg = _load_config(args)
    q, n_samples = _source(cfg)
    n = cfg.get("n", n_samples)
    if n is None:
        raise InvalidParam("--n is required when the distribution is given as a matrix")
    beta = float(cfg.get("beta", 0.1))
    rows = []
    for name in cfg.get("measures", ["pc"]):
        spec = parse_measure(name)
        for side in cfg.get("sides", ["privacy", "utility"]):
            rows.append(discrepancy_bound(spec, side, q, int(n), beta).to_dict())
    cols = ("measure", "side", "n", "beta", "radius", "constant", "bound", "m_bar")
    _emit(args, cfg, format_table(cols, rows), {"certificates": rows})


def cmd_design(args) -> None:
    cfg = _load_config(args)
    q, _ = _source(cfg)
    if cfg.get("eps") is None:
        raise InvalidParam("--eps is required")
    res = design_in_family(
        parse_family(cfg.get("family", "rr")),
        parse_measure(cfg.get("leakage", "pc")),
        parse_measure(cfg.get("utility", "pc")),
        q,
        float(cfg["eps"]),
    )
    _emit(args, cfg, format_matrix(res.mechanism), {"result": res.to_dict()})


def cmd_uniform(args) -> None:
    cfg = _load_config(args)
    q, _ = _source(cfg)
    if cfg.get("eps") is None or cfg.get("r") is None:
        raise InvalidParam("--eps and --r are required")
    spec_u = parse_measure(cfg.get("utility", "pc"))
    m, seed = int(cfg.get("m", 500)), int(cfg.get("seed", 0))
    res = uniform_design(
        parse_measure(cfg.get("leakage", "pc")),
        spec_u,
        q,
        float(cfg["eps"]),
        float(cfg["r"]),
        parse_family(cfg.get("family", "rr")),
        m=m,
        seed=seed,
    )
    row = {
        "r": res.r,
        "c_l": res.c_l,
        "shrunk_eps": res.shrunk_epsilon,
        "samples_checked": res.verification.samples_checked,
        "max_leakage_in_ball": res.verification.max_leakage_in_ball,
        "pass": res.verification.passed,
        "utility_at_center": res.inner.achieved_utility,
        "worst_case_utility": worst_case_utility(spec_u, q, res.inner.mechanism, res.r, m, seed),
    }
    _emit(args, cfg, format_table(tuple(row), [row]), {"result": res.to_dict()})


def cmd_preprocess(args) -> None:
    cfg = _load_config(args)
    if cfg.get("samples") is None:
        raise InvalidParam("--samples is required")
    samples = read_samples(cfg["samples"])
    if cfg.get("map_path"):
        try:
            doc = json.loads(Path(cfg["map_path"]).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ParseError(str(exc), path=str(cfg["map_path"])) from None
        mmap = MergeMap.from_dict(doc.get("merge_map", doc))
    elif cfg.get("gamma") is not None:
        mmap = fit_merge_map(empirical(samples), float(cfg["gamma"]))
    else:
        raise InvalidParam("--gamma or --map is required")
    merged = apply_merge_samples(samples, mmap)
    _emit(args, cfg, format_samples(merged), {"merge_map": mmap.to_dict()})


def cmd_experiment(args) -> None:
    cfg = _load_config(args)
    cfg["experiment"] = args.experiment
    exp_cfg = ExperimentConfig.from_dict(cfg)
    out = run(exp_cfg)
    _emit(args, exp_cfg.to_dict(), format_table(out.columns, out.rows), {"summary": out.summary})


COMMANDS = {
    "measure": cmd_measure,
    "bound": cmd_bound,
    "design": cmd_design,
    "uniform": cmd_uniform,
    "preprocess": cmd_preprocess,
    "experiment": cmd_experiment,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        COMMANDS[args.command](args)
    except ValidationError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Infeasible as exc:
        print(f"infeasible: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except TooLarge as exc:
        print(f"too large: {exc}", file=sys.stderr)
        return EXIT_GUARD
    except PrivRobustError as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
