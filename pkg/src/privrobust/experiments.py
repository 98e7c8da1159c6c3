"""Seeded experiment runners behind the ``experiment`` subcommand.

Each runner takes an :class:`ExperimentConfig` and returns an
:class:`ExperimentOutput` (column names, row dicts and a summary dict).
Trial ``t`` at sample-size index ``i`` draws from ``rng_for(seed, i, t)``,
so results do not depend on execution order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np

from .bounds import discrepancy_bound
from .errors import Infeasible, InsufficientData, InvalidParam, NotCertifiable
from .io import read_samples
from .measures import MeasureSpec, leakage, parse_measure, utility
from .mechanisms import (
    FamilySpec,
    _family_stack,
    _leakage_batch,
    _utility_batch,
    design_in_family,
    dist_to_set,
    guessing_closed_form,
    lattice_scan,
    optimal_set,
    uniform_constant,
    uniform_design,
    worst_case_utility,
)
from .preprocess import apply_merge, fit_merge_map
from .prob import JointDistribution, empirical, empirical_from_counts, new_joint, rng_for

SIX_MATRIX = ((0.42, 0.18), (0.16, 0.24))
# p_sharp_q(0.6, 0.2)
P_SHARP_Q_MATRIX = ((0.32, 0.08), (0.12, 0.48))

DEFAULTS = {
    "discrepancy": {
        "leakage": "pc",
        "utility": "pc",
        "eps": 0.65,
        "family": "rr",
        "n_values": [250, 500, 1000, 2000],
        "beta": 0.1,
        "trials": 50,
    },
    "convergence": {
        "leakage": "f:chi2",
        "utility": "f:chi2",
        "eps": 0.03,
        "eps_grid": [0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08],
        "n_values": [100, 1000, 10000],
        "trials": 20,
        "n_outputs": 2,
        "step": 0.01,
    },
    "uniform": {
        "leakage": "pc",
        "utility": "pc",
        "matrix": P_SHARP_Q_MATRIX,
        "eps": 0.75,
        "family": "z",
        "r_values": [0.0, 0.01, 0.02, 0.05],
        "m": 500,
        "n_outputs": 2,
        "step": 0.01,
    },
}


def parse_family(text: str) -> FamilySpec:
    """``rr``, ``z``, ``z:<xbar>`` or ``grid:<N>:<step>``."""
    parts = str(text).strip().lower().split(":")
    try:
        if parts == ["rr"]:
            return FamilySpec("rr")
        if parts[0] == "z" and len(parts) <= 2:
            return FamilySpec("z", xbar=int(parts[1]) if len(parts) == 2 else None)
        if parts[0] == "grid" and len(parts) == 3:
            return FamilySpec("grid", n_outputs=int(parts[1]), step=float(parts[2]))
    except ValueError:
        pass
    raise InvalidParam(f"unknown family {text!r}; use rr, z, z:<xbar> or grid:<N>:<step>")


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str
    seed: int
    leakage: str = "pc"
    utility: str = "pc"
    matrix: tuple | None = None
    samples: str | None = None
    n_values: tuple = ()
    beta: float = 0.1
    eps: float = 0.65
    eps_grid: tuple = ()
    family: str = "rr"
    gamma: float | None = None
    trials: int = 20
    r_values: tuple = ()
    m: int = 500
    n_outputs: int = 2
    step: float = 0.01

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        exp = d.get("experiment")
        if exp not in DEFAULTS:
            raise InvalidParam(f"experiment must be one of {sorted(DEFAULTS)}, got {exp!r}")
        if d.get("seed") is None:
            raise InvalidParam("experiments require an explicit seed")
        defaults = dict(DEFAULTS[exp])
        if d.get("samples") is not None:
            defaults.pop("matrix", None)
        merged = {**defaults, **{k: v for k, v in d.items() if v is not None}}
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(merged) - known - {"out"})
        if unknown:
            raise InvalidParam(f"unknown config fields: {unknown}")
        kw = {k: v for k, v in merged.items() if k in known}
        for key in ("n_values", "eps_grid", "r_values"):
            kw[key] = tuple(kw.get(key, ()))
        if kw.get("matrix") is not None:
            kw["matrix"] = tuple(tuple(float(v) for v in row) for row in kw["matrix"])
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    def validate(self) -> None:
        if any(int(n) != n or n < 1 for n in self.n_values):
            raise InvalidParam("n values must be positive integers")
        if list(self.eps_grid) != sorted(self.eps_grid):
            raise InvalidParam("eps grid must be sorted")
        if self.trials < 1 or self.m < 1:
            raise InvalidParam("trials and m must be positive")
        if not (0.0 < self.beta < 1.0):
            raise InvalidParam("beta must lie in (0, 1)")
        if any(r < 0 for r in self.r_values):
            raise InvalidParam("radii must be nonnegative")
        parse_measure(self.leakage)
        parse_measure(self.utility)

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = [list(r) for r in v] if f.name == "matrix" and v is not None else (
                list(v) if isinstance(v, tuple) else v
            )
        return out

    def source(self) -> JointDistribution:
        if self.matrix is not None:
            return new_joint(self.matrix)
        if self.samples is not None:
            return empirical(read_samples(self.samples))
        return new_joint(SIX_MATRIX)


@dataclass(frozen=True)
class ExperimentOutput:
    columns: tuple
    rows: list
    summary: dict = field(default_factory=dict)


def _bound_or_nan(spec, side, p_hat, n, beta) -> float:
    try:
        return discrepancy_bound(spec, side, p_hat, n, beta).bound
    except NotCertifiable:
        return math.nan


def sup_family_gap(spec: MeasureSpec, family_kind: str, p: JointDistribution, q: JointDistribution, side="privacy") -> float:
    """``max |M(p, W) - M(q, W)|`` over the 201-point grid of a one-parameter family."""
    k = p.shape[1]
    thetas = np.linspace(0.0, 1.0, 201)
    if family_kind == "rr":
        stacks = [_family_stack("rr", None, thetas, k)]
    else:
        stacks = [_family_stack("z", xb, thetas, k) for xb in range(k)]
    fn = _leakage_batch if side == "privacy" else _utility_batch
    return float(max(np.abs(fn(spec, p.mass, w) - fn(spec, q.mass, w)).max() for w in stacks))


def run_discrepancy(cfg: ExperimentConfig) -> ExperimentOutput:
    """Design on a training sample, evaluate on an independent test sample.

    With a matrix source both samples are fresh draws.  With a CSV source
    they are disjoint random subsets of the file.  When ``gamma`` is set,
    rare symbols are merged with a map fitted on the training half.
    """
    spec_l, spec_u = parse_measure(cfg.leakage), parse_measure(cfg.utility)
    family = parse_family(cfg.family)
    from_file = cfg.samples is not None and cfg.matrix is None
    if from_file:
        data = read_samples(cfg.samples)
        s_a, x_a = data.s_alphabet, data.x_alphabet
        shape = (len(s_a), len(x_a))
        cells = data.s_idx * shape[1] + data.x_idx
    else:
        truth = cfg.source()
        s_a, x_a = truth.s_alphabet, truth.x_alphabet
        shape = truth.shape
    rows = []
    for i, n in enumerate(cfg.n_values):
        n = int(n)
        if from_file and 2 * n > cells.size:
            raise InsufficientData(f"need {2 * n} rows for train and test, file has {cells.size}")
        for t in range(cfg.trials):
            rng = rng_for(cfg.seed, i, t)
            if from_file:
                perm = rng.permutation(cells.size)
                c_tr = np.bincount(cells[perm[:n]], minlength=shape[0] * shape[1]).reshape(shape)
                c_te = np.bincount(cells[perm[n : 2 * n]], minlength=shape[0] * shape[1]).reshape(shape)
            else:
                c_tr = rng.multinomial(n, truth.mass.reshape(-1)).reshape(shape)
                c_te = rng.multinomial(n, truth.mass.reshape(-1)).reshape(shape)
            train = empirical_from_counts(c_tr, s_a, x_a)
            test = empirical_from_counts(c_te, s_a, x_a)
            if cfg.gamma is not None:
                mmap = fit_merge_map(train, cfg.gamma)
                train, test = apply_merge(train, mmap), apply_merge(test, mmap)
            row = {"n": n, "trial": t}
            b_l = _bound_or_nan(spec_l, "privacy", train, n, cfg.beta) + _bound_or_nan(
                spec_l, "privacy", test, n, cfg.beta
            )
            b_u = _bound_or_nan(spec_u, "utility", train, n, cfg.beta) + _bound_or_nan(
                spec_u, "utility", test, n, cfg.beta
            )
            try:
                des = design_in_family(family, spec_l, spec_u, train, cfg.eps)
            except Infeasible:
                row.update(feasible=False, bound_L=b_l, bound_U=b_u)
                rows.append(row)
                continue
            w = des.mechanism
            d_l = abs(leakage(spec_l, test, w) - des.achieved_leakage)
            d_u = abs(utility(spec_u, test, w) - des.achieved_utility)
            row.update(
                feasible=True,
                train_leakage=des.achieved_leakage,
                train_utility=des.achieved_utility,
                delta_L=d_l,
                delta_U=d_u,
                bound_L=b_l,
                bound_U=b_u,
                within_L=bool(d_l <= b_l) if not math.isnan(b_l) else None,
                within_U=bool(d_u <= b_u) if not math.isnan(b_u) else None,
            )
            rows.append(row)
    ok = [r for r in rows if r.get("feasible")]
    summary = {
        "rows": len(rows),
        "feasible_rows": len(ok),
        "fraction_within_L": float(np.mean([bool(r["within_L"]) for r in ok])) if ok else math.nan,
        "fraction_within_U": float(np.mean([bool(r["within_U"]) for r in ok])) if ok else math.nan,
    }
    cols = (
        "n", "trial", "feasible", "train_leakage", "train_utility",
        "delta_L", "delta_U", "bound_L", "bound_U", "within_L", "within_U",
    )
    return ExperimentOutput(cols, rows, summary)


def run_convergence(cfg: ExperimentConfig) -> ExperimentOutput:
    """Empirical versus true privacy-utility values and optimal-set distances.

    For each ``n`` and trial, ``delta_n`` is the signed entry of largest
    magnitude of ``H(P_n; eps) - H(P; eps)`` over the budget grid, and
    ``dist`` is the l1 distance from the first lattice maximizer for
    ``P_n`` to the lattice band of optimal mechanisms for ``P`` (see
    :func:`privrobust.mechanisms.optimal_set`); ``dist_ties`` measures
    the distance to the exact lattice ties only.
    """
    spec_l, spec_u = parse_measure(cfg.leakage), parse_measure(cfg.utility)
    truth = cfg.source()
    grid = np.array(sorted(set(cfg.eps_grid) | {cfg.eps}), dtype=float)
    ref = int(np.searchsorted(grid, cfg.eps))
    base = lattice_scan(spec_l, spec_u, truth, grid, cfg.n_outputs, cfg.step)
    true_ties = [base.matrices(k) if not math.isnan(base.h[k]) else None for k in range(grid.size)]
    true_sets = [
        optimal_set(spec_l, spec_u, truth, e, cfg.n_outputs, cfg.step)[1] if not math.isnan(base.h[k]) else None
        for k, e in enumerate(grid)
    ]
    rows = []
    for i, n in enumerate(cfg.n_values):
        n = int(n)
        for t in range(cfg.trials):
            rng = rng_for(cfg.seed, i, t)
            counts = rng.multinomial(n, truth.mass.reshape(-1)).reshape(truth.shape)
            p_n = empirical_from_counts(counts, truth.s_alphabet, truth.x_alphabet)
            scan = lattice_scan(spec_l, spec_u, p_n, grid, cfg.n_outputs, cfg.step)
            diffs = scan.h - base.h
            finite = np.isfinite(diffs)
            delta = float(diffs[finite][np.argmax(np.abs(diffs[finite]))]) if finite.any() else math.nan
            for k, e in enumerate(grid):
                feasible = bool(np.isfinite(scan.h[k]))
                dist = dist_ties = math.nan
                if feasible and true_sets[k] is not None:
                    w_n = scan.matrices(k)[0]
                    dist = dist_to_set(w_n, true_sets[k])
                    dist_ties = dist_to_set(w_n, true_ties[k])
                rows.append({
                    "n": n, "trial": t, "eps": float(e), "reference": k == ref,
                    "feasible": feasible, "h_hat": scan.h[k], "h_true": base.h[k],
                    "abs_gap": abs(diffs[k]) if np.isfinite(diffs[k]) else math.nan,
                    "dist": dist, "dist_ties": dist_ties, "delta_n": delta,
                })
    summary = {}
    for n in cfg.n_values:
        sel = [r for r in rows if r["n"] == int(n) and r["reference"]]
        summary[str(int(n))] = {
            "median_abs_delta_n": float(np.nanmedian([abs(r["delta_n"]) for r in sel])),
            "median_dist": float(np.nanmedian([r["dist"] for r in sel])),
            "median_dist_ties": float(np.nanmedian([r["dist_ties"] for r in sel])),
        }
    cols = (
        "n", "trial", "eps", "reference", "feasible", "h_hat", "h_true",
        "abs_gap", "dist", "dist_ties", "delta_n",
    )
    return ExperimentOutput(cols, rows, summary)


def _detect_p_sharp_q(q: JointDistribution):
    if q.shape != (2, 2):
        return None
    p = float(q.mass[1].sum())
    if p <= 0:
        return None
    qq = float(q.mass[1, 0] / p)
    expected = np.array([[(1 - p) * (1 - qq), (1 - p) * qq], [p * qq, p * (1 - qq)]])
    if np.abs(expected - q.mass).max() > 1e-12 or not (0.5 <= p <= 1 and 0 <= qq <= 1 - p and p > qq):
        return None
    return p, qq


def privacy_utility_curve(spec_l, spec_u, q: JointDistribution, eps_values, n_outputs, step):
    """``H(q; eps)`` at each budget, closed form when available, else the lattice.

    Returns the values and the method used.
    """
    pq = _detect_p_sharp_q(q) if spec_l.kind == spec_u.kind == "pc" else None
    eps_values = np.asarray(eps_values, dtype=float)
    if pq is not None:
        p, qq = pq
        out = []
        for e in eps_values:
            if e < p - 1e-12:
                out.append(math.nan)
            else:
                out.append(guessing_closed_form(p, qq, min(e, 1 - qq)))
        return np.array(out), "closed-form"
    return lattice_scan(spec_l, spec_u, q, eps_values, n_outputs, step).h, "lattice"


def run_uniform(cfg: ExperimentConfig) -> ExperimentOutput:
    """Shrunk-budget designs, their ball verification and the utility-gap bound."""
    spec_l, spec_u = parse_measure(cfg.leakage), parse_measure(cfg.utility)
    family = parse_family(cfg.family)
    p_hat = cfg.source()
    rows = []
    for i, r in enumerate(cfg.r_values):
        r = float(r)
        res = uniform_design(spec_l, spec_u, p_hat, cfg.eps, r, family, m=cfg.m, seed=cfg.seed + i)
        c_u = uniform_constant(spec_u, "utility", p_hat, r)
        hs, method = privacy_utility_curve(
            spec_l, spec_u, p_hat, [cfg.eps + res.c_l * r, cfg.eps - res.c_l * r], cfg.n_outputs, cfg.step
        )
        w = res.inner.mechanism
        rows.append({
            "r": r,
            "c_l": res.c_l,
            "shrunk_eps": res.shrunk_epsilon,
            "samples_checked": res.verification.samples_checked,
            "max_leakage_in_ball": res.verification.max_leakage_in_ball,
            "pass": res.verification.passed,
            "utility_at_center": res.inner.achieved_utility,
            "worst_case_utility": worst_case_utility(spec_u, p_hat, w, r, cfg.m, cfg.seed + i),
            "gap_bound": float(hs[0] - hs[1] + 2 * c_u * r),
            "h_method": method,
        })
    summary = {"all_pass": all(r["pass"] for r in rows)}
    cols = (
        "r", "c_l", "shrunk_eps", "samples_checked", "max_leakage_in_ball", "pass",
        "utility_at_center", "worst_case_utility", "gap_bound", "h_method",
    )
    return ExperimentOutput(cols, rows, summary)


RUNNERS = {"discrepancy": run_discrepancy, "convergence": run_convergence, "uniform": run_uniform}


def run(cfg: ExperimentConfig) -> ExperimentOutput:
    return RUNNERS[cfg.experiment](cfg)
