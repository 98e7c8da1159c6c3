"""Mechanism families, the privacy-utility function and uniform mechanisms.

The privacy-utility function ``H(Q; eps)`` is the largest utility over
mechanisms whose leakage is at most ``eps``.  It is evaluated two ways:

* over a one-parameter family (randomized response or Z-channels) with a
  201-point scan refined to a parameter tolerance of ``1e-6``;
* over a lattice of row-stochastic matrices with entries in multiples of
  ``step``, by exhaustive enumeration.  This is an oracle for small
  alphabets and is guarded against combinatorial blow-up.

Ties among lattice maximizers are broken by lexicographic order of the
flattened matrix, and every maximizer within ``1e-9`` of the best value is
reported.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .bounds import BoundContext, lipschitz_constant, needs_margin
from .errors import (
    EmptyFeasibleSet,
    EmptySet,
    Infeasible,
    InfeasibleShrunkBudget,
    InvalidParam,
    OutOfRange,
    TooLarge,
)
from .measures import (
    MeasureSpec,
    arimoto_kernel,
    channel_capacity,
    f_information_kernel,
    leakage,
    pc_posterior_kernel,
    shannon_kernel,
    sibson_kernel,
    utility,
)
from .prob import (
    Alphabet,
    JointDistribution,
    Mechanism,
    marginal_s,
    marginal_x,
    new_joint,
    sample_ball,
)

FEAS_TOL = 1e-12
TIE_TOL = 1e-9
FAMILY_GRID = 201
PARAM_TOL = 1e-6
MAX_X, MAX_N, MIN_STEP = 3, 4, 0.01
MAX_LATTICE = 30_000_000
CHUNK = 1 << 17


# ------------------------------------------------------------------ families


def _x_alphabet(x) -> Alphabet:
    if isinstance(x, Alphabet):
        return x
    if isinstance(x, (int, np.integer)):
        return Alphabet.of_size(int(x), "x")
    return Alphabet(tuple(x))


def randomized_response(rho: float, x_size) -> Mechanism:
    """Keep the input with probability ``e^rho / (e^rho + k - 1)``, else pick another uniformly.

    ``rho = inf`` gives the identity channel.
    """
    xa = _x_alphabet(x_size)
    k = len(xa)
    if not (rho >= 0):
        raise InvalidParam(f"rho must be nonnegative, got {rho!r}")
    if math.isinf(rho):
        return Mechanism(xa, np.eye(k))
    # exp(-rho) form stays finite for large rho.
    off = 1.0 / (math.exp(rho) + k - 1.0) if rho < 700 else 0.0
    rows = np.full((k, k), off)
    np.fill_diagonal(rows, 1.0 - (k - 1) * off)
    return Mechanism(xa, rows)


def rr_from_unit(theta: float, x_size) -> Mechanism:
    """Randomized response indexed by ``theta`` in ``[0, 1]``: diagonal ``1/k + theta (1 - 1/k)``."""
    xa = _x_alphabet(x_size)
    k = len(xa)
    if not (0.0 <= theta <= 1.0):
        raise InvalidParam(f"theta must lie in [0, 1], got {theta!r}")
    off = (1.0 - theta) / k
    rows = np.full((k, k), off)
    np.fill_diagonal(rows, 1.0 - (k - 1) * off)
    return Mechanism(xa, rows)


def rr_rho(theta: float, k: int) -> float:
    """Convert the unit parameter of :func:`rr_from_unit` to ``rho``."""
    if theta >= 1.0:
        return math.inf
    return math.log1p(k * theta / (1.0 - theta))


def z_channel(xbar: int, zeta: float, x_size) -> Mechanism:
    """``xbar`` is kept; every other symbol is kept w.p. ``1 - zeta`` and sent to ``xbar`` w.p. ``zeta``."""
    xa = _x_alphabet(x_size)
    k = len(xa)
    if not (0 <= int(xbar) < k):
        raise InvalidParam(f"xbar must index the X alphabet, got {xbar!r}")
    if not (0.0 <= zeta <= 1.0):
        raise InvalidParam(f"zeta must lie in [0, 1], got {zeta!r}")
    rows = np.eye(k) * (1.0 - zeta)
    rows[:, int(xbar)] += zeta
    rows[int(xbar)] = 0.0
    rows[int(xbar), int(xbar)] = 1.0
    return Mechanism(xa, rows)


def constant_channel(x_size) -> Mechanism:
    """Every input goes to output 0, so the output carries no information."""
    xa = _x_alphabet(x_size)
    rows = np.zeros((len(xa), 1))
    rows[:, 0] = 1.0
    return Mechanism(xa, rows)


def epsilon_min(spec: MeasureSpec, q: JointDistribution) -> float:
    """Smallest achievable leakage; attained by :func:`constant_channel`."""
    if spec.kind == "pc":
        return float(marginal_s(q).max())
    return 0.0


def p_sharp_q(p: float, q: float) -> JointDistribution:
    """``S ~ Bernoulli(p)`` observed through a binary symmetric channel with crossover ``q``."""
    return new_joint(
        [[(1 - p) * (1 - q), (1 - p) * q], [p * q, p * (1 - q)]]
    )


def guessing_closed_form(p: float, q: float, eps: float) -> float:
    """Privacy-utility function of the guessing measures for ``p_sharp_q(p, q)``.

    Valid for ``1/2 <= p <= 1``, ``0 <= q <= 1 - p``, ``q < p`` and
    ``p <= eps <= 1 - q``; affine in ``eps``.
    """
    tol = 1e-12
    if not (0.5 - tol <= p <= 1 + tol) or not (-tol <= q <= 1 - p + tol) or not (p > q):
        raise OutOfRange(f"(p, q) = ({p}, {q}) outside the closed-form domain")
    if not (p - tol <= eps <= 1 - q + tol):
        raise OutOfRange(f"eps = {eps} outside [{p}, {1 - q}]")
    slope = (p + q - 2 * p * q) / (p - q)
    return 1.0 - (1.0 - q) * slope + eps * slope


# ----------------------------------------------------------- batched measures


def _batch_measure(spec: MeasureSpec, joints: np.ndarray, channels: np.ndarray | None = None) -> np.ndarray:
    if spec.kind == "pc":
        return pc_posterior_kernel(joints)
    if spec.kind == "f":
        return f_information_kernel(joints, spec.fgen)
    if spec.kind == "arimoto":
        return arimoto_kernel(joints, spec.alpha)
    if spec.kind == "sibson":
        return sibson_kernel(joints, spec.alpha)
    if spec.kind == "shannon":
        return shannon_kernel(joints)
    # maximal leakage: one capacity per channel
    return np.array([channel_capacity(c, spec.alpha).value for c in channels])


def _leakage_batch(spec, s_masses: np.ndarray, w_rows: np.ndarray) -> np.ndarray:
    """Leakage for stacks of joints ``(B, S, X)`` and/or mechanisms ``(B, X, N)``."""
    sy = np.einsum("...sx,...xn->...sn", s_masses, w_rows)
    if spec.kind != "maxal":
        return _batch_measure(spec, sy)
    ps = s_masses.sum(axis=-1)
    sy_b, ps_b = np.broadcast_arrays(sy, ps[..., None])
    out = []
    for j, p in zip(sy_b.reshape(-1, *sy.shape[-2:]), ps_b.reshape(-1, *sy.shape[-2:])):
        live = p[:, 0] > 0
        out.append(channel_capacity(j[live] / p[live], spec.alpha).value)
    return np.asarray(out).reshape(sy.shape[:-2])


def _utility_batch(spec, s_masses: np.ndarray, w_rows: np.ndarray) -> np.ndarray:
    px = s_masses.sum(axis=-2)
    xy = px[..., :, None] * w_rows
    if spec.kind != "maxal":
        return _batch_measure(spec, xy)
    xy_b, w_b = np.broadcast_arrays(xy, w_rows)
    vals = [channel_capacity(w, spec.alpha).value for w in w_b.reshape(-1, *w_rows.shape[-2:])]
    return np.asarray(vals).reshape(xy_b.shape[:-2])


# -------------------------------------------------------------------- results


@dataclass(frozen=True)
class FamilySpec:
    """Design family: ``rr`` (randomized response), ``z`` (Z-channels, all
    ``xbar`` when ``xbar`` is None) or ``grid`` (lattice with ``n_outputs``
    columns and entries in multiples of ``step``)."""

    kind: str
    xbar: int | None = None
    n_outputs: int | None = None
    step: float | None = None

    def __post_init__(self):
        if self.kind not in ("rr", "z", "grid"):
            raise InvalidParam(f"unknown family {self.kind!r}")
        if self.kind == "grid" and (self.n_outputs is None or self.step is None):
            raise InvalidParam("grid family needs n_outputs and step")

    def __str__(self) -> str:
        if self.kind == "rr":
            return "rr"
        if self.kind == "z":
            return "z" if self.xbar is None else f"z({self.xbar})"
        return f"grid({self.n_outputs},{self.step:g})"


@dataclass(frozen=True)
class DesignResult:
    mechanism: Mechanism
    epsilon: float
    achieved_leakage: float
    achieved_utility: float
    family: FamilySpec
    method: str
    parameter: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "family": str(self.family),
            "method": self.method,
            "epsilon": self.epsilon,
            "achieved_leakage": self.achieved_leakage,
            "achieved_utility": self.achieved_utility,
            "parameter": {k: _jsonable(v) for k, v in self.parameter.items()},
            "mechanism": self.mechanism.rows.tolist(),
        }


@dataclass(frozen=True)
class BallVerification:
    samples_checked: int
    max_leakage_in_ball: float
    passed: bool


@dataclass(frozen=True)
class UniformDesignResult:
    inner: DesignResult
    epsilon: float
    r: float
    c_l: float
    shrunk_epsilon: float
    verification: BallVerification

    def to_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "r": self.r,
            "c_l": self.c_l,
            "shrunk_epsilon": self.shrunk_epsilon,
            "samples_checked": self.verification.samples_checked,
            "max_leakage_in_ball": self.verification.max_leakage_in_ball,
            "pass": self.verification.passed,
            "inner": self.inner.to_dict(),
        }


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf"
    if isinstance(v, np.generic):
        return v.item()
    return v


# ---------------------------------------------------------------- 1-D design


def _family_mechanism(kind: str, xbar: int | None, theta: float, xa: Alphabet) -> Mechanism:
    if kind == "rr":
        return rr_from_unit(theta, xa)
    return z_channel(xbar, theta, xa)


def _family_stack(kind: str, xbar: int | None, thetas: np.ndarray, k: int) -> np.ndarray:
    thetas = np.asarray(thetas, dtype=float)[:, None, None]
    eye = np.eye(k)
    if kind == "rr":
        off = (1.0 - thetas) / k
        return off + eye * (1.0 - k * off)
    # "z": the kept fraction of a non-xbar symbol is 1 - zeta
    rows = eye * (1.0 - thetas)
    rows[:, :, xbar] += thetas[:, :, 0]
    rows[:, xbar, :] = eye[xbar]
    return rows


def _design_1d(kind, xbar, spec_l, spec_u, q, eps):
    k = q.shape[1]
    xa = q.x_alphabet
    mass = q.mass

    def evaluate(thetas):
        stack = _family_stack(kind, xbar, thetas, k)
        return _leakage_batch(spec_l, mass, stack), _utility_batch(spec_u, mass, stack)

    grid = np.linspace(0.0, 1.0, FAMILY_GRID)
    # For Z-channels larger zeta means more noise; flip so theta -> more information.
    to_param = (lambda t: 1.0 - t) if kind == "z" else (lambda t: t)
    params = np.array([to_param(t) for t in grid])
    lv, uv = evaluate(params)
    feas = lv <= eps + FEAS_TOL
    if not feas.any():
        raise Infeasible(
            f"budget {eps} is below the smallest leakage {lv.min():.6g} of the {kind} family"
        )

    def single(t):
        lval, uval = evaluate(np.array([to_param(t)]))
        return float(lval[0]), float(uval[0])

    cands = []
    masked = np.where(feas, uv, -np.inf)
    top = masked.max()
    for i in np.flatnonzero(masked >= top - TIE_TOL):
        cands.append((grid[i], float(lv[i]), float(uv[i])))
        for j in (i - 1, i + 1):
            if not (0 <= j < FAMILY_GRID):
                continue
            if not feas[j]:
                lo, hi = grid[i], grid[j]
                while abs(hi - lo) > PARAM_TOL:
                    mid = 0.5 * (lo + hi)
                    if single(mid)[0] <= eps + FEAS_TOL:
                        lo = mid
                    else:
                        hi = mid
                cands.append((lo, *single(lo)))
            else:
                a, b = sorted((grid[i], grid[j]))
                invphi = (math.sqrt(5.0) - 1.0) / 2.0

                def obj(t):
                    lval, uval = single(t)
                    return uval if lval <= eps + FEAS_TOL else -np.inf

                c, d = b - invphi * (b - a), a + invphi * (b - a)
                fc, fd = obj(c), obj(d)
                while b - a > PARAM_TOL:
                    if fc >= fd:
                        b, d, fd = d, c, fc
                        c = b - invphi * (b - a)
                        fc = obj(c)
                    else:
                        a, c, fc = c, d, fd
                        d = a + invphi * (b - a)
                        fd = obj(d)
                t = 0.5 * (a + b)
                lval, uval = single(t)
                if lval <= eps + FEAS_TOL:
                    cands.append((t, lval, uval))
    best_u = max(c[2] for c in cands)
    t, lval, uval = min((c for c in cands if c[2] >= best_u - TIE_TOL), key=lambda c: c[0])
    theta = to_param(t)
    mech = _family_mechanism(kind, xbar, theta, xa)
    if kind == "rr":
        param = {"theta": float(theta), "rho": rr_rho(theta, k)}
    else:
        param = {"xbar": int(xbar), "zeta": float(theta)}
    return mech, lval, uval, param


def design_in_family(
    family: FamilySpec, spec_l: MeasureSpec, spec_u: MeasureSpec, q: JointDistribution, eps: float
) -> DesignResult:
    """Best mechanism of ``family`` under the budget ``leakage <= eps``.

    One-parameter families are scanned on 201 points; the best feasible
    point is then refined to ``1e-6`` in the parameter by bisection when a
    neighbour violates the budget and by golden-section search on the
    utility otherwise.  Z-channels try every ``xbar`` unless one is fixed.

    Raises
    ------
    Infeasible
        If no member of the family meets the budget.
    """
    if family.kind == "grid":
        h, mechs = lattice_privacy_utility(spec_l, spec_u, q, eps, family.n_outputs, family.step)
        w = mechs[0]
        return DesignResult(
            w, float(eps), leakage(spec_l, q, w), utility(spec_u, q, w), family, "lattice",
            {"ties": len(mechs)},
        )
    if family.kind == "rr":
        mech, lval, uval, param = _design_1d("rr", None, spec_l, spec_u, q, eps)
        return DesignResult(mech, float(eps), lval, uval, family, "grid+refine", param)
    xbars = range(q.shape[1]) if family.xbar is None else [family.xbar]
    best = None
    for xb in xbars:
        res = _design_1d("z", int(xb), spec_l, spec_u, q, eps)
        if best is None or res[2] > best[2] + TIE_TOL:
            best = res
    mech, lval, uval, param = best
    return DesignResult(mech, float(eps), lval, uval, family, "grid+refine", param)


# -------------------------------------------------------------- lattice oracle


@lru_cache(maxsize=32)
def _lattice_rows(n_outputs: int, units: int) -> np.ndarray:
    """All rows of ``n_outputs`` nonnegative integers summing to ``units``, lexicographically ascending."""

    def rec(total, parts):
        if parts == 1:
            yield (total,)
            return
        for first in range(total + 1):
            for rest in rec(total - first, parts - 1):
                yield (first, *rest)

    rows = np.array(list(rec(units, n_outputs)), dtype=float) / units
    rows.setflags(write=False)
    return rows


def _units(step: float) -> int:
    units = int(round(1.0 / step))
    if units < 1 or abs(units * step - 1.0) > 1e-9:
        raise InvalidParam(f"step {step} must divide 1")
    return units


def lattice_size(x_size: int, n_outputs: int, step: float) -> int:
    return math.comb(_units(step) + n_outputs - 1, n_outputs - 1) ** x_size


def _check_guard(x_size: int, n_outputs: int, step: float) -> None:
    if x_size > MAX_X or n_outputs > MAX_N or step < MIN_STEP - 1e-12:
        raise TooLarge(
            f"lattice oracle limited to |X| <= {MAX_X}, N <= {MAX_N}, step >= {MIN_STEP}; "
            f"got |X| = {x_size}, N = {n_outputs}, step = {step}"
        )
    if n_outputs < 1:
        raise InvalidParam("N must be positive")
    size = lattice_size(x_size, n_outputs, step)
    if size > MAX_LATTICE:
        raise TooLarge(f"lattice has {size} mechanisms, above the limit of {MAX_LATTICE}")


@dataclass(frozen=True)
class LatticeScan:
    """Privacy-utility values over a lattice for a list of budgets.

    ``h[k]`` is ``nan`` when no lattice point meets ``eps[k]``;
    ``argmax[k]`` holds lattice indices of all maximizers within ``1e-9``.
    """

    eps: np.ndarray
    h: np.ndarray
    argmax: tuple
    rows: np.ndarray
    choices: tuple
    x_alphabet: Alphabet

    def mechanisms(self, k: int) -> list[Mechanism]:
        return [Mechanism(self.x_alphabet, m) for m in _decode(self.argmax[k], self.rows, self.choices)]

    def matrices(self, k: int) -> np.ndarray:
        return _decode(self.argmax[k], self.rows, self.choices)


def _decode(idx: np.ndarray, rows: np.ndarray, choices: tuple) -> np.ndarray:
    idx = np.asarray(idx, dtype=np.int64).copy()
    picks = []
    for ch in reversed(choices):
        picks.append(ch[idx % len(ch)])
        idx //= len(ch)
    picks.reverse()
    return np.stack([rows[p] for p in picks], axis=1)


def lattice_scan(
    spec_l: MeasureSpec,
    spec_u: MeasureSpec,
    q: JointDistribution,
    eps,
    n_outputs: int,
    step: float,
    keep_tol=TIE_TOL,
) -> LatticeScan:
    """Exhaustive privacy-utility evaluation over the step lattice.

    Rows for ``x`` with zero marginal do not affect joint-based measures
    and are pinned to the lexicographically smallest lattice row.
    ``keep_tol`` (scalar or one per budget) sets how far below the best
    utility a feasible point may be and still be reported.
    """
    x_size = q.shape[1]
    _check_guard(x_size, n_outputs, step)
    rows = _lattice_rows(int(n_outputs), _units(step))
    eps = np.atleast_1d(np.asarray(eps, dtype=float))
    tols = np.broadcast_to(np.asarray(keep_tol, dtype=float), eps.shape)
    px = marginal_x(q)
    pin = spec_l.kind != "maxal" and spec_u.kind != "maxal"
    all_rows = np.arange(len(rows))
    choices = tuple(all_rows[:1] if (pin and px[x] == 0) else all_rows for x in range(x_size))
    total = int(np.prod([len(c) for c in choices]))

    best = np.full(eps.size, -np.inf)
    keep_idx = [np.empty(0, dtype=np.int64) for _ in eps]
    keep_u = [np.empty(0) for _ in eps]
    mass = q.mass
    for start in range(0, total, CHUNK):
        idx = np.arange(start, min(total, start + CHUNK), dtype=np.int64)
        w = _decode(idx, rows, choices)
        lv = _leakage_batch(spec_l, mass, w)
        uv = _utility_batch(spec_u, mass, w)
        for k, e in enumerate(eps):
            feas = lv <= e + FEAS_TOL
            if not feas.any():
                continue
            u = np.where(feas, uv, -np.inf)
            top = u.max()
            if top < best[k] - tols[k]:
                continue
            best[k] = max(best[k], top)
            sel = u >= best[k] - tols[k]
            ki = np.concatenate([keep_idx[k], idx[sel]])
            ku = np.concatenate([keep_u[k], u[sel]])
            live = ku >= best[k] - tols[k]
            keep_idx[k], keep_u[k] = ki[live], ku[live]
    h = np.where(np.isfinite(best), best, np.nan)
    return LatticeScan(eps, h, tuple(keep_idx), rows, choices, q.x_alphabet)


def lattice_privacy_utility(
    spec_l: MeasureSpec,
    spec_u: MeasureSpec,
    q: JointDistribution,
    eps: float,
    n_outputs: int,
    step: float,
) -> tuple[float, list[Mechanism]]:
    """Largest lattice utility subject to ``leakage <= eps`` and all its maximizers.

    Raises
    ------
    TooLarge
        If ``|X| > 3``, ``N > 4``, ``step < 0.01`` or the lattice exceeds
        thirty million mechanisms.
    Infeasible
        If no lattice mechanism meets the budget.
    """
    scan = lattice_scan(spec_l, spec_u, q, [eps], n_outputs, step)
    if np.isnan(scan.h[0]):
        raise Infeasible(f"no lattice mechanism has leakage <= {eps}")
    return float(scan.h[0]), scan.mechanisms(0)


def one_move_resolution(spec_u: MeasureSpec, q: JointDistribution, mats: np.ndarray, step: float) -> float:
    """Largest utility change from moving ``step`` of mass between two entries of one row.

    Evaluated around each matrix in ``mats``; this is the finest utility
    difference the lattice can resolve near those points.
    """
    moves = []
    for w in np.asarray(mats, dtype=float):
        for x in range(w.shape[0]):
            for a in range(w.shape[1]):
                if w[x, a] < step - 1e-12:
                    continue
                for b in range(w.shape[1]):
                    if a != b:
                        v = w.copy()
                        v[x, a] -= step
                        v[x, b] += step
                        moves.append((w, np.maximum(v, 0.0)))
    if not moves:
        return 0.0
    base = _utility_batch(spec_u, q.mass, np.stack([m[0] for m in moves]))
    moved = _utility_batch(spec_u, q.mass, np.stack([m[1] for m in moves]))
    return float(np.abs(moved - base).max())


def optimal_set(
    spec_l: MeasureSpec,
    spec_u: MeasureSpec,
    q: JointDistribution,
    eps: float,
    n_outputs: int,
    step: float,
) -> tuple[float, np.ndarray, float]:
    """Lattice stand-in for the set of optimal mechanisms at ``eps``.

    Keeps every feasible lattice point whose utility is within one-move
    resolution (see :func:`one_move_resolution`) of the lattice optimum.
    When the true optimal set is a continuum, the exact lattice ties are
    a few points scattered along it; this band covers it at lattice
    resolution instead.

    Returns
    -------
    h : float
        Lattice optimum.
    mats : ndarray, shape (k, |X|, N)
        Members of the band.
    resolution : float
        The utility tolerance used.
    """
    strict = lattice_scan(spec_l, spec_u, q, [eps], n_outputs, step)
    if np.isnan(strict.h[0]):
        raise Infeasible(f"no lattice mechanism has leakage <= {eps}")
    res = one_move_resolution(spec_u, q, strict.matrices(0), step)
    band = lattice_scan(spec_l, spec_u, q, [eps], n_outputs, step, keep_tol=max(res, TIE_TOL))
    return float(strict.h[0]), band.matrices(0), res


def dist_to_set(w, mechanisms) -> float:
    """Smallest entrywise l1 distance from ``w`` to a member of ``mechanisms``."""
    mats = [m.rows if isinstance(m, Mechanism) else np.asarray(m, dtype=float) for m in mechanisms]
    if not mats:
        raise EmptySet("distance to an empty set of mechanisms")
    target = w.rows if isinstance(w, Mechanism) else np.asarray(w, dtype=float)
    stack = np.stack(mats)
    if stack.shape[1:] != target.shape:
        raise InvalidParam(f"shape {target.shape} differs from set shape {stack.shape[1:]}")
    return float(np.abs(stack - target).sum(axis=(1, 2)).min())


# ------------------------------------------------------------ uniform design


def _ball_masses(center: JointDistribution, r: float, m: int, seed: int, constraint=None) -> np.ndarray:
    return np.stack([p.mass for p in sample_ball(center, r, constraint, m, seed)])


def uniform_constant(spec: MeasureSpec, side: str, p_hat: JointDistribution, r: float) -> float:
    """Lipschitz constant valid on the whole ball of radius ``r`` around ``p_hat``.

    Margin-dependent constants use ``(min marginal - r)_+``.
    """
    margin = None
    if needs_margin(spec, side):
        marg = marginal_s(p_hat) if side == "privacy" else marginal_x(p_hat)
        margin = max(float(marg.min()) - r, 0.0)
        if margin <= 0.0:
            raise InfeasibleShrunkBudget(
                f"{spec} needs a positive margin over the ball; min marginal minus r is {margin}"
            )
    s_size, x_size = p_hat.shape
    return lipschitz_constant(BoundContext(spec, side, s_size, x_size, margin))


def verify_in_ball(
    spec_l: MeasureSpec,
    w: Mechanism,
    center: JointDistribution,
    eps: float,
    r: float,
    m: int = 500,
    seed: int = 0,
    constraint=None,
) -> BallVerification:
    masses = _ball_masses(center, r, m, seed, constraint)
    lv = _leakage_batch(spec_l, masses, w.rows)
    top = float(lv.max())
    return BallVerification(len(masses), top, bool(top <= eps + TIE_TOL))


def uniform_design(
    spec_l: MeasureSpec,
    spec_u: MeasureSpec,
    p_hat: JointDistribution,
    eps: float,
    r: float,
    family: FamilySpec,
    *,
    m: int = 500,
    seed: int = 0,
    constraint=None,
) -> UniformDesignResult:
    """Design at the shrunk budget ``eps - C_L r`` and verify it on the ball.

    Raises
    ------
    InfeasibleShrunkBudget
        If the shrunk budget falls below the smallest achievable leakage
        at ``p_hat`` or the margin needed by ``C_L`` vanishes on the ball.
    """
    if r < 0:
        raise InvalidParam("r must be nonnegative")
    c_l = uniform_constant(spec_l, "privacy", p_hat, r)
    shrunk = eps - c_l * r
    floor = epsilon_min(spec_l, p_hat)
    if shrunk < floor - FEAS_TOL:
        raise InfeasibleShrunkBudget(
            f"shrunk budget {shrunk:.6g} = {eps} - {c_l:.6g} * {r} is below the minimum leakage {floor:.6g}"
        )
    try:
        inner = design_in_family(family, spec_l, spec_u, p_hat, shrunk)
    except Infeasible as exc:
        raise InfeasibleShrunkBudget(str(exc)) from None
    ver = verify_in_ball(spec_l, inner.mechanism, p_hat, eps, r, m, seed, constraint)
    return UniformDesignResult(inner, float(eps), float(r), c_l, shrunk, ver)


def worst_case_utility(
    spec_u: MeasureSpec, p_hat: JointDistribution, w: Mechanism, r: float, m: int = 500, seed: int = 0
) -> float:
    """Smallest utility of ``w`` over sampled points of the ball (center and boundary probes included)."""
    if r == 0:
        return utility(spec_u, p_hat, w)
    masses = _ball_masses(p_hat, r, m, seed)
    return float(_utility_batch(spec_u, masses, w.rows).min())


def brute_force_uniform(
    spec_l: MeasureSpec,
    spec_u: MeasureSpec,
    p_hat: JointDistribution,
    eps: float,
    r: float,
    n_outputs: int,
    step: float,
    m: int = 500,
    seed: int = 0,
) -> Mechanism:
    """Lattice proxy for the best uniformly private mechanism.

    Among lattice mechanisms whose largest leakage over the sampled ball
    is at most ``eps``, return the one with the largest sampled
    worst-case utility (lexicographically first among ties).

    Raises
    ------
    EmptyFeasibleSet
        If no lattice mechanism is private on every sampled point.
    """
    _check_guard(p_hat.shape[1], n_outputs, step)
    rows = _lattice_rows(int(n_outputs), _units(step))
    choices = tuple(np.arange(len(rows)) for _ in range(p_hat.shape[1]))
    total = len(rows) ** p_hat.shape[1]
    masses = _ball_masses(p_hat, r, m, seed)
    budget = max(1, (1 << 20) // max(1, masses.shape[0]))
    best_u, best_idx = -np.inf, None
    for start in range(0, total, budget):
        idx = np.arange(start, min(total, start + budget), dtype=np.int64)
        w = _decode(idx, rows, choices)
        lv = _leakage_batch(spec_l, masses[None], w[:, None]).max(axis=1)
        uv = _utility_batch(spec_u, masses[None], w[:, None]).min(axis=1)
        u = np.where(lv <= eps + TIE_TOL, uv, -np.inf)
        i = int(np.argmax(u))
        if u[i] > best_u + TIE_TOL:
            best_u, best_idx = float(u[i]), int(idx[i])
    if best_idx is None:
        raise EmptyFeasibleSet(f"no lattice mechanism is private at {eps} over the sampled ball")
    return Mechanism(p_hat.x_alphabet, _decode(np.array([best_idx]), rows, choices)[0])
