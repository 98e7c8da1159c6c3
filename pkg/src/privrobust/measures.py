"""Leakage and utility measures on finite joints.

The array kernels (``*_kernel``) take a joint mass of shape ``(..., U, V)``
and reduce the last two axes, so a stack of joints is evaluated in one
call.  The public functions accept either a :class:`JointDistribution` or
a plain matrix and return a Python float.  Logarithms are natural, so the
log-based measures are in nats.
"""

from __future__ import annotations

import itertools
import math
import re
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import InvalidParam, OptimizerNotConverged, TooLarge
from .prob import JointDistribution, Mechanism, marginal_s, push_forward

INF = math.inf
ALPHA_MIN_GAP = 1e-6
FALLBACK_GRID = 10_000


def _mass(joint) -> np.ndarray:
    if isinstance(joint, JointDistribution):
        return joint.mass
    return np.asarray(joint, dtype=float)


# ---------------------------------------------------------------- f-generators


@dataclass(frozen=True)
class FGenerator:
    """Convex ``f`` with ``f(1) = 0`` together with its two local constants.

    ``k_sup(u)`` is the sup norm of ``f`` on ``[0, u]`` and ``l_lip(u)``
    its Lipschitz constant there.  When either is omitted it is estimated
    on a uniform grid of 10 000 points, which is approximate (it can only
    under-estimate a sup).
    """

    name: str
    f: Callable[[np.ndarray], np.ndarray]
    k_sup: Callable[[float], float] | None = None
    l_lip: Callable[[float], float] | None = None

    def _grid(self, u: float) -> tuple[np.ndarray, np.ndarray]:
        t = np.linspace(0.0, u, FALLBACK_GRID)
        return t, np.asarray(self.f(t), dtype=float)

    def k(self, u: float) -> float:
        if self.k_sup is not None:
            return float(self.k_sup(u))
        _, v = self._grid(u)
        return float(np.abs(v).max())

    def lip(self, u: float) -> float:
        if self.l_lip is not None:
            return float(self.l_lip(u))
        t, v = self._grid(u)
        return float((np.abs(np.diff(v)) / np.diff(t)).max())

    def __str__(self) -> str:
        return self.name


def tv_generator() -> FGenerator:
    return FGenerator(
        "tv",
        lambda t: 0.5 * np.abs(np.asarray(t, dtype=float) - 1.0),
        k_sup=lambda u: max(1.0, u - 1.0) / 2.0,
        l_lip=lambda u: 0.5,
    )


def chi2_generator() -> FGenerator:
    return FGenerator(
        "chi2",
        lambda t: (np.asarray(t, dtype=float) - 1.0) ** 2,
        k_sup=lambda u: max(1.0, (u - 1.0) ** 2),
        l_lip=lambda u: 2.0 * max(1.0, u - 1.0),
    )


def hellinger_generator(alpha: float) -> FGenerator:
    """``f(t) = (t**alpha - 1) / (alpha - 1)`` for ``alpha > 1``."""
    alpha = float(alpha)
    if not (alpha > 1.0) or math.isinf(alpha):
        raise InvalidParam(f"hellinger order must be a finite number > 1, got {alpha!r}")
    return FGenerator(
        f"hellinger({_fmt_alpha(alpha)})",
        lambda t: (np.asarray(t, dtype=float) ** alpha - 1.0) / (alpha - 1.0),
        k_sup=lambda u: max(1.0, u**alpha - 1.0) / (alpha - 1.0),
        l_lip=lambda u: alpha * u ** (alpha - 1.0) / (alpha - 1.0),
    )


# --------------------------------------------------------------- measure specs

KINDS = ("pc", "f", "arimoto", "sibson", "maxal", "shannon")
LOG_KINDS = ("arimoto", "sibson", "maxal", "shannon")


def _fmt_alpha(alpha: float) -> str:
    if math.isinf(alpha):
        return "inf"
    text = repr(float(alpha))
    return text[:-2] if text.endswith(".0") else text


def check_alpha(alpha) -> float:
    """Validate an order parameter in ``(1, inf]``."""
    try:
        a = float(alpha)
    except (TypeError, ValueError):
        raise InvalidParam(f"order must be a number or 'inf', got {alpha!r}") from None
    if math.isnan(a) or a <= 1.0:
        raise InvalidParam(f"order must exceed 1, got {alpha!r}")
    if a < 1.0 + ALPHA_MIN_GAP:
        raise InvalidParam(f"order {alpha!r} is too close to 1 (alpha/(alpha-1) cancels)")
    return a


@dataclass(frozen=True)
class MeasureSpec:
    """Selects one measure family and its parameters.

    ``kind`` is one of ``pc``, ``f``, ``arimoto``, ``sibson``, ``maxal``
    and ``shannon``.  ``alpha`` is used by the three order-indexed families
    and may be ``math.inf``; ``fgen`` by ``f``.
    """

    kind: str
    alpha: float | None = None
    fgen: FGenerator | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidParam(f"unknown measure kind {self.kind!r}")
        if self.kind in ("arimoto", "sibson", "maxal"):
            object.__setattr__(self, "alpha", check_alpha(self.alpha))
        elif self.alpha is not None:
            raise InvalidParam(f"measure {self.kind!r} takes no order")
        if (self.kind == "f") != (self.fgen is not None):
            raise InvalidParam("an f-generator is required exactly for f-information")

    @property
    def units(self) -> str:
        if self.kind == "pc":
            return "probability"
        if self.kind == "f":
            return "divergence"
        return "nats"

    def __str__(self) -> str:
        if self.kind in ("pc", "shannon"):
            return self.kind
        if self.kind == "f":
            return f"f:{self.fgen.name}"
        return f"{self.kind}({_fmt_alpha(self.alpha)})"


_ORDER_RE = re.compile(r"^(arimoto|sibson|maxal)\(([^()]+)\)$")
_HELL_RE = re.compile(r"^f:hellinger\(([^()]+)\)$")


def _parse_number(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "infinity", "+inf"):
        return INF
    try:
        return float(text)
    except ValueError:
        raise InvalidParam(f"cannot parse order {text!r}") from None


def parse_measure(text: str) -> MeasureSpec:
    """Parse ``pc``, ``f:tv``, ``f:chi2``, ``f:hellinger(a)``, ``arimoto(a)``,
    ``sibson(a)``, ``maxal(a)`` or ``shannon``.

    An order of exactly 1 selects Shannon mutual information.
    """
    t = str(text).strip().lower().replace(" ", "")
    if t in ("pc", "shannon"):
        return MeasureSpec(t)
    if t == "f:tv":
        return MeasureSpec("f", fgen=tv_generator())
    if t == "f:chi2":
        return MeasureSpec("f", fgen=chi2_generator())
    m = _HELL_RE.match(t)
    if m:
        return MeasureSpec("f", fgen=hellinger_generator(_parse_number(m.group(1))))
    m = _ORDER_RE.match(t)
    if m:
        alpha = _parse_number(m.group(2))
        if alpha == 1.0:
            return MeasureSpec("shannon")
        return MeasureSpec(m.group(1), alpha=alpha)
    raise InvalidParam(f"unknown measure {text!r}")


# --------------------------------------------------------------- array kernels


def _norm_alpha(x: np.ndarray, alpha: float, axis: int) -> np.ndarray:
    """Scaled alpha-norm along ``axis``; safe against underflow for large alpha."""
    top = x.max(axis=axis, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    s = ((x / safe) ** alpha).sum(axis=axis, keepdims=True) ** (1.0 / alpha)
    return np.squeeze(top * s, axis=axis)


def pc_posterior_kernel(j: np.ndarray) -> np.ndarray:
    return j.max(axis=-2).sum(axis=-1)


def f_information_kernel(j: np.ndarray, fgen: FGenerator) -> np.ndarray:
    pu = j.sum(axis=-1, keepdims=True)
    pv = j.sum(axis=-2, keepdims=True)
    prod = pu * pv
    live = prod > 0
    ratio = np.where(live, j / np.where(live, prod, 1.0), 1.0)
    terms = np.where(live, prod * fgen.f(ratio), 0.0)
    return terms.sum(axis=(-2, -1))


def arimoto_kernel(j: np.ndarray, alpha: float) -> np.ndarray:
    pu = j.sum(axis=-1)
    if math.isinf(alpha):
        return np.log(j.max(axis=-2).sum(axis=-1) / pu.max(axis=-1))
    num = _norm_alpha(j, alpha, axis=-2).sum(axis=-1)
    den = _norm_alpha(pu, alpha, axis=-1)
    return alpha / (alpha - 1.0) * np.log(num / den)


def sibson_kernel(j: np.ndarray, alpha: float) -> np.ndarray:
    pu = j.sum(axis=-1, keepdims=True)
    live = pu > 0
    cond = np.where(live, j / np.where(live, pu, 1.0), 0.0)
    top = cond.max(axis=-2)
    if math.isinf(alpha):
        return np.log(top.sum(axis=-1))
    safe = np.where(top > 0, top, 1.0)[..., None, :]
    inner = (pu * (cond / safe) ** alpha).sum(axis=-2)
    return alpha / (alpha - 1.0) * np.log((top * inner ** (1.0 / alpha)).sum(axis=-1))


def shannon_kernel(j: np.ndarray) -> np.ndarray:
    pu = j.sum(axis=-1, keepdims=True)
    pv = j.sum(axis=-2, keepdims=True)
    live = j > 0
    # summed logs avoid underflow of pu * pv for tiny masses
    one = lambda a: np.where(live, a, 1.0)
    logs = np.log(one(j)) - np.log(one(pu)) - np.log(one(pv))
    return np.where(live, j * logs, 0.0).sum(axis=(-2, -1))


# ------------------------------------------------------------ public measures


def pc_prior(p) -> float:
    """Probability of guessing ``U`` correctly without observations."""
    return float(np.max(np.asarray(p, dtype=float)))


def pc_posterior(joint) -> float:
    """Probability of guessing ``U`` correctly after observing ``V`` (MAP rule)."""
    return float(pc_posterior_kernel(_mass(joint)))


def f_information(joint, fgen: FGenerator) -> float:
    """f-divergence between the joint and the product of its marginals."""
    return float(f_information_kernel(_mass(joint), fgen))


def arimoto_mi(joint, alpha: float) -> float:
    """Arimoto mutual information of order ``alpha`` in ``(1, inf]``."""
    return float(arimoto_kernel(_mass(joint), check_alpha(alpha)))


def sibson_mi(joint, alpha: float) -> float:
    """Sibson mutual information of order ``alpha`` in ``(1, inf]``.

    Rows with zero ``U``-mass are dropped from the conditional.
    """
    return float(sibson_kernel(_mass(joint), check_alpha(alpha)))


def shannon_mi(joint) -> float:
    return float(shannon_kernel(_mass(joint)))


# --------------------------------------------------------- maximal alpha-leakage


@dataclass(frozen=True)
class CapacityResult:
    """Outcome of the sup over input laws for one channel."""

    value: float
    input_law: np.ndarray
    gap: float
    iterations: int
    method: str


def _capacity_objective(p: np.ndarray, ka: np.ndarray, wt: np.ndarray, alpha: float):
    v = np.maximum(p @ ka, 1e-300)
    f = float((wt * v ** (1.0 / alpha)).sum())
    g = (ka @ (wt * v ** (1.0 / alpha - 1.0))) / alpha
    gap = max(float(g.max()) - f / alpha, 0.0)
    return f, gap


def _value_gap(f: float, gap: float, alpha: float) -> float:
    return alpha / (alpha - 1.0) * math.log1p(gap / f)


def _golden_two_inputs(ka: np.ndarray, wt: np.ndarray, alpha: float) -> tuple[np.ndarray, int]:
    def obj(t):
        return float((wt * (t * ka[0] + (1.0 - t) * ka[1]) ** (1.0 / alpha)).sum())

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 0.0, 1.0
    c, d = b - invphi * (b - a), a + invphi * (b - a)
    fc, fd = obj(c), obj(d)
    it = 0
    while b - a > 1e-13 and it < 200:
        it += 1
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = obj(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = obj(d)
    cands = [0.0, 1.0, 0.5 * (a + b)]
    best = max(cands, key=obj)
    return np.array([best, 1.0 - best]), it


def _derivatives(p, ka, wt, alpha, hessian=False):
    v = np.maximum(p @ ka, 1e-300)
    f = float((wt * v ** (1.0 / alpha)).sum())
    g = (ka @ (wt * v ** (1.0 / alpha - 1.0))) / alpha
    if not hessian:
        return f, g
    h = (ka * (wt * v ** (1.0 / alpha - 2.0))) @ ka.T * ((1.0 / alpha) * (1.0 / alpha - 1.0))
    return f, g, h


def _active_set_newton(ka, wt, alpha, p, tol, max_iter):
    """Maximize the concave objective over the simplex.

    Newton steps on the face spanned by the free coordinates, with a
    backtracking line search; a coordinate leaves the face when a step
    reaches zero and re-enters when its partial derivative exceeds the
    face multiplier.
    """
    k = p.size
    for _ in range(50):
        f, g = _derivatives(p, ka, wt, alpha)
        cand = p * g / (p @ g)
        p = cand
    f, g = _derivatives(p, ka, wt, alpha)
    lam = float(p @ g)
    free = (p > 1e-10) | (g > lam)
    p = np.where(free, p, 0.0)
    p /= p.sum()
    it = 0
    while True:
        f, g, h = _derivatives(p, ka, wt, alpha, hessian=True)
        lam = float(p @ g)
        gap = max(float(g.max()) - lam, 0.0)
        if _value_gap(f, gap, alpha) <= tol:
            return p, f, gap, it
        if it >= max_iter:
            raise OptimizerNotConverged(
                f"maximal leakage optimizer stopped after {max_iter} iterations "
                f"with certified gap {_value_gap(f, gap, alpha):.3e}"
            )
        it += 1
        idx = np.flatnonzero(free)
        g_face = g[idx]
        face_res = float(g_face.max() - g_face.min())
        out = np.flatnonzero(~free)
        if out.size and g[out].max() > lam and face_res <= 1e-3 * (g[out].max() - lam):
            s = out[np.argmax(g[out])]
            free[s] = True
            continue
        m = idx.size
        if m == 1:
            free[np.argmax(np.where(free, -np.inf, g))] = True
            continue
        hf = h[np.ix_(idx, idx)]
        hf = hf - 1e-12 * (np.abs(np.diag(hf)).max() + 1e-300) * np.eye(m)
        kkt = np.zeros((m + 1, m + 1))
        kkt[:m, :m] = hf
        kkt[:m, m] = -1.0
        kkt[m, :m] = 1.0
        rhs = np.concatenate([-g_face, [0.0]])
        try:
            d_face = np.linalg.solve(kkt, rhs)[:m]
        except np.linalg.LinAlgError:
            d_face = g_face - g_face.mean()
        if not np.all(np.isfinite(d_face)) or g_face @ d_face <= 0:
            d_face = g_face - g_face.mean()
        d = np.zeros(k)
        d[idx] = d_face
        neg = d < 0
        t_max = float(np.min(p[neg] / -d[neg])) if neg.any() else np.inf
        t = min(1.0, t_max)
        while t > 1e-18:
            trial = np.maximum(p + t * d, 0.0)
            if float((wt * (trial @ ka) ** (1.0 / alpha)).sum()) >= f:
                break
            t *= 0.5
        else:
            trial = p
        if t == t_max:
            hit = np.flatnonzero(neg & (p + t * d <= 1e-15 * np.maximum(p, 1.0)))
            trial[hit] = 0.0
            free[hit] = False
        p = trial / trial.sum()


def channel_capacity(
    channel: np.ndarray, alpha: float, tol: float = 1e-8, max_iter: int = 100_000
) -> CapacityResult:
    """``sup_P`` of Sibson information of order ``alpha`` over input laws ``P``.

    Parameters
    ----------
    channel : ndarray, shape (k, N)
        Row-stochastic matrix; the sup ranges over the whole ``k``-simplex.
    tol : float
        Absolute tolerance on the returned value.  Termination is
        certified by the concavity gap ``max_s g_s - P.g`` of the
        objective ``F(P) = sum_y (sum_s P_s K_sy^alpha)^(1/alpha)``.

    Notes
    -----
    ``alpha = inf`` is closed form.  Two inputs use a golden-section
    search.  Larger inputs take a few multiplicative steps
    ``P_s <- P_s g_s / (P.g)`` as a warm start and then an active-set
    Newton method on the faces of the simplex.
    """
    k = np.asarray(channel, dtype=float)
    alpha = check_alpha(alpha)
    if math.isinf(alpha):
        p = np.full(k.shape[0], 1.0 / k.shape[0])
        return CapacityResult(float(np.log(k.max(axis=0).sum())), p, 0.0, 0, "closed-form")
    k = k[:, k.max(axis=0) > 0]
    if k.shape[0] == 1 or np.allclose(k, k[0], rtol=0.0, atol=0.0):
        p = np.zeros(k.shape[0])
        p[0] = 1.0
        return CapacityResult(0.0, p, 0.0, 0, "trivial")
    wt = k.max(axis=0)
    ka = (k / wt) ** alpha
    method, it = "newton", 0
    p = np.full(k.shape[0], 1.0 / k.shape[0])
    if k.shape[0] == 2:
        p, it = _golden_two_inputs(ka, wt, alpha)
        method = "golden-section"
        f, gap = _capacity_objective(p, ka, wt, alpha)
        if _value_gap(f, gap, alpha) > tol:
            p = 0.5 * p + 0.25
            method = "golden-section+newton"
    if method != "golden-section":
        p, f, gap, more = _active_set_newton(ka, wt, alpha, p, tol, max_iter)
        it += more
    value = alpha / (alpha - 1.0) * math.log(f)
    return CapacityResult(value, p, _value_gap(f, gap, alpha), it, method)


def _conditional_on_support(q: JointDistribution, w: Mechanism) -> np.ndarray:
    sy, _ = push_forward(q, w)
    ps = marginal_s(q)
    live = ps > 0
    return sy.mass[live] / ps[live, None]


def _subset_search_inf(k: np.ndarray, max_inputs: int = 16) -> float:
    # sup over input laws of the order-infinity Arimoto information,
    # evaluated over uniform laws on every nonempty subset of inputs.
    n = k.shape[0]
    if n > max_inputs:
        raise TooLarge(f"subset search over {n} inputs exceeds the guard of {max_inputs}")
    best = -INF
    for size in range(1, n + 1):
        for sub in itertools.combinations(range(n), size):
            law = np.zeros(n)
            law[list(sub)] = 1.0 / size
            best = max(best, float(arimoto_kernel(law[:, None] * k, INF)))
    return best


def max_alpha_leakage(
    q: JointDistribution,
    w: Mechanism,
    alpha: float,
    *,
    method: str = "auto",
    tol: float = 1e-8,
    max_iter: int = 100_000,
) -> float:
    """Maximal alpha-leakage from ``S`` to ``Y`` through ``w``.

    The sup over input laws is restricted to the support of the
    ``S``-marginal of ``q``.  ``method="search"`` (order infinity only)
    evaluates the Arimoto form on every uniform subset law instead of the
    closed form, as an independent route.
    """
    alpha = check_alpha(alpha)
    k = _conditional_on_support(q, w)
    if method == "search":
        if not math.isinf(alpha):
            raise InvalidParam("subset search is only defined for order infinity")
        return _subset_search_inf(k)
    if method != "auto":
        raise InvalidParam(f"unknown method {method!r}")
    return channel_capacity(k, alpha, tol=tol, max_iter=max_iter).value


def max_alpha_utility(w: Mechanism, alpha: float, *, tol: float = 1e-8) -> float:
    """Maximal alpha-leakage from ``X`` to ``Y``; depends on ``w`` only."""
    return channel_capacity(w.rows, alpha, tol=tol).value


# --------------------------------------------------------------------- dispatch


def measure_on_joint(spec: MeasureSpec, joint) -> float:
    """Evaluate a joint-only measure (everything except maximal leakage)."""
    j = _mass(joint)
    if spec.kind == "pc":
        return float(pc_posterior_kernel(j))
    if spec.kind == "f":
        return float(f_information_kernel(j, spec.fgen))
    if spec.kind == "arimoto":
        return float(arimoto_kernel(j, spec.alpha))
    if spec.kind == "sibson":
        return float(sibson_kernel(j, spec.alpha))
    if spec.kind == "shannon":
        return float(shannon_kernel(j))
    raise InvalidParam(f"{spec} is not a function of a single joint")


def leakage(spec: MeasureSpec, q: JointDistribution, w: Mechanism) -> float:
    """Leakage about ``S`` in the output ``Y`` of ``w`` applied to ``X``."""
    if spec.kind == "maxal":
        return max_alpha_leakage(q, w, spec.alpha)
    sy, _ = push_forward(q, w)
    return measure_on_joint(spec, sy)


def utility(spec: MeasureSpec, q: JointDistribution, w: Mechanism) -> float:
    """Information about ``X`` retained in ``Y``."""
    if spec.kind == "maxal":
        if w.x_alphabet != q.x_alphabet:
            push_forward(q, w)  # raises AlphabetMismatch
        return max_alpha_utility(w, spec.alpha)
    _, xy = push_forward(q, w)
    return measure_on_joint(spec, xy)
