"""Lipschitz constants of the measures and finite-sample discrepancy certificates.

A certificate says: with probability at least ``1 - beta`` over the draw
of ``n`` samples, ``|M(P_n, W) - M(P, W)| <= bound`` simultaneously for
every mechanism ``W``, where ``bound = constant * radius`` and ``radius``
is the l1 deviation radius of the empirical distribution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InvalidMargin, InvalidParam, MissingMargin, NotCertifiable, Unsupported
from .measures import FGenerator, MeasureSpec, leakage, utility
from .prob import (
    DeviationRadius,
    JointDistribution,
    Mechanism,
    deviation_radius,
    l1_distance,
    marginal_s,
    marginal_x,
)

SIDES = ("privacy", "utility")
LIPSCHITZ_SLACK = 1e-9


def f_info_constant(fgen: FGenerator, u: float) -> float:
    """``2 K_{f,1/u} + (2/u + 1) L_{f,1/u}`` for a margin ``u`` in ``(0, 1]``."""
    if not (0.0 < u <= 1.0):
        raise InvalidMargin(f"margin must lie in (0, 1], got {u!r}")
    inv = 1.0 / u
    return 2.0 * fgen.k(inv) + (2.0 * inv + 1.0) * fgen.lip(inv)


@dataclass(frozen=True)
class BoundContext:
    """Everything a Lipschitz constant may depend on.

    ``margin_floor`` is the smallest relevant marginal: over ``S`` for the
    privacy side and over ``X`` for the utility side.  It is needed by
    f-information, by Sibson information of finite order, and on the
    privacy side by Sibson information of infinite order and by maximal
    leakage (where it is the smallest ``S``-marginal of the first
    distribution).
    """

    spec: MeasureSpec
    side: str
    s_size: int
    x_size: int
    margin_floor: float | None = None

    def __post_init__(self):
        if self.side not in SIDES:
            raise InvalidParam(f"side must be 'privacy' or 'utility', got {self.side!r}")
        if self.margin_floor is not None and not (0.0 < self.margin_floor <= 1.0):
            raise InvalidMargin(f"margin floor must lie in (0, 1], got {self.margin_floor!r}")


def needs_margin(spec: MeasureSpec, side: str) -> bool:
    if spec.kind == "f":
        return True
    if spec.kind == "sibson":
        return not math.isinf(spec.alpha) or side == "privacy"
    if spec.kind == "maxal":
        return side == "privacy"
    return False


def _require_margin(ctx: BoundContext) -> float:
    if ctx.margin_floor is None:
        raise MissingMargin(f"{ctx.spec} on the {ctx.side} side needs a margin floor")
    return ctx.margin_floor


def lipschitz_constant(ctx: BoundContext) -> float:
    """Constant ``C`` with ``|M(Q1, W) - M(Q2, W)| <= C ||Q1 - Q2||_1`` for all ``W``."""
    spec, privacy = ctx.spec, ctx.side == "privacy"
    size = ctx.s_size if privacy else ctx.x_size
    if spec.kind == "pc":
        return 1.0
    if spec.kind == "shannon":
        raise Unsupported("Shannon mutual information has no Lipschitz certificate here")
    if spec.kind == "f":
        return f_info_constant(spec.fgen, _require_margin(ctx))
    a = spec.alpha
    if spec.kind == "arimoto":
        if math.isinf(a):
            return 2.0 * size
        return 2.0 * a / (a - 1.0) * size ** (1.0 - 1.0 / a)
    if spec.kind == "sibson":
        if math.isinf(a):
            return 2.0 / _require_margin(ctx) if privacy else 0.0
        m = _require_margin(ctx)
        num = 2.0 * a + 1.0 if privacy else 1.0
        return num / ((a - 1.0) * m ** (1.0 - 1.0 / a))
    if spec.kind == "maxal":
        if not privacy:
            return 0.0
        m = _require_margin(ctx)
        if math.isinf(a):
            return 2.0 / m
        return 4.0 * a * ctx.s_size ** (1.0 - 1.0 / a) / ((a - 1.0) * m)
    raise InvalidParam(f"unknown measure {spec}")


def shrunk_margin(p_hat: JointDistribution, n: int, beta: float, over: str) -> float:
    """Smallest marginal over ``S`` or ``X`` minus the deviation radius, clamped at 0."""
    if over not in ("S", "X"):
        raise InvalidParam("over must be 'S' or 'X'")
    marg = marginal_s(p_hat) if over == "S" else marginal_x(p_hat)
    r = deviation_radius(n, p_hat.mass.size, beta).value
    return max(float(marg.min()) - r, 0.0)


@dataclass(frozen=True)
class RobustnessCertificate:
    spec: MeasureSpec
    side: str
    n: int
    beta: float
    radius: DeviationRadius
    constant: float
    bound: float
    m_bar: float | None = None

    def to_dict(self) -> dict:
        return {
            "measure": str(self.spec),
            "side": self.side,
            "n": self.n,
            "beta": self.beta,
            "radius": self.radius.value,
            "constant": self.constant,
            "bound": self.bound,
            "m_bar": self.m_bar,
        }


def discrepancy_bound(
    spec: MeasureSpec, side: str, p_hat: JointDistribution, n: int, beta: float
) -> RobustnessCertificate:
    """Certificate for ``|M(P_n, W) - M(P, W)|`` built from the empirical ``p_hat`` only.

    f-information and finite-order Sibson information use the shrunk
    margin ``m_bar`` (over ``S`` for privacy, ``X`` for utility).
    Infinite-order Sibson information and maximal leakage use the plain
    smallest empirical ``S``-marginal on the privacy side.

    Raises
    ------
    NotCertifiable
        If the margin the constant needs is zero.  Merging rare symbols
        first (see :func:`privrobust.preprocess.merge_rare_symbols`) raises it.
    Unsupported
        For Shannon mutual information.
    """
    if side not in SIDES:
        raise InvalidParam(f"side must be 'privacy' or 'utility', got {side!r}")
    if spec.kind == "shannon":
        raise Unsupported("no discrepancy bound is available for Shannon mutual information")
    radius = deviation_radius(n, p_hat.mass.size, beta)
    s_size, x_size = p_hat.shape
    margin, mb = None, None
    if needs_margin(spec, side):
        plain_min_s = spec.kind == "maxal" or (spec.kind == "sibson" and math.isinf(spec.alpha))
        if plain_min_s:
            margin = float(marginal_s(p_hat).min())
        else:
            mb = shrunk_margin(p_hat, n, beta, "S" if side == "privacy" else "X")
            margin = mb
        if margin <= 0.0:
            raise NotCertifiable(
                f"{spec} ({side}) needs a positive margin, got {margin!r}; "
                "merge rare symbols with merge_rare_symbols or collect more samples"
            )
    ctx = BoundContext(spec, side, s_size, x_size, margin)
    const = lipschitz_constant(ctx)
    return RobustnessCertificate(spec, side, int(n), float(beta), radius, const, const * radius.value, mb)


def lipschitz_context(
    spec: MeasureSpec, side: str, q1: JointDistribution, q2: JointDistribution
) -> BoundContext:
    """Margin context for a pair of distributions.

    The floor is the smallest marginal over both distributions, except for
    the infinite-order Sibson and maximal-leakage privacy constants, which
    use the smallest ``S``-marginal of ``q1``.
    """
    margin = None
    if needs_margin(spec, side):
        if spec.kind == "maxal" or (spec.kind == "sibson" and math.isinf(spec.alpha)):
            margin = float(marginal_s(q1).min())
        elif side == "privacy":
            margin = float(min(marginal_s(q1).min(), marginal_s(q2).min()))
        else:
            margin = float(min(marginal_x(q1).min(), marginal_x(q2).min()))
        if margin <= 0.0:
            raise NotCertifiable(f"{spec} ({side}) needs positive marginals")
    s_size, x_size = q1.shape
    return BoundContext(spec, side, s_size, x_size, margin)


def certify_lipschitz(
    spec: MeasureSpec, side: str, q1: JointDistribution, q2: JointDistribution, w: Mechanism
) -> tuple[float, float, bool]:
    """Check the Lipschitz inequality on one triple.

    Returns ``(lhs, rhs, ok)`` with ``lhs = |M(q1, w) - M(q2, w)|``,
    ``rhs = C ||q1 - q2||_1`` and ``ok = lhs <= rhs + 1e-9``.
    """
    fn = leakage if side == "privacy" else utility
    lhs = abs(fn(spec, q1, w) - fn(spec, q2, w))
    rhs = lipschitz_constant(lipschitz_context(spec, side, q1, q2)) * l1_distance(q1, q2)
    return lhs, rhs, bool(lhs <= rhs + LIPSCHITZ_SLACK)
