"""Finite joint distributions, channels, empirical estimation and l1 geometry.

All randomness goes through :func:`rng_for`, which builds a NumPy
``Generator`` backed by PCG64 from an integer seed plus optional integer
keys (for example a trial index).  PCG64 output is specified bit-for-bit,
so seeded runs reproduce across platforms.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from .errors import (
    AlphabetMismatch,
    DimensionMismatch,
    EmptySampleSet,
    InfeasibleConstraint,
    InvalidBeta,
    InvalidParam,
    MassNotOne,
    NegativeMass,
)

TOL_MASS = 1e-12


def rng_for(seed: int, *keys: int) -> np.random.Generator:
    """Return a PCG64 generator seeded by ``seed`` and optional integer keys."""
    if seed is None:
        raise InvalidParam("a seed is required")
    return np.random.Generator(np.random.PCG64([int(seed), *map(int, keys)]))


def _frozen_array(values, dtype=float) -> np.ndarray:
    arr = np.array(values, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class Alphabet:
    """Ordered, duplicate-free list of symbol labels."""

    labels: tuple[str, ...]

    def __post_init__(self):
        labels = tuple(str(x) for x in self.labels)
        if not labels:
            raise InvalidParam("alphabet must be non-empty")
        if len(set(labels)) != len(labels):
            raise InvalidParam(f"duplicate labels in alphabet {labels}")
        object.__setattr__(self, "labels", labels)

    @classmethod
    def of_size(cls, k: int, prefix: str = "") -> "Alphabet":
        if k < 1:
            raise InvalidParam("alphabet size must be positive")
        return cls(tuple(f"{prefix}{i}" for i in range(k)))

    def __len__(self) -> int:
        return len(self.labels)

    def index(self, label: str) -> int:
        try:
            return self.labels.index(str(label))
        except ValueError:
            raise InvalidParam(f"unknown symbol {label!r}") from None


def _as_alphabet(alpha, size: int, prefix: str) -> Alphabet:
    if alpha is None:
        return Alphabet.of_size(size, prefix)
    if isinstance(alpha, Alphabet):
        return alpha
    return Alphabet(tuple(alpha))


@dataclass(frozen=True, eq=False)
class JointDistribution:
    """Probability mass over ``S x X`` stored as an ``|S| x |X|`` matrix."""

    s_alphabet: Alphabet
    x_alphabet: Alphabet
    mass: np.ndarray

    def __post_init__(self):
        mass = _frozen_array(self.mass)
        if mass.ndim != 2 or mass.shape != (len(self.s_alphabet), len(self.x_alphabet)):
            raise DimensionMismatch(
                f"mass shape {mass.shape} does not match alphabets "
                f"({len(self.s_alphabet)}, {len(self.x_alphabet)})"
            )
        if not np.all(np.isfinite(mass)):
            raise NegativeMass("mass contains non-finite entries")
        if np.any(mass < 0):
            raise NegativeMass(f"negative entry {mass.min()!r}")
        total = float(mass.sum())
        if abs(total - 1.0) > TOL_MASS:
            raise MassNotOne(f"total mass {total!r} differs from 1")
        object.__setattr__(self, "mass", mass)

    @property
    def shape(self) -> tuple[int, int]:
        return self.mass.shape

    def __eq__(self, other):
        if not isinstance(other, JointDistribution):
            return NotImplemented
        return (
            self.s_alphabet == other.s_alphabet
            and self.x_alphabet == other.x_alphabet
            and np.array_equal(self.mass, other.mass)
        )

    __hash__ = None


def new_joint(mass, s_alphabet=None, x_alphabet=None, *, normalize: bool = False) -> JointDistribution:
    """Validate ``mass`` and wrap it as a :class:`JointDistribution`.

    Parameters
    ----------
    mass : array_like, shape (|S|, |X|)
    s_alphabet, x_alphabet : Alphabet or sequence of labels, optional
        Default labels are ``s0, s1, ...`` and ``x0, x1, ...``.
    normalize : bool
        Divide by the total mass first.  Off by default so data bugs
        surface as :class:`MassNotOne`.
    """
    arr = np.asarray(mass, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"mass must be a matrix, got shape {arr.shape}")
    if normalize:
        if np.any(arr < 0):
            raise NegativeMass(f"negative entry {arr.min()!r}")
        total = arr.sum()
        if total <= 0:
            raise MassNotOne("cannot normalize zero mass")
        arr = arr / total
    s_alpha = _as_alphabet(s_alphabet, arr.shape[0], "s")
    x_alpha = _as_alphabet(x_alphabet, arr.shape[1], "x")
    return JointDistribution(s_alpha, x_alpha, arr)


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Row-stochastic channel from ``X`` to outputs ``0..N-1``."""

    x_alphabet: Alphabet
    rows: np.ndarray

    def __post_init__(self):
        rows = _frozen_array(self.rows)
        if rows.ndim != 2 or rows.shape[0] != len(self.x_alphabet) or rows.shape[1] < 1:
            raise DimensionMismatch(
                f"rows shape {rows.shape} does not match |X| = {len(self.x_alphabet)}"
            )
        if not np.all(np.isfinite(rows)) or np.any(rows < 0):
            raise NegativeMass("mechanism has negative or non-finite entries")
        dev = np.abs(rows.sum(axis=1) - 1.0).max()
        if dev > TOL_MASS:
            raise MassNotOne(f"mechanism row sums deviate from 1 by {dev!r}")
        object.__setattr__(self, "rows", rows)

    @property
    def n_outputs(self) -> int:
        return self.rows.shape[1]

    def __eq__(self, other):
        if not isinstance(other, Mechanism):
            return NotImplemented
        return self.x_alphabet == other.x_alphabet and np.array_equal(self.rows, other.rows)

    __hash__ = None


def new_mechanism(rows, x_alphabet=None) -> Mechanism:
    arr = np.asarray(rows, dtype=float)
    if arr.ndim != 2:
        raise DimensionMismatch(f"mechanism must be a matrix, got shape {arr.shape}")
    return Mechanism(_as_alphabet(x_alphabet, arr.shape[0], "x"), arr)


@dataclass(frozen=True, eq=False)
class SampleSet:
    """Paired observations ``(s_i, x_i)`` stored as two index arrays."""

    s_alphabet: Alphabet
    x_alphabet: Alphabet
    s_idx: np.ndarray
    x_idx: np.ndarray

    def __post_init__(self):
        s = _frozen_array(self.s_idx, dtype=np.int64).reshape(-1)
        x = _frozen_array(self.x_idx, dtype=np.int64).reshape(-1)
        if s.shape != x.shape:
            raise DimensionMismatch("s and x index arrays differ in length")
        if s.size and (s.min() < 0 or s.max() >= len(self.s_alphabet)):
            raise DimensionMismatch("s index out of alphabet bounds")
        if x.size and (x.min() < 0 or x.max() >= len(self.x_alphabet)):
            raise DimensionMismatch("x index out of alphabet bounds")
        object.__setattr__(self, "s_idx", s)
        object.__setattr__(self, "x_idx", x)

    @classmethod
    def from_pairs(cls, pairs: Iterable[tuple[int, int]], s_alphabet, x_alphabet) -> "SampleSet":
        arr = np.asarray(list(pairs), dtype=np.int64).reshape(-1, 2)
        return cls(s_alphabet, x_alphabet, arr[:, 0], arr[:, 1])

    @property
    def pairs(self) -> list[tuple[int, int]]:
        return list(zip(self.s_idx.tolist(), self.x_idx.tolist()))

    def __len__(self) -> int:
        return int(self.s_idx.size)


@dataclass(frozen=True)
class DeviationRadius:
    """l1 radius that contains the empirical distribution with probability 1 - beta."""

    n: int
    d: int
    beta: float
    value: float


def marginal_s(q: JointDistribution) -> np.ndarray:
    return q.mass.sum(axis=1)


def marginal_x(q: JointDistribution) -> np.ndarray:
    return q.mass.sum(axis=0)


def push_forward(q: JointDistribution, w: Mechanism) -> tuple[JointDistribution, JointDistribution]:
    """Compose ``q`` with the channel ``w``.

    Returns
    -------
    sy_joint, xy_joint : JointDistribution
        Laws of ``(S, Y)`` and ``(X, Y)`` for the chain ``S -> X -> Y``.
    """
    if w.x_alphabet != q.x_alphabet:
        raise AlphabetMismatch("mechanism input alphabet differs from the X alphabet")
    y_alpha = Alphabet.of_size(w.n_outputs, "y")
    sy = q.mass @ w.rows
    xy = marginal_x(q)[:, None] * w.rows
    return (
        JointDistribution(q.s_alphabet, y_alpha, sy),
        JointDistribution(q.x_alphabet, y_alpha, xy),
    )


def _check_same_alphabets(q1: JointDistribution, q2: JointDistribution) -> None:
    if q1.s_alphabet != q2.s_alphabet or q1.x_alphabet != q2.x_alphabet:
        raise AlphabetMismatch("distributions live on different alphabets")


def l1_distance(q1: JointDistribution, q2: JointDistribution) -> float:
    _check_same_alphabets(q1, q2)
    return float(np.abs(q1.mass - q2.mass).sum())


def empirical_from_counts(counts, s_alphabet=None, x_alphabet=None) -> JointDistribution:
    counts = np.asarray(counts, dtype=float)
    n = counts.sum()
    if n <= 0:
        raise EmptySampleSet("no samples")
    return new_joint(counts / n, s_alphabet, x_alphabet)


def empirical(samples: SampleSet) -> JointDistribution:
    """Plug-in estimate: relative frequency of each pair."""
    n = len(samples)
    if n == 0:
        raise EmptySampleSet("cannot estimate a distribution from zero samples")
    ns, nx = len(samples.s_alphabet), len(samples.x_alphabet)
    counts = np.bincount(samples.s_idx * nx + samples.x_idx, minlength=ns * nx)
    return JointDistribution(samples.s_alphabet, samples.x_alphabet, (counts / n).reshape(ns, nx))


def deviation_radius(n: int, d: int, beta: float) -> DeviationRadius:
    """``sqrt((2/n) * (d - ln beta))``."""
    if not (0.0 < beta < 1.0):
        raise InvalidBeta(f"beta must lie in (0, 1), got {beta!r}")
    if n < 1 or d < 1:
        raise InvalidParam("n and d must be positive")
    return DeviationRadius(int(n), int(d), float(beta), math.sqrt(2.0 / n * (d - math.log(beta))))


def weissman_tail(n: int, d: int, eps: float) -> float:
    """Upper bound ``exp(d - n eps^2 / 2)`` on ``P(||P_n - P||_1 >= eps)``.

    The value is not clipped; anything above 1 is vacuous.
    """
    if eps <= 0:
        raise InvalidParam("eps must be positive")
    return math.exp(d - n * eps * eps / 2.0)


def sample_counts(q: JointDistribution, n: int, rng: np.random.Generator) -> np.ndarray:
    """Multinomial cell counts of ``n`` draws, shaped like ``q.mass``."""
    return rng.multinomial(n, q.mass.reshape(-1)).reshape(q.shape)


def sample(q: JointDistribution, n: int, seed: int) -> SampleSet:
    """Draw ``n`` i.i.d. pairs from ``q`` with a seeded PCG64 generator."""
    if n < 1:
        raise InvalidParam("n must be positive")
    rng = rng_for(seed)
    flat = q.mass.reshape(-1)
    cdf = np.cumsum(flat)
    cdf /= cdf[-1]
    cells = np.searchsorted(cdf, rng.random(n), side="right")
    cells = np.minimum(cells, flat.size - 1)
    nx = q.shape[1]
    return SampleSet(q.s_alphabet, q.x_alphabet, cells // nx, cells % nx)


def _satisfies_floor(mass: np.ndarray, floor: float | None) -> bool:
    if floor is None:
        return True
    return bool(mass.sum(axis=1).min() >= floor and mass.sum(axis=0).min() >= floor)


def _shrink_to_radius(center: np.ndarray, point: np.ndarray, r: float) -> np.ndarray:
    # Guard against the last ulp pushing a boundary point outside the ball.
    for _ in range(8):
        if np.abs(point - center).sum() <= r:
            return point
        point = center + (point - center) * (1.0 - 1e-14)
        point = np.maximum(point, 0.0)
    return center.copy()


def boundary_probes(center: np.ndarray, r: float) -> list[np.ndarray]:
    """Deterministic points of the ball at (or as close as feasible to) radius ``r``.

    For every ordered pair of cells ``(i, j)`` mass ``r/2`` is moved into
    ``j``, first taken from ``i`` and, if ``i`` runs dry, from the other
    cells in decreasing order of mass.
    """
    flat = center.reshape(-1)
    d = flat.size
    probes = []
    order = np.argsort(-flat, kind="stable")
    for i in range(d):
        for j in range(d):
            if i == j:
                continue
            need = min(r / 2.0, 1.0 - flat[j])
            if need <= 0:
                continue
            p = flat.copy()
            take = min(need, p[i])
            p[i] -= take
            moved = take
            for k in order:
                if moved >= need:
                    break
                if k == j or k == i:
                    continue
                t = min(need - moved, p[k])
                p[k] -= t
                moved += t
            p[j] += moved
            p = np.maximum(p, 0.0)
            probes.append(_shrink_to_radius(flat, p, r).reshape(center.shape))
    return probes


def sample_ball(
    center: JointDistribution,
    r: float,
    constraint: float | None = None,
    m: int = 500,
    seed: int = 0,
) -> list[JointDistribution]:
    """Points of the l1 ball of radius ``r`` around ``center`` intersected with the simplex.

    The list starts with ``center`` itself, then the deterministic
    :func:`boundary_probes`, then random points ``(1-t) center + t z`` with
    ``z`` Dirichlet-distributed and ``t`` chosen for a uniform target radius
    in ``[0, r]``.  Half of the random directions use a sparse Dirichlet
    (concentration 0.2) so that near-degenerate distributions are visited.

    Parameters
    ----------
    constraint : float, optional
        Margin floor: keep only points whose S- and X-marginals are all at
        least this value.  ``None`` means the full simplex.

    Raises
    ------
    InfeasibleConstraint
        If no point satisfying the margin floor is found.
    """
    if r < 0:
        raise InvalidParam("radius must be nonnegative")
    if m < 1:
        raise InvalidParam("m must be positive")
    c = center.mass
    if r == 0:
        if not _satisfies_floor(c, constraint):
            raise InfeasibleConstraint("center violates the margin floor and r = 0")
        return [center] * m

    def wrap(arr):
        return JointDistribution(center.s_alphabet, center.x_alphabet, arr)

    out: list[JointDistribution] = []
    if _satisfies_floor(c, constraint):
        out.append(center)
    for p in boundary_probes(c, r):
        if len(out) >= m:
            break
        if _satisfies_floor(p, constraint):
            out.append(wrap(p))

    rng = rng_for(seed)
    flat = c.reshape(-1)
    d = flat.size
    attempts, max_attempts = 0, 200 * m
    while len(out) < m and attempts < max_attempts:
        attempts += 1
        conc = 0.2 if attempts % 2 else 1.0
        z = rng.dirichlet(np.full(d, conc))
        span = np.abs(z - flat).sum()
        target = r * rng.random()
        t = 1.0 if span <= target else target / span
        p = (1.0 - t) * flat + t * z
        p = _shrink_to_radius(flat, p, r).reshape(c.shape)
        if _satisfies_floor(p, constraint):
            out.append(wrap(p))
    if not out:
        raise InfeasibleConstraint("no point of the ball satisfies the margin floor")
    return out
