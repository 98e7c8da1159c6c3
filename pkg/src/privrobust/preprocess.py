"""Merging of rare X-symbols into a single sink symbol.

Symbols whose empirical X-marginal falls below ``gamma`` are relabelled
``__merged__``.  This raises the smallest X-marginal, which the
margin-dependent certificates need, at a bounded cost in utility.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import Infeasible, InvalidParam, ReservedLabelCollision
from .measures import MeasureSpec
from .mechanisms import lattice_scan
from .prob import Alphabet, JointDistribution, Mechanism, SampleSet, empirical, marginal_x

SINK = "__merged__"


@dataclass(frozen=True)
class MergeMap:
    """Deterministic relabelling ``X -> X_gamma``.

    ``kept`` lists the surviving labels in their original order.  The sink
    is appended last, and only when at least one symbol is merged.
    Labels never seen during fitting also map to the sink.
    """

    gamma: float
    kept: tuple[str, ...]
    merged: tuple[str, ...]
    sink: str = SINK

    @property
    def alphabet(self) -> Alphabet:
        return Alphabet(self.kept + ((self.sink,) if self.merged else ()))

    def __call__(self, label: str) -> str:
        return label if label in self.kept else self.sink

    def target_alphabet(self, x_alphabet: Alphabet) -> Alphabet:
        """:attr:`alphabet`, plus the sink if ``x_alphabet`` has unseen labels."""
        target = self.alphabet
        if self.sink not in target.labels and any(self(lbl) == self.sink for lbl in x_alphabet.labels):
            target = Alphabet(target.labels + (self.sink,))
        return target

    def index_map(self, x_alphabet: Alphabet) -> np.ndarray:
        """Position in :meth:`target_alphabet` of every symbol of ``x_alphabet``."""
        target = self.target_alphabet(x_alphabet)
        return np.array([target.index(self(lbl)) for lbl in x_alphabet.labels], dtype=np.int64)

    def to_dict(self) -> dict:
        return {"gamma": self.gamma, "kept": list(self.kept), "merged": list(self.merged), "sink": self.sink}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_dict(cls, d: dict) -> "MergeMap":
        return cls(float(d["gamma"]), tuple(d["kept"]), tuple(d.get("merged", ())), d.get("sink", SINK))


def fit_merge_map(p_hat: JointDistribution, gamma: float) -> MergeMap:
    if not (0.0 <= gamma <= 1.0):
        raise InvalidParam(f"gamma must lie in [0, 1], got {gamma!r}")
    if SINK in p_hat.x_alphabet.labels:
        raise ReservedLabelCollision(f"the X alphabet already contains the reserved label {SINK!r}")
    px = marginal_x(p_hat)
    labels = p_hat.x_alphabet.labels
    kept = tuple(lbl for lbl, m in zip(labels, px) if m >= gamma)
    merged = tuple(lbl for lbl, m in zip(labels, px) if m < gamma)
    return MergeMap(float(gamma), kept, merged)


def apply_merge(p_hat: JointDistribution, mmap: MergeMap) -> JointDistribution:
    """Push ``p_hat`` through the relabelling (column sums into the sink)."""
    idx = mmap.index_map(p_hat.x_alphabet)
    target = mmap.target_alphabet(p_hat.x_alphabet)
    out = np.zeros((p_hat.shape[0], len(target)))
    np.add.at(out.T, idx, p_hat.mass.T)
    return JointDistribution(p_hat.s_alphabet, target, out)


def apply_merge_samples(samples: SampleSet, mmap: MergeMap) -> SampleSet:
    """Relabel individual samples; the empirical law commutes with :func:`apply_merge`."""
    idx = mmap.index_map(samples.x_alphabet)
    target = mmap.target_alphabet(samples.x_alphabet)
    return SampleSet(samples.s_alphabet, target, samples.s_idx, idx[samples.x_idx])


def merge_rare_symbols(data, gamma: float) -> tuple[JointDistribution, MergeMap]:
    """Merge every X-symbol with empirical marginal below ``gamma``.

    Parameters
    ----------
    data : JointDistribution or SampleSet
    gamma : float in [0, 1]

    Returns
    -------
    merged : JointDistribution over ``S x X_gamma``
    mmap : MergeMap
    """
    p_hat = empirical(data) if isinstance(data, SampleSet) else data
    mmap = fit_merge_map(p_hat, gamma)
    return apply_merge(p_hat, mmap), mmap


def lift_mechanism(mmap: MergeMap, w0: Mechanism, x_alphabet: Alphabet) -> Mechanism:
    """Mechanism on the raw alphabet that merges first and then applies ``w0``."""
    if w0.x_alphabet != mmap.target_alphabet(x_alphabet):
        raise InvalidParam("w0 must act on the merged alphabet")
    return Mechanism(x_alphabet, w0.rows[mmap.index_map(x_alphabet)])


class MergeCheck(NamedTuple):
    h_merged: float
    h_raw: float
    ok: bool


def check_merge_monotone(
    spec_f: MeasureSpec,
    p_hat: JointDistribution,
    gamma: float,
    eps: float,
    n_outputs: int = 3,
    step: float = 0.05,
    tol: float = 0.02,
) -> MergeCheck:
    """Compare lattice privacy-utility values before and after merging.

    Both sides use ``spec_f`` for leakage and utility, the same number of
    outputs and the same lattice step.  ``ok`` is
    ``h_merged <= h_raw + tol``.
    """
    if spec_f.kind != "f":
        raise InvalidParam("the merge comparison is defined for f-information")
    merged, _ = merge_rare_symbols(p_hat, gamma)
    h_raw = float(lattice_scan(spec_f, spec_f, p_hat, [eps], n_outputs, step).h[0])
    h_merged = float(lattice_scan(spec_f, spec_f, merged, [eps], n_outputs, step).h[0])
    if np.isnan(h_raw) or np.isnan(h_merged):
        raise Infeasible(f"budget {eps} is below the smallest lattice leakage")
    return MergeCheck(h_merged, h_raw, bool(h_merged <= h_raw + tol))
