"""Feedback functions: the largest-minimum-distance selector and norm selectors.

The minimum distance of a component code at channel ``H`` is the smallest
``||D H||_F^2`` over nonzero difference codewords ``D``.  Differences are
generated by nonzero vectors over the difference alphabet, which covers the
true difference set of a linear code.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import difference_alphabet
from .codes import FiniteFeedbackScheme, LinearDispersionCode, received_energy
from .decoder import RealLatticeModel, box_search
from .errors import EnumerationTooLarge, UnsupportedConstellation

__all__ = [
    "FeedbackDecision",
    "DIFFERENCE_CAP",
    "difference_vectors",
    "min_distance_exhaustive",
    "min_distance_lattice",
    "min_distance",
    "select",
]

DIFFERENCE_CAP = 2**18


@dataclass(frozen=True)
class FeedbackDecision:
    """Outcome of a feedback function.

    ``index`` is 1-based; ``per_code_metric`` holds the quantity maximized
    (minimum squared distance or squared beam gain); ``tie`` flags that more
    than one code attained the maximum.
    """

    index: int
    per_code_metric: tuple
    tie: bool


def difference_vectors(code: LinearDispersionCode, cap: int = DIFFERENCE_CAP,
                       start: int = 0, stop: int | None = None) -> np.ndarray:
    """Nonzero vectors over the sorted difference alphabet, lexicographic order.

    Rows ``start:stop`` of the full list (zero vector excluded) are returned.
    """
    alpha = difference_alphabet(code.constellation)
    q = len(alpha)
    total = q**code.k - 1
    if total > cap:
        raise EnumerationTooLarge(total, cap, "difference vectors")
    zero = int(np.flatnonzero(alpha == 0)[0])
    zero_flat = int(np.ravel_multi_index((zero,) * code.k, (q,) * code.k))
    stop = total if stop is None else min(stop, total)
    flat = np.arange(start, stop)
    flat = flat + (flat >= zero_flat)
    idx = np.stack(np.unravel_index(flat, (q,) * code.k), axis=1)
    return alpha[idx]


def min_distance_exhaustive(code: LinearDispersionCode, h, cap: int = DIFFERENCE_CAP) -> float:
    """``min ||encode(d) H||_F^2`` over every nonzero difference vector ``d``."""
    alpha = difference_alphabet(code.constellation)
    total = len(alpha) ** code.k - 1
    if total > cap:
        raise EnumerationTooLarge(total, cap, "difference vectors")
    best = math.inf
    chunk = 1 << 15
    for s in range(0, total, chunk):
        d = difference_vectors(code, cap, s, s + chunk)
        best = min(best, float(received_energy(code, h, d).min()))
    return best


def min_distance_lattice(code: LinearDispersionCode, h, stats=None) -> float:
    """Shortest nonzero vector of the difference box, by depth-first enumeration.

    Candidates within a tiny window of the best lattice metric are rescored
    with the same routine as the exhaustive scan, so both paths return the
    identical float.
    """
    if not code.constellation.is_box:
        raise UnsupportedConstellation("lattice search needs a box constellation")
    h = np.asarray(h, dtype=complex)
    model = RealLatticeModel.build(code, h, code.power_scale, differences=True)
    if not np.any(model.generator):
        return 0.0
    r, z, _ = model.triangular()
    top = max(max(abs(v) for v in lv) for lv in model.levels)
    slack = 1e-10 * float(np.sum(model.generator**2)) * top * top
    _, cands = box_search(r, z, model.levels, exclude_zero=True, abs_slack=slack, stats=stats)
    d = np.array([model.to_symbols(x) for _, x in cands])
    return float(received_energy(code, h, d).min())


def min_distance(code: LinearDispersionCode, h, method: str = "auto",
                 cap: int = DIFFERENCE_CAP) -> float:
    if method not in ("auto", "exhaustive", "lattice"):
        raise ValueError(f"unknown method {method!r}")
    if method == "exhaustive":
        return min_distance_exhaustive(code, h, cap)
    if method == "lattice":
        return min_distance_lattice(code, h)
    if code.constellation.is_box:
        return min_distance_lattice(code, h)
    return min_distance_exhaustive(code, h, cap)


def _beam_gains(vectors, hs) -> np.ndarray:
    """``||u_n^T H_b||^2`` for every vector ``n`` and channel ``b``."""
    g = np.einsum("nt,btr->bnr", np.asarray(vectors, dtype=complex), hs)
    return np.sum(g.real**2 + g.imag**2, axis=2)


def _decide(metrics) -> FeedbackDecision:
    m = np.asarray(metrics, dtype=float)
    top = m.max()
    hits = np.flatnonzero(m == top)
    return FeedbackDecision(int(hits[0]) + 1, tuple(float(v) for v in m), len(hits) > 1)


def select(scheme: FiniteFeedbackScheme, h, method: str = "auto") -> FeedbackDecision:
    """Apply the scheme's feedback rule to channel ``h`` (``Nt x Nr``)."""
    h = np.asarray(h, dtype=complex)
    kind = scheme.rule.kind
    if kind == "CONSTANT":
        return FeedbackDecision(1, (0.0,), False)
    if kind == "NORM_SELECT":
        return _decide(_beam_gains(scheme.rule.vectors, h[None])[0])
    return _decide([min_distance(c, h, method) for c in scheme.codes])


def select_many(scheme: FiniteFeedbackScheme, hs, method: str = "auto") -> np.ndarray:
    """1-based indices for a batch of channels ``hs`` of shape ``(B, Nt, Nr)``."""
    hs = np.asarray(hs, dtype=complex)
    if scheme.rule.kind == "CONSTANT":
        return np.ones(hs.shape[0], dtype=np.int64)
    if scheme.rule.kind == "NORM_SELECT":
        return np.argmax(_beam_gains(scheme.rule.vectors, hs), axis=1) + 1
    return np.array([select(scheme, h, method).index for h in hs], dtype=np.int64)
