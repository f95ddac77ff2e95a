"""Maximum-likelihood decoding of linear-dispersion codewords.

Two decoders are provided: an exhaustive scan over the codebook and a
depth-first sphere decoder on the real-valued lattice model.  Both score
their final candidates with :func:`ffschemes.codes.residual_energy` and break
exact ties towards the lexicographically smallest vector of constellation
indices, so their outputs agree bit for bit.

Real stacking convention: a complex vector or matrix is flattened row-major
and each entry contributes ``[Re, Im]`` consecutively.  Symbol ``k`` owns the
coordinates ``(Re a_k, Im a_k)``; coordinates that are identically zero over
the alphabet (the imaginary part of BPSK) are dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import axis_difference_levels
from .codes import ENUMERATION_CAP, LinearDispersionCode, real_basis, residual_energy
from .errors import EnumerationTooLarge, UnsupportedConstellation

__all__ = [
    "RealLatticeModel",
    "box_search",
    "ml_decode_exhaustive",
    "sphere_decode",
    "real_stack",
]


def real_stack(m) -> np.ndarray:
    a = np.asarray(m, dtype=complex).ravel()
    out = np.empty(2 * a.size)
    out[0::2] = a.real
    out[1::2] = a.imag
    return out


@dataclass(frozen=True)
class RealLatticeModel:
    """Real generator ``G`` with ``real_stack(gain * X(x) H) = G x`` and per-coordinate levels.

    ``variables[j] = (k, part)`` names the symbol and part behind column ``j``.
    """

    generator: np.ndarray
    variables: tuple
    levels: tuple
    k: int

    @classmethod
    def build(cls, code: LinearDispersionCode, h, gain: float, differences: bool = False):
        h = np.asarray(h, dtype=complex)
        variables, mats = real_basis(code)
        if differences:
            dre, dim = axis_difference_levels(code.constellation)
            axis = (dre, dim)
        else:
            axis = (code.constellation.re_levels, code.constellation.im_levels)
        cols = [real_stack(gain * (m @ h)) for m in mats]
        g = np.array(cols).T if cols else np.zeros((2 * code.t * h.shape[1], 0))
        levels = tuple(tuple(float(v) for v in axis[part]) for _, part in variables)
        return cls(g, tuple(variables), levels, code.k)

    def triangular(self, y_stacked=None):
        """QR-reduce to ``(R, z, offset)`` with ``||y - G x||^2 = ||z - R x||^2 + offset``."""
        g = self.generator
        m, n = g.shape
        y = np.zeros(m) if y_stacked is None else np.asarray(y_stacked, dtype=float)
        q, r = np.linalg.qr(g)
        z = q.T @ y
        if r.shape[0] < n:
            r = np.vstack([r, np.zeros((n - r.shape[0], n))])
            z = np.concatenate([z, np.zeros(n - len(z))])
        offset = max(float(y @ y - z @ z), 0.0)
        return r, z, offset

    def to_symbols(self, x) -> np.ndarray:
        s = np.zeros(self.k, dtype=complex)
        for (k, part), v in zip(self.variables, x):
            s[k] += v if part == 0 else 1j * v
        return s


def box_search(r, z, levels, exclude_zero=False, abs_slack=0.0, rel_slack=1e-9,
               max_candidates=65536, stats=None):
    """Depth-first Schnorr-Euchner enumeration of ``min ||z - R x||^2`` over a box.

    ``R`` is upper triangular; ``levels[j]`` lists the admissible values of
    ``x[j]``.  The radius starts infinite and shrinks to the best metric found
    plus a small slack, and every leaf within that window is returned as
    ``(metric, x)``.  With ``exclude_zero`` the all-zero vector is skipped.
    """
    R = np.asarray(r, dtype=float).tolist()
    Z = np.asarray(z, dtype=float).tolist()
    n = len(levels)
    lv = [sorted(l) for l in levels]
    x = [0.0] * n
    best = [math.inf]
    cands = []
    leaves = [0]

    def limit():
        b = best[0]
        return b + rel_slack * b + abs_slack

    def leaf(m):
        leaves[0] += 1
        if exclude_zero and not any(x):
            return
        if m <= limit():
            cands.append((m, tuple(x)))
            if m < best[0]:
                best[0] = m
            if len(cands) > 2 * max_candidates:
                lim = limit()
                cands[:] = sorted((c for c in cands if c[0] <= lim), key=lambda c: c[0])[:max_candidates]

    def descend(k, partial):
        row = R[k]
        acc = Z[k]
        for j in range(k + 1, n):
            acc -= row[j] * x[j]
        rkk = row[k]
        if abs(rkk) > 1e-300:
            centre = acc / rkk
            order = sorted(lv[k], key=lambda v: abs(v - centre))
        else:
            order = lv[k]
        for v in order:
            d = acc - rkk * v
            m = partial + d * d
            if m > limit():
                break
            x[k] = v
            if k == 0:
                leaf(m)
            else:
                descend(k - 1, m)
        x[k] = 0.0

    if n == 0:
        if not exclude_zero:
            cands.append((0.0, ()))
    else:
        descend(n - 1, 0.0)
    lim = limit()
    out = sorted((c for c in cands if c[0] <= lim), key=lambda c: c[0])
    if stats is not None:
        stats["leaves"] = leaves[0]
        stats["candidates"] = len(out)
    return best[0], out


def _pick(code, y, h, e, symbol_batch):
    """Canonical scoring: minimum residual, ties to the smallest index vector."""
    metrics = residual_energy(code, y, h, e, symbol_batch)
    idx = code.constellation.indices_of(symbol_batch).reshape(symbol_batch.shape)
    mmin = metrics.min()
    tied = np.flatnonzero(metrics == mmin)
    order = sorted(tied, key=lambda i: tuple(idx[i]))
    return symbol_batch[order[0]], idx[order[0]]


def ml_decode_exhaustive(code: LinearDispersionCode, y, h, e: float,
                         cap: int = ENUMERATION_CAP, return_indices: bool = False):
    """Scan the whole codebook for ``argmin ||Y - sqrt(e) X H||_F^2``.

    Ties resolve to the lexicographically smallest vector of constellation
    indices.
    """
    size = code.codebook_size
    if size > cap:
        raise EnumerationTooLarge(size, cap, "codebook")
    pts = code.constellation.points
    q = code.constellation.size
    best_m, best_i = math.inf, None
    chunk = 1 << 14
    for start in range(0, size, chunk):
        flat = np.arange(start, min(size, start + chunk))
        idx = np.stack(np.unravel_index(flat, (q,) * code.k), axis=1)
        m = residual_energy(code, y, h, e, pts[idx])
        j = int(np.argmin(m))
        if m[j] < best_m:
            best_m, best_i = m[j], idx[j]
    s = pts[best_i]
    return (s, best_i) if return_indices else s


def sphere_decode(code: LinearDispersionCode, y, h, e: float,
                  return_indices: bool = False, stats=None):
    """ML decoding by depth-first enumeration of the constellation box."""
    c = code.constellation
    if not c.is_box:
        raise UnsupportedConstellation("sphere decoding needs a box (square QAM/BPSK) constellation")
    y = np.asarray(y, dtype=complex)
    h = np.asarray(h, dtype=complex)
    gain = math.sqrt(e) * code.power_scale
    model = RealLatticeModel.build(code, h, gain)
    if not np.any(model.generator):
        # every codeword is received as zero: the tie-break vector wins
        idx = np.zeros(code.k, dtype=np.int64)
        if stats is not None:
            stats["leaves"] = 0
        s = c.points[idx]
        return (s, idx) if return_indices else s
    ys = real_stack(y)
    r, z, _ = model.triangular(ys)
    scale = float(ys @ ys) + float(np.sum(model.generator**2)) * max(
        max(abs(v) for v in lv) for lv in model.levels
    ) ** 2
    _, cands = box_search(r, z, model.levels, abs_slack=1e-10 * scale, stats=stats)
    batch = np.array([model.to_symbols(xv) for _, xv in cands])
    s, idx = _pick(code, y, h, e, batch)
    return (s, idx) if return_indices else s
