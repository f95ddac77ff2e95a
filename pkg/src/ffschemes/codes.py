"""Component space-time codes in linear-dispersion form and finite feedback schemes.

A code maps ``K`` symbols ``a_k`` to ``X = sum_k a_k W_k + conj(a_k) V_k``.
Most codes here are complex-linear (``V = 0``); the Alamouti code needs the
conjugate part.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .algebra import (
    AlgebraicRotation,
    Constellation,
    PhasorSet,
    golden_phasor,
    make_constellation,
)
from .errors import BitLengthError, BitrateMismatch, DimensionError, InvalidBeamformer

__all__ = [
    "LinearDispersionCode",
    "FeedbackRule",
    "FiniteFeedbackScheme",
    "thread_matrix",
    "pi_shift",
    "thread_column",
    "golden_constants",
    "golden_thread_scheme",
    "t1_scheme",
    "threaded_scheme",
    "antenna_selection_scheme",
    "beamforming_scheme",
    "dft_beamformers",
    "heath_paulraj_vectors",
    "alamouti_code",
    "spatial_multiplexing_code",
    "switching_scheme",
    "single_code_scheme",
    "encode",
    "bits_to_symbols",
    "symbols_to_bits",
]

ENUMERATION_CAP = 2**20


@dataclass(frozen=True)
class LinearDispersionCode:
    """A ``T x Nt`` STBC carrying ``K`` symbols from one constellation.

    Parameters
    ----------
    weights : ndarray, shape (K, T, Nt)
        Complex-linear weight matrices.
    constellation : Constellation
        Symbol alphabet shared by all ``K`` symbols.
    conj_weights : ndarray, shape (K, T, Nt), optional
        Weights applied to the conjugated symbols.
    power_scale : float
        Amplitude factor applied to every codeword at transmission; 1 until
        the simulator normalizes the code.
    """

    weights: np.ndarray
    constellation: Constellation
    conj_weights: np.ndarray | None = None
    power_scale: float = 1.0
    label: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=complex)
        if w.ndim != 3 or 0 in w.shape:
            raise DimensionError(f"weights must have shape (K, T, Nt) with K, T, Nt >= 1, got {w.shape}")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        if self.conj_weights is not None:
            v = np.asarray(self.conj_weights, dtype=complex)
            if v.shape != w.shape:
                raise DimensionError("conj_weights must match weights in shape")
            v.setflags(write=False)
            object.__setattr__(self, "conj_weights", v)
        if not self.power_scale > 0:
            raise ValueError("power_scale must be positive")
        cols = real_basis(self)[1]
        flat = np.concatenate([cols.real, cols.imag], axis=1).reshape(len(cols), -1) if len(cols) else None
        if flat is not None and np.linalg.matrix_rank(flat, tol=1e-9 * max(1.0, np.abs(flat).max())) < len(cols):
            raise DimensionError(f"{self.label or 'code'}: weight matrices are linearly dependent")

    @property
    def k(self) -> int:
        return self.weights.shape[0]

    @property
    def t(self) -> int:
        return self.weights.shape[1]

    @property
    def nt(self) -> int:
        return self.weights.shape[2]

    @property
    def rate(self) -> float:
        return self.k / self.t

    @property
    def codebook_size(self) -> int:
        return self.constellation.size**self.k

    @property
    def bits_per_codeword(self) -> int:
        return self.k * self.constellation.bits_per_symbol

    def with_power_scale(self, scale: float) -> "LinearDispersionCode":
        return replace(self, power_scale=float(scale))

    def codebook(self, cap: int = ENUMERATION_CAP) -> np.ndarray:
        """All codewords (unscaled) in lexicographic order of symbol indices."""
        from .errors import EnumerationTooLarge

        if self.codebook_size > cap:
            raise EnumerationTooLarge(self.codebook_size, cap, "codebook")
        idx = np.indices((self.constellation.size,) * self.k).reshape(self.k, -1).T
        return encode(self, self.constellation.points[idx])


def real_basis(code: LinearDispersionCode):
    """Real-linear basis of a code.

    Returns ``(variables, mats)`` where ``variables`` lists ``(k, part)`` with
    ``part`` 0 for the real and 1 for the imaginary part of symbol ``k`` and
    ``mats[j]`` is the ``T x Nt`` matrix multiplied by that real coordinate.
    Coordinates that are constant zero over the constellation (the imaginary
    part of BPSK) are omitted.
    """
    c = code.constellation
    w = code.weights
    v = code.conj_weights if code.conj_weights is not None else np.zeros_like(w)
    active_im = any(p.imag != 0 for p in c.points)
    active_re = any(p.real != 0 for p in c.points)
    variables, mats = [], []
    for k in range(code.k):
        if active_re:
            variables.append((k, 0))
            mats.append(w[k] + v[k])
        if active_im:
            variables.append((k, 1))
            mats.append(1j * (w[k] - v[k]))
    mats = np.array(mats, dtype=complex).reshape(len(mats), code.t, code.nt)
    return variables, mats


def encode(code: LinearDispersionCode, symbols) -> np.ndarray:
    """Map symbol vector(s) to codeword matrices (unscaled).

    ``symbols`` of shape ``(K,)`` gives one ``T x Nt`` matrix; shape ``(B, K)``
    gives ``(B, T, Nt)``.
    """
    s = np.asarray(symbols, dtype=complex)
    if s.shape[-1] != code.k:
        raise DimensionError(f"expected {code.k} symbols, got {s.shape[-1]}")
    x = np.tensordot(s, code.weights, axes=([-1], [0]))
    if code.conj_weights is not None:
        x = x + np.tensordot(s.conj(), code.conj_weights, axes=([-1], [0]))
    return x


def received_energy(code: LinearDispersionCode, h: np.ndarray, symbols: np.ndarray) -> np.ndarray:
    """``power_scale**2 * ||encode(symbols) H||_F^2`` for a batch of symbol vectors.

    Written as a fixed sequence of elementwise real operations so the value
    for a given vector does not depend on the batch it is evaluated in.
    """
    pr, pi = _apply_channel(code, h, symbols)
    e = np.zeros(pr.shape[0])
    for t in range(pr.shape[1]):
        for r in range(pr.shape[2]):
            e += pr[:, t, r] * pr[:, t, r]
            e += pi[:, t, r] * pi[:, t, r]
    return e * (code.power_scale * code.power_scale)


def residual_energy(
    code: LinearDispersionCode, y: np.ndarray, h: np.ndarray, e: float, symbols: np.ndarray
) -> np.ndarray:
    """``||Y - sqrt(e) * power_scale * encode(symbols) H||_F^2`` for a batch, batch-invariant."""
    gain = math.sqrt(e) * code.power_scale
    pr, pi = _apply_channel(code, h, symbols)
    yr, yi = np.real(y), np.imag(y)
    out = np.zeros(pr.shape[0])
    for t in range(pr.shape[1]):
        for r in range(pr.shape[2]):
            dr = yr[t, r] - gain * pr[:, t, r]
            di = yi[t, r] - gain * pi[:, t, r]
            out += dr * dr
            out += di * di
    return out


def _apply_channel(code, h, symbols):
    s = np.asarray(symbols, dtype=complex)
    if s.ndim == 1:
        s = s[None, :]
    h = np.asarray(h, dtype=complex)
    if h.shape[0] != code.nt:
        raise DimensionError(f"channel must have {code.nt} rows, got {h.shape}")
    b = s.shape[0]
    sr, si = s.real, s.imag
    xr = np.zeros((b, code.t, code.nt))
    xi = np.zeros((b, code.t, code.nt))
    for k in range(code.k):
        a, c = sr[:, k, None, None], si[:, k, None, None]
        wr, wi = code.weights[k].real, code.weights[k].imag
        xr += a * wr
        xr -= c * wi
        xi += a * wi
        xi += c * wr
        if code.conj_weights is not None:
            vr, vi = code.conj_weights[k].real, code.conj_weights[k].imag
            xr += a * vr
            xr += c * vi
            xi += a * vi
            xi -= c * vr
    hr, hi = h.real, h.imag
    pr = np.zeros((b, code.t, h.shape[1]))
    pi = np.zeros((b, code.t, h.shape[1]))
    for j in range(code.nt):
        ar, ai = xr[:, :, j, None], xi[:, :, j, None]
        pr += ar * hr[j]
        pr -= ai * hi[j]
        pi += ar * hi[j]
        pi += ai * hr[j]
    return pr, pi


# ---------------------------------------------------------------------------
# schemes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FeedbackRule:
    """How the receiver picks a code index.

    ``kind`` is ``"FD"`` (largest minimum distance), ``"NORM_SELECT"``
    (largest ``||u_n^T H||_F^2`` over ``vectors``) or ``"CONSTANT"``.
    """

    kind: str
    vectors: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in ("FD", "NORM_SELECT", "CONSTANT"):
            raise ValueError(f"unknown feedback rule {self.kind!r}")
        if self.kind == "NORM_SELECT" and self.vectors is None:
            raise ValueError("NORM_SELECT needs vectors")


@dataclass(frozen=True)
class FiniteFeedbackScheme:
    codes: tuple[LinearDispersionCode, ...]
    rule: FeedbackRule
    label: str = ""
    family: str = ""
    params: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        codes = tuple(self.codes)
        object.__setattr__(self, "codes", codes)
        if not codes:
            raise ValueError("a scheme needs at least one code")
        c0 = codes[0]
        for c in codes[1:]:
            if (c.t, c.nt) != (c0.t, c0.nt):
                raise DimensionError("component codes must share T and Nt")
            if c.codebook_size != c0.codebook_size:
                raise BitrateMismatch(
                    f"component codebooks differ in size: {c.codebook_size} vs {c0.codebook_size}"
                )
        if self.rule.kind == "NORM_SELECT" and len(self.rule.vectors) != len(codes):
            raise ValueError("NORM_SELECT needs one vector per code")
        if self.rule.kind == "CONSTANT" and len(codes) != 1:
            raise ValueError("a constant feedback rule needs exactly one code")

    @property
    def n(self) -> int:
        return len(self.codes)

    @property
    def t(self) -> int:
        return self.codes[0].t

    @property
    def nt(self) -> int:
        return self.codes[0].nt

    @property
    def codebook_size(self) -> int:
        return self.codes[0].codebook_size

    @property
    def bits_per_codeword(self) -> int:
        return int(round(math.log2(self.codebook_size)))

    @property
    def bpcu(self) -> float:
        return math.log2(self.codebook_size) / self.t

    @property
    def rate(self) -> float | None:
        """Symbols per channel use, or ``None`` when the codes differ in rate."""
        rates = {c.rate for c in self.codes}
        return rates.pop() if len(rates) == 1 else None

    @property
    def full_rate(self) -> bool:
        return self.rate == self.nt

    def with_codes(self, codes) -> "FiniteFeedbackScheme":
        return replace(self, codes=tuple(codes))


# ---------------------------------------------------------------------------
# threading notation
# ---------------------------------------------------------------------------

def thread_column(row: int, thread: int, t: int) -> int:
    """Column (0-based) holding component ``row`` of thread ``thread`` in a ``t x t`` block."""
    return (row + thread) % t


def thread_matrix(vectors) -> np.ndarray:
    """Lay ``T`` length-``T`` vectors onto the cyclic diagonals of a ``T x T`` matrix."""
    vs = [np.asarray(v, dtype=complex).ravel() for v in vectors]
    t = len(vs)
    if t == 0 or any(len(v) != t for v in vs):
        raise DimensionError("thread_matrix needs T vectors of length T")
    out = np.zeros((t, t), dtype=complex)
    for ell, v in enumerate(vs):
        for i in range(t):
            out[i, thread_column(i, ell, t)] = v[i]
    return out


def pi_shift(blocks: Sequence) -> list:
    """Cyclically shift a list of blocks one place to the right."""
    blocks = list(blocks)
    if not blocks:
        return blocks
    return [blocks[-1]] + blocks[:-1]


# ---------------------------------------------------------------------------
# constructions
# ---------------------------------------------------------------------------

def golden_constants() -> dict[str, complex]:
    sqrt5 = math.sqrt(5.0)
    theta = (1 + sqrt5) / 2
    theta_c = (1 - sqrt5) / 2
    return {
        "theta": theta,
        "sigma_theta": theta_c,
        "alpha": 1 + 1j - 1j * theta,
        "sigma_alpha": 1 + 1j - 1j * theta_c,
    }


def golden_thread_scheme(c: Constellation) -> FiniteFeedbackScheme:
    """Two single-row codes from the diagonal and off-diagonal threads of the Golden code."""
    g = golden_constants()
    a, sa, th, sth = g["alpha"], g["sigma_alpha"], g["theta"], g["sigma_theta"]
    w1 = np.array([[[a, sa]], [[a * th, sa * sth]]])
    w2 = np.array([[[a, 1j * sa]], [[a * th, 1j * sa * sth]]])
    codes = (
        LinearDispersionCode(w1, c, label="golden_thread/C1"),
        LinearDispersionCode(w2, c, label="golden_thread/C2"),
    )
    return FiniteFeedbackScheme(
        codes, FeedbackRule("FD"), label=f"golden_thread[{c.name}]", family="golden_thread",
        params={"constellation": c.name},
    )


def t1_scheme(
    nt: int, u: AlgebraicRotation, beta: float | None = None, c: Constellation | None = None
) -> FiniteFeedbackScheme:
    """``Nt`` single-row codes ``s = U a`` with component ``n`` scaled by ``exp(i beta)``.

    ``beta`` is the real factor of the purely imaginary exponent and defaults
    to the golden ratio.
    """
    if u.dim != nt:
        raise DimensionError(f"rotation has dim {u.dim}, need {nt}")
    c = c or make_constellation("QAM4")
    if beta is None:
        beta = golden_phasor().betas[0]
    gamma = np.exp(1j * beta)
    codes = []
    for n in range(nt):
        scale = np.ones(nt, dtype=complex)
        scale[n] = gamma
        w = np.array([(u.matrix[:, j] * scale)[None, :] for j in range(nt)])
        codes.append(LinearDispersionCode(w, c, label=f"t1/C{n + 1}"))
    return FiniteFeedbackScheme(
        codes, FeedbackRule("FD"), label=f"t1[nt={nt},{c.name}]", family="t1",
        params={"nt": nt, "beta": beta, "constellation": c.name, "rotation": u.source},
    )


def threaded_scheme(
    n: int, t: int, u: AlgebraicRotation, phasors: PhasorSet | None = None,
    c: Constellation | None = None,
) -> FiniteFeedbackScheme:
    """Threaded codes for ``Nt = n t`` antennas with ``n``-ary feedback and duration ``t``.

    Symbols are ordered as ``a_1(1..Nt), ..., a_T(1..Nt)``.  The first code
    places ``gamma_l``-scaled threads in its first block; every further code
    is the block-wise cyclic shift of the previous one.
    """
    nt = n * t
    if u.dim != nt:
        raise DimensionError(f"rotation has dim {u.dim}, need n*t = {nt}")
    if t < 2:
        raise DimensionError("threaded_scheme needs t > 1; use t1_scheme for t = 1")
    if phasors is None:
        from .algebra import besicovitch_exponents

        phasors = besicovitch_exponents(t)
    if len(phasors) != t:
        raise DimensionError(f"need {t} phasors, got {len(phasors)}")
    c = c or make_constellation("QAM4")
    gammas = phasors.gammas

    # weights of C_1: one T x Nt matrix per symbol a_l(i)
    base = []
    for ell in range(t):
        for i in range(nt):
            s = u.matrix[:, i]
            blocks = []
            for m in range(n):
                vecs = [np.zeros(t, dtype=complex) for _ in range(t)]
                part = s[m * t:(m + 1) * t]
                vecs[ell] = part * (gammas[ell] if m == 0 else 1.0)
                blocks.append(thread_matrix(vecs))
            base.append(blocks)

    codes = []
    current = base
    for m in range(n):
        w = np.array([np.hstack(blocks) for blocks in current])
        codes.append(LinearDispersionCode(w, c, label=f"threaded/C{m + 1}"))
        current = [pi_shift(blocks) for blocks in current]
    return FiniteFeedbackScheme(
        codes, FeedbackRule("FD"), label=f"threaded[n={n},t={t},{c.name}]", family="threaded",
        params={"n": n, "t": t, "constellation": c.name, "rotation": u.source,
                "phasors": phasors.labels},
    )


def beamforming_scheme(vectors, c: Constellation, label: str = "") -> FiniteFeedbackScheme:
    """One rank-one code ``{a u_n^T}`` per unit-norm beamforming vector."""
    vs = np.atleast_2d(np.asarray(vectors, dtype=complex))
    norms = np.linalg.norm(vs, axis=1)
    if np.any(np.abs(norms - 1.0) > 1e-9):
        raise InvalidBeamformer(f"beamforming vectors must have unit norm, got norms {norms}")
    codes = [
        LinearDispersionCode(v[None, None, :], c, label=f"beamforming/C{i + 1}")
        for i, v in enumerate(vs)
    ]
    return FiniteFeedbackScheme(
        codes, FeedbackRule("NORM_SELECT", vs), label=label or f"beamforming[N={len(vs)},{c.name}]",
        family="beamforming", params={"constellation": c.name, "n": len(vs)},
    )


def antenna_selection_scheme(nt: int, c: Constellation) -> FiniteFeedbackScheme:
    if nt < 2:
        raise DimensionError("antenna selection needs nt > 1")
    s = beamforming_scheme(np.eye(nt), c, label=f"antenna_selection[nt={nt},{c.name}]")
    return replace(s, family="antenna_selection", params={"nt": nt, "constellation": c.name})


def dft_beamformers(nt: int) -> np.ndarray:
    """Rows are the columns of the unitary ``nt``-point DFT matrix."""
    j = np.arange(nt)
    f = np.exp(-2j * np.pi * np.outer(j, j) / nt) / math.sqrt(nt)
    return f.T.copy()


def heath_paulraj_vectors(n: int) -> np.ndarray:
    """Two-antenna phase-feedback vectors ``(1, exp(i 2 pi k / n)) / sqrt2``, ``k = 1..n``."""
    k = np.arange(1, n + 1)
    return np.stack([np.ones(n), np.exp(2j * np.pi * k / n)], axis=1) / math.sqrt(2)


def alamouti_code(c: Constellation) -> LinearDispersionCode:
    """Rows are channel uses: ``[[s1, s2], [-conj(s2), conj(s1)]]``."""
    w = np.zeros((2, 2, 2), dtype=complex)
    v = np.zeros((2, 2, 2), dtype=complex)
    w[0, 0, 0] = 1
    v[0, 1, 1] = 1
    w[1, 0, 1] = 1
    v[1, 1, 0] = -1
    return LinearDispersionCode(w, c, conj_weights=v, label=f"alamouti[{c.name}]")


def spatial_multiplexing_code(t: int, nt: int, c: Constellation) -> LinearDispersionCode:
    """Uncoded ``t x nt`` layering; symbol ``k`` sits at row-major position ``k``."""
    w = np.eye(t * nt, dtype=complex).reshape(t * nt, t, nt)
    return LinearDispersionCode(w, c, label=f"spatial_multiplexing[{c.name}]")


def switching_scheme(c_small: Constellation, c_large: Constellation) -> FiniteFeedbackScheme:
    """Alamouti over ``c_large`` versus 2x2 spatial multiplexing over ``c_small``."""
    if c_large.size != c_small.size**2:
        raise BitrateMismatch(
            f"need |large| = |small|^2, got {c_large.size} and {c_small.size}"
        )
    codes = (alamouti_code(c_large), spatial_multiplexing_code(2, 2, c_small))
    return FiniteFeedbackScheme(
        codes, FeedbackRule("FD"), label=f"switching[{c_small.name}/{c_large.name}]",
        family="switching", params={"constellation": c_small.name, "large": c_large.name},
    )


def single_code_scheme(code: LinearDispersionCode, label: str = "") -> FiniteFeedbackScheme:
    """An FFS without feedback (``N = 1``)."""
    return FiniteFeedbackScheme(
        (code,), FeedbackRule("CONSTANT"), label=label or code.label or "single", family="single"
    )


# ---------------------------------------------------------------------------
# bit mapping
# ---------------------------------------------------------------------------

def _bit_array(bits) -> np.ndarray:
    if isinstance(bits, str):
        bits = bits.replace(" ", "")
        if set(bits) - {"0", "1"}:
            raise BitLengthError("bit string may only contain 0 and 1")
        return np.array([int(b) for b in bits], dtype=np.int64)
    return np.asarray(bits, dtype=np.int64)


def bits_to_indices(bits, c: Constellation, k: int) -> np.ndarray:
    """Constellation indices for the ``k`` consecutive bit chunks (MSB first)."""
    b = _bit_array(bits)
    m = c.bits_per_symbol
    if b.shape[-1] != k * m:
        raise BitLengthError(f"expected {k * m} bits, got {b.shape[-1]}")
    chunks = b.reshape(b.shape[:-1] + (k, m))
    weights = 1 << np.arange(m - 1, -1, -1, dtype=np.int64)
    return chunks @ weights if m else np.zeros(b.shape[:-1] + (k,), dtype=np.int64)


def indices_to_bits(indices, c: Constellation) -> np.ndarray:
    idx = np.asarray(indices, dtype=np.int64)
    m = c.bits_per_symbol
    shifts = np.arange(m - 1, -1, -1, dtype=np.int64)
    bits = (idx[..., None] >> shifts) & 1
    return bits.reshape(idx.shape[:-1] + (idx.shape[-1] * m,))


def bits_to_symbols(bits, c: Constellation, k: int) -> np.ndarray:
    return c.points[bits_to_indices(bits, c, k)]


def symbols_to_bits(symbols, c: Constellation) -> np.ndarray:
    s = np.asarray(symbols, dtype=complex)
    idx = c.indices_of(s).reshape(s.shape)
    return indices_to_bits(idx, c)
