"""Complex matrix kernel, Gaussian-integer constellations and algebraic building blocks.

Constellations are kept unnormalized on the odd-integer grid of Z[i]; power
normalization happens per code in :mod:`ffschemes.simulator`.

Gray labelling convention
-------------------------
A point with label ``i`` (``bits_per_symbol`` bits, MSB first) takes its real
coordinate from the high half of the bits and its imaginary coordinate from the
low half.  On each axis with ``m`` bits and ``L = 2**m`` levels the label ``g``
is decoded to the level index ``j = gray_decode(g)`` and mapped to the value
``(L - 1) - 2 j``.  Label 0 is therefore the most positive level, which gives
BPSK ``0 -> +1`` and ``1 -> -1``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Sequence

import mpmath
import numpy as np

from .errors import DimensionError, RotationUnavailable, UnsupportedConstellation

__all__ = [
    "as_matrix",
    "det",
    "rank",
    "min_singular_value",
    "frobenius_norm",
    "matmul",
    "hermitian_transpose",
    "Constellation",
    "make_constellation",
    "difference_alphabet",
    "AlgebraicRotation",
    "load_rotation",
    "read_rotation_file",
    "verify_rotation",
    "RotationReport",
    "PhasorSet",
    "besicovitch_set",
    "besicovitch_exponents",
    "golden_phasor",
    "integer_relation",
    "pairwise_ratio_relation",
]

RANK_TOL = 1e-9


# ---------------------------------------------------------------------------
# matrix kernel
# ---------------------------------------------------------------------------

def as_matrix(m) -> np.ndarray:
    """Return ``m`` as a finite 2-D complex array, raising on bad input."""
    a = np.asarray(m, dtype=complex)
    if a.ndim == 1:
        a = a.reshape(1, -1)
    if a.ndim != 2:
        raise DimensionError(f"expected a 2-D matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise DimensionError("matrix has non-finite entries")
    return a


def _square(m) -> np.ndarray:
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise DimensionError(f"expected a square matrix, got shape {a.shape}")
    return a


def det(m) -> complex:
    return complex(np.linalg.det(_square(m)))


def rank(m, tol: float = RANK_TOL) -> int:
    """Numerical rank: singular values above ``tol * sigma_max``."""
    s = np.linalg.svd(as_matrix(m), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        return 0
    return int(np.count_nonzero(s > tol * s[0]))


def min_singular_value(m) -> float:
    a = as_matrix(m)
    s = np.linalg.svd(a, compute_uv=False)
    if a.shape[0] < a.shape[1]:
        # a wide matrix has a zero singular value in the column space
        return 0.0
    return float(s[-1])


def frobenius_norm(m) -> float:
    return float(np.linalg.norm(as_matrix(m)))


def matmul(a, b) -> np.ndarray:
    a, b = as_matrix(a), as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"cannot multiply {a.shape} by {b.shape}")
    return a @ b


def hermitian_transpose(m) -> np.ndarray:
    return as_matrix(m).conj().T


# ---------------------------------------------------------------------------
# constellations
# ---------------------------------------------------------------------------

def _gray_decode(g: int) -> int:
    j = 0
    while g:
        j ^= g
        g >>= 1
    return j


def _axis_value(label: int, bits: int) -> int:
    if bits == 0:
        return 0
    levels = 1 << bits
    return (levels - 1) - 2 * _gray_decode(label)


@dataclass(frozen=True)
class Constellation:
    """Finite Gaussian-integer signal set with a Gray bit labelling.

    ``points[i]`` carries the label ``i`` written with ``bits_per_symbol``
    bits.  ``re_bits``/``im_bits`` record how the label splits across axes;
    both are ``None`` for custom (non-grid) constellations.
    """

    name: str
    points: np.ndarray
    bits_per_symbol: int
    re_bits: int | None = None
    im_bits: int | None = None
    _index: dict = field(default=None, init=False, repr=False, compare=False)
    _levels: tuple = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=complex)
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        if len(pts) != 1 << self.bits_per_symbol:
            raise UnsupportedConstellation(
                f"{self.name}: {len(pts)} points but {self.bits_per_symbol} bits/symbol"
            )
        keys = [(int(round(p.real)), int(round(p.imag))) for p in pts]
        if np.max(np.abs(pts - np.array([complex(*k) for k in keys]))) > 0:
            raise UnsupportedConstellation(f"{self.name}: points must lie in Z[i]")
        if len(set(keys)) != len(keys):
            raise UnsupportedConstellation(f"{self.name}: points are not distinct")
        object.__setattr__(self, "_index", {k: i for i, k in enumerate(keys)})
        object.__setattr__(self, "_levels", (
            tuple(sorted({k[0] for k in keys})), tuple(sorted({k[1] for k in keys}))))

    def __len__(self):
        return len(self.points)

    def __hash__(self):
        return hash((self.name, self.points.tobytes()))

    def __eq__(self, other):
        return (
            isinstance(other, Constellation)
            and self.name == other.name
            and np.array_equal(self.points, other.points)
        )

    @property
    def size(self) -> int:
        return len(self.points)

    @property
    def gray_map(self) -> dict[str, complex]:
        b = self.bits_per_symbol
        return {format(i, f"0{b}b") if b else "": complex(p) for i, p in enumerate(self.points)}

    @property
    def is_box(self) -> bool:
        """True when the points form a Cartesian product of per-axis level sets."""
        return self.re_bits is not None

    @property
    def re_levels(self) -> tuple[int, ...]:
        return self._levels[0]

    @property
    def im_levels(self) -> tuple[int, ...]:
        return self._levels[1]

    @property
    def mean_energy(self) -> float:
        return float(np.mean(self.points.real**2 + self.points.imag**2))

    def index_of(self, re: int, im: int) -> int:
        return self._index[(re, im)]

    def indices_of(self, values) -> np.ndarray:
        v = np.asarray(values, dtype=complex).ravel()
        return np.array(
            [self._index[(int(round(x.real)), int(round(x.imag)))] for x in v], dtype=np.int64
        )


_QAM_NAMES = {f"QAM{4 ** m}": m for m in range(1, 9)}


def make_constellation(name: str) -> Constellation:
    """Build a built-in constellation by name.

    ``BPSK`` and square ``QAM{4**m}`` for ``m = 1..8`` (QAM4 up to QAM65536)
    are supported.
    """
    key = name.upper()
    if key == "BPSK":
        return Constellation("BPSK", np.array([1.0 + 0j, -1.0 + 0j]), 1, re_bits=1, im_bits=0)
    if key not in _QAM_NAMES:
        raise UnsupportedConstellation(f"unknown constellation {name!r}")
    m = _QAM_NAMES[key]
    pts = np.empty(1 << (2 * m), dtype=complex)
    for label in range(len(pts)):
        hi, lo = label >> m, label & ((1 << m) - 1)
        pts[label] = complex(_axis_value(hi, m), _axis_value(lo, m))
    return Constellation(key, pts, 2 * m, re_bits=m, im_bits=m)


@lru_cache(maxsize=64)
def difference_alphabet(c: Constellation) -> np.ndarray:
    """All differences ``a1 - a2`` of constellation points, zero included, sorted by (re, im)."""
    if c.is_box:
        dre, dim = axis_difference_levels(c)
        diffs = [(a, b) for a in dre for b in dim]
    else:
        diffs = sorted({
            (int(round(d.real)), int(round(d.imag)))
            for d in (c.points[:, None] - c.points[None, :]).ravel()
        })
    out = np.array([complex(*d) for d in diffs], dtype=complex)
    out.setflags(write=False)
    return out


def axis_difference_levels(c: Constellation) -> tuple[tuple[int, ...], tuple[int, ...]]:
    """Per-axis difference levels; their product is the difference alphabet for box constellations."""
    re, im = c.re_levels, c.im_levels
    dre = tuple(sorted({a - b for a in re for b in re}))
    dim = tuple(sorted({a - b for a in im for b in im}))
    return dre, dim


# ---------------------------------------------------------------------------
# rotations
# ---------------------------------------------------------------------------

_ROTATION_3 = np.array(
    [
        [-0.328, -0.591, -0.737],
        [-0.737, -0.328, 0.591],
        [-0.591, 0.737, -0.328],
    ]
)

_ROTATION_4 = np.array(
    [
        [-0.3664, -0.7677, 0.4231, 0.3121],
        [-0.2264, -0.4745, -0.6846, -0.5050],
        [-0.4745, 0.2264, -0.5050, 0.6846],
        [-0.7677, 0.3664, 0.3121, -0.4231],
    ]
)

BUILTIN_ROTATION_TOL = 5e-3
FILE_ROTATION_TOL = 1e-9


@dataclass(frozen=True)
class AlgebraicRotation:
    dim: int
    matrix: np.ndarray
    source: str
    tol: float = FILE_ROTATION_TOL

    def __post_init__(self):
        m = as_matrix(self.matrix)
        if m.shape != (self.dim, self.dim):
            raise DimensionError(f"rotation must be {self.dim}x{self.dim}, got {m.shape}")
        m.setflags(write=False)
        object.__setattr__(self, "matrix", m)

    @property
    def orth_residual(self) -> float:
        m = self.matrix
        return float(np.linalg.norm(m.conj().T @ m - np.eye(self.dim)))


def read_rotation_file(path) -> AlgebraicRotation:
    """Parse a rotation file: first line ``dim``, then ``dim`` rows of reals."""
    lines = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not lines:
        raise DimensionError(f"{path}: empty rotation file")
    dim = int(lines[0][0])
    rows = lines[1:]
    if len(rows) != dim or any(len(r) != dim for r in rows):
        raise DimensionError(f"{path}: expected {dim} rows of {dim} reals")
    try:
        m = np.array([[float(x) for x in r] for r in rows])
    except ValueError as exc:
        raise DimensionError(f"{path}: {exc}") from None
    return AlgebraicRotation(dim, m, source=f"file:{path}", tol=FILE_ROTATION_TOL)


def load_rotation(dim: int, path=None) -> AlgebraicRotation:
    """Return the built-in 3x3 or 4x4 rotation, or read one from ``path``."""
    if path is not None:
        rot = read_rotation_file(path)
        if rot.dim != dim:
            raise DimensionError(f"rotation file holds dim {rot.dim}, expected {dim}")
        return rot
    if dim == 3:
        return AlgebraicRotation(3, _ROTATION_3, source="builtin:3", tol=BUILTIN_ROTATION_TOL)
    if dim == 4:
        return AlgebraicRotation(4, _ROTATION_4, source="builtin:4", tol=BUILTIN_ROTATION_TOL)
    raise RotationUnavailable(f"no built-in rotation of dimension {dim}; supply a rotation file")


@dataclass(frozen=True)
class RotationReport:
    orth_residual: float
    min_prod_dist: float
    exhaustive: bool
    vectors_checked: int


def verify_rotation(
    u: AlgebraicRotation, c: Constellation, budget: int = 1_000_000, seed: int = 0
) -> RotationReport:
    """Orthonormality residual and minimum product distance over nonzero difference vectors.

    The scan is exhaustive when ``|diff alphabet|**dim <= budget``; otherwise
    ``budget`` nonzero vectors are drawn uniformly with ``seed``.
    """
    if budget < 1:
        raise ValueError("budget must be >= 1")
    alphabet = difference_alphabet(c)
    q, dim = len(alphabet), u.dim
    total = q**dim
    zero = int(np.flatnonzero(alphabet == 0)[0])
    if total <= budget:
        digits = np.array(list(itertools.product(range(q), repeat=dim)), dtype=np.int64)
        exhaustive = True
    else:
        rng = np.random.Generator(np.random.Philox(seed))
        digits = rng.integers(0, q, size=(budget, dim))
        exhaustive = False
    digits = digits[~np.all(digits == zero, axis=1)]
    vecs = alphabet[digits]
    s = vecs @ u.matrix.T
    prod = np.prod(np.abs(s), axis=1)
    mpd = float(prod.min()) if len(prod) else math.inf
    return RotationReport(u.orth_residual, mpd, exhaustive, len(prod))


# ---------------------------------------------------------------------------
# Q-linearly independent exponents
# ---------------------------------------------------------------------------

_PRIMES = (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47)


@dataclass(frozen=True)
class PhasorSet:
    """Purely imaginary exponents ``i * beta_l`` and their phasors ``exp(i * beta_l)``.

    ``betas`` holds the real factors.  Each entry of ``radicals`` describes the
    corresponding beta exactly as a tuple of ``(base, numerator, denominator)``
    factors, ``beta = prod(base ** (numerator / denominator))``; an empty tuple
    means 1.
    """

    betas: tuple[float, ...]
    radicals: tuple[tuple[tuple[int, int, int], ...], ...]
    labels: tuple[str, ...]

    def __post_init__(self):
        if len(set(self.betas)) != len(self.betas):
            raise ValueError("phasor exponents must be pairwise distinct")

    def __len__(self):
        return len(self.betas)

    @property
    def gammas(self) -> np.ndarray:
        return np.exp(1j * np.array(self.betas, dtype=float))

    def exact(self, dps: int = 50) -> list:
        """High-precision betas as mpmath numbers."""
        with mpmath.workdps(dps):
            out = []
            for rad, label in zip(self.radicals, self.labels):
                if label == "(1+sqrt5)/2":
                    out.append((1 + mpmath.sqrt(5)) / 2)
                    continue
                v = mpmath.mpf(1)
                for base, num, den in rad:
                    v *= mpmath.power(base, mpmath.mpf(num) / den)
                out.append(+v)
            return out


def _radical_label(factors) -> str:
    if not factors:
        return "1"
    parts = []
    for base, num, den in factors:
        if den == 2 and num == 1:
            parts.append(f"sqrt{base}")
        else:
            parts.append(f"{base}^({num}/{den})")
    return "*".join(parts)


def _radical_value(factors) -> float:
    v = 1.0
    for base, num, den in factors:
        v *= base ** (num / den)
    return v


def besicovitch_set(primes: Sequence[int], degrees: Sequence[int]) -> PhasorSet:
    """All products ``prod_k (p_k)^(l_k / n_k)`` with ``0 <= l_k < n_k``.

    Ordering is lexicographic in ``(l_m, ..., l_1)``, i.e. ``l_1`` varies
    fastest; primes (2, 3) with degrees (2, 2) give ``1, sqrt2, sqrt3, sqrt6``.
    """
    if len(primes) != len(degrees) or len(set(primes)) != len(primes):
        raise ValueError("need distinct primes and one degree per prime")
    ranges = [range(n) for n in reversed(degrees)]
    radicals = []
    for exps in itertools.product(*ranges):
        exps = exps[::-1]
        factors = tuple(
            (p, l // math.gcd(l, n), n // math.gcd(l, n))
            for p, l, n in zip(primes, exps, degrees)
            if l
        )
        radicals.append(factors)
    return PhasorSet(
        tuple(_radical_value(f) for f in radicals),
        tuple(radicals),
        tuple(_radical_label(f) for f in radicals),
    )


def _squarefree_sequence(count: int):
    """Square-free integers > 1 in increasing order, as sets of prime factors."""
    out, n = [], 2
    while len(out) < count:
        x, fac = n, []
        for p in _PRIMES:
            if x % p == 0:
                x //= p
                if x % p == 0:
                    fac = None
                    break
                fac.append(p)
            if x == 1:
                break
        if fac is not None and x == 1:
            out.append(tuple(fac))
        n += 1
        if n > 10_000:
            raise ValueError("too many exponents requested")
    return out


def besicovitch_exponents(t: int, primes=None, degrees=None) -> PhasorSet:
    """Return ``t`` Q-linearly independent purely imaginary exponents.

    With explicit ``primes``/``degrees`` the full product set is returned and
    must have exactly ``t`` elements.  Otherwise the square roots of the
    square-free integers 2, 3, 5, 6, 7, 10, ... are used in order, so ``t = 2``
    gives ``sqrt2, sqrt3``.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    if primes is not None:
        ps = besicovitch_set(primes, degrees)
        if len(ps) != t:
            raise ValueError(f"prime/degree choice yields {len(ps)} exponents, not {t}")
        return ps
    radicals = tuple(tuple((p, 1, 2) for p in fac) for fac in _squarefree_sequence(t))
    return PhasorSet(
        tuple(_radical_value(f) for f in radicals),
        radicals,
        tuple(_radical_label(f) for f in radicals),
    )


def golden_phasor() -> PhasorSet:
    """The single exponent ``i (1 + sqrt5) / 2`` used for the T = 1 schemes."""
    return PhasorSet(((1 + math.sqrt(5)) / 2,), ((),), ("(1+sqrt5)/2",))


def integer_relation(values, max_coeff: int = 1000, dps: int = 60):
    """Search for an integer relation among ``values`` with PSLQ.

    Returns the coefficient list, or ``None`` when no relation with
    coefficients bounded by ``max_coeff`` exists at working precision.
    """
    with mpmath.workdps(dps):
        vals = [mpmath.mpf(v) for v in values]
        return mpmath.pslq(vals, maxcoeff=max_coeff, maxsteps=100_000)


def pairwise_ratio_relation(a, b, max_coeff: int = 1000, dps: int = 60):
    """Exhaustively look for ``q1*a + q2*b = 0`` with ``0 < |q1|, |q2| <= max_coeff``."""
    with mpmath.workdps(dps):
        a, b = mpmath.mpf(a), mpmath.mpf(b)
        ratio = a / b
        eps = mpmath.mpf(10) ** (-(dps // 2))
        for q1 in range(1, max_coeff + 1):
            q2 = -q1 * ratio
            n = mpmath.nint(q2)
            if abs(n) <= max_coeff and n != 0 and abs(q2 - n) < eps:
                return (q1, int(n))
    return None
