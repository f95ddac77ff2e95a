"""Full-diversity certification of finite feedback schemes.

For a scheme with component codes ``C_1..C_N`` the stacked difference set
holds every ``NT x Nt`` matrix ``[D_1; ...; D_N]`` with ``D_n`` a nonzero
difference codeword of ``C_n``.  The scheme has full transmit diversity when
every such stack has rank ``Nt``.  This module computes the minimum rank over
the stacks and ``lambda* = min sigma_min(X)^2 = min lambda_min(X^H X)``.

Exhaustive certification relies on a cheap screen: for a square ``n x n``
stack, AM-GM on the other singular values gives

    sigma_min^2 >= |det X|^2 / (||X||_F^2 / (n - 1))^(n - 1),

so stacks with a comfortably large determinant are full rank without an SVD,
and the same bound prunes the search for ``lambda*``.  Determinants of block
stacks are obtained by generalized Laplace expansion from the ``T x T``
minors of each block, which costs one small matrix product per pair of
difference vectors.
"""

from __future__ import annotations

import itertools
import math
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .algebra import RANK_TOL, difference_alphabet
from .codes import FiniteFeedbackScheme, encode
from .errors import EnumerationTooLarge, InvalidDifference
from .feedback import difference_vectors

__all__ = [
    "DiversityCertificate",
    "stack_differences",
    "exhaustive_size",
    "certify_full_diversity",
    "diversity_upper_bound",
    "DEFAULT_BUDGET",
]

DEFAULT_BUDGET = 10**8
_DET_ERR = 1e-7
_CHUNK = 1 << 19


@dataclass(frozen=True)
class DiversityCertificate:
    """Outcome of a rank scan over the stacked difference set.

    Attributes
    ----------
    min_rank : int
        Smallest stack rank seen.
    lambda_star : float
        Smallest ``sigma_min(X)^2`` seen; 0 when a rank-deficient stack exists.
    mode : str
        ``"EXHAUSTIVE"`` or ``"SAMPLED"``.
    full_diversity_certified : bool
        Only an exhaustive scan with ``min_rank == Nt`` certifies.
    counterexample : tuple of ndarray or None
        The ``N`` difference vectors of the first rank-deficient stack.
    """

    min_rank: int
    lambda_star: float
    mode: str
    full_diversity_certified: bool
    ft_optimal: bool
    counterexample: tuple | None
    stacks_checked: int
    nt: int
    n: int
    t: int
    samples: int | None = None
    seed: int | None = None
    counterexample_index: int | None = None
    svd_evaluations: int = 0

    @property
    def refuted(self) -> bool:
        return self.min_rank < self.nt

    def upper_bound(self, nr: int) -> int:
        return diversity_upper_bound(self, nr)

    def summary(self) -> str:
        head = "certified" if self.full_diversity_certified else (
            "refuted" if self.refuted else "not refuted")
        mode = self.mode if self.mode == "EXHAUSTIVE" else (
            f"SAMPLED(count={self.samples}, seed={self.seed})")
        lines = [
            f"mode={mode}",
            f"stacks_checked={self.stacks_checked}",
            f"min_rank={self.min_rank} ft_optimal={'true' if self.ft_optimal else 'false'}",
            f"nt={self.nt} n={self.n} t={self.t}",
            f"lambda_star={self.lambda_star:.6g}",
            f"full_diversity={'true' if self.full_diversity_certified else 'false'}",
            f"status={head}",
        ]
        if self.counterexample is not None:
            parts = ["[" + ", ".join(_fmt(z) for z in d) + "]" for d in self.counterexample]
            lines.append("counterexample=" + " ; ".join(parts))
        return "\n".join(lines)


def _fmt(z) -> str:
    z = complex(z)
    if z.imag == 0:
        return f"{z.real:g}"
    return f"{z.real:g}{z.imag:+g}j"


def diversity_upper_bound(cert: DiversityCertificate, nr: int) -> int:
    """Largest achievable diversity order ``min_rank * nr``."""
    return int(cert.min_rank) * int(nr)


def stack_differences(scheme: FiniteFeedbackScheme, diffs) -> np.ndarray:
    """Vertical stack of ``power_scale * encode(C_n, d_n)`` for ``n = 1..N``."""
    if len(diffs) != scheme.n:
        raise InvalidDifference(f"need {scheme.n} difference vectors, got {len(diffs)}")
    blocks = []
    for code, d in zip(scheme.codes, diffs):
        d = np.asarray(d, dtype=complex)
        if d.shape != (code.k,):
            raise InvalidDifference(f"difference vector must have {code.k} entries")
        if not np.any(d):
            raise InvalidDifference("difference vectors must be nonzero")
        alpha = difference_alphabet(code.constellation)
        if not np.all(np.isin(d, alpha)):
            raise InvalidDifference("entries must lie in the difference alphabet")
        blocks.append(code.power_scale * encode(code, d))
    return np.vstack(blocks)


def exhaustive_size(scheme: FiniteFeedbackScheme) -> int:
    return math.prod(len(difference_alphabet(c.constellation)) ** c.k - 1 for c in scheme.codes)


# ---------------------------------------------------------------------------
# exact evaluation and the running reduction
# ---------------------------------------------------------------------------

def _exact(stacks: np.ndarray):
    """Rank and ``sigma_min^2`` per stack, one LAPACK call per matrix."""
    s = np.linalg.svd(stacks, compute_uv=False)
    nt = stacks.shape[2]
    smax = s[:, 0]
    ranks = np.sum(s > RANK_TOL * smax[:, None], axis=1)
    ranks[smax == 0] = 0
    if s.shape[1] < nt:
        smin2 = np.zeros(len(stacks))
    else:
        smin2 = s[:, nt - 1] ** 2
    return ranks, smin2


class _Reduction:
    """Shared min-rank / lambda* / counterexample state across chunks."""

    def __init__(self, nt: int):
        self.nt = nt
        self.min_rank = nt
        self.best = math.inf
        self.cex = None
        self.svds = 0
        self.lock = threading.Lock()

    def consume(self, base, lower, clear, build):
        """Fold a chunk of stacks into the state.

        ``lower`` is a rigorous lower bound on ``sigma_min^2`` per stack,
        ``clear`` marks stacks known to be full rank, and ``build(idx)``
        materializes the stacks at local positions ``idx``.
        """
        must = np.flatnonzero(~clear)
        ranks_m, smin_m = (_exact(build(must)) if len(must) else
                           (np.zeros(0, int), np.zeros(0)))
        svds = len(must)
        local_best = math.inf
        local_rank = self.nt
        local_cex = None
        if len(must):
            local_best = float(smin_m.min())
            bad = np.flatnonzero(ranks_m < self.nt)
            if len(bad):
                local_rank = int(ranks_m[bad].min())
                local_cex = base + int(must[bad[0]])
        # lambda*: scan cleared stacks in order of their lower bound
        with self.lock:
            bound = min(self.best, local_best)
        cleared = np.flatnonzero(clear)
        if len(cleared):
            lo = lower[cleared]
            keep = lo <= bound * (1 + 1e-6) if math.isfinite(bound) else np.ones(len(lo), bool)
            cand = cleared[keep]
            cand = cand[np.argsort(lower[cand], kind="stable")]
            step = 4096
            for s in range(0, len(cand), step):
                part = cand[s:s + step]
                if lower[part[0]] > bound * (1 + 1e-6):
                    break
                _, sm = _exact(build(part))
                svds += len(part)
                bound = min(bound, float(sm.min()))
                local_best = min(local_best, float(sm.min()))
        with self.lock:
            self.svds += svds
            self.best = min(self.best, local_best)
            if local_rank < self.min_rank:
                self.min_rank = local_rank
            if local_cex is not None and (self.cex is None or local_cex < self.cex):
                self.cex = local_cex


def _det_bound(detabs, had):
    """``(|det| - err)^2`` with the error scaled by the Hadamard bound."""
    return np.maximum(detabs - _DET_ERR * had, 0.0) ** 2


def _screen(num, frob, n):
    """Lower bound on ``sigma_min^2`` and the full-rank mask.

    ``num`` must lower-bound the product of all squared singular values.
    """
    if n == 1:
        lower = num
    else:
        scale = np.maximum(frob / (n - 1), 1e-300) ** (n - 1)
        lower = num / scale
    clear = lower > (10 * RANK_TOL) ** 2 * frob
    return lower, clear


def _square_screen(x):
    n = x.shape[1]
    detabs = np.abs(np.linalg.det(x)) if n > 1 else np.abs(x[:, 0, 0])
    frob = np.sum(x.real**2 + x.imag**2, axis=(1, 2))
    had = np.prod(np.linalg.norm(x, axis=2), axis=1)
    return _screen(_det_bound(detabs, had), frob, n)


# ---------------------------------------------------------------------------
# exhaustive engines
# ---------------------------------------------------------------------------

def _shuffle_sign(a, b) -> int:
    inv = sum(1 for x in a for y in b if x > y)
    return -1 if inv % 2 else 1


def _minors(blocks: np.ndarray, subsets) -> np.ndarray:
    """``det(D[:, S])`` for every block and column subset ``S``."""
    t = blocks.shape[1]
    out = np.empty((len(blocks), len(subsets)), dtype=complex)
    for j, s in enumerate(subsets):
        sub = blocks[:, :, list(s)]
        out[:, j] = sub[:, 0, 0] if t == 1 else np.linalg.det(sub)
    return out


class _LaplaceEngine:
    """Determinants of square block stacks by generalized Laplace expansion."""

    def __init__(self, blocks, nt, t):
        self.blocks = blocks
        self.nt = nt
        self.t = t
        self.N = len(blocks)
        cols = range(nt)
        self.sub_t = list(itertools.combinations(cols, t))
        self.minors = [_minors(b, self.sub_t) for b in blocks]
        self.frob = [np.sum(np.abs(b) ** 2, axis=(1, 2)) for b in blocks]
        self.had = [np.prod(np.linalg.norm(b, axis=2), axis=1) for b in blocks]
        # wedge tables for growing the column set one block at a time
        self.sets = [[()]]
        self.tables = []
        for m in range(1, self.N):
            prev = self.sets[-1]
            cur = list(itertools.combinations(cols, m * t))
            pos = {s: i for i, s in enumerate(cur)}
            table = []
            for i, a in enumerate(prev):
                for j, b in enumerate(self.sub_t):
                    if set(a) & set(b):
                        continue
                    u = tuple(sorted(a + b))
                    table.append((i, j, pos[u], _shuffle_sign(a, b)))
            self.sets.append(cur)
            self.tables.append(table)
        last = self.sets[-1]
        sub_pos = {s: i for i, s in enumerate(self.sub_t)}
        self.q_cols = []
        for u in last:
            comp = tuple(c for c in cols if c not in u)
            self.q_cols.append((sub_pos[comp], _shuffle_sign(u, comp)))
        q = self.minors[-1]
        self.q = np.stack([sgn * q[:, j] for j, sgn in self.q_cols], axis=1)

    def outer(self, idx):
        """Wedge of the first ``N-1`` blocks for outer index tuples ``idx``."""
        w = np.ones((len(idx[0]), 1), dtype=complex)
        for m in range(self.N - 1):
            p = self.minors[m][idx[m]]
            new = np.zeros((len(w), len(self.sets[m + 1])), dtype=complex)
            for i, j, u, sgn in self.tables[m]:
                new[:, u] += sgn * (w[:, i] * p[:, j])
            w = new
        return w


def _exhaustive(scheme, budget, workers):
    codes = scheme.codes
    nt, t, N = scheme.nt, scheme.t, scheme.n
    total = exhaustive_size(scheme)
    if total > budget:
        raise EnumerationTooLarge(total, budget, "difference stacks")
    diffs = [difference_vectors(c, cap=max(budget, 1)) for c in codes]
    blocks = [c.power_scale * encode(c, d) for c, d in zip(codes, diffs)]
    sizes = [len(b) for b in blocks]
    red = _Reduction(nt)
    n = N * t

    def build_from(flat):
        parts = np.unravel_index(flat, sizes)
        return np.concatenate([blocks[m][parts[m]] for m in range(N)], axis=1)

    jobs = []
    if n == nt and N >= 2:
        eng = _LaplaceEngine(blocks, nt, t)
        inner = sizes[-1]
        outer_total = total // inner
        rows = max(1, _CHUNK // inner)
        outer_shape = sizes[:-1]

        def job(start):
            stop = min(outer_total, start + rows)
            oflat = np.arange(start, stop)
            oidx = np.unravel_index(oflat, outer_shape)
            w = eng.outer(oidx)
            detv = np.abs(w @ eng.q.T)
            of = sum(eng.frob[m][oidx[m]] for m in range(N - 1))
            oh = np.prod([eng.had[m][oidx[m]] for m in range(N - 1)], axis=0)
            frob = of[:, None] + eng.frob[-1][None, :]
            had = oh[:, None] * eng.had[-1][None, :]
            lower, clear = _screen(_det_bound(detv.ravel(), had.ravel()), frob.ravel(), n)
            base = start * inner
            red.consume(base, lower, clear, lambda loc: build_from(base + loc))

        jobs = [(job, s) for s in range(0, outer_total, rows)]
    else:
        def job(start):
            stop = min(total, start + _CHUNK)
            flat = np.arange(start, stop)
            x = build_from(flat)
            if n == nt:
                lower, clear = _square_screen(x)
            elif n > nt:
                g = np.einsum("bij,bik->bjk", x.conj(), x)
                detg = np.linalg.det(g).real if nt > 1 else g[:, 0, 0].real
                frob = np.real(np.trace(g, axis1=1, axis2=2))
                had = np.prod(np.linalg.norm(g, axis=2), axis=1)
                lower, clear = _screen(np.maximum(detg - _DET_ERR * had, 0.0), frob, nt)
            else:
                lower = np.zeros(len(x))
                clear = np.zeros(len(x), bool)
            red.consume(start, lower, clear, lambda loc: x[loc])

        jobs = [(job, s) for s in range(0, total, _CHUNK)]

    _run(jobs, workers)
    cex = None
    if red.cex is not None:
        parts = np.unravel_index(red.cex, sizes)
        cex = tuple(diffs[m][parts[m]] for m in range(N))
    return red, total, cex


def _run(jobs, workers):
    workers = max(1, int(workers or 1))
    if workers == 1 or len(jobs) <= 1:
        for fn, arg in jobs:
            fn(arg)
        return
    with ThreadPoolExecutor(max_workers=workers) as pool:
        for f in [pool.submit(fn, arg) for fn, arg in jobs]:
            f.result()


def _sampled(scheme, samples, seed, workers):
    codes = scheme.codes
    nt = scheme.nt
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    chosen = []
    for c in codes:
        alpha = difference_alphabet(c.constellation)
        digits = rng.integers(0, len(alpha), size=(samples, c.k))
        d = alpha[digits]
        zero = ~np.any(d, axis=1)
        while np.any(zero):
            d[zero] = alpha[rng.integers(0, len(alpha), size=(int(zero.sum()), c.k))]
            zero = ~np.any(d, axis=1)
        chosen.append(d)
    red = _Reduction(nt)
    n = scheme.n * scheme.t

    def job(start):
        stop = min(samples, start + (1 << 16))
        x = np.concatenate(
            [c.power_scale * encode(c, d[start:stop]) for c, d in zip(codes, chosen)], axis=1)
        if n == nt:
            lower, clear = _square_screen(x)
        else:
            lower = np.zeros(len(x))
            clear = np.zeros(len(x), bool)
        red.consume(start, lower, clear, lambda loc: x[loc])

    _run([(job, s) for s in range(0, samples, 1 << 16)], workers)
    cex = None
    if red.cex is not None:
        cex = tuple(d[red.cex] for d in chosen)
    return red, cex


def certify_full_diversity(scheme: FiniteFeedbackScheme, mode: str = "exhaustive",
                           budget: int = DEFAULT_BUDGET, seed: int | None = None,
                           samples: int = 100_000, workers: int | None = None) -> DiversityCertificate:
    """Scan the stacked difference set for rank-deficient members.

    Parameters
    ----------
    mode : {"exhaustive", "sampled"}
        Exhaustive scans every combination of nonzero difference vectors and
        can certify; sampled draws ``samples`` combinations and can only
        refute.
    budget : int
        Largest number of stacks an exhaustive scan may visit.
    seed : int
        Required in sampled mode.
    workers : int, optional
        Thread count; the result does not depend on it.
    """
    mode = mode.lower()
    if workers is None:
        workers = int(os.environ.get("FFS_WORKERS", "1"))
    nt, t, N = scheme.nt, scheme.t, scheme.n
    if mode == "exhaustive":
        red, checked, cex = _exhaustive(scheme, budget, workers)
        sm, sd = None, None
    elif mode == "sampled":
        if seed is None:
            raise ValueError("sampled certification needs a seed")
        if samples < 1:
            raise ValueError("samples must be positive")
        red, cex = _sampled(scheme, int(samples), int(seed), workers)
        checked, sm, sd = int(samples), int(samples), int(seed)
    else:
        raise ValueError(f"unknown mode {mode!r}")
    full = red.min_rank == nt
    certified = full and mode == "exhaustive"
    return DiversityCertificate(
        min_rank=int(red.min_rank),
        lambda_star=float(red.best) if full else 0.0,
        mode=mode.upper(),
        full_diversity_certified=certified,
        ft_optimal=certified and N * t == nt,
        counterexample=cex,
        stacks_checked=int(checked),
        nt=nt, n=N, t=t,
        samples=sm, seed=sd,
        counterexample_index=red.cex,
        svd_evaluations=red.svds,
    )
