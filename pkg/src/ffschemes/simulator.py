"""Seeded Monte Carlo bit-error-rate engine for finite feedback schemes.

Model per trial: ``Y = sqrt(E) X H + W`` with ``H`` (``Nt x Nr``) and ``W``
i.i.d. CN(0, 1) and CN(0, N0) entries, ``E = 1`` and ``N0 = 10^(-snr/10)``.
Every code is scaled so ``E ||X||_F^2 = T``.

Randomness comes in fixed blocks of trials.  Block ``b`` owns the counter
based stream ``Philox(SeedSequence(seed, spawn_key=(b,)))`` and draws, in
this order, the channels, the payload bits and unit-variance noise.  The
same draws serve every SNR point, and results are merged in block order, so
a run is reproducible for any worker count.
"""

from __future__ import annotations

import csv
import io
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .codes import (
    FiniteFeedbackScheme,
    LinearDispersionCode,
    bits_to_indices,
    encode,
    indices_to_bits,
)
from .decoder import ml_decode_exhaustive, sphere_decode
from .errors import SlopeUndefined
from .feedback import DIFFERENCE_CAP, difference_vectors, select_many
from .algebra import difference_alphabet

__all__ = [
    "ChannelModel",
    "SimConfig",
    "SnrPoint",
    "SimResult",
    "power_normalize",
    "average_energy",
    "run_ber",
    "estimate_diversity_slope",
    "write_csv",
    "read_csv",
    "write_plot_data",
    "CSV_HEADER",
]

BLOCK = 4096
CSV_HEADER = ["scheme", "seed", "bpcu", "nr", "snr_db", "trials", "bits", "bit_errors",
              "ber", "ci95_low", "ci95_high"]
_GRAM_DIFFS = 1 << 16
_GRAM_CODEBOOK = 4096
_WORK = 1 << 21


@dataclass(frozen=True)
class ChannelModel:
    """Quasi-static Rayleigh channel with unit-variance fading entries."""

    nt: int
    nr: int
    noise_variance: float = 1.0

    def fading(self, rng: np.random.Generator, count: int) -> np.ndarray:
        return _cn(rng, (count, self.nt, self.nr))

    def noise(self, rng: np.random.Generator, count: int, t: int) -> np.ndarray:
        return math.sqrt(self.noise_variance) * _cn(rng, (count, t, self.nr))


def _cn(rng, shape) -> np.ndarray:
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2)


@dataclass(frozen=True)
class SimConfig:
    snr_db_list: tuple
    max_trials: int
    target_bit_errors: int = 200
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        snrs = tuple(float(s) for s in self.snr_db_list)
        if not snrs:
            raise ValueError("snr_db_list must not be empty")
        if self.max_trials < 1:
            raise ValueError("max_trials must be at least 1")
        object.__setattr__(self, "snr_db_list", snrs)


@dataclass(frozen=True)
class SnrPoint:
    snr_db: float
    trials: int
    bits: int
    bit_errors: int
    ber: float
    ci95_low: float
    ci95_high: float


@dataclass(frozen=True)
class SimResult:
    scheme: str
    seed: int
    bpcu: float
    nr: int
    points: tuple = field(default_factory=tuple)

    def snr_db(self) -> np.ndarray:
        return np.array([p.snr_db for p in self.points])

    def ber(self) -> np.ndarray:
        return np.array([p.ber for p in self.points])


def _point(snr_db, trials, bits, errors) -> SnrPoint:
    p = errors / bits if bits else 0.0
    half = 1.96 * math.sqrt(p * (1 - p) / bits) if bits else 0.0
    return SnrPoint(float(snr_db), int(trials), int(bits), int(errors), p,
                    max(0.0, p - half), min(1.0, p + half))


# ---------------------------------------------------------------------------
# power normalization
# ---------------------------------------------------------------------------

def average_energy(code: LinearDispersionCode) -> float:
    """Exact ``E ||X||_F^2`` of the unscaled code for i.i.d. uniform symbols."""
    pts = code.constellation.points
    w = code.weights
    v = code.conj_weights if code.conj_weights is not None else np.zeros_like(w)
    total = 0.0
    mean = np.zeros((code.t, code.nt), dtype=complex)
    for k in range(code.k):
        x = pts[:, None, None] * w[k] + pts.conj()[:, None, None] * v[k]
        mu = x.mean(axis=0)
        total += float(np.mean(np.sum(np.abs(x) ** 2, axis=(1, 2)))) - float(np.sum(np.abs(mu) ** 2))
        mean += mu
    return total + float(np.sum(np.abs(mean) ** 2))


def power_normalize(scheme: FiniteFeedbackScheme) -> FiniteFeedbackScheme:
    """Scale every component code to unit average power per channel use."""
    codes = []
    for c in scheme.codes:
        e = average_energy(c)
        if not e > 0:
            raise ValueError(f"{c.label or 'code'} has zero average energy")
        codes.append(c.with_power_scale(math.sqrt(c.t / e)))
    return scheme.with_codes(codes)


# ---------------------------------------------------------------------------
# per-block kernels
# ---------------------------------------------------------------------------

def _gram_flat(m: np.ndarray) -> np.ndarray:
    """Row-stack ``[Re, Im]`` of flattened matrices for real inner products."""
    f = m.reshape(len(m), -1)
    return np.concatenate([f.real, f.imag], axis=1)


class _Kernels:
    """Precomputed tables for vectorized feedback and decoding of one scheme."""

    def __init__(self, scheme: FiniteFeedbackScheme):
        self.scheme = scheme
        self.fd_tables = None
        if scheme.rule.kind == "FD":
            tables = []
            for c in scheme.codes:
                size = len(difference_alphabet(c.constellation)) ** c.k - 1
                if size > _GRAM_DIFFS:
                    tables = None
                    break
                d = c.power_scale * encode(c, difference_vectors(c, cap=DIFFERENCE_CAP))
                tables.append(_gram_flat(np.einsum("bti,btj->bij", d.conj(), d)))
            self.fd_tables = tables
        self.dec = []
        for c in scheme.codes:
            if c.codebook_size <= _GRAM_CODEBOOK:
                cb = c.power_scale * c.codebook()
                gram = np.einsum("bti,btj->bij", cb.conj(), cb)
                self.dec.append((_gram_flat(cb), _gram_flat(gram)))
            else:
                self.dec.append(None)

    def select(self, h: np.ndarray) -> np.ndarray:
        if self.fd_tables is None:
            return select_many(self.scheme, h)
        p = _gram_flat(np.einsum("bir,bjr->bij", h, h.conj()))
        mins = np.empty((len(h), len(self.fd_tables)))
        for n, tab in enumerate(self.fd_tables):
            step = max(1, _WORK // len(tab))
            for s in range(0, len(h), step):
                mins[s:s + step, n] = (p[s:s + step] @ tab.T).min(axis=1)
        return np.argmax(mins, axis=1) + 1

    def decode(self, n: int, y: np.ndarray, h: np.ndarray, e: float) -> np.ndarray:
        """Flat codebook indices of the ML decisions for code ``n`` (0-based)."""
        code = self.scheme.codes[n]
        tab = self.dec[n]
        if tab is None:
            out = np.empty(len(y), dtype=np.int64)
            shape = (code.constellation.size,) * code.k
            for b in range(len(y)):
                if code.constellation.is_box:
                    _, idx = sphere_decode(code, y[b], h[b], e, return_indices=True)
                else:
                    _, idx = ml_decode_exhaustive(code, y[b], h[b], e, return_indices=True)
                out[b] = np.ravel_multi_index(tuple(idx), shape)
            return out
        cflat, gflat = tab
        g = math.sqrt(e)
        a = _gram_flat(np.einsum("btr,bir->bti", y, h.conj()))
        p = _gram_flat(np.einsum("bir,bjr->bij", h, h.conj()))
        out = np.empty(len(y), dtype=np.int64)
        step = max(1, _WORK // len(cflat))
        for s in range(0, len(y), step):
            m = (g * g) * (p[s:s + step] @ gflat.T) - (2 * g) * (a[s:s + step] @ cflat.T)
            out[s:s + step] = np.argmin(m, axis=1)
        return out


_STATE: dict = {}


def _init_worker(scheme, nr, seed, snrs, max_trials):
    _STATE.update(kern=_Kernels(scheme), scheme=scheme, nr=nr, seed=seed, snrs=snrs,
                  max_trials=max_trials)


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(block,))))


def _run_block(args):
    """Bit errors of block ``b`` at each requested SNR index."""
    b, active = args
    st = _STATE
    scheme: FiniteFeedbackScheme = st["scheme"]
    kern: _Kernels = st["kern"]
    nr = st["nr"]
    nbits = scheme.bits_per_codeword
    rng = _block_rng(st["seed"], b)
    h = _cn(rng, (BLOCK, scheme.nt, nr))
    bits = rng.integers(0, 2, size=(BLOCK, nbits), dtype=np.int8)
    w = _cn(rng, (BLOCK, scheme.t, nr))
    count = min(BLOCK, st["max_trials"] - b * BLOCK)
    h, bits, w = h[:count], bits[:count], w[:count]
    choice = kern.select(h)
    errors = {i: 0 for i in active}
    for n, code in enumerate(scheme.codes):
        rows = np.flatnonzero(choice == n + 1)
        if not len(rows):
            continue
        c = code.constellation
        idx = bits_to_indices(bits[rows], c, code.k)
        x = code.power_scale * encode(code, c.points[idx])
        hx = np.einsum("bti,bir->btr", x, h[rows])
        for i in active:
            n0 = 10.0 ** (-st["snrs"][i] / 10.0)
            y = hx + math.sqrt(n0) * w[rows]
            flat = kern.decode(n, y, h[rows], 1.0)
            dec = np.stack(np.unravel_index(flat, (c.size,) * code.k), axis=1)
            errors[i] += int(np.count_nonzero(indices_to_bits(dec, c) != bits[rows]))
    return b, count, errors


def run_ber(scheme: FiniteFeedbackScheme, nr: int, config: SimConfig,
            normalize: bool = True) -> SimResult:
    """Simulate the BER of ``scheme`` with ``nr`` receive antennas.

    Each SNR point consumes blocks in order until ``target_bit_errors`` is
    reached or ``max_trials`` trials have run.  The receiver applies the
    scheme's feedback rule to the true channel and ML-decodes with the
    selected code.
    """
    if nr < 1:
        raise ValueError("nr must be positive")
    if normalize:
        scheme = power_normalize(scheme)
    snrs = config.snr_db_list
    nblocks = -(-config.max_trials // BLOCK)
    nbits = scheme.bits_per_codeword
    trials = [0] * len(snrs)
    errors = [0] * len(snrs)
    done = [False] * len(snrs)
    workers = max(1, int(config.workers))
    init = (scheme, nr, int(config.seed), snrs, int(config.max_trials))
    wave = 4 * workers
    pool = None
    if workers > 1:
        pool = ProcessPoolExecutor(max_workers=workers, initializer=_init_worker, initargs=init)
    else:
        _init_worker(*init)
    try:
        b = 0
        while b < nblocks and not all(done):
            active = tuple(i for i in range(len(snrs)) if not done[i])
            jobs = [(j, active) for j in range(b, min(nblocks, b + wave))]
            outs = pool.map(_run_block, jobs) if pool else map(_run_block, jobs)
            for blk, count, errs in sorted(outs, key=lambda o: o[0]):
                for i in active:
                    if done[i]:
                        continue
                    trials[i] += count
                    errors[i] += errs[i]
                    if errors[i] >= config.target_bit_errors:
                        done[i] = True
            b += len(jobs)
    finally:
        if pool:
            pool.shutdown()
    points = tuple(_point(s, trials[i], trials[i] * nbits, errors[i]) for i, s in enumerate(snrs))
    return SimResult(scheme.label, int(config.seed), scheme.bpcu, int(nr), points)


# ---------------------------------------------------------------------------
# slope estimation
# ---------------------------------------------------------------------------

def estimate_diversity_slope(result, snr_window=None, ber_window=None, min_errors: int = 1) -> float:
    """Negated least-squares slope of ``log10(BER)`` against ``snr_db / 10``.

    Parameters
    ----------
    result : SimResult or sequence of SnrPoint
    snr_window, ber_window : (lo, hi), optional
        Inclusive filters on the SNR (dB) and on the BER.
    min_errors : int
        Points with fewer bit errors are ignored.

    Raises
    ------
    SlopeUndefined
        If fewer than two points survive the filters.
    """
    pts = result.points if isinstance(result, SimResult) else tuple(result)
    keep = []
    for p in pts:
        if p.bit_errors < max(1, min_errors) or not p.ber > 0:
            continue
        if snr_window is not None and not (min(snr_window) <= p.snr_db <= max(snr_window)):
            continue
        if ber_window is not None and not (min(ber_window) <= p.ber <= max(ber_window)):
            continue
        keep.append(p)
    if len({p.snr_db for p in keep}) < 2:
        raise SlopeUndefined(f"need at least two SNR points in the window, found {len(keep)}")
    x = np.array([p.snr_db / 10 for p in keep])
    y = np.log10([p.ber for p in keep])
    slope = np.polyfit(x, y, 1)[0]
    return float(-slope) + 0.0


# ---------------------------------------------------------------------------
# files
# ---------------------------------------------------------------------------

def _fmt(v: float) -> str:
    return repr(float(v))


def format_rows(results) -> list:
    rows = []
    for r in results:
        for p in r.points:
            rows.append([r.scheme, str(r.seed), _fmt(r.bpcu), str(r.nr), _fmt(p.snr_db),
                         str(p.trials), str(p.bits), str(p.bit_errors), _fmt(p.ber),
                         _fmt(p.ci95_low), _fmt(p.ci95_high)])
    return rows


def write_csv(results, path, manifest: dict | None = None) -> None:
    """Write results with the manifest as ``#``-prefixed header lines."""
    buf = io.StringIO()
    for k, v in (manifest or {}).items():
        buf.write(f"# {k}: {v}\n")
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(CSV_HEADER)
    wr.writerows(format_rows(results))
    with open(path, "w", newline="") as fh:
        fh.write(buf.getvalue())


def read_csv(path) -> list:
    """Parse a results file back into one ``SimResult`` per scheme label."""
    with open(path, newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#") and ln.strip()]
    rd = csv.DictReader(lines)
    if rd.fieldnames is None or list(rd.fieldnames) != CSV_HEADER:
        raise ValueError(f"unexpected CSV header {rd.fieldnames}")
    groups: dict = {}
    for row in rd:
        key = row["scheme"]
        g = groups.setdefault(key, {"meta": row, "points": []})
        g["points"].append(SnrPoint(float(row["snr_db"]), int(row["trials"]), int(row["bits"]),
                                    int(row["bit_errors"]), float(row["ber"]),
                                    float(row["ci95_low"]), float(row["ci95_high"])))
    return [SimResult(k, int(g["meta"]["seed"]), float(g["meta"]["bpcu"]), int(g["meta"]["nr"]),
                      tuple(g["points"])) for k, g in groups.items()]


def write_plot_data(results, path, manifest: dict | None = None) -> None:
    """Gnuplot-style data: one ``snr_db ber`` block per scheme, blocks split by two blank lines."""
    with open(path, "w") as fh:
        for k, v in (manifest or {}).items():
            fh.write(f"# {k}: {v}\n")
        for i, r in enumerate(results):
            if i:
                fh.write("\n\n")
            fh.write(f"# {r.scheme}\n")
            for p in r.points:
                fh.write(f"{_fmt(p.snr_db)} {_fmt(p.ber)}\n")


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("FFS_WORKERS", "1")))
    except ValueError:
        return 1
