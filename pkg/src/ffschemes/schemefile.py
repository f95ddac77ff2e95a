"""Scheme spec files and beamformer files.

A scheme spec file holds ``key = value`` lines; ``#`` starts a comment.

Keys: ``family`` (golden_thread | t1 | threaded | antenna_selection |
beamforming | switching | alamouti | spatial_multiplexing), ``nt``, ``n``,
``t``, ``constellation``, ``rotation`` (builtin:3 | builtin:4 | file:path),
``beamformers`` (dft | heath_paulraj | file:path), ``beta``, ``primes``,
``degrees``, ``large`` and ``name``.  Relative paths are resolved against the
spec file's directory.

A beamformer file starts with ``nt N`` and continues with ``N`` lines of
``2 nt`` reals, the interleaved real and imaginary parts of one vector.
"""

from __future__ import annotations

from dataclasses import replace
from pathlib import Path

import numpy as np

from .algebra import besicovitch_exponents, load_rotation, make_constellation
from .codes import (
    FiniteFeedbackScheme,
    alamouti_code,
    antenna_selection_scheme,
    beamforming_scheme,
    dft_beamformers,
    golden_thread_scheme,
    heath_paulraj_vectors,
    single_code_scheme,
    spatial_multiplexing_code,
    switching_scheme,
    t1_scheme,
    threaded_scheme,
)
from .errors import SchemeFileError

__all__ = ["FAMILIES", "parse_spec_text", "load_scheme", "build_scheme", "read_beamformer_file"]

FAMILIES = (
    "golden_thread", "t1", "threaded", "antenna_selection", "beamforming", "switching",
    "alamouti", "spatial_multiplexing",
)
_KEYS = {"family", "nt", "n", "t", "constellation", "rotation", "beamformers", "beta",
         "primes", "degrees", "large", "name"}


def parse_spec_text(text: str, source: str = "<spec>") -> dict:
    out = {}
    for no, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise SchemeFileError(f"{source}:{no}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        key = key.lower()
        if key not in _KEYS:
            raise SchemeFileError(f"{source}:{no}: unknown key {key!r}")
        if key in out:
            raise SchemeFileError(f"{source}:{no}: duplicate key {key!r}")
        out[key] = value
    if "family" not in out:
        raise SchemeFileError(f"{source}: missing 'family'")
    return out


def read_beamformer_file(path) -> np.ndarray:
    lines = [ln.split() for ln in Path(path).read_text().splitlines()
             if ln.strip() and not ln.lstrip().startswith("#")]
    if not lines or len(lines[0]) != 2 or lines[0][0] != "nt":
        raise SchemeFileError(f"{path}: first line must be 'nt N'")
    try:
        nt = int(lines[0][1])
        rows = [[float(v) for v in r] for r in lines[1:]]
    except ValueError as exc:
        raise SchemeFileError(f"{path}: {exc}") from None
    if not rows or any(len(r) != 2 * nt for r in rows):
        raise SchemeFileError(f"{path}: each vector needs {2 * nt} reals")
    a = np.array(rows)
    return a[:, 0::2] + 1j * a[:, 1::2]


def _int(spec, key, default=None):
    if key not in spec:
        if default is None:
            raise SchemeFileError(f"missing '{key}'")
        return default
    try:
        return int(spec[key])
    except ValueError:
        raise SchemeFileError(f"'{key}' must be an integer, got {spec[key]!r}") from None


def _ints(value: str) -> tuple:
    try:
        return tuple(int(v) for v in value.replace(",", " ").split())
    except ValueError:
        raise SchemeFileError(f"expected integers, got {value!r}") from None


def _path(value: str, base: Path) -> Path:
    p = Path(value)
    return p if p.is_absolute() else base / p


def _rotation(spec, dim, base):
    r = spec.get("rotation", f"builtin:{dim}")
    if r.startswith("builtin:"):
        if _ints(r.split(":", 1)[1]) != (dim,):
            raise SchemeFileError(f"rotation {r} does not match dimension {dim}")
        return load_rotation(dim)
    if r.startswith("file:"):
        return load_rotation(dim, _path(r[5:], base))
    raise SchemeFileError(f"rotation must be builtin:<dim> or file:<path>, got {r!r}")


def build_scheme(spec: dict, base_dir=".") -> FiniteFeedbackScheme:
    """Construct the scheme described by a parsed spec mapping."""
    base = Path(base_dir)
    fam = spec["family"]
    if fam not in FAMILIES:
        raise SchemeFileError(f"unknown family {fam!r}; choose from {', '.join(FAMILIES)}")
    c = make_constellation(spec.get("constellation", "QAM4").upper())
    if fam == "golden_thread":
        if _int(spec, "nt", 2) != 2:
            raise SchemeFileError("golden_thread needs nt = 2")
        s = golden_thread_scheme(c)
    elif fam == "t1":
        nt = _int(spec, "nt")
        beta = float(spec["beta"]) if "beta" in spec else None
        s = t1_scheme(nt, _rotation(spec, nt, base), beta=beta, c=c)
    elif fam == "threaded":
        n, t = _int(spec, "n"), _int(spec, "t")
        if "nt" in spec and _int(spec, "nt") != n * t:
            raise SchemeFileError("threaded needs nt = n * t")
        phasors = None
        if "primes" in spec:
            degrees = _ints(spec.get("degrees", " ".join("2" for _ in _ints(spec["primes"]))))
            phasors = besicovitch_exponents(t, _ints(spec["primes"]), degrees)
        s = threaded_scheme(n, t, _rotation(spec, n * t, base), phasors=phasors, c=c)
    elif fam == "antenna_selection":
        s = antenna_selection_scheme(_int(spec, "nt"), c)
    elif fam == "beamforming":
        kind = spec.get("beamformers", "dft")
        if kind == "dft":
            vecs = dft_beamformers(_int(spec, "nt"))
        elif kind == "heath_paulraj":
            if _int(spec, "nt", 2) != 2:
                raise SchemeFileError("heath_paulraj vectors need nt = 2")
            vecs = heath_paulraj_vectors(_int(spec, "n"))
        elif kind.startswith("file:"):
            vecs = read_beamformer_file(_path(kind[5:], base))
            if "nt" in spec and _int(spec, "nt") != vecs.shape[1]:
                raise SchemeFileError("beamformer file does not match nt")
        else:
            raise SchemeFileError(f"beamformers must be dft, heath_paulraj or file:<path>, got {kind!r}")
        if "n" in spec and kind != "heath_paulraj" and _int(spec, "n") != len(vecs):
            raise SchemeFileError(f"n = {spec['n']} but {len(vecs)} beamformers given")
        s = beamforming_scheme(vecs, c)
    elif fam == "switching":
        large = make_constellation(spec.get("large", f"QAM{c.size ** 2}").upper())
        s = switching_scheme(c, large)
    elif fam == "alamouti":
        s = single_code_scheme(alamouti_code(c))
        s = replace(s, family="alamouti")
    else:
        t = _int(spec, "t", 1)
        nt = _int(spec, "nt")
        s = single_code_scheme(spatial_multiplexing_code(t, nt, c))
        s = replace(s, family="spatial_multiplexing")
    if "name" in spec:
        s = replace(s, label=spec["name"])
    return s


def load_scheme(path) -> FiniteFeedbackScheme:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise SchemeFileError(f"cannot read {path}: {exc.strerror}") from None
    return build_scheme(parse_spec_text(text, str(p)), p.parent)
