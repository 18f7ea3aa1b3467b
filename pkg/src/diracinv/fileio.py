"""Plain-text file formats: a ``key = value`` header followed by CSV rows.

Every numeric value is written with 17 significant digits, so a write/read
cycle reproduces the floats exactly.  Lines starting with ``#`` are comments.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import Potential, Spectrum
from .errors import SpectrumError
from . import __version__

SPECTRUM_FORMAT = "spectrum/1"
POTENTIAL_FORMAT = "potential/1"
REPORT_FORMAT = "report/1"

SPECTRUM_HEADER_KEYS = ("mu_pi", "a", "alpha", "h1", "h2", "N")

# Report schema: key -> type.  Keys starting with "timings_" are wall-clock
# seconds and the only fields that vary between identical runs.
REPORT_SCHEMA = {
    "format": str,
    "config_hash": str,
    "generator": str,
    "n_max": int,
    "grid_intervals": int,
    "colloc_intervals": int,
    "n_eigenvalues": int,
    "reference": str,
    "errors_p_L2_rel": float,
    "errors_q_L2_rel": float,
    "max_asym_defect": float,
    "max_a0_residual": float,
    "max_condition": float,
    "parseval_residual": float,
    "h1_hat": float,
    "h2_hat": float,
    "timings_direct": float,
    "timings_inverse": float,
    "timings_verify": float,
}


def fmt(v) -> str:
    """17-significant-digit text for floats, plain text otherwise."""
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def generator_tag(command: str) -> str:
    return f"diracinv {__version__} {command}"


def _write(path, header: dict, columns: str | None = None, rows=None):
    lines = [f"{k} = {fmt(v)}" for k, v in header.items()]
    if columns is not None:
        lines.append(columns)
        for r in rows:
            lines.append(",".join(fmt(v) for v in r))
    Path(path).write_text("\n".join(lines) + "\n")


def _parse(text: str, columns: str):
    """Split into a header dict and data lines ``(line_no, fields)``."""
    header = {}
    rows = []
    in_body = False
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if in_body:
            rows.append((no, [s.strip() for s in line.split(",")]))
        elif line.replace(" ", "") == columns:
            in_body = True
        elif "=" in line:
            k, v = (s.strip() for s in line.split("=", 1))
            header[k] = v
        else:
            raise SpectrumError(f"line {no}: expected 'key = value' or the column header {columns!r}")
    if not in_body:
        raise SpectrumError(f"missing column header {columns!r}")
    return header, rows


def write_spectrum(path, spec: Spectrum, *, a: float, alpha: float, h1: float, h2: float,
                   config_hash: str = "", generator: str = "") -> None:
    header = {
        "format": SPECTRUM_FORMAT,
        "config_hash": config_hash,
        "generator": generator or generator_tag("direct"),
        "mu_pi": float(spec.mu_pi),
        "a": float(a),
        "alpha": float(alpha),
        "h1": float(h1),
        "h2": float(h2),
        "N": spec.n_max,
        "rows": len(spec),
    }
    rows = [(int(n), float(l), float(al)) for n, l, al in zip(spec.index, spec.lam, spec.alpha)]
    _write(path, header, "n,lambda,alpha", rows)


def read_spectrum(path) -> tuple[Spectrum, dict]:
    """Parse and validate a spectrum file.

    Raises
    ------
    SpectrumError
        On malformed rows (named by line and row number), a row count that
        disagrees with the header or with ``N``, or data failing validation.
    """
    header, rows = _parse(Path(path).read_text(), "n,lambda,alpha")
    for k in SPECTRUM_HEADER_KEYS:
        if k not in header:
            raise SpectrumError(f"header key {k!r} missing")
    try:
        N = int(header["N"])
        mu_pi = float(header["mu_pi"])
    except ValueError as exc:
        raise SpectrumError(f"bad header value: {exc}") from None
    idx, lam, alp = [], [], []
    for r, (no, fields) in enumerate(rows, start=1):
        if len(fields) != 3:
            raise SpectrumError(f"row {r} (line {no}): expected 3 fields n,lambda,alpha, got {len(fields)}")
        try:
            idx.append(int(fields[0]))
            lam.append(float(fields[1]))
            alp.append(float(fields[2]))
        except ValueError as exc:
            raise SpectrumError(f"row {r} (line {no}): {exc}") from None
    if "rows" in header and int(header["rows"]) != len(rows):
        raise SpectrumError(f"header declares {header['rows']} rows, file has {len(rows)}")
    if len(rows) < 2 * N + 1:
        raise SpectrumError(f"row {len(rows) + 1} missing: N = {N} needs at least {2 * N + 1} rows")
    if len(rows) > 2 * N + 2:
        raise SpectrumError(f"row {2 * N + 3} (line {rows[2 * N + 2][0]}) is extra: N = {N} allows at most {2 * N + 2} rows")
    spec = Spectrum(N, np.array(idx), np.array(lam), np.array(alp), mu_pi)
    return spec, header


def write_potential(path, pot: Potential, header: dict) -> None:
    h = {"format": POTENTIAL_FORMAT}
    h.update(header)
    h["nodes"] = len(pot.grid)
    _write(path, h, "x,p,q", zip(pot.grid, pot.p, pot.q))


def read_potential(path) -> tuple[Potential, dict]:
    header, rows = _parse(Path(path).read_text(), "x,p,q")
    vals = []
    for r, (no, fields) in enumerate(rows, start=1):
        if len(fields) != 3:
            raise SpectrumError(f"row {r} (line {no}): expected 3 fields x,p,q")
        try:
            vals.append([float(f) for f in fields])
        except ValueError as exc:
            raise SpectrumError(f"row {r} (line {no}): {exc}") from None
    arr = np.array(vals, dtype=float).reshape(-1, 3)
    return Potential(arr[:, 0], arr[:, 1], arr[:, 2]), header


def write_table(path, header: dict, columns: list[str], data) -> None:
    """Generic header plus CSV table."""
    _write(path, header, ",".join(columns), data)


def read_table(path, columns: list[str]):
    header, rows = _parse(Path(path).read_text(), ",".join(columns))
    return header, np.array([[float(f) for f in r] for _, r in rows], dtype=float).reshape(-1, len(columns))


def format_report(fields: dict) -> str:
    """Report text in schema order; raises on missing or unknown keys."""
    missing = [k for k in REPORT_SCHEMA if k not in fields]
    extra = [k for k in fields if k not in REPORT_SCHEMA]
    if missing or extra:
        raise ValueError(f"report fields missing {missing} unknown {extra}")
    return "\n".join(f"{k} = {fmt(REPORT_SCHEMA[k](fields[k]))}" for k in REPORT_SCHEMA) + "\n"


def parse_report(text: str) -> dict:
    """Parse and validate report text against :data:`REPORT_SCHEMA`."""
    out = {}
    for no, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"line {no}: expected 'key = value'")
        k, v = (s.strip() for s in line.split("=", 1))
        if k not in REPORT_SCHEMA:
            raise ValueError(f"line {no}: unknown key {k!r}")
        if k in out:
            raise ValueError(f"line {no}: duplicate key {k!r}")
        try:
            out[k] = REPORT_SCHEMA[k](v)
        except ValueError:
            raise ValueError(f"line {no}: {k} is not a valid {REPORT_SCHEMA[k].__name__}") from None
    missing = [k for k in REPORT_SCHEMA if k not in out]
    if missing:
        raise ValueError(f"missing keys {missing}")
    if out["format"] != REPORT_FORMAT:
        raise ValueError(f"unsupported report format {out['format']!r}")
    for k in ("errors_p_L2_rel", "errors_q_L2_rel", "max_asym_defect", "parseval_residual"):
        if out[k] < 0:
            raise ValueError(f"{k} must be nonnegative")
    return out
