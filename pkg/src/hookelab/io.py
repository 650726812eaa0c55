"""Configuration files, CSV tables and binary field snapshots.

Config: UTF-8 text, one ``key = value`` per line, ``#`` starts a comment,
unknown keys are errors. Every key and its default is listed in DEFAULTS.

CSV: header row, comma separated, floats written with 17 significant digits,
LF line endings.

Snapshot: b"CVEF", u32 version, u32 n, f64 L, u32 field count, then per field
a u32 byte length and UTF-8 name, then each field as n^3 little-endian
float64 values in C order (last index fastest). All integers little-endian.
"""

from __future__ import annotations

import io as _io
import math
import struct

import numpy as np

from .diagnostics import EnergyRecord
from .errors import ConfigError
from .spectral import Grid


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _float_list(text: str) -> tuple:
    return tuple(float(v) for v in text.split(",") if v.strip())


def _choice(*options):
    def conv(text: str) -> str:
        v = text.strip()
        if v not in options:
            raise ValueError(f"expected one of {options}, got {v!r}")
        return v

    return conv


# key: (converter, default, description)
DEFAULTS = {
    "mu": (float, 1.0, "shear viscosity, > 0"),
    "lam": (float, 1.0, "bulk viscosity, 3 lam + 2 mu > 0"),
    "kappa": (float, 100.0, "elasticity coefficient, > 0"),
    "pressure_amp": (float, 1.0, "A in P(rho) = A rho^g"),
    "pressure_exp": (float, 1.4, "g in P(rho) = A rho^g"),
    "n": (int, 16, "grid points per axis, even, >= 8"),
    "box_len": (float, 2 * math.pi, "period of the box"),
    "init": (_choice("random_band", "gaussian_bump"), "random_band", "initial-data generator"),
    "init_amplitude": (float, 1e-3, "sup norm of eta0"),
    "init_velocity_amplitude": (float, 1e-3, "sup norm of u0"),
    "init_band": (int, 2, "random_band: highest mode number per axis"),
    "init_width": (float, 0.5, "gaussian_bump: width"),
    "seed": (int, 0, "random seed for random_band"),
    "dt": (float, 0.0, "time step; 0 selects min(0.1, 0.5 dx / max|u0|)"),
    "scheme": (_choice("etd1", "etd2rk"), "etd2rk", "exponential integrator"),
    "dealias": (_bool, True, "two-thirds rule on the forcing"),
    "admissibility_check_every": (int, 1, "min J check cadence in steps; 0 disables"),
    "t_end": (float, 1.0, "final time of simulate and linear"),
    "record_every": (int, 10, "steps between recorded samples"),
    "linear_samples": (int, 11, "number of equispaced output times for linear"),
    "decay_kappa": (float, 1.0, "kappa used by decay-study"),
    "decay_profile": (
        _choice("displacement", "velocity", "both"),
        "displacement",
        "Gaussian data placed in eta0, u0 or both",
    ),
    "decay_t_min": (float, 100.0, "decay-study fit window start"),
    "decay_t_max": (float, 10000.0, "decay-study fit window end"),
    "decay_samples": (int, 16, "log-spaced sample times in the window"),
    "kappa_list": (_float_list, (100.0, 1000.0, 10000.0), "comma-separated kappa values"),
    "kappa_t_end": (float, 3.0, "final time of each kappa-study run"),
    "kappa_wave_cfl": (float, 0.3, "dt * fastest retained wave frequency in kappa-study"),
}


def default_config() -> dict:
    return {k: v[1] for k, v in DEFAULTS.items()}


def parse_config(text: str) -> dict:
    cfg = default_config()
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected key = value, got {raw.strip()!r}", line=lineno)
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in DEFAULTS:
            raise ConfigError(f"unknown key {key!r}", line=lineno)
        if key in seen:
            raise ConfigError(f"duplicate key {key!r}", line=lineno)
        seen.add(key)
        try:
            cfg[key] = DEFAULTS[key][0](value)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {exc}", line=lineno) from None
    return cfg


def load_config(path) -> dict:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read())


def describe_config() -> str:
    """The documented default table, in config-file syntax."""
    lines = []
    for key, (_, default, doc) in DEFAULTS.items():
        if isinstance(default, tuple):
            default = ",".join(repr(v) for v in default)
        elif isinstance(default, bool):
            default = str(default).lower()
        lines.append(f"# {doc}\n{key} = {default}")
    return "\n".join(lines) + "\n"


# --- CSV ----------------------------------------------------------------------


def format_float(x: float) -> str:
    return "%.17g" % x


def write_csv(dest, header, rows) -> None:
    """``dest`` is a path or a text stream."""
    buf = _io.StringIO()
    buf.write(",".join(header) + "\n")
    for row in rows:
        if len(row) != len(header):
            raise ValueError("row length does not match header")
        buf.write(",".join(v if isinstance(v, str) else format_float(v) for v in row) + "\n")
    if hasattr(dest, "write"):
        dest.write(buf.getvalue())
    else:
        with open(dest, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(buf.getvalue())


def _cell(text: str):
    try:
        return float(text)
    except ValueError:
        return text


def read_csv(src):
    """(header, rows); numeric cells become floats, anything else stays text."""
    if hasattr(src, "read"):
        text = src.read()
    else:
        with open(src, encoding="utf-8") as fh:
            text = fh.read()
    lines = [ln for ln in text.split("\n") if ln]
    header = lines[0].split(",")
    rows = [[_cell(v) for v in ln.split(",")] for ln in lines[1:]]
    return header, rows


RECORD_HEADER = (
    ["t", "kappa"]
    + [f"eta_norm_{k}" for k in range(5)]
    + [f"u_norm_{k}" for k in range(5)]
    + ["energy", "dissipation", "min_j", "smallness_ratio"]
)


def record_row(r: EnergyRecord) -> list:
    return (
        [r.t, r.kappa]
        + [float(v) for v in r.eta_norms]
        + [float(v) for v in r.u_norms]
        + [r.energy, r.dissipation, r.min_j, r.smallness_ratio]
    )


def row_record(row) -> EnergyRecord:
    return EnergyRecord(
        t=row[0],
        kappa=row[1],
        eta_norms=np.array(row[2:7]),
        u_norms=np.array(row[7:12]),
        energy=row[12],
        dissipation=row[13],
        min_j=row[14],
        smallness_ratio=row[15],
    )


def emit_records(dest, records) -> None:
    write_csv(dest, RECORD_HEADER, [record_row(r) for r in records])


def parse_records(src) -> list:
    header, rows = read_csv(src)
    if header != RECORD_HEADER:
        raise ValueError(f"unexpected record header {header}")
    return [row_record(r) for r in rows]


# --- snapshots ----------------------------------------------------------------

MAGIC = b"CVEF"
SNAPSHOT_VERSION = 1


def write_snapshot(path, grid: Grid, fields: dict) -> None:
    """``fields`` maps names to real (n, n, n) arrays; vector fields should be
    split into components by the caller (see :func:`vector_fields`)."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<IIdI", SNAPSHOT_VERSION, grid.n, grid.box_len, len(fields)))
        for name in fields:
            raw = name.encode("utf-8")
            fh.write(struct.pack("<I", len(raw)))
            fh.write(raw)
        for name, arr in fields.items():
            arr = np.asarray(arr)
            if arr.shape != grid.shape:
                raise ValueError(f"field {name!r} has shape {arr.shape}, expected {grid.shape}")
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def read_snapshot(path) -> tuple:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != MAGIC:
        raise ValueError("not a snapshot file (bad magic)")
    version, n, box_len, count = struct.unpack_from("<IIdI", data, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    pos = 4 + struct.calcsize("<IIdI")
    names = []
    for _ in range(count):
        (length,) = struct.unpack_from("<I", data, pos)
        pos += 4
        names.append(data[pos : pos + length].decode("utf-8"))
        pos += length
    grid = Grid(n, box_len)
    size = n**3 * 8
    if len(data) != pos + count * size:
        raise ValueError("snapshot is truncated or has trailing bytes")
    fields = {}
    for name in names:
        fields[name] = np.frombuffer(data, dtype="<f8", count=n**3, offset=pos).reshape(grid.shape).copy()
        pos += size
    return grid, fields


def vector_fields(**vectors) -> dict:
    """{"eta": (3, n, n, n)} -> {"eta_1": ..., "eta_2": ..., "eta_3": ...}."""
    out = {}
    for name, v in vectors.items():
        for i in range(3):
            out[f"{name}_{i + 1}"] = v[i]
    return out
