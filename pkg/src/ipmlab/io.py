"""Run configuration, binary field snapshots and CSV reports."""

from __future__ import annotations

import configparser
import csv
import io
import json
import os
import platform
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Callable

import numpy as np

from . import __version__
from .experiments import BumpSpec, ExperimentReport, Prop3Config
from .spectral import Grid, RealField
from .transport import Diagnostics, SolverConfig

# ---------------------------------------------------------------------------
# configuration


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


def _point(text: str) -> tuple[float, float]:
    parts = [p for p in text.replace(",", " ").split()]
    if len(parts) != 2:
        raise ValueError(f"expected two numbers, got {text!r}")
    return (float(parts[0]), float(parts[1]))


def _points(text: str) -> tuple[tuple[float, float], ...]:
    text = text.strip()
    if not text:
        return ()
    return tuple(_point(p) for p in text.split(";") if p.strip())


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _fmt(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, tuple) and value and isinstance(value[0], tuple):
        return "; ".join(_fmt(p) for p in value)
    if isinstance(value, tuple):
        return ", ".join(repr(float(v)) for v in value)
    return str(value)


def _positive(v) -> str | None:
    return None if v > 0 else "must be positive"


def _nonneg(v) -> str | None:
    return None if v >= 0 else "must be nonnegative"


def _even_grid(v) -> str | None:
    return None if v >= 8 and v % 2 == 0 else "must be an even integer >= 8"


def _choice(*options: str) -> Callable[[str], str | None]:
    return lambda v: None if v in options else f"must be one of {', '.join(options)}"


@dataclass(frozen=True)
class _Key:
    parse: Callable[[str], Any]
    default: Any
    check: Callable[[Any], str | None] | None = None


_SCHEMA: dict[str, dict[str, _Key]] = {
    "run": {
        "command": _Key(str, "", _choice("", "darcy", "solve", "flow", "trajectory", "scaling-check", "prop3", "analyticity", "selftest")),
        "seed": _Key(int, 0, _nonneg),
        "threads": _Key(int, 1, _positive),
        "out": _Key(str, ""),
    },
    "grid": {
        "n": _Key(int, 256, _even_grid),
        "box_length": _Key(float, 32.0, _positive),
        "s": _Key(float, 2.5, lambda v: None if v > 2 else "must exceed 2"),
    },
    "solver": {
        "dt": _Key(float, 5e-3, _positive),
        "T": _Key(float, 1.0, _nonneg),
        "dealias": _Key(_bool, True),
        "cfl_guard": _Key(float, 0.5, _positive),
        "blowup_factor": _Key(float, 1e3, lambda v: None if v > 1 else "must exceed 1"),
    },
    "data": {
        "kind": _Key(str, "gaussian", _choice("gaussian", "bump", "stratified", "snapshot")),
        "center": _Key(_point, (14.0, 16.0)),
        "sigma": _Key(float, 1.5, _positive),
        "amplitude": _Key(float, 1.0),
        "radius": _Key(float, 6.0, _positive),
        "target_norm": _Key(float, 0.0, _nonneg),
        "path": _Key(str, ""),
    },
    "trajectory": {
        "count": _Key(int, 10, _positive),
        "spread": _Key(float, 3.0, _positive),
        "points": _Key(_points, ()),
        "sample_stride": _Key(int, 1, _positive),
        "method": _Key(str, "spectral", _choice("spectral", "spline")),
    },
    "scaling": {
        "lam": _Key(float, 2.0, _positive),
        "T": _Key(float, 0.5, _positive),
        "mode": _Key(str, "matched", _choice("matched", "fixed_dt")),
    },
    "prop3": {
        "R": _Key(float, 0.1, _positive),
        "N": _Key(int, 8, lambda v: None if v >= 4 else "must be at least 4"),
        "rho_star_center": _Key(_point, (14.0, 16.0)),
        "rho_star_radius": _Key(float, 6.0, _positive),
        "rho_star_norm": _Key(float, 5.0, _positive),
        "x_star": _Key(_point, (22.5, 16.0)),
        "rho_bar_center": _Key(_point, (24.5, 18.0)),
        "rho_bar_sigma": _Key(float, 1.5, _positive),
        "rho_bar_norm": _Key(float, 0.04, _positive),
        "patch_n": _Key(int, 1024, lambda v: None if v >= 64 and v % 2 == 0 else "must be an even integer >= 64"),
        "tol": _Key(float, 0.5, lambda v: None if 0 < v < 1 else "must lie in (0, 1)"),
    },
}


@dataclass(frozen=True)
class RunConfig:
    values: dict[str, dict[str, Any]]

    def __getitem__(self, section: str) -> dict[str, Any]:
        return self.values[section]

    @property
    def command(self) -> str:
        return self.values["run"]["command"]

    @property
    def grid(self) -> Grid:
        g = self.values["grid"]
        return Grid(g["n"], g["n"], g["box_length"], g["s"])

    @property
    def solver(self) -> SolverConfig:
        s = self.values["solver"]
        return SolverConfig(dt=s["dt"], T=s["T"], dealias=s["dealias"], cfl_guard=s["cfl_guard"], blowup_factor=s["blowup_factor"])

    @property
    def prop3(self) -> Prop3Config:
        p = self.values["prop3"]
        return Prop3Config(
            R=p["R"],
            N=p["N"],
            grid=self.grid,
            solver=self.solver,
            rho_star=BumpSpec(p["rho_star_center"], p["rho_star_radius"], p["rho_star_norm"]),
            x_star=p["x_star"],
            rho_bar_center=p["rho_bar_center"],
            rho_bar_sigma=p["rho_bar_sigma"],
            rho_bar_norm=p["rho_bar_norm"],
            patch_n=p["patch_n"],
            tol=p["tol"],
        )

    def with_values(self, section: str, **kw) -> "RunConfig":
        vals = {k: dict(v) for k, v in self.values.items()}
        vals[section].update(kw)
        return _validated(vals)

    def echo(self) -> str:
        """Canonical key-value text with every default filled in."""
        out = []
        for section, keys in _SCHEMA.items():
            out.append(f"[{section}]")
            for key in keys:
                out.append(f"{key} = {_fmt(self.values[section][key])}")
            out.append("")
        return "\n".join(out)


def _validated(vals: dict[str, dict[str, Any]], check_prop3: bool = False) -> RunConfig:
    cfg = RunConfig(vals)
    # cross-field invariants, reported against the most specific key
    checks = [
        ("solver.dt", lambda: cfg.solver),
        ("grid.n", lambda: cfg.grid),
    ]
    for key, build in checks:
        try:
            build()
        except ValueError as exc:
            raise ConfigError(key, str(exc)) from None
    if check_prop3 or cfg.command == "prop3":
        try:
            cfg.prop3
        except ValueError as exc:
            raise ConfigError("prop3", str(exc)) from None
    return cfg


def _starts_with_section(text: str) -> bool:
    for line in text.splitlines():
        line = line.strip()
        if line and not line.startswith(("#", ";")):
            return line.startswith("[")
    return False


def parse_config(text: str) -> RunConfig:
    """Parse a key-value document with one level of ``[section]`` headers.

    Keys before the first header belong to ``[run]``. Unknown sections or
    keys, unparsable values and invariant violations raise ConfigError
    naming the key.
    """
    parser = configparser.ConfigParser(interpolation=None, delimiters=("=", ":"), comment_prefixes=("#", ";"), inline_comment_prefixes=("#",))
    parser.optionxform = str  # keep key case (T, R, N)
    try:
        parser.read_string(text if _starts_with_section(text) else "[run]\n" + text)
    except configparser.DuplicateSectionError as exc:
        raise ConfigError(exc.section, "section given twice") from None
    except configparser.DuplicateOptionError as exc:
        raise ConfigError(f"{exc.section}.{exc.option}", "key given twice") from None
    except configparser.Error as exc:
        raise ConfigError("document", str(exc).splitlines()[0]) from None
    vals = {sec: {k: spec.default for k, spec in keys.items()} for sec, keys in _SCHEMA.items()}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(section, "unknown section")
        for key, raw in parser.items(section):
            name = f"{section}.{key}"
            spec = _SCHEMA[section].get(key)
            if spec is None:
                raise ConfigError(name, "unknown key")
            try:
                value = spec.parse(raw)
            except (TypeError, ValueError) as exc:
                raise ConfigError(name, f"cannot parse {raw!r}: {exc}") from None
            if spec.check is not None:
                problem = spec.check(value)
                if problem:
                    raise ConfigError(name, f"{problem} (got {raw})")
            vals[section][key] = value
    # a canonical echo always carries [prop3]; only overrides are checked eagerly
    defaults = {k: spec.default for k, spec in _SCHEMA["prop3"].items()}
    return _validated(vals, check_prop3=vals["prop3"] != defaults)


def default_config() -> RunConfig:
    return parse_config("")


# ---------------------------------------------------------------------------
# snapshots

MAGIC = b"IPM1"
_HEADER = struct.Struct("<4sII3d")


class SnapshotError(ValueError):
    def __init__(self, message: str, offset: int | None = None):
        where = f" at byte offset {offset}" if offset is not None else ""
        super().__init__(f"{message}{where}")
        self.offset = offset


@dataclass(frozen=True)
class FieldSnapshot:
    field: RealField
    t: float


def encode_snapshot(f: RealField, t: float) -> bytes:
    g = f.grid
    head = _HEADER.pack(MAGIC, g.n1, g.n2, g.box_length, g.s, float(t))
    return head + np.ascontiguousarray(f.samples, dtype="<f8").tobytes()


def decode_snapshot(data: bytes, expect: Grid | None = None) -> FieldSnapshot:
    if len(data) < 4:
        raise SnapshotError("file shorter than the magic", len(data))
    if data[:4] != MAGIC:
        raise SnapshotError(f"bad magic {data[:4]!r}", 0)
    if len(data) < _HEADER.size:
        raise SnapshotError("truncated header", len(data))
    _, n1, n2, box, s, t = _HEADER.unpack_from(data, 0)
    need = _HEADER.size + 8 * n1 * n2
    if len(data) != need:
        raise SnapshotError(f"payload length {len(data) - _HEADER.size} does not match {n1}x{n2} samples", min(len(data), need))
    if expect is not None:
        if box != expect.box_length:
            raise SnapshotError(f"box length mismatch: file has {box!r}, grid expects {expect.box_length!r}")
        if (n1, n2) != expect.shape:
            raise SnapshotError(f"shape mismatch: file has {n1}x{n2}, grid expects {expect.n1}x{expect.n2}")
        grid = expect
    else:
        try:
            grid = Grid(n1, n2, box, s)
        except ValueError as exc:
            raise SnapshotError(f"invalid header: {exc}", 4) from None
    a = np.frombuffer(data, dtype="<f8", count=n1 * n2, offset=_HEADER.size).reshape(n1, n2).astype(float)
    return FieldSnapshot(RealField(grid, a), t)


def write_snapshot(f: RealField, t: float, path: str | os.PathLike, force: bool = False) -> Path:
    """Write the field; refuses to replace an existing file unless ``force``."""
    path = Path(path)
    mode = "wb" if force else "xb"
    with open(path, mode) as fh:
        fh.write(encode_snapshot(f, t))
    return path


def read_snapshot(path: str | os.PathLike, expect: Grid | None = None) -> FieldSnapshot:
    with open(path, "rb") as fh:
        return decode_snapshot(fh.read(), expect)


# ---------------------------------------------------------------------------
# reports

PROP3_COLUMNS = ("n", "r_n", "input_dist", "output_dist", "flow_sep", "sep_bound", "disjoint_flag", "verdict")
DETAIL_COLUMNS = (
    "n",
    "smooth_dist",
    "w_dist",
    "w_image_norm",
    "w_image_norm_tilde",
    "cross_bound",
    "contained",
    "support_gap",
    "patch_length",
    "tracer_velocity",
    "tracer_strain",
)
CONSTANT_COLUMNS = ("m", "L", "d", "C_tilde")
DIAGNOSTIC_COLUMNS = ("solve", "t", "mean", "l2", "min", "max", "hs")


def _cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_cell(v) for v in row])
    return buf.getvalue()


def write_text(path: Path, text: str, force: bool) -> Path:
    with open(path, "w" if force else "x", encoding="utf-8", newline="") as fh:
        fh.write(text)
    return path


def diagnostics_rows(name: str, diag: Diagnostics):
    for row in diag.rows():
        yield (name,) + tuple(float(v) for v in row)


def emit_report(report: ExperimentReport | None, out_dir: str | os.PathLike, force: bool = False) -> list[Path]:
    """constants.csv, prop3.csv, prop3_detail.csv and diagnostics.csv.

    ``None`` stands for the empty report and yields header-only files.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    records = report.records if report is not None else ()
    consts = []
    if report is not None:
        c = report.constants
        consts = [(c.m, c.L, c.d, c.C_tilde)]
    rows = [(r.n, r.r_n, r.input_dist, r.output_dist, r.flow_sep, r.sep_bound, r.disjoint, r.verdict) for r in records]
    detail = [
        (
            r.n,
            r.smooth_dist,
            r.w_dist,
            r.w_image_norms[0],
            r.w_image_norms[1],
            r.cross_bound,
            r.contained,
            r.support_gap,
            r.patch_length,
            r.tracer_velocity,
            r.tracer_strain,
        )
        for r in records
    ]
    diag_rows = []
    if report is not None:
        for name in report.diagnostics:
            diag_rows.extend(diagnostics_rows(name, report.diagnostics[name]))
    written = [
        write_text(out / "constants.csv", csv_text(CONSTANT_COLUMNS, consts), force),
        write_text(out / "prop3.csv", csv_text(PROP3_COLUMNS, rows), force),
        write_text(out / "prop3_detail.csv", csv_text(DETAIL_COLUMNS, detail), force),
        write_text(out / "diagnostics.csv", csv_text(DIAGNOSTIC_COLUMNS, diag_rows), force),
    ]
    return written


def manifest(cfg: RunConfig, command: str, outputs: list[str], status: int = 0) -> str:
    """Deterministic JSON: config echo, code version, files written and exit status."""
    doc = {
        "command": command,
        "status": status,
        "version": __version__,
        "numpy": np.__version__,
        "python": platform.python_version(),
        "config": cfg.echo(),
        "outputs": sorted(outputs),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
