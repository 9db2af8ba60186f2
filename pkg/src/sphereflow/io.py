"""Run configuration, CSV time series, SPF1 snapshots, compatibility reports and manifests."""

from __future__ import annotations

import configparser
import csv
import hashlib
import io
import json
import platform
import re
import struct
import warnings
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__
from .compatibility import FAMILIES, CompatReport, InitialDataSpec
from .geometry import SphereField, normalize
from .grid import BoxGrid
from .integrators import SCHEMES, SOLVERS, CFLError, FlowParams
from .invariants import InvariantRecord

EXPERIMENTS = ("simulate", "check-compat", "sweep-eps", "converge", "longrun")
CSV_COLUMNS = ("t", "sphere_violation", "dirichlet_energy", "q_value", "h2_identity_residual",
               "h1", "h2", "h3", "boundary_flux_max", "eps_dissipation_rate")
SNAPSHOT_MAGIC = b"SPF1"
SNAPSHOT_TOL = 1e-6


class ConfigError(ValueError):
    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration:\n  " + "\n  ".join(errors))
        self.errors = errors


class SnapshotError(ValueError):
    pass


@dataclass
class RunConfig:
    dims: int = 1
    n: int = 256
    initial: InitialDataSpec = field(default_factory=InitialDataSpec)
    flow: FlowParams = field(default_factory=FlowParams)
    experiment: str = "simulate"
    t_final: float = 1.0
    monitor_stride: int = 100
    output_dir: str = "out"
    eps_list: tuple = (0.1, 0.05, 0.025, 0.0125, 0.0)
    n_list: tuple = (65, 129, 257)
    dt_ratio: float = 1.0
    t_long: float = 10.0
    compat_k: int = 2

    @property
    def grid(self) -> BoxGrid:
        return BoxGrid.uniform(self.n, self.dims)


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(",", " ").split())


def _ints(s: str) -> tuple:
    return tuple(int(x) for x in s.replace(",", " ").split())


def _bool(s: str) -> bool:
    v = s.strip().lower()
    if v in ("true", "yes", "on", "1"):
        return True
    if v in ("false", "no", "off", "0"):
        return False
    raise ValueError(f"expected a boolean, got {s!r}")


def _auto_bool(s: str) -> Optional[bool]:
    return None if s.strip().lower() == "auto" else _bool(s)


def _choice(options):
    def parse(s: str) -> str:
        s = s.strip()
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


# section -> key -> (parser, formatter)
_fmt_float = repr
_fmt_list = lambda v: ", ".join(repr(x) for x in v)  # noqa: E731
_fmt_bool = lambda v: "auto" if v is None else str(bool(v)).lower()  # noqa: E731
SCHEMA = {
    "domain": {
        "dims": (int, str),
        "n": (int, str),
    },
    "initial_data": {
        "family": (_choice(FAMILIES), str),
        "amplitudes": (_floats, _fmt_list),
        "blend_width": (float, _fmt_float),
        "twist": (float, _fmt_float),
    },
    "flow": {
        "eps": (float, _fmt_float),
        "scheme": (_choice(SCHEMES), str),
        "dt": (float, _fmt_float),
        "fp_tol": (float, _fmt_float),
        "fp_max_iters": (int, str),
        "renormalize_each_step": (_auto_bool, _fmt_bool),
        "renormalize_stages": (_bool, _fmt_bool),
        "cfl_constant": (float, _fmt_float),
        "override_cfl": (_bool, _fmt_bool),
        "solver": (_choice(SOLVERS), str),
    },
    "run": {
        "experiment": (_choice(EXPERIMENTS), str),
        "t_final": (float, _fmt_float),
        "monitor_stride": (int, str),
        "output_dir": (str, str),
        "eps_list": (_floats, _fmt_list),
        "n_list": (_ints, _fmt_list),
        "dt_ratio": (float, _fmt_float),
        "t_long": (float, _fmt_float),
        "compat_k": (int, str),
    },
}

_SECTION_RE = re.compile(r"^\s*\[([^\]]+)\]")
_KEY_RE = re.compile(r"^\s*([^=:#;\s\[][^=:]*?)\s*[=:]")


def _line_numbers(text: str) -> dict:
    where, section = {}, None
    for lineno, line in enumerate(text.splitlines(), start=1):
        m = _SECTION_RE.match(line)
        if m:
            section = m.group(1).strip()
            where.setdefault((section, None), lineno)
            continue
        m = _KEY_RE.match(line)
        if m and section is not None:
            where.setdefault((section, m.group(1).strip().lower()), lineno)
    return where


def parse_config(text: str) -> RunConfig:
    """Parse and validate an INI-style run configuration.

    Raises :class:`ConfigError` listing every problem with its line number.
    """
    where = _line_numbers(text)
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError([str(exc).replace("\n", " ")]) from None

    def at(section, key=None):
        return f"line {where.get((section, key), '?')}"

    errors, values = [], {}
    for section in cp.sections():
        if section not in SCHEMA:
            errors.append(f"{at(section)}: unknown section [{section}]")
            continue
        for key, raw in cp.items(section):
            spec = SCHEMA[section].get(key)
            if spec is None:
                errors.append(f"{at(section, key)}: unknown key '{key}' in [{section}]")
                continue
            try:
                values[(section, key)] = spec[0](raw)
            except ValueError as exc:
                errors.append(f"{at(section, key)}: {section}.{key}: type mismatch ({exc})")
    if errors:
        raise ConfigError(errors)

    def section_kwargs(section, rename=None):
        rename = rename or {}
        return {rename.get(k, k): v for (s, k), v in values.items() if s == section}

    cfg = RunConfig()
    checks = [
        ("domain", "dims", lambda v: v in (1, 2, 3), "dims must be 1, 2 or 3"),
        ("domain", "n", lambda v: v >= 3, "n must be >= 3"),
        ("flow", "eps", lambda v: 0.0 <= v <= 1.0, "eps must lie in [0,1]"),
        ("flow", "dt", lambda v: v > 0, "dt must be > 0"),
        ("flow", "fp_tol", lambda v: v > 0, "fp_tol must be > 0"),
        ("flow", "fp_max_iters", lambda v: v >= 1, "fp_max_iters must be >= 1"),
        ("run", "t_final", lambda v: v >= 0, "t_final must be >= 0"),
        ("run", "monitor_stride", lambda v: v >= 1, "monitor_stride must be >= 1"),
        ("run", "compat_k", lambda v: 0 <= v <= 2, "compat_k must lie in [0,2]"),
        ("initial_data", "blend_width", lambda v: 0 < v < 0.5, "blend_width must lie in (0, 0.5)"),
        ("run", "eps_list", lambda v: all(0 <= e <= 1 for e in v), "eps must lie in [0,1]"),
        ("run", "eps_list", lambda v: list(v) == sorted(v, reverse=True) and 0.0 in v,
         "eps_list must be sorted descending and contain 0"),
    ]
    for section, key, ok, msg in checks:
        if (section, key) in values and not ok(values[(section, key)]):
            errors.append(f"{at(section, key)}: {msg}")
    if errors:
        raise ConfigError(errors)

    try:
        cfg = replace(cfg, **section_kwargs("domain"), **section_kwargs("run"),
                      initial=replace(cfg.initial, **section_kwargs("initial_data")),
                      flow=replace(cfg.flow, **section_kwargs("flow")))
        cfg.flow.check_cfl(cfg.grid)
    except CFLError as exc:
        errors.append(f"{at('flow', 'dt')}: {exc}")
    except ValueError as exc:
        errors.append(str(exc))
    if errors:
        raise ConfigError(errors)
    return cfg


def format_config(cfg: RunConfig) -> str:
    """Serialise a config so that ``parse_config(format_config(cfg)) == cfg``."""
    source = {
        "domain": {"dims": cfg.dims, "n": cfg.n},
        "initial_data": asdict(cfg.initial),
        "flow": asdict(cfg.flow),
        "run": {f.name: getattr(cfg, f.name) for f in fields(cfg)
                if f.name in SCHEMA["run"]},
    }
    out = []
    for section, keys in SCHEMA.items():
        out.append(f"[{section}]")
        for key, (_, fmt) in keys.items():
            out.append(f"{key} = {fmt(source[section][key])}")
        out.append("")
    return "\n".join(out)


def _fmt_num(v) -> str:
    return "" if v is None else "%.17g" % v


def _record_row(r: InvariantRecord) -> list[str]:
    return [_fmt_num(r.t), _fmt_num(r.sphere_violation), _fmt_num(r.dirichlet_energy),
            _fmt_num(r.q_value), _fmt_num(r.h2_identity_residual),
            _fmt_num(r.sobolev.get(1)), _fmt_num(r.sobolev.get(2)), _fmt_num(r.sobolev.get(3)),
            _fmt_num(r.boundary_flux_max), _fmt_num(r.eps_dissipation_rate)]


def write_timeseries(records, path) -> Path:
    """Write invariant records as CSV (17 significant digits, LF line endings, sorted by t)."""
    path = Path(path)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_COLUMNS)
    for r in sorted(records, key=lambda r: r.t):
        w.writerow(_record_row(r))
    try:
        path.write_bytes(buf.getvalue().encode("utf-8"))
    except OSError as exc:
        raise OSError(f"cannot write time series to {path}: {exc}") from exc
    return path


def read_timeseries(path) -> list[InvariantRecord]:
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_COLUMNS:
        raise ValueError(f"{path}: unexpected header")

    def num(s):
        return None if s == "" else float(s)

    out = []
    for row in rows[1:]:
        v = dict(zip(CSV_COLUMNS, row))
        sob = {k: num(v[f"h{k}"]) for k in (1, 2, 3) if v[f"h{k}"] != ""}
        out.append(InvariantRecord(
            t=num(v["t"]), sphere_violation=num(v["sphere_violation"]),
            dirichlet_energy=num(v["dirichlet_energy"]), q_value=num(v["q_value"]),
            h2_identity_residual=num(v["h2_identity_residual"]), sobolev=sob,
            boundary_flux_max=num(v["boundary_flux_max"]),
            eps_dissipation_rate=num(v["eps_dissipation_rate"])))
    return out


def write_snapshot(u: SphereField, path) -> Path:
    """``SPF1`` | uint32 dims | uint32 n per axis | row-major float64 triples, all little-endian."""
    path = Path(path)
    shape = u.grid.shape
    header = SNAPSHOT_MAGIC + struct.pack(f"<I{len(shape)}I", len(shape), *shape)
    path.write_bytes(header + np.ascontiguousarray(u.values, dtype="<f8").tobytes())
    return path


def read_snapshot(path, renormalize: bool = False, tol: float = SNAPSHOT_TOL) -> SphereField:
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise SnapshotError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise SnapshotError(f"{path}: truncated header")
    (dims,) = struct.unpack_from("<I", data, 4)
    if dims not in (1, 2, 3) or len(data) < 8 + 4 * dims:
        raise SnapshotError(f"{path}: invalid dims {dims}")
    shape = struct.unpack_from(f"<{dims}I", data, 8)
    offset = 8 + 4 * dims
    expected = int(np.prod(shape)) * 3 * 8
    if len(data) - offset != expected:
        raise SnapshotError(f"{path}: shape {shape} needs {expected} payload bytes, found {len(data) - offset}")
    values = np.frombuffer(data, dtype="<f8", offset=offset).reshape(tuple(shape) + (3,)).astype(float)
    field_ = SphereField(BoxGrid(tuple(shape)), values)
    viol = field_.sphere_violation()
    if viol > tol:
        warnings.warn(f"{path}: sphere violation {viol:.3e} exceeds {tol:.0e}", RuntimeWarning)
        if renormalize:
            field_ = SphereField(field_.grid, normalize(values))
    return field_


def report_to_dict(report: CompatReport) -> dict:
    return {
        "condition": report.condition,
        "passed": report.passed,
        "first_failure": report.first_failure,
        "note": report.note,
        "levels": [{"level": j,
                    "max_residual": report.max_residual(j),
                    "tolerance": report.tolerance_used[j],
                    "passed": report.max_residual(j) <= report.tolerance_used[j],
                    "residuals": [float(x) for x in report.residuals[j]]}
                   for j in sorted(report.residuals)],
    }


def write_reports(reports, path) -> Path:
    path = Path(path)
    text = json.dumps([report_to_dict(r) for r in reports], indent=2, sort_keys=True)
    path.write_text(text + "\n", encoding="utf-8")
    return path


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def platform_fingerprint() -> str:
    return (f"{platform.system()}-{platform.machine()} python-{platform.python_version()} "
            f"numpy-{np.__version__}")


def write_manifest(path, cfg: RunConfig, outputs, wall_clock: float) -> Path:
    """Plain-text manifest: version, platform, wall clock, output checksums, config echo."""
    path = Path(path)
    lines = [f"artifact_version = {__version__}",
             f"platform = {platform_fingerprint()}",
             f"wall_clock_seconds = {wall_clock:.3f}",
             "[checksums]"]
    for out in sorted(Path(o) for o in outputs):
        lines.append(f"{out.name} = sha256:{sha256(out)}")
    lines += ["[config]", format_config(cfg)]
    path.write_text("\n".join(lines), encoding="utf-8")
    return path


def read_manifest_checksums(path) -> dict:
    out, section = {}, None
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line.startswith("["):
            section = line.strip("[] ")
        elif section == "checksums" and "=" in line:
            name, value = (s.strip() for s in line.split("=", 1))
            out[name] = value.removeprefix("sha256:")
    return out
