import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from sphereflow.compatibility import check_cc0, check_cc_tilde
from sphereflow.geometry import SphereField, normalize
from sphereflow.grid import BoxGrid
from sphereflow.integrators import FlowState, advance, FlowParams
from sphereflow.invariants import InvariantMonitor, InvariantRecord
from sphereflow.io import (CSV_COLUMNS, ConfigError, RunConfig, SnapshotError, format_config, parse_config,
                           read_manifest_checksums, read_snapshot, read_timeseries, report_to_dict, sha256,
                           write_manifest, write_reports, write_snapshot, write_timeseries)

from conftest import constant, geodesic, theta_field

HEADER = "t,sphere_violation,dirichlet_energy,q_value,h2_identity_residual,h1,h2,h3,boundary_flux_max,eps_dissipation_rate"


def test_minimal_config_fills_defaults():
    cfg = parse_config("[domain]\nn = 64\n")
    assert cfg.n == 64 and cfg.dims == 1
    assert cfg.flow == FlowParams()
    assert parse_config("") == RunConfig()


def test_config_roundtrip():
    text = """
[domain]
dims = 2
n = 33
[initial_data]
family = constant_near_boundary
amplitudes = 0.3, -0.1
twist = 0.5
[flow]
eps = 0.05
scheme = rk4_projected
dt = 1e-5
renormalize_each_step = true
[run]
experiment = sweep-eps
eps_list = 0.2 0.1 0
n_list = 17, 33
"""
    cfg = parse_config(text)
    assert cfg.initial.amplitudes == (0.3, -0.1)
    assert cfg.flow.scheme == "rk4_projected" and cfg.flow.renormalize_each_step is True
    assert cfg.eps_list == (0.2, 0.1, 0.0) and cfg.n_list == (17, 33)
    assert parse_config(format_config(cfg)) == cfg
    assert format_config(parse_config(format_config(cfg))) == format_config(cfg)


def test_config_rejects_bad_eps():
    with pytest.raises(ConfigError) as exc:
        parse_config("[flow]\neps = 1.5\n")
    assert exc.value.errors == ["line 2: eps must lie in [0,1]"]


def test_config_rejects_cfl_violation_without_override():
    text = "[domain]\nn = 257\n[flow]\nscheme = rk4_projected\ndt = 1e-4\n"
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert "line 5" in str(exc.value) and "dt <= cfl_constant * h^2 violated" in str(exc.value)
    assert parse_config(text + "override_cfl = true\n").flow.override_cfl


@pytest.mark.parametrize("text, fragment", [
    ("[domain]\nsize = 3\n", "line 2: unknown key 'size'"),
    ("[mesh]\nn = 3\n", "line 1: unknown section [mesh]"),
    ("[domain]\n\nn = many\n", "line 3: domain.n: type mismatch"),
    ("[flow]\noverride_cfl = maybe\n", "type mismatch"),
    ("[initial_data]\nfamily = helix\n", "type mismatch"),
    ("[run]\neps_list = 0 0.1\n", "eps_list must be sorted descending and contain 0"),
    ("[domain]\nn = 2\n", "n must be >= 3"),
    ("n = 3\n", "line"),
])
def test_config_errors_name_the_line(text, fragment):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert fragment in str(exc.value)


def test_config_collects_several_errors():
    with pytest.raises(ConfigError) as exc:
        parse_config("[domain]\nfoo = 1\nbar = 2\n")
    assert len(exc.value.errors) == 2


def test_timeseries_header_only(tmp_path):
    path = write_timeseries([], tmp_path / "ts.csv")
    assert path.read_bytes() == (HEADER + "\n").encode()
    assert ",".join(CSV_COLUMNS) == HEADER


def test_timeseries_constant_record(tmp_path):
    g = BoxGrid((9,))
    rec = InvariantMonitor(sobolev_orders=(1,))(FlowState(0.0, constant(g)))
    text = write_timeseries([rec], tmp_path / "ts.csv").read_text()
    assert text.splitlines()[1] == "0,0,0,0,0,0,,,0,"
    assert "\r" not in text


def test_timeseries_roundtrip_is_byte_identical(tmp_path):
    traj = advance(FlowState(0.0, theta_field(33)), FlowParams(dt=1e-3), 0.01, monitor_stride=3)
    records = list(reversed(traj.records))
    a = write_timeseries(records, tmp_path / "a.csv")
    back = read_timeseries(a)
    assert [r.t for r in back] == sorted(r.t for r in records)
    assert back[-1].q_value == traj.records[-1].q_value
    b = write_timeseries(back, tmp_path / "b.csv")
    assert a.read_bytes() == b.read_bytes()


def test_timeseries_bad_header(tmp_path):
    p = tmp_path / "x.csv"
    p.write_text("a,b\n")
    with pytest.raises(ValueError, match="header"):
        read_timeseries(p)


def test_timeseries_io_error_names_path(tmp_path):
    with pytest.raises(OSError, match="missing"):
        write_timeseries([], tmp_path / "missing" / "ts.csv")


@settings(max_examples=25, deadline=None)
@given(st.sampled_from([(3,), (4, 5), (3, 3, 4)]), st.data())
def test_snapshot_roundtrip_bit_exact(tmp_path_factory, shape, data):
    vals = data.draw(arrays(np.float64, shape + (3,), elements=st.floats(-1e3, 1e3)).filter(
        lambda a: np.all(np.linalg.norm(a, axis=-1) > 1e-3)))
    u = SphereField(BoxGrid(shape), normalize(vals))
    path = write_snapshot(u, tmp_path_factory.mktemp("s") / "u.spf")
    back = read_snapshot(path)
    assert back.grid == u.grid
    assert back.values.tobytes() == u.values.tobytes()


def test_snapshot_layout(tmp_path):
    u = constant(BoxGrid((3, 4)))
    raw = write_snapshot(u, tmp_path / "u.spf").read_bytes()
    assert raw[:4] == b"SPF1"
    assert struct.unpack("<3I", raw[4:16]) == (2, 3, 4)
    assert len(raw) == 16 + 12 * 3 * 8
    assert np.frombuffer(raw[16:], "<f8")[2] == 1.0


def test_snapshot_corruption(tmp_path):
    path = write_snapshot(theta_field(9), tmp_path / "u.spf")
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(SnapshotError, match="payload"):
        read_snapshot(path)
    path.write_bytes(b"XXXX" + raw[4:])
    with pytest.raises(SnapshotError, match="magic"):
        read_snapshot(path)
    path.write_bytes(raw[:6])
    with pytest.raises(SnapshotError):
        read_snapshot(path)
    path.write_bytes(raw[:4] + struct.pack("<I", 7) + raw[8:])
    with pytest.raises(SnapshotError, match="dims"):
        read_snapshot(path)


def test_snapshot_sphere_violation_warns(tmp_path):
    g = BoxGrid((5,))
    path = write_snapshot(SphereField(g, 2 * constant(g).values), tmp_path / "u.spf")
    with pytest.warns(RuntimeWarning, match="sphere violation"):
        kept = read_snapshot(path)
    assert kept.sphere_violation() == pytest.approx(1.0)
    with pytest.warns(RuntimeWarning):
        fixed = read_snapshot(path, renormalize=True)
    assert fixed.sphere_violation() == 0.0


def test_reports_json(tmp_path):
    import json
    reports = [check_cc0(geodesic(65)), check_cc_tilde(theta_field(65), 1)]
    d = report_to_dict(reports[0])
    assert d["passed"] is False and d["first_failure"] == 0 and d["levels"][0]["level"] == 0
    loaded = json.loads(write_reports(reports, tmp_path / "r.json").read_text())
    assert [r["condition"] for r in loaded] == ["CC0", "CC_tilde(1)"]
    assert loaded[1]["passed"] is True and len(loaded[1]["levels"]) == 2


def test_manifest(tmp_path):
    a = tmp_path / "a.txt"
    a.write_text("hello")
    cfg = RunConfig(n=17)
    path = write_manifest(tmp_path / "manifest.txt", cfg, [a], 1.25)
    text = path.read_text()
    assert "wall_clock_seconds = 1.250" in text and "artifact_version" in text
    assert read_manifest_checksums(path) == {"a.txt": sha256(a)}
    config_echo = text.split("[config]\n", 1)[1]
    assert parse_config(config_echo) == cfg
