import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from ipmlab.experiments import Constants, ExperimentReport, Prop3Record
from ipmlab.io import (
    ConfigError,
    PROP3_COLUMNS,
    SnapshotError,
    emit_report,
    manifest,
    parse_config,
    read_snapshot,
    write_snapshot,
)
from ipmlab.spectral import Grid, RealField
from ipmlab.transport import Diagnostics


def test_empty_document_gives_defaults():
    cfg = parse_config("")
    assert (cfg.grid.n1, cfg.grid.box_length, cfg.grid.s) == (256, 32.0, 2.5)
    assert (cfg.solver.dt, cfg.solver.T) == (5e-3, 1.0)
    assert cfg.prop3.N == 8 and cfg.prop3.R == 0.1


def test_top_level_keys_belong_to_run():
    cfg = parse_config("seed = 7\n[grid]\nn = 64\n")
    assert cfg["run"]["seed"] == 7
    assert cfg.grid.n1 == 64


@pytest.mark.parametrize(
    "text, key",
    [
        ("[solver]\ndt = -1\n", "solver.dt"),
        ("[solver]\ndt = fast\n", "solver.dt"),
        ("[grid]\nn = 33\n", "grid.n"),
        ("[grid]\nwidth = 3\n", "grid.width"),
        ("[mesh]\nn = 3\n", "mesh"),
        ("[solver]\ndealias = maybe\n", "solver.dealias"),
        ("[solver]\nT = 0.1\ndt = 0.5\n", "solver.dt"),
        ("[prop3]\nN = 2\n", "prop3.N"),
        ("[prop3]\nx_star = 21, 16\n", "prop3"),
        ("[data]\ncenter = 1 2 3\n", "data.center"),
    ],
)
def test_invalid_values_name_the_key(text, key):
    with pytest.raises(ConfigError) as info:
        parse_config(text)
    assert info.value.key == key
    assert key in str(info.value)


def test_prop3_section_round_trips_through_echo():
    text = "[prop3]\nR = 0.2\nN = 5\nx_star = 22.5, 16\nrho_bar_norm = 0.05\npatch_n = 256\n"
    cfg = parse_config(text)
    again = parse_config(cfg.echo())
    assert again == cfg
    assert again.prop3 == cfg.prop3
    assert again.prop3.N == 5


@given(
    st.sampled_from([16, 32, 64, 128]),
    st.floats(1.0, 100.0),
    st.floats(1e-4, 0.1),
    st.booleans(),
    st.integers(0, 10**6),
)
def test_echo_round_trip(n, box, dt, dealias, seed):
    text = f"seed = {seed}\n[grid]\nn = {n}\nbox_length = {box!r}\n[solver]\ndt = {dt!r}\ndealias = {dealias}\n"
    cfg = parse_config(text)
    assert parse_config(cfg.echo()) == cfg


@given(arrays(np.float64, (8, 16), elements=st.floats(allow_nan=False, allow_infinity=False)), st.floats(0, 10))
def test_snapshot_round_trip_is_bit_exact(tmp_path_factory, a, t):
    grid = Grid(8, 16, 5.0, 3.0)
    path = tmp_path_factory.mktemp("snap") / "f.ipm"
    write_snapshot(RealField(grid, a), t, path)
    snap = read_snapshot(path, grid)
    assert snap.field.samples.tobytes() == np.ascontiguousarray(a).tobytes()
    assert snap.t == t
    assert read_snapshot(path).field.grid == grid


def test_snapshot_header_layout(tmp_path, grid32):
    path = tmp_path / "f.ipm"
    write_snapshot(RealField.zeros(grid32), 0.25, path)
    raw = path.read_bytes()
    assert raw[:4] == b"IPM1"
    assert struct.unpack_from("<II3d", raw, 4) == (32, 32, 32.0, 2.5, 0.25)
    assert len(raw) == 4 + 8 + 24 + 8 * 32 * 32


def test_snapshot_refuses_overwrite(tmp_path, grid32):
    path = tmp_path / "f.ipm"
    f = RealField.zeros(grid32)
    write_snapshot(f, 0.0, path)
    with pytest.raises(FileExistsError):
        write_snapshot(f, 1.0, path)
    write_snapshot(f, 1.0, path, force=True)
    assert read_snapshot(path).t == 1.0


def test_truncated_snapshot_reports_offset(tmp_path, grid32):
    path = tmp_path / "f.ipm"
    write_snapshot(RealField.zeros(grid32), 0.0, path)
    raw = path.read_bytes()
    path.write_bytes(raw[:-8])
    with pytest.raises(SnapshotError) as info:
        read_snapshot(path)
    assert info.value.offset == len(raw) - 8
    path.write_bytes(raw[:20])
    with pytest.raises(SnapshotError, match="header"):
        read_snapshot(path)


def test_bad_magic_reports_offset_zero(tmp_path):
    path = tmp_path / "f.ipm"
    path.write_bytes(b"NOPE" + bytes(64))
    with pytest.raises(SnapshotError) as info:
        read_snapshot(path)
    assert info.value.offset == 0


def test_box_length_mismatch_names_both_values(tmp_path, grid32):
    path = tmp_path / "f.ipm"
    write_snapshot(RealField.zeros(grid32), 0.0, path)
    with pytest.raises(SnapshotError) as info:
        read_snapshot(path, Grid(32, 32, 16.0))
    assert "32.0" in str(info.value) and "16.0" in str(info.value)


def fake_report(n_records: int) -> ExperimentReport:
    recs = tuple(
        Prop3Record(n, 0.01 / n, 0.04 / n, 0.07, 0.001 / n, 0.0005 / n, True, "pass")
        for n in range(1, n_records + 1)
    )
    diag = Diagnostics(*(np.array([0.0, 1.0]) for _ in range(6)))
    return ExperimentReport(Constants(1e-3, 1.2, 1.6, 0.3, 1e-3), recs, 0.04, -1.0, True, {"rho_star": diag})


def test_empty_report_writes_headers_only(tmp_path):
    emit_report(None, tmp_path)
    lines = (tmp_path / "prop3.csv").read_text().splitlines()
    assert lines == [",".join(PROP3_COLUMNS)]
    assert (tmp_path / "constants.csv").read_text() == "m,L,d,C_tilde\n"


def test_report_rows_and_determinism(tmp_path):
    rep = fake_report(8)
    emit_report(rep, tmp_path / "a")
    emit_report(rep, tmp_path / "b")
    for name in ("constants.csv", "prop3.csv", "prop3_detail.csv", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    rows = (tmp_path / "a" / "prop3.csv").read_text().splitlines()
    assert len(rows) == 9
    assert rows[1].split(",")[6] == "true"
    with pytest.raises(FileExistsError):
        emit_report(rep, tmp_path / "a")


def test_manifest_is_deterministic():
    cfg = parse_config("[grid]\nn = 32\n")
    a = manifest(cfg, "solve", ["b.csv", "a.csv"])
    assert a == manifest(cfg, "solve", ["a.csv", "b.csv"])
    assert '"version"' in a and "n = 32" in a
