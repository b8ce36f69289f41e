import json

import numpy as np
import pytest
import yaml
from hypothesis import given, strategies as st

from mixedgms import io
from mixedgms.cli import EXIT_CONFIG, EXIT_IO, EXIT_OK, main
from mixedgms.config import ConfigError, RunConfig, dump_config, load_config


def _write_config(path, data):
    path.write_text(yaml.safe_dump(data))
    return path


SMALL = {"grid": {"n": 12, "N": 3}, "spectral": {"dofs": [1, 2]}, "oversample": {"dofs": [1]}, "transport": {"dofs": [1], "output_times": [500.0]}}


def test_fmt():
    assert io.fmt(0.0123456789) == "0.0123457"
    assert io.fmt(3.92e-13) == "3.92000e-13"
    assert io.fmt(-5e-4) == "-5.00000e-04"
    assert io.fmt(12) == "12"
    assert io.fmt(float("inf")) == "inf"
    assert io.fmt(0.0) == "0"


@given(st.floats(allow_nan=False, allow_infinity=False, min_value=-1e6, max_value=1e6))
def test_fmt_roundtrip_six_digits(x):
    y = float(io.fmt(x))
    assert y == pytest.approx(x, rel=5e-6, abs=1e-300)


def test_defaults_valid():
    assert RunConfig.from_dict({}) == RunConfig()


def test_every_invalid_field_reported():
    with pytest.raises(ConfigError) as exc:
        RunConfig.from_dict({"grid": {"n": 21, "N": 4}, "perm": {"kind": "x"}, "transport": {"cfl": 2.0}, "bogus": 1})
    text = str(exc.value)
    for needle in ("21", "perm.kind", "transport.cfl", "bogus"):
        assert needle in text
    assert len(exc.value.problems) == 4


def test_type_errors_reported():
    with pytest.raises(ConfigError, match="grid.n"):
        RunConfig.from_dict({"grid": {"n": "forty"}})


def test_yaml_scientific_string_accepted(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("perm:\n  contrast: 1e4\n")
    assert load_config(p).perm.contrast == 1e4


def test_dump_load_roundtrip(tmp_path):
    cfg = RunConfig.from_dict(SMALL)
    p = tmp_path / "c.yaml"
    p.write_text(dump_config(cfg))
    assert load_config(p) == cfg


@pytest.mark.parametrize("sub", ["fine", "table", "eigens", "oversample", "transport"])
def test_subcommands_deterministic(tmp_path, sub):
    cfg = _write_config(tmp_path / "c.yaml", SMALL)
    outs = []
    for k in range(2):
        out = tmp_path / f"o{k}"
        assert main([sub, "--config", str(cfg), "--out", str(out), "--threads", "1"]) == EXIT_OK
        outs.append(out)
    m0 = json.loads((outs[0] / "manifest.json").read_text())
    m1 = json.loads((outs[1] / "manifest.json").read_text())
    assert m0["files"] == m1["files"] and m0["files"]
    for name, digest in m0["files"].items():
        assert io.sha256(outs[0] / name) == digest
    # the manifest's config reproduces the run configuration
    assert RunConfig.from_dict(m0["config"]).grid.n == 12
    assert m0["config_hash"] == io.config_hash(m0["config"])


def test_table_rows(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", SMALL | {"spectral": {"dofs": [1, 2, 4], "full": False, "postprocess": True}})
    assert main(["table", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    header, rows = io.read_csv(tmp_path / "o" / "table.csv")
    assert header == ["dof_per_E", "E_of_v", "E_of_p", "E_os_v", "E_os_p", "E_pf_v"]
    assert [r[0] for r in rows] == ["1", "2", "4"]
    assert float(rows[-1][3]) < 1e-10  # 4 = ratio keeps every snapshot


def test_eigen_and_case_headers(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", SMALL)
    assert main(["eigens", "--config", str(cfg), "--out", str(tmp_path / "e")]) == EXIT_OK
    assert io.read_csv(tmp_path / "e" / "eigenvalues.csv")[0] == ["edge_id", "k", "lambda", "inv_lambda"]
    assert main(["oversample", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    assert io.read_csv(tmp_path / "o" / "cases.csv")[0] == ["dof_per_E", "case1", "case2", "case3", "case4"]


def test_twophase_outputs(tmp_path):
    cfg = _write_config(tmp_path / "c.yaml", {"grid": {"n": 8, "N": 2}, "transport": {"dofs": [1], "output_times": [300.0, 600.0]}})
    assert main(["twophase", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK
    names = sorted(p.name for p in (tmp_path / "o").iterdir())
    assert "saturation_fine_t1.csv" in names and "saturation_dof1_t0.csv" in names
    S = np.loadtxt(tmp_path / "o" / "saturation_dof1_t1.csv", delimiter=",")
    assert S.shape == (8, 8)


def test_spe10_mode(tmp_path):
    data = tmp_path / "spe.dat"
    rng = np.random.default_rng(0)
    np.savetxt(data, np.exp(rng.standard_normal(220 * 60)).reshape(-1, 6))
    cfg = _write_config(tmp_path / "c.yaml", {"grid": {"n": 12, "N": 3}, "perm": {"kind": "spe10", "path": str(data)}, "transport": {"dofs": [1], "output_times": [200.0]}})
    assert main(["twophase", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_OK


def test_exit_codes(tmp_path):
    bad = _write_config(tmp_path / "bad.yaml", {"grid": {"n": 10, "N": 3}})
    assert main(["fine", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_CONFIG
    assert main(["fine", "--config", str(tmp_path / "none.yaml")]) == EXIT_IO
    missing = _write_config(tmp_path / "m.yaml", {"perm": {"kind": "spe10", "path": str(tmp_path / "nope.dat")}})
    assert main(["fine", "--config", str(missing), "--out", str(tmp_path / "o")]) == EXIT_IO
    assert main(["fine", "--seed", "-1", "--out", str(tmp_path / "o")]) == EXIT_CONFIG


def test_seed_override_changes_field(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    base = _write_config(tmp_path / "c.yaml", {"grid": {"n": 12, "N": 3}})
    assert main(["fine", "--config", str(base), "--out", str(a), "--seed", "1"]) == EXIT_OK
    assert main(["fine", "--config", str(base), "--out", str(b), "--seed", "2"]) == EXIT_OK
    assert (a / "permeability.csv").read_bytes() != (b / "permeability.csv").read_bytes()
