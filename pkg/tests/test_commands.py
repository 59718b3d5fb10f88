"""Tests for the command handlers against small configs."""

from __future__ import annotations

import json

import pandas as pd
import pytest
import xarray as xr

from glx_lab.commands.check_admissible import handle_check_admissible
from glx_lab.commands.estimate_gn import GN_JSON, handle_estimate_gn
from glx_lab.commands.simulate import (
    FIELDS_NC,
    LEDGER_CSV,
    REPORT_JSON,
    RUN_JSON,
    TRAJECTORY_CSV,
    handle_simulate,
    prepare_run,
    run_simulation,
)
from glx_lab.commands.solve_ode import SOLVE_ODE_CSV, handle_solve_ode, parse_source
from glx_lab.commands.sweep import (
    SUMMARY_CSV,
    SweepFailedError,
    apply_axis,
    handle_sweep,
)
from glx_lab.commands.verify import handle_verify, render_verify
from glx_lab.config import ConfigError
from glx_lab.numerics.comparison_ode import ScheduledSource
from glx_lab.numerics.params import AdmissibilityError
from tests import SMALL_POINTS

STEPS = 10
SEED_OVERRIDE = 11
DT_VALUES = [0.02, 0.01]
TRAJECTORY_COLUMNS = [
    "t",
    "mass",
    "grad_norm",
    "lm1_norm",
    "lp1_norm",
    "envelope",
    "residual",
]
CUTOFF_FORCING = {
    "kind": "cutoff",
    "t0": 0.5,
    "shape": {"kind": "gaussian", "amplitude": 0.5},
}


@pytest.fixture
def run_toml(write_config, small_run_toml):
    return write_config(small_run_toml)


def test_simulate_writes_artifacts(run_toml, tmp_path):
    out = tmp_path / "out"
    summary = handle_simulate({"config": str(run_toml), "out": str(out)})
    for name in (RUN_JSON, TRAJECTORY_CSV, LEDGER_CSV, REPORT_JSON):
        assert (out / name).is_file()
    assert summary["out_dir"] == str(out)
    assert summary["steps"] == STEPS
    assert summary["t_star_bound"] > 0
    assert summary["bound_satisfied"] is None or isinstance(
        summary["bound_satisfied"], bool
    )
    run = json.loads((out / RUN_JSON).read_text(encoding="utf-8"))
    assert run["config"]["seed"] == 3  # noqa: PLR2004
    assert run["gn_estimate"]["family_size"] == 8  # noqa: PLR2004
    assert "run_id" not in run["run"]
    trajectory = pd.read_csv(out / TRAJECTORY_CSV)
    assert len(trajectory) == STEPS + 1
    assert list(trajectory.columns) == TRAJECTORY_COLUMNS
    assert trajectory["envelope"][0] == pytest.approx(trajectory["mass"][0])
    assert trajectory["residual"][0] == pytest.approx(0.0, abs=1e-12)
    assert trajectory["residual"].tolist() == pytest.approx(
        (trajectory["mass"] - trajectory["envelope"]).tolist()
    )
    assert not (out / FIELDS_NC).exists()
    report = json.loads((out / REPORT_JSON).read_text(encoding="utf-8"))
    assert report["forcing_check"]["ok"] is True
    assert report["mass_max_increase"] == pytest.approx(0.0, abs=1e-12)


def test_simulate_writes_fields_netcdf(make_config, tmp_path):
    config = make_config(scheme={"store_fields": True})
    outcome = run_simulation(config, tmp_path / "out")
    path = outcome.artifacts[FIELDS_NC]
    with xr.open_dataset(path, engine="scipy") as dataset:
        assert dataset["u_real"].shape == (STEPS + 1, SMALL_POINTS)
        assert dataset["mass"].values.tolist() == pytest.approx(outcome.run.mass)


def test_cutoff_extinction_report_after_t0(make_config):
    config = make_config(
        params={"m": 0.5}, forcing=CUTOFF_FORCING, scheme={"t_end": 0.6}
    )
    outcome = run_simulation(config)
    assert outcome.prepared.extinction_applicable
    assert outcome.prepared.constants is not None
    assert outcome.prepared.constants.f_sup == 0.0
    assert outcome.extinction is not None
    assert outcome.trajectory_frame()["envelope"].notna().any()


@pytest.mark.parametrize("amplitude", [0.5, 2.0])
def test_cutoff_keeps_full_m0_rate_after_t0(make_config, amplitude):
    forcing = {**CUTOFF_FORCING, "shape": {"kind": "gaussian", "amplitude": amplitude}}
    prepared = prepare_run(make_config(forcing=forcing, scheme={"t_end": 0.6}))
    assert prepared.extinction_applicable
    assert prepared.constants is not None
    assert prepared.constants.f_sup == 0.0
    assert prepared.constants.big_m == pytest.approx(1.0)


def test_cutoff_exp_decay_checked_after_t0(make_config):
    config = make_config(
        params={"m": 1.0}, forcing=CUTOFF_FORCING, scheme={"t_end": 0.6}
    )
    outcome = run_simulation(config)
    assert outcome.decay is not None
    assert outcome.decay.holds


def test_simulate_seed_override(run_toml, tmp_path):
    out = tmp_path / "out"
    handle_simulate({"config": str(run_toml), "out": str(out), "seed": SEED_OVERRIDE})
    run = json.loads((out / RUN_JSON).read_text(encoding="utf-8"))
    assert run["config"]["seed"] == SEED_OVERRIDE


def test_simulate_rejects_inadmissible_params(write_config, small_run_toml, tmp_path):
    path = write_config(small_run_toml.replace("theta = 0.0", "theta = 0.2"))
    with pytest.raises(AdmissibilityError, match="C_theta"):
        handle_simulate({"config": str(path), "out": str(tmp_path / "out")})
    assert not (tmp_path / "out").exists()


def test_simulate_needs_config():
    with pytest.raises(ValueError, match="'config'"):
        handle_simulate({})


def test_check_admissible_reports_every_violation(write_config, small_run_toml):
    text = small_run_toml.replace("theta = 0.0", "theta = 2.0").replace(
        "m = 0.0", "m = 1.5"
    )
    data = handle_check_admissible({"config": str(write_config(text))})
    assert data["ok"] is False
    assert data["forcing"] is None
    violations = data["params"]["violations"]
    assert any("theta out of range" in v for v in violations)
    assert any("m out of range" in v for v in violations)


def test_check_admissible_ok(run_toml):
    data = handle_check_admissible({"config": str(run_toml)})
    assert data["ok"] is True
    assert data["forcing"]["violations"] == []


def test_check_admissible_bounded_forcing_too_large(write_config, small_run_toml):
    text = small_run_toml + (
        '\n[forcing]\nkind = "bounded"\n\n'
        '[forcing.shape]\nkind = "gaussian"\namplitude = 2.0\n'
    )
    data = handle_check_admissible({"config": str(write_config(text))})
    assert data["ok"] is False
    assert "sup |f|" in data["forcing"]["violations"][0]


def test_sweep_records_failures_and_sorts(run_toml, tmp_path):
    out = tmp_path / "sweep"
    data = handle_sweep(
        {
            "config": str(run_toml),
            "out": str(out),
            "axis": "theta",
            "values": [0.2, 0.0],
            "workers": 2,
        }
    )
    assert data["runs"] == 2  # noqa: PLR2004
    assert data["failed"] == 1
    rows = data["rows"]
    assert [row["value"] for row in rows] == [0.0, 0.2]
    assert rows[0]["status"] == "ok"
    assert rows[1]["error"].startswith("ValidationError")
    summary = pd.read_csv(out / SUMMARY_CSV)
    assert list(summary["status"]) == ["ok", "failed"]
    assert (out / "theta=0.0" / RUN_JSON).is_file()


def test_sweep_dt_axis(run_toml, tmp_path):
    data = handle_sweep(
        {
            "config": str(run_toml),
            "out": str(tmp_path),
            "axis": "dt",
            "values": DT_VALUES,
            "workers": 1,
        }
    )
    assert data["failed"] == 0
    assert [row["value"] for row in data["rows"]] == sorted(DT_VALUES)


def test_sweep_all_failed_raises(run_toml, tmp_path):
    with pytest.raises(SweepFailedError, match="all 2 sweep runs failed"):
        handle_sweep(
            {
                "config": str(run_toml),
                "out": str(tmp_path),
                "axis": "theta",
                "values": [0.2, 0.3],
            }
        )
    assert (tmp_path / SUMMARY_CSV).is_file()


@pytest.mark.parametrize(
    ("arguments", "message"),
    [
        ({"axis": "zeta", "values": [1.0]}, "unknown sweep axis"),
        ({"axis": "theta", "values": []}, "at least one value"),
        ({"axis": "theta", "values": [float("nan")]}, "finite"),
    ],
)
def test_sweep_rejects_bad_arguments(run_toml, arguments, message):
    with pytest.raises(ConfigError, match=message):
        handle_sweep({"config": str(run_toml), **arguments})


def test_apply_axis_special_cases(make_config):
    config = make_config(params={"a": [0.0, 2.0]})
    scaled = apply_axis(config, "a_modulus", 0.5)
    assert scaled.params.a == pytest.approx(0.5j)
    spaced = apply_axis(config, "h", 0.5)
    assert spaced.grid.points_per_axis == 39  # noqa: PLR2004
    assert apply_axis(config, "L", 4.0).grid.half_width == pytest.approx(4.0)
    with pytest.raises(ConfigError, match="fewer than 3"):
        apply_axis(config, "h", 10.0)
    with pytest.raises(ConfigError, match="positive"):
        apply_axis(config, "h", 0.0)


def test_estimate_gn_writes_json(tmp_path):
    data = handle_estimate_gn(
        {
            "m": 0.5,
            "points": 31,
            "half_width": 8.0,
            "family_size": 6,
            "out": str(tmp_path),
            "workers": 1,
        }
    )
    assert data["c_gn"] > 0
    assert data["grid"]["points_per_axis"] == 31  # noqa: PLR2004
    stored = json.loads((tmp_path / GN_JSON).read_text(encoding="utf-8"))
    assert stored["c_gn"] == data["c_gn"]
    assert stored["energy_form_holds"] is True


def test_solve_ode_writes_csv(tmp_path):
    data = handle_solve_ode(
        {
            "alpha": 1.0,
            "delta": 0.6,
            "z1": 1.0,
            "z2": 0.5,
            "t_end": 2.0,
            "dt_out": 0.1,
            "g1": "0.2",
            "g2": "random",
            "seed": 4,
            "out": str(tmp_path),
        }
    )
    frame = pd.read_csv(tmp_path / SOLVE_ODE_CSV)
    assert data["points"] == len(frame)
    assert list(frame.columns) == ["t", "z1", "z2", "g1", "g2", "gap", "gap_bound"]
    assert (frame["g1"] == 0.2).all()  # noqa: PLR2004
    assert data["max_excess"] <= 1e-8  # noqa: PLR2004


def test_parse_source_variants():
    common = {"alpha": 1.0, "delta": 0.6, "t0": 0.0, "t_end": 1.0, "horizon": 1.0}
    assert isinstance(parse_source("scheduled", rng=None, **common), ScheduledSource)
    assert parse_source(None, rng=None, **common)(0.5) == 0.0
    assert parse_source(0.3, rng=None, **common)(0.5) == pytest.approx(0.3)
    with pytest.raises(ValueError, match="'scheduled' or 'random'"):
        parse_source("sometimes", rng=None, **common)


def test_verify_handler_and_render(tmp_path):
    data = handle_verify(
        {"recipe": "exponent-identity", "quick": True, "out": str(tmp_path)}
    )
    assert data["passed"] is True
    assert (tmp_path / "exponent-identity-verify.json").is_file()
    text = render_verify(data)
    assert text.splitlines()[0] == "recipe exponent-identity"
    assert text.splitlines()[-1] == "PASS"
    assert "PASS relative identity gap" in text
