import json
import subprocess
import sys
import time

import pytest
import yaml
from hypothesis import given
from hypothesis import strategies as st

import sgqtlab.cli as cli
from sgqtlab.cli import ConfigError, RunConfig, bundled_configs, csv_body, main

BUNDLED = sorted(bundled_configs())


def write(tmp_path, data, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(data) if isinstance(data, dict) else data)
    return str(path)


def small_config(**experiment):
    exp = {"kind": "low-count-1q", "repetitions": 2, "iterations": 8, "checkpoints": [4, 8], "sqt_budgets": [280]}
    exp.update(experiment)
    return {"name": "small", "seed": 5, "experiment": exp}


# -- config round trip -----------------------------------------------------------


@pytest.mark.parametrize("name", BUNDLED)
def test_bundled_config_round_trip(name):
    text, _ = cli.resolve_config(name)
    config = RunConfig.from_yaml(text)
    again = RunConfig.from_yaml(config.to_yaml())
    assert again == config
    assert again.to_yaml() == config.to_yaml()
    assert again.config_hash() == config.config_hash()


def test_all_kinds_bundled():
    kinds = {yaml.safe_load(bundled_configs()[n].read_text())["experiment"]["kind"] for n in BUNDLED}
    assert kinds == set(cli.KINDS)


@given(
    st.integers(1, 20),
    st.integers(1, 200),
    st.floats(0.1, 1e4),
    st.floats(0.01, 5),
    st.integers(0, 2**31),
    st.lists(st.tuples(st.floats(-1, 1), st.floats(-1, 1)), min_size=2, max_size=2).filter(
        lambda amps: sum(a * a + b * b for a, b in amps) > 1e-2
    ),
)
def test_config_round_trip_property(reps, iters, lam, a, seed, amps):
    data = {
        "name": "prop",
        "seed": seed,
        "experiment": {
            "kind": "low-count-1q",
            "repetitions": reps,
            "iterations": iters,
            "photons_per_expectation": lam,
            "gains": {"a": a},
            "checkpoints": [iters],
            "targets": [[list(x) for x in amps]],
        },
    }
    config = RunConfig.from_dict(data)
    assert RunConfig.from_yaml(config.to_yaml()) == config


def test_config_hash_ignores_output_location():
    a = RunConfig.from_dict(small_config())
    b = RunConfig.from_dict({**small_config(), "output_dir": "elsewhere"})
    c = RunConfig.from_dict({**small_config(), "seed": 6})
    assert a.config_hash() == b.config_hash() != c.config_hash()


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["experiment"].update(repetitions=0), "experiment.repetitions"),
        (lambda d: d["experiment"].update(kind="fig-9"), "experiment.kind"),
        (lambda d: d["experiment"].update(gains={"a": -1}), "experiment.gains.a"),
        (lambda d: d["experiment"].update(colour="red"), "experiment"),
        (lambda d: d.pop("name"), "<root>"),
        (lambda d: d.update(formats=["xml"]), "formats.0"),
        (lambda d: d["experiment"].update(checkpoints=[99]), "experiment"),
    ],
)
def test_schema_errors_name_the_field(tmp_path, capsys, mutate, field):
    data = small_config()
    mutate(data)
    assert main(["run", write(tmp_path, data)]) == 2
    err = capsys.readouterr().err
    assert f"{field}:" in err or f"{field} " in err


def test_invalid_yaml_is_schema_error(tmp_path, capsys):
    assert main(["run", write(tmp_path, "name: [unclosed\n")]) == 2
    with pytest.raises(ConfigError):
        RunConfig.from_yaml("- just\n- a list\n")


def test_missing_config_is_runtime_error(capsys):
    assert main(["run", "/nonexistent/config.yaml"]) == 1
    assert "no config" in capsys.readouterr().err


def test_runtime_failure_exit_code(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise RuntimeError("simulated failure")

    monkeypatch.setattr(cli, "run_experiment", boom)
    assert main(["run", write(tmp_path, small_config()), "-o", str(tmp_path / "out")]) == 1
    assert "simulated failure" in capsys.readouterr().err


# -- run outputs ---------------------------------------------------------------


def test_run_writes_outputs_with_provenance(tmp_path):
    out = tmp_path / "run"
    assert main(["run", write(tmp_path, small_config()), "-o", str(out)]) == 0
    text = (out / "trajectory.csv").read_text()
    config = RunConfig.from_dict(small_config())
    assert "# seed=5" in text and f"# config_hash={config.config_hash()}" in text
    body = csv_body(text).splitlines()
    assert body[0] == "experiment,condition,trial,iteration,photons_cumulative,fidelity,alpha,beta,g"
    summary = json.loads((out / "summary.json").read_text())
    assert summary["provenance"]["seed"] == 5
    assert summary["provenance"]["config_hash"] == config.config_hash()
    assert RunConfig.from_yaml((out / "config.yaml").read_text()) == config


def test_rerun_gives_byte_identical_body(tmp_path):
    cfg = write(tmp_path, small_config())
    main(["run", cfg, "-o", str(tmp_path / "a")])
    main(["run", cfg, "-o", str(tmp_path / "b")])
    a = (tmp_path / "a" / "trajectory.csv").read_text().splitlines(keepends=True)
    b = (tmp_path / "b" / "trajectory.csv").read_text().splitlines(keepends=True)
    drop = lambda lines: [line for line in lines if not line.startswith("# created=")]
    assert drop(a) == drop(b)
    assert (tmp_path / "a" / "summary.json").read_bytes() == (tmp_path / "b" / "summary.json").read_bytes()


def test_bundled_low_count_summary_reports_280_photon_median(tmp_path, capsys):
    assert main(["run", "one_qubit_low_count", "-o", str(tmp_path / "low")]) == 0
    summary = json.loads((tmp_path / "low" / "summary.json").read_text())
    (final,) = summary["sgqt_final"]
    assert final["iteration"] == 40
    assert final["photons_mean"] == pytest.approx(280, rel=0.05)
    assert 0.0 < final["median"] <= 1.0
    assert "median F" in capsys.readouterr().out


# -- compare -------------------------------------------------------------------


def test_compare_identical_runs(tmp_path, capsys):
    cfg = write(tmp_path, small_config())
    main(["run", cfg, "-o", str(tmp_path / "a")])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "a")]) == 0
    rows = cli.compare_tables(cli._load_summary(tmp_path / "a"), cli._load_summary(tmp_path / "a"))
    assert rows and all(r["reduction"] == 0.0 for r in rows)
    # one row per checkpoint for the SGQT arm
    assert [r["iteration"] for r in rows if r["condition"] == "sgqt"] == [4, 8]
    out = capsys.readouterr().out
    assert "reduction" in out.splitlines()[0]


def test_compare_sgqt_against_sqt_arm(tmp_path, capsys):
    main(["run", write(tmp_path, small_config()), "-o", str(tmp_path / "a")])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "a"), str(tmp_path / "a"), "--condition-a", "sgqt", "--condition-b", "sqt-matched"]) == 0
    assert "sgqt vs sqt-matched" in capsys.readouterr().out


def test_compare_refuses_mismatched_dimensions(tmp_path, capsys):
    main(["run", write(tmp_path, small_config()), "-o", str(tmp_path / "one")])
    two = {"name": "two", "experiment": {"kind": "two-qubit-subset-sweep", "repetitions": 1, "iterations": 3, "subset_sizes": [4]}}
    main(["run", write(tmp_path, two, "two.yaml"), "-o", str(tmp_path / "two")])
    capsys.readouterr()
    assert main(["compare", str(tmp_path / "one"), str(tmp_path / "two")]) == 1
    assert "dimension" in capsys.readouterr().err


def test_compare_missing_or_corrupt(tmp_path, capsys):
    assert main(["compare", str(tmp_path / "nope"), str(tmp_path / "nope")]) == 1
    (tmp_path / "bad").mkdir()
    (tmp_path / "bad" / "summary.json").write_text("{not json")
    assert main(["compare", str(tmp_path / "bad"), str(tmp_path / "bad")]) == 1


def test_list_experiments(capsys):
    assert main(["list-experiments"]) == 0
    out = capsys.readouterr().out
    for name in BUNDLED:
        assert name in out


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "sgqtlab.cli", "list-experiments"], capture_output=True, text=True)
    assert proc.returncode == 0 and "one_qubit_low_count" in proc.stdout


# -- performance budget ----------------------------------------------------------


@pytest.mark.slow
def test_full_default_suite_under_ten_minutes(tmp_path, monkeypatch):
    monkeypatch.setenv("SGQTLAB_WORKERS", "1")
    start = time.perf_counter()
    for name in BUNDLED:
        assert main(["run", name, "-o", str(tmp_path / name)]) == 0
    assert time.perf_counter() - start < 600
