import numpy as np
import pytest

import chi2reg.cli as cli
from chi2reg import io
from chi2reg.errors import ConfigError
from chi2reg.harness import ExperimentConfig, RunOutput, build_config, parse_noise, run_experiment, run_selftest, summarize
from chi2reg.problems import add_noise_uniform, tomo

TINY_1D = """[experiment]
kind = bench-1d
copies = 3
noise = 0.1,0.01
[params]
n = 200
orders = 0,2
strides = 1,4
"""

TINY_2D = """[experiment]
kind = invert-2d
copies = 2
selectors = upre,chi2
noise = 0.03:0.005
[params]
variants = nonzero,one-step
grid_count = 200
"""


@pytest.fixture
def ini(tmp_path):
    def write(text, name="c.ini"):
        path = tmp_path / name
        path.write_text(text)
        return path
    return write


# formats --------------------------------------------------------------------

@pytest.mark.parametrize("value, text", [
    (True, "1"), (np.int64(7), "7"), (0.1, "0.1"), (1 / 3, "0.333333333"), (-0.0, "0"),
    (float("nan"), "nan"), (float("-inf"), "-inf"), (None, ""), ("upre", "upre"), (123456789012.0, "1.23456789e+11"),
])
def test_format_value(value, text):
    assert io.format_value(value) == text


def test_table_round_trip(tmp_path):
    rows = [{"a": 1, "b": 0.25, "c": "x"}, {"a": 2, "c": "y", "d": 1e-300}]
    path = io.write_table(tmp_path / "sub" / "t.csv", rows)
    back = io.read_table(path)
    assert path.read_text().splitlines()[0] == "a,b,c,d"
    assert back[0] == {"a": 1, "b": 0.25, "c": "x", "d": ""}
    assert back[1]["d"] == 1e-300


def test_vector_and_meta_round_trip(tmp_path):
    v = np.array([1.0, -2.5, 3e-7])
    np.testing.assert_array_equal(io.read_vector(io.write_vector(tmp_path / "v.csv", v)), v)
    meta = {"kind": "tomo", "dims": (60, 40), "seed": 3, "eta": 0.02}
    assert io.read_meta(io.write_meta(tmp_path / "meta", meta)) == {"kind": "tomo", "dims": [60, 40],
                                                                    "seed": 3, "eta": 0.02}


def test_bundle_round_trip(tmp_path):
    prob = tomo(8, seed=1)
    noisy, wd = add_noise_uniform(prob.d_clean, 0.02, seed=4, copies=2)
    prob.Wd = wd
    io.save_bundle(tmp_path / "b", prob, noisy, {"seed": 4})
    back, noisy_back, meta = io.load_bundle(tmp_path / "b")
    np.testing.assert_allclose(back.G, prob.G, rtol=1e-15)
    np.testing.assert_allclose(noisy_back, noisy, rtol=1e-8)
    np.testing.assert_allclose(back.Wd, wd, rtol=1e-8)
    np.testing.assert_allclose(back.m_exact, prob.m_exact, rtol=1e-8)
    np.testing.assert_array_equal(back.L, np.eye(prob.G.shape[1]))
    assert meta["copies"] == 2 and meta["seed"] == 4


def test_read_config(ini, tmp_path):
    cfg = io.read_config(ini(TINY_1D + "theta = 0.9  # inline\n"))
    assert cfg["experiment"]["copies"] == 3
    assert cfg["params"]["theta"] == 0.9
    with pytest.raises(ConfigError):
        io.read_config(tmp_path / "missing.ini")
    with pytest.raises(ConfigError):
        io.read_config(ini("[params]\nn = 3\n", "bad.ini"))
    with pytest.raises(ConfigError):
        io.read_config(ini("no section header\n", "worse.ini"))


def test_config_hash_is_order_independent():
    assert io.config_hash({"a": 1, "b": (1, 2)}) == io.config_hash({"b": [1, 2], "a": 1})
    assert io.config_hash({"a": 1}) != io.config_hash({"a": 2})
    assert len(io.config_hash({})) == 12


# configuration ---------------------------------------------------------------

def test_parse_noise():
    assert parse_noise("0.1,0.01") == (0.1, 0.01)
    assert parse_noise("0.01:0.001, 0.05:0.01") == ((0.01, 0.001), (0.05, 0.01))


def test_build_config_precedence(ini):
    fc = io.read_config(ini(TINY_1D))
    cfg = build_config(None, fc)
    assert cfg.kind == "bench-1d" and cfg.copies == 3 and cfg.seed == 0
    assert cfg.params["orders"] == (0, 2) and cfg.params["n"] == 200
    assert cfg.params["depth"] == 0.75
    cfg = build_config(None, fc, copies=5, seed=9, noise=None)
    assert cfg.copies == 5 and cfg.seed == 9 and cfg.noise == (0.1, 0.01)


def test_config_validation():
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="nope")
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="bench-1d", selectors=("upre", "magic"))
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="bench-1d", copies=0)
    with pytest.raises(ConfigError):
        build_config(None, {})


def test_hash_ignores_output_and_jobs():
    a = ExperimentConfig(kind="bench-tomo", out="x", jobs=1)
    b = ExperimentConfig(kind="bench-tomo", out="y", jobs=4)
    assert a.hash == b.hash != ExperimentConfig(kind="bench-tomo", seed=1).hash


def test_summarize():
    assert all(np.isnan(summarize([])))
    assert summarize([2.0]) == (2.0, 0.0)
    mean, std = summarize([1.0, 2.0, 3.0, float("nan")])
    assert mean == 2.0 and std == pytest.approx(1.0)


# harness ---------------------------------------------------------------------

def test_harness_is_deterministic_and_jobs_invariant(ini):
    fc = io.read_config(ini(TINY_1D))
    one = run_experiment(build_config(None, fc, jobs=1))
    two = run_experiment(build_config(None, fc, jobs=2))
    assert one.aggregate == two.aggregate
    assert one.details == two.details
    assert len(one.aggregate) == 2 * 2 * 2 * 3
    assert all(r["n_ok"] + r["n_failed"] == 3 for r in one.aggregate)


def test_invert_rows(ini):
    out = run_experiment(build_config(None, io.read_config(ini(TINY_2D))))
    assert {(r["variant"], r["method"]) for r in out.aggregate} == {
        ("nonzero", "upre"), ("nonzero", "chi2"), ("one-step", "upre"), ("one-step", "chi2")}
    assert all(r["mean_iterations"] <= 2 for r in out.aggregate if r["variant"] == "one-step")
    assert out.failures == 0


def test_selftest_passes():
    out = run_selftest()
    assert out.aggregate and all(r["pass"] for r in out.aggregate)


# command line ---------------------------------------------------------------

def test_cli_writes_identical_tables(ini, tmp_path):
    path = ini(TINY_2D)
    for name in ("a", "b"):
        assert cli.main(["invert-2d", "--config", str(path), "--out", str(tmp_path / name)]) == 0
    for table in ("table_invert2d.csv", "copies_invert2d.csv", "history_invert2d.csv"):
        assert (tmp_path / "a" / table).read_bytes() == (tmp_path / "b" / table).read_bytes()
    assert (tmp_path / "a" / "grid_model2d_exact.png").stat().st_size > 0
    assert list((tmp_path / "a").glob("xy_lcurve_2d.*"))


def test_cli_flags_override_config(ini, tmp_path):
    code = cli.main(["bench-1d", "--config", str(ini(TINY_1D)), "--copies", "2", "--selector", "chi2",
                     "--noise", "0.1", "--out", str(tmp_path), "--no-plots"])
    assert code == 0
    rows = io.read_table(tmp_path / "table_bench1d.csv")
    assert {r["method"] for r in rows} == {"chi2"}
    assert all(r["n_ok"] + r["n_failed"] == 2 for r in rows)
    assert not list(tmp_path.glob("*.png"))


def test_cli_output_directory_from_environment(ini, tmp_path, monkeypatch):
    monkeypatch.setenv(cli.OUT_ENV, str(tmp_path))
    assert cli.main(["selftest", "--no-plots"]) == 0
    assert (tmp_path / "selftest" / "table_selftest.csv").exists()


def test_cli_bad_config_exits_one(ini, tmp_path):
    assert cli.main(["bench-1d", "--config", str(tmp_path / "missing.ini")]) == 1
    assert cli.main(["bench-1d", "--config", str(ini(TINY_1D)), "--selector", "nope"]) == 1


def test_cli_failed_copies_exit_two(tmp_path, monkeypatch):
    monkeypatch.setattr(cli, "run_experiment", lambda cfg: RunOutput(aggregate=[{"x": 1}], failures=1))
    assert cli.main(["bench-tomo", "--out", str(tmp_path), "--no-plots"]) == 2


def test_cli_gen_bundle(tmp_path):
    assert cli.main(["gen", "tomo", "--copies", "2", "--seed", "5", "--out", str(tmp_path)]) == 0
    prob, noisy, meta = io.load_bundle(tmp_path)
    assert noisy.shape == (2, prob.G.shape[0])
    assert meta["seed"] == 5 and meta["noise_kind"] == "uniform-max"


def test_cli_plotdata_renders(tmp_path):
    assert cli.main(["plotdata", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "grid_model2d_exact.png").exists()
    assert (tmp_path / "curve_anomaly2d.png").exists()
