import json

import numpy as np
import pandas as pd
import pytest

from bdots.main import main
from bdots.models import AnalysisReport, FitFile, SimScenario, SubjectFitRecord
from bdots.modules.curves import LOGISTIC4
from bdots.modules.fitting import SubjectSeries
from bdots.modules.simgen import generate_scenario
from tests.conftest import LOGISTIC_THETA, write_long_csv

PIECEWISE_TIMES = np.linspace(-1.0, 1.0, 41)


@pytest.fixture(autouse=True)
def clean_env(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv("BDOTS_THREADS", raising=False)
    monkeypatch.delenv("BDOTS_LOG_LEVEL", raising=False)


def _record(i, group, baseline, slope, se=0.02, pair_id=None):
    return SubjectFitRecord(subject_id=f"{group}{i}", group=group, pair_id=pair_id,
                            params={"baseline": baseline, "slope": slope},
                            se={"baseline": se, "slope": se}, phi=0.0, sigma=0.01, converged=True,
                            rss=0.0, n_iter=3)


def write_fit_file(path, groups=("flat", "rising"), n=6, se=0.02, seed=0, pairs=False, identical=False,
                   duplicate=False):
    rng = np.random.default_rng(seed)
    shared = rng.normal(0.0, 0.05, (n, 2))
    fits = []
    for g, group in enumerate(groups):
        for i in range(n):
            if duplicate:
                baseline, slope = map(float, shared[i])
            else:
                baseline = 0.0 if identical else float(rng.normal(0.0, 0.05))
                slope = 0.0 if identical else 0.25 * g + float(rng.normal(0.0, 0.05))
            fits.append(_record(i, group, baseline, slope, se=se, pair_id=f"p{i:03d}" if pairs else None))
    fit_file = FitFile(curve="piecewise_linear", ar1=False, times=PIECEWISE_TIMES.tolist(), fits=fits)
    path.write_text(fit_file.model_dump_json(indent=2))
    return str(path)


class TestFit:
    def test_two_noiseless_subjects(self, tmp_path, capsys):
        times = np.linspace(0.0, 1600.0, 101)
        series = [SubjectSeries(f"s{i}", g, times, LOGISTIC4.eval(LOGISTIC_THETA * [1, 1, 1, 1 + 0.1 * i], times))
                  for i, g in enumerate(("A", "B"))]
        src = write_long_csv(tmp_path / "obs.csv", series)
        assert main(["fit", src, "--out", "fits.json"]) == 0
        assert "2/2" in capsys.readouterr().out
        fit_file = FitFile.model_validate_json((tmp_path / "fits.json").read_text())
        assert fit_file.curve == "logistic4"
        assert fit_file.fits[0].params["crossover"] == pytest.approx(720.0, rel=1e-4)

    def test_duplicate_row_exits_2(self, tmp_path, capsys):
        (tmp_path / "obs.csv").write_text("subject,group,time,value\ns1,A,0,0.1\ns1,A,0,0.2\n")
        assert main(["fit", "obs.csv"]) == 2
        err = capsys.readouterr().err
        assert "bdots: error: row 3" in err

    def test_unknown_curve_rejected_by_parser(self):
        with pytest.raises(SystemExit) as info:
            main(["fit", "obs.csv", "--curve", "cubic"])
        assert info.value.code == 2


class TestTest:
    def test_fixed_seed_is_byte_identical(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json")
        args = ["test", fits, "--method", "hetboot", "--B", "200", "--seed", "11"]
        assert main(args + ["--out", "a/report.json"]) == 0
        assert main(args + ["--out", "b/report.json"]) == 0
        assert (tmp_path / "a/report.json").read_bytes() == (tmp_path / "b/report.json").read_bytes()
        assert (tmp_path / "a/report.csv").read_bytes() == (tmp_path / "b/report.csv").read_bytes()

    def test_report_contents(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json")
        assert main(["test", fits, "--B", "200", "--out", "report.json"]) == 0
        report = AnalysisReport.model_validate_json((tmp_path / "report.json").read_text())
        assert report.groups == ["flat", "rising"]
        assert report.adjusted_alpha is not None and report.permutation is None
        assert 0.0 < report.adjusted_alpha.alpha_star <= 0.05
        frame = pd.read_csv(tmp_path / "report.csv")
        assert list(frame.columns) == ["time", "stat", "significant", "mean_flat", "mean_rising"]
        assert frame.loc[frame["time"] > 0.8, "significant"].all()

    def test_permutation(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json")
        assert main(["test", fits, "--method", "perm", "--P", "200", "--out", "perm.json"]) == 0
        report = json.loads((tmp_path / "perm.json").read_text())
        assert report["permutation"]["n_permutations"] == 200
        assert report["threshold"] > 0

    def test_paired_without_pair_ids_exits_4(self, tmp_path, capsys):
        fits = write_fit_file(tmp_path / "fits.json")
        assert main(["test", fits, "--paired", "--B", "200"]) == 4
        assert "pair_id" in capsys.readouterr().err

    def test_paired_with_pair_ids(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json", pairs=True)
        assert main(["test", fits, "--paired", "--method", "homboot", "--B", "200"]) == 0

    def test_three_groups_exit_2(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json", groups=("a", "b", "c"))
        assert main(["test", fits, "--B", "200"]) == 2

    def test_zero_variance_exits_5(self, tmp_path):
        fits = write_fit_file(tmp_path / "fits.json", se=0.0, identical=True)
        assert main(["test", fits, "--method", "homboot", "--B", "200"]) == 5

    def test_missing_fit_file_exits_2(self):
        assert main(["test", "nope.json"]) == 2


class TestPadjust:
    def test_rho_one_is_identity(self, tmp_path, capsys):
        (tmp_path / "p.csv").write_text("p\n0.01\n0.04\n0.2\n")
        assert main(["padjust", "p.csv", "--rho", "1", "--out", "adj.csv"]) == 0
        frame = pd.read_csv(tmp_path / "adj.csv")
        np.testing.assert_allclose(frame["p_adjusted"], frame["p"], atol=1e-6)
        assert "2/3" in capsys.readouterr().out

    def test_independent_tests_inflate(self, tmp_path):
        (tmp_path / "p.csv").write_text("0.01\n0.5\n")
        assert main(["padjust", "p.csv", "--rho", "0", "--out", "adj.csv"]) == 0
        frame = pd.read_csv(tmp_path / "adj.csv")
        assert frame["p_adjusted"][0] == pytest.approx(1 - 0.99 ** 2, abs=1e-6)

    def test_empty_input(self, tmp_path):
        (tmp_path / "p.csv").write_text("")
        assert main(["padjust", "p.csv", "--rho", "0.5", "--out", "adj.csv"]) == 0

    def test_out_of_range_exits_2(self, tmp_path):
        (tmp_path / "p.csv").write_text("1.5\n")
        assert main(["padjust", "p.csv", "--rho", "0.5"]) == 2


class TestSim:
    def _scenario(self, tmp_path, **kw):
        sc = dict(kind="fwer_logistic", n_subjects=5, replicates=1, B=100, P=100, ar1_error=False, ar1_fit=False,
                  methods=["hetboot"], grid={"start": 0, "stop": 1600, "n_points": 31})
        sc.update(kw)
        path = tmp_path / "scenario.json"
        path.write_text(json.dumps(sc))
        return str(path)

    def test_single_replicate(self, tmp_path):
        assert main(["sim", self._scenario(tmp_path), "--out", "out"]) == 0
        report = json.loads((tmp_path / "out/report.json").read_text())
        assert report["replicates"] == 1
        assert report["methods"]["hetboot"]["fwer"] in (0.0, 1.0)
        assert (tmp_path / "out/curves.csv").exists()

    def test_unknown_kind_exits_2(self, tmp_path, capsys):
        assert main(["sim", self._scenario(tmp_path, kind="sinusoid")]) == 2
        assert "sinusoid" in capsys.readouterr().err

    def test_unknown_field_exits_2(self, tmp_path):
        assert main(["sim", self._scenario(tmp_path, replicatez=3)]) == 2


def test_matrix_writes_every_cell(tmp_path):
    assert main(["matrix", "fwer", "--out", "cells"]) == 0
    files = sorted(p.name for p in (tmp_path / "cells").glob("*.json"))
    assert len(files) == 17
    assert "fwer_matrix.json" in files
    combined = json.loads((tmp_path / "cells/fwer_matrix.json").read_text())
    assert len(combined["scenarios"]) == 16


def test_check_env(capsys):
    assert main(["check-env"]) == 0
    out = capsys.readouterr().out
    assert "threads   = 1 (default)" in out


def test_bad_env_setting_exits_2(monkeypatch):
    monkeypatch.setenv("BDOTS_THREADS", "zero")
    assert main(["check-env"]) == 2


def test_paired_permutation_on_duplicated_group_finds_nothing(tmp_path):
    fits = write_fit_file(tmp_path / "fits.json", pairs=True, duplicate=True)
    empty = []
    for seed in range(20):
        assert main(["test", fits, "--method", "perm", "--paired", "--P", "100", "--seed", str(seed),
                     "--out", f"perm_{seed}.json"]) == 0
        report = AnalysisReport.model_validate_json((tmp_path / f"perm_{seed}.json").read_text())
        empty.append(not report.intervals)
    assert np.mean(empty) >= 0.95


@pytest.mark.slow
def test_homogeneous_bootstrap_finds_crossover_shift(tmp_path):
    sc = SimScenario(kind="power_shift", shift=150.0, n_subjects=25, seed=21)
    data = generate_scenario(sc, np.random.default_rng(21))
    src = write_long_csv(tmp_path / "obs.csv", data.group1 + data.group2)
    assert main(["fit", src, "--out", "fits.json"]) == 0
    assert main(["test", "fits.json", "--method", "homboot", "--seed", "3", "--out", "report.json"]) == 0
    report = AnalysisReport.model_validate_json((tmp_path / "report.json").read_text())
    assert report.intervals
    # base crossover at 720, shifted group at 870
    assert any(i.start <= 870.0 + 100.0 and i.end >= 720.0 - 100.0 for i in report.intervals)
