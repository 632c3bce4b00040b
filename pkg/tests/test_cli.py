import json
import math

import pytest

from polarized import Bipartition, PureState
from polarized.cli import main, parse_grid, UsageError
from polarized.core_linalg import load_state, save_state
from polarized.reporting import read_csv


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows_of(out):
    return read_csv(out)[1]


class TestParseGrid:
    def test_range_inclusive(self):
        assert parse_grid("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
        assert len(parse_grid("0:1:0.02")) == 51

    def test_list(self):
        assert parse_grid("0.1, 0.3") == [0.1, 0.3]

    @pytest.mark.parametrize("text", ["0:1", "a,b", "0:1:0", "1:0:0.1"])
    def test_bad(self, text):
        with pytest.raises(UsageError):
            parse_grid(text)


class TestPredict:
    def test_unbiased_value(self, capsys):
        code, out, _ = run(capsys, "predict", "--dim-a", "30", "--dim-b", "30", "--eps4", "0", "--polarization", "separable")
        assert code == 0
        (row,) = rows_of(out)
        assert row["mean_purity"] == pytest.approx(0.066667, abs=1e-6)
        assert row["pi_unb_exact"] == pytest.approx(60 / 901)

    def test_maxent(self, capsys):
        _, out, _ = run(capsys, "predict", "--dim-a", "8", "--dim-b", "8", "--eps4", "1", "--polarization", "maxent")
        assert rows_of(out)[0]["mean_purity"] == pytest.approx(0.125, rel=1e-15)

    def test_sphere(self, capsys):
        _, out, _ = run(capsys, "predict", "--dim-a", "2", "--dim-b", "2", "--measure", "sphere", "--eps4", "0")
        assert rows_of(out)[0]["mean_purity"] == pytest.approx(0.8, rel=1e-15)

    def test_pi0_and_eta_star(self, capsys):
        _, out, _ = run(capsys, "predict", "--dim-a", "10", "--dim-b", "10", "--epsilon", "1", "--polarization", "pi0=0.3", "--eta-star")
        row = rows_of(out)[0]
        assert row["mean_purity"] == 0.3
        assert row["eta_star"] == pytest.approx(0.622598, abs=1e-6)
        assert row["eta_star_saturated"] is False

    def test_config_echo(self, capsys):
        _, out, _ = run(capsys, "predict", "--dim-a", "3", "--dim-b", "4", "--eps4", "0.5")
        meta, _ = read_csv(out)
        assert meta["command"] == "predict" and meta["dim_a"] == 3 and meta["polarization"] == "separable"

    def test_epsilon_and_eps4_exclusive(self, capsys):
        with pytest.raises(SystemExit) as exc:
            main(["predict", "--dim-a", "2", "--dim-b", "2", "--eps4", "0", "--epsilon", "0"])
        assert exc.value.code == 2

    @pytest.mark.parametrize(
        "argv",
        [
            ["--dim-a", "2", "--eps4", "0"],
            ["--dim-a", "2", "--dim-b", "2", "--eps4", "2"],
            ["--dim-a", "4", "--dim-b", "2", "--eps4", "0.5", "--polarization", "maxent"],
            ["--dim-a", "2", "--dim-b", "2", "--eps4", "0.5", "--polarization", "pi0=0.1"],
            ["--dim-a", "2", "--dim-b", "2", "--eps4", "0.5", "--polarization", "bogus"],
        ],
    )
    def test_usage_and_domain_errors(self, capsys, argv):
        code, out, err = run(capsys, "predict", *argv)
        assert code == 2
        assert out == "" and "error" in err

    def test_json_output(self, capsys):
        _, out, _ = run(capsys, "predict", "--dim-a", "8", "--dim-b", "8", "--eps4", "0.5", "--output", "json")
        payload = json.loads(out)
        assert payload["rows"][0]["mean_purity"] == pytest.approx(0.625)
        assert payload["config"]["dim_b"] == 8


class TestFixedPurity:
    def test_separable_branch(self, capsys, tmp_path):
        path = tmp_path / "psi.json"
        code, out, _ = run(capsys, "fixed-purity", "--dim-a", "8", "--dim-b", "8", "--target-purity", "0.625",
                           "--seed", "4", "--emit-state", str(path))
        assert code == 0
        row = rows_of(out)[0]
        assert row["kind"] == "separable"
        assert row["epsilon"] == pytest.approx(0.840896, abs=1e-6)
        psi = load_state(path)
        assert psi.dims == Bipartition(8, 8)
        assert psi.norm_sq == pytest.approx(row["norm_sq"], rel=1e-15)

    def test_one_over_n(self, capsys):
        _, out, _ = run(capsys, "fixed-purity", "--dim-a", "4", "--dim-b", "4", "--target-purity", "0.25")
        row = rows_of(out)[0]
        assert row["epsilon"] == 1.0 and row["kind"] == "maxent"

    def test_out_of_range_writes_nothing(self, capsys, tmp_path):
        path = tmp_path / "psi.json"
        code, out, _ = run(capsys, "fixed-purity", "--dim-a", "8", "--dim-b", "8", "--target-purity", "2",
                           "--emit-state", str(path))
        assert code == 2 and out == ""
        assert not path.exists()

    def test_with_verification(self, capsys):
        _, out, _ = run(capsys, "fixed-purity", "--dim-a", "6", "--dim-b", "6", "--target-purity", "0.5", "--trials", "2000")
        row = rows_of(out)[0]
        assert abs(row["z_score"]) <= 4


class TestSample:
    def test_fixed_state_file(self, capsys, tmp_path):
        path = tmp_path / "phi0.json"
        save_state(PureState(Bipartition(2, 2), [1, 0, 0, 0]), path)
        code, out, _ = run(capsys, "sample", "--dim-a", "2", "--dim-b", "2", "--epsilon", "1",
                           "--polarization", f"fixed:{path}", "--no-randomize-local")
        assert code == 0
        assert rows_of(out)[0]["purity"] == 1.0

    def test_fixed_state_dims_mismatch(self, capsys, tmp_path):
        path = tmp_path / "phi0.json"
        save_state(PureState(Bipartition(2, 2), [1, 0, 0, 0]), path)
        code, _, _ = run(capsys, "sample", "--dim-a", "2", "--dim-b", "3", "--polarization", f"fixed:{path}")
        assert code == 2

    def test_missing_file(self, capsys, tmp_path):
        code, _, _ = run(capsys, "sample", "--dim-a", "2", "--dim-b", "2", "--polarization", f"fixed:{tmp_path / 'no.json'}")
        assert code == 2

    def test_streams(self, capsys):
        _, out, _ = run(capsys, "sample", "--dim-a", "3", "--dim-b", "3", "--epsilon", "0.5", "--count", "3", "--seed", "9")
        rows = rows_of(out)
        assert [r["stream"] for r in rows] == [0, 1, 2]
        assert all(1.0 <= r["effective_dimension"] <= 3.0 for r in rows)


class TestExperiment:
    ARGS = ["experiment", "--dim-a", "4", "--dim-b", "4", "--trials", "50", "--seed", "3", "--polarization", "maxent"]

    def test_byte_identical(self, capsys):
        _, a, _ = run(capsys, *self.ARGS)
        _, b, _ = run(capsys, *self.ARGS, "--workers", "2")
        assert a == b

    def test_smoke_n2(self, capsys):
        code, out, _ = run(capsys, "experiment", "--dim-a", "3", "--dim-b", "3", "--trials", "2", "--eps4-grid", "0,0.5")
        assert code == 0
        meta, rows = read_csv(out)
        assert list(rows[0]) == ["eps4", "sample_mean", "sample_std", "stderr", "analytic_mean", "z_score"]
        assert len(rows) == 2 and meta["trials"] == 2

    def test_config_file(self, capsys, tmp_path):
        _, flags_out, _ = run(capsys, *self.ARGS)
        meta, _ = read_csv(flags_out)
        cfg = {k: meta[k] for k in ("dims", "spec", "eps4_grid", "trials", "master_seed", "measure", "normalize")}
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps(cfg, indent=1))
        _, file_out, _ = run(capsys, "experiment", "--config", str(path))
        assert file_out == flags_out

    def test_config_conflict(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text("{}")
        code, _, err = run(capsys, "experiment", "--config", str(path), "--trials", "5")
        assert code == 2 and "cannot be combined" in err

    def test_config_diagnostics(self, capsys, tmp_path):
        path = tmp_path / "cfg.json"
        path.write_text('{"dims": {"n_a": 2, "n_b": 2},\n "spec": {"kind": "separable"}, "trails": 3}')
        code, _, err = run(capsys, "experiment", "--config", str(path))
        assert code == 2 and "trails" in err
        path.write_text('{"dims": {"n_a": 2, "n_b": 2},\n "spec": {"kind": }}')
        code, _, err = run(capsys, "experiment", "--config", str(path))
        assert code == 2 and "line 2" in err


class TestMomentsThresholdConcentration:
    def test_moments_sphere(self, capsys):
        _, out, _ = run(capsys, "moments", "--dim-a", "2", "--dim-b", "2", "--measure", "sphere", "--trials", "20000", "--fourth")
        rows = {r["name"]: r for r in rows_of(out)}
        assert rows["TrSigmaSq"]["analytic"] == pytest.approx(0.8)
        assert rows["delta_ij"]["analytic"] == pytest.approx(0.05)
        assert all(abs(r["z_score"]) <= 4 for r in rows.values())

    def test_threshold(self, capsys):
        _, out, _ = run(capsys, "threshold", "--dim-a", "30", "--dim-b", "30")
        finite, asym = rows_of(out)
        assert finite["eta_star"] == pytest.approx(0.5644598, abs=1e-6)
        assert finite["mc_crossing"] is None
        assert asym["label"] == "asymptotic" and asym["eta_star"] == pytest.approx(0.541196, abs=1e-6)

    def test_threshold_scan(self, capsys, tmp_path):
        path = tmp_path / "scan.csv"
        _, out, _ = run(capsys, "threshold", "--dim-a", "12", "--dim-b", "12", "--scan", "--eta-grid", "0.5:0.8:0.05",
                        "--trials", "500", "--scan-csv", str(path))
        finite = rows_of(out)[0]
        assert finite["mc_crossing"] == pytest.approx(finite["eta_star"], abs=0.03)
        _, scan = read_csv(path.read_text())
        assert len(scan) == 7 and set(scan[0]) == {"eta", "mean_purity", "stderr", "inv_mean_purity", "analytic_d_eff"}

    def test_concentration(self, capsys):
        _, out, _ = run(capsys, "concentration", "--alpha", "0.1", "--dim-a", "30", "--dim-b", "30", "--trials", "2000")
        (row,) = rows_of(out)
        assert row["norm_bound"] == pytest.approx(0.0222, abs=1e-4)
        assert row["empirical_norm_tail"] <= row["norm_bound"]
        assert row["within_bounds"] is True

    def test_concentration_bad_alpha(self, capsys):
        code, _, _ = run(capsys, "concentration", "--alpha", "-0.1", "--dim-a", "3", "--dim-b", "3", "--trials", "10")
        assert code == 2


def test_csv_round_trip_exact(capsys):
    _, out, _ = run(capsys, "experiment", "--dim-a", "3", "--dim-b", "3", "--trials", "20", "--eps4-grid", "0.1,0.7")
    _, rows = read_csv(out)
    from polarized import PolarizationSpec
    from polarized import montecarlo as mc

    cfg = mc.ExperimentConfig(Bipartition(3, 3), PolarizationSpec("separable"), (0.1, 0.7), 20)
    direct = mc.rows_as_dicts(mc.run_purity_experiment(cfg).rows)
    assert rows == direct
    assert all(isinstance(v, float) and math.isfinite(v) for r in rows for v in r.values())


@pytest.mark.parametrize(
    "argv",
    [
        ["moments", "--dim-a", "2", "--dim-b", "2", "--trials", "50"],
        ["sample", "--dim-a", "2", "--dim-b", "2", "--seed", "-1"],
        ["sample", "--dim-a", "2", "--dim-b", "2", "--count", "0"],
        ["experiment", "--dim-a", "2", "--dim-b", "2", "--trials", "1"],
        ["experiment", "--dim-a", "2", "--dim-b", "2", "--eps4-grid", "x,y"],
        ["threshold", "--dim-a", "0", "--dim-b", "2"],
    ],
)
def test_bad_input_exits_2(capsys, argv):
    code, out, _ = run(capsys, *argv)
    assert code == 2 and out == ""
