"""End-to-end checks of the command-line surface: each subcommand, the
input diagnostics, the exit-code contract, and output reproducibility."""

import csv
import json

import numpy as np
import pytest
from numpy.testing import assert_allclose

from bcelliptical import __version__
from bcelliptical.cli import main
from bcelliptical.families import Family
from bcelliptical.transform import rectangle_of
from bcelliptical.truncated import TruncatedElliptical, te_pdf

# the contour-plot parameter set used across sampling and grid examples
CONTOUR_PARAMS = {
    "family": "t",
    "eta": [3.0],
    "mu": [5.0, 4.0],
    "lambda": [-1.0, 1.5],
    "sigma": [[0.5, -0.2], [-0.2, 0.3]],
}

DEMO_MU = (1.45, 19.91)
DEMO_SIGMA = ((0.16, 0.10), (0.10, 0.23))
DEMO_TAU = 6.22


def write_params(path, doc):
    path.write_text(json.dumps(doc), encoding="utf-8")
    return str(path)


def read_output_csv(path):
    """Header and float matrix of an output CSV, skipping comment lines."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    return rows[0], np.array([[float(v) for v in r] for r in rows[1:]])


def write_data_csv(path, data, header=("y1", "y2")):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows([repr(float(v)) for v in row] for row in data)
    return str(path)


@pytest.fixture()
def contour_json(tmp_path):
    return write_params(tmp_path / "contour.json", CONTOUR_PARAMS)


class TestFit:
    def test_log_t_fit_has_six_parameters(self, tmp_path):
        demo = tmp_path / "demo.csv"
        assert main(["gen-demo-data", "--seed", "7", "--out", str(demo)]) == 0
        out = tmp_path / "fit.json"
        rc = main(
            ["fit", "--csv", str(demo), "--family", "t", "--lambda-mode", "zero",
             "--out", str(out)]
        )
        assert rc == 0
        doc = json.loads(out.read_text(encoding="utf-8"))
        assert doc["n_params"] == 6
        assert doc["label"] == "log-t"
        assert doc["converged"] is True
        assert doc["version"] == __version__ and doc["seed"] == 0
        est = doc["estimates"]
        assert len(est["mu"]) == 2 and len(est["lambda"]) == 2
        assert est["lambda"] == [0.0, 0.0]
        se = doc["standard_errors"]
        assert len(se["mu"]) == 2 and se["eta"] > 0.0

    def test_zero_entry_reports_row(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("y1,y2\n1.0,2.0\n3.0,0.0\n", encoding="utf-8")
        assert main(["fit", "--csv", str(bad)]) == 1
        err = capsys.readouterr().err
        assert "row 2" in err and "y2" in err

    def test_missing_column_rejected(self, tmp_path, capsys):
        f = tmp_path / "d.csv"
        f.write_text("y1,y2\n1.0,2.0\n", encoding="utf-8")
        assert main(["fit", "--csv", str(f), "--columns", "y1,y9"]) == 1
        assert "y9" in capsys.readouterr().err

    def test_headerless_or_empty_file_rejected(self, tmp_path, capsys):
        f = tmp_path / "e.csv"
        f.write_text("", encoding="utf-8")
        assert main(["fit", "--csv", str(f)]) == 1
        assert "header" in capsys.readouterr().err

    def test_non_convergence_exits_2_with_result_written(self, tmp_path):
        demo = tmp_path / "demo.csv"
        main(["gen-demo-data", "--seed", "3", "--out", str(demo)])
        out = tmp_path / "fit.json"
        rc = main(
            ["fit", "--csv", str(demo), "--family", "t", "--lambda-mode", "zero",
             "--tol", "1e-18", "--out", str(out)]
        )
        assert rc == 2
        doc = json.loads(out.read_text(encoding="utf-8"))
        assert doc["converged"] is False
        assert np.isfinite(doc["loglik"])

    def test_recovery_within_three_se(self, tmp_path):
        # refits of data generated at the demo parameters should cover the
        # true location within +-3 reported standard errors almost always
        from bcelliptical.bce import BceDistribution
        from bcelliptical.transform import BoxCoxParams
        from bcelliptical.truncated import GibbsConfig

        dist = BceDistribution(
            BoxCoxParams(DEMO_MU, (0.0, 0.0)),
            np.asarray(DEMO_SIGMA),
            Family("t", (DEMO_TAU,), 2),
        )
        hits = 0
        for rep in range(50):
            data = dist.sample(500, GibbsConfig(seed=900 + rep))
            path = write_data_csv(tmp_path / f"r{rep}.csv", data)
            out = tmp_path / f"r{rep}.json"
            rc = main(
                ["fit", "--csv", path, "--family", "t", "--lambda-mode", "zero",
                 "--out", str(out)]
            )
            if rc != 0:
                continue
            doc = json.loads(out.read_text(encoding="utf-8"))
            mu = np.array(doc["estimates"]["mu"])
            se = np.array(doc["standard_errors"]["mu"])
            if np.all(np.abs(mu - np.array(DEMO_MU)) <= 3.0 * se):
                hits += 1
        assert hits >= 45


class TestSample:
    def test_rows_positive_and_counted(self, tmp_path, contour_json):
        out = tmp_path / "s.csv"
        rc = main(["sample", "--params", contour_json, "--n", "1000",
                   "--seed", "7", "--out", str(out)])
        assert rc == 0
        header, data = read_output_csv(out)
        assert header == ["y1", "y2"]
        assert data.shape == (1000, 2)
        assert np.all(data > 0.0)

    def test_same_seed_identical_files(self, tmp_path, contour_json):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["sample", "--params", contour_json, "--n", "200",
                         "--seed", "11", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_lambda_normal_medians(self, tmp_path):
        # with every power at zero the medians equal the location; for a
        # diagonal dispersion the rows are independent, so the sample
        # median has the classical order-statistic standard error
        params = write_params(
            tmp_path / "p.json",
            {"family": "normal", "mu": [8.0, 8.0], "lambda": [0.0, 0.0],
             "sigma": [[0.25, 0.0], [0.0, 0.25]]},
        )
        out = tmp_path / "s.csv"
        n = 2000
        assert main(["sample", "--params", params, "--n", str(n),
                     "--seed", "5", "--out", str(out)]) == 0
        _, data = read_output_csv(out)
        density_at_median = 1.0 / (np.sqrt(2.0 * np.pi) * 0.5 * 8.0)
        se = 1.0 / (2.0 * density_at_median * np.sqrt(n))
        med = np.median(data, axis=0)
        assert np.all(np.abs(med - 8.0) <= 3.0 * se)

    def test_output_embeds_seed_and_version(self, tmp_path, contour_json):
        out = tmp_path / "s.csv"
        main(["sample", "--params", contour_json, "--n", "5",
              "--seed", "21", "--out", str(out)])
        first = out.read_text(encoding="utf-8").splitlines()[0]
        assert first.startswith("#")
        assert f"artifact={__version__}" in first and "seed=21" in first

    def test_non_pd_sigma_reports_pivot(self, tmp_path, capsys):
        params = write_params(
            tmp_path / "p.json",
            {"family": "normal", "mu": [1.0, 2.0], "lambda": [0.0, 0.0],
             "sigma": [[1.0, 2.0], [2.0, 1.0]]},
        )
        assert main(["sample", "--params", params, "--out",
                     str(tmp_path / "x.csv")]) == 1
        err = capsys.readouterr().err
        assert "positive definite" in err and "pivot 2" in err

    def test_asymmetric_sigma_rejected(self, tmp_path, capsys):
        params = write_params(
            tmp_path / "p.json",
            {"family": "normal", "mu": [1.0, 2.0], "lambda": [0.0, 0.0],
             "sigma": [[1.0, 0.3], [0.2, 1.0]]},
        )
        assert main(["sample", "--params", params, "--out",
                     str(tmp_path / "x.csv")]) == 1
        assert "symmetric" in capsys.readouterr().err


class TestPdfGrid:
    def test_contour_max_is_interior(self, tmp_path, contour_json):
        out = tmp_path / "g.csv"
        m = 40
        rc = main(["pdf-grid", "--params", contour_json,
                   "--range1", "0.1,15", "--range2", "0.1,15",
                   "--grid", str(m), "--out", str(out)])
        assert rc == 0
        _, rows = read_output_csv(out)
        assert rows.shape == (m * m, 3)
        i, j = divmod(int(np.argmax(rows[:, 2])), m)
        assert 0 < i < m - 1 and 0 < j < m - 1

    def test_riemann_sum_near_one(self, tmp_path):
        # light-tailed parameter set so a finite window holds ~all the mass
        params = write_params(
            tmp_path / "p.json",
            {"family": "normal", "mu": [2.0, 3.0], "lambda": [0.5, 0.5],
             "sigma": [[0.05, 0.02], [0.02, 0.08]]},
        )
        out = tmp_path / "g.csv"
        m = 120
        assert main(["pdf-grid", "--params", params,
                     "--range1", "0.01,8", "--range2", "0.01,12",
                     "--grid", str(m), "--out", str(out)]) == 0
        _, rows = read_output_csv(out)
        y1 = np.unique(rows[:, 0])
        y2 = np.unique(rows[:, 1])
        f = rows[:, 2].reshape(m, m)
        total = np.trapezoid(np.trapezoid(f, y2, axis=1), y1)
        assert abs(total - 1.0) <= 0.02

    def test_unit_lambda_matches_truncated_pdf(self, tmp_path):
        mu = np.array([2.0, 3.0])
        sigma = np.array([[0.05, 0.02], [0.02, 0.08]])
        params = write_params(
            tmp_path / "p.json",
            {"family": "t", "eta": [4.0], "mu": list(mu),
             "lambda": [1.0, 1.0], "sigma": [list(r) for r in sigma]},
        )
        out = tmp_path / "g.csv"
        assert main(["pdf-grid", "--params", params,
                     "--range1", "0.2,6", "--range2", "0.3,9",
                     "--grid", "15", "--out", str(out)]) == 0
        _, rows = read_output_csv(out)
        trunc = TruncatedElliptical(
            Family("t", (4.0,), 2), np.zeros(2), sigma, rectangle_of([1.0, 1.0])
        )
        w = rows[:, :2] / mu - 1.0
        expect = te_pdf(trunc, w) / (mu[0] * mu[1])
        assert_allclose(rows[:, 2], expect, rtol=1e-10, atol=1e-300)

    def test_univariate_params_rejected(self, tmp_path, capsys):
        params = write_params(
            tmp_path / "p.json",
            {"family": "normal", "mu": [2.0], "lambda": [0.0], "sigma": [[0.1]]},
        )
        assert main(["pdf-grid", "--params", params, "--range1", "0.1,5",
                     "--range2", "0.1,5", "--out", str(tmp_path / "g.csv")]) == 1
        assert "bivariate" in capsys.readouterr().err


class TestQuantile:
    def test_median_is_mu_for_zero_lambda(self, tmp_path, capsys):
        params = write_params(
            tmp_path / "p.json",
            {"family": "t", "eta": [DEMO_TAU], "mu": list(DEMO_MU),
             "lambda": [0.0, 0.0],
             "sigma": [list(r) for r in DEMO_SIGMA]},
        )
        out = tmp_path / "q.json"
        rc = main(["quantile", "--params", params, "--k", "2",
                   "--alpha", "0.5", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text(encoding="utf-8"))
        assert_allclose(doc["quantile"][0], DEMO_MU[1], rtol=1e-9)
        table = capsys.readouterr().out
        assert "alpha" in table and "0.5" in table

    def test_monotone_in_alpha(self, tmp_path, contour_json):
        out = tmp_path / "q.json"
        alphas = ["0.05", "0.25", "0.5", "0.75", "0.95"]
        assert main(["quantile", "--params", contour_json, "--k", "1",
                     "--alpha", *alphas, "--out", str(out)]) == 0
        doc = json.loads(out.read_text(encoding="utf-8"))
        q = doc["quantile"]
        assert all(a < b for a, b in zip(q, q[1:]))

    def test_consistent_with_sampled_quantiles(self, tmp_path, contour_json):
        # the empirical CDF of a large sample evaluated at the reported
        # quantiles should sit near the requested levels
        out = tmp_path / "q.json"
        assert main(["quantile", "--params", contour_json, "--k", "2",
                     "--alpha", "0.25", "0.9", "--out", str(out)]) == 0
        q = json.loads(out.read_text(encoding="utf-8"))["quantile"]
        s = tmp_path / "s.csv"
        n = 4000
        assert main(["sample", "--params", contour_json, "--n", str(n),
                     "--seed", "17", "--out", str(s)]) == 0
        _, data = read_output_csv(s)
        for alpha, value in zip((0.25, 0.9), q):
            ecdf = np.mean(data[:, 1] <= value)
            # chain autocorrelation inflates the binomial error a little
            tol = 6.0 * np.sqrt(alpha * (1.0 - alpha) / n)
            assert abs(ecdf - alpha) <= tol

    def test_bad_level_rejected(self, tmp_path, contour_json, capsys):
        assert main(["quantile", "--params", contour_json, "--k", "1",
                     "--alpha", "1.5"]) == 1
        assert "between 0 and 1" in capsys.readouterr().err


class TestSimstudy:
    def test_summary_fields(self, tmp_path):
        out = tmp_path / "st.json"
        rc = main(["simstudy", "--scenario", "LogNormal2", "--n", "125",
                   "--replicates", "10", "--seed", "5", "--out", str(out)])
        assert rc == 0
        doc = json.loads(out.read_text(encoding="utf-8"))
        for key in ("scenario", "parameters", "truth", "mb", "mad", "iqr",
                    "failures", "seed", "version"):
            assert key in doc
        assert len(doc["mb"]) == len(doc["parameters"])

    def test_unknown_scenario_is_input_error(self, tmp_path, capsys):
        assert main(["simstudy", "--scenario", "Nope2", "--replicates", "10"]) == 1
        assert "scenario" in capsys.readouterr().err


class TestGenDemoData:
    def test_shape_and_determinism(self, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        for out in (a, b):
            assert main(["gen-demo-data", "--seed", "9", "--out", str(out)]) == 0
        assert a.read_bytes() == b.read_bytes()
        header, data = read_output_csv(a)
        assert header == ["y1", "y2"]
        assert data.shape == (136, 2)
        assert np.all(data > 0.0)


class TestRoundTrip:
    @pytest.mark.parametrize("family", ["normal", "t"])
    def test_sample_then_fit_converges(self, tmp_path, family):
        params = {
            "family": family, "mu": [2.0, 5.0], "lambda": [0.0, 0.0],
            "sigma": [[0.3, 0.1], [0.1, 0.4]],
        }
        if family == "t":
            params["eta"] = [5.0]
        path = write_params(tmp_path / "p.json", params)
        converged = 0
        for seed in range(20):
            s = tmp_path / f"s{seed}.csv"
            assert main(["sample", "--params", path, "--n", "500",
                         "--seed", str(seed), "--out", str(s)]) == 0
            out = tmp_path / f"f{seed}.json"
            rc = main(["fit", "--csv", str(s), "--family", family,
                       "--lambda-mode", "zero", "--out", str(out)])
            assert rc in (0, 2)
            converged += rc == 0
        assert converged >= 19
