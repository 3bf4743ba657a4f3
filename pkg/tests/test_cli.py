"""End-to-end CLI tests driven through main(argv)."""

import json

import numpy as np

from d2dcache.cli import main
from d2dcache.fitting import synthetic_records
from d2dcache.policy import asymptotic_constants, hit_probability, waterfill
from d2dcache.popularity import MZipfDist


def scenario_file(path, **kw):
    path.write_text(json.dumps(kw))
    return str(path)


def read_table(path):
    """Split an output CSV into (meta line, column names, row dicts)."""
    lines = path.read_text().splitlines()
    cols = lines[1].split(",")
    rows = [dict(zip(cols, ln.split(","))) for ln in lines[2:]]
    return lines[0], cols, rows


def write_log(path, records):
    with open(path, "w") as fh:
        fh.write("user_id,content_id\n")
        for r in records:
            fh.write(f"{r.user_id},{r.content_id}\n")
    return str(path)


FIG_SCENARIO = dict(n=10000, s=1, k=4, c_rate=1.0, gamma=0.6, q=20.0, m=1000)


class TestFit:
    def test_recovers_synthetic_parameters(self, tmp_path, capsys):
        dist = MZipfDist(1.18, 28.0, 4859)
        rng = np.random.default_rng(11)
        log = write_log(tmp_path / "log.csv", synthetic_records(dist, 200_000, 1, rng))
        rc = main(["fit", "--log", log, "--m", "4859", "--out", str(tmp_path / "o")])
        assert rc == 0
        got = json.loads((tmp_path / "o" / "fit_result.json").read_text())
        assert abs(got["gamma"] - 1.18) < 0.05
        assert abs(got["q"] - 28.0) / 28.0 < 0.20
        assert got["m"] == 4859
        assert got["_meta"]["tool"].startswith("d2dcache ")
        out = capsys.readouterr().out
        assert "gamma=" in out and "200000 unique accesses" in out

    def test_empty_log_is_config_error(self, tmp_path, capsys):
        log = tmp_path / "log.csv"
        log.write_text("user_id,content_id\n")
        rc = main(["fit", "--log", str(log), "--out", str(tmp_path)])
        assert rc == 2
        assert "no unique accesses" in capsys.readouterr().err

    def test_malformed_rows_warned_but_fit_proceeds(self, tmp_path, capsys):
        log = tmp_path / "log.csv"
        log.write_text(
            "user_id,content_id\n"
            "u1,f1\n"
            "only_one_field\n"
            "u2,f1\n"
            "u3,f2\n"
        )
        rc = main(["fit", "--log", str(log), "--out", str(tmp_path / "o")])
        err = capsys.readouterr().err
        assert rc == 0
        assert "warning" in err and ":3:" in err
        assert (tmp_path / "o" / "fit_result.json").exists()

    def test_single_content_degenerate_warns(self, tmp_path, capsys):
        log = tmp_path / "log.csv"
        log.write_text("user_id,content_id\nu1,f1\n")
        rc = main(["fit", "--log", str(log), "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "single content" in capsys.readouterr().err

    def test_export_empirical(self, tmp_path):
        log = tmp_path / "log.csv"
        log.write_text("user_id,content_id\nu1,f1\nu2,f1\nu2,f2\n")
        rc = main(["fit", "--log", str(log), "--out", str(tmp_path / "o"),
                   "--export-empirical"])
        assert rc == 0
        text = (tmp_path / "o" / "empirical.csv").read_text().splitlines()
        assert text[0].startswith("# d2dcache ")
        assert text[1] == "rank,count,probability"
        assert text[2].startswith("1,2,")

    def test_since_until_filters_on_timestamp(self, tmp_path, capsys):
        log = tmp_path / "log.csv"
        log.write_text(
            "user_id,content_id,timestamp\n"
            "u1,f1,100\n"
            "u2,f2,200\n"
            "u3,f3,300\n"
            "u4,f4,400\n"
        )
        rc = main(["fit", "--log", str(log), "--since", "150", "--until", "350",
                   "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "(2 unique accesses" in capsys.readouterr().out

    def test_bad_time_bound(self, tmp_path, capsys):
        log = tmp_path / "log.csv"
        log.write_text("user_id,content_id\nu1,f1\n")
        rc = main(["fit", "--log", str(log), "--since", "whenever"])
        assert rc == 2
        assert "time bound" in capsys.readouterr().err

    def test_missing_log_is_io_error(self, tmp_path):
        rc = main(["fit", "--log", str(tmp_path / "nope.csv")])
        assert rc == 3


class TestPolicyCmd:
    def test_matches_library_output(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO, n_clusters=100)
        rc = main(["policy", "--scenario", scn, "--out", str(tmp_path / "o")])
        assert rc == 0

        dist = MZipfDist(0.6, 20.0, 1000)
        pol = waterfill(dist, 1, 100)
        meta, cols, rows = read_table(tmp_path / "o" / "policy.csv")
        assert meta.startswith("# d2dcache ")
        assert cols == ["rank", "p_c"]
        assert len(rows) == 1000
        got = np.array([float(r["p_c"]) for r in rows])
        assert np.array_equal(got, pol.probs)

        con = json.loads((tmp_path / "o" / "policy_constants.json").read_text())
        assert con["m_star"] == pol.m_star
        assert con["nu"] == pol.nu
        assert con["hit_probability"] == hit_probability(dist, pol, 1, 100)
        ac = asymptotic_constants(dist, 1, 100)
        assert con["c1"] == ac.c1 and con["c2"] == ac.c2
        assert con["m_star_asym"] == ac.m_star_asym

    def test_missing_keys_rejected(self, tmp_path, capsys):
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO)  # no n_clusters
        rc = main(["policy", "--scenario", scn, "--out", str(tmp_path)])
        assert rc == 2
        assert "n_clusters" in capsys.readouterr().err


class TestAnalyzeCmd:
    def test_curve_csv_schema(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO,
                            cluster_counts=[25, 100, 400])
        rc = main(["analyze", "--scenario", scn, "--out", str(tmp_path / "o")])
        assert rc == 0
        meta, cols, rows = read_table(tmp_path / "o" / "theory_curves.csv")
        assert meta.startswith("# d2dcache ")
        assert cols == ["g_c", "outage", "throughput", "source", "clamped"]
        assert all(r["clamped"] in ("True", "False") for r in rows)
        at_100 = {r["source"] for r in rows if r["g_c"] == "100"}
        assert {"exact_sum", "closed_form", "small_gamma_r2"} <= at_100
        # no seed involved, header records that
        assert meta.endswith("seed=none")

    def test_infeasible_counts_warned(self, tmp_path, capsys):
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO,
                            cluster_counts=[3, 100])
        rc = main(["analyze", "--scenario", scn, "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "skipped" in capsys.readouterr().err
        _, _, rows = read_table(tmp_path / "o" / "theory_curves.csv")
        assert {r["g_c"] for r in rows} == {"100"}

    def test_nothing_feasible_is_error(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO, cluster_counts=[3])
        assert main(["analyze", "--scenario", scn, "--out", str(tmp_path)]) == 2


class TestSimulateCmd:
    def test_estimate_close_to_exact(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", n=2500, k=4, gamma=0.6, q=20.0,
                            m=1000, n_clusters=25, trials=40)
        rc = main(["simulate", "--scenario", scn, "--seed", "99",
                   "--out", str(tmp_path / "o")])
        assert rc == 0
        got = json.loads((tmp_path / "o" / "sim_result.json").read_text())
        assert got["g_c"] == 100 and got["trials"] == 40 and got["seed"] == 99
        assert got["outage_stderr"] > 0
        gap = abs(got["outage_mean"] - got["exact_outage"])
        assert gap < 4 * got["outage_stderr"]

    def test_rerun_is_bitwise_identical(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", n=400, gamma=0.8, q=5.0, m=200,
                            n_clusters=16, trials=6, seed=31)
        for d in ("a", "b"):
            assert main(["simulate", "--scenario", scn, "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "sim_result.json").read_bytes() == \
            (tmp_path / "b" / "sim_result.json").read_bytes()

    def test_seed_required(self, tmp_path, capsys):
        scn = scenario_file(tmp_path / "s.json", n=400, gamma=0.8, q=5.0, m=200,
                            n_clusters=16)
        rc = main(["simulate", "--scenario", scn, "--out", str(tmp_path)])
        assert rc == 2
        assert "seed" in capsys.readouterr().err

    def test_scenario_seed_used_when_no_flag(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", n=400, gamma=0.8, q=5.0, m=200,
                            n_clusters=16, trials=4, seed=123)
        assert main(["simulate", "--scenario", scn, "--out", str(tmp_path / "o")]) == 0
        got = json.loads((tmp_path / "o" / "sim_result.json").read_text())
        assert got["seed"] == 123


class TestSweepCmd:
    def test_tradeoff_csv_sources_and_agreement(self, tmp_path):
        """Every cluster count carries simulation, exact sum and theory rows,
        and theory outage stays within 0.05 of the simulated estimate."""
        scn = scenario_file(tmp_path / "s.json", **FIG_SCENARIO,
                            cluster_counts=[16, 25, 100, 400], trials=16)
        rc = main(["sweep", "--scenario", scn, "--seed", "2024",
                   "--out", str(tmp_path / "o")])
        assert rc == 0
        meta, cols, rows = read_table(tmp_path / "o" / "tradeoff.csv")
        assert meta.startswith("# d2dcache ") and meta.endswith("seed=2024")
        assert cols == ["n_clusters", "g_c", "outage", "outage_stderr",
                        "throughput", "throughput_stderr", "source"]
        by_gc = {}
        for r in rows:
            by_gc.setdefault(int(r["g_c"]), []).append(r)
        assert set(by_gc) == {25, 100, 400, 625}
        for g_c, grp in by_gc.items():
            sources = {r["source"] for r in grp}
            assert len(sources) >= 3
            assert "simulated" in sources and "exact_sum" in sources
            sim = next(float(r["outage"]) for r in grp if r["source"] == "simulated")
            for r in grp:
                assert abs(float(r["outage"]) - sim) <= 0.05, (g_c, r["source"])
            # stderr columns populated only for the simulated rows
            for r in grp:
                has_err = r["outage_stderr"] != ""
                assert has_err == (r["source"] == "simulated")
            assert all(int(r["n_clusters"]) * g_c == 10000 for r in grp)

    def test_rerun_is_bitwise_identical(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", n=2500, gamma=0.7, q=10.0, m=400,
                            cluster_counts=[25, 100], trials=5, seed=8)
        for d in ("a", "b"):
            assert main(["sweep", "--scenario", scn, "--out", str(tmp_path / d)]) == 0
        assert (tmp_path / "a" / "tradeoff.csv").read_bytes() == \
            (tmp_path / "b" / "tradeoff.csv").read_bytes()

    def test_infeasible_counts_warned(self, tmp_path, capsys):
        scn = scenario_file(tmp_path / "s.json", n=2500, gamma=0.7, q=10.0, m=400,
                            cluster_counts=[7, 25], trials=4, seed=1)
        rc = main(["sweep", "--scenario", scn, "--out", str(tmp_path / "o")])
        assert rc == 0
        assert "cluster count 7 skipped" in capsys.readouterr().err
        _, _, rows = read_table(tmp_path / "o" / "tradeoff.csv")
        assert {r["g_c"] for r in rows} == {"100"}

    def test_seed_required(self, tmp_path):
        scn = scenario_file(tmp_path / "s.json", n=2500, gamma=0.7, q=10.0, m=400,
                            cluster_counts=[25], trials=4)
        assert main(["sweep", "--scenario", scn, "--out", str(tmp_path)]) == 2


class TestScenarioValidation:
    def test_unknown_key_rejected(self, tmp_path, capsys):
        scn = tmp_path / "s.json"
        scn.write_text('{"n": 100, "bogus": 1}')
        rc = main(["analyze", "--scenario", str(scn), "--out", str(tmp_path)])
        assert rc == 2
        assert "bogus" in capsys.readouterr().err

    def test_popularity_given_twice(self, tmp_path, capsys):
        scn = tmp_path / "s.json"
        scn.write_text('{"n": 100, "gamma": 0.6, "fit_result": "f.json"}')
        rc = main(["analyze", "--scenario", str(scn), "--out", str(tmp_path)])
        assert rc == 2
        assert "twice" in capsys.readouterr().err

    def test_missing_scenario_file(self, tmp_path):
        rc = main(["analyze", "--scenario", str(tmp_path / "nope.json")])
        assert rc == 3

    def test_invalid_json(self, tmp_path):
        scn = tmp_path / "s.json"
        scn.write_text("{not json")
        assert main(["analyze", "--scenario", str(scn)]) == 2

    def test_wrong_type_rejected(self, tmp_path, capsys):
        scn = tmp_path / "s.json"
        scn.write_text('{"n": "100", "gamma": 0.6, "q": 1.0, "m": 50, "cluster_counts": [4]}')
        rc = main(["analyze", "--scenario", str(scn)])
        assert rc == 2
        assert "'n'" in capsys.readouterr().err

    def test_fit_result_pointer(self, tmp_path):
        """A scenario may reference a FitResult file instead of inline gamma/q/m."""
        (tmp_path / "fr.json").write_text(
            json.dumps({"gamma": 0.6, "q": 20.0, "m": 1000, "kl": 0.0})
        )
        scn = scenario_file(tmp_path / "s.json", n=10000, k=4,
                            fit_result="fr.json", n_clusters=100)
        rc = main(["policy", "--scenario", scn, "--out", str(tmp_path / "o")])
        assert rc == 0
        con = json.loads((tmp_path / "o" / "policy_constants.json").read_text())
        pol = waterfill(MZipfDist(0.6, 20.0, 1000), 1, 100)
        assert con["m_star"] == pol.m_star

    def test_fit_result_missing_field(self, tmp_path, capsys):
        (tmp_path / "fr.json").write_text('{"gamma": 0.6, "q": 20.0}')
        scn = scenario_file(tmp_path / "s.json", n=10000, fit_result="fr.json",
                            n_clusters=100)
        rc = main(["policy", "--scenario", scn, "--out", str(tmp_path)])
        assert rc == 2
        assert "'m'" in capsys.readouterr().err

    def test_bad_cluster_counts(self, tmp_path):
        scn = tmp_path / "s.json"
        scn.write_text('{"n": 100, "gamma": 0.6, "q": 1.0, "m": 50, "cluster_counts": []}')
        assert main(["analyze", "--scenario", str(scn)]) == 2
