import csv
import io
import json

import pytest

from sklandscape.cli import ConfigError, main, parse_grid
from sklandscape.ensemble import enumeration_crosscheck, random_spins, replica_seed, simulate
from sklandscape.model import greedy_descent, is_local_min, sample_instance


def run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestGrammar:
    def test_range_includes_stop(self):
        assert parse_grid("0.3:0.7:0.1") == [0.3, 0.4, 0.5, 0.6, 0.7]

    def test_int_range(self):
        assert parse_grid("2:10:4", int) == [2, 6, 10]

    def test_list(self):
        assert parse_grid("16,64,256", int) == [16, 64, 256]

    @pytest.mark.parametrize("bad", ["1:2", "1:0:0.1", "a,b", "1:2:0"])
    def test_rejects(self, bad):
        with pytest.raises(ConfigError):
            parse_grid(bad)


class TestSubcommands:
    def test_constants(self, capsys):
        code, out, _ = run(capsys, "constants")
        d = json.loads(out)
        assert code == 0
        assert d["half_v_star"] == pytest.approx(0.506, abs=1e-3)
        assert d["alpha_star"] == pytest.approx(0.199, abs=1e-3)
        assert d["exponent"] < 0 and d["bracket_holds"]

    def test_rate_table_columns(self, capsys):
        code, out, _ = run(capsys, "rate-table", "--x-grid", "0.9,1.0121089379783617,2")
        r = rows(out)
        assert code == 0
        assert list(r[0]) == ["x", "lambda_star", "mu_star", "R", "theta_ratio"]
        assert r[1]["theta_ratio"] == ""
        assert len(r[0]["R"].replace("-", "").replace(".", "").lstrip("0")) >= 15

    def test_exponent(self, capsys):
        code, out, _ = run(capsys, "exponent", "--n-list", "16,64,256,1024")
        r = rows(out)
        assert code == 0 and list(r[0]) == ["n", "log_count_over_n", "residual"]
        assert [int(x["n"]) for x in r] == [16, 64, 256, 1024]

    def test_prob_json(self, capsys):
        code, out, _ = run(capsys, "prob", "--n", "3")
        d = json.loads(out)
        assert code == 0 and d["method"] == "orthant-quadrature"
        assert d["value"] == pytest.approx(0.25, abs=1e-12)
        assert {"n", "error", "meta"} <= set(d)

    def test_tail_json(self, capsys):
        code, out, _ = run(capsys, "tail", "--n", "8", "--x", "1.2")
        d = json.loads(out)
        assert code == 0 and d["r_n"] >= 0 and "log_value" in d

    def test_conditional_monotone(self, capsys):
        code, out, _ = run(capsys, "conditional", "--n", "1024", "--delta-grid", "0.3:0.7:0.01")
        vals = [float(x["value"]) for x in rows(out)]
        assert code == 0 and len(vals) == 41
        assert all(a >= b for a, b in zip(vals, vals[1:]))

    def test_conditional_mean(self, capsys):
        code, out, _ = run(capsys, "conditional", "--n", "64", "--mean")
        assert code == 0 and 0.4 < json.loads(out)["value"] < 0.55

    def test_simulate_columns(self, capsys):
        code, out, _ = run(capsys, "simulate", "--n", "20", "--replicas", "3", "--seed", "7")
        r = rows(out)
        assert code == 0
        assert list(r[0]) == ["seed", "replica", "rule", "flips", "final_energy", "normalized_energy"]
        assert [int(x["replica"]) for x in r] == [0, 1, 2]

    def test_enumerate_rows(self, capsys):
        code, out, err = run(capsys, "enumerate", "--n", "6", "--instances", "4", "--seed", "1")
        r = rows(out)
        assert code == 0 and list(r[0]) == ["seed", "count", "normalized_energy"]
        by_seed = {}
        for x in r:
            by_seed.setdefault(x["seed"], []).append(int(x["count"]))
        assert len(by_seed) == 4
        assert all(len(v) == v[0] for v in by_seed.values())
        assert "mean count" in err


class TestExitCodes:
    def test_config_error(self, capsys):
        assert run(capsys, "prob", "--n", "1")[0] == 2

    def test_unknown_flag(self, capsys):
        assert run(capsys, "prob", "--bogus")[0] == 2

    def test_missing_n(self, capsys):
        assert run(capsys, "prob")[0] == 2

    def test_bad_seed(self, capsys):
        assert run(capsys, "constants", "--seed", "-3")[0] == 2

    def test_conflicting_flags(self, capsys):
        assert run(capsys, "conditional", "--n", "10", "--mean", "--delta", "0.1")[0] == 2

    def test_resource_guard(self, capsys):
        assert run(capsys, "enumerate", "--n", "27", "--instances", "1")[0] == 4

    def test_io_error(self, capsys, tmp_path):
        code, _, err = run(capsys, "constants", "--output", str(tmp_path / "missing" / "x.json"))
        assert code == 2 and "missing" in err


class TestManifest:
    def test_written(self, capsys, tmp_path):
        out = tmp_path / "c.json"
        assert run(capsys, "constants", "--output", str(out), "--seed", "5")[0] == 0
        m = json.loads((tmp_path / "c.json.manifest.json").read_text())
        assert m["seed"] == 5 and m["config"]["command"] == "constants"
        assert m["version"].startswith("v") and "wall_time_s" in m and "timestamp" in m

    def test_no_timestamp(self, capsys, tmp_path):
        out = tmp_path / "c.json"
        run(capsys, "constants", "--output", str(out), "--no-timestamp")
        m = json.loads((tmp_path / "c.json.manifest.json").read_text())
        assert "timestamp" not in m and "wall_time_s" not in m


class TestDeterminism:
    @pytest.mark.parametrize("argv", [
        ["simulate", "--n", "60", "--replicas", "40", "--rule", "random-improvement", "--seed", "7"],
        ["enumerate", "--n", "8", "--instances", "20", "--seed", "3"],
        ["prob", "--n", "7", "--method", "mc", "--samples", "40000", "--seed", "11"],
    ])
    def test_threads_and_repeats(self, capsys, tmp_path, argv):
        blobs = []
        for k, threads in enumerate(["1", "8", "1", "8"]):
            out = tmp_path / f"o{k}"
            assert main(argv + ["--threads", threads, "--output", str(out), "--no-timestamp"]) == 0
            blobs.append(out.read_bytes())
        capsys.readouterr()
        assert all(b == blobs[0] for b in blobs)

    def test_simulate_twice(self):
        a = simulate(200, 50, "steepest", 7)
        assert a == simulate(200, 50, "steepest", 7)


class TestEnsemble:
    def test_replica_seeds_distinct(self):
        assert len({replica_seed(1, r) for r in range(1000)}) == 1000

    def test_simulate_endpoints_are_minima(self):
        for r in simulate(30, 5, "first-improvement", 2):
            assert r["flips"] >= 0
            assert r["normalized_energy"] == pytest.approx(r["final_energy"] / 30 ** 1.5)

    def test_crosscheck_small(self):
        c = enumeration_crosscheck(8, 60, seed=4)
        assert c.descent_in_set == c.descent_runs
        assert c.instances == 60

    def test_instance_rebuilds_from_row(self):
        r = simulate(10, 1, "steepest", 9)[0]
        inst = sample_instance(10, r["seed"])
        tr = greedy_descent(inst, random_spins(9, 0, 10), "steepest")
        assert tr.energies[-1] == r["final_energy"]
        assert is_local_min(inst, tr.final)


class TestSelfcheck:
    def test_quick(self, capsys, tmp_path):
        out = tmp_path / "report.json"
        code = main(["selfcheck", "--level", "quick", "--output", str(out), "--no-timestamp"])
        report = json.loads(out.read_text())
        capsys.readouterr()
        assert code == 0 and report["passed"]
        assert all(c["passed"] for c in report["checks"])
        assert not any(c["name"].endswith("enumeration_n12") for c in report["checks"])
