import csv
import io

import pytest

from sdnopt.cli import (
    EXIT_CONFIG,
    EXIT_INVARIANT,
    EXIT_IO,
    EXIT_OK,
    EXIT_USAGE,
    bundled_configs,
    main,
    parse_args,
)
from sdnopt.config import ConfigError
from sdnopt.traffic import Demand, dump_script, events_from_demands

FAST = ["run.horizon=200", "run.trace=false", "-q"]


def _rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def test_bundled_configs_present():
    assert {"default", "policy", "overload", "trap", "monitoring"} <= set(bundled_configs())
    for name in bundled_configs():
        assert main(["validate", "-q", "-c", f"bundled:{name}"]) == EXIT_OK


def test_usage_errors():
    assert main([]) == EXIT_USAGE
    assert main(["frobnicate"]) == EXIT_USAGE
    assert main(["simulate", "--bogus"]) == EXIT_USAGE


def test_unknown_override_is_config_error(capsys):
    assert main(["simulate", "-q", "routing.nope=1"]) == EXIT_CONFIG
    assert "routing.nope" in capsys.readouterr().err
    with pytest.raises(ConfigError):
        parse_args(["simulate", "bad"])


def test_config_errors(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text("run.seed = 1\nadmission.algorithm = clairvoyant\n")
    assert main(["validate", "-q", "-c", str(bad)]) == EXIT_CONFIG
    assert main(["validate", "-q", "-c", "bundled:nope"]) == EXIT_CONFIG
    topo = tmp_path / "broken.topo"
    topo.write_text("node 0\nlink 0 1 1 1\n")
    assert main(["validate", "-q", f"topology.path={topo}"]) == EXIT_CONFIG


def test_io_errors(tmp_path):
    assert main(["validate", "-q", "-c", str(tmp_path / "missing.cfg")]) == EXIT_IO
    assert main(["validate", "-q", f"topology.path={tmp_path / 'missing.topo'}"]) == EXIT_IO
    assert main(["validate", "-q", "scenario.mode=adversarial-script",
                 f"scenario.script={tmp_path / 'missing.csv'}"]) == EXIT_IO


def test_invariant_violation_exit_code(tmp_path, monkeypatch):
    import sdnopt.admission as ac

    def reckless(self, demand, topo, view, load):
        path = self.candidates(demand.src, demand.dst)[0]
        return ac.AdmissionDecision(True, path, self.name, 0.0)

    monkeypatch.setattr(ac.Greedy, "decide", reckless)
    demands = [Demand(i, 0, 1, 60.0, 0, 10) for i in range(3)]
    script = tmp_path / "flood.csv"
    script.write_text(dump_script(events_from_demands(demands)))
    code = main(["simulate", "-q", "-o", str(tmp_path / "o"), "scenario.mode=adversarial-script",
                 f"scenario.script={script}", "run.horizon=20"])
    assert code == EXIT_INVARIANT


def test_simulate_writes_outputs_and_reusable_config(tmp_path):
    out = tmp_path / "sim"
    assert main(["simulate", "-o", str(out), "routing.policy=dp", "routing.lp_every=10"] + FAST) == EXIT_OK
    names = {p.name for p in out.iterdir()}
    assert {"summary.csv", "decisions.csv", "policy.csv", "config.cfg"} <= names
    again = tmp_path / "again"
    assert main(["simulate", "-q", "-c", str(out / "config.cfg"), "-o", str(again)]) == EXIT_OK
    assert (again / "summary.csv").read_text() == (out / "summary.csv").read_text()


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("SDNOPT_OUT", str(tmp_path / "env"))
    assert parse_args(["simulate"]).output_dir == str(tmp_path / "env")
    assert parse_args(["simulate", "-o", "x"]).output_dir == "x"
    assert main(["simulate"] + FAST) == EXIT_OK
    assert (tmp_path / "env" / "summary.csv").exists()


def test_sweep_verb(tmp_path):
    out = tmp_path / "sw"
    assert main(["sweep", "-o", str(out), "sweep.key=scenario.arrival_rate", "sweep.values=0.001,0.01",
                 "run.seeds=2"] + FAST) == EXIT_OK
    rows = _rows(out / "summary.csv")
    assert len(rows) == 4
    assert [r["seed"] for r in rows] == ["0", "1", "0", "1"]


def test_ac_compare_on_trap(tmp_path):
    out = tmp_path / "ac"
    assert main(["ac-compare", "-q", "-c", "bundled:trap", "-o", str(out)]) == EXIT_OK
    summary = {r["algorithm"]: float(r["mean_throughput"]) for r in _rows(out / "ac_summary.csv")}
    assert summary["primal_dual"] > summary["greedy"]


def test_policy_compare(tmp_path):
    out = tmp_path / "pc"
    assert main(["policy-compare", "-o", str(out), "compare.policies=dp,pp", "routing.lp_every=10",
                 "scenario.arrival_rate=0.003"] + FAST) == EXIT_OK
    assert (out / "policy_dp_seed0.csv").exists() and (out / "policy_pp_seed0.csv").exists()
    header = (out / "policy_dp_seed0.csv").read_text().splitlines()[0]
    assert header == "slot,cost,lp_bound,reconfigured,entry_changes"
    assert {r["policy"] for r in _rows(out / "policy_summary.csv")} == {"dp", "pp"}


def test_monitor_eval(tmp_path):
    out = tmp_path / "me"
    assert main(["monitor-eval", "-o", str(out), "compare.xi_list=0.5", "compare.modes=full-info,no-info",
                 "monitoring.epoch_len=5"] + FAST) == EXIT_OK
    errs = _rows(out / "monitor_errors.csv")
    assert {(r["method"], r["scope"]) for r in errs} == {("svt", "all"), ("svt", "unobserved"),
                                                          ("naive", "all"), ("naive", "unobserved")}
    integ = _rows(out / "monitor_integration.csv")
    assert [r["mode"] for r in integ] == ["full-info", "no-info"]
