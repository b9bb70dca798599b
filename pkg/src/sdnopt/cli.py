"""Command-line entry point.

Verbs: simulate, sweep, ac-compare, policy-compare, monitor-eval, validate.
Every verb takes ``-c CONFIG`` (a file path or ``bundled:<name>``), ``-o DIR``
(default: ``$SDNOPT_OUT`` or ``./out``), ``-q`` and trailing ``key=value``
overrides applied after the file, last one wins.

Exit codes: 0 success, 2 usage, 3 configuration, 4 I/O, 5 invariant violation.

Output files (all CSV with a header row, floats with 9 significant digits):

* simulate: ``summary.csv``, ``decisions.csv`` and, when relevant,
  ``policy.csv`` (slot,deployed_cost,candidate_cost,lp_bound,Q,reconfigured,entry_changes),
  ``monitor.csv``, ``overload.csv``, ``experts.csv`` plus ``config.cfg``.
* sweep: ``summary.csv`` with one row per (value, seed).
* ac-compare: ``ac_runs.csv`` (algorithm,seed,accepted_throughput,rejection_fraction)
  and ``ac_summary.csv`` (algorithm,runs,mean_throughput,std_throughput,
  mean_rejection,std_rejection).
* policy-compare: ``policy_<name>_seed<s>.csv`` (slot,cost,lp_bound,reconfigured,entry_changes),
  ``policy_runs.csv`` (policy,seed,mean_gap,reconfig_rate,final_Q,reconfig_count)
  and ``policy_summary.csv`` (policy,mean_gap,reconfig_rate).
* monitor-eval: ``monitor_errors.csv`` (xi,seed,method,scope,error) and
  ``monitor_integration.csv`` (xi,seed,mode,rejected_fraction,overload_volume).
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np

from . import config as cfgmod
from .config import ConfigError, RunConfig
from .engine import InvariantViolation, _topology, build_events, run, summary_csv, sweep, to_csv
from .monitoring import CompletionParams, completion_error, make_mask, naive_complete, svt_complete
from .traffic import generate_best_effort

VERBS = ("simulate", "sweep", "ac-compare", "policy-compare", "monitor-eval", "validate")
EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_IO, EXIT_INVARIANT = 0, 2, 3, 4, 5
ENV_OUT = "SDNOPT_OUT"


@dataclass
class Command:
    verb: str
    config_path: str | None = None
    output_dir: str = "out"
    overrides: list = field(default_factory=list)
    quiet: bool = False


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}\nverbs: {', '.join(VERBS)}")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sdnopt", description="SDN control-plane optimisation simulator")
    sub = p.add_subparsers(dest="verb", metavar="VERB", parser_class=_Parser)
    for verb in VERBS:
        sp = sub.add_parser(verb)
        sp.add_argument("-c", "--config", dest="config_path", default=None)
        sp.add_argument("-o", "--output", dest="output_dir", default=None)
        sp.add_argument("-q", "--quiet", action="store_true")
        sp.add_argument("overrides", nargs="*", metavar="KEY=VALUE")
    return p


def parse_args(argv) -> Command:
    """Parse argv into a :class:`Command`; raises :class:`UsageError` or :class:`ConfigError`."""
    ns = _build_parser().parse_args(list(argv))
    if ns.verb is None:
        raise UsageError(f"missing verb; valid verbs: {', '.join(VERBS)}")
    for ov in ns.overrides:
        key = ov.split("=", 1)[0].strip()
        if "=" not in ov or key not in cfgmod.REGISTRY:
            raise ConfigError(f"unknown override {ov!r}; valid keys: {', '.join(cfgmod.REGISTRY)}")
    out = ns.output_dir or os.environ.get(ENV_OUT) or "out"
    return Command(ns.verb, ns.config_path, out, list(ns.overrides), ns.quiet)


def bundled_configs() -> list:
    root = resources.files("sdnopt.data") / "configs"
    return sorted(p.name[:-4] for p in root.iterdir() if p.name.endswith(".cfg"))


def read_config_text(path: str) -> str:
    if path.startswith("bundled:"):
        name = path.split(":", 1)[1]
        res = resources.files("sdnopt.data") / "configs" / f"{name}.cfg"
        if not res.is_file():
            raise ConfigError(f"no bundled config {name!r}; available: {', '.join(bundled_configs())}")
        return res.read_text()
    return Path(path).read_text()


def load_config(cmd: Command) -> RunConfig:
    cfg = RunConfig()
    if cmd.config_path:
        cfg = cfgmod.parse_text(read_config_text(cmd.config_path), cfg, source=cmd.config_path)
    cfg = cfgmod.apply_overrides(cfg, cmd.overrides).validate()
    _topology(cfg)  # surface topology errors before any run starts
    return cfg


def _log(cmd: Command, msg: str):
    if not cmd.quiet:
        print(msg, file=sys.stderr)


def _seeds(cfg: RunConfig) -> list:
    return [cfg.seed + i for i in range(cfg.seeds)]


def _check_errors(results):
    for r in results:
        if r.error:
            if r.error.startswith("InvariantViolation"):
                raise InvariantViolation(f"{r.label} seed {r.seed}: {r.error}")
            if r.error.startswith(("ConfigError", "TopologyError")):
                raise ConfigError(f"{r.label} seed {r.seed}: {r.error}")
            if r.error.startswith(_IO_ERRORS):
                raise OSError(f"{r.label} seed {r.seed}: {r.error}")
            raise RuntimeError(f"{r.label} seed {r.seed}: {r.error}")


_IO_ERRORS = ("OSError", "FileNotFoundError", "PermissionError", "IsADirectoryError", "NotADirectoryError")


def _write(outdir: Path, name: str, text: str) -> Path:
    outdir.mkdir(parents=True, exist_ok=True)
    p = outdir / name
    p.write_text(text)
    return p


# ---------------------------------------------------------------------------
# Verbs
# ---------------------------------------------------------------------------

def simulate(cmd: Command, cfg: RunConfig) -> list:
    m = run(cfg)
    out = Path(cmd.output_dir)
    paths = m.write(out)
    paths.append(_write(out, "config.cfg", cfgmod.dump(cfg)))
    _log(cmd, f"simulate: {m.accepted_count}/{m.arrivals} accepted, "
              f"{m.reconfig_count} reconfigurations -> {out}")
    return paths


def sweep_verb(cmd: Command, cfg: RunConfig) -> list:
    if not cfg.sweep_key:
        raise ConfigError("sweep needs sweep.key and sweep.values")
    if cfg.sweep_key not in cfgmod.REGISTRY:
        raise ConfigError(f"unknown sweep.key {cfg.sweep_key!r}")
    configs, labels = [], []
    for value in cfg.sweep_values:
        c = cfg.set(cfg.sweep_key, value).validate()
        for s in _seeds(cfg):
            configs.append(c.with_(seed=s))
            labels.append(f"{cfg.sweep_key}={value}")
    results = sweep(configs, cfg.parallelism, labels)
    _check_errors(results)
    out = Path(cmd.output_dir)
    _log(cmd, f"sweep: {len(results)} runs -> {out}")
    return [_write(out, "summary.csv", summary_csv(results))]


def _ac_config(cfg: RunConfig, name: str) -> RunConfig:
    if name in ("fla", "sea"):
        base = tuple(a for a in cfg.algorithms if a not in ("fla", "sea"))
        if not base:
            raise ConfigError("meta-algorithms need at least one admission algorithm in compare.algorithms")
        return cfg.with_(roster=base + (name,), meta=name, trace=False)
    return cfg.with_(algorithm=name, roster=(), trace=False)


def ac_compare(cmd: Command, cfg: RunConfig) -> list:
    if not cfg.algorithms:
        raise ConfigError("compare.algorithms is empty")
    configs, labels = [], []
    for name in cfg.algorithms:
        c = _ac_config(cfg, name).validate()
        for s in _seeds(cfg):
            configs.append(c.with_(seed=s))
            labels.append(name)
    results = sweep(configs, cfg.parallelism, labels)
    _check_errors(results)
    rows = [(r.label, r.seed, r.accepted_throughput, r.rejection_fraction) for r in results]
    summary = []
    for name in cfg.algorithms:
        thr = np.array([r.accepted_throughput for r in results if r.label == name])
        rej = np.array([r.rejection_fraction for r in results if r.label == name])
        summary.append((name, len(thr), thr.mean(), thr.std(), rej.mean(), rej.std()))
    out = Path(cmd.output_dir)
    _log(cmd, "ac-compare: " + ", ".join(f"{s[0]}={s[2]:.6g}" for s in summary))
    return [
        _write(out, "ac_runs.csv", to_csv(["algorithm", "seed", "accepted_throughput", "rejection_fraction"], rows)),
        _write(out, "ac_summary.csv", to_csv(["algorithm", "runs", "mean_throughput", "std_throughput",
                                              "mean_rejection", "std_rejection"], summary)),
    ]


def policy_compare(cmd: Command, cfg: RunConfig) -> list:
    if not cfg.policies:
        raise ConfigError("compare.policies is empty")
    configs, labels = [], []
    for p in cfg.policies:
        for s in _seeds(cfg):
            configs.append(cfg.with_(policy=p, seed=s, trace=False).validate())
            labels.append(p)
    results = sweep(configs, cfg.parallelism, labels)
    _check_errors(results)
    out = Path(cmd.output_dir)
    paths = []
    runs = []
    for r in results:
        series = [(row[0], row[1], row[3], row[5], row[6]) for row in r.policy_rows]
        paths.append(_write(out, f"policy_{r.label}_seed{r.seed}.csv",
                            to_csv(["slot", "cost", "lp_bound", "reconfigured", "entry_changes"], series)))
        runs.append((r.label, r.seed, r.mean_gap, r.reconfig_rate, r.final_Q, r.reconfig_count))
    summary = []
    for p in cfg.policies:
        mine = [x for x in runs if x[0] == p]
        summary.append((p, float(np.mean([x[2] for x in mine])), float(np.mean([x[3] for x in mine]))))
    paths.append(_write(out, "policy_runs.csv", to_csv(
        ["policy", "seed", "mean_gap", "reconfig_rate", "final_Q", "reconfig_count"], runs)))
    paths.append(_write(out, "policy_summary.csv", to_csv(["policy", "mean_gap", "reconfig_rate"], summary)))
    _log(cmd, "policy-compare: " + ", ".join(f"{p}: gap {g:.6g} rate {r:.4g}" for p, g, r in summary))
    return paths


def completion_rows(cfg: RunConfig, L: int, xi_list, seeds) -> list:
    """``xi,seed,method,scope,error`` rows for SVT and forward-fill on synthetic best-effort."""
    T = max(cfg.horizon // cfg.epoch_len, 1)
    params = CompletionParams(cfg.tau, cfg.delta, cfg.max_iters, cfg.tol)
    rows = []
    for xi in xi_list:
        for s in seeds:
            truth = generate_best_effort(L, T, cfg.be_rank, cfg.be_amplitude, cfg.be_noise, s,
                                         period=cfg.be_period)
            mask = make_mask(L, T, xi, s)
            est = {"svt": svt_complete(truth, mask, params).values, "naive": naive_complete(truth, mask)}
            for method in ("svt", "naive"):
                for scope in ("all", "unobserved"):
                    rows.append((xi, s, method, scope, completion_error(est[method], truth, mask, scope)))
    return rows


def monitor_eval(cmd: Command, cfg: RunConfig) -> list:
    if not cfg.xi_list:
        raise ConfigError("compare.xi_list is empty")
    for xi in cfg.xi_list:
        if not 0 < xi <= 1:
            raise ConfigError(f"xi {xi} outside (0, 1]")
    topo = _topology(cfg)
    seeds = _seeds(cfg)
    out = Path(cmd.output_dir)
    rows = completion_rows(cfg, topo.num_links, cfg.xi_list, seeds)
    paths = [_write(out, "monitor_errors.csv", to_csv(["xi", "seed", "method", "scope", "error"], rows))]
    if cfg.modes:
        configs, labels = [], []
        for xi in cfg.xi_list:
            for mode in cfg.modes:
                for s in seeds:
                    configs.append(cfg.with_(xi=xi, monitor_mode=mode, seed=s, trace=False).validate())
                    labels.append(mode)
        results = sweep(configs, cfg.parallelism, labels)
        _check_errors(results)
        integ = [(c.xi, r.seed, r.label, r.rejection_fraction, r.overload_volume)
                 for c, r in zip(configs, results)]
        paths.append(_write(out, "monitor_integration.csv", to_csv(
            ["xi", "seed", "mode", "rejected_fraction", "overload_volume"], integ)))
    _log(cmd, f"monitor-eval: {len(rows)} error rows -> {out}")
    return paths


def validate(cmd: Command, cfg: RunConfig) -> list:
    topo = _topology(cfg)
    events = build_events(cfg, topo)
    _log(cmd, f"valid: topology {topo.name or cfg.topology} ({topo.n} nodes, {topo.num_links} links), "
              f"{sum(1 for e in events if e.kind == 'arrival')} arrivals")
    return []


HANDLERS = {
    "simulate": simulate,
    "sweep": sweep_verb,
    "ac-compare": ac_compare,
    "policy-compare": policy_compare,
    "monitor-eval": monitor_eval,
    "validate": validate,
}


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else argv
    try:
        cmd = parse_args(argv)
    except UsageError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_USAGE
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = load_config(cmd)
        HANDLERS[cmd.verb](cmd, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
