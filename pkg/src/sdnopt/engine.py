"""Slot-driven simulation loop and multi-run sweeps.

Within a slot the order is fixed: departures, monitoring epoch boundary,
arrivals with admission, solver refresh (when the active demand set changed),
deployment policy step.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import admission as ac
from .config import ConfigError, RunConfig
from .experts import TRACE_HEADER, ExpertSelector
from .monitoring import CompletionParams, OnlineCompleter, mask_column, residual_feed
from .netmodel import TOL, TopologyError, dump_topology, k_shortest_paths, path_fits, read_topology, residual
from .routing import (
    NetworkConfiguration,
    PolicyState,
    PoolCache,
    config_distance,
    dp_policy_step,
    mcf_lp_optimal,
    period_for,
    periodic_policy_step,
    solve_to_fixed_point,
)
from .traffic import (
    ARRIVAL,
    ScenarioParams,
    adversarial_greedy_trap,
    expected_active_flows,
    generate_best_effort,
    events_from_demands,
    generate_events,
    load_script,
)


class InvariantViolation(RuntimeError):
    pass


META = ("fla", "sea")

POLICY_HEADER = ["slot", "deployed_cost", "candidate_cost", "lp_bound", "Q", "reconfigured", "entry_changes"]
DECISION_HEADER = ["time", "demand_id", "algorithm", "accepted", "path", "price_or_length"]
OVERLOAD_HEADER = ["slot", "overload_volume", "events"]
MONITOR_HEADER = ["epoch", "slot", "error_all", "error_unobserved", "converged"]
SUMMARY_FIELDS = [
    "label", "seed", "arrivals", "accepted_count", "rejected_count", "accepted_throughput",
    "accepted_profit", "rejection_fraction", "overload_volume", "overload_events",
    "reconfig_count", "reconfig_rate", "final_Q", "mean_cost", "mean_gap",
    "mean_monitor_error", "unconverged_epochs", "expert_shares", "error",
]


def fmt(v) -> str:
    """Serialise one CSV field; floats get 9 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.9g}"
    if isinstance(v, (tuple, list)):
        return " ".join(fmt(x) for x in v)
    return str(v)


def to_csv(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


@dataclass
class Metrics:
    label: str = ""
    seed: int = 0
    horizon: int = 0
    arrivals: int = 0
    accepted_count: int = 0
    rejected_count: int = 0
    accepted_throughput: float = 0.0
    accepted_profit: float = 0.0
    overload_volume: float = 0.0
    overload_events: int = 0
    reconfig_count: int = 0
    final_Q: float = 0.0
    unconverged_epochs: int = 0
    expert_names: tuple = ()
    expert_shares: tuple = ()
    policy_rows: list = field(default_factory=list)
    decision_rows: list = field(default_factory=list)
    monitor_rows: list = field(default_factory=list)
    expert_rows: list = field(default_factory=list)
    overload_rows: list = field(default_factory=list)
    error: str = ""

    @property
    def rejection_fraction(self) -> float:
        return self.rejected_count / self.arrivals if self.arrivals else 0.0

    @property
    def reconfig_rate(self) -> float:
        return self.reconfig_count / self.horizon if self.horizon else 0.0

    @property
    def mean_cost(self) -> float:
        if not self.policy_rows:
            return float("nan")
        return float(np.mean([r[1] for r in self.policy_rows]))

    @property
    def mean_gap(self) -> float:
        gaps = [r[1] - r[3] for r in self.policy_rows if not math.isnan(r[3])]
        return float(np.mean(gaps)) if gaps else float("nan")

    @property
    def mean_monitor_error(self) -> float:
        errs = [r[3] for r in self.monitor_rows if not math.isnan(r[3])]
        return float(np.mean(errs)) if errs else float("nan")

    def summary_row(self) -> list:
        shares = ";".join(f"{n}:{s:.9g}" for n, s in zip(self.expert_names, self.expert_shares))
        return [self.label, self.seed, self.arrivals, self.accepted_count, self.rejected_count,
                self.accepted_throughput, self.accepted_profit, self.rejection_fraction,
                self.overload_volume, self.overload_events, self.reconfig_count,
                self.reconfig_rate, self.final_Q, self.mean_cost, self.mean_gap,
                self.mean_monitor_error, self.unconverged_epochs, shares, self.error]

    def files(self) -> dict:
        """CSV documents of this run keyed by file name."""
        out = {"summary.csv": to_csv(SUMMARY_FIELDS, [self.summary_row()]),
               "decisions.csv": to_csv(DECISION_HEADER, self.decision_rows)}
        if self.policy_rows:
            out["policy.csv"] = to_csv(POLICY_HEADER, self.policy_rows)
        if self.monitor_rows:
            out["monitor.csv"] = to_csv(MONITOR_HEADER, self.monitor_rows)
        if self.overload_rows:
            out["overload.csv"] = to_csv(OVERLOAD_HEADER, self.overload_rows)
        if self.expert_rows:
            out["experts.csv"] = to_csv(TRACE_HEADER, self.expert_rows)
        return out

    def write(self, outdir) -> list:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.files().items():
            p = outdir / name
            p.write_text(text)
            written.append(p)
        return written


# ---------------------------------------------------------------------------
# Resolution of config names to objects
# ---------------------------------------------------------------------------

# Per-process caches. Path search is deterministic, so sharing results
# between runs of the same topology changes nothing but the running time.
_CANDIDATES: dict = {}
_POOLS: dict = {}


def _topology(cfg: RunConfig):
    """Read the configured topology; unreadable files raise ``OSError``."""
    try:
        return read_topology(cfg.topology)
    except TopologyError as exc:
        raise ConfigError(f"topology {cfg.topology!r}: {exc}") from exc


def _shared(cache: dict, factory, topo, k: int):
    key = (dump_topology(topo), k)
    if key not in cache:
        cache[key] = factory(topo, k)
    return cache[key]


def build_events(cfg: RunConfig, topo) -> list:
    if cfg.scenario_mode == "trap":
        try:
            return adversarial_greedy_trap(topo, cfg.trap_units, holding=max(cfg.horizon, 1)).events
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    if cfg.scenario_mode == "adversarial-script":
        text = Path(cfg.script).read_text()
        try:
            return events_from_demands(load_script(text))
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"script {cfg.script!r}: {exc}") from exc
    return generate_events(scenario_params(cfg), topo)


def scenario_params(cfg: RunConfig) -> ScenarioParams:
    try:
        return ScenarioParams(horizon=cfg.horizon, arrival_rate=cfg.arrival_rate,
                              mean_holding=cfg.mean_holding, bw_choices=tuple(cfg.bw_choices),
                              bw_probs=tuple(cfg.bw_probs), pairs=cfg.pairs, seed=cfg.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _expected_flows(cfg: RunConfig, topo, demands) -> np.ndarray:
    if cfg.scenario_mode == "iid":
        return expected_active_flows(scenario_params(cfg), topo)
    # scripted input: time-averaged number of requests routed over each link
    flows = np.zeros(topo.num_links)
    if not demands:
        return flows
    span = max(d.departure for d in demands) - min(d.arrival for d in demands)
    for d in demands:
        paths = k_shortest_paths(topo, d.src, d.dst, 1)
        if paths:
            flows[list(paths[0])] += d.holding
    return flows / max(span, 1)


def admission_params(cfg: RunConfig) -> ac.AdmissionParams:
    return ac.AdmissionParams(k_paths=cfg.k_paths, mu=cfg.mu, theta=cfg.theta,
                              theta_util=cfg.theta_util, gamma=cfg.gamma,
                              rho_target=cfg.rho_target, price_floor=cfg.price_floor,
                              price_init=cfg.price_init)


def _deciders(cfg: RunConfig, topo, demands):
    names = [n for n in cfg.roster if n not in META] or [cfg.algorithm]
    params = admission_params(cfg)
    candidates = _shared(_CANDIDATES, ac.CandidateCache, topo, cfg.k_paths)
    b_max = max((d.bw for d in demands), default=1.0)
    flows = _expected_flows(cfg, topo, demands) if "agrawal" in names else None
    try:
        return [ac.make_decider(n, topo, params, candidates, b_max=b_max, expected_flows=flows)
                for n in names]
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


# ---------------------------------------------------------------------------
# The loop
# ---------------------------------------------------------------------------

def run(cfg: RunConfig, label: str = "") -> Metrics:
    cfg.validate()
    topo = _topology(cfg)
    events = build_events(cfg, topo)
    demands = [e.demand for e in events if e.kind == ARRIVAL]
    deciders = _deciders(cfg, topo, demands)
    T = cfg.horizon
    L = topo.num_links
    cap = topo.capacities
    m = Metrics(label=label or cfg.algorithm, seed=cfg.seed, horizon=T)

    selector = None
    if len(deciders) > 1 or any(n in META for n in cfg.roster):
        meta = next((n for n in cfg.roster if n in META), cfg.meta)
        selector = ExpertSelector([d.name for d in deciders], mode=meta, window=cfg.window,
                                  c=cfg.explore_c, rho=cfg.phase_rho, unit=cfg.phase_unit,
                                  seed=cfg.seed)
        m.label = label or meta

    by_slot: dict = {}
    for ev in events:
        if ev.time < T:
            by_slot.setdefault(ev.time, []).append(ev)

    # monitoring state
    monitored = cfg.monitor_mode != "off"
    if monitored:
        n_epochs = -(-T // cfg.epoch_len) if T else 0
        be_truth = generate_best_effort(topo, max(n_epochs, 1), cfg.be_rank, cfg.be_amplitude,
                                        cfg.be_noise, cfg.seed, period=cfg.be_period)
        mask_rng = np.random.default_rng([cfg.seed, 0x3A5C])
        completer = OnlineCompleter(L, cfg.xi, CompletionParams(cfg.tau, cfg.delta, cfg.max_iters, cfg.tol),
                                    window=cfg.mc_window)
        warmup = cfg.mc_warmup if cfg.mc_warmup is not None else cfg.mc_window
    be_true = np.zeros(L)
    be_est = np.zeros(L)

    deployed = NetworkConfiguration.empty(topo)
    candidate = deployed
    demand_of = {}
    policy = cfg.policy
    track_policy = policy != "none"
    pools = _shared(_POOLS, PoolCache, topo, cfg.pool_k) if policy in ("dp", "pp") else None
    period = cfg.period if cfg.period is not None else period_for(cfg.alpha)
    pstate = PolicyState(V=cfg.V, alpha=cfg.alpha)
    lp_bound = float("nan")
    dirty = False
    lp_stale = True

    for slot in range(T):
        todo = by_slot.get(slot, ())
        # (1) departures
        for ev in todo:
            if ev.kind != ARRIVAL and ev.demand.id in deployed.assignment:
                deployed = deployed.without(topo, ev.demand.id)
                dirty = True
        # (2) monitoring epoch boundary
        if monitored and slot % cfg.epoch_len == 0:
            epoch = slot // cfg.epoch_len
            be_true = be_truth[:, epoch]
            if cfg.monitor_mode == "mc":
                col = mask_column(L, cfg.xi, mask_rng)
                be_est = completer.push(be_true, col)
                unobs = ~col
                err_u = (float(np.linalg.norm((be_est - be_true)[unobs]) /
                               max(np.linalg.norm(be_true[unobs]), 1e-300)) if unobs.any() else 0.0)
                err_a = float(np.linalg.norm(be_est - be_true) / max(np.linalg.norm(be_true), 1e-300))
                conv = completer.last.converged
                if cfg.trace:
                    m.monitor_rows.append((epoch, slot, err_a, err_u, conv))
                if epoch < warmup or not conv:
                    # estimate not trustworthy yet: unmeasured links look full
                    be_est = np.where(col, be_est, cap)
                else:
                    be_est = np.where(col, be_est, be_est * (1.0 + cfg.mc_guard))
            elif cfg.monitor_mode == "full-info":
                be_est = be_true
            else:
                be_est = np.zeros(L)
        # (3) arrivals
        active = selector.active_for(slot) if selector is not None else 0
        decider = deciders[active]
        slot_reward = 0.0
        slot_overload, slot_events = 0.0, 0
        load = deployed.induced_load
        if monitored:
            view = residual_feed(cfg.monitor_mode, be_true, be_est, topo, load)
            true_res = residual(topo, load, be_true)
        else:
            view = residual(topo, load)
        for ev in todo:
            if ev.kind != ARRIVAL:
                continue
            d = ev.demand
            m.arrivals += 1
            dec = decider.decide(d, topo, view, deployed.induced_load)
            if cfg.trace:
                m.decision_rows.append((slot, d.id, dec.algorithm, dec.accepted,
                                        ";".join(str(e) for e in dec.path or ()), dec.score))
            if not dec.accepted:
                m.rejected_count += 1
                continue
            idx = list(dec.path)
            if not path_fits(residual(topo, deployed.induced_load), dec.path, d.bw):
                raise InvariantViolation(f"slot {slot}: {dec.algorithm} accepted demand {d.id} "
                                         f"beyond link capacity")
            if monitored:
                excess = np.maximum(d.bw - true_res[idx], 0.0)
                if excess.sum() > TOL:
                    slot_overload += float(excess.sum())
                    slot_events += 1
                true_res[idx] = np.maximum(true_res[idx] - d.bw, 0.0)
            view = view.copy()
            view[idx] = np.maximum(view[idx] - d.bw, 0.0)
            deployed = deployed.with_flow(topo, d.id, dec.path, d.bw)
            demand_of[d.id] = d
            m.accepted_count += 1
            m.accepted_throughput += d.bw
            m.accepted_profit += d.value
            slot_reward += d.value
            dirty = True
        if slot_events:
            m.overload_volume += slot_overload
            m.overload_events += slot_events
            m.overload_rows.append((slot, slot_overload, slot_events))
        if selector is not None:
            selector.record(slot_reward, keep_trace=cfg.trace)
        if np.any(deployed.induced_load > cap + TOL):
            raise InvariantViolation(f"slot {slot}: guaranteed load exceeds capacity")
        if not track_policy:
            continue
        # (4) solver refresh
        if pools is not None and dirty:
            pool = {did: pools.for_demand(demand_of[did], path)
                    for did, path in deployed.assignment.items()}
            candidate, _ = solve_to_fixed_point(deployed, topo, pool)
        elif pools is None or dirty:
            candidate = deployed
        lp_stale = lp_stale or dirty
        if cfg.lp_every and slot % cfg.lp_every == 0 and lp_stale:
            lp_bound = _lp_bound(deployed, demand_of, topo, pools or _shared(_POOLS, PoolCache, topo, cfg.pool_k))
            lp_stale = False
        dirty = False
        # (5) policy step
        reconf = False
        if policy == "dp":
            pstate.deployed, pstate.candidate = deployed, candidate
            reconf, pstate = dp_policy_step(pstate, slot)
        elif policy == "pp":
            reconf = periodic_policy_step(period, slot)
        changes = 0
        if reconf:
            changes = config_distance(deployed, candidate)
            deployed = candidate
            m.reconfig_count += 1
        lp_col = lp_bound if cfg.lp_every and slot % cfg.lp_every == 0 else float("nan")
        m.policy_rows.append((slot, deployed.cost, candidate.cost, lp_col, pstate.Q, reconf, changes))

    m.final_Q = pstate.Q
    if selector is not None:
        m.expert_names = tuple(d.name for d in deciders)
        m.expert_shares = tuple(float(s) for s in selector.shares())
        m.expert_rows = selector.trace
    if monitored and cfg.monitor_mode == "mc":
        m.unconverged_epochs = completer.unconverged
    if m.accepted_count + m.rejected_count != m.arrivals:
        raise InvariantViolation("accepted + rejected differs from arrivals")
    return m


def _lp_bound(config: NetworkConfiguration, demand_of: dict, topo, pools: PoolCache) -> float:
    """Fractional optimum for the active demand set over the solver's pools."""
    if not config.assignment:
        return 0.0
    active = [demand_of[did] for did in sorted(config.assignment)]
    pool = {d.id: pools.for_demand(d, config.assignment[d.id]) for d in active}
    sol = mcf_lp_optimal(topo, active, pool)
    return sol.objective if sol.status == "optimal" else float("nan")


# ---------------------------------------------------------------------------
# Sweeps
# ---------------------------------------------------------------------------

def _run_isolated(args):
    cfg, label = args
    try:
        return run(cfg, label)
    except Exception as exc:  # reported per run, the sweep goes on
        m = Metrics(label=label, seed=cfg.seed, horizon=cfg.horizon)
        m.error = f"{type(exc).__name__}: {exc}"
        return m


def sweep(configs, parallelism: int = 1, labels=None) -> list:
    """Run independent configurations; results follow input order."""
    configs = list(configs)
    labels = list(labels) if labels is not None else [""] * len(configs)
    jobs = list(zip(configs, labels))
    if not jobs:
        return []
    if parallelism <= 1 or len(jobs) == 1:
        return [_run_isolated(j) for j in jobs]
    workers = min(parallelism, len(jobs), 61)
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_isolated, jobs))


def summary_csv(results) -> str:
    return to_csv(SUMMARY_FIELDS, [r.summary_row() for r in results])
