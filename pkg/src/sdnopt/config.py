"""Flat ``section.key = value`` run configuration and its key registry."""

from __future__ import annotations

from dataclasses import dataclass, fields, replace


class ConfigError(ValueError):
    pass


def _auto(parse):
    def inner(text):
        if text.strip().lower() in ("auto", "none", ""):
            return None
        return parse(text)
    inner.__name__ = f"auto_{parse.__name__}"
    return inner


def _floats(text):
    return tuple(float(x) for x in text.split(",") if x.strip())


def _names(text):
    return tuple(x.strip() for x in text.split(",") if x.strip())


def _bool(text):
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _pairs(text):
    """``all`` or ``0-5,3-7`` (ordered src-dst pairs)."""
    t = text.strip().lower()
    if t in ("all", "auto", ""):
        return None
    out = []
    for item in text.split(","):
        s, d = item.strip().split("-")
        out.append((int(s), int(d)))
    return tuple(out)


# key -> (field, parser, default, help)
REGISTRY = {
    "run.seed": ("seed", int, 0, "base RNG seed"),
    "run.horizon": ("horizon", int, 2000, "simulated slots"),
    "run.seeds": ("seeds", int, 1, "number of seeds for comparison verbs (seed, seed+1, ...)"),
    "run.parallelism": ("parallelism", int, 1, "worker processes for sweeps"),
    "run.trace": ("trace", _bool, True, "write per-slot trace files"),
    "topology.path": ("topology", str, "bundled:geant", "topology file or bundled:<name>"),
    "scenario.mode": ("scenario_mode", str, "iid", "iid | adversarial-script | trap"),
    "scenario.arrival_rate": ("arrival_rate", float, 0.001, "Poisson arrivals per slot per pair"),
    "scenario.mean_holding": ("mean_holding", float, 100.0, "mean holding time in slots"),
    "scenario.bw_choices": ("bw_choices", _floats, (1.0, 2.0, 5.0), "bandwidth values"),
    "scenario.bw_probs": ("bw_probs", _floats, (0.5, 0.3, 0.2), "bandwidth probabilities"),
    "scenario.pairs": ("pairs", _pairs, None, "all, or src-dst list"),
    "scenario.script": ("script", str, "", "CSV script for adversarial-script mode"),
    "scenario.trap_units": ("trap_units", int, 10, "requests per link capacity in trap mode"),
    "admission.algorithm": ("algorithm", str, "greedy", "greedy | threshold | primal_dual | agrawal"),
    "admission.k_paths": ("k_paths", int, 8, "candidate paths per request"),
    "admission.mu": ("mu", _auto(float), None, "exponential base (auto: 4 n B_max)"),
    "admission.theta": ("theta", _auto(float), None, "path length threshold (auto: n)"),
    "admission.theta_util": ("theta_util", float, 1.0, "utilization cap for threshold"),
    "admission.gamma": ("gamma", float, 0.05, "multiplicative price step"),
    "admission.rho_target": ("rho_target", _auto(float), None, "per-request budget (auto: 1/expected flows per link)"),
    "admission.price_floor": ("price_floor", float, 1e-6, "lower clamp for prices"),
    "admission.price_init": ("price_init", _auto(float), None, "initial price (auto: price_floor)"),
    "experts.roster": ("roster", _names, (), "deciders run as experts; empty disables"),
    "experts.meta": ("meta", str, "sea", "fla | sea"),
    "experts.window": ("window", int, 50, "evaluation window / warm-up slots"),
    "experts.c": ("explore_c", float, 1.0, "SEA exploration constant"),
    "experts.rho": ("phase_rho", _auto(float), None, "phase growth exponent (auto: 1 sea, 0 fla)"),
    "experts.unit": ("phase_unit", _auto(int), None, "slots per phase unit (auto: 1 sea, window fla)"),
    "routing.policy": ("policy", str, "none", "none | sp | dp | pp"),
    "routing.V": ("V", float, 100.0, "drift-plus-penalty weight"),
    "routing.alpha": ("alpha", float, 0.05, "target reconfiguration rate"),
    "routing.period": ("period", _auto(int), None, "periodic policy period (auto: ceil(1/alpha))"),
    "routing.pool_k": ("pool_k", int, 8, "weight-shortest paths per demand for the solver"),
    "routing.lp_every": ("lp_every", int, 0, "LP bound stride in slots (0: never)"),
    "monitoring.mode": ("monitor_mode", str, "off", "off | full-info | mc | no-info"),
    "monitoring.xi": ("xi", float, 0.5, "fraction of links measured per epoch"),
    "monitoring.epoch_len": ("epoch_len", int, 10, "slots per monitoring epoch"),
    "monitoring.tau": ("tau", _auto(float), None, "SVT threshold (auto: 5 sqrt(L T))"),
    "monitoring.delta": ("delta", _auto(float), None, "SVT step (auto: 1.2/xi)"),
    "monitoring.max_iters": ("max_iters", int, 500, "SVT iteration cap"),
    "monitoring.tol": ("tol", float, 1e-4, "SVT relative residual tolerance"),
    "monitoring.window": ("mc_window", int, 30, "epochs kept for online completion"),
    "monitoring.mc_warmup": ("mc_warmup", _auto(int), None, "epochs before completed values are trusted; unmeasured links count as full until then (auto: window)"),
    "monitoring.mc_guard": ("mc_guard", float, 0.05, "relative headroom added to completed best-effort estimates"),
    "monitoring.be_rank": ("be_rank", int, 2, "rank of best-effort factors"),
    "monitoring.be_amplitude": ("be_amplitude", float, 10.0, "best-effort scale"),
    "monitoring.be_noise": ("be_noise", float, 0.0, "best-effort noise std"),
    "monitoring.be_period": ("be_period", float, 24.0, "diurnal period in epochs"),
    "compare.algorithms": ("algorithms", _names, ("greedy", "primal_dual", "agrawal"), "roster for ac-compare"),
    "compare.policies": ("policies", _names, ("sp", "dp", "pp"), "policies for policy-compare"),
    "compare.xi_list": ("xi_list", _floats, (0.2, 0.4, 0.6, 0.8), "xi values for monitor-eval"),
    "compare.modes": ("modes", _names, ("full-info", "mc", "no-info"), "monitoring modes for monitor-eval"),
    "sweep.key": ("sweep_key", str, "", "config key varied by the sweep verb"),
    "sweep.values": ("sweep_values", _names, (), "values for sweep.key"),
}

_ENUMS = {
    "scenario_mode": ("iid", "adversarial-script", "trap"),
    "algorithm": ("greedy", "threshold", "primal_dual", "agrawal"),
    "meta": ("fla", "sea"),
    "policy": ("none", "sp", "dp", "pp"),
    "monitor_mode": ("off", "full-info", "mc", "no-info"),
}


@dataclass(frozen=True)
class RunConfig:
    seed: int = 0
    horizon: int = 2000
    seeds: int = 1
    parallelism: int = 1
    trace: bool = True
    topology: str = "bundled:geant"
    scenario_mode: str = "iid"
    arrival_rate: float = 0.001
    mean_holding: float = 100.0
    bw_choices: tuple = (1.0, 2.0, 5.0)
    bw_probs: tuple = (0.5, 0.3, 0.2)
    pairs: tuple | None = None
    script: str = ""
    trap_units: int = 10
    algorithm: str = "greedy"
    k_paths: int = 8
    mu: float | None = None
    theta: float | None = None
    theta_util: float = 1.0
    gamma: float = 0.05
    rho_target: float | None = None
    price_floor: float = 1e-6
    price_init: float | None = None
    roster: tuple = ()
    meta: str = "sea"
    window: int = 50
    explore_c: float = 1.0
    phase_rho: float | None = None
    phase_unit: int | None = None
    policy: str = "none"
    V: float = 100.0
    alpha: float = 0.05
    period: int | None = None
    pool_k: int = 8
    lp_every: int = 0
    monitor_mode: str = "off"
    xi: float = 0.5
    epoch_len: int = 10
    tau: float | None = None
    delta: float | None = None
    max_iters: int = 500
    tol: float = 1e-4
    mc_window: int = 30
    mc_warmup: int | None = None
    mc_guard: float = 0.05
    be_rank: int = 2
    be_amplitude: float = 10.0
    be_noise: float = 0.0
    be_period: float = 24.0
    algorithms: tuple = ("greedy", "primal_dual", "agrawal")
    policies: tuple = ("sp", "dp", "pp")
    xi_list: tuple = (0.2, 0.4, 0.6, 0.8)
    modes: tuple = ("full-info", "mc", "no-info")
    sweep_key: str = ""
    sweep_values: tuple = ()

    def validate(self) -> "RunConfig":
        for name, allowed in _ENUMS.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        for name in self.roster:
            if name not in _ENUMS["algorithm"] + _ENUMS["meta"]:
                raise ConfigError(f"unknown expert {name!r}")
        if self.horizon < 0 or self.seeds < 1 or self.parallelism < 1:
            raise ConfigError("horizon, seeds and parallelism must be nonnegative/positive")
        if not 0 < self.xi <= 1:
            raise ConfigError("monitoring.xi must lie in (0, 1]")
        if self.mc_guard < 0 or (self.mc_warmup is not None and self.mc_warmup < 0):
            raise ConfigError("monitoring.mc_guard and monitoring.mc_warmup must be nonnegative")
        if not 0 < self.alpha < 1:
            raise ConfigError("routing.alpha must lie in (0, 1)")
        if self.scenario_mode == "adversarial-script" and not self.script:
            raise ConfigError("adversarial-script mode needs scenario.script")
        return self

    def set(self, key: str, value: str) -> "RunConfig":
        return apply_overrides(self, [f"{key}={value}"])

    def with_(self, **kw) -> "RunConfig":
        return replace(self, **kw)


_DEFAULTS = {f.name: f.default for f in fields(RunConfig)}
for _key, (_field, _parse, _default, _help) in REGISTRY.items():
    assert _DEFAULTS[_field] == _default, _key


def parse_text(text: str, base: RunConfig | None = None, source: str = "<config>") -> RunConfig:
    items = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'section.key = value'")
        k, v = line.split("=", 1)
        items.append((k.strip(), v.strip(), f"{source}:{lineno}"))
    return _apply(base or RunConfig(), items)


def apply_overrides(cfg: RunConfig, overrides) -> RunConfig:
    items = []
    for ov in overrides:
        if "=" not in ov:
            raise ConfigError(f"override {ov!r} is not key=value")
        k, v = ov.split("=", 1)
        items.append((k.strip(), v.strip(), "override"))
    return _apply(cfg, items)


def _apply(cfg: RunConfig, items) -> RunConfig:
    changes = {}
    for key, value, where in items:
        if key not in REGISTRY:
            raise ConfigError(f"{where}: unknown key {key!r}")
        field_name, parse, _, _ = REGISTRY[key]
        try:
            changes[field_name] = parse(value)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{where}: bad value for {key}: {exc}") from None
    return replace(cfg, **changes)


def key_for(field_name: str) -> str:
    for key, (f, *_rest) in REGISTRY.items():
        if f == field_name:
            return key
    raise KeyError(field_name)


def dump(cfg: RunConfig) -> str:
    lines = []
    for key, (f, _parse, _d, _h) in REGISTRY.items():
        v = getattr(cfg, f)
        if v is None:
            s = "auto"
        elif isinstance(v, tuple):
            if v and isinstance(v[0], tuple):
                s = ",".join(f"{a}-{b}" for a, b in v)
            else:
                s = ",".join(f"{x:.9g}" if isinstance(x, float) else str(x) for x in v)
        elif isinstance(v, bool):
            s = "true" if v else "false"
        elif isinstance(v, float):
            s = f"{v:.9g}"
        else:
            s = str(v)
        lines.append(f"{key} = {s}")
    return "\n".join(lines) + "\n"
