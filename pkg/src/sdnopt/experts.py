"""Meta-algorithms choosing which admission decider controls the network.

Only the expert in control is credited (reactive setting): the rewards of
the others are counterfactual and never observed.

Schedule: a round-robin warm-up gives every expert ``window`` slots, then
phases ``m = 1, 2, ...`` last ``unit * ceil(m ** rho)`` slots each and the
controlling expert is fixed for the whole phase. FLA picks the empirical
leader at every phase start. SEA explores a uniformly random expert with
probability ``min(1, c / sqrt(m))`` and otherwise follows the leader, so SEA
with ``c = 0`` and the same schedule is exactly FLA.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class ExpertState:
    experts: list
    cumulative_reward: np.ndarray = None
    control_slots: np.ndarray = None
    phase: int = 0          # 0 while warming up
    phase_start: int = 0
    phase_len: int = 0
    phase_owner: int = 0
    exploring: bool = False
    active: int = 0

    def __post_init__(self):
        k = len(self.experts)
        if k == 0:
            raise ValueError("need at least one expert")
        if self.cumulative_reward is None:
            self.cumulative_reward = np.zeros(k)
        if self.control_slots is None:
            self.control_slots = np.zeros(k, dtype=np.int64)

    @property
    def averages(self) -> np.ndarray:
        return self.cumulative_reward / np.maximum(self.control_slots, 1)


def fla_select(state: ExpertState) -> int:
    """Index of the best average reward per controlled slot; lowest index on ties."""
    return int(np.argmax(state.averages))


def sea_select(state: ExpertState, rng: np.random.Generator, c: float = 1.0) -> tuple:
    """Return ``(index, exploring)`` for the phase ``state.phase``."""
    k = len(state.experts)
    if k == 1:
        return 0, False
    m = max(state.phase, 1)
    eps = min(1.0, c / math.sqrt(m))
    draw = rng.random()
    pick = int(rng.integers(k))
    if draw < eps:
        return pick, True
    return fla_select(state), False


class ExpertSelector:
    """Drives an :class:`ExpertState` slot by slot.

    Call :meth:`active_for` at the start of a slot, then :meth:`record` with
    the reward earned in that slot.
    """

    def __init__(self, experts, mode: str = "sea", window: int = 50, c: float = 1.0,
                 rho: float | None = None, unit: int | None = None, seed: int = 0):
        if mode not in ("fla", "sea"):
            raise ValueError(f"unknown meta-algorithm {mode!r}")
        if window < 1:
            raise ValueError("window must be >= 1")
        self.mode = mode
        self.window = window
        self.c = c if mode == "sea" else 0.0
        self.rho = rho if rho is not None else (1.0 if mode == "sea" else 0.0)
        self.unit = unit if unit is not None else (1 if mode == "sea" else window)
        self.rng = np.random.default_rng([seed, 0x5EA])
        self.state = ExpertState(list(experts))
        self.trace: list = []
        self._slot_reward = 0.0
        self._slot = None

    @property
    def k(self) -> int:
        return len(self.state.experts)

    def phase_length(self, m: int) -> int:
        return self.unit * int(math.ceil(m ** self.rho - 1e-12))

    def active_for(self, slot: int) -> int:
        st = self.state
        warm_end = self.k * self.window
        if slot < warm_end:
            st.phase = 0
            st.active = slot // self.window
            st.phase_owner = st.active
            st.phase_start = st.active * self.window
            st.phase_len = self.window
            st.exploring = False
        elif st.phase == 0 or slot >= st.phase_start + st.phase_len:
            if st.phase == 0:
                st.phase, st.phase_start = 1, warm_end
            else:
                st.phase, st.phase_start = st.phase + 1, st.phase_start + st.phase_len
            st.phase_len = self.phase_length(st.phase)
            if self.mode == "sea":
                st.active, st.exploring = sea_select(st, self.rng, self.c)
            else:
                st.active, st.exploring = fla_select(st), False
            st.phase_owner = st.active
        self._slot = slot
        return st.active

    def record(self, reward: float, keep_trace: bool = True):
        st = self.state
        st.cumulative_reward[st.active] += reward
        st.control_slots[st.active] += 1
        if keep_trace:
            self.trace.append((self._slot, st.phase, st.active, int(st.exploring), reward))

    def control_sequence(self) -> list:
        return [row[2] for row in self.trace]

    def shares(self) -> np.ndarray:
        total = max(int(self.state.control_slots.sum()), 1)
        return self.state.control_slots / total


def run_bandit(selector: ExpertSelector, reward_fn, horizon: int, keep_trace: bool = False) -> ExpertSelector:
    """Drive ``selector`` against ``reward_fn(expert_index, slot)``."""
    for t in range(horizon):
        i = selector.active_for(t)
        selector.record(reward_fn(i, t), keep_trace)
    return selector


TRACE_HEADER = ["slot", "phase", "active_expert", "exploring_flag", "slot_reward"]
