"""Parsimonious link-load monitoring: sampling masks and matrix completion."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .netmodel import residual


def observed_count(L: int, xi: float) -> int:
    """``ceil(xi * L)`` robust to representation error in ``xi``."""
    return int(math.ceil(round(xi * L, 9)))


@dataclass
class SampleMask:
    observed: np.ndarray  # L x T bool
    xi: float

    @property
    def shape(self):
        return self.observed.shape


def make_mask(L: int, T: int, xi: float, rng) -> SampleMask:
    """Observe a uniformly random subset of ``ceil(xi * L)`` links in every epoch."""
    if not 0 < xi <= 1:
        raise ValueError(f"xi must lie in (0, 1], got {xi}")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng([int(rng), 0x3A5C])
    m = observed_count(L, xi)
    obs = np.zeros((L, T), dtype=bool)
    for t in range(T):
        obs[rng.choice(L, size=m, replace=False), t] = True
    return SampleMask(obs, xi)


def mask_column(L: int, xi: float, rng) -> np.ndarray:
    col = np.zeros(L, dtype=bool)
    col[rng.choice(L, size=observed_count(L, xi), replace=False)] = True
    return col


@dataclass
class CompletionParams:
    tau: float | None = None    # None: 5 * sqrt(L * T)
    delta: float | None = None  # None: 1.2 / observed fraction
    max_iters: int = 500
    tol: float = 1e-4

    def resolved(self, shape, frac):
        L, T = shape
        tau = self.tau if self.tau is not None else 5.0 * math.sqrt(L * T)
        delta = self.delta if self.delta is not None else 1.2 / frac
        if not (tau > 0 and delta > 0 and self.tol > 0):
            raise ValueError("tau, delta and tol must be positive")
        return tau, delta


@dataclass
class Completion:
    values: np.ndarray
    converged: bool
    iterations: int
    residual: float
    dual: np.ndarray | None = field(default=None, repr=False)


def _check(M_obs, mask):
    obs = mask.observed if isinstance(mask, SampleMask) else np.asarray(mask, dtype=bool)
    M = np.asarray(M_obs, dtype=float)
    if M.shape != obs.shape:
        raise ValueError(f"matrix shape {M.shape} does not match mask shape {obs.shape}")
    return M, obs


def svt_complete(M_obs, mask, params: CompletionParams | None = None, warm_start=None) -> Completion:
    """Singular value thresholding completion.

    Iterates ``X = shrink(Y, tau)``, ``Y += delta * P(M - X)`` from the usual
    kicked start until the relative misfit on observed entries drops to
    ``tol`` or ``max_iters`` is reached. The recursion runs on ``M`` divided
    by the RMS of its observed entries, so ``tau`` is a threshold on the
    normalised matrix and the result does not depend on the load unit. The
    output is clamped at zero. ``warm_start`` may supply the dual matrix
    ``Y`` of a previous call (``Completion.dual``, in data units).
    """
    params = params or CompletionParams()
    M, obs = _check(M_obs, mask)
    if not obs.any():
        raise ValueError("mask has no observed entries")
    frac = obs.mean()
    tau, delta = params.resolved(M.shape, frac)
    PM = np.where(obs, M, 0.0)
    norm_obs = np.linalg.norm(PM)
    if norm_obs == 0:
        return Completion(np.zeros_like(M), True, 0, 0.0)
    scale = norm_obs / math.sqrt(obs.sum())
    PM = PM / scale
    norm_obs = np.linalg.norm(PM)
    if warm_start is not None and warm_start.shape == M.shape:
        Y = np.asarray(warm_start, dtype=float) / scale
    else:
        k0 = math.ceil(tau / (delta * np.linalg.norm(PM, 2)))
        Y = k0 * delta * PM
    X = np.zeros_like(M)
    rel = float("inf")
    it = 0
    for it in range(1, params.max_iters + 1):
        U, s, Vt = np.linalg.svd(Y, full_matrices=False)
        keep = s > tau
        X_new = (U[:, keep] * (s[keep] - tau)) @ Vt[keep]
        diff = np.where(obs, PM - X_new, 0.0)
        rel_new = np.linalg.norm(diff) / norm_obs
        if not np.isfinite(rel_new):
            break
        X, rel = X_new, rel_new
        if rel <= params.tol:
            break
        Y += delta * diff
        if not np.all(np.isfinite(Y)):
            break
    converged = rel <= params.tol
    return Completion(np.maximum(X * scale, 0.0), bool(converged), it, float(rel), Y * scale)


def naive_complete(M_obs, mask) -> np.ndarray:
    """Forward-fill each link with its most recent observation (0 before the first)."""
    M, obs = _check(M_obs, mask)
    out = np.zeros_like(M)
    last = np.zeros(M.shape[0])
    for t in range(M.shape[1]):
        col = obs[:, t]
        last = np.where(col, M[:, t], last)
        out[:, t] = last
    return out


def completion_error(est, truth, mask, scope: str = "all") -> float:
    """Relative Frobenius error over all entries or only the unobserved ones."""
    est = np.asarray(est, dtype=float)
    truth, obs = _check(truth, mask)
    if est.shape != truth.shape:
        raise ValueError("estimate and truth differ in shape")
    if scope == "all":
        sel = np.ones_like(obs)
    elif scope == "unobserved":
        sel = ~obs
    else:
        raise ValueError(f"unknown scope {scope!r}")
    den = np.linalg.norm(truth[sel])
    num = np.linalg.norm((est - truth)[sel])
    if den == 0:
        return 0.0 if num == 0 else float("inf")
    return float(num / den)


MODES = ("full-info", "mc", "no-info")


def residual_feed(mode: str, truth_col, completed_col, topo, guaranteed) -> np.ndarray:
    """Residual capacity view handed to admission control."""
    if mode == "full-info":
        be = np.asarray(truth_col, dtype=float)
    elif mode == "mc":
        be = np.asarray(completed_col, dtype=float)
    elif mode == "no-info":
        be = np.zeros(topo.num_links)
    else:
        raise ValueError(f"unknown monitoring mode {mode!r}")
    return residual(topo, guaranteed, be)


class OnlineCompleter:
    """Causal completion: at epoch ``t`` only columns ``<= t`` have been sampled.

    Keeps the last ``window`` columns and warm-starts SVT from the previous
    dual iterate shifted to the new window.
    """

    def __init__(self, L: int, xi: float, params: CompletionParams | None = None, window: int = 30):
        self.L = L
        self.xi = xi
        self.params = params or CompletionParams()
        self.window = window
        self.values: list = []
        self.masks: list = []
        self._dual = None
        self.last: Completion | None = None
        self.unconverged = 0

    def push(self, observed_values, mask_col) -> np.ndarray:
        """Add one sampled epoch and return the completed estimate for it."""
        self.values.append(np.where(mask_col, observed_values, 0.0))
        self.masks.append(np.asarray(mask_col, dtype=bool))
        M = np.column_stack(self.values[-self.window:])
        obs = np.column_stack(self.masks[-self.window:])
        warm = None
        if self._dual is not None:
            prev = self._dual
            if prev.shape[1] == M.shape[1]:
                warm = np.column_stack([prev[:, 1:], np.zeros(self.L)])
            else:
                warm = np.column_stack([prev, np.zeros(self.L)])
        res = svt_complete(M, obs, self.params, warm_start=warm)
        self._dual = res.dual
        self.last = res
        if not res.converged:
            self.unconverged += 1
        col = res.values[:, -1].copy()
        # measured links are known exactly this epoch
        col[mask_col] = observed_values[mask_col]
        return col


# ---------------------------------------------------------------------------
# CSV I/O: rows are links, columns are epochs
# ---------------------------------------------------------------------------

def dump_matrix(M, fmt: str = "{:.9g}") -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    for row in np.asarray(M):
        w.writerow([fmt.format(v) for v in row])
    return buf.getvalue()


def load_matrix(text: str) -> np.ndarray:
    rows = [r for r in csv.reader(io.StringIO(text)) if r]
    return np.array([[float(v) for v in r] for r in rows])


def dump_mask(mask: SampleMask) -> str:
    return dump_matrix(mask.observed.astype(int), "{:d}")


def load_mask(text: str, xi: float | None = None) -> SampleMask:
    obs = load_matrix(text).astype(bool)
    if xi is None:
        xi = obs.sum(axis=0).max() / obs.shape[0] if obs.size else 1.0
    return SampleMask(obs, xi)


ERROR_HEADER = ["xi", "seed", "method", "scope", "error"]
