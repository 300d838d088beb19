"""Forward simulation of the interacting diffusions with layered seed-banks.

Each colony carries an active frequency x and dormant frequencies y_m.  The
active component drifts toward its block averages (one term per hierarchical
level), exchanges with each seed-bank colour, and diffuses with sqrt(g(x))
noise; dormant components relax linearly toward the active one.

Discretisation: Euler-Maruyama for migration and noise.  The exchange terms
use matched increments  dy_m = (x - y_m) f_m,  dx += sum K_m (y_m - x) f_m
with f_m = 1 - exp(-e_m N^-m dt) (or e_m N^-m dt in plain Euler mode), which
integrates the dormant relaxation exactly over the step and conserves the
weighted population mean exactly in discrete time, removing the stiffness of
fast colours.  States are clipped to [0,1] after each step; clip events are
counted and a run whose clip frequency exceeds 1% is flagged.

Colonies are indexed little-endian by their digit strings, so the level-l
blocks are contiguous slices of length N^l and block averages are reshaped
means.  Replicas are vectorised in fixed-width chunks; replica r always draws
from the stream keyed by (seed, labels, r // CHUNK) at column r % CHUNK.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.linalg import expm

from . import hiergeo, rng as rngmod
from .params import InitSpec, ModelParams


class StabilityError(RuntimeError):
    """Step size exceeds the stability bound of the scheme."""


class SizeError(ValueError):
    """State space too large for exact generator computations."""


ROLE_ACTIVE = 0  # role index of the active population; colour m is role m+1


# ----------------------------------------------------------------------
# State containers
# ----------------------------------------------------------------------


@dataclass
class SystemState:
    """Configuration of the truncated system: x (C,), y (M, C), time."""

    x: np.ndarray
    y: np.ndarray
    time: float = 0.0

    def copy(self) -> "SystemState":
        return SystemState(self.x.copy(), self.y.copy(), self.time)

    def colony(self, index: int):
        """(x, y_vector) of one colony."""
        return float(self.x[index]), self.y[:, index].copy()


def initial_arrays(params: ModelParams, init: InitSpec, rng,
                   width: int = 1) -> tuple:
    """Draw ``width`` i.i.d. replicas of the initial configuration."""
    C = params.n_colonies
    M = params.levels + 1
    th_y = init.theta_y_full(M)
    if init.law == "deterministic":
        x = np.full((width, C), init.theta_x)
        y = np.tile(th_y[None, :, None], (width, 1, C)).astype(float)
    elif init.law == "beta":
        conc = init.concentration
        x = rng.beta(max(init.theta_x * conc, 1e-12),
                     max((1 - init.theta_x) * conc, 1e-12), size=(width, C))
        y = np.empty((width, M, C))
        for m in range(M):
            y[:, m, :] = rng.beta(max(th_y[m] * conc, 1e-12),
                                  max((1 - th_y[m]) * conc, 1e-12),
                                  size=(width, C))
    else:  # two-point
        x = (rng.random((width, C)) < init.theta_x).astype(float)
        y = np.empty((width, M, C))
        for m in range(M):
            y[:, m, :] = (rng.random((width, C)) < th_y[m]).astype(float)
    return x, y


def initial_state(params: ModelParams, init: InitSpec, rng) -> SystemState:
    x, y = initial_arrays(params, init, rng, width=1)
    return SystemState(x[0], y[0], 0.0)


# ----------------------------------------------------------------------
# One step of the scheme
# ----------------------------------------------------------------------


class _StepContext:
    """Precomputed rates and reshape geometry for the vectorised step."""

    def __init__(self, params: ModelParams, dt: float, mode: str):
        if dt <= 0:
            raise ValueError("dt must be positive")
        if mode not in ("exp", "euler"):
            raise ValueError("dormant mode must be 'exp' or 'euler'")
        self.params = params
        self.dt = dt
        self.N = params.N
        self.C = params.n_colonies
        self.M = params.levels + 1
        spec = params.kernel_spec()
        self.level_rates = spec.level_rates()          # c_{l-1} / N^{l-1}
        self.exch_rates = params.exchange_rates()      # e_m / N^m
        self.K = np.asarray(params.K, dtype=float)
        chi = float(np.sum(self.K * self.exch_rates))
        total = hiergeo.total_jump_rate(spec) + chi + params.g.lipschitz_bound
        if dt * total > 1.0:
            raise StabilityError(
                f"dt * total rate = {dt * total:.3g} > 1; reduce dt below "
                f"{1.0 / total:.3g}"
            )
        if mode == "exp":
            self.exch_f = 1.0 - np.exp(-self.exch_rates * dt)
        else:
            self.exch_f = self.exch_rates * dt
        self.g = params.g


def default_dt(params: ModelParams, target: float = 0.1) -> float:
    """dt with dt * (migration total + chi + Lip(g)) <= ``target``."""
    spec = params.kernel_spec()
    chi = float(np.sum(np.asarray(params.K) * params.exchange_rates()))
    total = hiergeo.total_jump_rate(spec) + chi + params.g.lipschitz_bound
    return target / total


def _block_means(x: np.ndarray, N: int, level: int) -> np.ndarray:
    """Level-l block means broadcast back to colony resolution.

    x has shape (..., C); level-l blocks are contiguous runs of N^l colonies.
    """
    C = x.shape[-1]
    width = N ** level
    lead = x.shape[:-1]
    xr = x.reshape(lead + (C // width, width))
    means = xr.mean(axis=-1, keepdims=True)
    return np.broadcast_to(means, xr.shape).reshape(lead + (C,))


def _advance(x: np.ndarray, y: np.ndarray, n_steps: int, ctx: _StepContext,
             rng) -> int:
    """Advance (x, y) in place by n_steps; returns the number of clip events."""
    dt, N = ctx.dt, ctx.N
    clips = 0
    for _ in range(n_steps):
        drift = np.zeros_like(x)
        for l, rate in enumerate(ctx.level_rates, start=1):
            drift += rate * (_block_means(x, N, l) - x)
        dy = (x[:, None, :] - y) * ctx.exch_f[None, :, None]
        exch_x = -np.sum(ctx.K[None, :, None] * dy, axis=1)
        noise = np.sqrt(np.maximum(ctx.g(x), 0.0) * dt) * rng.standard_normal(x.shape)
        x += drift * dt + exch_x + noise
        y += dy
        lo, hi = x < 0.0, x > 1.0
        clips += int(np.count_nonzero(lo) + np.count_nonzero(hi))
        np.clip(x, 0.0, 1.0, out=x)
        np.clip(y, 0.0, 1.0, out=y)
    return clips


def step(state: SystemState, dt: float, params: ModelParams, rng,
         mode: str = "exp") -> SystemState:
    """One Euler-Maruyama step of the full system (single replica)."""
    ctx = _StepContext(params, dt, mode)
    out = state.copy()
    x = out.x[None, :]
    y = out.y[None, :, :]
    _advance(x, y, 1, ctx, rng)
    out.x, out.y = x[0], y[0]
    out.time = state.time + dt
    return out


# ----------------------------------------------------------------------
# Block averages and estimators
# ----------------------------------------------------------------------


def block_average(state: SystemState, level: int, N: int) -> tuple:
    """Arithmetic means of x and each y_m over the level-l block around 0."""
    width = N ** level
    if width > len(state.x):
        raise ValueError("block level exceeds the truncation")
    return float(state.x[:width].mean()), state.y[:, :width].mean(axis=1)


def estimator_arrays(x: np.ndarray, y: np.ndarray, K: np.ndarray,
                     level: int, N: int) -> tuple:
    """(theta_bar, theta_x, theta_y) over the level-l block around 0.

    theta_bar^{(l)} weights the active block mean with the colour means of
    colours m < l:  (theta_x + sum_{m<l} K_m theta_{y_m}) / (1 + sum_{m<l} K_m).
    """
    width = N ** level
    th_x = x[..., :width].mean(axis=-1)
    th_y = y[..., :width].mean(axis=-1)        # (..., M)
    Kl = K[:level]
    th_bar = (th_x + np.sum(Kl * th_y[..., :level], axis=-1)) / (1.0 + Kl.sum())
    return th_bar, th_x, th_y


# ----------------------------------------------------------------------
# Trajectory recording
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RecordPlan:
    times: Sequence[float]
    levels: Optional[Sequence[int]] = None   # default: 0 .. levels+1
    snapshots: bool = False


@dataclass
class TrajectoryRecord:
    times: np.ndarray                 # actual (step-aligned) record times
    levels: np.ndarray
    block_x: np.ndarray               # (T, L)
    block_y: np.ndarray               # (T, L, M)
    theta_bar: np.ndarray             # (T, L)
    theta_x: np.ndarray               # (T, L)
    theta_y: np.ndarray               # (T, L, M)
    grand_mean: np.ndarray            # (T,) conserved-quantity monitor
    clip_fraction: float
    flagged: bool
    snapshots_x: Optional[np.ndarray] = None   # (T, C)
    snapshots_y: Optional[np.ndarray] = None   # (T, M, C)

    def csv_rows(self):
        """Rows (t, level, component, value) for the trajectory export."""
        rows = []
        M = self.block_y.shape[-1]
        for i, t in enumerate(self.times):
            for j, l in enumerate(self.levels):
                rows.append((t, int(l), "x", self.block_x[i, j]))
                for m in range(M):
                    rows.append((t, int(l), f"y{m}", self.block_y[i, j, m]))
                rows.append((t, int(l), "theta_bar", self.theta_bar[i, j]))
                rows.append((t, int(l), "theta_x", self.theta_x[i, j]))
                for m in range(M):
                    rows.append((t, int(l), f"theta_y{m}", self.theta_y[i, j, m]))
        return rows

    def snapshot_rows(self, N: int):
        if self.snapshots_x is None:
            raise ValueError("run was recorded without snapshots")
        trunc = int(round(math.log(self.snapshots_x.shape[1], N)))
        rows = []
        for i, t in enumerate(self.times):
            for cidx in range(self.snapshots_x.shape[1]):
                digits = hiergeo.HierAddress.from_index(cidx, N, trunc).digits
                addr = "".join(str(d) for d in digits)
                rows.append((t, addr, self.snapshots_x[i, cidx],
                             *self.snapshots_y[i, :, cidx]))
        return rows


def simulate(params: ModelParams, init: InitSpec, horizon: float,
             plan: RecordPlan, seed: int, replica: int = 0,
             dt: Optional[float] = None, mode: str = "exp") -> TrajectoryRecord:
    """Single-replica trajectory, deterministic given (seed, replica)."""
    dt = dt or default_dt(params)
    ctx = _StepContext(params, dt, mode)
    rng = rngmod.stream(seed, "forward", replica)
    x, y = initial_arrays(params, init, rng, width=1)
    levels = np.asarray(plan.levels if plan.levels is not None
                        else range(params.levels + 2))
    K = np.asarray(params.K, dtype=float)
    steps_at = [int(round(t / dt)) for t in plan.times]
    if any(s < 0 or s * dt > horizon * (1 + 1e-9) + dt for s in steps_at):
        raise ValueError("record times must lie in [0, horizon]")
    if sorted(steps_at) != steps_at:
        raise ValueError("record times must be non-decreasing")
    T, L, M = len(steps_at), len(levels), params.levels + 1
    rec = TrajectoryRecord(
        times=np.asarray(steps_at, dtype=float) * dt,
        levels=levels,
        block_x=np.empty((T, L)), block_y=np.empty((T, L, M)),
        theta_bar=np.empty((T, L)), theta_x=np.empty((T, L)),
        theta_y=np.empty((T, L, M)),
        grand_mean=np.empty(T), clip_fraction=0.0, flagged=False,
        snapshots_x=np.empty((T, params.n_colonies)) if plan.snapshots else None,
        snapshots_y=np.empty((T, M, params.n_colonies)) if plan.snapshots else None,
    )
    clips = 0
    done = 0
    for i, target in enumerate(steps_at):
        clips += _advance(x, y, target - done, ctx, rng)
        done = target
        for j, l in enumerate(levels):
            th_bar, th_x, th_y = estimator_arrays(x[0], y[0], K, int(l), params.N)
            rec.theta_bar[i, j], rec.theta_x[i, j] = th_bar, th_x
            rec.theta_y[i, j] = th_y
            width = params.N ** int(l)
            rec.block_x[i, j] = x[0, :width].mean()
            rec.block_y[i, j] = y[0, :, :width].mean(axis=1)
        full, _, _ = estimator_arrays(x[0], y[0], K, params.levels + 1, params.N)
        rec.grand_mean[i] = full
        if plan.snapshots:
            rec.snapshots_x[i] = x[0]
            rec.snapshots_y[i] = y[0]
    total_colony_steps = max(done, 1) * params.n_colonies
    rec.clip_fraction = clips / total_colony_steps
    rec.flagged = rec.clip_fraction > 0.01
    return rec


# ----------------------------------------------------------------------
# Ensembles
# ----------------------------------------------------------------------


def ensemble_reduce(params: ModelParams, init, times: Sequence[float],
                    n_replicas: int, seed: int, reducer: Callable,
                    dt: Optional[float] = None, mode: str = "exp",
                    label: str = "ensemble") -> tuple:
    """Monte Carlo means and standard errors of per-replica observables.

    ``reducer(x, y)`` maps state arrays of shape (w, C) and (w, M, C) to a
    (w, Q) observable block.  ``init`` is an InitSpec (i.i.d. replicas) or a
    SystemState (every replica starts from that exact configuration).
    Returns (means, ses, clip_fraction) with means and ses shaped (T, Q).
    """
    dt = dt or default_dt(params)
    ctx = _StepContext(params, dt, mode)
    steps_at = [int(round(t / dt)) for t in times]
    sums = sumsq = None
    clips = 0
    total_steps = 0
    for chunk, width in rngmod.replica_chunks(n_replicas):
        rng = rngmod.stream(seed, label, chunk)
        if isinstance(init, SystemState):
            x = np.tile(init.x[None, :], (rngmod.CHUNK, 1))
            y = np.tile(init.y[None, :, :], (rngmod.CHUNK, 1, 1))
        else:
            x, y = initial_arrays(params, init, rng, width=rngmod.CHUNK)
        done = 0
        vals = []
        for target in steps_at:
            clips += _advance(x, y, target - done, ctx, rng)
            done = target
            vals.append(np.asarray(reducer(x[:width], y[:width])))
        total_steps += done * rngmod.CHUNK * params.n_colonies
        block = np.stack(vals)                      # (T, width, Q)
        if sums is None:
            sums = block.sum(axis=1)
            sumsq = (block ** 2).sum(axis=1)
        else:
            sums += block.sum(axis=1)
            sumsq += (block ** 2).sum(axis=1)
    mean = sums / n_replicas
    var = np.maximum(sumsq / n_replicas - mean ** 2, 0.0)
    se = np.sqrt(var / n_replicas)
    clip_fraction = clips / max(total_steps, 1)
    return mean, se, clip_fraction


# ----------------------------------------------------------------------
# Exact first moments via the single-lineage kernel
# ----------------------------------------------------------------------


def lineage_generator(params: ModelParams) -> np.ndarray:
    """Generator of one dual lineage on states (colony, role).

    Role 0 is active; role m+1 is m-dormant.  Active lineages migrate with
    the truncated kernel and fall asleep into colour m at rate K_m e_m N^-m;
    m-dormant lineages wake at rate e_m N^-m.  State index = role * C + colony.
    """
    C, M, N = params.n_colonies, params.levels + 1, params.N
    n_states = C * (M + 1)
    if n_states > 10_000:
        raise SizeError(f"state space of size {n_states} exceeds 10^4")
    spec = params.kernel_spec()
    trunc = params.levels + 1
    Q = np.zeros((n_states, n_states))
    addrs = [hiergeo.HierAddress.from_index(i, N, trunc) for i in range(C)]
    exch = params.exchange_rates()
    K = np.asarray(params.K)
    for i in range(C):
        for j in range(C):
            if i != j:
                Q[i, j] = hiergeo.migration_rate(addrs[i], addrs[j], spec)
        for m in range(M):
            Q[i, (m + 1) * C + i] = K[m] * exch[m]
            Q[(m + 1) * C + i, i] = exch[m]
    np.fill_diagonal(Q, Q.diagonal() - Q.sum(axis=1))
    return Q


def first_moment_oracle(params: ModelParams, state: SystemState,
                        t: float) -> SystemState:
    """Exact per-site expectations E[z_(xi,R)(t)] by generator exponentiation.

    The first moments of the system follow the linear flow of the single
    dual lineage, so exp(Q t) applied to the flattened state is an exact
    oracle for forward ensemble means.
    """
    C, M = params.n_colonies, params.levels + 1
    Q = lineage_generator(params)
    z0 = np.concatenate([state.x, state.y.reshape(M * C)])
    zt = expm(Q * t) @ z0
    return SystemState(zt[:C], zt[C:].reshape(M, C), state.time + t)


# ----------------------------------------------------------------------
# McKean-Vlasov single colony
# ----------------------------------------------------------------------


def mckean_vlasov_mean(K: float, e: float, theta_x: float, theta_y: float,
                       t) -> tuple:
    """Closed-form component means of the single-colony mean-field limit.

    E[x(t)] = theta + K/(1+K) (theta_x - theta_y) exp(-(K+1) e t), and
    E[y(t)] = theta -  1/(1+K) (theta_x - theta_y) exp(-(K+1) e t), with
    theta = (theta_x + K theta_y) / (1 + K).  Independent of g.
    """
    t = np.asarray(t, dtype=float)
    theta = (theta_x + K * theta_y) / (1.0 + K)
    gap = (theta_x - theta_y) * np.exp(-(K + 1.0) * e * t)
    return theta + K / (1.0 + K) * gap, theta - 1.0 / (1.0 + K) * gap


def simulate_mckean_vlasov(c: float, K: float, e: float, g, theta_x: float,
                           theta_y: float, times: Sequence[float],
                           n_replicas: int, seed: int,
                           dt: float = 0.01, law: str = "deterministic",
                           concentration: float = 2.0) -> tuple:
    """Ensemble of the single-colony process with self-consistent drift.

    The mean-field drift c (E[x(t)] - x) uses the closed-form mean, which is
    the exact reduction of the self-consistent evolution.  Returns means and
    standard errors of (x, y) at the requested times, each shaped (T, 2).
    """
    steps_at = [int(round(t / dt)) for t in times]
    n_steps = max(steps_at) if steps_at else 0
    grid = np.arange(n_steps) * dt
    mean_x_path, _ = mckean_vlasov_mean(K, e, theta_x, theta_y, grid)
    sums = np.zeros((len(steps_at), 2))
    sumsq = np.zeros((len(steps_at), 2))
    for chunk, width in rngmod.replica_chunks(n_replicas):
        rng = rngmod.stream(seed, "mckean-vlasov", chunk)
        w = rngmod.CHUNK
        if law == "deterministic":
            x = np.full(w, theta_x)
            y = np.full(w, theta_y)
        elif law == "beta":
            x = rng.beta(theta_x * concentration, (1 - theta_x) * concentration, w)
            y = rng.beta(max(theta_y * concentration, 1e-12),
                         max((1 - theta_y) * concentration, 1e-12), w)
        else:
            x = (rng.random(w) < theta_x).astype(float)
            y = (rng.random(w) < theta_y).astype(float)
        f = 1.0 - math.exp(-e * dt)
        record = {s: i for i, s in enumerate(steps_at)}
        if 0 in record:
            i = record[0]
            sums[i] += np.stack([x[:width].sum(), y[:width].sum()])
            sumsq[i] += np.stack([(x[:width] ** 2).sum(), (y[:width] ** 2).sum()])
        for s in range(n_steps):
            dy = (x - y) * f
            drift = c * (mean_x_path[s] - x) * dt - K * dy
            noise = np.sqrt(np.maximum(g(x), 0.0) * dt) * rng.standard_normal(w)
            x = np.clip(x + drift + noise, 0.0, 1.0)
            y = np.clip(y + dy, 0.0, 1.0)
            if s + 1 in record:
                i = record[s + 1]
                sums[i] += np.stack([x[:width].sum(), y[:width].sum()])
                sumsq[i] += np.stack([(x[:width] ** 2).sum(), (y[:width] ** 2).sum()])
    mean = sums / n_replicas
    var = np.maximum(sumsq / n_replicas - mean ** 2, 0.0)
    return mean, np.sqrt(var / n_replicas)
