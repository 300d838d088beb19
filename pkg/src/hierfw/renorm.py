"""Renormalisation analysis: effective equilibria, the map F and its orbit.

The level-l effective process is the pair

    dx = E_l [ c_l (theta - x) dt + sqrt(g_l(x)) dw + K_l e_l (y - x) dt ],
    dy = e_l (x - y) dt,

whose unique equilibrium Gamma_theta defines the renormalisation map
(F g)(theta) = E^{Gamma_theta}[ g(x) ].  Iterating F with level-n rates and
scaling by the clustering coefficients A_n drives any admissible g to the
Fisher-Wright function x(1-x) in the clustering regime.

Sampling scheme: the exchange part of the pair is a linear rotation with the
weighted mean u = (x + EK y)/(1+EK) conserved and the difference decaying at
rate EKe + e; both it and the drift decay toward theta are applied exactly,
and the noise enters as a mean-preserving moment-matched Beta kick.  The step
size then only needs to resolve the slow relaxation rate Ec/(1+EK) and the
noise scale, so deep levels (where the time scales separate exponentially)
cost the same as level 0, and the boundary-singular equilibria of the
clustering regime keep their correct boundary behaviour.

Equilibrium moments default to long-run time averages over independent
replicas (with a split-half stationarity check); an endpoint mode returning
one independent draw per replica drives the interaction chain.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import rng as rngmod
from .diffusion import DiffusionFn, GridFunction, g_fw
from .params import ClusteringCoefficients, DerivedParams, ModelParams


@dataclass(frozen=True)
class EquilibriumBudget:
    """Simulation effort for one equilibrium, in slow-relaxation-time units."""

    n_replicas: int = 64
    burn: float = 20.0
    sample: float = 80.0
    dt_factor: float = 0.01
    stride: int = 4


@dataclass
class EquilibriumEstimate:
    theta: float
    ex: float
    ey: float
    exx: float
    eyy: float
    exy: float
    fg: float                  # E[g(x)] = (F g)(theta)
    se: dict                   # standard errors keyed like the fields
    flagged: bool
    n_replicas: int
    total_steps: int
    dt: float


class _PairIntegrator:
    """Vectorised split-step scheme for a batch of effective pairs.

    Strang composition R(dt/2) D(dt/2) N(dt) D(dt/2) R(dt/2): the exchange
    rotation R (weighted mean conserved, difference decaying at EKe + e) and
    the drift decay D toward theta are applied exactly; only the noise kick N
    is stochastic.  The symmetric ordering removes the O(dt) equilibrium
    bias of the plain Euler splitting.
    """

    def __init__(self, E, c, K, e, g, dt_factor):
        self.E, self.c, self.K, self.e, self.g = E, c, K, e, g
        self.r_fast = E * K * e + e
        self.r_slow = E * c / (1.0 + E * K)
        # curvature proxy 4 * max(g): robust against Monte Carlo jitter in
        # tabulated iterates, unlike the grid's finite-difference Lipschitz
        if g.kind == "grid":
            g_scale = 4.0 * float(np.max(g.grid.values))
        else:
            g_scale = g.d
        noise_rate = E * E * max(g_scale, 1e-12) / (1.0 + E * K) ** 2
        dt = dt_factor / max(self.r_slow, noise_rate, 1e-300)
        # keep the per-step variance injection moderate so the splitting of
        # drift against noise stays accurate
        kick_sq_rate = E * E * max(g_scale, 1e-300) / (1.0 + E * K) ** 2
        self.dt = min(dt, 0.15 ** 2 / kick_sq_rate)
        self.half_decay = math.exp(-self.r_fast * self.dt / 2.0)
        self.half_drift = math.exp(-E * c * self.dt / 2.0)
        self.w_u = 1.0 / (1.0 + E * K)

    def steps_for(self, relax_times: float) -> int:
        return max(int(math.ceil(relax_times / max(self.r_slow, 1e-300) / self.dt)), 1)

    def _half_rotation(self, x, y):
        u = (x + self.E * self.K * y) * self.w_u
        delta = (x - y) * self.half_decay
        x[...] = u + (self.E * self.K * self.w_u) * delta
        y[...] = u - self.w_u * delta

    def _noise_kick(self, x, rng):
        """Mean-preserving Beta redraw with variance E^2 g(x) dt.

        A Gaussian kick of that size misresolves the boundary-singular
        equilibrium densities of the clustering regime (and its clipping
        biases E[g] upward); the matched Beta transition keeps the state in
        [0,1] with the correct boundary behaviour at any step size.
        """
        v = self.E * self.E * np.maximum(self.g(x), 0.0) * self.dt
        span = x * (1.0 - x)
        v = np.minimum(v, 0.25 * span)
        live = v > 0.0
        if not np.any(live):
            return
        ratio = np.where(live, span / np.maximum(v, 1e-300) - 1.0, 1.0)
        a = np.maximum(x * ratio, 1e-12)
        b = np.maximum((1.0 - x) * ratio, 1e-12)
        draw = rng.beta(a, b)
        x[...] = np.where(live, draw, x)

    def advance(self, x, y, theta, n_steps, rng):
        """In-place advance; theta is a scalar or an array broadcast over x."""
        for _ in range(n_steps):
            self._half_rotation(x, y)
            x[...] = theta + (x - theta) * self.half_drift
            self._noise_kick(x, rng)
            x[...] = theta + (x - theta) * self.half_drift
            self._half_rotation(x, y)


def mv_equilibrium(E: float, c: float, K: float, e: float, g: DiffusionFn,
                   theta: float, budget: EquilibriumBudget, seed: int,
                   label: str = "mv") -> EquilibriumEstimate:
    """Equilibrium moments of the effective pair with drift centre theta.

    Long-run time averages over independent replicas; the estimate is
    flagged when a split-half comparison of the sampling window rejects
    stationarity at 4 combined standard errors.
    """
    if not 0.0 <= theta <= 1.0:
        raise ValueError("theta must lie in [0,1]")
    integ = _PairIntegrator(E, c, K, e, g, budget.dt_factor)
    R = budget.n_replicas
    rng = rngmod.stream(seed, label, "theta", f"{theta:.17g}")
    x = np.full(R, float(theta))
    y = np.full(R, float(theta))
    n_burn = integ.steps_for(budget.burn)
    integ.advance(x, y, theta, n_burn, rng)
    n_sample = integ.steps_for(budget.sample)
    acc = np.zeros((6, R))
    acc_half = np.zeros((2, R))
    n_rec = 0
    half_counts = [0, 0]
    for s in range(0, n_sample, budget.stride):
        n_adv = min(budget.stride, n_sample - s)
        integ.advance(x, y, theta, n_adv, rng)
        acc[0] += x
        acc[1] += y
        acc[2] += x * x
        acc[3] += y * y
        acc[4] += x * y
        acc[5] += integ.g(x)
        n_rec += 1
        h = 0 if s < n_sample // 2 else 1
        acc_half[h] += x * x
        half_counts[h] += 1
    means = acc / n_rec                      # per-replica time averages
    grand = means.mean(axis=1)
    se = means.std(axis=1, ddof=1) / math.sqrt(R)
    h0 = acc_half[0] / max(half_counts[0], 1)
    h1 = acc_half[1] / max(half_counts[1], 1)
    diff = h1 - h0
    gap = abs(float(diff.mean()))
    gap_se = float(diff.std(ddof=1)) / math.sqrt(R)
    flagged = bool(gap > 4.0 * gap_se + 1e-12)
    keys = ("ex", "ey", "exx", "eyy", "exy", "fg")
    return EquilibriumEstimate(
        theta=theta,
        **dict(zip(keys, map(float, grand))),
        se={k: float(v) for k, v in zip(keys, se)},
        flagged=flagged, n_replicas=R,
        total_steps=(n_burn + n_sample) * R, dt=integ.dt,
    )


def mv_equilibrium_batch(E, c, K, e, g, thetas: np.ndarray,
                         budget: EquilibriumBudget, seed: int,
                         label: str = "F") -> list:
    """mv_equilibrium for many drift centres in one vectorised run."""
    thetas = np.asarray(thetas, dtype=float)
    integ = _PairIntegrator(E, c, K, e, g, budget.dt_factor)
    R = budget.n_replicas
    theta_mat = np.repeat(thetas[:, None], R, axis=1)
    rng = rngmod.stream(seed, label, "grid", *[f"{t:.17g}" for t in thetas])
    x = theta_mat.copy()
    y = theta_mat.copy()
    n_burn = integ.steps_for(budget.burn)
    integ.advance(x, y, theta_mat, n_burn, rng)
    n_sample = integ.steps_for(budget.sample)
    acc = np.zeros((6,) + x.shape)
    acc_half = np.zeros((2,) + x.shape)
    half_counts = [0, 0]
    n_rec = 0
    for s in range(0, n_sample, budget.stride):
        n_adv = min(budget.stride, n_sample - s)
        integ.advance(x, y, theta_mat, n_adv, rng)
        acc[0] += x
        acc[1] += y
        acc[2] += x * x
        acc[3] += y * y
        acc[4] += x * y
        acc[5] += integ.g(x)
        n_rec += 1
        h = 0 if s < n_sample // 2 else 1
        acc_half[h] += x * x
        half_counts[h] += 1
    means = acc / n_rec
    keys = ("ex", "ey", "exx", "eyy", "exy", "fg")
    out = []
    for i, theta in enumerate(thetas):
        grand = means[:, i, :].mean(axis=1)
        se = means[:, i, :].std(axis=1, ddof=1) / math.sqrt(R)
        h0 = acc_half[0, i] / max(half_counts[0], 1)
        h1 = acc_half[1, i] / max(half_counts[1], 1)
        diff = h1 - h0
        gap = abs(float(diff.mean()))
        gap_se = float(diff.std(ddof=1)) / math.sqrt(R)
        out.append(EquilibriumEstimate(
            theta=float(theta), **dict(zip(keys, map(float, grand))),
            se={k: float(v) for k, v in zip(keys, se)},
            flagged=bool(gap > 4.0 * gap_se + 1e-12), n_replicas=R,
            total_steps=(n_burn + n_sample) * R, dt=integ.dt,
        ))
    return out


# ----------------------------------------------------------------------
# The renormalisation map
# ----------------------------------------------------------------------


def default_theta_grid(n_interior: int = 41) -> np.ndarray:
    """Chebyshev-like interior nodes plus the exact endpoints."""
    k = np.arange(1, n_interior + 1)
    interior = 0.5 * (1.0 - np.cos(np.pi * k / (n_interior + 1)))
    return np.concatenate([[0.0], interior, [1.0]])


@dataclass
class FGrid:
    """Monte Carlo evaluation of F g on a grid, with per-node errors."""

    fn: DiffusionFn
    se: np.ndarray
    flagged: bool


def evaluate_F(g: DiffusionFn, E: float, c: float, K: float, e: float,
               theta_grid: np.ndarray, budget: EquilibriumBudget,
               seed: int, label: str = "F") -> FGrid:
    """(F g)(theta) = E^{Gamma_theta}[g(x)] at each grid node.

    Endpoints are pinned to zero exactly (the equilibrium at theta in {0,1}
    is degenerate at the boundary where g vanishes), so the result is again
    an admissible diffusion function.
    """
    theta_grid = np.asarray(theta_grid, dtype=float)
    if theta_grid[0] != 0.0 or theta_grid[-1] != 1.0:
        raise ValueError("theta grid must include the endpoints 0 and 1")
    interior = theta_grid[1:-1]
    ests = mv_equilibrium_batch(E, c, K, e, g, interior, budget, seed, label)
    values = np.concatenate([[0.0], [m.fg for m in ests], [0.0]])
    se = np.concatenate([[0.0], [m.se["fg"] for m in ests], [0.0]])
    # Monte Carlo noise may leave slightly negative node values; they are an
    # estimate of a non-negative quantity, clip before building the function.
    fn = DiffusionFn(kind="grid",
                     grid=GridFunction(theta_grid, np.maximum(values, 0.0)))
    return FGrid(fn=fn, se=se, flagged=any(m.flagged for m in ests))


def fw_recursion_oracle(d: float, levels: int,
                        coefficients: ClusteringCoefficients) -> np.ndarray:
    """Exact orbit of the Fisher-Wright family: rates d_n with F^(n) (d g_FW)
    = d_n g_FW, obeying d_{n+1} = d_n / (1 + d_n A_n^n), i.e.
    1/d_n = 1/d + A_0^{n-1}."""
    out = np.empty(levels + 1)
    out[0] = d
    for n in range(levels):
        a = coefficients.terms[n]
        out[n + 1] = out[n] / (1.0 + out[n] * a)
    return out


# ----------------------------------------------------------------------
# Orbit of F with universality scaling
# ----------------------------------------------------------------------


@dataclass
class OrbitReport:
    levels: np.ndarray            # 1 .. n_levels
    A: np.ndarray                 # A_n per level
    theta_grid: np.ndarray
    scaled_values: np.ndarray     # (n_levels, nodes): A_n * (F^(n) g)
    scaled_se: np.ndarray
    sup_distance: np.ndarray      # sup-node |A_n F^(n) g - g_FW|
    grids: list                   # F^(n) g as DiffusionFn per level
    flagged: bool

    def csv_rows(self):
        return [(int(n), float(a), float(s))
                for n, a, s in zip(self.levels, self.A, self.sup_distance)]


def iterate_F_scaled(g: DiffusionFn, params: ModelParams,
                     derived: DerivedParams, coefficients: ClusteringCoefficients,
                     n_levels: int, budget: EquilibriumBudget, seed: int,
                     theta_grid: Optional[np.ndarray] = None) -> OrbitReport:
    """Compute F^(n) g with level-n rates and report A_n F^(n) g vs g_FW."""
    if n_levels > params.levels + 1:
        raise ValueError("orbit depth exceeds stored coefficient range")
    grid = default_theta_grid() if theta_grid is None else np.asarray(theta_grid)
    fw_ref = g_fw(grid)
    current = g
    rows, ses, sups, grids = [], [], [], []
    flagged = False
    for n in range(1, n_levels + 1):
        lvl = n - 1
        res = evaluate_F(current, float(derived.E[lvl]), params.c[lvl],
                         params.K[lvl], params.e[lvl], grid, budget, seed,
                         label=f"orbit-{n}")
        current = res.fn
        flagged = flagged or res.flagged
        A_n = coefficients.A[n]
        vals = A_n * res.fn.grid.values
        rows.append(vals)
        ses.append(A_n * res.se)
        sups.append(float(np.max(np.abs(vals - fw_ref))))
        grids.append(current)
    return OrbitReport(
        levels=np.arange(1, n_levels + 1), A=coefficients.A[1:n_levels + 1],
        theta_grid=grid, scaled_values=np.asarray(rows),
        scaled_se=np.asarray(ses), sup_distance=np.asarray(sups),
        grids=grids, flagged=flagged,
    )


# ----------------------------------------------------------------------
# Interaction chain
# ----------------------------------------------------------------------


@dataclass
class ChainSample:
    """Replica ensemble of the interaction chain M^k_{-l}.

    x[l] and y[l] hold the active and effective-colour values drawn at the
    step from -(l+1) to -l; colours below l equal x[l], colours above k keep
    their declared initial means.
    """

    k: int
    theta_start: float
    x: np.ndarray      # (k+1, R), level index l = row
    y: np.ndarray      # (k+1, R)


def sample_interaction_chain(k: int, params: ModelParams,
                             derived: DerivedParams, g_orbit: Sequence[DiffusionFn],
                             n_replicas: int, budget: EquilibriumBudget,
                             seed: int) -> ChainSample:
    """Descend the interaction chain from level k by equilibrium sampling.

    The step -(l+1) -> -l draws (x_l, y_{l,l}) from the level-l equilibrium
    centred at the current active value (endpoint mode: one independent
    trajectory per replica), sets the fast colours equal to x_l and carries
    the slow colours; only the active value feeds the next level down.
    """
    if len(g_orbit) < k + 1:
        raise ValueError("g_orbit must provide F^(l) g for l = 0..k")
    theta0 = float(derived.theta_seq[k])
    R = n_replicas
    centre = np.full(R, theta0)
    xs = np.empty((k + 1, R))
    ys = np.empty((k + 1, R))
    for l in range(k, -1, -1):
        integ = _PairIntegrator(float(derived.E[l]), params.c[l], params.K[l],
                                params.e[l], g_orbit[l], budget.dt_factor)
        rng = rngmod.stream(seed, "chain", k, l)
        x = centre.copy()
        y = centre.copy()
        integ.advance(x, y, centre, integ.steps_for(budget.burn), rng)
        xs[l] = x
        ys[l] = y
        centre = x.copy()
    return ChainSample(k=k, theta_start=theta0, x=xs, y=ys)


def chain_moment_predictions(k: int, derived: DerivedParams,
                             coefficients: ClusteringCoefficients,
                             g_top: DiffusionFn) -> tuple:
    """Predicted chain means and variances per level.

    The active value at level -m has mean vartheta_k and variance
    A_m^k (F^(k+1) g)(vartheta_k); g_top must be F^(k+1) g.
    """
    theta = float(derived.theta_seq[k])
    top = float(g_top(theta))
    means = np.full(k + 1, theta)
    variances = np.array([coefficients.A_block(m, k) * top for m in range(k + 1)])
    return means, variances


# ----------------------------------------------------------------------
# Volatility profile
# ----------------------------------------------------------------------


def volatility_profile(k: int, coefficients: ClusteringCoefficients) -> np.ndarray:
    """f^k(l) = A_0^l / A_0^k for l = 0..k (inclusive block sums)."""
    A0 = np.array([coefficients.A_block(0, l) for l in range(k + 1)])
    return A0 / A0[-1]


def classify_profile(coefficients: ClusteringCoefficients, k: int,
                     epsilons=(0.25, 0.5)) -> str:
    """Fast / diffusive / slow clustering from the crossing levels of f^k.

    Tracks the smallest level where the profile reaches epsilon for a range
    of depths k' <= k.  A crossing that stays within O(1) of k' (slope one,
    epsilon shifting only the intercept) is fast clustering; a crossing at a
    proportional level kappa(epsilon) k' is diffusive; a crossing at o(k') is
    slow.
    """
    if k < 2:
        raise ValueError("profile classification needs depth >= 2")
    depths = np.arange(min(max(2, k // 2), k - 1), k + 1)
    slopes = []
    for eps in epsilons:
        crossings = []
        for kk in depths:
            f = volatility_profile(int(kk), coefficients)
            crossings.append(int(np.argmax(f >= eps)))
        centred = depths - depths.mean()
        slope = float(np.dot(centred, np.asarray(crossings, dtype=float)
                             - np.mean(crossings)) / np.dot(centred, centred))
        slopes.append(slope)
    s = float(np.mean(slopes))
    if s > 0.85:
        return "fast"
    if s < 0.15:
        return "slow"
    return "diffusive"
