"""Model parameters, derived constants and the clustering analysis.

The model is controlled by a group order N, migration coefficients c_k,
seed-bank sizes K_m and exchange speeds e_m.  Everything downstream of those
sequences is deterministic arithmetic collected here:

  * slowing-down constants E_k = 1 / (1 + sum_{m<k} K_m),
  * total exchange rate chi and total seed-bank size rho,
  * the wake-up time law (mixture of exponentials) and its tail exponent,
  * the clustering coefficients A_n, A_m^n, B_m and their closed-form
    asymptotics for the polynomial and pure-exponential coefficient families,
  * the clustering / coexistence verdict, and a numerical hazard-integral
    diagnostic cross-checking it at fixed N.

Infinite sums (rho, chi) are evaluated on the stored prefix; divergence is a
declared property of the coefficient family, never "detected" numerically.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.special import zeta

from . import hiergeo
from .diffusion import DiffusionFn


class FamilyError(ValueError):
    """Operation needs a declared coefficient family."""


CLUSTERS = "clusters"
COEXISTS = "coexists"


# ----------------------------------------------------------------------
# Coefficient families
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class ExponentialFamily:
    """Pure exponential coefficients K_m = K^m, e_m = e^m, c_k = c^k."""

    K: float
    e: float
    c: float

    def sequences(self, levels: int):
        m = np.arange(levels + 1, dtype=float)
        return self.c ** m, self.e ** m, self.K ** m

    def rho(self) -> tuple:
        if self.K >= 1:
            return math.inf, True
        return 1.0 / (1.0 - self.K), False


@dataclass(frozen=True)
class PolynomialFamily:
    """Asymptotically polynomial coefficients.

    K_m ~ A m^-alpha, e_m ~ B m^-beta, c_k ~ F k^-phi as the index grows.
    For alpha <= 1 the concrete K-sequence is chosen with exact partial sums
    (sum_{m<k} K_m = (A/(1-alpha)) k^{1-alpha}, resp. A log(k+1)), which pins
    E_k to its asymptotic form and lets the slow logarithmic asymptotics of
    A_n be reached at numerically accessible n.  The asymptotic class is the
    same for any admissible representative.
    """

    alpha: float
    beta: float
    phi: float
    A: float = 1.0
    B: float = 1.0
    F: float = 1.0

    def sequences(self, levels: int):
        m = np.arange(levels + 1, dtype=float)
        c = self.F * np.maximum(m, 1.0) ** (-self.phi)
        e = self.B * (m + 1.0) ** (-self.beta)
        if self.alpha < 1:
            a = 1.0 - self.alpha
            K = (self.A / a) * ((m + 1.0) ** a - m ** a)
        elif self.alpha == 1:
            K = self.A * (np.log(m + 2.0) - np.log(m + 1.0))
        else:
            K = self.A * (m + 1.0) ** (-self.alpha)
        return c, e, K

    def rho(self) -> tuple:
        if self.alpha <= 1:
            return math.inf, True
        return self.A * float(zeta(self.alpha)), False


Family = ExponentialFamily | PolynomialFamily


# ----------------------------------------------------------------------
# Parameters and derived constants
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class InitSpec:
    """Initial law of a colony: component means plus an i.i.d. law shape.

    theta_y may be shorter than the number of colours; missing entries repeat
    the declared colour-regular limit ``theta_limit`` (defaults to the last
    given value).
    """

    theta_x: float
    theta_y: tuple
    law: str = "deterministic"  # deterministic | beta | two-point
    concentration: float = 2.0  # beta law: a = theta * conc, b = (1-theta) * conc
    theta_limit: Optional[float] = None

    def __post_init__(self):
        if not 0.0 <= self.theta_x <= 1.0:
            raise ValueError("theta_x must lie in [0,1]")
        if any(not 0.0 <= t <= 1.0 for t in self.theta_y):
            raise ValueError("theta_y entries must lie in [0,1]")
        if self.law not in ("deterministic", "beta", "two-point"):
            raise ValueError(f"unknown initial law {self.law!r}")
        if self.theta_limit is None:
            object.__setattr__(self, "theta_limit", self.theta_y[-1])

    def theta_y_full(self, n_colours: int) -> np.ndarray:
        out = np.full(n_colours, self.theta_limit, dtype=float)
        upto = min(len(self.theta_y), n_colours)
        out[:upto] = self.theta_y[:upto]
        return out

    @classmethod
    def constant(cls, theta: float, law: str = "deterministic",
                 concentration: float = 2.0) -> "InitSpec":
        return cls(theta, (theta,), law, concentration, theta)


@dataclass(frozen=True)
class ModelParams:
    """Full parameterisation of the truncated hierarchical system.

    ``levels`` = k means colours 0..k and geometry truncated at level k+1
    (N^{k+1} colonies), so c, e, K each hold k+1 entries.
    """

    N: int
    levels: int
    c: tuple
    e: tuple
    K: tuple
    g: DiffusionFn
    d: Optional[float] = None
    init: Optional[InitSpec] = None
    family: Optional[Family] = None

    def __post_init__(self):
        n = self.levels + 1
        if not (len(self.c) == len(self.e) == len(self.K) == n):
            raise ValueError("c, e, K must each hold levels+1 entries")
        if any(v <= 0 for seq in (self.c, self.e, self.K) for v in seq):
            raise ValueError("c, e, K must be positive")
        logN = math.log(self.N)
        for m, (Km, em) in enumerate(zip(self.K, self.e)):
            if math.log(Km) + math.log(em) >= (m + 1) * logN:
                raise ValueError(
                    f"K_{m} e_{m} = {Km * em} violates the exchange growth condition"
                )
        # migration growth condition checked by KernelSpec
        self.kernel_spec()

    @classmethod
    def from_family(cls, N: int, levels: int, family: Family, g: DiffusionFn,
                    d: Optional[float] = None,
                    init: Optional[InitSpec] = None) -> "ModelParams":
        c, e, K = family.sequences(levels)
        return cls(N, levels, tuple(c), tuple(e), tuple(K), g, d, init, family)

    def kernel_spec(self) -> hiergeo.KernelSpec:
        return hiergeo.KernelSpec(N=self.N, c=tuple(self.c))

    @property
    def n_colonies(self) -> int:
        return self.N ** (self.levels + 1)

    def exchange_rates(self) -> np.ndarray:
        """Wake-up rates e_m / N^m per colour."""
        m = np.arange(self.levels + 1, dtype=float)
        return np.asarray(self.e) / float(self.N) ** m


@dataclass(frozen=True)
class DerivedParams:
    rho: float
    rho_infinite: bool
    chi: float
    E: np.ndarray           # E_0 .. E_{levels+1}
    theta_seq: np.ndarray   # vartheta_0 .. vartheta_{levels}
    mean_wakeup: float      # rho / chi


def slowing_constants(K: np.ndarray, upto: int) -> np.ndarray:
    """E_k = 1 / (1 + sum_{m<k} K_m) for k = 0..upto."""
    partial = np.concatenate([[0.0], np.cumsum(K)])[: upto + 1]
    return 1.0 / (1.0 + partial)


def derive(params: ModelParams) -> DerivedParams:
    """All derived constants, exact on the stored prefix."""
    K = np.asarray(params.K, dtype=float)
    rates = params.exchange_rates()
    chi = float(np.sum(K * rates))
    if params.family is not None:
        rho, rho_inf = params.family.rho()
    else:
        rho, rho_inf = float(np.sum(K)), False
    E = slowing_constants(K, params.levels + 1)
    if params.init is not None:
        th_y = params.init.theta_y_full(params.levels + 1)
        csum_K = np.cumsum(K)
        csum_Kth = np.cumsum(K * th_y)
        theta_seq = (params.init.theta_x + csum_Kth) / (1.0 + csum_K)
    else:
        theta_seq = np.full(params.levels + 1, np.nan)
    mean_wakeup = rho / chi if not rho_inf else math.inf
    return DerivedParams(rho=rho, rho_infinite=rho_inf, chi=chi, E=E,
                         theta_seq=theta_seq, mean_wakeup=mean_wakeup)


# ----------------------------------------------------------------------
# Wake-up time law
# ----------------------------------------------------------------------


def wakeup_tail(t, params: ModelParams, derived: DerivedParams):
    """P(tau > t): mixture of exponential tails, one per colour."""
    t = np.asarray(t, dtype=float)
    K = np.asarray(params.K)
    rates = params.exchange_rates()
    w = K * rates / derived.chi
    return np.sum(w[:, None] * np.exp(-np.outer(rates, np.atleast_1d(t))), axis=0)


def wakeup_sampler(params: ModelParams, derived: DerivedParams, rng,
                   n: int = 1) -> np.ndarray:
    """n draws of the wake-up time tau.

    Colour m is chosen with probability K_m e_m N^-m / chi, then the duration
    is exponential with rate e_m / N^m.
    """
    K = np.asarray(params.K)
    rates = params.exchange_rates()
    w = K * rates / derived.chi
    colours = rng.choice(len(w), size=n, p=w / w.sum())
    return rng.exponential(1.0 / rates[colours])


# ----------------------------------------------------------------------
# Regime classification
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class RegimeReport:
    family_kind: str                     # polynomial | exponential | generic
    rho_infinite: bool
    gamma: Optional[float] = None        # wake-up tail exponent
    phi_hat_class: Optional[str] = None  # const | log | log^{1-alpha} | loglog
    delta: Optional[float] = None        # exponential family degree value
    degree: Optional[str] = None         # e.g. "0.50^-", "0^-", "0^+"
    clustering: Optional[str] = None
    criterion_used: Optional[str] = None

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in (
            "family_kind", "rho_infinite", "gamma", "phi_hat_class",
            "delta", "degree", "clustering", "criterion_used")}

    def as_text(self) -> str:
        return "\n".join(f"{k} = {v}" for k, v in self.as_dict().items()) + "\n"

    def as_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def classify_regime(params: ModelParams) -> RegimeReport:
    """Tail exponent, slowly-varying class and random-walk degree.

    Only the polynomial and pure-exponential families admit closed forms; a
    generic parameter set yields a report with those fields unset.
    """
    fam = params.family
    rho_inf = derive(params).rho_infinite
    if isinstance(fam, ExponentialFamily):
        N, K, e, c = params.N, fam.K, fam.e, fam.c
        gamma = math.log(N / (K * e)) / math.log(N / e)
        delta = math.log(c) / math.log(N / c)
        if not rho_inf:
            gamma, phi_hat = None, None
        else:
            phi_hat = "const" if K > 1 else "log"
        sign = "-" if c <= 1 else "+"
        report = RegimeReport(
            family_kind="exponential", rho_infinite=rho_inf, gamma=gamma,
            phi_hat_class=phi_hat, delta=delta,
            degree=f"{delta:.6g}^{sign}" if c != 1 else "0^-",
        )
    elif isinstance(fam, PolynomialFamily):
        if not rho_inf:
            gamma, phi_hat = None, None
        else:
            gamma = 1.0
            if fam.alpha < 1:
                phi_hat = "log^{1-alpha}"
            else:
                phi_hat = "loglog"
        degree = "0^-" if fam.phi >= -1 else "0^+"
        report = RegimeReport(
            family_kind="polynomial", rho_infinite=rho_inf, gamma=gamma,
            phi_hat_class=phi_hat, delta=None, degree=degree,
        )
    else:
        return RegimeReport(family_kind="generic", rho_infinite=rho_inf)
    return report


def _verdict(params: ModelParams, report: RegimeReport) -> tuple:
    fam = params.family
    if fam is None:
        raise FamilyError("clustering verdict needs a declared family")
    if not report.rho_infinite:
        if isinstance(fam, ExponentialFamily):
            diverges = fam.c <= 1
        else:
            diverges = fam.phi >= -1
        return (CLUSTERS if diverges else COEXISTS), "finite-rho migration sum"
    if isinstance(fam, ExponentialFamily):
        ok = fam.K * fam.c <= 1 <= fam.K
        return (CLUSTERS if ok else COEXISTS), "pure-exponential Kc <= 1 <= K"
    ok = -fam.phi <= fam.alpha <= 1
    return (CLUSTERS if ok else COEXISTS), "polynomial -phi <= alpha <= 1"


def clustering_verdict(params: ModelParams, report: RegimeReport) -> str:
    """Clustering vs coexistence, decided symbolically from the family.

    Finite seed-bank: clusters iff sum 1/c_k diverges (migration only).
    Infinite seed-bank: polynomial clusters iff -phi <= alpha <= 1,
    exponential clusters iff Kc <= 1 <= K; boundary equalities cluster.
    """
    return _verdict(params, report)[0]


def classify(params: ModelParams) -> RegimeReport:
    """classify_regime plus the verdict, in one report."""
    report = classify_regime(params)
    verdict = criterion = None
    if params.family is not None:
        verdict, criterion = _verdict(params, report)
    return RegimeReport(**{**report.as_dict(),
                           "clustering": verdict, "criterion_used": criterion})


# ----------------------------------------------------------------------
# Clustering coefficients A_n and their asymptotics
# ----------------------------------------------------------------------


@dataclass(frozen=True)
class AsymptoticClass:
    label: str
    constant: Optional[float]
    asymptote: Optional[Callable]   # n -> predicted A_n
    logarithmic: bool = False       # log / loglog growth (slower convergence)


@dataclass(frozen=True)
class ClusteringCoefficients:
    terms: np.ndarray        # A_k^k for k = 0..n_max-1
    A: np.ndarray            # A_n = sum_{k<n} A_k^k, n = 0..n_max
    B: np.ndarray            # B_m
    asymptotic: AsymptoticClass

    def A_block(self, m: int, n: int) -> float:
        """A_m^n = (1/2) sum_{k=m}^{n} E_k/c_k * ... (inclusive ends)."""
        if not 0 <= m <= n < len(self.terms):
            raise ValueError("block indices out of stored range")
        return float(np.sum(self.terms[m:n + 1]))

    def block_table(self) -> np.ndarray:
        n = len(self.terms)
        tab = np.full((n, n), np.nan)
        for m in range(n):
            tab[m, m:] = np.cumsum(self.terms[m:])
        return tab


def _dichotomy_class(fam: Optional[Family], rho: float,
                     rho_inf: bool, c_seq: np.ndarray) -> AsymptoticClass:
    if fam is None:
        return AsymptoticClass("generic", None, None)
    if not rho_inf:
        const = 1.0 / (2.0 * (1.0 + rho))
        csum = np.concatenate([[0.0], np.cumsum(1.0 / c_seq)])

        def asym(n, csum=csum, const=const):
            return const * csum[int(n)]

        return AsymptoticClass("finite-rho", const, asym)
    if isinstance(fam, ExponentialFamily):
        K, e, c = fam.K, fam.e, fam.c
        Kc = K * c
        if Kc > 1:
            return AsymptoticClass("bounded", None, None)
        if K == 1:
            if c < 1:
                c1 = 1.0 / (2.0 * (1.0 - c))
                return AsymptoticClass(
                    "exp-K1-power", c1, lambda n: c1 * c ** (-(n - 1)) / n)
            return AsymptoticClass(
                "exp-K1-log", 0.5, lambda n: 0.5 * math.log(n), logarithmic=True)
        if c < K * e:
            hat = (K - 1) / (2.0 * K * (1.0 - Kc)) if Kc < 1 else None
            bar = (K - 1) / (2.0 * K)
        elif c == K * e:
            # the k-th summand tends to (1/2)(K-1)(Kc)^{-k} * K/(2K-1); the
            # constant is K(K-1)/(2(2K-1)), not (K-1)^2/(2(2K-1))
            hat = K * (K - 1) / (2.0 * (2 * K - 1) * (1.0 - Kc)) if Kc < 1 else None
            bar = K * (K - 1) / (2.0 * (2 * K - 1))
        else:
            hat = (K - 1) / (2.0 * (1.0 - Kc)) if Kc < 1 else None
            bar = (K - 1) / 2.0
        if Kc < 1:
            return AsymptoticClass(
                "exp-power", hat, lambda n: hat * Kc ** (-(n - 1)))
        return AsymptoticClass("exp-linear", bar, lambda n: bar * n)
    alpha, phi, A, F = fam.alpha, fam.phi, fam.A, fam.F
    if -phi > alpha:
        return AsymptoticClass("bounded", None, None)
    if alpha < 1:
        if -phi < alpha:
            c1 = (1 - alpha) / (2 * A * F * (alpha + phi))
            return AsymptoticClass(
                "poly-power", c1, lambda n: c1 * n ** (alpha + phi))
        c2 = (1 - alpha) / (2 * A * F)
        return AsymptoticClass(
            "poly-log", c2, lambda n: c2 * math.log(n), logarithmic=True)
    if -phi < 1:
        c3 = 1.0 / (2 * A * F * (1 + phi))
        return AsymptoticClass(
            "poly-power-over-log", c3,
            lambda n: c3 * n ** (1 + phi) / math.log(n), logarithmic=True)
    c4 = 1.0 / (2 * A * F)
    return AsymptoticClass(
        "poly-loglog", c4, lambda n: c4 * math.log(math.log(n)), logarithmic=True)


def compute_A(params: ModelParams, derived: DerivedParams,
              n_max: int) -> ClusteringCoefficients:
    """Clustering coefficients on the stored prefix.

    A_n = (1/2) sum_{k=0}^{n-1} (E_k / c_k) (E_k c_k + e_k)
          / ((E_k c_k + e_k) + E_k K_k e_k),
    with A_m^n the analogous inclusive block sums and B_m the dormant
    correction (1/2) E_m^2 / ((E_m c_m + e_m) + E_m K_m e_m).
    """
    if n_max > params.levels + 1:
        raise ValueError("n_max exceeds the stored coefficient range")
    c = np.asarray(params.c, dtype=float)[:n_max]
    e = np.asarray(params.e, dtype=float)[:n_max]
    K = np.asarray(params.K, dtype=float)[:n_max]
    E = derived.E[:n_max]
    denom = (E * c + e) + E * K * e
    terms = 0.5 * (E / c) * (E * c + e) / denom
    B = 0.5 * E ** 2 / denom
    A = np.concatenate([[0.0], np.cumsum(terms)])
    asym = _dichotomy_class(params.family, derived.rho, derived.rho_infinite, c)
    return ClusteringCoefficients(terms=terms, A=A, B=B, asymptotic=asym)


def coefficient_rows(coeffs: ClusteringCoefficients, n_values) -> list:
    """(n, A_n, predicted_asymptote) rows for CSV export."""
    rows = []
    for n in n_values:
        pred = ""
        if coeffs.asymptotic.asymptote is not None and n >= 2:
            pred = coeffs.asymptotic.asymptote(n)
        rows.append((int(n), float(coeffs.A[int(n)]), pred))
    return rows


# ----------------------------------------------------------------------
# Hazard-integral diagnostic
# ----------------------------------------------------------------------

DIVERGENT = "divergent"
CONVERGENT = "convergent"
INCONCLUSIVE = "inconclusive"


def _log_phi_hat(u: np.ndarray, report: RegimeReport, fam: Family) -> np.ndarray:
    """log phi_hat(t) on a grid of u = log t, per symbolic class."""
    if report.phi_hat_class == "const":
        return np.zeros_like(u)
    if report.phi_hat_class == "log":
        return np.log(u)
    if report.phi_hat_class == "log^{1-alpha}":
        return (1.0 - fam.alpha) * np.log(u)
    if report.phi_hat_class == "loglog":
        return np.log(np.log(u))
    raise FamilyError(f"no phi_hat class for {report.phi_hat_class!r}")


def _expansion_for_horizon(params: ModelParams, log_tmax: float):
    """Kernel expansion deep enough that h_L * T_max stays frozen.

    Returns (expansion, usable log_tmax); the horizon is reduced if the level
    cap cannot cover the request.
    """
    fam = params.family
    base = math.log(params.N)
    if isinstance(fam, ExponentialFamily) and fam.c > 0:
        base = math.log(params.N / fam.c) if fam.c < params.N else base
    guess = int(log_tmax / base * 1.2) + 40
    for L in (guess, int(1.5 * guess), 360):
        L = min(L, 360)
        c_seq = fam.sequences(L - 1)[0]
        spec = hiergeo.KernelSpec(N=params.N, c=tuple(c_seq))
        exp_ = hiergeo.build_expansion(spec)
        if exp_.h[-1] * math.exp(log_tmax) < 0.05:
            return exp_, log_tmax
        if L == 360:
            break
    usable = math.log(0.05 / exp_.h[-1])
    return exp_, usable


def _window_integrals(log_f: Callable, edges: np.ndarray, pts: int = 33) -> np.ndarray:
    """Integrals of exp(log_f(u)) du over consecutive [edges[i], edges[i+1]]."""
    out = np.empty(len(edges) - 1)
    for i in range(len(edges) - 1):
        u = np.linspace(edges[i], edges[i + 1], pts)
        out[i] = np.trapezoid(np.exp(log_f(u)), u)
    return out


def _fit_slope(x: np.ndarray, y: np.ndarray) -> tuple:
    """Least-squares slope plus a curvature indicator (quadratic residual)."""
    coef = np.polyfit(x, y, 1)
    slope = coef[0]
    quad = np.polyfit(x, y, 2)[0] if len(x) >= 4 else 0.0
    curvature = quad * (x[-1] - x[0]) ** 2 / max(abs(y[-1] - y[0]), 1e-12)
    return float(slope), float(curvature)


def hazard_diagnostic(params: ModelParams, report: RegimeReport,
                      T_max: Optional[float] = None,
                      slope_tol: float = 0.05) -> str:
    """Classify the coalescence-hazard integral as divergent or convergent.

    The integrand phi_hat(t)^{-1/gamma} t^{-(1-gamma)/gamma} a_t(0,0) is
    integrated on a log grid and the growth of doubling-window integrals is
    slope-fitted.  Exponential families give power-law integrands and are
    fitted in log t; polynomial families give slowly-varying integrands and
    are fitted in log u with u = log t (where their windows are power-like),
    with one further log-substitution separating the boundary 1/(u log u)
    growth from genuine convergence.  |slope| < ``slope_tol`` reads as
    "divergent like log".  A fit with large curvature where a clean power is
    expected, or an ambiguous final-stage ratio, returns "inconclusive".
    """
    if params.family is None:
        raise FamilyError("hazard diagnostic needs a declared family")
    if not report.rho_infinite:
        raise FamilyError("hazard criterion applies to the infinite seed-bank")
    gamma = report.gamma
    fam = params.family
    exp_kind = isinstance(fam, ExponentialFamily)
    if T_max is None:
        T_max = 1e14 if exp_kind else 1e200
    exp_, log_tmax = _expansion_for_horizon(params, math.log(T_max))

    def log_f(u):
        u = np.asarray(u, dtype=float)
        log_a = hiergeo.log_return_probability(u, exp_)
        return (-(1.0 / gamma) * _log_phi_hat(u, report, fam)
                - ((1.0 - gamma) / gamma) * u + log_a)

    if exp_kind:
        # a_t oscillates log-periodically with period log(N/c) around its
        # power-law envelope; windows of exactly that width sample the
        # envelope once per period, so the slope fit sees a clean power.
        period = math.log(params.N / fam.c)
        n_win = int((log_tmax - math.log(10.0)) / period)
        if n_win < 4:
            raise FamilyError("horizon too short for the window fit")
        edges = math.log(10.0) + period * np.arange(n_win + 1)
        W = _window_integrals(lambda u: log_f(u) + u, edges)
        tail = slice(max(0, n_win - 5), n_win)
        slope, curv = _fit_slope(edges[1:][tail], np.log(W[tail]))
        if slope > slope_tol:
            return DIVERGENT
        if abs(slope) <= slope_tol:
            return DIVERGENT
        if abs(curv) > 0.35:
            return INCONCLUSIVE
        return CONVERGENT

    # polynomial family: windows double in u = log t
    u_max = log_tmax
    n_win = int(math.log2(u_max / 2.0))
    edges = 2.0 * 2.0 ** np.arange(n_win + 1)
    # integrand in du is exp(log_f(u) + u)
    W = _window_integrals(lambda u: log_f(u) + u, edges)
    tail = slice(max(0, n_win - 5), n_win)
    slope, _ = _fit_slope(np.log(edges[1:][tail]), np.log(W[tail]))
    if slope > slope_tol:
        return DIVERGENT
    if abs(slope) <= slope_tol:
        return DIVERGENT
    # negative u-slope: either genuine convergence (u^{q+1}, q < -1) or the
    # boundary 1/(u log u); one more log-substitution separates them, as the
    # boundary gives near-constant windows in v = log u.
    v_edges = np.geomspace(1.5, math.log(u_max), 5)
    Wv = _window_integrals(lambda u: log_f(u) + u, np.exp(v_edges))
    ratio = Wv[-1] / Wv[0]
    if ratio > 0.75:
        return DIVERGENT
    if ratio < 0.45:
        return CONVERGENT
    return INCONCLUSIVE
