"""Asymptotic constants of fringe-tree functionals on random patricia tries.

Everything here is deterministic. The per-size constants come from Mellin
transforms of the Poisson-model functions f_{E,k}, f_{V,k} evaluated at s = -1
(and, when the source is periodic, on the vertical line through -1 at the
Fourier frequencies 2 pi m / d_p).
"""
from __future__ import annotations

import cmath
import math
from collections import Counter
from dataclasses import dataclass
from enum import Enum
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special, stats

from .exceptions import Aperiodic, FringeTriesError, NonConvergent, PoleAt
from .source import SourceDistribution, coentropy, entropy, periodicity, rho
from .trees import Tree, enumerate_patricia_shapes, shape_probability, shape_string

DEFAULT_TOL = 1e-12
DEFAULT_FOURIER_TERMS = 8
QUADRATURE_RELATIVE_ERROR = 1e-9

# Lanczos approximation, g = 7, nine coefficients
LANCZOS_G = 7
LANCZOS_COEFFICIENTS = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)


class Method(Enum):
    CLOSED_FORM = "closed-form"
    TRUNCATED_SERIES = "truncated-series"
    QUADRATURE = "quadrature"
    RECURSION_BOUNDED = "recursion-bounded"


@dataclass(frozen=True)
class AsymptoticConstant:
    value: complex | float
    error_bound: float = 0.0
    method: Method = Method.CLOSED_FORM

    def __float__(self):
        return float(self.value.real if isinstance(self.value, complex) else self.value)


class Interval(NamedTuple):
    lower: float
    upper: float

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return (self.lower + self.upper) / 2

    def contains(self, other: "Interval") -> bool:
        return self.lower <= other.lower and other.upper <= self.upper


def _is_pole(z: complex) -> bool:
    return z.imag == 0 and z.real <= 0 and z.real == math.floor(z.real)


def complex_gamma(z) -> complex:
    """Gamma function on the complex plane (Lanczos, reflection for Re z < 1/2)."""
    z = complex(z)
    if _is_pole(z):
        raise PoleAt(f"Gamma has a pole at {z.real:g}")
    if z.real < 0.5:
        return cmath.pi / (cmath.sin(cmath.pi * z) * complex_gamma(1 - z))
    z -= 1
    x = LANCZOS_COEFFICIENTS[0]
    for i, c in enumerate(LANCZOS_COEFFICIENTS[1:], start=1):
        x += c / (z + i)
    t = z + LANCZOS_G + 0.5
    return math.sqrt(2 * math.pi) * cmath.exp((z + 0.5) * cmath.log(t) - t) * x


def _gamma(z):
    if isinstance(z, complex):
        return complex_gamma(z)
    if _is_pole(complex(z)):
        raise PoleAt(f"Gamma has a pole at {z:g}")
    return math.gamma(z)


def fe_k_star(d: SourceDistribution, k: int, s):
    """Mellin transform of f_{E,k}: (1 - rho(k)) Gamma(k + s) / k!.

    Real s gives a float, complex s a complex. At s = -1 this is (1 - rho(k)) / (k (k - 1)).
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    try:
        g = _gamma(k + s)
    except PoleAt:
        raise PoleAt(f"f*_E,{k}(s) has a pole at s = {s}") from None
    return (1.0 - rho(d, k)) * g / math.factorial(k)


def fe_k(d: SourceDistribution, k: int, lam):
    """f_{E,k}(lambda) = lambda^k / k! e^{-lambda} (1 - rho(k)), vectorised over lambda."""
    lam = np.asarray(lam, dtype=float)
    with np.errstate(divide="ignore"):
        log_term = k * np.log(lam) - lam - math.lgamma(k + 1)
    out = (1.0 - rho(d, k)) * np.exp(log_term)
    return float(out) if out.ndim == 0 else out


def _composition_array(n: int, c: int) -> np.ndarray:
    """All vectors of c nonnegative integers summing to n, one per row."""
    if c == 1:
        return np.array([[n]])
    blocks = []
    for first in range(n + 1):
        rest = _composition_array(n - first, c - 1)
        blocks.append(np.column_stack([np.full(len(rest), first), rest]))
    return np.vstack(blocks)


def _star_sum(d: SourceDistribution, k: int, factor: Callable, tol: float):
    """Sum* over strings alpha of p_alpha^k factor(p_alpha), with |factor| <= 1.

    Strings of one length are grouped by how many characters they draw from each
    class of equal probabilities. Lengths are added until the remaining mass
    2 rho(k)^(N+1) / (1 - rho(k)) drops below ``tol``; returns (sum, that bound).
    """
    classes = Counter(d.probs)
    log_q = np.log(np.array(list(classes.keys())))
    log_mult = np.log(np.array(list(classes.values()), dtype=float))
    r = rho(d, k)
    total = 0.0
    n = 0
    while True:
        comps = _composition_array(n, len(classes))
        log_p = comps @ log_q
        log_count = math.lgamma(n + 1) - special.gammaln(comps + 1).sum(axis=1) + comps @ log_mult
        terms = np.exp(log_count + k * log_p) * factor(np.exp(log_p))
        total += (1 if n == 0 else 2) * terms.sum()
        tail = 2 * r ** (n + 1) / (1 - r)
        if tail < tol:
            return total, tail
        n += 1


def fv_k_star(d: SourceDistribution, k: int, s=-1.0, tol: float = DEFAULT_TOL) -> AsymptoticConstant:
    """Mellin transform of f_{V,k}.

    (1-rho(k))/k! Gamma(k+s) - ((1-rho(k))/k!)^2 Gamma(s+2k) Sum*_alpha p_alpha^k (1+p_alpha)^(-s-2k),
    the string sum truncated once its tail bound (times the prefactor) is below ``tol``.
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    if complex(s).real <= -k:
        raise NonConvergent(f"f*_V,{k}(s) needs Re(s) > {-k}, got s = {s}")
    scale = (1.0 - rho(d, k)) / math.factorial(k)
    g2 = _gamma(s + 2 * k)
    prefactor = scale ** 2 * g2
    exponent = -s - 2 * k

    def factor(p):
        return np.exp(exponent * np.log1p(p))

    series, tail = _star_sum(d, k, factor, tol / max(abs(prefactor), 1e-300))
    value = scale * _gamma(k + s) - prefactor * series
    return AsymptoticConstant(value, abs(prefactor) * tail, Method.TRUNCATED_SERIES)


def fv_k(d: SourceDistribution, k: int, lam: float, tol: float = DEFAULT_TOL) -> AsymptoticConstant:
    """f_{V,k}(lambda) for the Poisson model, the string sum truncated like ``fv_k_star``."""
    if lam <= 0:
        return AsymptoticConstant(0.0, 0.0, Method.CLOSED_FORM)
    scale = (1.0 - rho(d, k)) / math.factorial(k)
    prefactor = scale ** 2 * math.exp(2 * k * math.log(lam) - lam)

    def factor(p):
        return np.exp(-lam * p)

    series, tail = _star_sum(d, k, factor, tol / max(prefactor, 1e-300))
    value = fe_k(d, k, lam) - prefactor * series
    return AsymptoticConstant(value, prefactor * tail, Method.TRUNCATED_SERIES)


def fc_k_star(d: SourceDistribution, k: int, m: int = 0) -> complex:
    """m-th Fourier coefficient of psi_C = psi_E + psi_E'."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    d_p = periodicity(d)
    if d_p == 0:
        return complex(fe_k_star(d, k, -1.0))
    return fourier_coefficient(d, k, "E", m) * (1 + 2j * math.pi * m / d_p)


def fourier_coefficient(d: SourceDistribution, k: int, X: str, m: int, tol: float = DEFAULT_TOL) -> complex:
    """f*_X(-1 - 2 pi m i / d_p) for X in {"E", "V", "C"}."""
    d_p = periodicity(d)
    if d_p == 0:
        raise Aperiodic(f"source {d} is aperiodic; psi_{X} is the constant f*_{X}(-1)")
    s = complex(-1.0, -2 * math.pi * m / d_p)
    if X == "E":
        return fe_k_star(d, k, s)
    if X == "V":
        return complex(fv_k_star(d, k, s, tol).value)
    if X == "C":
        return fc_k_star(d, k, m)
    raise ValueError(f"X must be one of E, V, C, got {X!r}")


@dataclass(frozen=True)
class FourierSeries:
    """Truncated Fourier series of a d_p-periodic psi_X; ``coefficients[m + M]`` is c_m."""

    period: float
    coefficients: tuple
    truncation: int
    residue: float = 0.0

    def coefficient(self, m: int) -> complex:
        return self.coefficients[m + self.truncation]


def fourier_series(d: SourceDistribution, k: int, X: str, M: int = DEFAULT_FOURIER_TERMS, tol: float = DEFAULT_TOL):
    """psi_X for f_{X,k}: a FourierSeries when d_p > 0, else the constant f*_X(-1)."""
    d_p = periodicity(d)
    if d_p == 0:
        if X == "V":
            return float(fv_k_star(d, k, -1.0, tol))
        # psi_C = psi_E when psi_E is constant
        return float(fe_k_star(d, k, -1.0))
    positive = [fourier_coefficient(d, k, X, m, tol) for m in range(M + 1)]
    negative = [c.conjugate() for c in reversed(positive[1:])]
    residue = 2 * abs(positive[M]) if M > 0 else 0.0
    return FourierSeries(d_p, tuple(negative + positive), M, residue)


def psi_eval(series, t: float) -> float:
    """Value of psi at t; a plain number stands for a constant psi."""
    if not isinstance(series, FourierSeries):
        return float(series)
    m = np.arange(-series.truncation, series.truncation + 1)
    phases = np.exp(2j * math.pi * m * t / series.period)
    return float((np.array(series.coefficients) * phases).sum().real)


def sigma_from_constants(H: float, chi: float, fv: float, fc: float):
    """(sigma_hat^2, sigma^2): limiting variances per lambda (Poisson) and per n (fixed n)."""
    sigma2_hat = chi ** 2 + fv / H
    sigma2 = fv / H - fc ** 2 / H ** 2 - 2 * chi * fc / H
    return sigma2_hat, sigma2


def sigma_constants(d: SourceDistribution, k: int, t: float | None = None, M: int = DEFAULT_FOURIER_TERMS, tol: float = DEFAULT_TOL):
    """(sigma_hat^2, sigma^2) for Phi_k, k >= 2 (chi = 0).

    With ``t`` given and a periodic source the oscillating versions are returned,
    psi_V and psi_C evaluated at t (log lambda or log n).
    """
    H = entropy(d)
    if t is None or periodicity(d) == 0:
        fv = float(fv_k_star(d, k, -1.0, tol))
        fc = float(fe_k_star(d, k, -1.0))
    else:
        fv = psi_eval(fourier_series(d, k, "V", M, tol), t)
        fc = psi_eval(fourier_series(d, k, "C", M, tol), t)
    return sigma_from_constants(H, 0.0, fv, fc)


def link_trie_patricia(mean_p: float, var_p: float, k: int, d: SourceDistribution):
    """Trie mean and variance of Phi_k from the patricia ones.

    Each patricia fringe tree with k keys sits at the bottom of a unary chain
    whose length is Geom_0(1 - rho(k)).
    """
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    r = rho(d, k)
    mean_t = mean_p / (1 - r)
    var_t = r / (1 - r) ** 2 * mean_p + var_p / (1 - r) ** 2
    return mean_t, var_t


def fringe_limit(d: SourceDistribution, k: int) -> float:
    """Limit of P(|P_n^*|_e = k): the share of patricia nodes heading a k-key fringe tree."""
    if k < 2:
        raise ValueError(f"k must be at least 2, got {k}")
    return (1 - rho(d, k)) / ((coentropy(d) + entropy(d)) * k * (k - 1))


def trie_fringe_limit(d: SourceDistribution, k: int) -> float:
    """The corresponding value for tries, 1 / ((1 + H) k (k - 1))."""
    return 1.0 / ((1 + entropy(d)) * k * (k - 1))


def patricia_size_ratio(d: SourceDistribution) -> float:
    """Expected patricia node count per key, (J + H) / H."""
    H = entropy(d)
    return (coentropy(d) + H) / H


def fringe_density_sum(d: SourceDistribution, K: int, tail: bool = False) -> float:
    """sum_{k=2}^{K} (1 - rho(k)) / (k (k - 1)), which increases to J.

    With ``tail=True`` the remainder sum_{k>K} 1/(k(k-1)) = 1/K is added, leaving
    only the negligible rho-part of the tail uncounted.
    """
    k = np.arange(2, K + 1, dtype=float)
    rho_k = (d.array[:, None] ** k).sum(axis=0)
    total = math.fsum((1 - rho_k) / (k * (k - 1)))
    return total + 1.0 / K if tail else total


def shape_limit(d: SourceDistribution, shape: Tree) -> float:
    """Mean of Phi_shape(P_n) / n: P(P_k = shape) (1 - rho(k)) / (H k (k - 1))."""
    probability = shape_probability(shape, d)
    k = shape.leaf_count
    if k < 2:
        raise FringeTriesError("shape limits need at least 2 leaves")
    return probability * fe_k_star(d, k, -1.0) / entropy(d)


@dataclass(frozen=True)
class MellinIntegrand:
    """f on (0, inf) with f(t) = O(t^order_at_zero) at 0 and O(t^-order_at_infinity) at infinity."""

    func: Callable[[float], float]
    order_at_zero: float
    order_at_infinity: float = math.inf


def mellin_numeric(integrand: MellinIntegrand, s) -> AsymptoticConstant:
    """int_0^inf t^(s-1) f(t) dt by adaptive quadrature, split at t = 1.

    Integrates over u = log t so both halves are infinite intervals for
    ``scipy.integrate.quad``; real and imaginary parts are integrated separately.
    """
    s = complex(s)
    if s.real + integrand.order_at_zero <= 0 or s.real - integrand.order_at_infinity >= 0:
        raise NonConvergent(
            f"int t^(s-1) f(t) dt does not converge absolutely at s = {s} "
            f"(orders {integrand.order_at_zero} at 0, {integrand.order_at_infinity} at infinity)"
        )

    def weighted(u):
        if abs(u) > 700:
            return 0j
        value = integrand.func(math.exp(u))
        if not math.isfinite(value):
            return 0j
        return cmath.exp(s * u) * value

    total = 0j
    error = 0.0
    for lower, upper in ((-math.inf, 0.0), (0.0, math.inf)):
        re, re_err = integrate.quad(lambda u: weighted(u).real, lower, upper, epsabs=1e-14, epsrel=QUADRATURE_RELATIVE_ERROR, limit=200)
        im, im_err = integrate.quad(lambda u: weighted(u).imag, lower, upper, epsabs=1e-14, epsrel=QUADRATURE_RELATIVE_ERROR, limit=200)
        total += complex(re, im)
        error += re_err + im_err
    return AsymptoticConstant(total, error, Method.QUADRATURE)


def indnum_alphas(N: int) -> np.ndarray:
    """alpha_n = P(root of a random n-key binary symmetric patricia trie is essential), n = 0..N.

    The root is essential iff neither subtree root is; its split is Binomial(n, 1/2)
    conditioned on both sides being nonempty.
    """
    if N < 1:
        raise ValueError(f"N must be at least 1, got {N}")
    alphas = np.zeros(N + 1)
    alphas[1] = 1.0
    for n in range(2, N + 1):
        k = np.arange(1, n)
        weights = stats.binom.pmf(k, n, 0.5) / (1 - 2 * 0.5 ** n)
        miss = 1.0 - alphas
        alphas[n] = float(np.dot(weights, miss[1:n] * miss[n - 1 : 0 : -1]))
    return alphas


def indnum_mean_bounds(N: int, alphas: np.ndarray | None = None) -> Interval:
    """Interval for the asymptotic share of essential nodes, E[alpha(P_n)] / (2n).

    Counts essential roots of fringe trees with at most N keys exactly and bounds
    the rest by their total density, at most 1 / (N H).
    """
    if N < 2:
        raise ValueError(f"N must be at least 2, got {N}")
    if alphas is None:
        alphas = indnum_alphas(N)
    H = math.log(2)
    k = np.arange(2, N + 1, dtype=float)
    rho_k = 2.0 ** (1 - k)
    partial = 1 + math.fsum((1 - rho_k) * alphas[2 : N + 1] / (k * (k - 1) * H))
    return Interval(partial / 2, (partial + 1 / (N * H)) / 2)


def mean_overlay(d: SourceDistribution, toll, t: float, M: int = DEFAULT_FOURIER_TERMS) -> float:
    """Predicted E[Phi] / lambda at log lambda = t, i.e. psi_E(t) / H + chi.

    Exact Fourier series for the size-k and shape tolls; the mean term alone for
    the cumulative tolls; ``nan`` for tolls without known constants.
    """
    H = entropy(d)
    kind, param = toll.kind, toll.param
    if kind == "pullback":
        return mean_overlay(d, param, t, M)
    if kind == "leaf" or (kind == "k" and param == 1):
        return 1.0
    if kind == "k":
        return psi_eval(fourier_series(d, param, "E", M), t) / H
    if kind == "shape":
        k, text = param
        match = next(s for s in enumerate_patricia_shapes(k, d.alphabet_size) if shape_string(s) == text)
        return shape_probability(match, d) * psi_eval(fourier_series(d, k, "E", M), t) / H
    J = coentropy(d)
    if kind == "internal" or (kind == "geq" and param == 2):
        return J / H
    if kind == "p" or (kind == "geq" and param == 1):
        return J / H + 1.0
    if kind == "geq":
        return (J - fringe_density_sum(d, param - 1)) / H
    if kind == "alpha" and d.probs == (0.5, 0.5):
        return 2 * indnum_mean_bounds(800).midpoint
    return math.nan
