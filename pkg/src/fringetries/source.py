"""Memoryless string sources and their scalar invariants.

A source is an alphabet {0, ..., m-1} with a probability vector p. Strings are
infinite sequences of i.i.d. characters drawn from p.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator

import numpy as np

from .exceptions import InvalidSource

SUM_TOLERANCE = 1e-12


@dataclass(frozen=True)
class SourceDistribution:
    """Alphabet size and character probabilities of a memoryless source.

    Parameters:
    -----------
    probs : tuple of float
        Point masses p_a for a = 0, ..., m-1. Every entry must lie strictly inside
        (0, 1) and the entries must sum to 1 within 1e-12.
    """

    probs: tuple

    def __post_init__(self):
        probs = tuple(float(p) for p in self.probs)
        object.__setattr__(self, "probs", probs)
        if len(probs) < 2:
            raise InvalidSource(f"alphabet needs at least 2 characters, got {len(probs)}")
        for a, p in enumerate(probs):
            if not 0.0 < p < 1.0:
                raise InvalidSource(f"p_{a} = {p} is not strictly inside (0, 1)")
        total = math.fsum(probs)
        if abs(total - 1.0) > SUM_TOLERANCE:
            raise InvalidSource(f"probabilities sum to {total!r}, not 1")

    @property
    def alphabet_size(self) -> int:
        return len(self.probs)

    @property
    def alphabet(self) -> range:
        return range(len(self.probs))

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.probs, dtype=float)

    @property
    def log_probs(self) -> np.ndarray:
        return np.log(self.array)

    def __str__(self):
        return ",".join(f"{p:.15g}" for p in self.probs)


def uniform(m: int) -> SourceDistribution:
    """The symmetric source on m characters."""
    if m < 2:
        raise InvalidSource(f"alphabet needs at least 2 characters, got {m}")
    return SourceDistribution(tuple([1.0 / m] * m))


def parse_source(text: str) -> SourceDistribution:
    """Parse ``0.3,0.7`` or ``uniform:3``."""
    text = text.strip()
    if text.startswith("uniform:"):
        try:
            m = int(text.split(":", 1)[1])
        except ValueError:
            raise InvalidSource(f"cannot read alphabet size in {text!r}") from None
        return uniform(m)
    try:
        probs = tuple(float(part) for part in text.split(","))
    except ValueError:
        raise InvalidSource(f"cannot read probabilities in {text!r}") from None
    return SourceDistribution(probs)


def entropy(d: SourceDistribution) -> float:
    """H = sum_a p_a log(1/p_a), natural log."""
    return math.fsum(-p * math.log(p) for p in d.probs)


def coentropy(d: SourceDistribution) -> float:
    """J = sum_a (1 - p_a) log(1/(1 - p_a)); equal to H on binary alphabets."""
    if d.alphabet_size == 2:
        return entropy(d)
    return math.fsum(-(1.0 - p) * math.log1p(-p) for p in d.probs)


def rho(d: SourceDistribution, s):
    """rho(s) = sum_a p_a^s.

    For integer k this is the probability that k independent strings start with
    the same character. Real input gives a float, complex input a complex.
    """
    if isinstance(s, complex):
        return complex(np.exp(s * d.log_probs).sum())
    return math.fsum(p ** s for p in d.probs)


def _rationalize(x: float, tolerance: float, depth: int):
    """Continued-fraction expansion of x; a Fraction if it terminates, else None.

    The expansion terminates once the fractional remainder drops below
    ``tolerance``. Denominators above tolerance**-0.5 are beyond what float input
    can resolve and count as irrational.
    """
    max_denominator = int(tolerance ** -0.5)
    a = math.floor(x)
    h_prev, h = 1, a
    k_prev, k = 0, 1
    remainder = x - a
    for _ in range(depth):
        if remainder < tolerance:
            return Fraction(h, k)
        x = 1.0 / remainder
        a = math.floor(x)
        remainder = x - a
        h, h_prev = a * h + h_prev, h
        k, k_prev = a * k + k_prev, k
        if k > max_denominator:
            return None
    return None


def periodicity(d: SourceDistribution, tolerance: float = 1e-10, depth: int = 40) -> float:
    """Period d_p of the additive group generated by {log p_a}, or 0 if it is dense.

    Each ratio log p_a / log p_ref (p_ref the largest probability) is expanded as a
    continued fraction. If every ratio is rational u_a/v_a the group is
    (|log p_ref| * g / V) Z with V = lcm(v_a) and g = gcd(u_a V / v_a). Cases that are
    lattice-like within ``tolerance`` resolve to the lattice answer.
    """
    if tolerance <= 0:
        raise ValueError(f"tolerance must be positive, got {tolerance}")
    magnitudes = sorted(-math.log(p) for p in d.probs)
    reference = magnitudes[0]
    fractions = []
    for magnitude in magnitudes:
        ratio = _rationalize(magnitude / reference, tolerance, depth)
        if ratio is None:
            return 0.0
        fractions.append(ratio)
    common = math.lcm(*(f.denominator for f in fractions))
    g = math.gcd(*(f.numerator * (common // f.denominator) for f in fractions))
    return reference * g / common


def sample_stream(d: SourceDistribution, rng: np.random.Generator, block: int = 1024) -> Iterator[int]:
    """Lazy infinite character stream; characters are drawn in blocks from ``rng``."""
    probs = d.array
    while True:
        for c in rng.choice(d.alphabet_size, size=block, p=probs):
            yield int(c)


def replicate_rng(master_seed: int, index: int) -> np.random.Generator:
    """Generator for replicate ``index``, a pure function of (master_seed, index)."""
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(index,)))
