"""Seeded Monte Carlo runs over random patricia tries.

Replicate i draws its keys from ``replicate_rng(master_seed, i)`` only, so a run
gives the same numbers whether replicates execute in one process or many.
"""
from __future__ import annotations

import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial
from typing import NamedTuple

import numpy as np
import pandas as pd
from scipy import stats
from sklearn.linear_model import LinearRegression
from tqdm import tqdm

from .asymptotics import fringe_limit, mean_overlay, patricia_size_ratio
from .exceptions import DegenerateVariance, DepthExceeded, InsufficientSamples
from .functionals import TollFunction, evaluate_tree, phi_leaf, pullback, toll_value
from .source import SourceDistribution, periodicity, replicate_rng, rho
from .trees import (
    DEFAULT_MAX_DEPTH,
    KeySet,
    build_patricia,
    build_trie,
    enumerate_patricia_shapes,
    shape_probability,
    shape_string,
)

THREADS_ENV = "FRINGETRIES_THREADS"
MIN_NORMALITY_SAMPLES = 100


def resolve_threads(threads: int | None = None) -> int:
    """Explicit value, else $FRINGETRIES_THREADS, else the CPU count."""
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, 0)) or os.cpu_count() or 1
    if threads < 1:
        raise ValueError(f"threads must be at least 1, got {threads}")
    return threads


@dataclass(frozen=True)
class SimulationConfig:
    """One Monte Carlo experiment: fixed n keys, or a Poisson(lam) number of keys.

    Parameters:
    -----------
    source : SourceDistribution
    n, lam : exactly one of them is set
    replicates : number of independent tries
    master_seed : seed every replicate generator is derived from
    functionals : toll functions evaluated on every patricia trie
    paired_trie : also build the trie of the same keys and evaluate the pulled-back tolls
    threads : worker processes (None: environment or CPU count); never changes results
    progress : tqdm bar on stderr (None: only when stderr is a terminal)
    """

    source: SourceDistribution
    n: int | None = None
    lam: float | None = None
    replicates: int = 100
    master_seed: int = 0
    functionals: tuple = field(default_factory=lambda: (phi_leaf(),))
    max_depth: int = DEFAULT_MAX_DEPTH
    paired_trie: bool = False
    threads: int | None = None
    k_max: int = 64
    progress: bool | None = None

    def __post_init__(self):
        object.__setattr__(self, "functionals", tuple(self.functionals))
        if (self.n is None) == (self.lam is None):
            raise ValueError("set exactly one of n and lam")
        if self.n is not None and self.n < 0:
            raise ValueError(f"n must be nonnegative, got {self.n}")
        if self.lam is not None and self.lam < 0:
            raise ValueError(f"lam must be nonnegative, got {self.lam}")
        if self.replicates < 1:
            raise ValueError(f"replicates must be at least 1, got {self.replicates}")
        if not self.functionals:
            raise ValueError("at least one functional is needed")

    @property
    def mode(self) -> str:
        return "fixed" if self.n is not None else "poisson"

    @property
    def names(self) -> list:
        return [phi.name for phi in self.functionals]

    def describe(self) -> dict:
        return {
            "source": list(self.source.probs),
            "mode": self.mode,
            "n": self.n,
            "lambda": self.lam,
            "replicates": self.replicates,
            "seed": self.master_seed,
            "functionals": self.names,
            "max_depth": self.max_depth,
            "paired_trie": self.paired_trie,
            "k_max": self.k_max,
        }


class ReplicateResult(NamedTuple):
    index: int
    keys: int
    totals: np.ndarray
    root: np.ndarray
    sizes: np.ndarray
    trie_totals: np.ndarray | None
    trie_root: np.ndarray | None


def run_replicate(config: SimulationConfig, index: int) -> ReplicateResult:
    rng = replicate_rng(config.master_seed, index)
    count = config.n if config.n is not None else int(rng.poisson(config.lam))
    keys = KeySet.from_source(config.source, count, rng)
    try:
        patricia = build_patricia(keys, config.max_depth)
        trie = build_trie(keys, config.max_depth) if config.paired_trie else None
    except DepthExceeded as error:
        raise DepthExceeded(error.depth, index) from None
    evaluation = evaluate_tree(config.functionals, patricia, config.k_max)
    trie_totals = trie_root = None
    if trie is not None:
        pulled = [pullback(phi) for phi in config.functionals]
        trie_eval = evaluate_tree(pulled, trie, config.k_max)
        trie_totals, trie_root = trie_eval.totals, trie_eval.root
    return ReplicateResult(index, count, evaluation.totals, evaluation.root, evaluation.sizes, trie_totals, trie_root)


def _replicates(config: SimulationConfig, indices) -> list:
    indices = list(indices)
    threads = min(resolve_threads(config.threads), len(indices))
    disable = None if config.progress is None else not config.progress
    worker = partial(run_replicate, config)
    if threads <= 1:
        results = [worker(i) for i in tqdm(indices, desc="Replicates", disable=disable)]
    else:
        chunksize = max(1, len(indices) // (threads * 8))
        with ProcessPoolExecutor(max_workers=threads) as executor:
            results = list(tqdm(executor.map(worker, indices, chunksize=chunksize), total=len(indices), desc="Replicates", disable=disable))
    return sorted(results, key=lambda r: r.index)


def describe_samples(samples: pd.DataFrame) -> pd.DataFrame:
    """Mean, variance, their standard errors, skewness and excess kurtosis per column."""
    rows = {}
    R = len(samples)
    for name in samples.columns:
        x = samples[name].to_numpy(dtype=float)
        mean = x.mean()
        var = x.var(ddof=1) if R > 1 else math.nan
        m4 = ((x - mean) ** 4).mean()
        degenerate = not var > 0
        rows[name] = {
            "mean": mean,
            "var": var,
            "se_mean": math.sqrt(var / R) if R > 1 else math.nan,
            "se_var": math.sqrt(max(m4 - var ** 2, 0.0) / R) if R > 1 else math.nan,
            "skew": math.nan if degenerate else float(stats.skew(x)),
            "exkurt": math.nan if degenerate else float(stats.kurtosis(x)),
        }
    frame = pd.DataFrame.from_dict(rows, orient="index")
    frame.index.name = "name"
    return frame


@dataclass
class SimulationSummary:
    """Per-replicate samples and their statistics.

    ``samples`` has one row per replicate (key count and every functional, trie
    values prefixed ``trie:``); ``roots`` holds phi of the whole tree; ``sizes``
    holds the fringe-size counts k = 1..k_max plus an overflow column.
    """

    config: SimulationConfig
    samples: pd.DataFrame
    roots: pd.DataFrame
    sizes: pd.DataFrame

    @property
    def stats(self) -> pd.DataFrame:
        return describe_samples(self.samples.drop(columns=["replicate"]))

    @property
    def histogram(self) -> pd.DataFrame:
        R = len(self.sizes)
        frame = pd.DataFrame({"mean": self.sizes.mean(), "se": self.sizes.std(ddof=1) / math.sqrt(R) if R > 1 else math.nan})
        frame.index.name = "k"
        return frame

    def to_frame(self) -> pd.DataFrame:
        """The functional rows of ``stats``: name, mean, var, se_mean, se_var, skew, exkurt."""
        names = self.config.names + [f"trie:{name}" for name in self.config.names if f"trie:{name}" in self.samples]
        return self.stats.loc[names].reset_index()

    def to_dict(self) -> dict:
        hist = self.histogram
        return {
            "mode": self.config.mode,
            "replicates": self.config.replicates,
            "seed": self.config.master_seed,
            "keys": self.stats.loc["keys"].to_dict(),
            "functionals": self.to_frame().to_dict(orient="records"),
            "histogram": {
                "k": [str(k) for k in hist.index],
                "mean": hist["mean"].tolist(),
                "se": hist["se"].tolist(),
            },
        }


def run(config: SimulationConfig) -> SimulationSummary:
    """R independent replicates, reduced in replicate order."""
    results = _replicates(config, range(config.replicates))
    # Collect per-replicate totals and root values in replicate order
    names = config.names
    data = {"replicate": [r.index for r in results], "keys": [r.keys for r in results]}
    roots = {"replicate": data["replicate"]}
    for j, name in enumerate(names):
        data[name] = [r.totals[j] for r in results]
        roots[name] = [r.root[j] for r in results]
    if config.paired_trie:
        for j, name in enumerate(names):
            data[f"trie:{name}"] = [r.trie_totals[j] for r in results]
            roots[f"trie:{name}"] = [r.trie_root[j] for r in results]
    columns = [str(k) for k in range(1, config.k_max + 1)] + ["overflow"]
    sizes = pd.DataFrame(np.vstack([r.sizes for r in results]), columns=columns)
    return SimulationSummary(config, pd.DataFrame(data), pd.DataFrame(roots), sizes)


class Estimate(NamedTuple):
    value: float
    se: float


class FXEstimate(NamedTuple):
    f_E: Estimate
    f_V: Estimate
    f_C: Estimate


def _estimate(influence: np.ndarray, value: float) -> Estimate:
    R = len(influence)
    return Estimate(float(value), float(influence.std(ddof=1) / math.sqrt(R)) if R > 1 else math.nan)


def estimate_fX(toll: TollFunction, lam: float, R: int, seed: int, source: SourceDistribution, threads: int | None = None, progress: bool | None = None) -> FXEstimate:
    """Monte Carlo f_E, f_V, f_C of ``toll`` at lambda, from the tries of R Poisson key sets.

    Standard errors come from the influence functions of the mean and covariance
    estimators.
    """
    if lam <= 0:
        raise ValueError(f"lambda must be positive, got {lam}")
    # Run paired replicates; trie values give phi of the Poisson trie and its total
    config = SimulationConfig(source, lam=lam, replicates=R, master_seed=seed, functionals=(toll,), paired_trie=True, threads=threads, progress=progress)
    summary = run(config)
    x = summary.roots[f"trie:{toll.name}"].to_numpy(dtype=float)
    y = summary.samples[f"trie:{toll.name}"].to_numpy(dtype=float)
    n = summary.samples["keys"].to_numpy(dtype=float)
    chi = toll.chi
    w = lam * math.exp(-lam)
    xc, yc, nc = x - x.mean(), y - y.mean(), n - n.mean()

    # Plug-in estimates
    f_e = x.mean() - chi * w
    cov_xy = (xc * yc).mean()
    var_x = (xc ** 2).mean()
    f_v = 2 * cov_xy - var_x + 2 * chi * w * (y.mean() - x.mean()) - chi ** 2 * w * (1 - w)
    f_c = (xc * nc).mean() + chi * lam * (lam - 1) * math.exp(-lam)
    # Standard errors from the influence functions
    return FXEstimate(
        _estimate(x, f_e),
        _estimate(2 * xc * yc - xc ** 2 + 2 * chi * w * (y - x), f_v),
        _estimate(xc * nc, f_c),
    )


@dataclass(frozen=True)
class NormalityReport:
    skewness: float
    excess_kurtosis: float
    se_skewness: float
    se_excess_kurtosis: float
    flags: tuple


def normality_diagnostics(samples, skew_threshold: float = 0.1, kurtosis_threshold: float = 0.2) -> NormalityReport:
    """Skewness and excess kurtosis with leave-one-out jackknife standard errors."""
    x = np.asarray(samples, dtype=float)
    R = len(x)
    if R < MIN_NORMALITY_SAMPLES:
        raise InsufficientSamples(f"normality diagnostics need at least {MIN_NORMALITY_SAMPLES} samples, got {R}")
    sd = x.std()
    if not sd > 0:
        raise DegenerateVariance("sample variance is zero")
    z = (x - x.mean()) / sd
    skewness = float(stats.skew(z))
    exkurt = float(stats.kurtosis(z))

    # leave-one-out raw moments from the power sums
    sums = [np.sum(z ** p) for p in (1, 2, 3, 4)]
    r1, r2, r3, r4 = ((s - z ** p) / (R - 1) for p, s in zip((1, 2, 3, 4), sums))
    m2 = r2 - r1 ** 2
    m3 = r3 - 3 * r1 * r2 + 2 * r1 ** 3
    m4 = r4 - 4 * r1 * r3 + 6 * r1 ** 2 * r2 - 3 * r1 ** 4
    loo_skew = m3 / m2 ** 1.5
    loo_kurt = m4 / m2 ** 2 - 3

    def jackknife(values):
        return float(math.sqrt((R - 1) / R * ((values - values.mean()) ** 2).sum()))

    flags = []
    if abs(skewness) > skew_threshold:
        flags.append("skewness")
    if abs(exkurt) > kurtosis_threshold:
        flags.append("excess_kurtosis")
    return NormalityReport(skewness, exkurt, jackknife(loo_skew), jackknife(loo_kurt), tuple(flags))


def geometric_grid(lam_min: float, lam_max: float, points: int) -> np.ndarray:
    return np.geomspace(lam_min, lam_max, points)


@dataclass
class OscillationScan:
    """``frame``: lam, log_lam, functional, ratio, se, overlay. ``trend``: one fit per functional."""

    frame: pd.DataFrame
    trend: pd.DataFrame


def _trend(log_lam: np.ndarray, ratio: np.ndarray, se: np.ndarray, lag: int | None) -> dict:
    weights = np.where(se > 0, 1.0 / np.where(se > 0, se, 1.0) ** 2, 1.0)
    X = log_lam.reshape(-1, 1)
    model = LinearRegression().fit(X, ratio, sample_weight=weights)
    residuals = ratio - model.predict(X)
    center = np.average(log_lam, weights=weights)
    spread = (weights * (log_lam - center) ** 2).sum()
    dof = max(len(ratio) - 2, 1)
    slope_se = math.sqrt((weights * residuals ** 2).sum() / dof / spread) if spread > 0 else math.nan
    energy = (residuals ** 2).sum()
    if lag is None or lag < 1 or lag >= len(residuals) or energy == 0:
        autocorrelation = math.nan
    else:
        autocorrelation = float((residuals[:-lag] * residuals[lag:]).sum() / energy)
    return {"slope": float(model.coef_[0]), "slope_se": slope_se, "lag": lag, "autocorrelation": autocorrelation}


def oscillation_scan(config: SimulationConfig, lam_grid) -> OscillationScan:
    """E[Phi(P_lam)] / lam over a geometric grid, against the predicted psi_E(log lam) / H + chi.

    The residuals of a weighted linear trend are checked for a peak in
    autocorrelation at a lag of one period d_p (when the grid is geometric and d_p > 0).
    """
    lam_grid = np.asarray(lam_grid, dtype=float)
    rows = []
    for lam in lam_grid:
        summary = run(replace(config, n=None, lam=float(lam)))
        stats_frame = summary.stats
        for phi in config.functionals:
            rows.append({
                "lam": lam,
                "log_lam": math.log(lam),
                "functional": phi.name,
                "ratio": stats_frame.loc[phi.name, "mean"] / lam,
                "se": stats_frame.loc[phi.name, "se_mean"] / lam,
                "overlay": mean_overlay(config.source, phi, math.log(lam)),
            })
    frame = pd.DataFrame(rows)

    d_p = periodicity(config.source)
    steps = np.diff(np.log(lam_grid))
    lag = None
    if d_p > 0 and len(steps) and np.allclose(steps, steps[0]):
        lag = int(round(d_p / steps[0]))
    trend = []
    for name, group in frame.groupby("functional", sort=False):
        fit = _trend(group["log_lam"].to_numpy(), group["ratio"].to_numpy(), group["se"].fillna(0).to_numpy(), lag)
        trend.append({"functional": name, **fit})
    return OscillationScan(frame, pd.DataFrame(trend))


def fringe_distribution(config: SimulationConfig) -> pd.DataFrame:
    """Share of nodes whose fringe tree holds k keys, per replicate then averaged.

    Columns: mean, se, limit. Row ``1`` is the leaf share, ``overflow`` covers k > k_max.
    """
    summary = run(config)
    sizes = summary.sizes.to_numpy(dtype=float)
    totals = sizes.sum(axis=1, keepdims=True)
    shares = np.divide(sizes, totals, out=np.zeros_like(sizes), where=totals > 0)
    R = len(shares)
    d = config.source
    limits = [1.0 / patricia_size_ratio(d)] + [fringe_limit(d, k) for k in range(2, config.k_max + 1)]
    limits.append(1.0 - math.fsum(limits))
    frame = pd.DataFrame(
        {
            "mean": shares.mean(axis=0),
            "se": shares.std(axis=0, ddof=1) / math.sqrt(R) if R > 1 else math.nan,
            "limit": limits,
        },
        index=summary.sizes.columns,
    )
    frame.index.name = "k"
    return frame


def slln_track(toll: TollFunction, source: SourceDistribution, seed: int, exponents=range(4, 18), index: int = 0, max_depth: int = DEFAULT_MAX_DEPTH) -> pd.DataFrame:
    """Phi(P_n) / n along one growing sample, n = 2^j, with its deviation from psi_E(log n) / H + chi."""
    grid = [2 ** j for j in exponents]
    rng = replicate_rng(seed, index)
    keys = KeySet.from_source(source, max(grid), rng)
    rows = []
    for n in grid:
        value = evaluate_tree((toll,), build_patricia(keys.subset(n), max_depth)).totals[0]
        prediction = mean_overlay(source, toll, math.log(n))
        rows.append({"n": n, "ratio": value / n, "prediction": prediction, "deviation": value / n - prediction})
    return pd.DataFrame(rows)


def _small_patricia_tries(d: SourceDistribution, k: int, R: int, seed: int, progress: bool | None = None):
    disable = None if progress is None else not progress
    for index in tqdm(range(R), desc="Tries", disable=disable):
        rng = replicate_rng(seed, index)
        yield build_patricia(KeySet.from_source(d, k, rng))


def shape_frequencies(d: SourceDistribution, k: int, R: int, seed: int, progress: bool | None = None) -> pd.DataFrame:
    """Observed shapes of R random k-key patricia tries next to their exact probabilities."""
    counts = Counter(shape_string(t) for t in _small_patricia_tries(d, k, R, seed, progress))
    rows = []
    for shape in enumerate_patricia_shapes(k, d.alphabet_size):
        text = shape_string(shape)
        frequency = counts.get(text, 0) / R
        rows.append({
            "shape": text,
            "count": counts.get(text, 0),
            "frequency": frequency,
            "se": math.sqrt(frequency * (1 - frequency) / R),
            "probability": shape_probability(shape, d),
        })
    return pd.DataFrame(rows)


def root_prefix_lengths(d: SourceDistribution, k: int, R: int, seed: int, progress: bool | None = None) -> np.ndarray:
    """Length of the root's common prefix in R random k-key patricia tries."""
    return np.array([len(t.root.prefix) for t in _small_patricia_tries(d, k, R, seed, progress)])


class GoodnessOfFit(NamedTuple):
    statistic: float
    p_value: float
    bins: int


def geometric_fit(lengths, d: SourceDistribution, k: int, min_expected: float = 5.0) -> GoodnessOfFit:
    """Chi-square test of prefix lengths against Geom_0(1 - rho(k)); the upper tail is pooled."""
    lengths = np.asarray(lengths)
    R = len(lengths)
    q = 1 - rho(d, k)
    last = 0
    while R * q * (1 - q) ** last >= min_expected and R * (1 - q) ** (last + 1) >= min_expected:
        last += 1
    expected = [R * q * (1 - q) ** j for j in range(last)] + [R * (1 - q) ** last]
    observed = [np.count_nonzero(lengths == j) for j in range(last)] + [np.count_nonzero(lengths >= last)]
    result = stats.chisquare(observed, expected)
    return GoodnessOfFit(float(result.statistic), float(result.pvalue), len(expected))


def sample_root_tolls(toll: TollFunction, d: SourceDistribution, n: int, R: int, seed: int) -> np.ndarray:
    """phi(P_n) for R random n-key patricia tries; its mean estimates E[phi(P_n)]."""
    return np.array([toll_value(toll, build_patricia(KeySet.from_source(d, n, replicate_rng(seed, i)))) for i in range(R)])
