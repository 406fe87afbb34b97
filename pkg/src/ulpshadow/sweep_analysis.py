"""Neighborhood sweeps around a center input plus the correlation
statistics used to compare the perturbation detector against the
high-precision oracle.

Sweep rows are independent and could be evaluated concurrently; the
implementation is sequential and emits rows in ascending grid order, which
is also the order any parallel variant would have to reproduce.
"""

from __future__ import annotations

import csv
import math
from dataclasses import asdict, dataclass
from typing import IO, Callable, Iterable, Mapping, Sequence

import numpy as np

from .expr_ir import Oracle, Perturbed, Plain, Program, evaluate
from .perturb_engine import (
    DEFAULT_POLICY,
    DEFAULT_STRATEGY,
    PerturbationPolicy,
    PerturbationStrategy,
)
from .prng import Splitmix64
from .ulp_core import DomainError, divergence_ulp, ulp32_of, ulp_of

__all__ = [
    "SweepConfig",
    "SweepRow",
    "CorrelationReport",
    "UndefinedCorrelationError",
    "sweep",
    "pearson",
    "spearman",
    "permutation_p_value",
    "classify_significant",
    "detect_outliers",
    "correlation_report",
    "write_sweep_csv",
    "SWEEP_CSV_COLUMNS",
]

#: Perturbation-revealed relative divergence beyond this is significant.
SIGNIFICANCE_THRESHOLD = 1e-3


class UndefinedCorrelationError(ValueError):
    """Correlation of a zero-variance sample is undefined."""


@dataclass(frozen=True)
class SweepConfig:
    """Grid specification: 2*points_each_side + 1 points spaced by
    step_multiple times the ULP of the center, in the chosen format.

    The step is fixed at the center's ULP rather than re-derived per point,
    so grids stay regular across binade boundaries; a sweep whose fixed
    step would exceed 2**10 per-point ULPs at either end is rejected.
    """

    center: float
    points_each_side: int = 1000
    step_multiple: int | None = None  # defaults: 10 (binary64), 1 (binary32)
    step_format: str = "binary64"

    def __post_init__(self) -> None:
        if self.points_each_side < 0:
            raise ValueError("points_each_side must be >= 0")
        if self.step_format not in ("binary64", "binary32"):
            raise ValueError(f"unknown step format {self.step_format!r}")
        if self.step_multiple is not None and self.step_multiple < 1:
            raise ValueError("step_multiple must be >= 1")

    @property
    def multiple(self) -> int:
        if self.step_multiple is not None:
            return self.step_multiple
        return 10 if self.step_format == "binary64" else 1

    @property
    def step(self) -> float:
        base = ulp_of(self.center) if self.step_format == "binary64" else ulp32_of(self.center)
        return self.multiple * base


@dataclass(frozen=True)
class SweepRow:
    input: float
    dela_err: float
    oracle_err: float
    plain_result: float
    perturbed_result: float
    oracle_result_rounded: float


@dataclass(frozen=True)
class CorrelationReport:
    pearson_r: float
    spearman_rho: float
    p_pearson: float
    p_spearman: float
    n: int
    outliers_removed: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def sweep(
    program: Program,
    input_name: str,
    config: SweepConfig,
    strategy: PerturbationStrategy = DEFAULT_STRATEGY,
    policy: PerturbationPolicy = DEFAULT_POLICY,
    fixed_inputs: Mapping[str, float] | None = None,
) -> list[SweepRow]:
    """Detector and oracle errors on the grid around config.center.

    ``fixed_inputs`` binds any other declared inputs; rows come back in
    ascending grid order.
    """
    if input_name not in program.inputs:
        raise ValueError(f"{input_name!r} is not an input of the program")
    n = config.points_each_side
    step = config.step
    lo = config.center - n * step
    hi = config.center + n * step
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise DomainError("sweep grid leaves the finite range")
    for end in (lo, hi):
        if end != 0.0 and step > 2.0**10 * ulp_of(end):
            raise DomainError(
                f"fixed step {step!r} exceeds 2^10 per-point ULPs at grid end {end!r}; "
                "choose a center away from this binade boundary or a smaller step"
            )

    bindings = dict(fixed_inputs or {})
    rows = []
    perturbed_backend = Perturbed(strategy, policy)
    for i in range(-n, n + 1):
        x = config.center + i * step
        bindings[input_name] = x
        plain = evaluate(program, bindings, Plain()).result
        pert = evaluate(program, bindings, perturbed_backend).result
        oracle = evaluate(program, bindings, Oracle()).result
        rows.append(
            SweepRow(
                input=x,
                dela_err=divergence_ulp(plain, pert),
                oracle_err=divergence_ulp(oracle, plain),
                plain_result=plain,
                perturbed_result=pert,
                oracle_result_rounded=oracle,
            )
        )
    return rows


def _as_array(values: Sequence[float], name: str) -> np.ndarray:
    a = np.asarray(values, dtype=np.float64)
    if a.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    if not np.isfinite(a).all():
        raise ValueError(f"{name} must be finite")
    return a


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Sample Pearson correlation, two-pass: means first, then centered
    products (NumPy pairwise summation keeps both passes stable)."""
    x = _as_array(xs, "xs")
    y = _as_array(ys, "ys")
    if x.shape != y.shape or x.size < 2:
        raise ValueError("pearson needs two equal-length samples of size >= 2")
    xc = x - x.mean()
    yc = y - y.mean()
    ssx = float(xc @ xc)
    ssy = float(yc @ yc)
    if ssx == 0.0 or ssy == 0.0:
        raise UndefinedCorrelationError("zero variance sample")
    return float((xc @ yc) / math.sqrt(ssx * ssy))


def _ranks(values: np.ndarray) -> np.ndarray:
    """Average ranks (1-based); ties receive the mean of their rank range."""
    order = np.argsort(values, kind="mergesort")
    sv = values[order]
    boundaries = np.flatnonzero(np.r_[True, sv[1:] != sv[:-1], True])
    starts, ends = boundaries[:-1], boundaries[1:]
    group_rank = (starts + ends + 1) / 2.0  # mean of ranks start+1 .. end
    ranks = np.empty(values.size, dtype=np.float64)
    ranks[order] = np.repeat(group_rank, ends - starts)
    return ranks


def spearman(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Pearson correlation of the average-rank variables."""
    x = _as_array(xs, "xs")
    y = _as_array(ys, "ys")
    if x.shape != y.shape or x.size < 2:
        raise ValueError("spearman needs two equal-length samples of size >= 2")
    return pearson(_ranks(x), _ranks(y))


def classify_significant(rel_err: float) -> bool:
    """Strictly greater than the 0.1% relative-error threshold."""
    if rel_err < 0.0:
        raise ValueError("relative error must be non-negative")
    return rel_err > SIGNIFICANCE_THRESHOLD


def _permutation_matrix_stat(
    x: np.ndarray, y: np.ndarray, rng: Splitmix64, rounds: int, chunk: int = 256
):
    """Yields |pearson| of x against chunked key-argsort permutations of y."""
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    n = x.size
    done = 0
    while done < rounds:
        m = min(chunk, rounds - done)
        keys = rng.float_array(m * n).reshape(m, n)
        perms = np.argsort(keys, axis=1, kind="stable")
        stats = (yc[perms] @ xc) / denom
        yield np.abs(stats)
        done += m


def permutation_p_value(
    xs: Sequence[float],
    ys: Sequence[float],
    statistic: Callable[[Sequence[float], Sequence[float]], float] = pearson,
    rounds: int = 10000,
    seed: int = 0,
) -> float:
    """Two-sided permutation p-value with (count + 1)/(rounds + 1) smoothing.

    Permutations of ys are argsorts of splitmix64 uniform keys, so runs are
    reproducible for a given seed.  pearson and spearman use a vectorized
    path (a permutation of ys permutes its rank vector, so the spearman
    statistic is pearson on permuted ranks); other statistics fall back to
    a per-round loop.
    """
    x = _as_array(xs, "xs")
    y = _as_array(ys, "ys")
    if x.shape != y.shape or x.size < 2:
        raise ValueError("permutation test needs two equal-length samples of size >= 2")
    observed = abs(statistic(xs, ys))
    rng = Splitmix64(seed)
    count = 0
    if statistic is pearson or statistic is spearman:
        if statistic is spearman:
            x, y = _ranks(x), _ranks(y)
        for stats in _permutation_matrix_stat(x, y, rng, rounds):
            count += int((stats >= observed).sum())
    else:
        n = x.size
        for _ in range(rounds):
            perm = np.argsort(rng.float_array(n), kind="stable")
            if abs(statistic(x, y[perm])) >= observed:
                count += 1
    return (count + 1) / (rounds + 1)


def detect_outliers(rows: Iterable, k: float = 10.0) -> list[int]:
    """Indices whose log10(dela_err + 1) sits more than k MADs from the
    median; errors span many decades, so the log transform makes the MAD
    meaningful.  Outliers are only reported, never silently removed.

    Accepts SweepRow-like objects or raw error values.
    """
    errors = [getattr(r, "dela_err", r) for r in rows]
    if len(errors) < 5:
        raise ValueError("outlier detection needs at least 5 rows")
    transformed = np.log10(np.asarray(errors, dtype=np.float64) + 1.0)
    med = float(np.median(transformed))
    dev = np.abs(transformed - med)
    mad = float(np.median(dev))
    return [int(i) for i in np.flatnonzero(dev > k * mad)]


def correlation_report(
    xs: Sequence[float],
    ys: Sequence[float],
    rounds: int = 10000,
    seed: int = 0,
    outliers_removed: int = 0,
) -> CorrelationReport:
    """Pearson + Spearman with their permutation p-values in one record."""
    return CorrelationReport(
        pearson_r=pearson(xs, ys),
        spearman_rho=spearman(xs, ys),
        p_pearson=permutation_p_value(xs, ys, pearson, rounds, seed),
        p_spearman=permutation_p_value(xs, ys, spearman, rounds, seed),
        n=len(xs),
        outliers_removed=outliers_removed,
    )


SWEEP_CSV_COLUMNS = (
    "input_hex",
    "input",
    "dela_err",
    "oracle_err",
    "plain",
    "perturbed",
    "oracle",
)


def write_sweep_csv(rows: Iterable[SweepRow], stream: IO[str]) -> None:
    writer = csv.writer(stream)
    writer.writerow(SWEEP_CSV_COLUMNS)
    for r in rows:
        writer.writerow(
            [
                float.hex(r.input),
                repr(r.input),
                repr(r.dela_err),
                repr(r.oracle_err),
                repr(r.plain_result),
                repr(r.perturbed_result),
                repr(r.oracle_result_rounded),
            ]
        )
