"""Perturbation core: ULP-offset strategies, the instrumented atomic
operation set with hardware-faithful binary64 semantics, per-site
perturbation with trace recording, and the closed-form condition-number /
dangerous-region evaluators for every instrumented operation.

Strategy and policy values are immutable and shareable.  A single
EvalContext owns one evaluation's site counter and trace and must not be
driven from two threads; independent contexts may run concurrently.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass, field
from typing import IO, Iterable, Sequence, Union

from .ulp_core import (
    NONFINITE_DIVERGENCE,
    DomainError,
    UlpOverflowError,
    err_ulp,
    offset_by_ulps,
)

__all__ = [
    "AtomicOp",
    "ARITY",
    "atomic_eval",
    "NoPerturbation",
    "FixedOffset",
    "Cyclic",
    "PerturbationStrategy",
    "PerturbationPolicy",
    "DEFAULT_STRATEGY",
    "DEFAULT_POLICY",
    "DANGEROUS_THRESHOLD",
    "TraceRecord",
    "EvalContext",
    "apply_perturbation",
    "perturbed_apply",
    "condition_numbers",
    "in_dangerous_region",
    "parse_strategy",
    "format_strategy",
    "write_trace_csv",
    "read_trace_csv",
    "TRACE_CSV_COLUMNS",
]


class AtomicOp(str, enum.Enum):
    """The instrumented floating-point operations."""

    ADD = "add"
    SUB = "sub"
    MUL = "mul"
    DIV = "div"
    NEG = "neg"
    SIN = "sin"
    COS = "cos"
    TAN = "tan"
    ASIN = "asin"
    ACOS = "acos"
    SINH = "sinh"
    COSH = "cosh"
    EXP = "exp"
    LOG = "log"
    LOG10 = "log10"
    POW = "pow"
    SQRT = "sqrt"
    FABS = "fabs"

    def __str__(self) -> str:  # clean trace/CSV labels
        return self.value


ARITY: dict[AtomicOp, int] = {
    AtomicOp.ADD: 2,
    AtomicOp.SUB: 2,
    AtomicOp.MUL: 2,
    AtomicOp.DIV: 2,
    AtomicOp.POW: 2,
    AtomicOp.NEG: 1,
    AtomicOp.SIN: 1,
    AtomicOp.COS: 1,
    AtomicOp.TAN: 1,
    AtomicOp.ASIN: 1,
    AtomicOp.ACOS: 1,
    AtomicOp.SINH: 1,
    AtomicOp.COSH: 1,
    AtomicOp.EXP: 1,
    AtomicOp.LOG: 1,
    AtomicOp.LOG10: 1,
    AtomicOp.SQRT: 1,
    AtomicOp.FABS: 1,
}

# Operations whose condition number never exceeds 1 per operand; they are
# still perturbation sites, just never amplification suspects.
WELL_CONDITIONED: frozenset[AtomicOp] = frozenset(
    {AtomicOp.MUL, AtomicOp.DIV, AtomicOp.NEG, AtomicOp.SQRT, AtomicOp.FABS}
)

#: A condition number past ~half the significand's decimal digits turns a
#: 1-ULP input error into a rounding-dominated output.
DANGEROUS_THRESHOLD = 1e6


# --- hardware-faithful scalar semantics --------------------------------
#
# Python's math module raises where hardware would quietly produce a NaN or
# an infinity; these wrappers restore the IEEE-754 results so the plain
# backend behaves like compiled binary64 code.

def _ieee_div(x: float, y: float) -> float:
    if y != 0.0:
        return x / y
    if x == 0.0 or math.isnan(x):
        return math.nan
    return math.copysign(math.inf, x) * math.copysign(1.0, y)


def _ieee_log(x: float) -> float:
    if x < 0.0:
        return math.nan
    if x == 0.0:
        return -math.inf
    return math.log(x)


def _ieee_log10(x: float) -> float:
    if x < 0.0:
        return math.nan
    if x == 0.0:
        return -math.inf
    return math.log10(x)


def _ieee_sqrt(x: float) -> float:
    return math.sqrt(x) if x >= 0.0 or x == 0.0 else math.nan


def _is_odd_integer(y: float) -> bool:
    return abs(y) < 2**53 and y.is_integer() and int(y) % 2 != 0


def _ieee_pow(x: float, y: float) -> float:
    try:
        return math.pow(x, y)
    except OverflowError:
        sign = -1.0 if (x < 0.0 and _is_odd_integer(y)) else 1.0
        return sign * math.inf
    except ValueError:
        if x == 0.0 and y < 0.0:
            return math.copysign(math.inf, x) if _is_odd_integer(y) else math.inf
        return math.nan


def _guard_unary(fn):
    def wrapped(x: float) -> float:
        try:
            return fn(x)
        except ValueError:
            return math.nan
        except OverflowError:
            return math.copysign(math.inf, x) if fn in (math.sinh,) else math.inf

    return wrapped


_OP_EVAL = {
    AtomicOp.ADD: lambda a, b: a + b,
    AtomicOp.SUB: lambda a, b: a - b,
    AtomicOp.MUL: lambda a, b: a * b,
    AtomicOp.DIV: _ieee_div,
    AtomicOp.POW: _ieee_pow,
    AtomicOp.NEG: lambda a: -a,
    AtomicOp.FABS: math.fabs,
    AtomicOp.SQRT: _ieee_sqrt,
    AtomicOp.SIN: _guard_unary(math.sin),
    AtomicOp.COS: _guard_unary(math.cos),
    AtomicOp.TAN: _guard_unary(math.tan),
    AtomicOp.ASIN: _guard_unary(math.asin),
    AtomicOp.ACOS: _guard_unary(math.acos),
    AtomicOp.SINH: _guard_unary(math.sinh),
    AtomicOp.COSH: _guard_unary(math.cosh),
    AtomicOp.EXP: _guard_unary(math.exp),
    AtomicOp.LOG: _ieee_log,
    AtomicOp.LOG10: _ieee_log10,
}


def atomic_eval(op: AtomicOp, operands: Sequence[float]) -> float:
    """Plain binary64 result of op, with IEEE NaN/infinity semantics."""
    if len(operands) != ARITY[op]:
        raise ValueError(f"{op} expects {ARITY[op]} operands, got {len(operands)}")
    return _OP_EVAL[op](*operands)


# --- strategies and policies --------------------------------------------

@dataclass(frozen=True)
class NoPerturbation:
    """Identity strategy; the perturbed backend degenerates to plain."""

    def offset_at(self, site_index: int) -> int:
        return 0


@dataclass(frozen=True)
class FixedOffset:
    """The same signed ULP offset at every site."""

    steps: int = -1

    def offset_at(self, site_index: int) -> int:
        return self.steps


@dataclass(frozen=True)
class Cyclic:
    """Offsets cycling through a fixed sequence by dynamic site index.

    The default alternates subtracting and adding one, two, and three ULPs,
    which breaks the offset alignment that lets twin computations mask a
    fixed perturbation.
    """

    sequence: tuple[int, ...] = (-1, 1, -2, 2, -3, 3)

    def __post_init__(self) -> None:
        if not self.sequence:
            raise ValueError("cyclic offset sequence must be non-empty")

    def offset_at(self, site_index: int) -> int:
        return self.sequence[site_index % len(self.sequence)]


PerturbationStrategy = Union[NoPerturbation, FixedOffset, Cyclic]

DEFAULT_STRATEGY = FixedOffset(-1)


@dataclass(frozen=True)
class PerturbationPolicy:
    """Which site classes receive perturbations.

    Operation results follow the active strategy; inputs and (when enabled)
    constants receive the fixed ``input_offset_steps`` offset, since they
    are value origins rather than computed results.
    """

    perturb_op_results: bool = True
    perturb_inputs: bool = True
    perturb_constants: bool = False
    input_offset_steps: int = 1

    def validate(self, strategy: PerturbationStrategy) -> None:
        if isinstance(strategy, NoPerturbation):
            return
        if not (self.perturb_op_results or self.perturb_inputs or self.perturb_constants):
            raise ValueError(
                "policy disables every site class while the strategy perturbs"
            )


DEFAULT_POLICY = PerturbationPolicy()


def parse_strategy(text: str) -> PerturbationStrategy:
    """CLI strategy syntax: 'none', 'fixed:K', 'cyclic', 'cyclic:a,b,...'."""
    name, _, arg = text.partition(":")
    name = name.strip().lower()
    if name == "none":
        return NoPerturbation()
    if name == "fixed":
        return FixedOffset(int(arg) if arg else -1)
    if name == "cyclic":
        if not arg:
            return Cyclic()
        return Cyclic(tuple(int(v) for v in arg.split(",")))
    raise ValueError(f"unknown strategy {text!r} (expected none|fixed:K|cyclic[:a,b,...])")


def format_strategy(strategy: PerturbationStrategy) -> str:
    if isinstance(strategy, NoPerturbation):
        return "none"
    if isinstance(strategy, FixedOffset):
        return f"fixed:{strategy.steps}"
    return "cyclic:" + ",".join(str(v) for v in strategy.sequence)


# --- perturbation application -------------------------------------------

def _offset_clamped(x: float, steps: int) -> tuple[float, str]:
    """Offset x by steps ULPs; non-finite and exact-zero values pass through
    (there is no rounding error to simulate on them) and an offset that
    would leave the finite range is clamped to x."""
    if steps == 0 or x == 0.0 or not math.isfinite(x):
        return x, ""
    try:
        return offset_by_ulps(x, steps), ""
    except UlpOverflowError:
        return x, "offset-overflow-clamped"


def apply_perturbation(x: float, strategy: PerturbationStrategy, site_index: int) -> float:
    """Value of x after the strategy's offset for this site."""
    value, _ = _offset_clamped(x, strategy.offset_at(site_index))
    return value


@dataclass(frozen=True)
class TraceRecord:
    """One dynamic perturbation site, in execution order.

    ``original`` is the value produced at the site, ``perturbed`` the value
    propagated onward; ``ulp_diff`` is err_ulp(original, perturbed)
    recomputed from the stored values.  ``note`` carries non-contractual
    annotations (overflow clamps, non-finite pass-through, condition-number
    domain failures).
    """

    site_index: int
    op: str
    original: float
    perturbed: float
    ulp_diff: float
    condition_numbers: tuple[float, ...]
    note: str = ""

    @property
    def max_condition_number(self) -> float:
        return max(self.condition_numbers, default=1.0)


class EvalContext:
    """Site counter plus optional trace/branch accumulators for one run."""

    __slots__ = ("strategy", "policy", "site_index", "trace", "branches")

    def __init__(
        self,
        strategy: PerturbationStrategy = DEFAULT_STRATEGY,
        policy: PerturbationPolicy = DEFAULT_POLICY,
        record_trace: bool = False,
    ) -> None:
        policy.validate(strategy)
        self.strategy = strategy
        self.policy = policy
        self.site_index = 0
        self.trace: list[TraceRecord] | None = [] if record_trace else None
        self.branches: list[bool] = []

    def _site(
        self,
        label: str,
        raw: float,
        steps: int,
        operands: Sequence[float] | None,
        note: str = "",
    ) -> float:
        value, clamp_note = _offset_clamped(raw, steps)
        if self.trace is not None:
            cns: tuple[float, ...] = ()
            if operands is not None:
                try:
                    cns = tuple(condition_numbers(AtomicOp(label), list(operands)))
                except DomainError:
                    note = (note + " condition-undefined").strip()
            if not math.isfinite(raw):
                note = (note + " non-finite-passthrough").strip()
            self.trace.append(
                TraceRecord(
                    site_index=self.site_index,
                    op=label,
                    original=raw,
                    perturbed=value,
                    ulp_diff=err_ulp(raw, value),
                    condition_numbers=cns,
                    note=(note + " " + clamp_note).strip(),
                )
            )
        self.site_index += 1
        return value

    def perturb_op_result(
        self, op: AtomicOp, raw: float, operands: Sequence[float], note: str = ""
    ) -> float:
        if not self.policy.perturb_op_results:
            return raw
        return self._site(op.value, raw, self.strategy.offset_at(self.site_index), operands, note)

    def perturb_input(self, value: float) -> float:
        if not self.policy.perturb_inputs:
            return value
        return self._site("input", value, self.policy.input_offset_steps, None)

    def perturb_constant(self, value: float) -> float:
        if not self.policy.perturb_constants:
            return value
        return self._site("constant", value, self.policy.input_offset_steps, None)

    def record_branch(self, taken: bool) -> None:
        self.branches.append(taken)


def perturbed_apply(op: AtomicOp, operands: Sequence[float], ctx: EvalContext) -> float:
    """Binary64 result of op with the context's perturbation applied at the
    next dynamic site; math-domain failures propagate as NaN results."""
    raw = atomic_eval(op, operands)
    note = "domain-error" if math.isnan(raw) and not any(math.isnan(v) for v in operands) else ""
    return ctx.perturb_op_result(op, raw, operands, note)


# --- condition numbers (amplification factors) --------------------------

def _ratio(num: float, den: float) -> float:
    """|num/den| with an exact-zero denominator reported as the infinite
    sentinel (zero numerator wins: a zero operand carries no relative
    error to amplify)."""
    if num == 0.0:
        return 0.0
    if den == 0.0:
        return NONFINITE_DIVERGENCE
    return abs(num / den)


def condition_numbers(op: AtomicOp, operands: Sequence[float]) -> list[float]:
    """Per-operand relative-error amplification factors of op.

    The well-conditioned operations report 1.0 per operand.  Raises
    DomainError when a formula's own subexpression is undefined (arcsin
    condition number at |x| > 1, pow/log condition number at x <= 0).
    """
    if len(operands) != ARITY[op]:
        raise ValueError(f"{op} expects {ARITY[op]} operands, got {len(operands)}")
    for v in operands:
        if not math.isfinite(v):
            raise DomainError(f"condition number of {op} needs finite operands, got {v!r}")

    if op in WELL_CONDITIONED:
        return [1.0] * ARITY[op]

    if op is AtomicOp.ADD:
        x, y = operands
        s = x + y
        return [_ratio(x, s), _ratio(y, s)]
    if op is AtomicOp.SUB:
        x, y = operands
        d = x - y
        return [_ratio(x, d), _ratio(y, d)]
    x = operands[0]
    if op is AtomicOp.SIN:
        return [1.0 if x == 0.0 else _ratio(x * math.cos(x), math.sin(x))]
    if op is AtomicOp.COS:
        return [_ratio(x * math.sin(x), math.cos(x))]
    if op is AtomicOp.TAN:
        return [1.0 if x == 0.0 else _ratio(x, math.sin(x) * math.cos(x))]
    if op is AtomicOp.ASIN:
        if abs(x) > 1.0:
            raise DomainError(f"asin condition number undefined at {x!r}")
        return [1.0 if x == 0.0 else _ratio(x, math.sqrt(1.0 - x * x) * math.asin(x))]
    if op is AtomicOp.ACOS:
        if abs(x) > 1.0:
            raise DomainError(f"acos condition number undefined at {x!r}")
        return [_ratio(x, math.sqrt(1.0 - x * x) * math.acos(x))]
    if op is AtomicOp.SINH:
        return [1.0 if x == 0.0 else _ratio(x * math.cosh(x), math.sinh(x))]
    if op is AtomicOp.COSH:
        return [_ratio(x * math.sinh(x), math.cosh(x))]
    if op is AtomicOp.EXP:
        return [abs(x)]
    if op in (AtomicOp.LOG, AtomicOp.LOG10):
        if x <= 0.0:
            raise DomainError(f"log condition number undefined at {x!r}")
        return [_ratio(1.0, math.log(x))]
    if op is AtomicOp.POW:
        x, y = operands
        if x <= 0.0:
            raise DomainError(f"pow condition number undefined at base {x!r}")
        return [abs(y), abs(y * math.log(x))]
    raise AssertionError(f"unhandled op {op}")  # pragma: no cover


def in_dangerous_region(
    op: AtomicOp,
    operands: Sequence[float],
    threshold: float = DANGEROUS_THRESHOLD,
) -> tuple[bool, tuple[int, ...]]:
    """Whether any per-operand condition number exceeds threshold, plus the
    offending operand indices."""
    cns = condition_numbers(op, operands)
    bad = tuple(i for i, c in enumerate(cns) if c > threshold)
    return bool(bad), bad


# --- trace CSV export ----------------------------------------------------

TRACE_CSV_COLUMNS = (
    "site_index",
    "op",
    "original",
    "perturbed",
    "ulp_diff",
    "max_condition_number",
)


def write_trace_csv(records: Iterable[TraceRecord], stream: IO[str]) -> None:
    """Hex-float formatting for the value columns guarantees bit-exact
    round trips."""
    writer = csv.writer(stream)
    writer.writerow(TRACE_CSV_COLUMNS)
    for r in records:
        writer.writerow(
            [
                r.site_index,
                r.op,
                float.hex(r.original),
                float.hex(r.perturbed),
                repr(r.ulp_diff),
                repr(r.max_condition_number),
            ]
        )


def read_trace_csv(stream: IO[str]) -> list[TraceRecord]:
    reader = csv.reader(stream)
    header = next(reader)
    if tuple(header) != TRACE_CSV_COLUMNS:
        raise ValueError(f"unexpected trace CSV header {header!r}")
    out = []
    for row in reader:
        out.append(
            TraceRecord(
                site_index=int(row[0]),
                op=row[1],
                original=float.fromhex(row[2]),
                perturbed=float.fromhex(row[3]),
                ulp_diff=float(row[4]),
                condition_numbers=(float(row[5]),),
            )
        )
    return out
