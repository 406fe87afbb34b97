"""Command-line front end.

Subcommands: eval (all-backend evaluation of one input), detect
(significance classification with exit-code contract), trace (per-site CSV
of the perturbed run), sweep (neighborhood grid + correlation report),
linsys (linear-system benchmark).

Exit codes: 0 = no significant error, 1 = significant error detected,
2 = usage/input error.  All outputs are byte-identical across repeated
runs with the same configuration and seed.
"""

from __future__ import annotations

import argparse
import io
import json
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

from . import __version__
from .expr_ir import Oracle, Perturbed, Plain, Program, evaluate, parse
from .linalg_bench import BENCH_DEFAULT_SEED, bench_linear_systems
from .perturb_engine import (
    DANGEROUS_THRESHOLD,
    PerturbationPolicy,
    PerturbationStrategy,
    format_strategy,
    parse_strategy,
    write_trace_csv,
)
from .sweep_analysis import (
    SIGNIFICANCE_THRESHOLD,
    SweepConfig,
    correlation_report,
    detect_outliers,
    sweep,
    write_sweep_csv,
)
from .ulp_core import divergence_ulp

__all__ = ["RunConfig", "main"]

_EXIT_OK = 0
_EXIT_SIGNIFICANT = 1
_EXIT_USAGE = 2


@dataclass
class RunConfig:
    """Resolved invocation; to_dict/from_dict round-trip exactly."""

    command: str
    program_path: str | None = None
    bindings: dict[str, float] = field(default_factory=dict)
    strategy: str = "fixed:-1"
    perturb_inputs: bool = True
    perturb_constants: bool = False
    points: int = 1000
    step_ulps: int | None = None
    step_format: str = "binary64"
    center: float | None = None
    sweep_input: str | None = None
    out: str | None = None
    format: str = "csv"
    seed: int = BENCH_DEFAULT_SEED
    kappa_min: float = 10.0
    kappa_max: float = 1e12
    dim: int = 50
    count: int = 100

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        return cls(**data)

    def strategy_value(self) -> PerturbationStrategy:
        return parse_strategy(self.strategy)

    def policy_value(self) -> PerturbationPolicy:
        return PerturbationPolicy(
            perturb_op_results=True,
            perturb_inputs=self.perturb_inputs,
            perturb_constants=self.perturb_constants,
        )


class _UsageError(Exception):
    pass


def _parse_value(text: str) -> float:
    return float.fromhex(text) if text.strip().lower().startswith(("0x", "-0x", "+0x")) else float(text)


def _parse_bindings(pairs: list[str]) -> dict[str, float]:
    out: dict[str, float] = {}
    for pair in pairs:
        name, sep, value = pair.partition("=")
        if not sep or not name:
            raise _UsageError(f"binding {pair!r} is not of the form name=value")
        try:
            out[name.strip()] = _parse_value(value)
        except ValueError as exc:
            raise _UsageError(f"binding {pair!r}: {exc}") from exc
    return out


def _load_program(path: str | None) -> Program:
    if path is None:
        raise _UsageError("a program file is required")
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise _UsageError(f"cannot read program {path!r}: {exc}") from exc
    return parse(text)


def _onoff(value: str) -> bool:
    v = value.strip().lower()
    if v in ("on", "1", "true", "yes"):
        return True
    if v in ("off", "0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on|off, got {value!r}")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(
        prog="ulpshadow",
        description="Detect numerical error amplification by ULP-scale shadow execution.",
    )
    top.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = top.add_subparsers(dest="command", required=True)

    def add_common(p: argparse.ArgumentParser, with_program: bool = True) -> None:
        if with_program:
            p.add_argument("program", help="program file (see README for the grammar)")
            p.add_argument(
                "bindings",
                nargs="*",
                help="input bindings name=value (decimal or hex-float)",
            )
        p.add_argument("--strategy", default="fixed:-1", help="none | fixed:K | cyclic[:a,b,...]")
        p.add_argument("--perturb-inputs", type=_onoff, default=True, metavar="on|off")
        p.add_argument("--perturb-constants", type=_onoff, default=False, metavar="on|off")

    p_eval = sub.add_parser("eval", help="evaluate under all three backends")
    add_common(p_eval)

    p_detect = sub.add_parser("detect", help="classify the divergence; exit 1 if significant")
    add_common(p_detect)

    p_trace = sub.add_parser("trace", help="per-site CSV trace of the perturbed run")
    add_common(p_trace)
    p_trace.add_argument("--out", help="output path (default: stdout)")

    p_sweep = sub.add_parser("sweep", help="grid sweep around a center input")
    add_common(p_sweep)
    p_sweep.add_argument("--center", required=True, help="grid center (decimal or hex-float)")
    p_sweep.add_argument("--input", dest="sweep_input", help="swept input name (default: sole input)")
    p_sweep.add_argument("--points", type=int, default=1000, help="points on each side (default 1000)")
    p_sweep.add_argument("--step-ulps", type=int, default=None, help="step multiple (default 10/1 per format)")
    p_sweep.add_argument("--step-format", choices=("64", "32"), default="64")
    p_sweep.add_argument("--out", help="output path (default: stdout)")
    p_sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    p_sweep.add_argument("--seed", type=int, default=BENCH_DEFAULT_SEED, help="p-value permutation seed")

    p_lin = sub.add_parser("linsys", help="linear-system benchmark across backends")
    add_common(p_lin, with_program=False)
    p_lin.add_argument("--count", type=int, default=100)
    p_lin.add_argument("--dim", type=int, default=50)
    p_lin.add_argument("--kappa-min", type=float, default=10.0)
    p_lin.add_argument("--kappa-max", type=float, default=1e12)
    p_lin.add_argument("--seed", type=int, default=BENCH_DEFAULT_SEED)
    p_lin.add_argument("--out", help="output path (default: stdout)")
    p_lin.add_argument("--format", choices=("json", "csv"), default="json")
    return top


def _config_from_args(args: argparse.Namespace) -> RunConfig:
    cfg = RunConfig(command=args.command)
    cfg.strategy = format_strategy(parse_strategy(args.strategy))
    cfg.perturb_inputs = args.perturb_inputs
    cfg.perturb_constants = args.perturb_constants
    if getattr(args, "program", None) is not None:
        cfg.program_path = args.program
        cfg.bindings = _parse_bindings(args.bindings)
    for name in ("out", "seed", "count", "dim"):
        if getattr(args, name, None) is not None:
            setattr(cfg, name, getattr(args, name))
    if getattr(args, "format", None):
        cfg.format = args.format
    if args.command == "sweep":
        cfg.center = _parse_value(args.center)
        cfg.sweep_input = args.sweep_input
        cfg.points = args.points
        cfg.step_ulps = args.step_ulps
        cfg.step_format = "binary64" if args.step_format == "64" else "binary32"
    if args.command == "linsys":
        cfg.kappa_min = args.kappa_min
        cfg.kappa_max = args.kappa_max
    return cfg


def _significance(plain: float, perturbed: float) -> tuple[bool, float, float]:
    """Dual threshold: relative divergence past 0.1%, or ULP divergence past
    the dangerous-region scale (relative error understates divergence for
    results near zero)."""
    ulp_div = divergence_ulp(plain, perturbed)
    if ulp_div == 0.0:
        return False, 0.0, 0.0
    if plain == 0.0 or not (math.isfinite(plain) and math.isfinite(perturbed)):
        rel = math.inf
    else:
        rel = abs(plain - perturbed) / abs(plain)
    return rel > SIGNIFICANCE_THRESHOLD or ulp_div > DANGEROUS_THRESHOLD, rel, ulp_div


def _run_backends(cfg: RunConfig):
    program = _load_program(cfg.program_path)
    backend = Perturbed(cfg.strategy_value(), cfg.policy_value())
    try:
        plain = evaluate(program, cfg.bindings, Plain())
        pert = evaluate(program, cfg.bindings, backend, record_trace=True)
        oracle = evaluate(program, cfg.bindings, Oracle())
    except (ValueError, KeyError) as exc:
        raise _UsageError(str(exc)) from exc
    return program, plain, pert, oracle


def _cmd_eval(cfg: RunConfig) -> int:
    _, plain, pert, oracle = _run_backends(cfg)
    print(f"plain      {plain.result!r}")
    print(f"perturbed  {pert.result!r}")
    print(f"oracle     {oracle.result!r}")
    print(f"dela_err   {divergence_ulp(plain.result, pert.result)!r}")
    print(f"oracle_err {divergence_ulp(oracle.result, plain.result)!r}")
    return _EXIT_OK


def _cmd_detect(cfg: RunConfig) -> int:
    _, plain, pert, _oracle = _run_backends(cfg)
    significant, rel, ulp_div = _significance(plain.result, pert.result)
    if not significant:
        print(f"not significant (relative {rel:.3e}, ulp {ulp_div:.3e})")
        return _EXIT_OK
    print(f"SIGNIFICANT (relative {rel:.3e}, ulp {ulp_div:.3e})")
    if pert.trace:
        worst = max(pert.trace, key=lambda r: r.max_condition_number)
        print(
            "largest single-site amplification: "
            f"site {worst.site_index} op {worst.op} original {worst.original!r} "
            f"perturbed {worst.perturbed!r} condition {worst.max_condition_number!r}"
        )
    return _EXIT_SIGNIFICANT


def _cmd_trace(cfg: RunConfig) -> int:
    _, _plain, pert, _oracle = _run_backends(cfg)
    buffer = io.StringIO()
    write_trace_csv(pert.trace or [], buffer)
    _emit(cfg.out, buffer.getvalue())
    return _EXIT_OK


def _cmd_sweep(cfg: RunConfig) -> int:
    program = _load_program(cfg.program_path)
    if cfg.sweep_input is None:
        if len(program.inputs) != 1:
            raise _UsageError("--input is required for programs with several inputs")
        swept = program.inputs[0]
    else:
        swept = cfg.sweep_input
    config = SweepConfig(
        center=cfg.center,
        points_each_side=cfg.points,
        step_multiple=cfg.step_ulps,
        step_format=cfg.step_format,
    )
    try:
        rows = sweep(
            program,
            swept,
            config,
            cfg.strategy_value(),
            cfg.policy_value(),
            fixed_inputs=cfg.bindings,
        )
    except (ValueError, KeyError) as exc:
        raise _UsageError(str(exc)) from exc

    finite = [
        r for r in rows if math.isfinite(r.dela_err) and math.isfinite(r.oracle_err)
    ]
    reports: dict[str, dict] = {}
    if len(finite) >= 2:
        xs = [r.dela_err for r in finite]
        ys = [r.oracle_err for r in finite]
        try:
            reports["all"] = correlation_report(xs, ys, seed=cfg.seed).to_dict()
            outliers = detect_outliers(finite) if len(finite) >= 5 else []
            if outliers:
                kept = [i for i in range(len(finite)) if i not in set(outliers)]
                reports["outliers_excluded"] = correlation_report(
                    [xs[i] for i in kept],
                    [ys[i] for i in kept],
                    seed=cfg.seed,
                    outliers_removed=len(outliers),
                ).to_dict()
        except ValueError:
            pass

    peak = max(range(len(rows)), key=lambda i: rows[i].dela_err)
    summary = (
        f"rows {len(rows)} peak_index {peak - cfg.points} peak_input {rows[peak].input!r} "
        f"peak_dela_err {rows[peak].dela_err:.6e} nonfinite_rows {len(rows) - len(finite)}"
    )
    if cfg.format == "csv":
        buffer = io.StringIO()
        write_sweep_csv(rows, buffer)
        _emit(cfg.out, buffer.getvalue())
    else:
        payload = {
            "rows": [
                {
                    "input_hex": float.hex(r.input),
                    "input": r.input,
                    "dela_err": r.dela_err,
                    "oracle_err": r.oracle_err,
                    "plain": r.plain_result,
                    "perturbed": r.perturbed_result,
                    "oracle": r.oracle_result_rounded,
                }
                for r in rows
            ],
            "correlations": reports,
        }
        _emit(cfg.out, json.dumps(payload, indent=2) + "\n")
    print(summary)
    for name, rep in reports.items():
        print(
            f"correlation[{name}]: pearson {rep['pearson_r']:.4f} (p {rep['p_pearson']:.2e}) "
            f"spearman {rep['spearman_rho']:.4f} (p {rep['p_spearman']:.2e}) n {rep['n']}"
        )
    return _EXIT_OK


def _cmd_linsys(cfg: RunConfig) -> int:
    try:
        report = bench_linear_systems(
            count=cfg.count,
            dim=cfg.dim,
            kappa_range=(cfg.kappa_min, cfg.kappa_max),
            seed=cfg.seed,
            strategy=cfg.strategy_value(),
        )
    except ValueError as exc:
        raise _UsageError(str(exc)) from exc
    if cfg.format == "json":
        _emit(cfg.out, json.dumps(report.to_dict(), indent=2) + "\n")
    else:
        buffer = io.StringIO()
        buffer.write("index,seed,kappa_target,kappa,dela_err,oracle_err,significant\n")
        for c in report.cases:
            buffer.write(
                f"{c.index},{c.seed},{c.kappa_target!r},{c.kappa!r},"
                f"{c.dela_err!r},{c.oracle_err!r},{int(c.significant)}\n"
            )
        _emit(cfg.out, buffer.getvalue())
    d = report.dela_vs_oracle
    print(
        f"cases {len(report.cases)} singular {report.singular_cases} "
        f"pearson_log {d.pearson_r:.4f} (p {d.p_pearson:.2e}) "
        f"spearman_log {d.spearman_rho:.4f} (p {d.p_spearman:.2e}) "
        f"spearman_kappa_dela {report.kappa_vs_dela.spearman_rho:.4f} "
        f"top3_dela {list(report.top3_dela)} top3_oracle {list(report.top3_oracle)}"
    )
    return _EXIT_OK


def _emit(path: str | None, text: str) -> None:
    """Write output atomically enough that failures leave no partial file."""
    if path is None:
        sys.stdout.write(text)
        return
    target = Path(path)
    tmp = target.with_suffix(target.suffix + ".tmp")
    try:
        tmp.write_text(text, encoding="utf-8")
        tmp.replace(target)
    except OSError:
        tmp.unlink(missing_ok=True)
        raise


_COMMANDS = {
    "eval": _cmd_eval,
    "detect": _cmd_detect,
    "trace": _cmd_trace,
    "sweep": _cmd_sweep,
    "linsys": _cmd_linsys,
}


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors already; normalize --help to 0.
        return int(exc.code or 0)
    try:
        cfg = _config_from_args(args)
        return _COMMANDS[cfg.command](cfg)
    except _UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
