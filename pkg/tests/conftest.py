from __future__ import annotations

from pathlib import Path

import pytest

from ulpshadow.expr_ir import Program, parse

CORPUS_DIR = Path(__file__).resolve().parent.parent / "corpus"

# The ill-conditioned reference input for the Legendre Q0 kernel, used
# across the suite as the canonical catastrophic-cancellation fixture.
REFERENCE_INPUT = 0.9999999999999809

# Representative inputs for every corpus program (kept in one place so the
# differential and performance tests agree on the workload).
CORPUS_INPUTS: dict[str, dict[str, float]] = {
    "legendre_q0": {"x": REFERENCE_INPUT},
    "sub_literals": {},
    "masking_twins": {"a": 0.7},
    "increment_cancel": {"x": 1e-17},
    "expm1_naive": {"x": 1e-9},
    "quad_root": {"b": 1000.0, "c": 1.0},
    "sin_near_pi": {"x": 3.141592653589793},
    "trig_mix": {"x": 0.37},
    "poly_horner": {"z": 1.0000001},
    "halley_w0_depth1": {"x": 0.2},
    "halley_w0_depth3": {"x": 0.2},
}


def load_corpus_program(name: str) -> Program:
    return parse((CORPUS_DIR / f"{name}.prog").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def legendre() -> Program:
    return load_corpus_program("legendre_q0")


@pytest.fixture(scope="session")
def corpus_programs() -> dict[str, Program]:
    return {name: load_corpus_program(name) for name in CORPUS_INPUTS}
