"""Formal transformation checker: decide Sound/Unsound/Unknown for a pair
by bounded-exhaustive enumeration of inputs and undef choices.

Enumeration order is fixed: boundary values first, then the remaining
values ascending, with the cartesian product cycling the last coordinate
fastest.  The first refinement failure in that order becomes the reported
counterexample, so verdicts are a pure function of (pair, config).
"""

from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, Union

from .ir import I8, Function, IntType, PtrType, TransformationPair, has_external_call, validate_ssa
from .semantics import (
    IntVal,
    MemBlock,
    MemoryState,
    NULL,
    OutcomeSet,
    PtrVal,
    RefinementResult,
    Returned,
    RuntimeValue,
    UnsoundReason,
    outcome_refines,
    outcome_set,
)


@dataclass(frozen=True)
class CheckConfig:
    max_enum_bits: int = 20  # full product only below this total entropy
    fuel: int = 10_000
    undef_budget: int = 2
    mem_cells_per_ptr_param: int = 2
    mem_init_domain: tuple[int, ...] = (0x00, 0x01, 0xFF)  # boundary cell values
    timeout_ms: int = 300_000

    def __post_init__(self):
        for name in ("max_enum_bits", "fuel", "undef_budget", "mem_cells_per_ptr_param", "timeout_ms"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


class UnknownCause(Enum):
    UNBOUNDED_LOOP = "unbounded_loop"
    EXTERNAL_CALL = "external_call"
    ENUMERATION_BUDGET_EXCEEDED = "enumeration_budget_exceeded"
    TIMEOUT = "timeout"
    TRUNCATED_UNDEF_ENUMERATION = "truncated_undef_enumeration"
    PREDICTOR_UNAVAILABLE = "predictor_unavailable"  # pipeline-level only


@dataclass(frozen=True)
class CounterExample:
    args: tuple[RuntimeValue, ...]
    mem0: MemoryState
    src_outcome: object  # ExecOutcome
    tgt_outcome: object  # ExecOutcome


@dataclass(frozen=True)
class Sound:
    pass


@dataclass(frozen=True)
class Unsound:
    reasons: frozenset[UnsoundReason]
    counterexample: CounterExample


@dataclass(frozen=True)
class Unknown:
    cause: UnknownCause


Verdict = Union[Sound, Unsound, Unknown]


# ---------------------------------------------------------------------------
# Input enumeration


def _boundary_ints(width: int) -> list[int]:
    mask = (1 << width) - 1
    out = []
    for v in (0, 1, mask, 1 << (width - 1), (1 << (width - 1)) - 1):
        if v not in out:
            out.append(v)
    return out


def _int_domain(width: int, exhaustive: bool) -> list[int]:
    boundary = _boundary_ints(width)
    if not exhaustive:
        return boundary
    rest = [v for v in range(1 << width) if v not in set(boundary)]
    return boundary + rest


@dataclass
class InputEnumeration:
    """A deterministic stream of (args, mem0) pairs for a signature."""

    exhaustive: bool
    entropy_bits: int
    _arg_domains: list[list[RuntimeValue]] = field(repr=False, default_factory=list)
    _cell_domains: list[list[int]] = field(repr=False, default_factory=list)
    _cells_per_block: int = 0
    _ptr_param_count: int = 0

    def __iter__(self) -> Iterator[tuple[tuple[RuntimeValue, ...], MemoryState]]:
        n_args = len(self._arg_domains)
        for combo in itertools.product(*self._arg_domains, *self._cell_domains):
            args = combo[:n_args]
            cells = combo[n_args:]
            blocks = []
            for b in range(self._ptr_param_count):
                chunk = cells[b * self._cells_per_block : (b + 1) * self._cells_per_block]
                blocks.append(MemBlock(I8, tuple(IntVal(8, v) for v in chunk)))
            yield tuple(args), MemoryState(tuple(blocks), self._ptr_param_count)


def enumerate_inputs(f: Function, cfg: CheckConfig) -> InputEnumeration:
    """Full cartesian product when the signature's total entropy fits the
    budget, else a boundary-value sub-lattice marked non-exhaustive.

    Entropy accounting: an integer parameter costs its width, a pointer
    parameter costs one bit (buffer vs null), and each memory cell costs
    the cell width (pointer pointee buffers are i8 cells)."""
    ptr_params = [p for p in f.params if isinstance(p.ty, PtrType)]
    cells = cfg.mem_cells_per_ptr_param
    entropy = sum(p.ty.width for p in f.params if isinstance(p.ty, IntType))
    entropy += len(ptr_params) * (1 + 8 * cells)
    exhaustive = entropy <= cfg.max_enum_bits

    arg_domains: list[list[RuntimeValue]] = []
    next_block = 0
    for p in f.params:
        if isinstance(p.ty, IntType):
            arg_domains.append(
                [IntVal(p.ty.width, v) for v in _int_domain(p.ty.width, exhaustive)]
            )
        else:
            arg_domains.append([PtrVal(next_block, 0), NULL])
            next_block += 1
    cell_values = (
        _int_domain(8, True) if exhaustive else [v & 0xFF for v in cfg.mem_init_domain]
    )
    cell_domains = [list(cell_values) for _ in range(len(ptr_params) * cells)]
    return InputEnumeration(
        exhaustive=exhaustive,
        entropy_bits=entropy,
        _arg_domains=arg_domains,
        _cell_domains=cell_domains,
        _cells_per_block=cells,
        _ptr_param_count=len(ptr_params),
    )


# ---------------------------------------------------------------------------
# Checking


def _require_valid(f: Function):
    diags = validate_ssa(f)
    if diags:
        raise ValueError(f"@{f.name} is not a valid function: {diags[0]}")


def _representative(outcomes: OutcomeSet):
    for o in outcomes.outcomes:
        if isinstance(o, Returned):
            return o
    return outcomes.outcomes[0]


def classify_failure(result: RefinementResult) -> set[UnsoundReason]:
    """Reason taxonomy for a failed refinement.  Poison/undef violations
    surface as return-value mismatches by construction."""
    if result.holds:
        raise ValueError("refinement holds; nothing to classify")
    return set(result.reasons)


def check_pair(pair: TransformationPair, cfg: CheckConfig = CheckConfig()) -> Verdict:
    """Verdict for a transformation pair.

    Unsound verdicts always carry a concrete, replayable counterexample
    (the first failing input in enumeration order).  Sound is only issued
    after an exhaustive pass; every budget exhaustion maps to a distinct
    Unknown cause.
    """
    _require_valid(pair.src)
    _require_valid(pair.tgt)
    if has_external_call(pair.src) or has_external_call(pair.tgt):
        return Unknown(UnknownCause.EXTERNAL_CALL)

    start = time.monotonic()
    enum = enumerate_inputs(pair.src, cfg)
    truncated_undef = False
    for args, mem0 in enum:
        if (time.monotonic() - start) * 1000 > cfg.timeout_ms:
            return Unknown(UnknownCause.TIMEOUT)
        src_set = outcome_set(pair.src, list(args), mem0, cfg.fuel, cfg.undef_budget)
        tgt_set = outcome_set(pair.tgt, list(args), mem0, cfg.fuel, cfg.undef_budget)
        result = outcome_refines(tgt_set, src_set)
        if result.fuel_exhausted:
            return Unknown(UnknownCause.UNBOUNDED_LOOP)
        if not src_set.exhaustive or not tgt_set.exhaustive:
            truncated_undef = True
        if not result.holds and src_set.exhaustive:
            # A violation is only trustworthy when the source behaviors are
            # fully known; target truncation can at worst hide more of them.
            return Unsound(
                frozenset(classify_failure(result)),
                CounterExample(args, mem0, _representative(src_set), result.witness),
            )
    if not enum.exhaustive:
        return Unknown(UnknownCause.ENUMERATION_BUDGET_EXCEEDED)
    if truncated_undef:
        return Unknown(UnknownCause.TRUNCATED_UNDEF_ENUMERATION)
    return Sound()


def replay_counterexample(
    pair: TransformationPair, cex: CounterExample, cfg: CheckConfig = CheckConfig()
) -> bool:
    """Re-execute both functions on the recorded input and confirm both
    the recorded outcomes and the refinement violation."""
    src_set = outcome_set(pair.src, list(cex.args), cex.mem0, cfg.fuel, cfg.undef_budget)
    tgt_set = outcome_set(pair.tgt, list(cex.args), cex.mem0, cfg.fuel, cfg.undef_budget)
    if cex.src_outcome not in src_set.outcomes or cex.tgt_outcome not in tgt_set.outcomes:
        return False
    return not outcome_refines(tgt_set, src_set).holds
