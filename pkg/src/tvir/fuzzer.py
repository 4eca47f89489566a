"""Reason-directed differential fuzzer: given a pair predicted unsound for
return-value or memory reasons, search for a concrete counterexample.

The generator is deterministic (seeded PRNG plus a systematic boolean
alternation), inputs are structured (typed arguments plus initial memory),
and every reported counterexample is re-executed before it leaves this
module, so there are no false positives.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from random import Random
from typing import Optional, Union

from .checker import CounterExample, _representative
from .ir import Function, IntType, PtrType, I8, TransformationPair, validate_ssa
from .semantics import (
    IntVal,
    MemBlock,
    MemoryState,
    PtrVal,
    RuntimeValue,
    UnsoundReason,
    outcome_refines,
    outcome_set,
)

FUZZABLE_REASONS = frozenset({UnsoundReason.RETURN_VALUE, UnsoundReason.MEMORY})


class RejectedReason(ValueError):
    """Raised when the requested reasons contain nothing fuzzable (new-UB
    predictions are routed straight to the report)."""


@dataclass(frozen=True)
class FuzzConfig:
    iterations: int = 100_000
    seed: int = 0
    fuel: int = 1_000_000
    time_budget_ms: Optional[int] = None
    mem_cells_per_ptr_param: int = 2

    def __post_init__(self):
        if self.iterations <= 0 or self.fuel <= 0:
            raise ValueError("iterations and fuel must be positive")


@dataclass(frozen=True)
class CounterexampleFound:
    counterexample: CounterExample
    reason: UnsoundReason
    trial_index: int


@dataclass(frozen=True)
class NoneFound:
    trials_run: int


@dataclass(frozen=True)
class FuzzReport:
    verdict: Union[CounterexampleFound, NoneFound]
    strategy_stats: tuple[tuple[str, int], ...]  # (strategy, trials)


@dataclass(frozen=True)
class DivergenceResult:
    diverged: bool
    reason: Optional[UnsoundReason]
    src_outcomes: object  # OutcomeSet
    tgt_outcomes: object  # OutcomeSet
    discarded: bool  # a side ran out of fuel; trial carries no signal


def _boundary_values(width: int) -> list[int]:
    mask = (1 << width) - 1
    vals = [0, 1, mask, 1 << (width - 1), (1 << (width - 1)) - 1]
    vals += [p for p in (2, 4, 8, 16) if p <= mask]
    out = []
    for v in vals:
        if v not in out:
            out.append(v)
    return out


def _strategy_for(reasons: frozenset[UnsoundReason], trial_index: int) -> UnsoundReason:
    ordered = [r for r in (UnsoundReason.RETURN_VALUE, UnsoundReason.MEMORY) if r in reasons]
    return ordered[trial_index % len(ordered)]


def generate_input(
    pair: TransformationPair,
    reasons: frozenset[UnsoundReason] | set[UnsoundReason],
    rng: Random,
    trial_index: int = 0,
    cells_per_ptr: int = 2,
) -> tuple[tuple[RuntimeValue, ...], MemoryState]:
    """One trial input under the strategy selected for this trial.

    Return-value strategy: arguments half from the boundary set, half
    uniform; memory zeroed.  Memory strategy: cells drawn from
    {0, 1, all-ones, uniform}, arguments boundary-biased, and i1 arguments
    alternated so both values occur in any two consecutive memory trials.
    With both reasons requested the strategies alternate per trial.
    """
    reasons = frozenset(reasons)
    if not reasons or not reasons <= FUZZABLE_REASONS:
        raise RejectedReason(f"unfuzzable reasons: {sorted(r.value for r in reasons)}")
    strategy = _strategy_for(reasons, trial_index)
    memory_ordinal = trial_index if len(reasons) == 1 else trial_index // 2

    args: list[RuntimeValue] = []
    ptr_index = 0
    bool_index = 0
    for p in pair.src.params:
        if isinstance(p.ty, PtrType):
            args.append(PtrVal(ptr_index, 0))
            ptr_index += 1
            continue
        w = p.ty.width
        if strategy is UnsoundReason.MEMORY and w == 1:
            args.append(IntVal(1, (memory_ordinal + bool_index) % 2))
            bool_index += 1
        elif strategy is UnsoundReason.MEMORY:
            if rng.random() < 0.8:
                args.append(IntVal(w, rng.choice(_boundary_values(w))))
            else:
                args.append(IntVal(w, rng.randrange(1 << w)))
        else:
            if rng.random() < 0.5:
                args.append(IntVal(w, rng.choice(_boundary_values(w))))
            else:
                args.append(IntVal(w, rng.randrange(1 << w)))
    return tuple(args), _make_memory(pair.src, strategy, rng)


def _make_memory(f: Function, strategy: UnsoundReason, rng: Random, cells_per: int = 2) -> MemoryState:
    n_ptr = sum(1 for p in f.params if isinstance(p.ty, PtrType))
    blocks = []
    for _ in range(n_ptr):
        cells = []
        for _ in range(cells_per):
            if strategy is UnsoundReason.MEMORY:
                mode = rng.randrange(4)
                v = (0, 1, 0xFF)[mode] if mode < 3 else rng.randrange(256)
            else:
                v = 0
            cells.append(IntVal(8, v))
        blocks.append(MemBlock(I8, tuple(cells)))
    return MemoryState(tuple(blocks), n_ptr)


def run_differential(
    pair: TransformationPair,
    trial_input: tuple[tuple[RuntimeValue, ...], MemoryState],
    fuel: int,
    undef_budget: int = 2,
) -> DivergenceResult:
    """Execute both sides on one input and compare under refinement.
    Source-UB inputs never diverge; new-UB-only violations are not this
    module's business and do not count; fuel exhaustion discards the trial.
    """
    args, mem0 = trial_input
    src_set = outcome_set(pair.src, list(args), mem0, fuel, undef_budget)
    tgt_set = outcome_set(pair.tgt, list(args), mem0, fuel, undef_budget)
    result = outcome_refines(tgt_set, src_set)
    if result.fuel_exhausted:
        return DivergenceResult(False, None, src_set, tgt_set, True)
    if result.holds or not src_set.exhaustive:
        return DivergenceResult(False, None, src_set, tgt_set, False)
    if UnsoundReason.RETURN_VALUE in result.reasons:
        return DivergenceResult(True, UnsoundReason.RETURN_VALUE, src_set, tgt_set, False)
    if UnsoundReason.MEMORY in result.reasons:
        return DivergenceResult(True, UnsoundReason.MEMORY, src_set, tgt_set, False)
    return DivergenceResult(False, None, src_set, tgt_set, False)


def shrink(
    pair: TransformationPair,
    counterexample: CounterExample,
    fuel: int = 1_000_000,
) -> CounterExample:
    """Greedy minimization: repeatedly halve each integer argument and each
    memory cell toward zero while the divergence persists."""
    args = list(counterexample.args)
    mem = counterexample.mem0
    cell_grid = [list(b.cells) for b in mem.blocks]

    def rebuild() -> tuple[tuple[RuntimeValue, ...], MemoryState]:
        blocks = tuple(
            MemBlock(b.elem, tuple(cells)) for b, cells in zip(mem.blocks, cell_grid)
        )
        return tuple(args), MemoryState(blocks, mem.param_blocks)

    def still_diverges() -> Optional[DivergenceResult]:
        r = run_differential(pair, rebuild(), fuel)
        return r if r.diverged else None

    for i, a in enumerate(args):
        if not isinstance(a, IntVal):
            continue
        while args[i].value > 0:
            candidate = IntVal(a.width, args[i].value // 2)
            saved = args[i]
            args[i] = candidate
            if still_diverges() is None:
                args[i] = saved
                break
    for cells in cell_grid:
        for j, c in enumerate(cells):
            if not isinstance(c, IntVal):
                continue
            while cells[j].value > 0:
                saved = cells[j]
                cells[j] = IntVal(c.width, cells[j].value // 2)
                if still_diverges() is None:
                    cells[j] = saved
                    break

    final = still_diverges()
    assert final is not None, "shrink lost the divergence"
    final_args, final_mem = rebuild()
    return CounterExample(
        final_args, final_mem, _representative(final.src_outcomes), _witness(final)
    )


def _witness(result: DivergenceResult):
    ref = outcome_refines(result.tgt_outcomes, result.src_outcomes)
    return ref.witness


def fuzz(
    pair: TransformationPair,
    reasons: frozenset[UnsoundReason] | set[UnsoundReason],
    cfg: FuzzConfig = FuzzConfig(),
) -> FuzzReport:
    """Search for a counterexample; deterministic given (pair, reasons,
    cfg) as long as the wall-clock budget does not fire."""
    effective = frozenset(reasons) & FUZZABLE_REASONS
    if not effective:
        raise RejectedReason(
            f"no fuzzable reason in {sorted(r.value for r in frozenset(reasons))}"
        )
    for f in (pair.src, pair.tgt):
        diags = validate_ssa(f)
        if diags:
            raise ValueError(f"@{f.name} is not a valid function: {diags[0]}")

    rng = Random(cfg.seed)
    stats: dict[str, int] = {}
    start = time.monotonic()
    trials = 0
    for t in range(cfg.iterations):
        if (
            cfg.time_budget_ms is not None
            and (time.monotonic() - start) * 1000 > cfg.time_budget_ms
        ):
            break
        trials += 1
        strategy = _strategy_for(effective, t)
        stats[strategy.value] = stats.get(strategy.value, 0) + 1
        trial_input = generate_input(pair, effective, rng, t)
        result = run_differential(pair, trial_input, cfg.fuel)
        if result.discarded or not result.diverged:
            continue
        args, mem0 = trial_input
        raw = CounterExample(
            args, mem0, _representative(result.src_outcomes), _witness(result)
        )
        shrunk = shrink(pair, raw, cfg.fuel)
        confirm = run_differential(pair, (shrunk.args, shrunk.mem0), cfg.fuel)
        assert confirm.diverged, "counterexample failed re-execution"
        return FuzzReport(
            CounterexampleFound(shrunk, confirm.reason, t),
            tuple(sorted(stats.items())),
        )
    return FuzzReport(NoneFound(trials), tuple(sorted(stats.items())))
