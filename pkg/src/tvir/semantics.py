"""Execution semantics: the poison/undef value lattice, typed memory,
nondeterministic-outcome enumeration, and the refinement relations used to
compare a transformed function against its source.

Value ordering (most to least permissive): a source Poison licenses any
target value; a source Undef licenses Undef or any concrete integer of the
same width; a concrete source value licenses only itself.

Undef is resolved per dynamic occurrence: every consuming use draws an
independent concrete bit pattern from the choice oracle, so two uses of
a register holding Undef may observe different values.  Phi and Load are
copies, not uses; Ret, Store and all computing instructions are uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Optional, Union

from .ir import (
    Alloca,
    BinOp,
    Br,
    CallExternal,
    Cast,
    ConstInt,
    Function,
    ICmp,
    IntType,
    Load,
    NullConst,
    Operand,
    Phi,
    PoisonConst,
    PtrType,
    Register,
    Ret,
    Select,
    Store,
    TypeRef,
    UndefConst,
)

ChoiceOracle = Callable[[int], int]


class InterpError(Exception):
    """Hard fault: the caller violated an execution precondition (invalid
    function, ill-typed memory access, unsupported construct)."""


# ---------------------------------------------------------------------------
# Runtime values


@dataclass(frozen=True)
class Poison:
    pass


@dataclass(frozen=True)
class Undef:
    ty: TypeRef


@dataclass(frozen=True)
class IntVal:
    width: int
    value: int

    def __post_init__(self):
        object.__setattr__(self, "value", self.value % (1 << self.width))


@dataclass(frozen=True)
class PtrVal:
    block: int
    offset: int


@dataclass(frozen=True)
class NullPtrVal:
    pass


RuntimeValue = Union[Poison, Undef, IntVal, PtrVal, NullPtrVal]

POISON = Poison()
NULL = NullPtrVal()


@dataclass(frozen=True)
class MemBlock:
    elem: IntType
    cells: tuple[RuntimeValue, ...]


@dataclass(frozen=True)
class MemoryState:
    """Typed memory: block ids 0..param_blocks-1 are the pointee buffers of
    pointer parameters (in parameter order) and are the only blocks visible
    to refinement; later ids are appended by executed allocas."""

    blocks: tuple[MemBlock, ...]
    param_blocks: int


EMPTY_MEMORY = MemoryState((), 0)


class UBKind(Enum):
    DIV_BY_ZERO = "div_by_zero"
    REM_BY_ZERO = "rem_by_zero"
    NULL_DEREF = "null_deref"
    OUT_OF_BOUNDS = "out_of_bounds"
    BRANCH_ON_POISON = "branch_on_poison"


@dataclass(frozen=True)
class Returned:
    value: Optional[RuntimeValue]  # None for void
    memory: MemoryState


@dataclass(frozen=True)
class TriggeredUB:
    kind: UBKind
    at: str  # "block:index"


@dataclass(frozen=True)
class OutOfFuel:
    pass


ExecOutcome = Union[Returned, TriggeredUB, OutOfFuel]


@dataclass(frozen=True)
class OutcomeSet:
    outcomes: tuple[ExecOutcome, ...]  # deduplicated, enumeration order
    exhaustive: bool


class UnsoundReason(Enum):
    RETURN_VALUE = "return_value"
    MEMORY = "memory"
    NEW_UB = "new_ub"


REASON_ORDER = (UnsoundReason.RETURN_VALUE, UnsoundReason.MEMORY, UnsoundReason.NEW_UB)


# ---------------------------------------------------------------------------
# Two's-complement arithmetic


def to_signed(value: int, width: int) -> int:
    return value - (1 << width) if value >= (1 << (width - 1)) else value


def from_signed(value: int, width: int) -> int:
    return value % (1 << width)


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return -q if (a < 0) != (b < 0) else q


def _apply_binop(op: str, flags: frozenset[str], width: int, a: int, b: int):
    """Returns an unsigned result, POISON, or a UBKind."""
    mask = (1 << width) - 1
    sa, sb = to_signed(a, width), to_signed(b, width)
    smin, smax = -(1 << (width - 1)), (1 << (width - 1)) - 1

    if op == "add":
        if "nsw" in flags and not smin <= sa + sb <= smax:
            return POISON
        if "nuw" in flags and a + b > mask:
            return POISON
        return (a + b) & mask
    if op == "sub":
        if "nsw" in flags and not smin <= sa - sb <= smax:
            return POISON
        if "nuw" in flags and a < b:
            return POISON
        return (a - b) & mask
    if op == "mul":
        if "nsw" in flags and not smin <= sa * sb <= smax:
            return POISON
        if "nuw" in flags and a * b > mask:
            return POISON
        return (a * b) & mask
    if op == "udiv":
        if b == 0:
            return UBKind.DIV_BY_ZERO
        if "exact" in flags and a % b != 0:
            return POISON
        return a // b
    if op == "sdiv":
        if b == 0 or (sa == smin and sb == -1):
            return UBKind.DIV_BY_ZERO
        q = _trunc_div(sa, sb)
        if "exact" in flags and sa - sb * q != 0:
            return POISON
        return from_signed(q, width)
    if op == "urem":
        if b == 0:
            return UBKind.REM_BY_ZERO
        return a % b
    if op == "srem":
        if b == 0 or (sa == smin and sb == -1):
            return UBKind.REM_BY_ZERO
        return from_signed(sa - sb * _trunc_div(sa, sb), width)
    if op == "shl":
        if b >= width:
            return POISON
        r = (a << b) & mask
        if "nuw" in flags and (r >> b) != a:
            return POISON
        if "nsw" in flags and sa * (1 << b) != to_signed(r, width):
            return POISON
        return r
    if op == "lshr":
        if b >= width:
            return POISON
        if "exact" in flags and a & ((1 << b) - 1):
            return POISON
        return a >> b
    if op == "ashr":
        if b >= width:
            return POISON
        if "exact" in flags and a & ((1 << b) - 1):
            return POISON
        return from_signed(sa >> b, width)
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    raise InterpError(f"unknown binop {op}")


_ICMP_FNS = {
    "eq": lambda a, b, sa, sb: a == b,
    "ne": lambda a, b, sa, sb: a != b,
    "ult": lambda a, b, sa, sb: a < b,
    "ule": lambda a, b, sa, sb: a <= b,
    "ugt": lambda a, b, sa, sb: a > b,
    "uge": lambda a, b, sa, sb: a >= b,
    "slt": lambda a, b, sa, sb: sa < sb,
    "sle": lambda a, b, sa, sb: sa <= sb,
    "sgt": lambda a, b, sa, sb: sa > sb,
    "sge": lambda a, b, sa, sb: sa >= sb,
}


# ---------------------------------------------------------------------------
# The interpreter


def _const_value(op: Operand, env: dict[str, RuntimeValue]) -> RuntimeValue:
    if isinstance(op, Register):
        try:
            return env[op.name]
        except KeyError:
            raise InterpError(f"undefined register %{op.name}") from None
    if isinstance(op, ConstInt):
        return IntVal(op.ty.width, op.bits)
    if isinstance(op, UndefConst):
        return Undef(op.ty)
    if isinstance(op, PoisonConst):
        return POISON
    return NULL


def _resolve(v: RuntimeValue, choose: ChoiceOracle) -> RuntimeValue:
    """Replace an integer Undef with a concrete oracle-chosen bit pattern."""
    if isinstance(v, Undef) and isinstance(v.ty, IntType):
        w = v.ty.width
        return IntVal(w, choose(w) % (1 << w))
    return v


def _int_of(v: RuntimeValue, what: str) -> IntVal:
    if not isinstance(v, IntVal):
        raise InterpError(f"{what}: expected an integer value, got {v!r}")
    return v


def execute(
    f: Function,
    args: list[RuntimeValue],
    mem0: MemoryState,
    fuel: int,
    undef_choice: ChoiceOracle,
) -> ExecOutcome:
    """Run one execution.  Deterministic given (args, mem0, undef_choice);
    never mutates mem0.  The function must satisfy validate_ssa."""
    if len(args) != len(f.params):
        raise InterpError(
            f"@{f.name} expects {len(f.params)} arguments, got {len(args)}"
        )
    env: dict[str, RuntimeValue] = {
        p.name: v for p, v in zip(f.params, args)
    }
    # Thaw memory into mutable lists; refreeze at return.
    blocks: list[tuple[IntType, list[RuntimeValue]]] = [
        (blk.elem, list(blk.cells)) for blk in mem0.blocks
    ]
    by_label = {b.label: b for b in f.blocks}
    cur = f.blocks[0]
    prev_label: Optional[str] = None
    steps = 0

    def freeze() -> MemoryState:
        return MemoryState(
            tuple(MemBlock(elem, tuple(cells)) for elem, cells in blocks),
            mem0.param_blocks,
        )

    def deref(p: RuntimeValue, width: int, at: str):
        """Returns (block, offset) or a TriggeredUB.  width < 0 skips the
        cell-type check (store of a poison value of unknown width)."""
        if isinstance(p, (Poison, Undef, NullPtrVal)):
            return TriggeredUB(UBKind.NULL_DEREF, at)
        if not isinstance(p, PtrVal):
            raise InterpError(f"{at}: expected a pointer value")
        elem, cells = blocks[p.block]
        if not 0 <= p.offset < len(cells):
            return TriggeredUB(UBKind.OUT_OF_BOUNDS, at)
        if width >= 0 and elem.width != width:
            raise InterpError(
                f"{at}: i{width} access to a block of i{elem.width} cells"
            )
        return p.block, p.offset

    while True:
        index = 0
        # Phi nodes are a parallel copy from the incoming edge.
        phi_updates: list[tuple[str, RuntimeValue]] = []
        while index < len(cur.instrs) and isinstance(cur.instrs[index], Phi):
            steps += 1
            if steps > fuel:
                return OutOfFuel()
            phi = cur.instrs[index]
            incoming = dict(phi.incomings).get(prev_label)
            if incoming is None:
                raise InterpError(
                    f"{cur.label}:{index}: no phi incoming for edge from {prev_label}"
                )
            phi_updates.append((phi.name, _const_value(incoming, env)))
            index += 1
        env.update(phi_updates)

        while index < len(cur.instrs):
            instr = cur.instrs[index]
            at = f"{cur.label}:{index}"
            steps += 1
            if steps > fuel:
                return OutOfFuel()

            if isinstance(instr, BinOp):
                a = _const_value(instr.lhs, env)
                b = _const_value(instr.rhs, env)
                if isinstance(a, Poison) or isinstance(b, Poison):
                    env[instr.name] = POISON
                else:
                    av = _int_of(_resolve(a, undef_choice), at)
                    bv = _int_of(_resolve(b, undef_choice), at)
                    r = _apply_binop(instr.op, instr.flags, av.width, av.value, bv.value)
                    if isinstance(r, UBKind):
                        return TriggeredUB(r, at)
                    env[instr.name] = r if isinstance(r, Poison) else IntVal(av.width, r)
            elif isinstance(instr, ICmp):
                a = _const_value(instr.lhs, env)
                b = _const_value(instr.rhs, env)
                if isinstance(a, Poison) or isinstance(b, Poison):
                    env[instr.name] = POISON
                else:
                    av = _int_of(_resolve(a, undef_choice), at)
                    bv = _int_of(_resolve(b, undef_choice), at)
                    truth = _ICMP_FNS[instr.pred](
                        av.value,
                        bv.value,
                        to_signed(av.value, av.width),
                        to_signed(bv.value, bv.width),
                    )
                    env[instr.name] = IntVal(1, int(truth))
            elif isinstance(instr, Select):
                c = _const_value(instr.cond, env)
                if isinstance(c, Poison):
                    env[instr.name] = POISON
                else:
                    c = _int_of(_resolve(c, undef_choice), at)
                    chosen = instr.tval if c.value else instr.fval
                    env[instr.name] = _const_value(chosen, env)
            elif isinstance(instr, Cast):
                v = _const_value(instr.src, env)
                if isinstance(v, Poison):
                    env[instr.name] = POISON
                else:
                    v = _int_of(_resolve(v, undef_choice), at)
                    to_w = instr.to.width
                    if instr.op == "zext":
                        env[instr.name] = IntVal(to_w, v.value)
                    elif instr.op == "sext":
                        env[instr.name] = IntVal(to_w, from_signed(to_signed(v.value, v.width), to_w))
                    else:  # trunc
                        env[instr.name] = IntVal(to_w, v.value)
            elif isinstance(instr, Alloca):
                bid = len(blocks)
                blocks.append((instr.ty, [Undef(instr.ty)] * instr.count))
                env[instr.name] = PtrVal(bid, 0)
            elif isinstance(instr, Load):
                loc = deref(_const_value(instr.ptr, env), instr.ty.width, at)
                if isinstance(loc, TriggeredUB):
                    return loc
                bid, off = loc
                env[instr.name] = blocks[bid][1][off]
            elif isinstance(instr, Store):
                v = _const_value(instr.val, env)
                loc = deref(_const_value(instr.ptr, env), _value_width(instr.val, v), at)
                if isinstance(loc, TriggeredUB):
                    return loc
                bid, off = loc
                if not isinstance(v, Poison):
                    v = _resolve(v, undef_choice)
                    if not isinstance(v, IntVal):
                        raise InterpError(f"{at}: stored value must be an integer")
                blocks[bid][1][off] = v
            elif isinstance(instr, Br):
                if instr.cond is None:
                    target = instr.then_label
                else:
                    c = _const_value(instr.cond, env)
                    if isinstance(c, (Poison, Undef)):
                        return TriggeredUB(UBKind.BRANCH_ON_POISON, at)
                    target = instr.then_label if _int_of(c, at).value else instr.else_label
                prev_label = cur.label
                cur = by_label[target]
                break
            elif isinstance(instr, Ret):
                if instr.val is None:
                    return Returned(None, freeze())
                v = _const_value(instr.val, env)
                if not isinstance(v, Poison):
                    v = _resolve(v, undef_choice)
                return Returned(v, freeze())
            elif isinstance(instr, CallExternal):
                raise InterpError(f"{at}: external call @{instr.callee} is not executable")
            else:
                raise InterpError(f"{at}: unexecutable instruction {instr!r}")
            index += 1
        else:
            raise InterpError(f"{cur.label}: fell off the end of a block")


def _value_width(op: Operand, v: RuntimeValue) -> int:
    """Stored-value width, or -1 when unknowable (a poisoned register)."""
    if isinstance(v, IntVal):
        return v.width
    if isinstance(v, Undef) and isinstance(v.ty, IntType):
        return v.ty.width
    if isinstance(op, (ConstInt, UndefConst, PoisonConst)) and isinstance(op.ty, IntType):
        return op.ty.width
    return -1


# ---------------------------------------------------------------------------
# Outcome enumeration


class _ScriptOracle:
    """Replays a fixed prefix of choices, then answers 0 and records the
    widths of any further demands."""

    def __init__(self, script: tuple[int, ...]):
        self.script = script
        self.pos = 0
        self.extra_widths: list[int] = []

    def __call__(self, width: int) -> int:
        if self.pos < len(self.script):
            v = self.script[self.pos]
            self.pos += 1
            return v
        self.extra_widths.append(width)
        return 0


class _PatternOracle:
    def __init__(self, fn: Callable[[int, int], int]):
        self.fn = fn
        self.count = 0

    def __call__(self, width: int) -> int:
        v = self.fn(self.count, width)
        self.count += 1
        return v


_ONE_HOT_CAP = 32


def outcome_set(
    f: Function,
    args: list[RuntimeValue],
    mem0: MemoryState,
    fuel: int,
    undef_budget: int = 2,
    max_choice_bits: int = 16,
) -> OutcomeSet:
    """All execution outcomes over undef-choice assignments.

    Full enumeration runs while every execution path demands at most
    undef_budget choices totalling at most max_choice_bits of entropy.
    Beyond that the set falls back to a documented subset of assignments
    (all-zeros, all-ones, one-hot per occurrence up to 32) and is marked
    non-exhaustive.
    """
    outcomes: list[ExecOutcome] = []
    seen: set[ExecOutcome] = set()

    def add(out: ExecOutcome):
        if out not in seen:
            seen.add(out)
            outcomes.append(out)

    truncated = False
    queue: list[tuple[tuple[int, ...], int]] = [((), 0)]  # (choices, bits used)
    qi = 0
    while qi < len(queue):
        prefix, bits = queue[qi]
        qi += 1
        probe = _ScriptOracle(prefix)
        out = execute(f, args, mem0, fuel, probe)
        if not probe.extra_widths:
            add(out)
            continue
        w = probe.extra_widths[0]
        if len(prefix) >= undef_budget or bits + w > max_choice_bits:
            truncated = True
            break
        queue.extend((prefix + (v,), bits + w) for v in range(1 << w))

    if truncated:
        outcomes, seen = [], set()
        zero = _PatternOracle(lambda i, w: 0)
        add(execute(f, args, mem0, fuel, zero))
        add(execute(f, args, mem0, fuel, _PatternOracle(lambda i, w: (1 << w) - 1)))
        for hot in range(min(zero.count, _ONE_HOT_CAP)):
            add(
                execute(
                    f,
                    args,
                    mem0,
                    fuel,
                    _PatternOracle(lambda i, w, hot=hot: (1 << w) - 1 if i == hot else 0),
                )
            )

    return OutcomeSet(tuple(outcomes), exhaustive=not truncated)


# ---------------------------------------------------------------------------
# Refinement


def value_refines(tgt: Optional[RuntimeValue], src: Optional[RuntimeValue]) -> bool:
    """True iff the target value is one the source value permits."""
    if src is None or tgt is None:
        return src is None and tgt is None  # void
    if isinstance(src, Poison):
        return True
    if isinstance(src, Undef):
        if isinstance(tgt, Undef):
            return True
        return isinstance(tgt, IntVal) and isinstance(src.ty, IntType) and tgt.width == src.ty.width
    return tgt == src


def memory_refines(tgt_mem: MemoryState, src_mem: MemoryState) -> bool:
    """Cell-wise value refinement over parameter-visible blocks; local
    alloca blocks on either side are unobservable."""
    if tgt_mem.param_blocks != src_mem.param_blocks:
        raise InterpError("memory layouts differ: parameter block counts")
    for bid in range(src_mem.param_blocks):
        sb, tb = src_mem.blocks[bid], tgt_mem.blocks[bid]
        if sb.elem != tb.elem or len(sb.cells) != len(tb.cells):
            raise InterpError(f"memory layouts differ at block {bid}")
        for tcell, scell in zip(tb.cells, sb.cells):
            if not value_refines(tcell, scell):
                return False
    return True


@dataclass(frozen=True)
class RefinementResult:
    holds: bool
    reasons: frozenset[UnsoundReason]
    witness: Optional[ExecOutcome]  # first offending target outcome
    approximate: bool  # an outcome set was truncated
    fuel_exhausted: bool  # an execution ran out of fuel; holds is undefined


def outcome_refines(tgt_set: OutcomeSet, src_set: OutcomeSet) -> RefinementResult:
    """Set-level refinement: every target outcome must be licensed by some
    source outcome; any source UB licenses everything."""
    approximate = not (src_set.exhaustive and tgt_set.exhaustive)
    if any(isinstance(o, OutOfFuel) for o in src_set.outcomes + tgt_set.outcomes):
        return RefinementResult(True, frozenset(), None, approximate, True)
    if any(isinstance(o, TriggeredUB) for o in src_set.outcomes):
        return RefinementResult(True, frozenset(), None, approximate, False)

    src_returned = [o for o in src_set.outcomes if isinstance(o, Returned)]
    reasons: set[UnsoundReason] = set()
    witness: Optional[ExecOutcome] = None
    for out in tgt_set.outcomes:
        if isinstance(out, TriggeredUB):
            reasons.add(UnsoundReason.NEW_UB)
            witness = witness or out
            continue
        covering = [s for s in src_returned if value_refines(out.value, s.value)]
        if not covering:
            reasons.add(UnsoundReason.RETURN_VALUE)
            witness = witness or out
        elif not any(memory_refines(out.memory, s.memory) for s in covering):
            reasons.add(UnsoundReason.MEMORY)
            witness = witness or out
    return RefinementResult(not reasons, frozenset(reasons), witness, approximate, False)
