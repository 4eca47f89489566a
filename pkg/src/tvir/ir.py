"""Mini SSA IR: types, parser, canonical printer, structural validation.

The textual form is an LLVM-assembly-like subset (see docs/grammar.ebnf);
corpus files use the extension ``.mir.ll``.  All IR nodes are immutable
after construction, and parsing/printing are pure functions, so values can
be shared freely across threads.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

INT_WIDTHS = (1, 8, 16, 32, 64)

BINOP_NAMES = (
    "add", "sub", "mul", "udiv", "sdiv", "urem", "srem",
    "shl", "lshr", "ashr", "and", "or", "xor",
)
ICMP_PREDS = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")
CAST_OPS = ("zext", "sext", "trunc")
FLAG_NAMES = ("nuw", "nsw", "exact")
WRAP_FLAG_OPS = frozenset({"add", "sub", "mul", "shl"})
EXACT_FLAG_OPS = frozenset({"udiv", "sdiv", "lshr", "ashr"})


# ---------------------------------------------------------------------------
# Types and operands


@dataclass(frozen=True)
class IntType:
    width: int

    def __post_init__(self):
        if self.width not in INT_WIDTHS:
            raise ValueError(f"unsupported integer width {self.width}")


@dataclass(frozen=True)
class PtrType:
    pass


TypeRef = Union[IntType, PtrType]

I1 = IntType(1)
I8 = IntType(8)
I16 = IntType(16)
I32 = IntType(32)
I64 = IntType(64)
PTR = PtrType()

_TYPE_NAMES = {"i1": I1, "i8": I8, "i16": I16, "i32": I32, "i64": I64, "ptr": PTR}


def type_name(ty: TypeRef) -> str:
    if isinstance(ty, IntType):
        return f"i{ty.width}"
    return "ptr"


@dataclass(frozen=True)
class Register:
    name: str


@dataclass(frozen=True)
class ConstInt:
    ty: IntType
    bits: int  # reduced modulo 2**width

    def __post_init__(self):
        object.__setattr__(self, "bits", self.bits % (1 << self.ty.width))


@dataclass(frozen=True)
class UndefConst:
    ty: TypeRef


@dataclass(frozen=True)
class PoisonConst:
    ty: TypeRef


@dataclass(frozen=True)
class NullConst:
    pass


Operand = Union[Register, ConstInt, UndefConst, PoisonConst, NullConst]


# ---------------------------------------------------------------------------
# Instructions


@dataclass(frozen=True)
class BinOp:
    name: str  # result register
    op: str
    flags: frozenset[str]
    ty: TypeRef
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class ICmp:
    name: str
    pred: str
    lhs: Operand
    rhs: Operand


@dataclass(frozen=True)
class Select:
    name: str
    cond: Operand
    tval: Operand
    fval: Operand


@dataclass(frozen=True)
class Cast:
    name: str
    op: str
    src: Operand
    to: TypeRef


@dataclass(frozen=True)
class Alloca:
    name: str
    ty: TypeRef
    count: int


@dataclass(frozen=True)
class Load:
    name: str
    ptr: Operand
    ty: TypeRef


@dataclass(frozen=True)
class Store:
    val: Operand
    ptr: Operand


@dataclass(frozen=True)
class Br:
    cond: Optional[Operand]  # None for an unconditional branch
    then_label: str
    else_label: Optional[str]


@dataclass(frozen=True)
class Phi:
    name: str
    ty: TypeRef
    incomings: tuple[tuple[str, Operand], ...]  # (predecessor label, value)


@dataclass(frozen=True)
class Ret:
    val: Optional[Operand]


@dataclass(frozen=True)
class CallExternal:
    """External call; parse-only. Execution is unsupported and the checker
    reports Unknown for any pair containing one."""

    callee: str
    args: tuple[Operand, ...]


Instruction = Union[
    BinOp, ICmp, Select, Cast, Alloca, Load, Store, Br, Phi, Ret, CallExternal
]

TERMINATORS = (Br, Ret)


@dataclass(frozen=True)
class Param:
    name: str
    ty: TypeRef


@dataclass(frozen=True)
class Block:
    label: str
    instrs: tuple[Instruction, ...]


@dataclass(frozen=True)
class Function:
    name: str
    params: tuple[Param, ...]
    ret_ty: Optional[TypeRef]  # None for void
    blocks: tuple[Block, ...]


@dataclass(frozen=True)
class TransformationPair:
    id: str
    src: Function
    tgt: Function


def defined_name(instr: Instruction) -> Optional[str]:
    """Result register defined by the instruction, if any."""
    return getattr(instr, "name", None) if not isinstance(instr, CallExternal) else None


def has_external_call(f: Function) -> bool:
    return any(
        isinstance(i, CallExternal) for b in f.blocks for i in b.instrs
    )


# ---------------------------------------------------------------------------
# Errors and diagnostics


class ParseError(Exception):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"line {line}, col {col}: {message}")
        self.message = message
        self.line = line
        self.col = col


@dataclass(frozen=True)
class Diagnostic:
    kind: str
    where: str  # "block:index" or "params"
    detail: str

    def __str__(self):
        return f"{self.kind} at {self.where}: {self.detail}"


class SsaError(Exception):
    """Raised when a syntactically valid function violates SSA invariants."""

    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


class SignatureMismatch(Exception):
    pass


# ---------------------------------------------------------------------------
# Tokenizer / parser

_TOKEN_RE = re.compile(
    r"""(?P<ws>[ \t\r]+)
      | (?P<comment>;[^\n]*)
      | (?P<nl>\n)
      | (?P<local>%[A-Za-z0-9_.]+)
      | (?P<global>@[A-Za-z0-9_.]+)
      | (?P<int>-?[0-9]+)
      | (?P<word>[A-Za-z_.][A-Za-z0-9_.]*)
      | (?P<punct>[(){}\[\]=,:])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class _Token:
    kind: str  # local | global | int | word | punct | eof
    text: str
    line: int
    col: int


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, line_start = 1, 0
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise ParseError(
                f"unexpected character {text[pos]!r}", line, pos - line_start + 1
            )
        kind = m.lastgroup
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind not in ("ws", "comment"):
            tokens.append(_Token(kind, m.group(), line, m.start() - line_start + 1))
        pos = m.end()
    tokens.append(_Token("eof", "", line, pos - line_start + 1))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self, ahead: int = 0) -> _Token:
        i = min(self.pos + ahead, len(self.tokens) - 1)
        return self.tokens[i]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "eof":
            self.pos += 1
        return tok

    def fail(self, message: str, tok: Optional[_Token] = None):
        tok = tok or self.peek()
        raise ParseError(message, tok.line, tok.col)

    def expect_punct(self, text: str) -> _Token:
        tok = self.next()
        if tok.kind != "punct" or tok.text != text:
            self.fail(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def expect_word(self, text: str) -> _Token:
        tok = self.next()
        if tok.kind != "word" or tok.text != text:
            self.fail(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def parse_type(self) -> TypeRef:
        tok = self.next()
        ty = _TYPE_NAMES.get(tok.text) if tok.kind == "word" else None
        if ty is None:
            self.fail(f"expected a type, found {tok.text!r}", tok)
        return ty

    def parse_operand(self, ty: TypeRef) -> Operand:
        tok = self.next()
        if tok.kind == "local":
            return Register(tok.text[1:])
        if tok.kind == "int":
            if not isinstance(ty, IntType):
                self.fail("integer constant where a pointer operand is expected", tok)
            return ConstInt(ty, int(tok.text))
        if tok.kind == "word":
            if tok.text == "undef":
                return UndefConst(ty)
            if tok.text == "poison":
                return PoisonConst(ty)
            if tok.text == "null":
                if not isinstance(ty, PtrType):
                    self.fail("null constant requires pointer type", tok)
                return NullConst()
            if tok.text in ("true", "false"):
                if ty != I1:
                    self.fail(f"{tok.text} constant requires type i1", tok)
                return ConstInt(I1, 1 if tok.text == "true" else 0)
        self.fail(f"expected an operand, found {tok.text!r}", tok)

    def parse_label_ref(self) -> str:
        tok = self.next()
        if tok.kind != "local":
            self.fail(f"expected a %label reference, found {tok.text!r}", tok)
        return tok.text[1:]

    # -- instructions ------------------------------------------------------

    def parse_function(self) -> Function:
        self.expect_word("define")
        tok = self.peek()
        if tok.kind == "word" and tok.text == "void":
            self.next()
            ret_ty = None
        else:
            ret_ty = self.parse_type()
        name_tok = self.next()
        if name_tok.kind != "global":
            self.fail(f"expected @name, found {name_tok.text!r}", name_tok)
        self.expect_punct("(")
        params = []
        if not (self.peek().kind == "punct" and self.peek().text == ")"):
            while True:
                pty = self.parse_type()
                ptok = self.next()
                if ptok.kind != "local":
                    self.fail(f"expected %param, found {ptok.text!r}", ptok)
                params.append(Param(ptok.text[1:], pty))
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect_punct(")")
        self.expect_punct("{")
        blocks = []
        while not (self.peek().kind == "punct" and self.peek().text == "}"):
            blocks.append(self.parse_block())
        self.expect_punct("}")
        tail = self.next()
        if tail.kind != "eof":
            self.fail(f"trailing input after function body: {tail.text!r}", tail)
        if not blocks:
            self.fail("function has no blocks")
        return Function(name_tok.text[1:], tuple(params), ret_ty, tuple(blocks))

    def parse_block(self) -> Block:
        tok = self.next()
        if tok.kind != "word":
            self.fail(f"expected a block label, found {tok.text!r}", tok)
        self.expect_punct(":")
        instrs = []
        while True:
            nxt = self.peek()
            if nxt.kind == "punct" and nxt.text == "}":
                break
            if nxt.kind == "word" and self.peek(1).text == ":" and self.peek(1).kind == "punct":
                break  # start of the next block
            instrs.append(self.parse_instruction())
        return Block(tok.text, tuple(instrs))

    def parse_instruction(self) -> Instruction:
        tok = self.peek()
        if tok.kind == "local":
            self.next()
            name = tok.text[1:]
            self.expect_punct("=")
            return self.parse_rhs(name)
        if tok.kind == "word" and tok.text in ("store", "br", "ret", "call"):
            self.next()
            if tok.text == "store":
                vty = self.parse_type()
                val = self.parse_operand(vty)
                self.expect_punct(",")
                pty = self.parse_type()
                ptr = self.parse_operand(pty)
                return Store(val, ptr)
            if tok.text == "br":
                if self.peek().kind == "word" and self.peek().text == "label":
                    self.next()
                    return Br(None, self.parse_label_ref(), None)
                cty = self.parse_type()
                cond = self.parse_operand(cty)
                self.expect_punct(",")
                self.expect_word("label")
                then_label = self.parse_label_ref()
                self.expect_punct(",")
                self.expect_word("label")
                else_label = self.parse_label_ref()
                return Br(cond, then_label, else_label)
            if tok.text == "ret":
                if self.peek().kind == "word" and self.peek().text == "void":
                    self.next()
                    return Ret(None)
                ty = self.parse_type()
                return Ret(self.parse_operand(ty))
            callee = self.next()
            if callee.kind != "global":
                self.fail(f"expected @callee, found {callee.text!r}", callee)
            self.expect_punct("(")
            args = []
            if not (self.peek().kind == "punct" and self.peek().text == ")"):
                while True:
                    aty = self.parse_type()
                    args.append(self.parse_operand(aty))
                    if self.peek().text == ",":
                        self.next()
                        continue
                    break
            self.expect_punct(")")
            return CallExternal(callee.text[1:], tuple(args))
        self.fail(f"expected an instruction, found {tok.text!r}", tok)

    def parse_rhs(self, name: str) -> Instruction:
        tok = self.next()
        if tok.kind != "word":
            self.fail(f"expected an opcode, found {tok.text!r}", tok)
        op = tok.text
        if op in BINOP_NAMES:
            flags = set()
            while self.peek().kind == "word" and self.peek().text in FLAG_NAMES:
                flags.add(self.next().text)
            ty = self.parse_type()
            lhs = self.parse_operand(ty)
            self.expect_punct(",")
            rhs = self.parse_operand(ty)
            return BinOp(name, op, frozenset(flags), ty, lhs, rhs)
        if op == "icmp":
            pred = self.next()
            if pred.kind != "word" or pred.text not in ICMP_PREDS:
                self.fail(f"expected a comparison predicate, found {pred.text!r}", pred)
            ty = self.parse_type()
            lhs = self.parse_operand(ty)
            self.expect_punct(",")
            rhs = self.parse_operand(ty)
            return ICmp(name, pred.text, lhs, rhs)
        if op == "select":
            cty = self.parse_type()
            cond = self.parse_operand(cty)
            self.expect_punct(",")
            tty = self.parse_type()
            tval = self.parse_operand(tty)
            self.expect_punct(",")
            fty = self.parse_type()
            fval = self.parse_operand(fty)
            return Select(name, cond, tval, fval)
        if op in CAST_OPS:
            sty = self.parse_type()
            src = self.parse_operand(sty)
            self.expect_word("to")
            to = self.parse_type()
            return Cast(name, op, src, to)
        if op == "alloca":
            ty = self.parse_type()
            count = 1
            if self.peek().text == ",":
                self.next()
                self.parse_type()  # count type; canonically i32
                ctok = self.next()
                if ctok.kind != "int":
                    self.fail(f"expected an element count, found {ctok.text!r}", ctok)
                count = int(ctok.text)
            return Alloca(name, ty, count)
        if op == "load":
            ty = self.parse_type()
            self.expect_punct(",")
            pty = self.parse_type()
            ptr = self.parse_operand(pty)
            return Load(name, ptr, ty)
        if op == "phi":
            ty = self.parse_type()
            incomings = []
            while True:
                self.expect_punct("[")
                val = self.parse_operand(ty)
                self.expect_punct(",")
                label = self.parse_label_ref()
                self.expect_punct("]")
                incomings.append((label, val))
                if self.peek().text == ",":
                    self.next()
                    continue
                break
            return Phi(name, ty, tuple(incomings))
        self.fail(f"unknown opcode {op!r}", tok)


def parse_function(text: str) -> Function:
    """Parse one function. Raises ParseError on syntax violations and
    SsaError (with diagnostics) on invariant violations."""
    f = _Parser(text).parse_function()
    diags = validate_ssa(f)
    if diags:
        raise SsaError(diags)
    return f


def parse_pair(src_text: str, tgt_text: str, pair_id: str) -> TransformationPair:
    src = parse_function(src_text)
    tgt = parse_function(tgt_text)
    if [(p.name, p.ty) for p in src.params] != [(p.name, p.ty) for p in tgt.params]:
        raise SignatureMismatch(f"{pair_id}: parameter lists differ")
    if src.ret_ty != tgt.ret_ty:
        raise SignatureMismatch(f"{pair_id}: return types differ")
    return TransformationPair(pair_id, src, tgt)


# ---------------------------------------------------------------------------
# Type resolution and canonical printing


def _operand_type(op: Operand, regtys: dict[str, TypeRef]) -> Optional[TypeRef]:
    if isinstance(op, Register):
        return regtys.get(op.name)
    if isinstance(op, (ConstInt, UndefConst, PoisonConst)):
        return op.ty
    return PTR  # NullConst


def register_types(f: Function) -> dict[str, TypeRef]:
    """Map register name -> type.  Resolves Select result types through a
    fixpoint; converges for any function satisfying SSA dominance."""
    regtys: dict[str, TypeRef] = {p.name: p.ty for p in f.params}
    changed = True
    while changed:
        changed = False
        for block in f.blocks:
            for instr in block.instrs:
                name = defined_name(instr)
                if name is None or name in regtys:
                    continue
                ty: Optional[TypeRef]
                if isinstance(instr, BinOp):
                    ty = instr.ty
                elif isinstance(instr, ICmp):
                    ty = I1
                elif isinstance(instr, Cast):
                    ty = instr.to
                elif isinstance(instr, Alloca):
                    ty = PTR
                elif isinstance(instr, Load):
                    ty = instr.ty
                elif isinstance(instr, Phi):
                    ty = instr.ty
                elif isinstance(instr, Select):
                    ty = _operand_type(instr.tval, regtys) or _operand_type(
                        instr.fval, regtys
                    )
                else:
                    ty = None
                if ty is not None:
                    regtys[name] = ty
                    changed = True
    return regtys


def _op_text(op: Operand) -> str:
    if isinstance(op, Register):
        return f"%{op.name}"
    if isinstance(op, ConstInt):
        return str(op.bits)
    if isinstance(op, UndefConst):
        return "undef"
    if isinstance(op, PoisonConst):
        return "poison"
    return "null"


def _ty_of(op: Operand, regtys: dict[str, TypeRef]) -> str:
    ty = _operand_type(op, regtys)
    if ty is None:
        raise ValueError(f"cannot resolve type of operand {_op_text(op)}")
    return type_name(ty)


def _print_instr(instr: Instruction, regtys: dict[str, TypeRef]) -> str:
    if isinstance(instr, BinOp):
        flags = "".join(
            f" {fl}" for fl in ("nuw", "nsw", "exact") if fl in instr.flags
        )
        return (
            f"%{instr.name} = {instr.op}{flags} {type_name(instr.ty)} "
            f"{_op_text(instr.lhs)}, {_op_text(instr.rhs)}"
        )
    if isinstance(instr, ICmp):
        ty = _ty_of(instr.lhs, regtys)
        return (
            f"%{instr.name} = icmp {instr.pred} {ty} "
            f"{_op_text(instr.lhs)}, {_op_text(instr.rhs)}"
        )
    if isinstance(instr, Select):
        cty = _ty_of(instr.cond, regtys)
        aty = _ty_of(instr.tval, regtys)
        return (
            f"%{instr.name} = select {cty} {_op_text(instr.cond)}, "
            f"{aty} {_op_text(instr.tval)}, {aty} {_op_text(instr.fval)}"
        )
    if isinstance(instr, Cast):
        sty = _ty_of(instr.src, regtys)
        return (
            f"%{instr.name} = {instr.op} {sty} {_op_text(instr.src)} "
            f"to {type_name(instr.to)}"
        )
    if isinstance(instr, Alloca):
        suffix = f", i32 {instr.count}" if instr.count != 1 else ""
        return f"%{instr.name} = alloca {type_name(instr.ty)}{suffix}"
    if isinstance(instr, Load):
        return (
            f"%{instr.name} = load {type_name(instr.ty)}, "
            f"{_ty_of(instr.ptr, regtys)} {_op_text(instr.ptr)}"
        )
    if isinstance(instr, Store):
        return (
            f"store {_ty_of(instr.val, regtys)} {_op_text(instr.val)}, "
            f"{_ty_of(instr.ptr, regtys)} {_op_text(instr.ptr)}"
        )
    if isinstance(instr, Br):
        if instr.cond is None:
            return f"br label %{instr.then_label}"
        return (
            f"br {_ty_of(instr.cond, regtys)} {_op_text(instr.cond)}, "
            f"label %{instr.then_label}, label %{instr.else_label}"
        )
    if isinstance(instr, Phi):
        arms = ", ".join(
            f"[ {_op_text(val)}, %{label} ]" for label, val in instr.incomings
        )
        return f"%{instr.name} = phi {type_name(instr.ty)} {arms}"
    if isinstance(instr, Ret):
        if instr.val is None:
            return "ret void"
        return f"ret {_ty_of(instr.val, regtys)} {_op_text(instr.val)}"
    args = ", ".join(f"{_ty_of(a, regtys)} {_op_text(a)}" for a in instr.args)
    return f"call @{instr.callee}({args})"


def print_function(f: Function) -> str:
    """Canonical text: one instruction per line, two-space indent, labeled
    blocks, trailing newline.  Deterministic; parse(print(f)) == f."""
    regtys = register_types(f)
    ret = "void" if f.ret_ty is None else type_name(f.ret_ty)
    params = ", ".join(f"{type_name(p.ty)} %{p.name}" for p in f.params)
    lines = [f"define {ret} @{f.name}({params}) {{"]
    for block in f.blocks:
        lines.append(f"{block.label}:")
        for instr in block.instrs:
            lines.append(f"  {_print_instr(instr, regtys)}")
    lines.append("}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Validation


def _instr_operands(instr: Instruction) -> list[Operand]:
    if isinstance(instr, BinOp):
        return [instr.lhs, instr.rhs]
    if isinstance(instr, ICmp):
        return [instr.lhs, instr.rhs]
    if isinstance(instr, Select):
        return [instr.cond, instr.tval, instr.fval]
    if isinstance(instr, Cast):
        return [instr.src]
    if isinstance(instr, Load):
        return [instr.ptr]
    if isinstance(instr, Store):
        return [instr.val, instr.ptr]
    if isinstance(instr, Br):
        return [instr.cond] if instr.cond is not None else []
    if isinstance(instr, Ret):
        return [instr.val] if instr.val is not None else []
    if isinstance(instr, CallExternal):
        return list(instr.args)
    return []  # Phi operands are edge uses, handled separately


def _compute_dominators(
    labels: list[str], preds: dict[str, set[str]]
) -> dict[str, set[str]]:
    all_labels = set(labels)
    dom = {lb: all_labels.copy() for lb in labels}
    dom[labels[0]] = {labels[0]}
    changed = True
    while changed:
        changed = False
        for lb in labels[1:]:
            new = all_labels.copy()
            for p in preds[lb]:
                new &= dom[p]
            new |= {lb}
            if new != dom[lb]:
                dom[lb] = new
                changed = True
    return dom


def validate_ssa(f: Function) -> list[Diagnostic]:
    """Check every structural invariant; empty list means the function is
    valid and executable."""
    diags: list[Diagnostic] = []

    def diag(kind, where, detail):
        diags.append(Diagnostic(kind, where, detail))

    labels = [b.label for b in f.blocks]
    if len(set(labels)) != len(labels):
        seen = set()
        for lb in labels:
            if lb in seen:
                diag("DuplicateLabel", lb, f"block label {lb!r} repeats")
            seen.add(lb)
        return diags  # label table is ambiguous; stop here
    label_set = set(labels)
    entry = labels[0]

    # Definitions
    defs: dict[str, tuple[str, int]] = {}
    for p in f.params:
        if p.name in defs:
            diag("RedefinedRegister", "params", f"%{p.name} defined twice")
        defs[p.name] = ("", -1)  # params dominate everything
    for block in f.blocks:
        for i, instr in enumerate(block.instrs):
            name = defined_name(instr)
            if name is not None:
                if name in defs:
                    diag("RedefinedRegister", f"{block.label}:{i}", f"%{name}")
                else:
                    defs[name] = (block.label, i)

    # Terminator discipline
    preds: dict[str, set[str]] = {lb: set() for lb in labels}
    for block in f.blocks:
        terms = [i for i, ins in enumerate(block.instrs) if isinstance(ins, TERMINATORS)]
        if not block.instrs or not terms:
            diag("MissingTerminator", block.label, "block has no terminator")
            continue
        if len(terms) > 1:
            diag("MultipleTerminators", block.label, f"{len(terms)} terminators")
        if terms[-1] != len(block.instrs) - 1:
            diag("MissingTerminator", block.label, "block does not end with a terminator")
        last = block.instrs[terms[0]]
        if isinstance(last, Br):
            for target in (last.then_label, last.else_label):
                if target is None:
                    continue
                if target not in label_set:
                    diag("UnknownLabel", block.label, f"branch to undefined %{target}")
                elif target == entry:
                    diag("BranchToEntry", block.label, "entry block must not have predecessors")
                else:
                    preds[target].add(block.label)

    # Phi placement and predecessor coverage
    for bi, block in enumerate(f.blocks):
        phi_over = False
        for i, instr in enumerate(block.instrs):
            if isinstance(instr, Phi):
                if bi == 0:
                    diag("PhiInEntry", f"{block.label}:{i}", f"%{instr.name}")
                if phi_over:
                    diag("PhiNotAtBlockStart", f"{block.label}:{i}", f"%{instr.name}")
                incoming = [lb for lb, _ in instr.incomings]
                if len(set(incoming)) != len(incoming) or set(incoming) != preds[block.label]:
                    diag(
                        "PhiPredecessorMismatch",
                        f"{block.label}:{i}",
                        f"incomings {sorted(incoming)} vs predecessors {sorted(preds[block.label])}",
                    )
            else:
                phi_over = True

    # Flag applicability
    for block in f.blocks:
        for i, instr in enumerate(block.instrs):
            if isinstance(instr, BinOp):
                where = f"{block.label}:{i}"
                if instr.flags & {"nsw", "nuw"} and instr.op not in WRAP_FLAG_OPS:
                    diag("BadFlag", where, f"nsw/nuw not allowed on {instr.op}")
                if "exact" in instr.flags and instr.op not in EXACT_FLAG_OPS:
                    diag("BadFlag", where, f"exact not allowed on {instr.op}")
            if isinstance(instr, Alloca) and instr.count < 1:
                diag("NonPositiveAllocaCount", f"{block.label}:{i}", str(instr.count))

    # Use-of-undefined and type consistency
    regtys = register_types(f)

    def check_use(op: Operand, where: str):
        if isinstance(op, Register) and op.name not in defs:
            diag("UndefinedRegister", where, f"%{op.name}")

    def ty_of(op: Operand) -> Optional[TypeRef]:
        return _operand_type(op, regtys)

    def want(op: Operand, expected: TypeRef, where: str, what: str):
        got = ty_of(op)
        if got is not None and got != expected:
            diag(
                "TypeMismatch",
                where,
                f"{what} has type {type_name(got)}, expected {type_name(expected)}",
            )

    for block in f.blocks:
        for i, instr in enumerate(block.instrs):
            where = f"{block.label}:{i}"
            if isinstance(instr, Phi):
                for _, val in instr.incomings:
                    check_use(val, where)
                    want(val, instr.ty, where, "phi incoming")
                continue
            for op in _instr_operands(instr):
                check_use(op, where)
            if isinstance(instr, BinOp):
                if not isinstance(instr.ty, IntType):
                    diag("TypeMismatch", where, f"{instr.op} requires an integer type")
                else:
                    want(instr.lhs, instr.ty, where, "left operand")
                    want(instr.rhs, instr.ty, where, "right operand")
            elif isinstance(instr, ICmp):
                lt, rt = ty_of(instr.lhs), ty_of(instr.rhs)
                if lt is not None and not isinstance(lt, IntType):
                    diag("TypeMismatch", where, "icmp requires integer operands")
                elif lt is not None and rt is not None and lt != rt:
                    diag("TypeMismatch", where, "icmp operand types differ")
            elif isinstance(instr, Select):
                want(instr.cond, I1, where, "select condition")
                tt, ft = ty_of(instr.tval), ty_of(instr.fval)
                if tt is not None and ft is not None and tt != ft:
                    diag("TypeMismatch", where, "select arm types differ")
            elif isinstance(instr, Cast):
                st = ty_of(instr.src)
                if st is not None and (
                    not isinstance(st, IntType) or not isinstance(instr.to, IntType)
                ):
                    diag("TypeMismatch", where, "casts are integer-to-integer")
                elif isinstance(st, IntType) and isinstance(instr.to, IntType):
                    if instr.op in ("zext", "sext") and instr.to.width <= st.width:
                        diag("TypeMismatch", where, f"{instr.op} must widen")
                    if instr.op == "trunc" and instr.to.width >= st.width:
                        diag("TypeMismatch", where, "trunc must narrow")
            elif isinstance(instr, Alloca):
                if not isinstance(instr.ty, IntType):
                    diag("TypeMismatch", where, "alloca element type must be an integer")
            elif isinstance(instr, Load):
                if not isinstance(instr.ty, IntType):
                    diag("TypeMismatch", where, "loaded type must be an integer")
                want(instr.ptr, PTR, where, "load address")
            elif isinstance(instr, Store):
                vt = ty_of(instr.val)
                if vt is not None and not isinstance(vt, IntType):
                    diag("TypeMismatch", where, "stored value must be an integer")
                want(instr.ptr, PTR, where, "store address")
            elif isinstance(instr, Br) and instr.cond is not None:
                want(instr.cond, I1, where, "branch condition")
            elif isinstance(instr, Ret):
                if f.ret_ty is None and instr.val is not None:
                    diag("RetTypeMismatch", where, "void function returns a value")
                elif f.ret_ty is not None:
                    if instr.val is None:
                        diag("RetTypeMismatch", where, "missing return value")
                    else:
                        want(instr.val, f.ret_ty, where, "return value")

    # Dominance
    dom = _compute_dominators(labels, preds)
    block_index = {b.label: b for b in f.blocks}

    def def_dominates(reg: str, use_block: str, use_index: int) -> bool:
        dblock, dindex = defs[reg]
        if dblock == "":  # parameter
            return True
        if dblock == use_block:
            return dindex < use_index
        return dblock in dom[use_block]

    for block in f.blocks:
        for i, instr in enumerate(block.instrs):
            where = f"{block.label}:{i}"
            if isinstance(instr, Phi):
                for pred_label, val in instr.incomings:
                    if not isinstance(val, Register) or val.name not in defs:
                        continue
                    dblock, _ = defs[val.name]
                    if dblock != "" and pred_label in label_set and dblock not in dom[pred_label]:
                        diag("UseBeforeDef", where, f"%{val.name} does not dominate edge from {pred_label}")
                continue
            for op in _instr_operands(instr):
                if isinstance(op, Register) and op.name in defs:
                    if not def_dominates(op.name, block.label, i):
                        diag("UseBeforeDef", where, f"%{op.name}")
    _ = block_index
    return diags
