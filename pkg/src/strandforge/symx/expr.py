"""Symbolic machine-word expressions: grammar, printing, parsing, simplifier.

Expressions are fixed-width bit-vector trees. Every node carries a width in
bits; arithmetic is modular in that width and shifts mask their count the way
the hardware does (count & 63 for 64-bit operands, & 31 below that). ``sub``
never appears: subtraction is built as ``add`` of a negated operand. Signed
and unsigned division/remainder are distinct ops because their results differ
and nothing else in the grammar can express the difference.

Canonical text form (one blank either side of every operator):

    rcx = -1 add ( 0 Concat rsi[1:0] )
    0 Concat *(24 add *(-168 add rbp))[1:1] ne 0
    fprintf(*(rbp), IMM)

Nested binary operands are parenthesized; comparison operands are not (there
is exactly one comparison per expression and it binds loosest). A dereference
prints as ``*(addr)`` and an extract as ``expr[hi:lo]``, except that an
extract spanning a named sub-register of an input register prints as that
register's own name (``al``, not ``rax[7:0]``).

Printing erases widths. The parser reconstructs them top-down (64-bit unless
the context says otherwise), so ``parse(print(e))`` is structurally ``e`` for
64-bit-closed expressions and the printed text is always a fixed point.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Iterator

from strandforge.regs import register_by_name, subregister_name

__all__ = [
    "SymExpr", "Const", "Imm", "InputReg", "InputMem", "BinOp", "UnOp",
    "Extract", "Cmp", "Call",
    "SymAssign", "RegTarget", "MemTarget", "PredTarget", "CallTarget",
    "BIN_OPS", "COMMUTATIVE_OPS", "CMP_OPS", "UN_OPS",
    "to_text", "assign_to_text", "parse_expr", "parse_assign",
    "simplify", "expr_equal", "eval_expr", "EvalEnv",
    "ExprError", "ParseError", "EvalError",
    "const", "zero_extend", "sign_extend", "sub",
]

BIN_OPS = frozenset({
    "add", "mul", "div", "sdiv", "mod", "smod",
    "and", "or", "xor", "shl", "shr", "sar", "Concat",
})
COMMUTATIVE_OPS = frozenset({"add", "mul", "and", "or", "xor"})
CMP_OPS = frozenset({
    "eq", "ne", "slt", "sle", "sgt", "sge", "ult", "ule", "ugt", "uge",
})
UN_OPS = frozenset({"neg", "not"})


class ExprError(ValueError):
    """Malformed expression construction."""


class ParseError(ExprError):
    """Text does not conform to the canonical grammar."""


class EvalError(ValueError):
    """Expression has no numeric value (IMM, call, division fault, ...)."""


# ── nodes ────────────────────────────────────────────────────────────────


class SymExpr:
    """Base class; all nodes are frozen, hashable and structurally equal."""

    __slots__ = ()

    width: int


@dataclass(frozen=True, slots=True)
class Const(SymExpr):
    """Literal with a known value, stored unsigned modulo 2**width."""

    value: int
    width: int

    def __post_init__(self) -> None:
        if self.width <= 0:
            raise ExprError(f"constant width must be positive, got {self.width}")
        object.__setattr__(self, "value", self.value & _mask(self.width))


@dataclass(frozen=True, slots=True)
class Imm(SymExpr):
    """The opaque large-immediate token; prints as ``IMM``, never evaluates."""

    width: int = 64


@dataclass(frozen=True, slots=True)
class InputReg(SymExpr):
    """First-read register input, always named by its 64-bit family."""

    name: str
    width: int = 64


@dataclass(frozen=True, slots=True)
class InputMem(SymExpr):
    """First-read memory input, identified by its canonical address text."""

    addr: SymExpr
    width: int


@dataclass(frozen=True, slots=True)
class BinOp(SymExpr):
    op: str
    lhs: SymExpr
    rhs: SymExpr
    width: int

    def __post_init__(self) -> None:
        if self.op not in BIN_OPS:
            raise ExprError(f"unknown binary op {self.op!r}")
        if self.op == "Concat":
            if self.width != self.lhs.width + self.rhs.width:
                raise ExprError("Concat width must be the sum of its parts")
        elif not (self.lhs.width == self.rhs.width == self.width):
            raise ExprError(
                f"{self.op} width mismatch: "
                f"{self.lhs.width}/{self.rhs.width}/{self.width}"
            )


@dataclass(frozen=True, slots=True)
class UnOp(SymExpr):
    op: str
    operand: SymExpr
    width: int

    def __post_init__(self) -> None:
        if self.op not in UN_OPS:
            raise ExprError(f"unknown unary op {self.op!r}")
        if self.operand.width != self.width:
            raise ExprError(f"{self.op} width mismatch")


@dataclass(frozen=True, slots=True)
class Extract(SymExpr):
    """Bit slice [hi:lo] of the operand, inclusive on both ends."""

    hi: int
    lo: int
    operand: SymExpr

    def __post_init__(self) -> None:
        if not 0 <= self.lo <= self.hi < self.operand.width:
            raise ExprError(
                f"extract [{self.hi}:{self.lo}] out of range for width "
                f"{self.operand.width}"
            )

    @property
    def width(self) -> int:
        return self.hi - self.lo + 1


@dataclass(frozen=True, slots=True)
class Cmp(SymExpr):
    """Predicate node; always 1 bit wide."""

    op: str
    lhs: SymExpr
    rhs: SymExpr

    def __post_init__(self) -> None:
        if self.op not in CMP_OPS:
            raise ExprError(f"unknown comparison {self.op!r}")
        if self.lhs.width != self.rhs.width:
            raise ExprError("comparison operands must share a width")

    @property
    def width(self) -> int:
        return 1


@dataclass(frozen=True, slots=True)
class Call(SymExpr):
    """Opaque call expression (``fprintf(*(rbp), IMM)``)."""

    callee: str
    args: tuple[SymExpr, ...]

    @property
    def width(self) -> int:
        return 64


# ── small constructors ───────────────────────────────────────────────────


def _mask(width: int) -> int:
    return (1 << width) - 1


def const(value: int, width: int = 64) -> Const:
    return Const(value, width)


def zero_extend(e: SymExpr, width: int) -> SymExpr:
    if width < e.width:
        raise ExprError("cannot zero-extend to a narrower width")
    if width == e.width:
        return e
    return BinOp("Concat", Const(0, width - e.width), e, width)


def sign_extend(e: SymExpr, width: int) -> SymExpr:
    """Sign extension spelled with the grammar's own ops (shl then sar)."""
    if width < e.width:
        raise ExprError("cannot sign-extend to a narrower width")
    if width == e.width:
        return e
    shift = Const(width - e.width, width)
    widened = zero_extend(e, width)
    return BinOp("sar", BinOp("shl", widened, shift, width), shift, width)


def sub(lhs: SymExpr, rhs: SymExpr) -> SymExpr:
    """a - b as ``add`` of the negated subtrahend (folded when constant)."""
    if isinstance(rhs, Const):
        return BinOp("add", lhs, Const(-rhs.value, rhs.width), lhs.width)
    return BinOp("add", lhs, UnOp("neg", rhs, rhs.width), lhs.width)


# ── printing ─────────────────────────────────────────────────────────────


def _signed(value: int, width: int) -> int:
    value &= _mask(width)
    if value >= 1 << (width - 1):
        value -= 1 << width
    return value


def _print(e: SymExpr) -> str:
    if isinstance(e, Const):
        return str(_signed(e.value, e.width))
    if isinstance(e, Imm):
        return "IMM"
    if isinstance(e, InputReg):
        return e.name
    if isinstance(e, InputMem):
        return f"*({_print(e.addr)})"
    if isinstance(e, Extract):
        if isinstance(e.operand, InputReg) and e.lo % 8 == 0 and (e.hi + 1) % 8 == 0:
            name = subregister_name(e.operand.name, e.lo // 8, (e.hi + 1) // 8)
            if name is not None:
                return name
        return f"{_wrap(e.operand)}[{e.hi}:{e.lo}]"
    if isinstance(e, UnOp):
        return f"{e.op} {_wrap(e.operand)}"
    if isinstance(e, BinOp):
        return f"{_wrap(e.lhs)} {e.op} {_wrap(e.rhs)}"
    if isinstance(e, Cmp):
        return f"{_print(e.lhs)} {e.op} {_print(e.rhs)}"
    if isinstance(e, Call):
        return f"{e.callee}({', '.join(_print(a) for a in e.args)})"
    raise ExprError(f"cannot print {e!r}")


def _wrap(e: SymExpr) -> str:
    text = _print(e)
    if isinstance(e, (BinOp, Cmp)):
        return f"( {text} )"
    return text


def to_text(e: SymExpr) -> str:
    """Canonical text of an expression (no widths; see module docstring)."""
    return _print(e)


# ── assignments ──────────────────────────────────────────────────────────


@dataclass(frozen=True, slots=True)
class RegTarget:
    name: str  # widened family name


@dataclass(frozen=True, slots=True)
class MemTarget:
    addr: SymExpr


@dataclass(frozen=True, slots=True)
class PredTarget:
    pass


@dataclass(frozen=True, slots=True)
class CallTarget:
    pass


AssignTarget = RegTarget | MemTarget | PredTarget | CallTarget


@dataclass(frozen=True, slots=True)
class SymAssign:
    """One element of a strand's representative set."""

    target: AssignTarget
    expr: SymExpr

    def __str__(self) -> str:
        return assign_to_text(self)


def assign_to_text(a: SymAssign) -> str:
    if isinstance(a.target, RegTarget):
        return f"{a.target.name} = {to_text(a.expr)}"
    if isinstance(a.target, MemTarget):
        return f"*({to_text(a.target.addr)}) = {to_text(a.expr)}"
    return to_text(a.expr)


# ── parsing ──────────────────────────────────────────────────────────────

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<int>-?\d+)"
    r"|(?P<name>[A-Za-z_.@][A-Za-z0-9_.@]*)"
    r"|(?P<punct>\*\(|[()\[\]:,=]))"
)

_KEYWORDS = BIN_OPS | CMP_OPS | UN_OPS | {"IMM"}


def _lex(text: str) -> list[str]:
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            if text[pos:].strip() == "":
                break
            raise ParseError(f"bad token at {text[pos:pos + 12]!r}")
        tokens.append(m.group(0).strip())
        pos = m.end()
    return tokens


class _Parser:
    """Recursive-descent parser for the canonical grammar.

    Widths are reconstructed top-down: ``want`` is the width the context
    requires, or None when it is free (then 64 is assumed for leaves and
    zero-extensions pad to the requested or default width).
    """

    def __init__(self, tokens: list[str]):
        self.toks = tokens
        self.pos = 0

    def peek(self) -> str | None:
        return self.toks[self.pos] if self.pos < len(self.toks) else None

    def take(self, expect: str | None = None) -> str:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression")
        if expect is not None and tok != expect:
            raise ParseError(f"expected {expect!r}, found {tok!r}")
        self.pos += 1
        return tok

    # expression := chain (cmp-op chain)?
    def expr(self, want: int | None) -> SymExpr:
        lhs = self.chain(None if self.has_cmp() else want)
        tok = self.peek()
        if tok in CMP_OPS:
            self.take()
            rhs = self.chain(lhs.width)
            if rhs.width != lhs.width:
                lhs, rhs = _unify(lhs, rhs)
            return Cmp(tok, lhs, rhs)
        return lhs

    def has_cmp(self) -> bool:
        depth = 0
        for tok in self.toks[self.pos:]:
            if tok in ("(", "*("):
                depth += 1
            elif tok == ")":
                depth -= 1
            elif depth == 0 and tok in CMP_OPS:
                return True
        return False

    # chain := postfix (bin-op postfix)*   (left associative)
    def chain(self, want: int | None) -> SymExpr:
        node = self.postfix(want)
        while self.peek() in BIN_OPS:
            op = self.take()
            if op == "Concat":
                rhs = self.postfix(None)
                if (
                    isinstance(node, Const)
                    and node.value == 0
                    and want is not None
                    and want > rhs.width
                ):
                    node = Const(0, want - rhs.width)
                node = BinOp("Concat", node, rhs, node.width + rhs.width)
            else:
                rhs = self.postfix(node.width)
                node, rhs = _unify(node, rhs)
                node = BinOp(op, node, rhs, node.width)
        return node

    # postfix := atom ([hi:lo])*
    def postfix(self, want: int | None) -> SymExpr:
        node = self.atom(want)
        while self.peek() == "[":
            self.take("[")
            hi = int(self.take())
            self.take(":")
            lo = int(self.take())
            self.take("]")
            node = Extract(hi, lo, node)
        return node

    def atom(self, want: int | None) -> SymExpr:
        tok = self.peek()
        if tok is None:
            raise ParseError("unexpected end of expression")
        if tok == "(":
            self.take()
            inner = self.expr(want)
            self.take(")")
            return inner
        if tok == "*(":
            self.take()
            addr = self.expr(None)
            self.take(")")
            return InputMem(addr, want or 64)
        if re.fullmatch(r"-?\d+", tok):
            self.take()
            return Const(int(tok), want or 64)
        if tok == "IMM":
            self.take()
            return Imm(want or 64)
        if tok in UN_OPS:
            self.take()
            operand = self.postfix(want)
            return UnOp(tok, operand, operand.width)
        if tok in _KEYWORDS:
            raise ParseError(f"misplaced keyword {tok!r}")
        self.take()
        if self.peek() == "(":  # call expression
            self.take("(")
            args: list[SymExpr] = []
            if self.peek() != ")":
                while True:
                    args.append(self.expr(None))
                    if self.peek() != ",":
                        break
                    self.take(",")
            self.take(")")
            return Call(tok, tuple(args))
        reg = register_by_name(tok)
        if reg is None:
            raise ParseError(f"unknown register or symbol {tok!r}")
        wide = InputReg(reg.widen().name)
        if reg.size == 8:
            return wide
        return Extract(reg.hi * 8 - 1, reg.lo * 8, wide)


def _unify(a: SymExpr, b: SymExpr) -> tuple[SymExpr, SymExpr]:
    """Rewrite free-width leaves so both operands agree on a width."""

    def refit(e: SymExpr, width: int) -> SymExpr | None:
        if isinstance(e, Const):
            return Const(_signed(e.value, e.width), width)
        if isinstance(e, Imm):
            return Imm(width)
        if isinstance(e, InputMem):
            return InputMem(e.addr, width)
        if isinstance(e, BinOp) and e.op == "Concat" and isinstance(e.lhs, Const) \
                and e.lhs.value == 0 and width > e.rhs.width:
            return BinOp("Concat", Const(0, width - e.rhs.width), e.rhs, width)
        return None

    if a.width == b.width:
        return a, b
    fit_b = refit(b, a.width)
    if fit_b is not None:
        return a, fit_b
    fit_a = refit(a, b.width)
    if fit_a is not None:
        return fit_a, b
    raise ParseError(f"cannot unify operand widths {a.width} and {b.width}")


def parse_expr(text: str, width: int = 64) -> SymExpr:
    """Parse canonical expression text back into a tree.

    ``width`` is the width the whole expression is known to have from
    context (a register assignment implies 64). Predicates ignore it.
    """
    parser = _Parser(_lex(text))
    node = parser.expr(width)
    if parser.peek() is not None:
        raise ParseError(f"trailing tokens at {parser.peek()!r}")
    return node


def parse_assign(text: str) -> SymAssign:
    """Parse one representative-set line (``target = expr`` or bare expr)."""
    split = _split_assign(text)
    if split is None:
        expr = parse_expr(text)
        target: AssignTarget = CallTarget() if isinstance(expr, Call) else PredTarget()
        return SymAssign(target, expr)
    lhs, rhs = split
    lhs = lhs.strip()
    if lhs.startswith("*(") and lhs.endswith(")"):
        addr = parse_expr(lhs[2:-1])
        mem = MemTarget(addr)
        # Store width is not recoverable from text; value defaults to 64.
        return SymAssign(mem, parse_expr(rhs))
    reg = register_by_name(lhs)
    if reg is None:
        raise ParseError(f"bad assignment target {lhs!r}")
    return SymAssign(RegTarget(reg.widen().name), parse_expr(rhs, reg.widen().bits))


def _split_assign(text: str) -> tuple[str, str] | None:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "=" and depth == 0:
            # Reject comparison tokens; '=' stands alone in assignments.
            if text[i - 1:i] in ("!", "<", ">") or text[i + 1:i + 2] == "=":
                continue
            return text[:i], text[i + 1:]
    return None


# ── evaluation ───────────────────────────────────────────────────────────


@dataclass
class EvalEnv:
    """Concrete valuation for input leaves.

    ``regs`` maps 64-bit family names to values; ``mem`` maps canonical
    cell text (``*(-8 add rbp)``) to values (the memory model is syntactic,
    matching the engine's no-cross-text-forwarding rule). ``default``
    supplies missing entries when set, and every served input is recorded
    back into the maps.
    """

    regs: dict[str, int] = field(default_factory=dict)
    mem: dict[str, int] = field(default_factory=dict)
    default: Callable[[str, str, int], int] | None = None

    def reg(self, name: str) -> int:
        if name not in self.regs:
            if self.default is None:
                raise EvalError(f"no value for register input {name}")
            self.regs[name] = self.default("reg", name, 64) & _mask(64)
        return self.regs[name]

    def memory(self, text: str, width: int) -> int:
        if text not in self.mem:
            if self.default is None:
                raise EvalError(f"no value for memory input {text}")
            self.mem[text] = self.default("mem", text, width) & _mask(width)
        return self.mem[text]


def _shift_mask(width: int) -> int:
    if width > 64:  # internal widened products only; no hardware analogue
        return width - 1
    return 63 if width == 64 else 31


def eval_expr(e: SymExpr, env: EvalEnv) -> int:
    """Numeric value of ``e`` under ``env``, unsigned modulo 2**width."""
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Imm):
        raise EvalError("IMM token has no numeric value")
    if isinstance(e, InputReg):
        return env.reg(e.name) & _mask(e.width)
    if isinstance(e, InputMem):
        return env.memory(to_text(e), e.width) & _mask(e.width)
    if isinstance(e, Extract):
        return (eval_expr(e.operand, env) >> e.lo) & _mask(e.width)
    if isinstance(e, UnOp):
        v = eval_expr(e.operand, env)
        return (-v if e.op == "neg" else ~v) & _mask(e.width)
    if isinstance(e, Cmp):
        a = eval_expr(e.lhs, env)
        b = eval_expr(e.rhs, env)
        w = e.lhs.width
        sa, sb = _signed(a, w), _signed(b, w)
        table: dict[str, bool] = {
            "eq": a == b, "ne": a != b,
            "ult": a < b, "ule": a <= b, "ugt": a > b, "uge": a >= b,
            "slt": sa < sb, "sle": sa <= sb, "sgt": sa > sb, "sge": sa >= sb,
        }
        return int(table[e.op])
    if isinstance(e, Call):
        raise EvalError(f"call to {e.callee} has no numeric value")
    if isinstance(e, BinOp):
        a = eval_expr(e.lhs, env)
        b = eval_expr(e.rhs, env)
        w = e.width
        if e.op == "add":
            return (a + b) & _mask(w)
        if e.op == "mul":
            return (a * b) & _mask(w)
        if e.op == "and":
            return a & b
        if e.op == "or":
            return a | b
        if e.op == "xor":
            return a ^ b
        if e.op == "Concat":
            return (a << e.rhs.width) | b
        if e.op == "shl":
            return (a << (b & _shift_mask(w))) & _mask(w)
        if e.op == "shr":
            return a >> (b & _shift_mask(w))
        if e.op == "sar":
            return (_signed(a, w) >> (b & _shift_mask(w))) & _mask(w)
        if e.op == "div":
            if b == 0:
                raise EvalError("division by zero")
            return a // b
        if e.op == "mod":
            if b == 0:
                raise EvalError("division by zero")
            return a % b
        if e.op in ("sdiv", "smod"):
            sa, sb = _signed(a, w), _signed(b, w)
            if sb == 0:
                raise EvalError("division by zero")
            q = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                q = -q
            if e.op == "sdiv":
                if not -(1 << (w - 1)) <= q < 1 << (w - 1):
                    raise EvalError("signed quotient overflow")
                return q & _mask(w)
            return (sa - q * sb) & _mask(w)
    raise EvalError(f"cannot evaluate {e!r}")


# ── simplification ───────────────────────────────────────────────────────


def _contiguous_mask(value: int, width: int) -> tuple[int, int] | None:
    """(hi, lo) bit span when ``value`` is a run of ones, else None."""
    if value == 0:
        return None
    lo = (value & -value).bit_length() - 1
    span = value >> lo
    if span & (span + 1):
        return None
    hi = lo + span.bit_length() - 1
    if hi >= width:
        return None
    return hi, lo


def _fold_binop(e: BinOp) -> SymExpr | None:
    if not (isinstance(e.lhs, Const) and isinstance(e.rhs, Const)):
        return None
    if e.op in ("div", "sdiv", "mod", "smod"):
        try:
            value = eval_expr(e, EvalEnv())
        except EvalError:
            return None
        return Const(value, e.width)
    return Const(eval_expr(e, EvalEnv()), e.width)


def _simplify_once(e: SymExpr) -> SymExpr:
    if isinstance(e, (Const, Imm, InputReg)):
        return e
    if isinstance(e, InputMem):
        return InputMem(_simplify_once(e.addr), e.width)
    if isinstance(e, Call):
        return Call(e.callee, tuple(_simplify_once(a) for a in e.args))
    if isinstance(e, UnOp):
        operand = _simplify_once(e.operand)
        if isinstance(operand, Const):
            value = -operand.value if e.op == "neg" else ~operand.value
            return Const(value, e.width)
        if isinstance(operand, UnOp) and operand.op == e.op:
            return operand.operand
        return UnOp(e.op, operand, e.width)
    if isinstance(e, Extract):
        return _simplify_extract(e)
    if isinstance(e, Cmp):
        return _simplify_cmp(e)
    if isinstance(e, BinOp):
        return _simplify_binop(e)
    raise ExprError(f"cannot simplify {e!r}")


def _simplify_extract(e: Extract) -> SymExpr:
    operand = _simplify_once(e.operand)
    hi, lo = e.hi, e.lo
    if lo == 0 and hi == operand.width - 1:
        return operand
    if isinstance(operand, Const):
        return Const((operand.value >> lo) & _mask(hi - lo + 1), hi - lo + 1)
    if isinstance(operand, Extract):
        return _simplify_extract(
            Extract(operand.lo + hi, operand.lo + lo, operand.operand)
        )
    if isinstance(operand, BinOp) and operand.op == "Concat":
        low_w = operand.rhs.width
        if hi < low_w:
            return _simplify_extract(Extract(hi, lo, operand.rhs))
        if lo >= low_w:
            return _simplify_extract(Extract(hi - low_w, lo - low_w, operand.lhs))
    return Extract(hi, lo, operand)


def _zext_extract(x: SymExpr, hi: int, lo: int, width: int) -> SymExpr:
    inner = _simplify_extract(Extract(hi, lo, x))
    if inner.width == width:
        return inner
    return BinOp("Concat", Const(0, width - inner.width), inner, width)


def _simplify_cmp(e: Cmp) -> SymExpr:
    lhs = _simplify_once(e.lhs)
    rhs = _simplify_once(e.rhs)
    # (x and mask) eq/ne 0 keeps its meaning when the mask's span is
    # extracted and zero-extended, whatever the span's low bit.
    if (
        e.op in ("eq", "ne")
        and isinstance(rhs, Const)
        and rhs.value == 0
        and isinstance(lhs, BinOp)
        and lhs.op == "and"
        and isinstance(lhs.lhs, Const)  # canonical order puts the mask left
    ):
        span = _contiguous_mask(lhs.lhs.value, lhs.width)
        if span is not None:
            lhs = _simplify_once(_zext_extract(lhs.rhs, span[0], span[1], lhs.width))
    if isinstance(lhs, Const) and isinstance(rhs, Const):
        return Const(eval_expr(Cmp(e.op, lhs, rhs), EvalEnv()), 1)
    return Cmp(e.op, lhs, rhs)


def _simplify_binop(e: BinOp) -> SymExpr:
    lhs = _simplify_once(e.lhs)
    rhs = _simplify_once(e.rhs)
    op, width = e.op, e.width

    if op == "Concat":
        if isinstance(lhs, Const) and isinstance(rhs, Const):
            return Const((lhs.value << rhs.width) | rhs.value, width)
        if isinstance(lhs, Const) and lhs.value == 0:
            if isinstance(rhs, BinOp) and rhs.op == "Concat" \
                    and isinstance(rhs.lhs, Const) and rhs.lhs.value == 0:
                return BinOp(
                    "Concat", Const(0, lhs.width + rhs.lhs.width), rhs.rhs, width
                )
            if isinstance(rhs, Imm):
                return Imm(width)
        return BinOp("Concat", lhs, rhs, width)

    if op in COMMUTATIVE_OPS:
        lhs, rhs = _commutative_order(lhs, rhs)

    node = BinOp(op, lhs, rhs, width)
    folded = _fold_binop(node)
    if folded is not None:
        return folded

    if isinstance(lhs, Const):
        v = lhs.value
        if op == "add" and v == 0:
            return rhs
        if op == "mul":
            if v == 1:
                return rhs
            if v == 0:
                return Const(0, width)
        if op == "and":
            if v == 0:
                return Const(0, width)
            if v == _mask(width):
                return rhs
            span = _contiguous_mask(v, width)
            if span is not None and span[1] == 0:
                return _simplify_once(_zext_extract(rhs, span[0], 0, width))
        if op in ("or", "xor") and v == 0:
            return rhs
        # Fold constants through one nesting level: c1 op (c2 op x).
        if (
            op in ("add", "mul", "and", "or", "xor")
            and isinstance(rhs, BinOp)
            and rhs.op == op
            and isinstance(rhs.lhs, Const)
        ):
            merged = _fold_binop(BinOp(op, lhs, rhs.lhs, width))
            if merged is not None:
                return _simplify_once(BinOp(op, merged, rhs.rhs, width))
    if isinstance(rhs, Const):
        v = rhs.value
        if op in ("shl", "shr", "sar"):
            masked = v & _shift_mask(width)
            if masked == 0:
                return lhs
            if masked != v:
                return BinOp(op, lhs, Const(masked, width), width)
    return node


def _commutative_order(lhs: SymExpr, rhs: SymExpr) -> tuple[SymExpr, SymExpr]:
    """Const operands first, then lexicographic by printed form."""
    lc, rc = isinstance(lhs, Const), isinstance(rhs, Const)
    if rc and not lc:
        return rhs, lhs
    if lc or rc:
        return lhs, rhs
    if to_text(lhs) > to_text(rhs):
        return rhs, lhs
    return lhs, rhs


def simplify(e: SymExpr) -> SymExpr:
    """Apply the rewrite rules to a fixed point (meaning-preserving)."""
    for _ in range(8):
        reduced = _simplify_once(e)
        if reduced == e:
            return reduced
        e = reduced
    return e


def expr_equal(a: SymExpr, b: SymExpr) -> bool:
    """Structural equality after canonical simplification."""
    return simplify(a) == simplify(b)


def assign_equal(a: SymAssign, b: SymAssign) -> bool:
    if type(a.target) is not type(b.target):
        return False
    if isinstance(a.target, RegTarget) and a.target.name != b.target.name:
        return False
    if isinstance(a.target, MemTarget) and not expr_equal(a.target.addr, b.target.addr):
        return False
    return expr_equal(a.expr, b.expr)


def iter_inputs(e: SymExpr) -> Iterator[InputReg | InputMem]:
    """Yield every input leaf of ``e`` (registers and memory cells)."""
    if isinstance(e, InputReg):
        yield e
    elif isinstance(e, InputMem):
        yield e
        yield from iter_inputs(e.addr)
    elif isinstance(e, BinOp):
        yield from iter_inputs(e.lhs)
        yield from iter_inputs(e.rhs)
    elif isinstance(e, UnOp):
        yield from iter_inputs(e.operand)
    elif isinstance(e, Extract):
        yield from iter_inputs(e.operand)
    elif isinstance(e, Cmp):
        yield from iter_inputs(e.lhs)
        yield from iter_inputs(e.rhs)
    elif isinstance(e, Call):
        for a in e.args:
            yield from iter_inputs(a)
