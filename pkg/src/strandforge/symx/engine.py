"""Lightweight symbolic execution of strands.

The engine runs one strand (straight-line instruction subsequence) over a
symbolic machine state and emits its representative set: one assignment per
strand output, the branch condition for predicate strands, and the call
expression for call strands.

State model: the sixteen general-purpose families plus rip each hold one
64-bit expression; sub-register writes compose with the previous value
(32-bit writes zero-extend, as the hardware does). Memory is a map from
canonical address text and width to expressions; a load hits the map only
on exact text-and-width match and otherwise materializes a fresh input
leaf, so differently written addresses never forward. Flags are not kept
as values: the engine remembers the last flag-writing computation and
rewrites a following conditional jump into a comparison over it. Condition
codes whose flag formula cannot be expressed exactly over the grammar mark
the strand as not executable; nothing is ever approximated.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from strandforge.regs import ARG_REGISTERS, Cond, RegisterId, register_by_name
from strandforge.slicer import Strand
from strandforge.symx.expr import (
    BinOp,
    Call,
    CallTarget,
    Cmp,
    Const,
    Extract,
    Imm,
    InputMem,
    InputReg,
    MemTarget,
    PredTarget,
    RegTarget,
    SymAssign,
    SymExpr,
    UnOp,
    iter_inputs,
    sign_extend,
    simplify,
    sub,
    to_text,
    zero_extend,
)
from strandforge.isa import ImmOp, Instruction, LabelOp, MemOp, Operand, RegOp, mem_addr_expr

__all__ = [
    "RepresentativeSet", "SymExecError", "UnsupportedForExec",
    "execute_strand", "execute_instructions", "strand_inputs",
    "touched_memory",
]


class SymExecError(Exception):
    """Strand could not be executed symbolically."""


class UnsupportedForExec(SymExecError):
    """Instruction or condition outside the executable subset."""


@dataclass(frozen=True, slots=True)
class RepresentativeSet:
    """The symbolic assignments characterizing one strand."""

    strand_id: str
    assigns: tuple[SymAssign, ...]

    @property
    def texts(self) -> tuple[str, ...]:
        return tuple(str(a) for a in self.assigns)


def strand_inputs(reps: RepresentativeSet) -> tuple[SymExpr, ...]:
    """Distinct input leaves over all assignments, in first-seen order."""
    seen: dict[SymExpr, None] = {}
    for assign in reps.assigns:
        for leaf in iter_inputs(assign.expr):
            seen.setdefault(leaf, None)
        if isinstance(assign.target, MemTarget):
            for leaf in iter_inputs(assign.target.addr):
                seen.setdefault(leaf, None)
    return tuple(seen)


@dataclass
class _FlagCtx:
    kind: str  # cmp | sub | add | test | logic | incdec | shift | opaque
    lhs: SymExpr | None = None
    rhs: SymExpr | None = None
    result: SymExpr | None = None


_STRING_WIDTHS = {"b": 1, "w": 2, "d": 4, "q": 8}


class _Engine:
    def __init__(self, callee_resolver: Callable[[Instruction], str] | None):
        self.regs: dict[str, SymExpr] = {}
        self.mem: dict[tuple[str, int], SymExpr] = {}
        self.mem_last: dict[tuple[str, int], str] = {}
        self.mem_addr: dict[tuple[str, int], SymExpr] = {}
        self.mem_inputs: set[tuple[str, int]] = set()
        self.reg_last: dict[str, str] = {}
        self.flag_ctx: _FlagCtx | None = None
        self.predicate: SymExpr | None = None
        self.call_expr: Call | None = None
        self.resolver = callee_resolver or _default_callee

    # ── state access ─────────────────────────────────────────────────

    def _full(self, family: str) -> SymExpr:
        value = self.regs.get(family)
        if value is None:
            value = InputReg(family)
            self.regs[family] = value
        return value

    def read_reg(self, reg: RegisterId) -> SymExpr:
        if not reg.is_gpr() and reg.family != "rip":
            raise UnsupportedForExec(f"register {reg.name} is outside the model")
        value = self._full(reg.family)
        self.reg_last[reg.family] = "read"
        if reg.size == 8:
            return value
        return simplify(Extract(reg.hi * 8 - 1, reg.lo * 8, value))

    def write_reg(self, reg: RegisterId, value: SymExpr) -> None:
        if value.width != reg.bits:
            raise SymExecError(
                f"write width {value.width} does not fit {reg.name}"
            )
        if reg.size == 8:
            new = value
        elif reg.size == 4 and reg.lo == 0:
            new = zero_extend(value, 64)
        else:
            old = self._full(reg.family)
            new = value
            if reg.lo > 0:
                new = BinOp(
                    "Concat", new, Extract(reg.lo * 8 - 1, 0, old),
                    new.width + reg.lo * 8,
                )
            if reg.hi < 8:
                new = BinOp(
                    "Concat", Extract(63, reg.hi * 8, old), new, 64
                )
        self.regs[reg.family] = simplify(new)
        self.reg_last[reg.family] = "write"

    def _mem_key(self, addr: SymExpr, width_bits: int) -> tuple[str, int]:
        return (f"*({to_text(addr)})", width_bits)

    def read_mem_at(self, addr: SymExpr, width_bits: int) -> SymExpr:
        addr = simplify(addr)
        key = self._mem_key(addr, width_bits)
        value = self.mem.get(key)
        if value is None:
            value = InputMem(addr, width_bits)
            self.mem[key] = value
            self.mem_inputs.add(key)
        self.mem_last[key] = "read"
        self.mem_addr.setdefault(key, addr)
        return value

    def write_mem_at(self, addr: SymExpr, width_bits: int, value: SymExpr) -> None:
        addr = simplify(addr)
        if value.width != width_bits:
            raise SymExecError("store width mismatch")
        key = self._mem_key(addr, width_bits)
        self.mem[key] = simplify(value)
        self.mem_last[key] = "write"
        self.mem_addr[key] = addr

    def addr_of(self, op: MemOp) -> SymExpr:
        return mem_addr_expr(op, read=self.read_reg)

    def value(self, op: Operand, width_bits: int) -> SymExpr:
        if isinstance(op, RegOp):
            got = self.read_reg(op.reg)
            if got.width != width_bits:
                raise SymExecError("operand width mismatch")
            return got
        if isinstance(op, ImmOp):
            if op.value is None:
                return Imm(width_bits)
            return Const(op.value, width_bits)
        if isinstance(op, MemOp):
            return self.read_mem_at(self.addr_of(op), (op.size or 8) * 8)
        raise UnsupportedForExec(f"operand {op!r} has no value")

    def store(self, op: Operand, value: SymExpr) -> None:
        if isinstance(op, RegOp):
            self.write_reg(op.reg, value)
        elif isinstance(op, MemOp):
            self.write_mem_at(self.addr_of(op), (op.size or 8) * 8, value)
        else:
            raise UnsupportedForExec(f"cannot store into {op!r}")

    # ── instruction dispatch ─────────────────────────────────────────

    def step(self, instr: Instruction) -> None:
        if not instr.exec_ok:
            raise UnsupportedForExec(
                f"{instr.mnemonic} is not in the executable subset"
            )
        mn = instr.mnemonic
        ops = instr.operands
        if mn in ("mov", "movabs"):
            width = _dst_width(ops[0], ops[1])
            self.store(ops[0], self.value(ops[1], width))
        elif mn in ("movzx", "movsx", "movsxd"):
            src = self.value(ops[1], _op_width(ops[1], 4))
            dst_bits = _op_width(ops[0], 8)
            widened = (
                zero_extend(src, dst_bits) if mn == "movzx"
                else sign_extend(src, dst_bits)
            )
            self.store(ops[0], simplify(widened))
        elif mn == "lea":
            if not isinstance(ops[1], MemOp):
                raise UnsupportedForExec("lea needs a memory source")
            addr = self.addr_of(ops[1])
            self.store(ops[0], simplify(_fit(addr, _op_width(ops[0], 8))))
        elif mn == "xchg":
            w = _dst_width(ops[0], ops[1])
            a, b = self.value(ops[0], w), self.value(ops[1], w)
            self.store(ops[0], b)
            self.store(ops[1], a)
        elif mn in ("add", "sub", "and", "or", "xor", "cmp", "test"):
            self._arith(mn, ops)
        elif mn in ("inc", "dec"):
            w = _op_width(ops[0], 8)
            a = self.value(ops[0], w)
            one = Const(1, w)
            res = simplify(
                BinOp("add", a, one, w) if mn == "inc" else sub(a, one)
            )
            self.store(ops[0], res)
            self.flag_ctx = _FlagCtx("incdec", a, one, res)
        elif mn == "neg":
            w = _op_width(ops[0], 8)
            a = self.value(ops[0], w)
            res = simplify(UnOp("neg", a, w))
            self.store(ops[0], res)
            self.flag_ctx = _FlagCtx("sub", Const(0, w), a, res)
        elif mn == "not":
            w = _op_width(ops[0], 8)
            res = simplify(UnOp("not", self.value(ops[0], w), w))
            self.store(ops[0], res)  # flags untouched
        elif mn in ("shl", "sal", "shr", "sar"):
            self._shift(mn, ops)
        elif mn in ("imul", "mul", "idiv", "div"):
            self._muldiv(mn, ops)
        elif mn in ("cwde", "cwtl", "cdqe", "cltq", "cqo", "cqto", "cdq", "cltd"):
            self._extend(mn)
        elif mn == "push":
            value = self.value(ops[0], 64)
            rsp = register_by_name("rsp")
            new_rsp = simplify(sub(self.read_reg(rsp), Const(8, 64)))
            self.write_mem_at(new_rsp, 64, value)
            self.write_reg(rsp, new_rsp)
        elif mn == "pop":
            rsp = register_by_name("rsp")
            top = self.read_reg(rsp)
            self.store(ops[0], self.read_mem_at(top, 64))
            self.write_reg(rsp, simplify(BinOp("add", top, Const(8, 64), 64)))
        elif mn == "leave":
            rbp = register_by_name("rbp")
            rsp = register_by_name("rsp")
            frame = self.read_reg(rbp)
            self.write_reg(rbp, self.read_mem_at(frame, 64))
            self.write_reg(rsp, simplify(BinOp("add", frame, Const(8, 64), 64)))
        elif mn[:-1] in ("stos", "movs", "lods") and mn[-1] in _STRING_WIDTHS:
            self._string_op(mn, instr.rep)
        elif instr.is_jcc:
            pred = self._predicate(instr.cond)
            if pred is None:
                raise UnsupportedForExec(
                    f"condition {instr.mnemonic} is not expressible here"
                )
            self.predicate = simplify(pred)
        elif instr.cond is not None and mn.startswith("set"):
            pred = self._predicate(instr.cond)
            if pred is None:
                raise UnsupportedForExec(
                    f"condition {instr.mnemonic} is not expressible here"
                )
            self.store(ops[0], simplify(zero_extend(pred, 8)))
        elif mn == "call":
            self._call(instr)
        elif mn in ("jmp", "ret", "retn", "nop"):
            pass
        else:
            raise UnsupportedForExec(f"no semantics for {mn}")

    def _arith(self, mn: str, ops: tuple[Operand, ...]) -> None:
        w = _dst_width(ops[0], ops[1])
        a = self.value(ops[0], w)
        b = self.value(ops[1], w)
        if mn in ("add", "sub", "cmp"):
            res = simplify(sub(a, b) if mn in ("sub", "cmp") else BinOp("add", a, b, w))
        else:
            op = "and" if mn in ("and", "test") else mn
            res = simplify(BinOp(op, a, b, w))
        if mn not in ("cmp", "test"):
            self.store(ops[0], res)
        kind = {
            "add": "add", "sub": "sub", "cmp": "cmp", "test": "test",
        }.get(mn, "logic")
        self.flag_ctx = _FlagCtx(kind, a, b, res)

    def _shift(self, mn: str, ops: tuple[Operand, ...]) -> None:
        w = _op_width(ops[0], 8)
        a = self.value(ops[0], w)
        op = {"sal": "shl"}.get(mn, mn)
        if len(ops) == 1:  # implicit shift by one
            count: SymExpr = Const(1, w)
        elif isinstance(ops[1], ImmOp):
            count = self.value(ops[1], w)
        else:
            narrow = self.value(ops[1], _op_width(ops[1], 1))
            count = simplify(zero_extend(narrow, w))
        res = simplify(BinOp(op, a, count, w))
        self.store(ops[0], res)
        if isinstance(count, Const):
            masked = count.value & (63 if w == 64 else 31)
            if masked != 0:
                self.flag_ctx = _FlagCtx("shift", result=res)
            # count 0 leaves the flags untouched
        else:
            self.flag_ctx = _FlagCtx("opaque")

    def _muldiv(self, mn: str, ops: tuple[Operand, ...]) -> None:
        if mn == "imul" and len(ops) >= 2:
            w = _op_width(ops[0], 8)
            a = self.value(ops[1] if len(ops) == 3 else ops[0], w)
            b = self.value(ops[2] if len(ops) == 3 else ops[1], w)
            self.store(ops[0], simplify(BinOp("mul", a, b, w)))
            self.flag_ctx = _FlagCtx("opaque")
            return
        width = _op_width(ops[0], 8)
        bits = width
        rax = RegisterId("rax", 0, bits // 8)
        src = self.value(ops[0], bits)
        acc = self.read_reg(rax)
        if mn in ("imul", "mul"):
            wide = bits * 2
            extend = sign_extend if mn == "imul" else zero_extend
            prod = simplify(
                BinOp("mul", simplify(extend(acc, wide)), simplify(extend(src, wide)), wide)
            )
            if bits == 8:
                self.write_reg(RegisterId("rax", 0, 2), simplify(Extract(15, 0, prod)))
            else:
                self.write_reg(rax, simplify(Extract(bits - 1, 0, prod)))
                self.write_reg(
                    RegisterId("rdx", 0, bits // 8),
                    simplify(Extract(wide - 1, bits, prod)),
                )
        else:
            signed = mn == "idiv"
            quot = simplify(BinOp("sdiv" if signed else "div", acc, src, bits))
            rem = simplify(BinOp("smod" if signed else "mod", acc, src, bits))
            if bits == 8:
                self.write_reg(RegisterId("rax", 0, 1), quot)
                self.write_reg(RegisterId("rax", 1, 2), rem)
            else:
                self.write_reg(rax, quot)
                self.write_reg(RegisterId("rdx", 0, bits // 8), rem)
        self.flag_ctx = _FlagCtx("opaque")

    def _extend(self, mn: str) -> None:
        rax = register_by_name("rax")
        if mn in ("cwde", "cwtl"):
            self.write_reg(
                RegisterId("rax", 0, 4),
                simplify(sign_extend(self.read_reg(RegisterId("rax", 0, 2)), 32)),
            )
        elif mn in ("cdqe", "cltq"):
            self.write_reg(
                rax, simplify(sign_extend(self.read_reg(RegisterId("rax", 0, 4)), 64))
            )
        elif mn in ("cqo", "cqto"):
            value = self.read_reg(rax)
            self.write_reg(
                register_by_name("rdx"),
                simplify(BinOp("sar", value, Const(63, 64), 64)),
            )
        else:  # cdq / cltd
            value = self.read_reg(RegisterId("rax", 0, 4))
            self.write_reg(
                RegisterId("rdx", 0, 4),
                simplify(BinOp("sar", value, Const(31, 32), 32)),
            )

    def _string_op(self, mn: str, rep: bool) -> None:
        width = _STRING_WIDTHS[mn[-1]]
        bits = width * 8
        kind = mn[:-1]
        rdi = register_by_name("rdi")
        rsi = register_by_name("rsi")
        rcx = register_by_name("rcx")
        step = Const(width, 64)
        if kind == "stos":
            value = self.read_reg(RegisterId("rax", 0, width))
            dst = self.read_reg(rdi)
            self.write_mem_at(dst, bits, value)
            self.write_reg(rdi, simplify(BinOp("add", dst, step, 64)))
        elif kind == "movs":
            src = self.read_reg(rsi)
            dst = self.read_reg(rdi)
            self.write_mem_at(dst, bits, self.read_mem_at(src, bits))
            self.write_reg(rsi, simplify(BinOp("add", src, step, 64)))
            self.write_reg(rdi, simplify(BinOp("add", dst, step, 64)))
        else:  # lods
            src = self.read_reg(rsi)
            self.write_reg(RegisterId("rax", 0, width), self.read_mem_at(src, bits))
            self.write_reg(rsi, simplify(BinOp("add", src, step, 64)))
        if rep:
            count = self.read_reg(rcx)
            self.write_reg(rcx, simplify(sub(count, Const(1, 64))))

    def _call(self, instr: Instruction) -> None:
        if instr.operands and not isinstance(instr.operands[0], LabelOp):
            op = instr.operands[0]
            if isinstance(op, RegOp):
                self.read_reg(op.reg)
            elif isinstance(op, MemOp):
                self.read_mem_at(self.addr_of(op), (op.size or 8) * 8)
        written = [
            i for i, fam in enumerate(ARG_REGISTERS)
            if self.reg_last.get(fam) == "write"
        ]
        args: list[SymExpr] = []
        if written:
            for fam in ARG_REGISTERS[: max(written) + 1]:
                args.append(self.read_reg(register_by_name(fam)))
        self.call_expr = Call(self.resolver(instr), tuple(args))

    # ── predicates ──────────────────────────────────────────────────

    def _predicate(self, cond: Cond) -> SymExpr | None:
        ctx = self.flag_ctx
        if ctx is None or ctx.kind == "opaque":
            return None
        if ctx.kind in ("cmp", "sub"):
            table = {
                Cond.E: "eq", Cond.NE: "ne",
                Cond.L: "slt", Cond.GE: "sge", Cond.LE: "sle", Cond.G: "sgt",
                Cond.B: "ult", Cond.AE: "uge", Cond.BE: "ule", Cond.A: "ugt",
            }
            if cond in table:
                return Cmp(table[cond], ctx.lhs, ctx.rhs)
            if cond in (Cond.S, Cond.NS):
                zero = Const(0, ctx.result.width)
                return Cmp("slt" if cond is Cond.S else "sge", ctx.result, zero)
            return None
        if ctx.kind in ("test", "logic"):
            zero = Const(0, ctx.result.width)
            table = {
                Cond.E: "eq", Cond.NE: "ne", Cond.S: "slt", Cond.NS: "sge",
                Cond.L: "slt", Cond.GE: "sge", Cond.LE: "sle", Cond.G: "sgt",
                Cond.A: "ne", Cond.BE: "eq",
            }
            if cond in table:
                return Cmp(table[cond], ctx.result, zero)
            return None
        if ctx.kind == "add":
            zero = Const(0, ctx.result.width)
            if cond in (Cond.E, Cond.NE, Cond.S, Cond.NS):
                table = {
                    Cond.E: "eq", Cond.NE: "ne", Cond.S: "slt", Cond.NS: "sge",
                }
                return Cmp(table[cond], ctx.result, zero)
            if cond in (Cond.B, Cond.AE):  # carry out: result wrapped under lhs
                return Cmp("ult" if cond is Cond.B else "uge", ctx.result, ctx.lhs)
            return None
        if ctx.kind in ("incdec", "shift"):
            if cond in (Cond.E, Cond.NE, Cond.S, Cond.NS):
                zero = Const(0, ctx.result.width)
                table = {
                    Cond.E: "eq", Cond.NE: "ne", Cond.S: "slt", Cond.NS: "sge",
                }
                return Cmp(table[cond], ctx.result, zero)
            return None
        return None

    # ── emission ─────────────────────────────────────────────────────

    def representative_set(self, strand_id: str) -> RepresentativeSet:
        assigns: list[SymAssign] = []
        for family in sorted(self.regs):
            if self.reg_last.get(family) == "write":
                assigns.append(
                    SymAssign(RegTarget(family), simplify(self.regs[family]))
                )
        for key in sorted(self.mem_last, key=lambda k: (k[0], k[1])):
            if self.mem_last[key] == "write":
                assigns.append(
                    SymAssign(MemTarget(self.mem_addr[key]), self.mem[key])
                )
        if self.predicate is not None:
            assigns.append(SymAssign(PredTarget(), self.predicate))
        if self.call_expr is not None:
            assigns.append(SymAssign(CallTarget(), self.call_expr))
        return RepresentativeSet(strand_id, tuple(assigns))


def _op_width(op: Operand, default_bytes: int) -> int:
    if isinstance(op, RegOp):
        return op.reg.bits
    if isinstance(op, MemOp):
        return (op.size or default_bytes) * 8
    return default_bytes * 8


def _dst_width(dst: Operand, src: Operand) -> int:
    if isinstance(dst, RegOp):
        return dst.reg.bits
    if isinstance(dst, MemOp) and dst.size:
        return dst.size * 8
    if isinstance(src, RegOp):
        return src.reg.bits
    return 64


def _fit(e: SymExpr, width_bits: int) -> SymExpr:
    if e.width == width_bits:
        return e
    if e.width < width_bits:
        return zero_extend(e, width_bits)
    return Extract(width_bits - 1, 0, e)


def _default_callee(instr: Instruction) -> str:
    if instr.operands and isinstance(instr.operands[0], LabelOp):
        label = instr.operands[0]
        if label.target is None:
            return label.name
    return "func"


def _run(
    instructions: list[Instruction],
    callee_resolver: Callable[[Instruction], str] | None = None,
) -> _Engine:
    engine = _Engine(callee_resolver)
    for instr in instructions:
        engine.step(instr)
    return engine


def touched_memory(
    instructions: list[Instruction],
) -> list[tuple[str, int, SymExpr, bool]]:
    """Every memory cell a strand touches: (text, width, addr, is_input).

    ``is_input`` marks cells whose first access was a load of machine state
    (their value is a free input); the rest are written before any read.
    """
    engine = _run(instructions)
    return [
        (text, width, engine.mem_addr[(text, width)],
         (text, width) in engine.mem_inputs)
        for text, width in sorted(engine.mem_addr)
    ]


def execute_instructions(
    instructions: list[Instruction],
    strand_id: str = "",
    callee_resolver: Callable[[Instruction], str] | None = None,
) -> RepresentativeSet:
    engine = _run(instructions, callee_resolver)
    return engine.representative_set(strand_id)


def execute_strand(
    strand: Strand,
    callee_resolver: Callable[[Instruction], str] | None = None,
) -> RepresentativeSet:
    """Symbolically execute a strand; raises SymExecError when unsupported."""
    return execute_instructions(
        list(strand.instructions), strand.strand_id, callee_resolver
    )
