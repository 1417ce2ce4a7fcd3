"""Concrete interpreter and the symbolic-vs-concrete differential check.

The interpreter executes the same instruction subset as the symbolic
engine over numeric state: registers are unsigned 64-bit family values,
flags are computed with hardware formulas, and memory is a map from
(address value, access width) to cell values with no byte overlap
between cells. Cell granularity matches the symbolic engine's
text-keyed model whenever syntactically distinct addresses land on
disjoint byte ranges, which the differential harness enforces by
resampling any input assignment that violates it.

Division uses the engine's model semantics (the dividend is the
same-width accumulator slice, not the double-width pair); division by
zero and signed-quotient overflow raise ConcreteFault, and the harness
skips such samples.
"""
from __future__ import annotations

import random
from dataclasses import dataclass, field
from typing import Callable

from strandforge.regs import Cond, GPR_FAMILIES, RegisterId, register_by_name
from strandforge.symx.engine import (
    RepresentativeSet,
    SymExecError,
    _dst_width,
    _op_width,
    touched_memory,
)
from strandforge.symx.expr import (
    CallTarget,
    EvalEnv,
    EvalError,
    MemTarget,
    PredTarget,
    RegTarget,
    eval_expr,
)
from strandforge.isa import ImmOp, Instruction, MemOp, Operand, RegOp

__all__ = [
    "ConcreteError", "ConcreteFault", "ConcreteMachine",
    "DifferentialReport", "differential_check",
]

_M64 = (1 << 64) - 1

_STRING_WIDTHS = {"b": 1, "w": 2, "d": 4, "q": 8}


class ConcreteError(Exception):
    """Instruction has no concrete semantics (calls, unmodeled registers)."""


class ConcreteFault(ConcreteError):
    """Run aborted: division by zero or signed quotient overflow."""


def _mask(width: int) -> int:
    return (1 << width) - 1


def _signed(value: int, width: int) -> int:
    value &= _mask(width)
    return value - (1 << width) if value >= 1 << (width - 1) else value


class ConcreteMachine:
    """Numeric executor for one strand.

    ``regs`` seeds the 64-bit families; reads of unseeded state go through
    ``input_fn(kind, key, width) -> value`` when given and fail otherwise.
    """

    def __init__(
        self,
        regs: dict[str, int] | None = None,
        mem: dict[tuple[int, int], int] | None = None,
        input_fn: Callable[[str, object, int], int] | None = None,
    ):
        self.regs: dict[str, int] = {
            name: value & _M64 for name, value in (regs or {}).items()
        }
        self.mem: dict[tuple[int, int], int] = {
            key: value & _mask(key[1]) for key, value in (mem or {}).items()
        }
        self.flags = {"zf": 0, "sf": 0, "cf": 0, "of": 0, "pf": 0}
        self.input_fn = input_fn
        self.branch_taken: bool | None = None

    # ── state ────────────────────────────────────────────────────────

    def _family(self, family: str) -> int:
        if family not in self.regs:
            if self.input_fn is None:
                raise ConcreteError(f"register {family} was never seeded")
            self.regs[family] = self.input_fn("reg", family, 64) & _M64
        return self.regs[family]

    def read_reg(self, reg: RegisterId) -> int:
        if not reg.is_gpr() and reg.family != "rip":
            raise ConcreteError(f"register {reg.name} is outside the model")
        return (self._family(reg.family) >> (reg.lo * 8)) & _mask(reg.bits)

    def write_reg(self, reg: RegisterId, value: int) -> None:
        value &= _mask(reg.bits)
        if reg.size == 8 or (reg.size == 4 and reg.lo == 0):
            self.regs[reg.family] = value
            return
        old = self._family(reg.family)
        keep = ~(_mask(reg.bits) << (reg.lo * 8)) & _M64
        self.regs[reg.family] = (old & keep) | (value << (reg.lo * 8))

    def addr_value(self, op: MemOp) -> int:
        width = 64
        for reg in (op.base, op.index, op.scale_reg):
            if reg is not None:
                width = reg.bits
                break
        total = 0
        if op.base is not None:
            total = self.read_reg(op.base)
        if op.index is not None:
            idx = self.read_reg(op.index)
            if op.scale_reg is not None:
                idx = (idx * self.read_reg(op.scale_reg)) & _mask(width)
            else:
                idx = (idx * op.scale) & _mask(width)
            total = (total + idx) & _mask(width)
        if op.disp_imm:
            raise ConcreteError("address uses an opaque immediate")
        return (total + op.disp) & _mask(width)

    def read_mem(self, addr: int, width_bits: int) -> int:
        key = (addr, width_bits)
        if key not in self.mem:
            if self.input_fn is None:
                raise ConcreteError(f"memory {key} was never seeded")
            self.mem[key] = self.input_fn("mem", key, width_bits) & _mask(
                width_bits
            )
        return self.mem[key]

    def write_mem(self, addr: int, width_bits: int, value: int) -> None:
        self.mem[(addr, width_bits)] = value & _mask(width_bits)

    def value(self, op: Operand, width_bits: int) -> int:
        if isinstance(op, RegOp):
            return self.read_reg(op.reg)
        if isinstance(op, ImmOp):
            if op.value is None:
                raise ConcreteError("opaque immediate has no value")
            return op.value & _mask(width_bits)
        if isinstance(op, MemOp):
            return self.read_mem(self.addr_value(op), (op.size or 8) * 8)
        raise ConcreteError(f"operand {op!r} has no value")

    def store(self, op: Operand, value: int) -> None:
        if isinstance(op, RegOp):
            self.write_reg(op.reg, value)
        elif isinstance(op, MemOp):
            self.write_mem(self.addr_value(op), (op.size or 8) * 8, value)
        else:
            raise ConcreteError(f"cannot store into {op!r}")

    # ── flags ────────────────────────────────────────────────────────

    def _szp(self, res: int, width: int) -> None:
        self.flags["zf"] = int(res == 0)
        self.flags["sf"] = (res >> (width - 1)) & 1
        self.flags["pf"] = int(bin(res & 0xFF).count("1") % 2 == 0)

    def _flags_add(self, a: int, b: int, res: int, w: int) -> None:
        self._szp(res, w)
        self.flags["cf"] = int(a + b > _mask(w))
        self.flags["of"] = ((a ^ res) & (b ^ res)) >> (w - 1) & 1

    def _flags_sub(self, a: int, b: int, res: int, w: int) -> None:
        self._szp(res, w)
        self.flags["cf"] = int(a < b)
        self.flags["of"] = ((a ^ b) & (a ^ res)) >> (w - 1) & 1

    def _flags_logic(self, res: int, w: int) -> None:
        self._szp(res, w)
        self.flags["cf"] = 0
        self.flags["of"] = 0

    def cond_value(self, cond: Cond) -> bool:
        f = self.flags
        zf, sf, cf, of, pf = f["zf"], f["sf"], f["cf"], f["of"], f["pf"]
        table = {
            Cond.E: zf, Cond.NE: not zf,
            Cond.S: sf, Cond.NS: not sf,
            Cond.G: not zf and sf == of, Cond.GE: sf == of,
            Cond.L: sf != of, Cond.LE: zf or sf != of,
            Cond.A: not cf and not zf, Cond.AE: not cf,
            Cond.B: cf, Cond.BE: cf or zf,
            Cond.P: pf, Cond.NP: not pf,
            Cond.O: of, Cond.NO: not of,
        }
        return bool(table[cond])

    # ── dispatch ─────────────────────────────────────────────────────

    def run(self, instructions: list[Instruction]) -> None:
        for instr in instructions:
            self.step(instr)

    def step(self, instr: Instruction) -> None:
        if not instr.exec_ok:
            raise ConcreteError(f"{instr.mnemonic} has no concrete semantics")
        mn = instr.mnemonic
        ops = instr.operands
        if mn in ("mov", "movabs"):
            width = _dst_width(ops[0], ops[1])
            self.store(ops[0], self.value(ops[1], width))
        elif mn in ("movzx", "movsx", "movsxd"):
            src_w = _op_width(ops[1], 4)
            dst_w = _op_width(ops[0], 8)
            v = self.value(ops[1], src_w)
            if mn != "movzx":
                v = _signed(v, src_w) & _mask(dst_w)
            self.store(ops[0], v)
        elif mn == "lea":
            self.store(ops[0], self.addr_value(ops[1]) & _mask(_op_width(ops[0], 8)))
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
            res = (a + (1 if mn == "inc" else -1)) & _mask(w)
            self.store(ops[0], res)
            self._szp(res, w)  # CF survives inc/dec
            edge = 1 << (w - 1) if mn == "inc" else _mask(w - 1)
            self.flags["of"] = int(res == edge)
        elif mn == "neg":
            w = _op_width(ops[0], 8)
            a = self.value(ops[0], w)
            res = (-a) & _mask(w)
            self.store(ops[0], res)
            self._flags_sub(0, a, res, w)
        elif mn == "not":
            w = _op_width(ops[0], 8)
            self.store(ops[0], ~self.value(ops[0], w) & _mask(w))
        elif mn in ("shl", "sal", "shr", "sar"):
            self._shift(mn, ops)
        elif mn in ("imul", "mul", "idiv", "div"):
            self._muldiv(mn, ops)
        elif mn in ("cwde", "cwtl"):
            v = self.read_reg(RegisterId("rax", 0, 2))
            self.write_reg(RegisterId("rax", 0, 4), _signed(v, 16) & _mask(32))
        elif mn in ("cdqe", "cltq"):
            v = self.read_reg(RegisterId("rax", 0, 4))
            self.write_reg(register_by_name("rax"), _signed(v, 32) & _M64)
        elif mn in ("cqo", "cqto"):
            v = self.read_reg(register_by_name("rax"))
            self.write_reg(
                register_by_name("rdx"), _M64 if v >> 63 else 0
            )
        elif mn in ("cdq", "cltd"):
            v = self.read_reg(RegisterId("rax", 0, 4))
            self.write_reg(
                RegisterId("rdx", 0, 4), _mask(32) if v >> 31 else 0
            )
        elif mn == "push":
            value = self.value(ops[0], 64)
            rsp = register_by_name("rsp")
            new = (self.read_reg(rsp) - 8) & _M64
            self.write_mem(new, 64, value)
            self.write_reg(rsp, new)
        elif mn == "pop":
            rsp = register_by_name("rsp")
            top = self.read_reg(rsp)
            self.store(ops[0], self.read_mem(top, 64))
            self.write_reg(rsp, (top + 8) & _M64)
        elif mn == "leave":
            rbp = register_by_name("rbp")
            rsp = register_by_name("rsp")
            frame = self.read_reg(rbp)
            self.write_reg(rbp, self.read_mem(frame, 64))
            self.write_reg(rsp, (frame + 8) & _M64)
        elif mn[:-1] in ("stos", "movs", "lods") and mn[-1] in _STRING_WIDTHS:
            self._string_op(mn, instr.rep)
        elif instr.is_jcc:
            self.branch_taken = self.cond_value(instr.cond)
        elif instr.cond is not None and mn.startswith("set"):
            self.store(ops[0], int(self.cond_value(instr.cond)))
        elif mn in ("jmp", "ret", "retn", "nop"):
            pass
        elif mn == "call":
            raise ConcreteError("calls have no concrete semantics")
        else:
            raise ConcreteError(f"no concrete semantics for {mn}")

    def _arith(self, mn: str, ops: tuple[Operand, ...]) -> None:
        w = _dst_width(ops[0], ops[1])
        a = self.value(ops[0], w)
        b = self.value(ops[1], w)
        if mn in ("add",):
            res = (a + b) & _mask(w)
            self._flags_add(a, b, res, w)
        elif mn in ("sub", "cmp"):
            res = (a - b) & _mask(w)
            self._flags_sub(a, b, res, w)
        else:
            res = {
                "and": a & b, "test": a & b, "or": a | b, "xor": a ^ b,
            }[mn]
            self._flags_logic(res, w)
        if mn not in ("cmp", "test"):
            self.store(ops[0], res)

    def _shift(self, mn: str, ops: tuple[Operand, ...]) -> None:
        w = _op_width(ops[0], 8)
        a = self.value(ops[0], w)
        if len(ops) == 1:
            count = 1
        elif isinstance(ops[1], ImmOp):
            count = self.value(ops[1], w)
        else:
            count = self.value(ops[1], _op_width(ops[1], 1))
        count &= 63 if w == 64 else 31
        if count == 0:
            self.store(ops[0], a)  # flags untouched
            return
        if mn in ("shl", "sal"):
            res = (a << count) & _mask(w)
            cf = (a >> (w - count)) & 1 if count <= w else 0
        elif mn == "shr":
            res = a >> count
            cf = (a >> (count - 1)) & 1
        else:
            res = (_signed(a, w) >> count) & _mask(w)
            cf = (_signed(a, w) >> (count - 1)) & 1
        self.store(ops[0], res)
        self._szp(res, w)
        self.flags["cf"] = cf
        self.flags["of"] = (
            ((res >> (w - 1)) & 1) ^ cf if count == 1 and mn in ("shl", "sal")
            else ((a >> (w - 1)) & 1) if count == 1 and mn == "shr"
            else 0
        )

    def _muldiv(self, mn: str, ops: tuple[Operand, ...]) -> None:
        if mn == "imul" and len(ops) >= 2:
            w = _op_width(ops[0], 8)
            a = self.value(ops[1] if len(ops) == 3 else ops[0], w)
            b = self.value(ops[2] if len(ops) == 3 else ops[1], w)
            full = _signed(a, w) * _signed(b, w)
            res = full & _mask(w)
            self.store(ops[0], res)
            self._szp(res, w)
            overflow = int(_signed(res, w) != full)
            self.flags["cf"] = self.flags["of"] = overflow
            return
        bits = _op_width(ops[0], 8)
        acc_reg = RegisterId("rax", 0, bits // 8)
        src = self.value(ops[0], bits)
        acc = self.read_reg(acc_reg)
        if mn in ("imul", "mul"):
            if mn == "imul":
                full = _signed(acc, bits) * _signed(src, bits)
            else:
                full = acc * src
            full &= _mask(bits * 2)
            low, high = full & _mask(bits), full >> bits
            if bits == 8:
                self.write_reg(RegisterId("rax", 0, 2), full)
            else:
                self.write_reg(acc_reg, low)
                self.write_reg(RegisterId("rdx", 0, bits // 8), high)
            self._szp(low, bits)
            if mn == "imul":
                spill = int(high != (_mask(bits) if low >> (bits - 1) else 0))
            else:
                spill = int(high != 0)
            self.flags["cf"] = self.flags["of"] = spill
            return
        if mn == "idiv":
            sa, sb = _signed(acc, bits), _signed(src, bits)
            if sb == 0:
                raise ConcreteFault("division by zero")
            quot = abs(sa) // abs(sb)
            if (sa < 0) != (sb < 0):
                quot = -quot
            if not -(1 << (bits - 1)) <= quot < 1 << (bits - 1):
                raise ConcreteFault("signed quotient overflow")
            rem = sa - quot * sb
        else:
            if src == 0:
                raise ConcreteFault("division by zero")
            quot, rem = acc // src, acc % src
        if bits == 8:
            self.write_reg(RegisterId("rax", 0, 1), quot & _mask(8))
            self.write_reg(RegisterId("rax", 1, 2), rem & _mask(8))
        else:
            self.write_reg(acc_reg, quot & _mask(bits))
            self.write_reg(RegisterId("rdx", 0, bits // 8), rem & _mask(bits))

    def _string_op(self, mn: str, rep: bool) -> None:
        width = _STRING_WIDTHS[mn[-1]]
        bits = width * 8
        kind = mn[:-1]
        rdi = register_by_name("rdi")
        rsi = register_by_name("rsi")
        rcx = register_by_name("rcx")
        if kind == "stos":
            dst = self.read_reg(rdi)
            self.write_mem(dst, bits, self.read_reg(RegisterId("rax", 0, width)))
            self.write_reg(rdi, (dst + width) & _M64)
        elif kind == "movs":
            src, dst = self.read_reg(rsi), self.read_reg(rdi)
            self.write_mem(dst, bits, self.read_mem(src, bits))
            self.write_reg(rsi, (src + width) & _M64)
            self.write_reg(rdi, (dst + width) & _M64)
        else:
            src = self.read_reg(rsi)
            self.write_reg(RegisterId("rax", 0, width), self.read_mem(src, bits))
            self.write_reg(rsi, (src + width) & _M64)
        if rep:
            self.write_reg(rcx, (self.read_reg(rcx) - 1) & _M64)


# ── differential harness ─────────────────────────────────────────────────


@dataclass
class DifferentialReport:
    """Outcome of replaying one strand's representative set concretely."""

    strand_id: str
    samples: int = 0
    skipped: int = 0
    mismatches: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches


def _sample(rng: random.Random) -> int:
    # mix full-range and small values so carries, sign edges, and shift
    # counts all get exercised
    roll = rng.random()
    if roll < 0.25:
        return rng.randrange(0, 16)
    if roll < 0.35:
        return rng.choice((0, 1, _M64, 1 << 63, (1 << 63) - 1, 0xFF, 0xFFFF))
    return rng.getrandbits(64)


def _resolve_cells(
    cells: list[tuple[str, int, object, bool]],
    env: EvalEnv,
    rng: random.Random,
) -> dict[tuple[int, int], int] | None:
    """Place every touched cell; returns seeded concrete memory or None.

    Input cells get sampled values (recorded in ``env.mem`` under their
    text); every cell's byte range must stay disjoint from the others.
    """
    placed: list[tuple[int, int, str]] = []
    seeds: dict[tuple[int, int], int] = {}
    pending = list(cells)
    for _ in range(len(cells) + 1):
        if not pending:
            break
        progressed = False
        still = []
        for text, width, addr, is_input in pending:
            try:
                addr_v = eval_expr(addr, env) & _mask(addr.width)
            except EvalError:
                still.append((text, width, addr, is_input))
                continue
            progressed = True
            placed.append((addr_v, width // 8, text))
            if is_input:
                value = _sample(rng) & _mask(width)
                env.mem[text] = value
                seeds[(addr_v, width)] = value
        pending = still
        if not progressed:
            return None
    if pending:
        return None
    by_start = sorted(placed)
    for (a, size_a, text_a), (b, size_b, text_b) in zip(by_start, by_start[1:]):
        if text_a != text_b and a + size_a > b:
            return None  # distinct texts on overlapping bytes: resample
    return seeds


def differential_check(
    instructions: list[Instruction],
    reps: RepresentativeSet,
    n_inputs: int = 100,
    seed: int = 0,
) -> DifferentialReport:
    """Replay a strand concretely on random inputs and compare every
    assignment's predicted value with the machine's final state."""
    report = DifferentialReport(reps.strand_id)
    if any(isinstance(a.target, CallTarget) for a in reps.assigns):
        return report  # calls have no concrete side to compare against
    try:
        cells = touched_memory(instructions)
    except SymExecError:
        return report
    rng = random.Random(seed)
    attempts = 0
    while report.samples < n_inputs and attempts < n_inputs * 4:
        attempts += 1
        regs = {fam: _sample(rng) for fam in GPR_FAMILIES}
        regs["rip"] = _sample(rng)
        env = EvalEnv(regs=dict(regs), mem={})
        seeds = _resolve_cells(cells, env, rng)
        if seeds is None:
            report.skipped += 1
            continue
        fallback = random.Random(rng.getrandbits(32))
        machine = ConcreteMachine(
            regs=regs,
            mem=seeds,
            input_fn=lambda kind, key, width: fallback.getrandbits(width),
        )
        try:
            machine.run(instructions)
        except ConcreteFault:
            report.skipped += 1
            continue
        try:
            self_check = _compare(machine, reps, env)
        except EvalError:
            report.skipped += 1
            continue
        report.samples += 1
        report.mismatches.extend(self_check)
    return report


def _compare(
    machine: ConcreteMachine, reps: RepresentativeSet, env: EvalEnv
) -> list[str]:
    problems = []
    for assign in reps.assigns:
        target = assign.target
        if isinstance(target, RegTarget):
            want = eval_expr(assign.expr, env)
            got = machine.regs.get(target.name)
            if got != want:
                problems.append(
                    f"{reps.strand_id}: {assign} expected {want:#x} got "
                    f"{got:#x}"
                )
        elif isinstance(target, MemTarget):
            want = eval_expr(assign.expr, env)
            addr = eval_expr(target.addr, env) & _mask(target.addr.width)
            got = machine.mem.get((addr, assign.expr.width))
            if got != want:
                problems.append(
                    f"{reps.strand_id}: {assign} expected {want:#x} got "
                    f"{got!r}"
                )
        elif isinstance(target, PredTarget):
            want = bool(eval_expr(assign.expr, env))
            if machine.branch_taken is not want:
                problems.append(
                    f"{reps.strand_id}: predicate {assign} expected "
                    f"{want} got {machine.branch_taken}"
                )
    return problems
