"""x86-64 register, flag and condition-code tables.

Registers are modeled as (family, byte-range) pairs over the sixteen general
purpose 64-bit families plus rip; ``eax`` is bytes [0, 4) of the ``rax``
family, ``ah`` is byte [1, 2). Two registers overlap when they share a family
and their byte ranges intersect. The x87/SIMD names are carried as opaque
one-off families so such instructions can be parsed and classified without
being executed.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

__all__ = [
    "GPR_FAMILIES",
    "ARG_REGISTERS",
    "RegisterId",
    "Flag",
    "Cond",
    "COND_ALIASES",
    "COND_FLAGS",
    "register_by_name",
    "subregister_name",
]

GPR_FAMILIES: tuple[str, ...] = (
    "rax", "rbx", "rcx", "rdx", "rsi", "rdi", "rbp", "rsp",
    "r8", "r9", "r10", "r11", "r12", "r13", "r14", "r15",
)

# SysV AMD64 integer argument registers, in convention order.
ARG_REGISTERS: tuple[str, ...] = ("rdi", "rsi", "rdx", "rcx", "r8", "r9")

# ── name tables ──────────────────────────────────────────────────────────

_SPANS: dict[str, tuple[str, int, int]] = {}


def _add(family: str, name: str, lo: int, hi: int) -> None:
    _SPANS[name] = (family, lo, hi)


for _fam, _e, _w, _b in (
    ("rax", "eax", "ax", "al"),
    ("rbx", "ebx", "bx", "bl"),
    ("rcx", "ecx", "cx", "cl"),
    ("rdx", "edx", "dx", "dl"),
):
    _add(_fam, _fam, 0, 8)
    _add(_fam, _e, 0, 4)
    _add(_fam, _w, 0, 2)
    _add(_fam, _b, 0, 1)
    _add(_fam, _b[0] + "h", 1, 2)

for _fam, _e, _w, _b in (
    ("rsi", "esi", "si", "sil"),
    ("rdi", "edi", "di", "dil"),
    ("rbp", "ebp", "bp", "bpl"),
    ("rsp", "esp", "sp", "spl"),
):
    _add(_fam, _fam, 0, 8)
    _add(_fam, _e, 0, 4)
    _add(_fam, _w, 0, 2)
    _add(_fam, _b, 0, 1)

for _n in range(8, 16):
    _fam = f"r{_n}"
    _add(_fam, _fam, 0, 8)
    _add(_fam, _fam + "d", 0, 4)
    _add(_fam, _fam + "w", 0, 2)
    _add(_fam, _fam + "b", 0, 1)

_add("rip", "rip", 0, 8)
_add("rip", "eip", 0, 4)

# Opaque vector / x87 families: parsed and classified, never executed.
OPAQUE_REGISTERS: frozenset[str] = frozenset(
    [f"xmm{i}" for i in range(16)]
    + [f"ymm{i}" for i in range(16)]
    + [f"st{i}" for i in range(8)]
    + ["st"]
)
for _name in OPAQUE_REGISTERS:
    _add(_name, _name, 0, 16)

# span -> preferred name, used when printing a sub-register extract.
_SPAN_NAMES: dict[tuple[str, int, int], str] = {}
for _name, _span in _SPANS.items():
    _SPAN_NAMES.setdefault(_span, _name)

del _fam, _e, _w, _b, _n, _name, _span


@dataclass(frozen=True, slots=True)
class RegisterId:
    """A named slice of an architectural register family.

    ``lo``/``hi`` are a half-open byte range within the 8-byte family
    storage, so ``eax`` is (rax, 0, 4) and ``ah`` is (rax, 1, 2).
    """

    family: str
    lo: int
    hi: int

    @property
    def size(self) -> int:
        return self.hi - self.lo

    @property
    def bits(self) -> int:
        return self.size * 8

    @property
    def name(self) -> str:
        return _SPAN_NAMES.get(
            (self.family, self.lo, self.hi),
            f"{self.family}[{self.lo}:{self.hi}]",
        )

    def widen(self) -> "RegisterId":
        """The full-width register of this family (rax for al/ah/ax/eax)."""
        if self.family in OPAQUE_REGISTERS:
            return RegisterId(self.family, 0, 16)
        return RegisterId(self.family, 0, 8)

    def overlaps(self, other: "RegisterId") -> bool:
        return (
            self.family == other.family
            and self.lo < other.hi
            and other.lo < self.hi
        )

    def is_gpr(self) -> bool:
        return self.family in GPR_FAMILIES


def register_by_name(name: str) -> RegisterId | None:
    span = _SPANS.get(name.lower())
    if span is None:
        return None
    return RegisterId(*span)


def subregister_name(family: str, lo_byte: int, hi_byte: int) -> str | None:
    """Preferred register name covering bytes [lo, hi) of a family, if any."""
    return _SPAN_NAMES.get((family, lo_byte, hi_byte))


class Flag(Enum):
    ZF = "zf"
    SF = "sf"
    CF = "cf"
    OF = "of"
    PF = "pf"


class Cond(Enum):
    """Canonical condition codes (one per distinct flag predicate)."""

    E = "e"
    NE = "ne"
    S = "s"
    NS = "ns"
    G = "g"
    GE = "ge"
    L = "l"
    LE = "le"
    A = "a"
    AE = "ae"
    B = "b"
    BE = "be"
    P = "p"
    NP = "np"
    O = "o"
    NO = "no"


COND_ALIASES: dict[str, Cond] = {
    "e": Cond.E, "z": Cond.E,
    "ne": Cond.NE, "nz": Cond.NE,
    "s": Cond.S, "ns": Cond.NS,
    "g": Cond.G, "nle": Cond.G,
    "ge": Cond.GE, "nl": Cond.GE,
    "l": Cond.L, "nge": Cond.L,
    "le": Cond.LE, "ng": Cond.LE,
    "a": Cond.A, "nbe": Cond.A,
    "ae": Cond.AE, "nb": Cond.AE, "nc": Cond.AE,
    "b": Cond.B, "nae": Cond.B, "c": Cond.B,
    "be": Cond.BE, "na": Cond.BE,
    "p": Cond.P, "pe": Cond.P,
    "np": Cond.NP, "po": Cond.NP,
    "o": Cond.O,
    "no": Cond.NO,
}

COND_FLAGS: dict[Cond, frozenset[Flag]] = {
    Cond.E: frozenset({Flag.ZF}),
    Cond.NE: frozenset({Flag.ZF}),
    Cond.S: frozenset({Flag.SF}),
    Cond.NS: frozenset({Flag.SF}),
    Cond.G: frozenset({Flag.ZF, Flag.SF, Flag.OF}),
    Cond.GE: frozenset({Flag.SF, Flag.OF}),
    Cond.L: frozenset({Flag.SF, Flag.OF}),
    Cond.LE: frozenset({Flag.ZF, Flag.SF, Flag.OF}),
    Cond.A: frozenset({Flag.CF, Flag.ZF}),
    Cond.AE: frozenset({Flag.CF}),
    Cond.B: frozenset({Flag.CF}),
    Cond.BE: frozenset({Flag.CF, Flag.ZF}),
    Cond.P: frozenset({Flag.PF}),
    Cond.NP: frozenset({Flag.PF}),
    Cond.O: frozenset({Flag.OF}),
    Cond.NO: frozenset({Flag.OF}),
}
