"""Symbolic and concrete execution of instruction strands."""

from strandforge.symx.expr import (  # noqa: F401
    SymExpr, Const, Imm, InputReg, InputMem, BinOp, UnOp, Extract, Cmp, Call,
    SymAssign, RegTarget, MemTarget, PredTarget, CallTarget,
    to_text, assign_to_text, parse_expr, parse_assign,
    simplify, expr_equal, assign_equal, iter_inputs, eval_expr, EvalEnv,
    ExprError, ParseError, EvalError,
)
# engine and concrete pull in the instruction layer, which itself uses
# expr; load them on first attribute access to keep imports acyclic
_LAZY = {
    "RepresentativeSet": "engine", "SymExecError": "engine",
    "UnsupportedForExec": "engine", "execute_strand": "engine",
    "execute_instructions": "engine", "strand_inputs": "engine",
    "touched_memory": "engine",
    "ConcreteError": "concrete", "ConcreteFault": "concrete",
    "ConcreteMachine": "concrete", "DifferentialReport": "concrete",
    "differential_check": "concrete",
}


def __getattr__(name: str):
    module = _LAZY.get(name)
    if module is None:
        raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
    from importlib import import_module

    return getattr(import_module(f"{__name__}.{module}"), name)
