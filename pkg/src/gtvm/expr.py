"""Expression IR and evaluator for check() constraints and rule bodies.

The language is the closed subset the transformation corpus uses: literals,
variables, value()/name() reads, `+` (integer addition or string
concatenation) and `==`/`!=`. Undefined is modelled as ``None`` and renders
as the literal string "undef" when concatenated.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import ExecError

UNDEF = None


@dataclass(frozen=True)
class Lit:
    value: int | str | None  # None is the undef literal


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class ValueOf:
    arg: "Expr"


@dataclass(frozen=True)
class NameOf:
    arg: "Expr"


@dataclass(frozen=True)
class BinOp:
    op: str  # '+', '==', '!='
    left: "Expr"
    right: "Expr"


Expr = Lit | Var | ValueOf | NameOf | BinOp


def expr_vars(e: Expr) -> set[str]:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, (ValueOf, NameOf)):
        return expr_vars(e.arg)
    if isinstance(e, BinOp):
        return expr_vars(e.left) | expr_vars(e.right)
    return set()


def _as_text(v) -> str:
    if v is UNDEF:
        return "undef"
    return str(v)


def eval_expr(e: Expr, lookup, space):
    """Evaluate ``e``; ``lookup(name)`` supplies variable values."""
    if isinstance(e, Lit):
        return e.value
    if isinstance(e, Var):
        return lookup(e.name)
    if isinstance(e, ValueOf):
        eid = _element_arg(e.arg, lookup, space, "value")
        return space.value(eid)
    if isinstance(e, NameOf):
        eid = _element_arg(e.arg, lookup, space, "name")
        return space.name(eid)
    if isinstance(e, BinOp):
        lv = eval_expr(e.left, lookup, space)
        rv = eval_expr(e.right, lookup, space)
        if e.op == "==":
            return lv == rv
        if e.op == "!=":
            return lv != rv
        if e.op == "+":
            if isinstance(lv, int) and isinstance(rv, int):
                return lv + rv
            if isinstance(lv, str) or isinstance(rv, str):
                return _as_text(lv) + _as_text(rv)
            raise ExecError(f"cannot add {_as_text(lv)} and {_as_text(rv)}")
        raise ExecError(f"unknown operator {e.op!r}")
    raise ExecError(f"cannot evaluate {e!r}")


def _element_arg(e: Expr, lookup, space, fn: str) -> int:
    v = eval_expr(e, lookup, space)
    if not isinstance(v, int) or not space.is_live(v):
        raise ExecError(f"{fn}() needs a live element, got {_as_text(v)}")
    return v


def render_expr(e: Expr) -> str:
    """Canonical VTCL text of an expression (for the pretty printer)."""
    if isinstance(e, Lit):
        if e.value is UNDEF:
            return "undef"
        if isinstance(e.value, str):
            escaped = e.value.replace("\\", "\\\\").replace('"', '\\"')
            return f'"{escaped}"'
        return str(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, ValueOf):
        return f"value({render_expr(e.arg)})"
    if isinstance(e, NameOf):
        return f"name({render_expr(e.arg)})"
    if isinstance(e, BinOp):
        return f"({render_expr(e.left)} {e.op} {render_expr(e.right)})"
    raise AssertionError(e)
