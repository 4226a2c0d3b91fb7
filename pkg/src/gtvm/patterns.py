"""Graph-pattern intermediate representation.

A pattern is a named, parameterized disjunction of bodies; a body is an
ordered list of constraints over variables that bind model elements (or, for
match-count outputs, integers). Matching is injective per body over
element-valued variables unless the pattern is declared ``shareable``; a
``find`` into another pattern is membership of the argument tuple in the
callee's own match set, so a shareable callee may alias internally.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Iterable, Mapping, Optional

from . import expr as ex
from .errors import PatternError
from .modelspace import ENTITY, RELATION, TypeRegistry


@dataclass(frozen=True)
class EntityC:
    """``T(X)`` optionally with ``in P`` / ``in <namespace>`` containment."""
    type: str
    var: str
    in_var: Optional[str] = None
    in_root: bool = False


@dataclass(frozen=True)
class RelationC:
    """``T.r(R,X,Y)``; ``type is None`` is the untyped ``relation(R,X,Y)``."""
    type: Optional[str]
    rel: str
    src: str
    trg: str


@dataclass(frozen=True)
class FindC:
    pattern: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class NegC:
    pattern: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class CountC:
    pattern: str
    args: tuple[str, ...]
    out: str


@dataclass(frozen=True)
class CheckC:
    expr: ex.Expr


Constraint = EntityC | RelationC | FindC | NegC | CountC | CheckC


def constraint_vars(c: Constraint) -> tuple[str, ...]:
    if isinstance(c, EntityC):
        return (c.var,) if c.in_var is None else (c.var, c.in_var)
    if isinstance(c, RelationC):
        return (c.rel, c.src, c.trg)
    if isinstance(c, (FindC, NegC)):
        return tuple(c.args)
    if isinstance(c, CountC):
        return tuple(c.args) + (c.out,)
    return tuple(ex.expr_vars(c.expr))


@dataclass
class Body:
    constraints: tuple[Constraint, ...]

    def __post_init__(self):
        self.constraints = tuple(self.constraints)

    def vars(self) -> list[str]:
        seen = dict()
        for c in self.constraints:
            for v in constraint_vars(c):
                seen.setdefault(v, None)
        return list(seen)


@dataclass
class Pattern:
    name: str
    params: tuple[str, ...]
    bodies: tuple[Body, ...]
    shareable: bool = False
    localsearch: bool = False
    # derived during validate_patterns
    requires_ls: bool = field(default=False, compare=False)
    recursive: bool = field(default=False, compare=False)
    int_params: frozenset[str] = field(default=frozenset(), compare=False)

    def __post_init__(self):
        self.params = tuple(self.params)
        self.bodies = tuple(self.bodies)


class BodyInfo:
    """Per-body variable classification, computed during validation."""

    def __init__(self):
        self.positive: set[str] = set()       # vars with a positive binder
        self.int_vars: set[str] = set()       # count outputs / int-valued find args
        self.element_vars: set[str] = set()   # vars subject to injectivity
        self.shared_neg_args: dict[int, tuple[int, ...]] = {}  # constraint idx -> bound positions


def _analyze_body(pattern: Pattern, body: Body,
                  patterns: Mapping[str, Pattern]) -> BodyInfo:
    info = BodyInfo()
    for c in body.constraints:
        if isinstance(c, EntityC):
            info.positive.add(c.var)
            info.element_vars.add(c.var)
            if c.in_var is not None:
                info.positive.add(c.in_var)
                info.element_vars.add(c.in_var)
        elif isinstance(c, RelationC):
            info.positive.update((c.rel, c.src, c.trg))
            info.element_vars.update((c.rel, c.src, c.trg))
        elif isinstance(c, FindC):
            callee = patterns.get(c.pattern)
            for i, a in enumerate(c.args):
                info.positive.add(a)
                if callee is not None and callee.params[i] in callee.int_params:
                    info.int_vars.add(a)
                else:
                    info.element_vars.add(a)
        elif isinstance(c, CountC):
            info.positive.add(c.out)
            info.int_vars.add(c.out)

    for idx, c in enumerate(body.constraints):
        if isinstance(c, (NegC, CountC)):
            # args without a positive binder are existential inside this one
            # constraint; the same name in another neg/count is a separate
            # quantifier, as in the library's isolatedNode
            shared = tuple(i for i, a in enumerate(c.args)
                           if a in info.positive or a in pattern.params)
            info.shared_neg_args[idx] = shared

    for c in body.constraints:
        if isinstance(c, CheckC):
            for v in ex.expr_vars(c.expr):
                if v not in info.positive and v not in pattern.params:
                    raise PatternError(
                        f"{pattern.name}: check() uses {v} which has no positive binder")
    info.element_vars -= info.int_vars
    return info


def validate_patterns(patterns: Mapping[str, Pattern], registry: TypeRegistry) -> None:
    """Validate a closed set of patterns: arities, kinds, scoping, recursion.

    Sets the derived ``requires_ls``/``recursive``/``int_params`` flags and
    attaches per-body :class:`BodyInfo` (as ``body.info``).
    """
    # int-valued parameter discovery needs a fixpoint through find calls
    for p in patterns.values():
        p.int_params = frozenset()
    changed = True
    while changed:
        changed = False
        for p in patterns.values():
            ints = set(p.int_params)
            for body in p.bodies:
                for c in body.constraints:
                    if isinstance(c, CountC) and c.out in p.params:
                        ints.add(c.out)
                    if isinstance(c, FindC) and c.pattern in patterns:
                        callee = patterns[c.pattern]
                        for i, a in enumerate(c.args):
                            if a in p.params and callee.params[i] in callee.int_params:
                                ints.add(a)
            if frozenset(ints) != p.int_params:
                p.int_params = frozenset(ints)
                changed = True

    for p in patterns.values():
        if len(set(p.params)) != len(p.params):
            raise PatternError(f"{p.name}: duplicate parameters")
        if not p.bodies:
            raise PatternError(f"{p.name}: pattern has no body")
        for body in p.bodies:
            for c in body.constraints:
                if isinstance(c, EntityC):
                    if registry.kind(c.type) != ENTITY:
                        raise PatternError(f"{p.name}: {c.type} is not an entity type")
                elif isinstance(c, RelationC):
                    if c.type is not None and registry.kind(c.type) != RELATION:
                        raise PatternError(f"{p.name}: {c.type} is not a relation type")
                elif isinstance(c, (FindC, NegC, CountC)):
                    callee = patterns.get(c.pattern)
                    if callee is None:
                        raise PatternError(f"{p.name}: unknown pattern {c.pattern}")
                    if len(c.args) != len(callee.params):
                        raise PatternError(
                            f"{p.name}: {c.pattern} takes {len(callee.params)} "
                            f"arguments, got {len(c.args)}")
            body_vars = set(body.vars())
            for param in p.params:
                if param not in body_vars:
                    raise PatternError(f"{p.name}: parameter {param} missing from a body")
            body.info = _analyze_body(p, body, patterns)

    # call graph: recursion, stratification, local-search propagation
    refs: dict[str, set[str]] = {}
    neg_refs: dict[str, set[str]] = {}
    for p in patterns.values():
        refs[p.name] = set()
        neg_refs[p.name] = set()
        for body in p.bodies:
            for c in body.constraints:
                if isinstance(c, FindC):
                    refs[p.name].add(c.pattern)
                elif isinstance(c, (NegC, CountC)):
                    refs[p.name].add(c.pattern)
                    neg_refs[p.name].add(c.pattern)

    index = {}
    low = {}
    on_stack = {}
    stack = []
    counter = itertools.count()
    sccs: list[list[str]] = []
    scc_of: dict[str, int] = {}

    def strongconnect(root: str) -> None:
        work = [(root, iter(sorted(refs[root])))]
        index[root] = low[root] = next(counter)
        stack.append(root)
        on_stack[root] = True
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in patterns:
                    continue
                if w not in index:
                    index[w] = low[w] = next(counter)
                    stack.append(w)
                    on_stack[w] = True
                    work.append((w, iter(sorted(refs[w]))))
                    advanced = True
                    break
                elif on_stack.get(w):
                    low[v] = min(low[v], index[w])
            if not advanced:
                work.pop()
                if work:
                    parent = work[-1][0]
                    low[parent] = min(low[parent], low[v])
                if low[v] == index[v]:
                    comp = []
                    while True:
                        w = stack.pop()
                        on_stack[w] = False
                        comp.append(w)
                        if w == v:
                            break
                    cid = len(sccs)
                    sccs.append(comp)
                    for w in comp:
                        scc_of[w] = cid

    for name in sorted(patterns):
        if name not in index:
            strongconnect(name)

    for cid, comp in enumerate(sccs):
        cyclic = len(comp) > 1 or comp[0] in refs[comp[0]]
        if not cyclic:
            continue
        for name in comp:
            patterns[name].recursive = True
            for target in neg_refs[name]:
                if scc_of.get(target) == cid:
                    raise PatternError(
                        f"{name}: neg/count into the same recursion cycle ({target})")
        if not any(patterns[n].localsearch for n in comp):
            raise PatternError(
                f"recursive pattern {comp[0]} requires local search (@localsearch)")

    # requires_ls flows along call edges (condensation is acyclic, so iterate)
    for p in patterns.values():
        p.requires_ls = p.localsearch or p.recursive
    changed = True
    while changed:
        changed = False
        for p in patterns.values():
            if not p.requires_ls and any(
                    patterns[t].requires_ls for t in refs[p.name] if t in patterns):
                p.requires_ls = True
                changed = True

    for p in patterns.values():
        p.scc_id = scc_of[p.name]
        p.scc_members = tuple(sorted(sccs[scc_of[p.name]])) if p.recursive else (p.name,)


def validate(pattern: Pattern, registry: TypeRegistry,
             context: Mapping[str, Pattern] | None = None) -> None:
    """Validate one pattern against an (optional) already-valid context."""
    closed = dict(context or {})
    closed[pattern.name] = pattern
    validate_patterns(closed, registry)


# --- flattening (used by GT-rule diffing) ----------------------------------


class FlattenError(PatternError):
    pass


def flatten_body(patterns: Mapping[str, Pattern], body: Body,
                 subst: dict[str, str], fresh: Callable[[str], str]) -> list[Constraint]:
    """Inline non-recursive find calls into primitive constraints.

    Variables present in ``subst`` are renamed accordingly; other variables
    get fresh hygienic names. Neg/count constraints keep their call form.
    """
    def sub(v: str) -> str:
        if v not in subst:
            subst[v] = fresh(v)
        return subst[v]

    def sub_expr(e: ex.Expr) -> ex.Expr:
        if isinstance(e, ex.Var):
            return ex.Var(sub(e.name))
        if isinstance(e, ex.ValueOf):
            return ex.ValueOf(sub_expr(e.arg))
        if isinstance(e, ex.NameOf):
            return ex.NameOf(sub_expr(e.arg))
        if isinstance(e, ex.BinOp):
            return ex.BinOp(e.op, sub_expr(e.left), sub_expr(e.right))
        return e

    out: list[Constraint] = []
    for c in body.constraints:
        if isinstance(c, EntityC):
            out.append(EntityC(c.type, sub(c.var),
                               sub(c.in_var) if c.in_var else None, c.in_root))
        elif isinstance(c, RelationC):
            out.append(RelationC(c.type, sub(c.rel), sub(c.src), sub(c.trg)))
        elif isinstance(c, NegC):
            out.append(NegC(c.pattern, tuple(sub(a) for a in c.args)))
        elif isinstance(c, CountC):
            out.append(CountC(c.pattern, tuple(sub(a) for a in c.args), sub(c.out)))
        elif isinstance(c, CheckC):
            out.append(CheckC(sub_expr(c.expr)))
        elif isinstance(c, FindC):
            callee = patterns.get(c.pattern)
            if callee is None:
                raise FlattenError(f"unknown pattern {c.pattern}")
            if callee.recursive:
                raise FlattenError(f"cannot flatten recursive pattern {c.pattern}")
            if len(callee.bodies) != 1:
                raise FlattenError(f"cannot flatten disjunctive pattern {c.pattern}")
            inner = {param: sub(arg) for param, arg in zip(callee.params, c.args)}
            out.extend(flatten_body(patterns, callee.bodies[0], inner, fresh))
    return out


# --- constraint scheduling (shared by both matchers) ------------------------


def schedule(body_constraints: Iterable[Constraint], params: tuple[str, ...],
             bound: frozenset[str],
             size_hint: Callable[[Constraint], int] | None = None,
             shuffle=None) -> list[Constraint]:
    """Order constraints so every one only reads already-bound variables.

    Positive constraints are picked greedily (cheapest extension first);
    checks, negs, and counts are inserted as soon as their bound-variable
    requirements are met. ``shuffle`` (a random.Random) randomizes positive
    picks for plan-independence testing.
    """
    constraints = list(body_constraints)
    positive = [c for c in constraints if isinstance(c, (EntityC, RelationC, FindC))]
    deferred = [c for c in constraints if not isinstance(c, (EntityC, RelationC, FindC))]
    positive_vars: set[str] = set()
    for c in positive:
        positive_vars.update(constraint_vars(c))

    def ready(c: Constraint, have: set[str]) -> bool:
        if isinstance(c, CheckC):
            return ex.expr_vars(c.expr) <= have
        # neg/count: every arg that has a positive binder (or is a param)
        # must be bound; the rest are existential inside the sub-query
        need = {a for a in c.args if a in positive_vars or a in params}
        if isinstance(c, CountC):
            need.discard(c.out)
        return need <= have

    def cost(c: Constraint, have: set[str]) -> tuple:
        size = size_hint(c) if size_hint else 0
        if isinstance(c, RelationC):
            if c.rel in have:
                return (0, 0)
            if c.src in have or c.trg in have:
                return (1, 0)
            return (3, size) if c.type is not None else (5, size)
        if isinstance(c, EntityC):
            if c.var in have:
                return (0, 0)
            return (2, size)
        if isinstance(c, FindC):
            if all(a in have for a in c.args):
                return (0, 0)
            if any(a in have for a in c.args):
                return (2, size)
            return (4, size)
        raise AssertionError(c)

    plan: list[Constraint] = []
    have = set(bound)

    def pull_deferred():
        nonlocal deferred
        rest = []
        for c in deferred:
            if ready(c, have):
                plan.append(c)
                if isinstance(c, CountC):
                    have.add(c.out)
            else:
                rest.append(c)
        deferred = rest

    pull_deferred()
    remaining = list(positive)
    while remaining:
        if shuffle is not None:
            pick = remaining[shuffle.randrange(len(remaining))]
        else:
            pick = min(remaining, key=lambda c: cost(c, have) + (remaining.index(c),))
        remaining.remove(pick)
        plan.append(pick)
        have.update(constraint_vars(pick))
        pull_deferred()
    if deferred:
        names = [type(c).__name__ for c in deferred]
        raise PatternError(f"constraints cannot be scheduled: {names}")
    return plan


def builtin_library(registry: TypeRegistry | None = None) -> dict[str, Pattern]:
    """The shared graph-pattern library (graphPatterns), validated against
    ``registry`` (a fresh metamodel registry when omitted)."""
    from .corpus import library_program, metamodels  # local import, avoids a cycle
    program = library_program(registry if registry is not None else metamodels())
    return {name: p for name, p in program.patterns.items()
            if name.startswith("graphPatterns.")}
