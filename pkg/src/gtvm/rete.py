"""Incremental (Rete-style) pattern matcher.

Non-recursive patterns compile into a dataflow network fed by model-space
change events: alpha memories per conforming type, hash joins, anti-joins
for negative conditions, counting nodes for match counting, and one
production memory per registered pattern. Called patterns compile to their
own production, shared across callers. After each event is processed the
production memories equal the local-search match sets by construction.
"""

from __future__ import annotations

from typing import Optional

from . import expr as ex
from .errors import MatcherError
from .modelspace import (ENTITY, ElementCreated, ElementDeleted,
                         EndpointRetargeted, ModelSpace, Renamed, TypeAdded,
                         TypeRemoved, ValueSet)
from .patterns import (CheckC, CountC, EntityC, FindC, NegC, Pattern,
                       RelationC, schedule)


class Node:
    def __init__(self, engine: "ReteEngine", schema: tuple[str, ...]):
        self.engine = engine
        self.schema = schema
        self.children: list[tuple["Node", object]] = []
        engine.nodes.append(self)

    def add_child(self, child: "Node", tag) -> None:
        self.children.append((child, tag))

    def emit(self, t: tuple, sign: int) -> None:
        for child, tag in self.children:
            child.on_delta(tag, t, sign)

    def all_tuples(self):
        raise NotImplementedError

    def on_delta(self, tag, t, sign):  # pragma: no cover - leaf nodes
        raise NotImplementedError


class SeedNode(Node):
    """Single empty tuple; left input for bodies with no positive constraint."""

    def __init__(self, engine):
        super().__init__(engine, ())

    def all_tuples(self):
        return [()]


class EntityAlpha(Node):
    def __init__(self, engine, type_name: str):
        super().__init__(engine, ("$e",))
        self.type = type_name
        self.counts: dict[int, int] = {}
        space = engine.space
        for eid in space.elements_of_type(type_name):
            self.counts[eid] = sum(
                1 for t in space.element(eid).types
                if type_name in space.registry.supers(t))

    def adjust(self, eid: int, delta: int) -> None:
        old = self.counts.get(eid, 0)
        new = old + delta
        if new <= 0:
            self.counts.pop(eid, None)
        else:
            self.counts[eid] = new
        if old == 0 and new > 0:
            self.emit((eid,), +1)
        elif old > 0 and new <= 0:
            self.emit((eid,), -1)

    def drop(self, eid: int) -> None:
        if self.counts.pop(eid, None):
            self.emit((eid,), -1)

    def all_tuples(self):
        return [(eid,) for eid in self.counts]


class RelationAlpha(Node):
    def __init__(self, engine, type_name: Optional[str]):
        super().__init__(engine, ("$r", "$s", "$t"))
        self.type = type_name
        self.counts: dict[int, int] = {}
        self.tuples: dict[int, tuple] = {}
        space = engine.space
        rids = (space.iter_relations() if type_name is None
                else space.elements_of_type(type_name))
        for rid in rids:
            el = space.element(rid)
            if type_name is None:
                self.counts[rid] = 1
            else:
                self.counts[rid] = sum(
                    1 for t in el.types if type_name in space.registry.supers(t))
            self.tuples[rid] = (rid, el.source, el.target)

    def adjust(self, rid: int, delta: int, endpoints: tuple | None = None) -> None:
        old = self.counts.get(rid, 0)
        new = old + delta
        if new <= 0:
            self.counts.pop(rid, None)
        else:
            self.counts[rid] = new
        if old == 0 and new > 0:
            if endpoints is None:
                el = self.engine.space.element(rid)
                endpoints = (rid, el.source, el.target)
            self.tuples[rid] = endpoints
            self.emit(endpoints, +1)
        elif old > 0 and new <= 0:
            self.emit(self.tuples.pop(rid), -1)

    def drop(self, rid: int) -> None:
        if self.counts.pop(rid, None):
            self.emit(self.tuples.pop(rid), -1)

    def retarget(self, rid: int, end: str, new: int) -> None:
        if rid not in self.counts:
            return
        old_t = self.tuples[rid]
        new_t = (rid, new, old_t[2]) if end == "source" else (rid, old_t[1], new)
        self.tuples[rid] = new_t
        self.emit(old_t, -1)
        self.emit(new_t, +1)

    def all_tuples(self):
        return list(self.tuples.values())


class ContainmentAlpha(Node):
    """(element, proper ancestor) pairs; fixed at creation, gone at deletion."""

    def __init__(self, engine):
        super().__init__(engine, ("$x", "$p"))
        self.by_elem: dict[int, list[tuple]] = {}
        space = engine.space
        for eid in space.iter_elements():
            if space.kind(eid) == ENTITY:
                self.by_elem[eid] = [(eid, anc) for anc in space.ancestors(eid)]

    def add_element(self, eid: int) -> None:
        pairs = [(eid, anc) for anc in self.engine.space.ancestors(eid)]
        self.by_elem[eid] = pairs
        for t in pairs:
            self.emit(t, +1)

    def drop(self, eid: int) -> None:
        for t in self.by_elem.pop(eid, ()):
            self.emit(t, -1)

    def all_tuples(self):
        return [t for pairs in self.by_elem.values() for t in pairs]


class JoinNode(Node):
    """Hash join of a beta input with an alpha/production input."""

    def __init__(self, engine, left: Node, right: Node,
                 right_map: list[tuple[int, str]]):
        left_schema = left.schema
        self.key_entries = [(pos, var) for pos, var in right_map if var in left_schema]
        self.left_key_idx = [left_schema.index(var) for _, var in self.key_entries]
        new_vars: list[str] = []
        first_pos: dict[str, int] = {}
        eqs: list[tuple[int, int]] = []
        for pos, var in right_map:
            if var in left_schema:
                continue
            if var in first_pos:
                eqs.append((first_pos[var], pos))
            else:
                first_pos[var] = pos
                new_vars.append(var)
        self.right_eqs = eqs
        self.extract = [first_pos[v] for v in new_vars]
        super().__init__(engine, left_schema + tuple(new_vars))
        self.left_mem: dict[tuple, set] = {}
        self.right_mem: dict[tuple, set] = {}
        self.memory: dict[tuple, int] = {}
        for t in right.all_tuples():
            if self._right_ok(t):
                self.right_mem.setdefault(self._right_key(t), set()).add(t)
        for lt in left.all_tuples():
            self._left(lt, +1, propagate=False)
        left.add_child(self, "left")
        right.add_child(self, "right")

    def _right_ok(self, t) -> bool:
        return all(t[i] == t[j] for i, j in self.right_eqs)

    def _right_key(self, t) -> tuple:
        return tuple(t[pos] for pos, _ in self.key_entries)

    def _left_key(self, lt) -> tuple:
        return tuple(lt[i] for i in self.left_key_idx)

    def _merge(self, lt, rt) -> tuple:
        return lt + tuple(rt[pos] for pos in self.extract)

    def _out(self, t, sign):
        n = self.memory.get(t, 0) + sign
        if n <= 0:
            self.memory.pop(t, None)
        else:
            self.memory[t] = n
        self.emit(t, sign)

    def _left(self, lt, sign, propagate=True):
        key = self._left_key(lt)
        bucket = self.left_mem.setdefault(key, set())
        if sign > 0:
            bucket.add(lt)
        else:
            bucket.discard(lt)
            if not bucket:
                del self.left_mem[key]
        if propagate:
            for rt in self.right_mem.get(key, ()):
                self._out(self._merge(lt, rt), sign)
        else:
            for rt in self.right_mem.get(key, ()):
                t = self._merge(lt, rt)
                self.memory[t] = self.memory.get(t, 0) + 1

    def on_delta(self, tag, t, sign):
        if tag == "left":
            self._left(t, sign)
            return
        if not self._right_ok(t):
            return
        key = self._right_key(t)
        bucket = self.right_mem.setdefault(key, set())
        if sign > 0:
            bucket.add(t)
        else:
            bucket.discard(t)
            if not bucket:
                del self.right_mem[key]
        for lt in self.left_mem.get(key, ()):
            self._out(self._merge(lt, t), sign)

    def all_tuples(self):
        return list(self.memory)


class AntiJoinNode(Node):
    """Pass left tuples with no counterpart in the negated production."""

    def __init__(self, engine, left: Node, right: Node,
                 key_entries: list[tuple[int, str]], right_eqs: list[tuple[int, int]]):
        super().__init__(engine, left.schema)
        self.key_entries = key_entries
        self.right_eqs = right_eqs
        self.left_key_idx = [left.schema.index(var) for _, var in key_entries]
        self.left_mem: dict[tuple, set] = {}
        self.right_counts: dict[tuple, int] = {}
        for t in right.all_tuples():
            if self._right_ok(t):
                k = self._right_key(t)
                self.right_counts[k] = self.right_counts.get(k, 0) + 1
        for lt in left.all_tuples():
            self.left_mem.setdefault(self._left_key(lt), set()).add(lt)
        left.add_child(self, "left")
        right.add_child(self, "right")

    def _right_ok(self, t):
        return all(t[i] == t[j] for i, j in self.right_eqs)

    def _right_key(self, t):
        return tuple(t[pos] for pos, _ in self.key_entries)

    def _left_key(self, lt):
        return tuple(lt[i] for i in self.left_key_idx)

    def on_delta(self, tag, t, sign):
        if tag == "left":
            key = self._left_key(t)
            bucket = self.left_mem.setdefault(key, set())
            if sign > 0:
                bucket.add(t)
            else:
                bucket.discard(t)
                if not bucket:
                    del self.left_mem[key]
            if self.right_counts.get(key, 0) == 0:
                self.emit(t, sign)
            return
        if not self._right_ok(t):
            return
        key = self._right_key(t)
        old = self.right_counts.get(key, 0)
        new = old + sign
        if new <= 0:
            self.right_counts.pop(key, None)
        else:
            self.right_counts[key] = new
        if old == 0 and new > 0:
            for lt in self.left_mem.get(key, ()):
                self.emit(lt, -1)
        elif old > 0 and new == 0:
            for lt in self.left_mem.get(key, ()):
                self.emit(lt, +1)

    def all_tuples(self):
        return [lt for key, bucket in self.left_mem.items()
                if self.right_counts.get(key, 0) == 0 for lt in bucket]


class CountNode(Node):
    """Append the number of matching sub-production tuples per key."""

    def __init__(self, engine, left: Node, right: Node,
                 key_entries: list[tuple[int, str]], right_eqs: list[tuple[int, int]],
                 out: str):
        self.filter_mode = out in left.schema
        schema = left.schema if self.filter_mode else left.schema + (out,)
        super().__init__(engine, schema)
        self.out_idx = left.schema.index(out) if self.filter_mode else None
        self.key_entries = key_entries
        self.right_eqs = right_eqs
        self.left_key_idx = [left.schema.index(var) for _, var in key_entries]
        self.left_mem: dict[tuple, set] = {}
        self.right_counts: dict[tuple, int] = {}
        for t in right.all_tuples():
            if self._right_ok(t):
                k = self._right_key(t)
                self.right_counts[k] = self.right_counts.get(k, 0) + 1
        for lt in left.all_tuples():
            self.left_mem.setdefault(self._left_key(lt), set()).add(lt)
        left.add_child(self, "left")
        right.add_child(self, "right")

    def _right_ok(self, t):
        return all(t[i] == t[j] for i, j in self.right_eqs)

    def _right_key(self, t):
        return tuple(t[pos] for pos, _ in self.key_entries)

    def _left_key(self, lt):
        return tuple(lt[i] for i in self.left_key_idx)

    def _emit_for(self, lt, n, sign):
        if self.filter_mode:
            if lt[self.out_idx] == n:
                self.emit(lt, sign)
        else:
            self.emit(lt + (n,), sign)

    def on_delta(self, tag, t, sign):
        if tag == "left":
            key = self._left_key(t)
            bucket = self.left_mem.setdefault(key, set())
            if sign > 0:
                bucket.add(t)
            else:
                bucket.discard(t)
                if not bucket:
                    del self.left_mem[key]
            self._emit_for(t, self.right_counts.get(key, 0), sign)
            return
        if not self._right_ok(t):
            return
        key = self._right_key(t)
        old = self.right_counts.get(key, 0)
        new = old + sign
        if new <= 0:
            self.right_counts.pop(key, None)
        else:
            self.right_counts[key] = new
        if old != new:
            for lt in self.left_mem.get(key, ()):
                self._emit_for(lt, old, -1)
                self._emit_for(lt, new, +1)

    def all_tuples(self):
        out = []
        for key, bucket in self.left_mem.items():
            n = self.right_counts.get(key, 0)
            for lt in bucket:
                if self.filter_mode:
                    if lt[self.out_idx] == n:
                        out.append(lt)
                else:
                    out.append(lt + (n,))
        return out


class CheckNode(Node):
    """check() filter; rescans on value/name changes of the model."""

    def __init__(self, engine, left: Node, expr: ex.Expr):
        super().__init__(engine, left.schema)
        self.expr = expr
        self.mem: set[tuple] = set()
        self.passing: set[tuple] = set()
        for lt in left.all_tuples():
            self.mem.add(lt)
            if self._passes(lt):
                self.passing.add(lt)
        left.add_child(self, "left")
        engine.check_nodes.append(self)

    def _passes(self, lt) -> bool:
        env = dict(zip(self.schema, lt))
        try:
            return ex.eval_expr(self.expr, env.__getitem__, self.engine.space) is True
        except Exception:
            return False

    def on_delta(self, tag, t, sign):
        if sign > 0:
            self.mem.add(t)
            if self._passes(t):
                self.passing.add(t)
                self.emit(t, +1)
        else:
            self.mem.discard(t)
            if t in self.passing:
                self.passing.discard(t)
                self.emit(t, -1)

    def rescan(self) -> None:
        for t in list(self.mem):
            now = self._passes(t)
            was = t in self.passing
            if now and not was:
                self.passing.add(t)
                self.emit(t, +1)
            elif was and not now:
                self.passing.discard(t)
                self.emit(t, -1)

    def all_tuples(self):
        return list(self.passing)


class InjectivityNode(Node):
    """Drop tuples where two element-valued variables alias."""

    def __init__(self, engine, left: Node, positions: list[int]):
        super().__init__(engine, left.schema)
        self.positions = positions
        self.left = left
        left.add_child(self, "left")

    def _ok(self, t) -> bool:
        vals = [t[i] for i in self.positions]
        return len(vals) == len(set(vals))

    def on_delta(self, tag, t, sign):
        if self._ok(t):
            self.emit(t, sign)

    def all_tuples(self):
        return [t for t in self.left.all_tuples() if self._ok(t)]


class ProjectNode(Node):
    def __init__(self, engine, left: Node, positions: list[int], schema):
        super().__init__(engine, schema)
        self.positions = positions
        self.counts: dict[tuple, int] = {}
        for lt in left.all_tuples():
            t = tuple(lt[i] for i in self.positions)
            self.counts[t] = self.counts.get(t, 0) + 1
        left.add_child(self, "left")

    def on_delta(self, tag, lt, sign):
        t = tuple(lt[i] for i in self.positions)
        old = self.counts.get(t, 0)
        new = old + sign
        if new <= 0:
            self.counts.pop(t, None)
        else:
            self.counts[t] = new
        if old == 0 and new > 0:
            self.emit(t, +1)
        elif old > 0 and new == 0:
            self.emit(t, -1)

    def all_tuples(self):
        return list(self.counts)


class ProductionNode(Node):
    """Per-pattern match memory with an append-only delta log."""

    def __init__(self, engine, pattern: Pattern, bodies: list[Node]):
        super().__init__(engine, pattern.params)
        self.pattern = pattern
        self.counts: dict[tuple, int] = {}
        self.log: list[tuple[tuple, int]] = []
        for node in bodies:
            for t in node.all_tuples():
                self.counts[t] = self.counts.get(t, 0) + 1
        for node in bodies:
            node.add_child(self, "body")

    def on_delta(self, tag, t, sign):
        old = self.counts.get(t, 0)
        new = old + sign
        if new <= 0:
            self.counts.pop(t, None)
        else:
            self.counts[t] = new
        if old == 0 and new > 0:
            self.log.append((t, +1))
            self.emit(t, +1)
        elif old > 0 and new == 0:
            self.log.append((t, -1))
            self.emit(t, -1)

    def match_tuples(self) -> set[tuple]:
        return set(self.counts)

    def matches(self) -> list[dict]:
        return [dict(zip(self.schema, t)) for t in self.counts]

    def count(self) -> int:
        return len(self.counts)

    def cursor(self) -> int:
        return len(self.log)

    def delta_since(self, cursor: int) -> tuple[set, set]:
        net: dict[tuple, int] = {}
        for t, sign in self.log[cursor:]:
            net[t] = net.get(t, 0) + sign
        appeared = {t for t, n in net.items() if n > 0}
        disappeared = {t for t, n in net.items() if n < 0}
        return appeared, disappeared

    def all_tuples(self):
        return list(self.counts)


class ReteEngine:
    """Network manager; one instance per (space, pattern set)."""

    def __init__(self, space: ModelSpace, patterns: dict[str, Pattern]):
        self.space = space
        self.patterns = patterns
        self.nodes: list[Node] = []
        self.check_nodes: list[CheckNode] = []
        self.productions: dict[str, ProductionNode] = {}
        self._ent_alphas: dict[str, EntityAlpha] = {}
        self._rel_alphas: dict[Optional[str], RelationAlpha] = {}
        self._containment: ContainmentAlpha | None = None
        self._seed: SeedNode | None = None
        space.subscribe(self._on_change)

    def close(self) -> None:
        self.space.unsubscribe(self._on_change)

    def on_change(self, ev) -> None:
        """Feed one change event; normally driven by the space subscription."""
        self._on_change(ev)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    # -- network building ----------------------------------------------------

    def _seed_node(self) -> SeedNode:
        if self._seed is None:
            self._seed = SeedNode(self)
        return self._seed

    def _entity_alpha(self, type_name: str) -> EntityAlpha:
        node = self._ent_alphas.get(type_name)
        if node is None:
            node = EntityAlpha(self, type_name)
            self._ent_alphas[type_name] = node
        return node

    def _relation_alpha(self, type_name: Optional[str]) -> RelationAlpha:
        node = self._rel_alphas.get(type_name)
        if node is None:
            node = RelationAlpha(self, type_name)
            self._rel_alphas[type_name] = node
        return node

    def _containment_alpha(self) -> ContainmentAlpha:
        if self._containment is None:
            self._containment = ContainmentAlpha(self)
        return self._containment

    def register(self, name: str) -> ProductionNode:
        prod = self.productions.get(name)
        if prod is not None:
            return prod
        pattern = self.patterns[name]
        if pattern.requires_ls:
            reason = "recursive" if pattern.recursive else "@localsearch"
            raise MatcherError(
                f"pattern {name} is {reason}; use the local-search matcher (ls)")
        for body in pattern.bodies:
            for c in body.constraints:
                if isinstance(c, (FindC, NegC, CountC)):
                    self.register(c.pattern)
        bodies = [self._compile_body(pattern, body) for body in pattern.bodies]
        prod = ProductionNode(self, pattern, bodies)
        self.productions[name] = prod
        return prod

    def _compile_body(self, pattern: Pattern, body) -> Node:
        plan = schedule(body.constraints, pattern.params, frozenset())
        current: Node = self._seed_node()
        for c in plan:
            if isinstance(c, EntityC):
                current = JoinNode(self, current, self._entity_alpha(c.type),
                                   [(0, c.var)])
                if c.in_var is not None:
                    # `in <namespace>` is vacuous (everything is under root)
                    current = JoinNode(self, current, self._containment_alpha(),
                                       [(0, c.var), (1, c.in_var)])
            elif isinstance(c, RelationC):
                current = JoinNode(self, current, self._relation_alpha(c.type),
                                   [(0, c.rel), (1, c.src), (2, c.trg)])
            elif isinstance(c, FindC):
                right = self.productions[c.pattern]
                current = JoinNode(self, current, right,
                                   [(i, a) for i, a in enumerate(c.args)])
            elif isinstance(c, (NegC, CountC)):
                right = self.productions[c.pattern]
                key_entries = []
                first: dict[str, int] = {}
                eqs = []
                for i, a in enumerate(c.args):
                    if a in current.schema:
                        key_entries.append((i, a))
                    elif a in first:
                        eqs.append((first[a], i))
                    else:
                        first[a] = i
                if isinstance(c, NegC):
                    current = AntiJoinNode(self, current, right, key_entries, eqs)
                else:
                    current = CountNode(self, current, right, key_entries, eqs, c.out)
            elif isinstance(c, CheckC):
                current = CheckNode(self, current, c.expr)
            else:
                raise AssertionError(c)
        if not pattern.shareable:
            positions = [i for i, var in enumerate(current.schema)
                         if var in body.info.element_vars]
            if len(positions) > 1:
                current = InjectivityNode(self, current, positions)
        try:
            positions = [current.schema.index(p) for p in pattern.params]
        except ValueError:
            raise MatcherError(
                f"pattern {pattern.name} has a parameter bound only under "
                f"neg find; it cannot be enumerated") from None
        return ProjectNode(self, current, positions, pattern.params)

    # -- queries ---------------------------------------------------------------

    def matches(self, name: str) -> set[tuple]:
        return self.register(name).match_tuples()

    def count(self, name: str) -> int:
        return self.register(name).count()

    # -- event dispatch ----------------------------------------------------------

    def _on_change(self, ev) -> None:
        supers = self.space.registry.supers
        if isinstance(ev, ElementCreated):
            if ev.kind == ENTITY:
                for t in ev.types:
                    for s in supers(t):
                        alpha = self._ent_alphas.get(s)
                        if alpha is not None:
                            alpha.adjust(ev.subject, +1)
                if self._containment is not None:
                    self._containment.add_element(ev.subject)
            else:
                endpoints = (ev.subject, ev.source, ev.target)
                untyped = self._rel_alphas.get(None)
                if untyped is not None:
                    untyped.adjust(ev.subject, +1, endpoints)
                for t in ev.types:
                    for s in supers(t):
                        alpha = self._rel_alphas.get(s)
                        if alpha is not None:
                            alpha.adjust(ev.subject, +1, endpoints)
        elif isinstance(ev, ElementDeleted):
            if ev.kind == ENTITY:
                for alpha in self._ent_alphas.values():
                    alpha.drop(ev.subject)
                if self._containment is not None:
                    self._containment.drop(ev.subject)
            else:
                for alpha in self._rel_alphas.values():
                    alpha.drop(ev.subject)
        elif isinstance(ev, TypeAdded):
            kind = self.space.registry.kind(ev.type)
            for s in supers(ev.type):
                if kind == ENTITY:
                    alpha = self._ent_alphas.get(s)
                    if alpha is not None:
                        alpha.adjust(ev.subject, +1)
                else:
                    alpha = self._rel_alphas.get(s)
                    if alpha is not None:
                        alpha.adjust(ev.subject, +1)
        elif isinstance(ev, TypeRemoved):
            kind = self.space.registry.kind(ev.type)
            for s in supers(ev.type):
                if kind == ENTITY:
                    alpha = self._ent_alphas.get(s)
                    if alpha is not None:
                        alpha.adjust(ev.subject, -1)
                else:
                    alpha = self._rel_alphas.get(s)
                    if alpha is not None:
                        alpha.adjust(ev.subject, -1)
        elif isinstance(ev, EndpointRetargeted):
            for alpha in self._rel_alphas.values():
                alpha.retarget(ev.subject, ev.end, ev.new)
        elif isinstance(ev, (ValueSet, Renamed)):
            for node in self.check_nodes:
                node.rescan()
