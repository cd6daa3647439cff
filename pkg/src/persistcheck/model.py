"""Crash-aware events, histories, pomsets, and executions.

Two granularities coexist:

* SC histories (``History``): finite sequences of invocation / return /
  crash events with per-thread alternation, as in the classic
  linearizability setting.
* Executions (``PlainExecution`` / ``Execution``): pomsets of single-event
  method calls plus crash markers, with program order ``po`` and, for full
  executions, synchronizes-with ``sw`` and happens-before ``hb``.

Everything here is immutable after construction and safe to share across
threads.  Event identities are opaque dense integers; pomsets are identified
up to label-preserving order-isomorphism, with a bounded isomorphism check
for inputs of at most ``ISO_LIMIT`` events.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import (
    Callable,
    Dict,
    FrozenSet,
    Iterable,
    Iterator,
    List,
    Mapping,
    Optional,
    Sequence,
    Set,
    Tuple,
)

ISO_LIMIT = 64

Edge = Tuple[int, int]
Relation = FrozenSet[Edge]


class _Bot:
    """The missing-return marker (distinct from the null value ``None``)."""

    _instance: Optional["_Bot"] = None

    def __new__(cls) -> "_Bot":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "⊥"

    def __reduce__(self):
        return (_Bot, ())


#: Sentinel for "no return value yet".  ``None`` is the ordinary null value.
BOT = _Bot()


# --------------------------------------------------------------------------
# Labels
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Label:
    """A single-event method call, or a crash marker (``method is None``).

    A call with ``ret is BOT`` is incomplete; crash labels carry no method,
    arguments, return, tags, or thread.
    """

    method: Optional[str]
    args: Tuple = ()
    ret: object = BOT
    tags: FrozenSet[str] = frozenset()
    thread: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        object.__setattr__(self, "args", tuple(self.args))
        if self.method is None:
            if self.args or self.ret is not BOT or self.tags or self.thread is not None:
                raise ValueError("crash labels carry no payload")

    @property
    def is_crash(self) -> bool:
        return self.method is None

    @property
    def is_call(self) -> bool:
        return self.method is not None

    @property
    def is_complete(self) -> bool:
        """Crashes count as complete; calls are complete once they returned."""
        return self.is_crash or self.ret is not BOT

    def with_tags(self, tags: Iterable[str]) -> "Label":
        return replace(self, tags=self.tags | frozenset(tags))

    def __repr__(self) -> str:
        if self.is_crash:
            return "Crash"
        a = ",".join(repr(x) for x in self.args)
        r = "" if self.ret is BOT else f":{self.ret!r}"
        t = "" if not self.tags else "^" + "{" + ",".join(sorted(self.tags)) + "}"
        th = "" if self.thread is None else f"@t{self.thread}"
        return f"{self.method}({a}){r}{t}{th}"


CRASH = Label(method=None)

#: Label of anonymized foreign events (spec-framework global specifications).
STAR = "⋆"


def star(tags: Iterable[str], thread: Optional[int] = None) -> Label:
    return Label(STAR, (), None, frozenset(tags), thread)


# --------------------------------------------------------------------------
# SC histories
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Inv:
    method: str
    args: Tuple = ()
    thread: int = 0
    tags: FrozenSet[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "tags", frozenset(self.tags))
        object.__setattr__(self, "args", tuple(self.args))

    def __repr__(self) -> str:
        a = ",".join(repr(x) for x in self.args)
        return f"{self.method}({a})_t{self.thread}"


@dataclass(frozen=True)
class Ret:
    value: object = None
    thread: int = 0

    def __repr__(self) -> str:
        return f"ret({self.value!r})_t{self.thread}"


@dataclass(frozen=True)
class CrashEv:
    def __repr__(self) -> str:
        return "Crash"


CRASH_EV = CrashEv()

HistoryEvent = object  # Inv | Ret | CrashEv


@dataclass(frozen=True)
class Call:
    """One call of a history: an invocation plus its matching return, if any."""

    method: str
    args: Tuple
    ret: object  # BOT when incomplete
    thread: int
    tags: FrozenSet[str]
    inv_index: int
    ret_index: Optional[int]

    @property
    def is_complete(self) -> bool:
        return self.ret is not BOT

    @property
    def start(self) -> int:
        return self.inv_index

    @property
    def end(self) -> float:
        return self.ret_index if self.ret_index is not None else float("inf")

    def label(self) -> Label:
        return Label(self.method, self.args, self.ret, self.tags, self.thread)

    def __repr__(self) -> str:
        r = "" if self.ret is BOT else f":{self.ret!r}"
        return f"{self.method}({','.join(map(repr, self.args))}){r}_t{self.thread}"


class History:
    """A finite sequence of invocation/return/crash events.

    Invariants checked at construction: for each thread the subsequence of
    its events alternates invocation/return starting with an invocation, and
    thread ids appearing after a crash are disjoint from those before it.
    """

    __slots__ = ("events",)

    def __init__(self, events: Iterable[HistoryEvent]):
        evs = tuple(events)
        for e in evs:
            if not isinstance(e, (Inv, Ret, CrashEv)):
                raise TypeError(f"not a history event: {e!r}")
        per_thread: Dict[int, List[HistoryEvent]] = {}
        for e in evs:
            if isinstance(e, (Inv, Ret)):
                per_thread.setdefault(e.thread, []).append(e)
        for t, seq in per_thread.items():
            for i, e in enumerate(seq):
                want_inv = i % 2 == 0
                if want_inv != isinstance(e, Inv):
                    raise ValueError(f"thread {t} events do not alternate inv/ret")
        seen: Set[int] = set()
        before: Set[int] = set()
        for e in evs:
            if isinstance(e, CrashEv):
                before |= seen
                seen = set()
            elif isinstance(e, (Inv, Ret)):
                if e.thread in before:
                    raise ValueError(f"thread {e.thread} reused across a crash")
                seen.add(e.thread)
        object.__setattr__(self, "events", evs)

    def __setattr__(self, *a):  # pragma: no cover - immutability guard
        raise AttributeError("History is immutable")

    def __len__(self) -> int:
        return len(self.events)

    def __iter__(self):
        return iter(self.events)

    def __eq__(self, other) -> bool:
        return isinstance(other, History) and self.events == other.events

    def __hash__(self) -> int:
        return hash(self.events)

    def __repr__(self) -> str:
        return " · ".join(repr(e) for e in self.events) if self.events else "ε"

    def prefix(self, k: int) -> "History":
        """The history h[1..k] of the first k events."""
        return History(self.events[:k])

    def concat(self, other: "History") -> "History":
        return History(self.events + other.events)

    # -- projections -------------------------------------------------------

    def project_thread(self, thread: int) -> "History":
        """h[t]: the subsequence of thread t's events (crashes dropped)."""
        return History(
            e for e in self.events if isinstance(e, (Inv, Ret)) and e.thread == thread
        )

    def ops(self) -> "History":
        """The history with all crash markers removed."""
        return History(e for e in self.events if not isinstance(e, CrashEv))

    def project(self, keep: Callable[[Inv], bool]) -> "History":
        """Stable subsequence keeping invocations satisfying ``keep`` (and
        their matching returns) plus crash markers."""
        kept: List[HistoryEvent] = []
        open_kept: Dict[int, bool] = {}
        for e in self.events:
            if isinstance(e, CrashEv):
                kept.append(e)
            elif isinstance(e, Inv):
                k = keep(e)
                open_kept[e.thread] = k
                if k:
                    kept.append(e)
            else:
                if open_kept.get(e.thread, False):
                    kept.append(e)
                open_kept[e.thread] = False
        return History(kept)

    def project_calls(self, keep: Callable[[Call], bool]) -> "History":
        """Like ``project``, deciding per call (so return values are visible)."""
        chosen = {c.inv_index for c in self.calls() if keep(c)}
        kept: List[HistoryEvent] = []
        open_kept: Dict[int, bool] = {}
        for i, e in enumerate(self.events):
            if isinstance(e, CrashEv):
                kept.append(e)
            elif isinstance(e, Inv):
                k = i in chosen
                open_kept[e.thread] = k
                if k:
                    kept.append(e)
            else:
                if open_kept.get(e.thread, False):
                    kept.append(e)
                open_kept[e.thread] = False
        return History(kept)

    def project_location(
        self, x: int, loc: Callable[[Call], FrozenSet[int]]
    ) -> "History":
        """h[x]: calls whose location set is exactly {x}."""
        return self.project_calls(lambda c: loc(c) == frozenset({x}))

    # -- structure ----------------------------------------------------------

    def calls(self) -> List[Call]:
        """All calls of the history, in invocation order."""
        out: List[Call] = []
        open_call: Dict[int, int] = {}  # thread -> index into out
        for i, e in enumerate(self.events):
            if isinstance(e, Inv):
                open_call[e.thread] = len(out)
                out.append(Call(e.method, e.args, BOT, e.thread, e.tags, i, None))
            elif isinstance(e, Ret):
                j = open_call.pop(e.thread)
                c = out[j]
                out[j] = Call(c.method, c.args, e.value, c.thread, c.tags, c.inv_index, i)
        return out

    def eras(self) -> List["History"]:
        """Maximal crash-free segments, in order."""
        parts: List[List[HistoryEvent]] = [[]]
        for e in self.events:
            if isinstance(e, CrashEv):
                parts.append([])
            else:
                parts[-1].append(e)
        return [History(p) for p in parts]

    def crash_count(self) -> int:
        return sum(1 for e in self.events if isinstance(e, CrashEv))


def history_era_before(h: History) -> Set[Tuple[int, int]]:
    """eb on event indices: pairs separated by at least one crash."""
    crash_at = [i for i, e in enumerate(h.events) if isinstance(e, CrashEv)]
    eb: Set[Tuple[int, int]] = set()
    for i in range(len(h.events)):
        for j in range(i + 1, len(h.events)):
            if any(i < c < j for c in crash_at):
                eb.add((i, j))
    return eb


# --------------------------------------------------------------------------
# Relation helpers
# --------------------------------------------------------------------------


def closure(edges: Iterable[Edge]) -> Relation:
    """Transitive closure of a relation (Floyd-Warshall on successor sets)."""
    succ: Dict[int, Set[int]] = {}
    nodes: Set[int] = set()
    for a, b in edges:
        succ.setdefault(a, set()).add(b)
        nodes.add(a)
        nodes.add(b)
    changed = True
    while changed:
        changed = False
        for a in list(succ):
            new = set()
            for b in succ[a]:
                new |= succ.get(b, set())
            if not new <= succ[a]:
                succ[a] |= new
                changed = True
    return frozenset((a, b) for a, bs in succ.items() for b in bs)


def is_irreflexive(rel: Iterable[Edge]) -> bool:
    return all(a != b for a, b in rel)


def is_strict_order(rel: Relation) -> bool:
    return is_irreflexive(rel) and closure(rel) == rel


def transitive_reduction(edges: Iterable[Edge]) -> Relation:
    clo = closure(edges)
    if not is_irreflexive(clo):
        raise ValueError("relation is cyclic")
    succ: Dict[int, Set[int]] = {}
    for a, b in clo:
        succ.setdefault(a, set()).add(b)
    red = set()
    for a, bs in succ.items():
        for b in bs:
            if not any((c, b) in clo for c in bs if c != b):
                red.add((a, b))
    return frozenset(red)


def compose(r1: Iterable[Edge], r2: Iterable[Edge]) -> Relation:
    by_src: Dict[int, Set[int]] = {}
    for a, b in r2:
        by_src.setdefault(a, set()).add(b)
    return frozenset((a, c) for a, b in r1 for c in by_src.get(b, ()))


def restrict_relation(rel: Iterable[Edge], keep: Set[int]) -> Relation:
    return frozenset((a, b) for a, b in rel if a in keep and b in keep)


# --------------------------------------------------------------------------
# Generic pomsets
# --------------------------------------------------------------------------


class Pomset:
    """A finite pomset: dense integer carrier, strict partial order, labels.

    Equality (`iso_eq`) is label-preserving order-isomorphism; `==` on the
    nose is deliberately not defined beyond identity of representation.
    """

    __slots__ = ("events", "lab", "_po_red", "_po", "_hash")

    def __init__(self, labels: Sequence, order: Iterable[Edge]):
        lab = {i: l for i, l in enumerate(labels)}
        red = transitive_reduction((a, b) for a, b in order)
        for a, b in red:
            if a not in lab or b not in lab:
                raise ValueError("order mentions unknown event")
        object.__setattr__(self, "events", tuple(range(len(labels))))
        object.__setattr__(self, "lab", lab)
        object.__setattr__(self, "_po_red", red)
        object.__setattr__(self, "_po", None)
        object.__setattr__(self, "_hash", None)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Pomset is immutable")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def order(self) -> Relation:
        if self._po is None:
            object.__setattr__(self, "_po", closure(self._po_red))
        return self._po

    @property
    def reduced(self) -> Relation:
        return self._po_red

    def labels(self) -> List:
        return [self.lab[e] for e in self.events]

    def __repr__(self) -> str:
        return f"Pomset({self.labels()!r}, {sorted(self.reduced)!r})"


def _iso_signatures(events, order, lab) -> Dict[int, tuple]:
    """Stable refinement signature per event (label, pred/succ multisets)."""
    sig = {e: (repr(lab[e]),) for e in events}
    preds = {e: [a for a, b in order if b == e] for e in events}
    succs = {e: [b for a, b in order if a == e] for e in events}
    for _ in range(max(1, len(events))):
        new = {
            e: (
                sig[e],
                tuple(sorted(sig[p] for p in preds[e])),
                tuple(sorted(sig[s] for s in succs[e])),
            )
            for e in events
        }
        if len(set(new.values())) == len(set(sig.values())):
            sig = new
            break
        sig = new
    return sig


def _find_isomorphism(ev1, ord1, lab1, ev2, ord2, lab2) -> Optional[Dict[int, int]]:
    if len(ev1) != len(ev2) or len(ord1) != len(ord2):
        return None
    if len(ev1) > ISO_LIMIT:
        raise ValueError(f"isomorphism check limited to {ISO_LIMIT} events")
    sig1 = _iso_signatures(ev1, ord1, lab1)
    sig2 = _iso_signatures(ev2, ord2, lab2)
    if sorted(sig1.values()) != sorted(sig2.values()):
        return None
    order2 = set(ord2)
    candidates = {e: [f for f in ev2 if sig2[f] == sig1[e]] for e in ev1}
    ordered = sorted(ev1, key=lambda e: len(candidates[e]))
    mapping: Dict[int, int] = {}
    used: Set[int] = set()

    def ok(e: int, f: int) -> bool:
        for a, b in mapping.items():
            fwd = (a, e) in ord1
            if fwd != ((b, f) in order2):
                return False
            bwd = (e, a) in ord1
            if bwd != ((f, b) in order2):
                return False
        return True

    def rec(i: int) -> bool:
        if i == len(ordered):
            return True
        e = ordered[i]
        for f in candidates[e]:
            if f in used or not ok(e, f):
                continue
            mapping[e] = f
            used.add(f)
            if rec(i + 1):
                return True
            del mapping[e]
            used.discard(f)
        return False

    return dict(mapping) if rec(0) else None


def canonical_hash(p) -> int:
    """Iso-invariant hash (refinement signatures; exact check via iso_eq)."""
    order = p.order if isinstance(p, Pomset) else p.po
    sig = _iso_signatures(p.events, order, p.lab)
    return hash(tuple(sorted(sig.values())))


def iso_eq(p, q) -> bool:
    """Label-preserving order-isomorphism between two pomset-like values."""
    o1 = p.order if isinstance(p, Pomset) else p.po
    o2 = q.order if isinstance(q, Pomset) else q.po
    return _find_isomorphism(p.events, o1, p.lab, q.events, o2, q.lab) is not None


def find_isomorphism(p, q) -> Optional[Dict[int, int]]:
    o1 = p.order if isinstance(p, Pomset) else p.po
    o2 = q.order if isinstance(q, Pomset) else q.po
    return _find_isomorphism(p.events, o1, p.lab, q.events, o2, q.lab)


# --------------------------------------------------------------------------
# Plain executions
# --------------------------------------------------------------------------


class PlainExecution:
    """A crash-aware pomset of labels: events, program order, labelling.

    The program order is stored transitively reduced and queried through a
    cached closure.  Construction enforces that every po-immediate successor
    of an incomplete call is a crash event.
    """

    __slots__ = ("events", "lab", "_po_red", "_po", "_hash")

    def __init__(self, labels: Sequence[Label], po: Iterable[Edge], _reduced: bool = False):
        lab: Dict[int, Label] = {}
        for i, l in enumerate(labels):
            if not isinstance(l, Label):
                raise TypeError(f"not a label: {l!r}")
            lab[i] = l
        red = frozenset(po) if _reduced else transitive_reduction(po)
        for a, b in red:
            if a not in lab or b not in lab:
                raise ValueError("po mentions unknown event")
        for a, b in red:
            if lab[a].is_call and not lab[a].is_complete and not lab[b].is_crash:
                raise ValueError(
                    f"incomplete call {lab[a]!r} has non-crash immediate successor"
                )
        object.__setattr__(self, "events", tuple(range(len(labels))))
        object.__setattr__(self, "lab", lab)
        object.__setattr__(self, "_po_red", red)
        object.__setattr__(self, "_po", None)
        object.__setattr__(self, "_hash", None)

    @classmethod
    def from_reduced(cls, labels: Sequence[Label], reduced_po: Iterable[Edge]) -> "PlainExecution":
        """Trusted fast path: the caller vouches that ``reduced_po`` is the
        transitive reduction of an acyclic relation."""
        return cls(labels, reduced_po, _reduced=True)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("PlainExecution is immutable")

    def __len__(self) -> int:
        return len(self.events)

    @property
    def po(self) -> Relation:
        if self._po is None:
            object.__setattr__(self, "_po", closure(self._po_red))
        return self._po

    @property
    def po_reduced(self) -> Relation:
        return self._po_red

    def labels(self) -> List[Label]:
        return [self.lab[e] for e in self.events]

    def is_empty(self) -> bool:
        return not self.events

    def threads(self) -> List[int]:
        return sorted({l.thread for l in self.lab.values() if l.thread is not None})

    def maximal_events(self) -> List[int]:
        not_max = {a for a, b in self._po_red}
        return [e for e in self.events if e not in not_max]

    def crash_events(self) -> List[int]:
        return [e for e in self.events if self.lab[e].is_crash]

    def era_of(self) -> Dict[int, int]:
        """Era index of each event: the number of crashes strictly po-before it."""
        crashes = set(self.crash_events())
        po = self.po
        return {e: sum(1 for c in crashes if (c, e) in po) for e in self.events}

    def restrict_events(self, keep: Iterable[int]) -> "PlainExecution":
        """Sub-execution on a subset of events (ids renumbered densely)."""
        keep_sorted = sorted(set(keep))
        idx = {old: new for new, old in enumerate(keep_sorted)}
        labels = [self.lab[e] for e in keep_sorted]
        po = [(idx[a], idx[b]) for a, b in self.po if a in idx and b in idx]
        return PlainExecution(labels, po)

    def to_pomset(self) -> Pomset:
        return Pomset(self.labels(), self.po_reduced)

    def __repr__(self) -> str:
        return f"PlainExecution({self.labels()!r}, po={sorted(self.po_reduced)!r})"


def from_pomset(p: Pomset) -> PlainExecution:
    return PlainExecution(p.labels(), p.reduced)


def thread_chains(labels: Sequence[Label]) -> List[Edge]:
    """po edges chaining same-thread events in list order (crashes global)."""
    edges: List[Edge] = []
    last: Dict[int, int] = {}
    for i, l in enumerate(labels):
        if l.thread is None:
            continue
        if l.thread in last:
            edges.append((last[l.thread], i))
        last[l.thread] = i
    return edges


def seq_compose(g1: PlainExecution, g2: PlainExecution) -> PlainExecution:
    """Sequential composition G1;G2.

    Every complete G1 event precedes every G2 event, and every G1 event
    precedes every G2 crash; the result is the transitive closure.
    """
    n1 = len(g1)
    labels = g1.labels() + g2.labels()
    edges: Set[Edge] = set(g1.po_reduced)
    edges |= {(a + n1, b + n1) for a, b in g2.po_reduced}
    for a in g1.events:
        for b in g2.events:
            if g1.lab[a].is_complete or g2.lab[b].is_crash:
                edges.add((a, b + n1))
    return PlainExecution(labels, edges)


def sequence_execution(labels: Sequence[Label]) -> PlainExecution:
    """A totally ordered plain execution (chain) over the given labels."""
    return PlainExecution(labels, [(i, i + 1) for i in range(len(labels) - 1)])


def parallel_execution(*chains: Sequence[Label]) -> PlainExecution:
    """Per-thread chains, no cross-thread order."""
    labels: List[Label] = []
    edges: List[Edge] = []
    for chain in chains:
        base = len(labels)
        labels.extend(chain)
        edges.extend((base + i, base + i + 1) for i in range(len(chain) - 1))
    return PlainExecution(labels, edges)


def down_sets(g: PlainExecution) -> List[FrozenSet[int]]:
    """All po-down-closed event subsets, smallest first (deterministic)."""
    po = g.po
    preds = {e: frozenset(a for a, b in po if b == e) for e in g.events}
    found: Set[FrozenSet[int]] = {frozenset(g.events)}
    frontier = [frozenset(g.events)]
    while frontier:
        cur = frontier.pop()
        for e in cur:
            if not any((e, x) in po for x in cur):
                nxt = cur - {e}
                if nxt not in found:
                    found.add(nxt)
                    frontier.append(nxt)
    return sorted(found, key=lambda s: (len(s), sorted(s)))


def prefixes(g: PlainExecution, dedup_iso: bool = True) -> List[PlainExecution]:
    """The downward closure of G in the prefix order, deduplicated up to iso."""
    out: List[PlainExecution] = []
    seen: Dict[int, List[PlainExecution]] = {}
    for s in down_sets(g):
        sub = g.restrict_events(s)
        if dedup_iso:
            h = canonical_hash(sub)
            bucket = seen.setdefault(h, [])
            if any(iso_eq(sub, other) for other in bucket):
                continue
            bucket.append(sub)
        out.append(sub)
    return out


def immediate_prefixes(g: PlainExecution) -> List[PlainExecution]:
    """All G' with G' ⊏_imm G (one po-maximal event removed)."""
    return [
        g.restrict_events(set(g.events) - {e})
        for e in g.maximal_events()
    ]


def prefix_immediate(g_small: PlainExecution, g_big: PlainExecution) -> bool:
    """True iff g_small is g_big minus one po-maximal event (up to iso)."""
    if len(g_small) != len(g_big) - 1:
        return False
    return any(iso_eq(g_small, p) for p in immediate_prefixes(g_big))


def era_split(g: PlainExecution) -> List[PlainExecution]:
    """Crash-free parts of G, in era order (crash events dropped)."""
    if not g.events:
        return [g]
    era = g.era_of()
    parts: List[List[int]] = [[] for _ in range(max(era.values()) + 2)]
    for e in g.events:
        if not g.lab[e].is_crash:
            parts[era[e]].append(e)
    n_eras = len(g.crash_events()) + 1
    return [g.restrict_events(p) for p in parts[:n_eras]]


def era_before(g: PlainExecution) -> Relation:
    """eb = po ; [Crash] ; po."""
    po = g.po
    crashes = g.crash_events()
    return frozenset(
        (a, b)
        for a in g.events
        for b in g.events
        if any((a, c) in po and (c, b) in po for c in crashes)
    )


def same_era(g: PlainExecution) -> Relation:
    """se: the complement of eb ∪ eb⁻¹."""
    eb = era_before(g)
    return frozenset(
        (a, b)
        for a in g.events
        for b in g.events
        if (a, b) not in eb and (b, a) not in eb
    )


def tag_set(x, tag: str) -> FrozenSet[int]:
    """⟦tag⟧: events (or call indices of a history) labelled with the tag."""
    if isinstance(x, History):
        return frozenset(i for i, c in enumerate(x.calls()) if tag in c.tags)
    g = x.plain if isinstance(x, Execution) else x
    return frozenset(e for e in g.events if tag in g.lab[e].tags)


# --------------------------------------------------------------------------
# Executions
# --------------------------------------------------------------------------


class Execution:
    """A plain execution with synchronizes-with and happens-before.

    ``hb`` must be a strict order containing ``po ∪ sw``; violations are
    rejected at construction.
    """

    __slots__ = ("plain", "sw", "hb")

    def __init__(self, plain: PlainExecution, sw: Iterable[Edge] = (), hb: Optional[Iterable[Edge]] = None):
        swf = frozenset(sw)
        for a, b in swf:
            if a not in plain.lab or b not in plain.lab:
                raise ValueError("sw mentions unknown event")
        if hb is None:
            hbf = closure(set(plain.po) | set(swf))
        else:
            hbf = closure(hb)
        if not is_irreflexive(hbf):
            raise ValueError("hb is cyclic")
        missing = (set(plain.po) | set(swf)) - set(hbf)
        if missing:
            raise ValueError(f"po ∪ sw ⊄ hb (missing {sorted(missing)[:3]}...)")
        object.__setattr__(self, "plain", plain)
        object.__setattr__(self, "sw", swf)
        object.__setattr__(self, "hb", hbf)

    def __setattr__(self, *a):  # pragma: no cover
        raise AttributeError("Execution is immutable")

    @property
    def events(self) -> Tuple[int, ...]:
        return self.plain.events

    @property
    def lab(self) -> Mapping[int, Label]:
        return self.plain.lab

    @property
    def po(self) -> Relation:
        return self.plain.po

    def is_empty(self) -> bool:
        return self.plain.is_empty()

    def __len__(self) -> int:
        return len(self.plain)

    def restrict_events(self, keep: Iterable[int]) -> "Execution":
        keep_sorted = sorted(set(keep))
        idx = {old: new for new, old in enumerate(keep_sorted)}
        sub = self.plain.restrict_events(keep_sorted)
        sw = [(idx[a], idx[b]) for a, b in self.sw if a in idx and b in idx]
        hb = [(idx[a], idx[b]) for a, b in self.hb if a in idx and b in idx]
        return Execution(sub, sw, hb)

    def maximal_events(self) -> List[int]:
        """hb-maximal events (prefixes of executions remove these)."""
        return [e for e in self.events if not any(a == e for a, _ in self.hb)]

    def __repr__(self) -> str:
        return (
            f"Execution({self.plain.labels()!r}, po={sorted(self.plain.po_reduced)!r}, "
            f"sw={sorted(self.sw)!r})"
        )


def immediate_prefixes_execution(x: Execution) -> List[Execution]:
    out = []
    for e in x.events:
        if any(a == e for (a, _b) in x.hb):
            continue
        out.append(x.restrict_events(set(x.events) - {e}))
    return out


def restrict(x: Execution, owns: Callable[[Label], bool]) -> Execution:
    """Events labelled with the library's methods, crashes kept; relations cut."""
    keep = [e for e in x.events if x.lab[e].is_crash or owns(x.lab[e])]
    return x.restrict_events(keep)


def anonymize(owns: Callable[[Label], bool], x: Execution) -> Execution:
    """Replace foreign tagged calls by ⋆ labels; drop untagged foreign calls."""
    keep: List[int] = []
    relabel: Dict[int, Label] = {}
    for e in x.events:
        l = x.lab[e]
        if l.is_crash or owns(l):
            keep.append(e)
        elif l.tags:
            keep.append(e)
            relabel[e] = star(l.tags, l.thread)
    keep_sorted = sorted(keep)
    idx = {old: new for new, old in enumerate(keep_sorted)}
    labels = [relabel.get(e, x.lab[e]) for e in keep_sorted]
    po = [(idx[a], idx[b]) for a, b in x.po if a in idx and b in idx]
    sw = [(idx[a], idx[b]) for a, b in x.sw if a in idx and b in idx]
    hb = [(idx[a], idx[b]) for a, b in x.hb if a in idx and b in idx]
    # Anonymization may break the incomplete-call invariant of the underlying
    # plain execution (a dropped crash cannot happen: crashes are kept), so
    # the plain execution is rebuilt directly.
    plain = PlainExecution(labels, po)
    return Execution(plain, sw, hb)


def execution_iso_eq(x: Execution, y: Execution) -> bool:
    """Isomorphism of executions: label-preserving, po-, sw- and hb-preserving."""
    m = find_isomorphism(x.plain, y.plain)
    if m is None:
        # try all isomorphisms? cheap fallback: signatures already matched po
        return False
    # check one mapping first; fall back to exhaustive search over label-
    # compatible bijections only when sw/hb disagree under m.
    def respects(m: Dict[int, int]) -> bool:
        sw2 = {(m[a], m[b]) for a, b in x.sw}
        hb2 = {(m[a], m[b]) for a, b in x.hb}
        return sw2 == set(y.sw) and hb2 == set(y.hb)

    if respects(m):
        return True
    sig_x = _iso_signatures(x.events, frozenset(set(x.po) | set(x.sw) | set(x.hb)), x.lab)
    sig_y = _iso_signatures(y.events, frozenset(set(y.po) | set(y.sw) | set(y.hb)), y.lab)
    if sorted(sig_x.values()) != sorted(sig_y.values()):
        return False
    cands = {e: [f for f in y.events if sig_y[f] == sig_x[e]] for e in x.events}
    for perm in _bijections(list(x.events), cands):
        if perm is None:
            continue
        mm = perm
        ok = all(((a, b) in x.po) == ((mm[a], mm[b]) in y.po) for a in x.events for b in x.events)
        if ok and respects(mm):
            return True
    return False


def _bijections(events: List[int], cands: Dict[int, List[int]]) -> Iterator[Optional[Dict[int, int]]]:
    if len(events) > 8:
        yield None
        return

    def rec(i: int, mapping: Dict[int, int], used: Set[int]):
        if i == len(events):
            yield dict(mapping)
            return
        e = events[i]
        for f in cands[e]:
            if f in used:
                continue
            mapping[e] = f
            used.add(f)
            yield from rec(i + 1, mapping, used)
            used.discard(f)
            del mapping[e]
    yield from rec(0, {}, set())


def execution_canonical_hash(x: Execution) -> int:
    sig = _iso_signatures(
        x.events,
        frozenset(set(x.po) | set(x.sw) | set(x.hb)),
        x.lab,
    )
    return hash(tuple(sorted(sig.values())))


# --------------------------------------------------------------------------
# History <-> execution conversion (SC mode)
# --------------------------------------------------------------------------


def history_to_execution(h: History) -> Execution:
    """Single-event calls with po per thread and hb = return-precedes-invocation.

    Crash markers become crash events acting as both invocation and return.
    """
    calls = h.calls()
    crash_positions = [i for i, e in enumerate(h.events) if isinstance(e, CrashEv)]
    labels: List[Label] = []
    spans: List[Tuple[float, float]] = []  # (start, end) indices in h
    threads: List[Optional[int]] = []
    for c in calls:
        labels.append(c.label())
        spans.append((c.start, c.end))
        threads.append(c.thread)
    for p in crash_positions:
        labels.append(CRASH)
        spans.append((p, p))
        threads.append(None)
    n = len(labels)
    hb = set()
    for i in range(n):
        for j in range(n):
            if i != j and spans[i][1] < spans[j][0]:
                hb.add((i, j))
    po = set()
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            same_thread = threads[i] is not None and threads[i] == threads[j]
            crash_pair = threads[i] is None or threads[j] is None
            if (same_thread or crash_pair) and spans[i][1] < spans[j][0]:
                po.add((i, j))
    po = closure(po)
    plain = PlainExecution(labels, po)
    return Execution(plain, sw=(), hb=closure(hb | po))


# --------------------------------------------------------------------------
# Serialization
# --------------------------------------------------------------------------


def _json_value(v):
    if v is BOT:
        return {"⊥": True}
    return v


def execution_to_json(x: Execution) -> str:
    events = []
    for e in x.events:
        l = x.lab[e]
        events.append(
            {
                "id": e,
                "thread": l.thread,
                "label": "crash" if l.is_crash else l.method,
                "args": list(l.args),
                "ret": _json_value(l.ret) if l.is_call else None,
                "tags": sorted(l.tags),
            }
        )
    return json.dumps(
        {
            "events": events,
            "po": sorted([list(e) for e in x.po]),
            "sw": sorted([list(e) for e in x.sw]),
            "hb": sorted([list(e) for e in x.hb]),
        },
        ensure_ascii=False,
    )


def execution_from_json(text: str) -> Execution:
    data = json.loads(text)
    labels = []
    for ev in sorted(data["events"], key=lambda d: d["id"]):
        if ev["label"] == "crash":
            labels.append(CRASH)
        else:
            ret = ev["ret"]
            if isinstance(ret, dict) and ret.get("⊥"):
                ret = BOT
            labels.append(
                Label(ev["label"], tuple(ev["args"]), ret, frozenset(ev["tags"]), ev["thread"])
            )
    po = [tuple(e) for e in data["po"]]
    sw = [tuple(e) for e in data["sw"]]
    hb = [tuple(e) for e in data["hb"]]
    return Execution(PlainExecution(labels, po), sw, hb)


def execution_to_dot(x: Execution, name: str = "execution") -> str:
    lines = [f"digraph {name} {{", "  rankdir=TB;"]
    for e in x.events:
        l = x.lab[e]
        shape = "box" if l.is_crash else "ellipse"
        lines.append(f'  e{e} [label="{e}: {l!r}", shape={shape}];')
    red = transitive_reduction(x.po) if x.po else frozenset()
    for a, b in sorted(red):
        lines.append(f"  e{a} -> e{b};")
    for a, b in sorted(x.sw):
        lines.append(f'  e{a} -> e{b} [style=dashed, label="sw", constraint=false];')
    lines.append("}")
    return "\n".join(lines)
