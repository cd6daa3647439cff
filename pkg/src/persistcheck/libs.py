"""Built-in persistent libraries: specifications and implementations.

Contents: the weak persistent register and durable queue (SC reference
models wrapped as execution-level library specs), generic Lin(S)/DurLin(S)
constructors, the Flit and Mirror libraries with their Px86 implementations
and read/write persistification transformers, the persistent transaction
library with its undo-log implementation, the lock-wrapped transaction
library, and the (min-max) counters built over transactions.

Cross-era visibility follows one rule throughout: a write is visible to
reads of later eras only if it carries the persisted marker of its library
(the persisted set is a witness component unless the execution is already
tagged).  Reads with no visible prior write return 0.
"""

from __future__ import annotations

import itertools
from typing import Callable, Dict, FrozenSet, List, Mapping, Optional, Sequence, Set, Tuple

from .framework import BudgetExceeded, LibraryInterface, LibrarySpec, Verdict
from .lang import CallCmd, If, Return, Seq, SyntacticImpl, While, parse_statements
from .model import (
    BOT,
    Call,
    Execution,
    Label,
    PlainExecution,
    closure,
    is_irreflexive,
)
from .px86 import P_TAG, px86_spec
from .sc import (
    PFENCE,
    QUEUE_METHODS,
    S_QUEUE,
    S_REGISTER,
    SequentialSpec,
    WEAKREG_METHODS,
    weakreg_consistent_execution,
)

#: Reserved sentinel outside the user value domain (undo-log commit marker).
COMMITTED = 9999

T_TAG = "T"
PTR_TAG = "Ptr"
B_TAG = "B"
E_TAG = "E"


# --------------------------------------------------------------------------
# Shared helpers
# --------------------------------------------------------------------------


def _era_monotone_lins(order: Sequence[int], era: Mapping[int, int], hb: Set[Tuple[int, int]], budget: List[int]):
    """Linear extensions of hb over ``order``, never moving an event before
    an earlier era (generated directly, not filtered from permutations)."""
    items = list(order)
    preds: Dict[int, Set[int]] = {i: set() for i in items}
    for a, b in hb:
        if a in preds and b in preds:
            preds[b].add(a)

    def rec(placed: List[int], remaining: Set[int]):
        budget[0] -= 1
        if budget[0] < 0:
            raise BudgetExceeded({"stage": "linearization enumeration"})
        if not remaining:
            yield tuple(placed)
            return
        min_era = min(era[i] for i in remaining)
        for i in sorted(remaining):
            if era[i] != min_era or (preds[i] & remaining):
                continue
            placed.append(i)
            remaining.discard(i)
            yield from rec(placed, remaining)
            remaining.add(i)
            placed.pop()

    yield from rec([], set(items))


def execution_linearizable(
    x: Execution,
    spec: SequentialSpec,
    keep: Optional[Callable[[Label, int, bool], str]] = None,
    domain: Optional[Sequence] = None,
    budget: int = 200_000,
    era_monotone: bool = False,
) -> Verdict:
    """hb-linearizations of an execution's single-event calls into a
    sequential spec.

    ``keep(label, era, is_last_era)`` returns "keep", "drop", or "optional"
    per event (default: complete events kept, incomplete optional).  Dropped
    and optional-dropped events vanish; optional incomplete events may also
    be completed with domain values.  ``era_monotone`` additionally pins
    events of earlier eras before later ones (the persisted-prefix
    concatenation shape); plain durable linearizability erases crashes, so
    only happens-before constrains incomplete stragglers there.
    """
    n_eras = len(x.plain.crash_events()) + 1
    era = x.plain.era_of()
    ids = [e for e in x.events if not x.lab[e].is_crash]
    if domain is None:
        vals = []
        for e in ids:
            l = x.lab[e]
            vals.extend(a for a in l.args)
            if l.ret not in (BOT, None):
                vals.append(l.ret)
        domain = []
        for v in vals + [0, None]:
            if v not in domain:
                domain.append(v)

    modes = {}
    for e in ids:
        l = x.lab[e]
        mode = keep(l, era[e], era[e] == n_eras - 1) if keep else (
            "keep" if l.is_complete else "optional"
        )
        modes[e] = mode
    chosen_base = [e for e in ids if modes[e] == "keep"]
    optional = [e for e in ids if modes[e] == "optional"]
    spent = [budget]

    for included in itertools.chain.from_iterable(
        itertools.combinations(optional, r) for r in range(len(optional) + 1)
    ):
        members = sorted(set(chosen_base) | set(included))
        # return-value choices for included incomplete calls
        pend = [e for e in members if not x.lab[e].is_complete]
        ret_choices: List[Sequence] = []
        for e in pend:
            if x.lab[e].method in _VOID_METHODS_ALL:
                ret_choices.append([None])
            else:
                ret_choices.append(list(domain))
        for rets in itertools.product(*ret_choices):
            retmap = dict(zip(pend, rets))
            hb_local = {(a, b) for (a, b) in x.hb if a in members and b in members}
            era_key = era if era_monotone else {e: 0 for e in members}
            try:
                for perm in _era_monotone_lins(members, era_key, hb_local, spent):
                    seq = []
                    for e in perm:
                        l = x.lab[e]
                        ret = retmap.get(e, l.ret)
                        seq.append(Call(l.method, l.args, None if ret is BOT else ret, l.thread, l.tags, e, e))
                    if spec.accepts(seq):
                        return Verdict.ok(witness=list(perm))
            except BudgetExceeded as exc:
                return Verdict.budget(exc.stats)
    return Verdict.fail(f"no linearization into {spec.name}")


_VOID_METHODS_ALL = frozenset(
    {"rwrite", "qappend", "qpush", PFENCE, "pt_write", "pt_begin", "pt_end", "pt_recover",
     "lacq", "lrel", "cinc", "mmadd", "fwrite_p", "fwrite_v", "ffinish", "mwr"}
)


# --------------------------------------------------------------------------
# Weak register and durable queue as library specs
# --------------------------------------------------------------------------


def _weakreg_loc(l: Label) -> FrozenSet[int]:
    if l.method == "rnew":
        return frozenset() if l.ret in (None, BOT) else frozenset({l.ret})
    if l.method in ("rwrite", "rread"):
        return frozenset({l.args[0]})
    return frozenset()


def weakreg_interface(with_pfence: bool = True) -> LibraryInterface:
    methods = dict(WEAKREG_METHODS)
    if not with_pfence:
        methods.pop(PFENCE)
    return LibraryInterface(
        name="weakreg",
        methods=methods,
        constructors=frozenset({"rnew"}),
        loc=_weakreg_loc,
        returns={"rnew": "loc", "rwrite": "void", PFENCE: "void", "rread": "value"},
    )


def weakreg_spec(with_pfence: bool = True, budget: int = 500_000) -> LibrarySpec:
    def check(x: Execution) -> Verdict:
        return weakreg_consistent_execution(x, with_pfence=with_pfence, budget=budget)

    return LibrarySpec(interface=weakreg_interface(with_pfence), local_consistent=check)


def _queue_loc(l: Label) -> FrozenSet[int]:
    if l.method == "qnew":
        return frozenset() if l.ret in (None, BOT) else frozenset({l.ret})
    if l.method in ("qpush", "qappend", "qpop"):
        return frozenset({l.args[0]})
    return frozenset()


def queue_interface(name: str = "durqueue") -> LibraryInterface:
    methods = dict(QUEUE_METHODS)
    methods["qappend"] = 2  # alias used by the undo-log figure
    return LibraryInterface(
        name=name,
        methods=methods,
        constructors=frozenset({"qnew"}),
        loc=_queue_loc,
        returns={"qnew": "loc", "qpush": "void", "qappend": "void", "qpop": "value"},
    )


def _normalize_queue_call(c: Call) -> Call:
    if c.method == "qappend":
        return Call("qpush", c.args, c.ret, c.thread, c.tags, c.inv_index, c.ret_index)
    return c


S_QUEUE_ALIASED = SequentialSpec(
    "queue", S_QUEUE.init, lambda st, c: S_QUEUE.step(st, _normalize_queue_call(c))
)


# --------------------------------------------------------------------------
# Lin(S) and DurLin(S)
# --------------------------------------------------------------------------


def make_lin_spec(seq_spec: SequentialSpec, interface: LibraryInterface, budget: int = 200_000) -> LibrarySpec:
    """Linearizability of hb as a library spec (crash-free executions; any
    crash is inconsistent for a purely volatile linearizable library)."""

    def check(x: Execution) -> Verdict:
        if x.plain.crash_events():
            return Verdict.fail("crash in a Lin(S) execution")
        return execution_linearizable(x, seq_spec, budget=budget)

    return LibrarySpec(interface=interface, local_consistent=check)


def make_durlin_spec(seq_spec: SequentialSpec, interface: LibraryInterface, budget: int = 200_000) -> LibrarySpec:
    """Durable linearizability: crash markers erased, completed calls must
    survive into the linearization; incomplete calls may be dropped or
    completed."""

    def check(x: Execution) -> Verdict:
        return execution_linearizable(x, seq_spec, budget=budget)

    return LibrarySpec(interface=interface, local_consistent=check)


def durqueue_spec(budget: int = 200_000) -> LibrarySpec:
    return make_durlin_spec(S_QUEUE_ALIASED, queue_interface(), budget=budget)


def _register_iface(name: str = "reg") -> LibraryInterface:
    return LibraryInterface(
        name=name,
        methods={"regnew": 0, "regwrite": 2, "regread": 1},
        constructors=frozenset({"regnew"}),
        loc=lambda l: (
            frozenset({l.ret}) if l.method == "regnew" and l.ret not in (None, BOT) else (
                frozenset({l.args[0]}) if l.method in ("regwrite", "regread") else frozenset()
            )
        ),
        returns={"regnew": "loc", "regwrite": "void", "regread": "value"},
    )


def _reg_call(c: Call) -> Call:
    table = {"regnew": "rnew", "regwrite": "rwrite", "regread": "rread"}
    if c.method in table:
        return Call(table[c.method], c.args, c.ret, c.thread, c.tags, c.inv_index, c.ret_index)
    return c


S_REG_ABSTRACT = SequentialSpec(
    "register", S_REGISTER.init, lambda st, c: S_REGISTER.step(st, _reg_call(c))
)


def reg_lin_spec() -> LibrarySpec:
    return make_lin_spec(S_REG_ABSTRACT, _register_iface("reg"))


def reg_durlin_spec() -> LibrarySpec:
    return make_durlin_spec(S_REG_ABSTRACT, _register_iface("reg"))


# --------------------------------------------------------------------------
# Flit
# --------------------------------------------------------------------------

FLIT_METHODS = {
    "fnew": 0,
    "fread_p": 1,
    "fread_v": 1,
    "fwrite_p": 2,
    "fwrite_v": 2,
    "ffinish": 0,
}


def _flit_loc(l: Label) -> FrozenSet[int]:
    if l.method == "fnew":
        return frozenset() if l.ret in (None, BOT) else frozenset({l.ret, l.ret + 1})
    if l.method in ("fread_p", "fread_v", "fwrite_p", "fwrite_v"):
        return frozenset({l.args[0]})
    return frozenset()


def _flit_call_semantics(method: str, args: Tuple, ctx):
    if method == "fnew":
        x = ctx.fresh_loc()
        ctx.fresh_loc()  # the cell's flit-counter slot
        return [((Label("fnew", (), x),), x)]
    if method in ("fread_p", "fread_v"):
        return [((Label(method, args, v),), v) for v in ctx.domain]
    # writes and finish are void
    return [((Label(method, args, None),), None)]


def flit_interface() -> LibraryInterface:
    return LibraryInterface(
        name="flit",
        methods=FLIT_METHODS,
        constructors=frozenset({"fnew"}),
        loc=_flit_loc,
        tags_used=frozenset({P_TAG}),
        method_tags={m: frozenset({"D"}) for m in ("fwrite_p", "fwrite_v", "ffinish", "fnew")},
        returns={
            "fnew": "loc",
            "fread_p": "value",
            "fread_v": "value",
            "fwrite_p": "void",
            "fwrite_v": "void",
            "ffinish": "void",
        },
        call_semantics=_flit_call_semantics,
    )


def check_flit(x: Execution, budget: int = 100_000) -> Verdict:
    """Flit correctness: a total order lin ⊇ hb, a persist order nvo, and a
    persisted write set P such that reads see the lin-latest visible write
    (visible across eras only when persisted), persistent writes persist
    before dependent writes, persistent writes before a finish-op persist,
    and P is an nvo prefix."""
    ids = [e for e in x.events if not x.lab[e].is_crash]
    era = x.plain.era_of()
    lab = x.lab
    W = [e for e in ids if lab[e].method in ("fwrite_p", "fwrite_v")]
    WP = [e for e in ids if lab[e].method == "fwrite_p"]
    R = [e for e in ids if lab[e].method in ("fread_p", "fread_v")]
    RP = [e for e in ids if lab[e].method == "fread_p"]
    F = [e for e in ids if lab[e].method == "ffinish"]

    def locof(e):
        l = lab[e]
        return l.args[0] if l.args else None

    explicit = frozenset(e for e in ids if P_TAG in lab[e].tags)
    has_explicit = any(P_TAG in lab[e].tags for e in x.events)
    hb = {(a, b) for (a, b) in x.hb if a in set(ids) and b in set(ids)}
    po_se = {(a, b) for (a, b) in x.po if era.get(a) == era.get(b)}
    spent = [budget]
    try:
        for lin in _era_monotone_lins(sorted(ids), era, hb, spent):
            pos = {e: i for i, e in enumerate(lin)}
            p_cands = (
                [explicit]
                if has_explicit
                else [
                    frozenset(c)
                    for r in range(len(W) + 1)
                    for c in itertools.combinations(sorted(W), r)
                ]
            )
            for P in p_cands:
                def visible(w, r):
                    return era[w] == era[r] or w in P

                # reads-from: lin-latest visible same-location write
                ok = True
                for r in R:
                    srcs = [
                        w
                        for w in W
                        if locof(w) == locof(r) and pos[w] < pos[r] and visible(w, r)
                    ]
                    want = lab[r].ret
                    if want is BOT:
                        continue
                    if srcs:
                        w = max(srcs, key=lambda e: pos[e])
                        wrote = lab[w].args[1]
                        if wrote != want:
                            ok = False
                            break
                    else:
                        if want != 0:
                            ok = False
                            break
                if not ok:
                    continue
                # dependency: same-era po, plus persistent write-to-read pairs
                dep_edges = set(po_se)
                for w in WP:
                    for r in RP:
                        if locof(w) == locof(r) and pos[w] < pos[r] and visible(w, r):
                            dep_edges.add((w, r))
                dep = closure(dep_edges)
                nvo_req = {
                    (w1, w2) for w1 in WP for w2 in W if (w1, w2) in dep
                }
                nvo = closure(nvo_req)
                if not is_irreflexive(nvo):
                    continue
                if any(era[a] > era[b] for (a, b) in nvo):
                    continue
                # persistent writes before a finish-op persist
                need_p = {
                    w for w in WP if any((w, f) in dep for f in F)
                }
                if not need_p <= P:
                    continue
                # nvo is a persist order
                if any(b in P and a not in P for (a, b) in nvo):
                    continue
                return Verdict.ok(
                    witness={"lin": list(lin), "nvo": sorted(nvo), "P": sorted(P)}
                )
    except BudgetExceeded as exc:
        return Verdict.budget(exc.stats)
    return Verdict.fail("no flit witness (lin/nvo/P)")


def flit_spec(budget: int = 100_000) -> LibrarySpec:
    return LibrarySpec(
        interface=flit_interface(),
        deps=frozenset({"px86"}),
        local_consistent=lambda x: check_flit(x, budget),
    )


def flit_impl() -> SyntacticImpl:
    """The counter-guarded Px86 implementation: a persistent write bumps the
    cell's flit counter around the store and flush-opt; persistent reads
    flush only when a concurrent write is mid-flight; finish-op is a store
    fence."""
    return SyntacticImpl(
        name="flit",
        methods={
            "fnew": ((), parse_statements("r := alloc(); c := alloc(); return r")),
            "fwrite_p": (
                ("l", "v"),
                parse_statements("a := faa(l + 1, 1); store(l, v); fo(l); b := faa(l + 1, 0 - 1)"),
            ),
            "fwrite_v": (("l", "v"), parse_statements("sfence(); store(l, v)")),
            "fread_p": (
                ("l",),
                parse_statements("v := load(l); c := load(l + 1); if (c > 0) { fo(l) }; return v"),
            ),
            "fread_v": (("l",), parse_statements("v := load(l); return v")),
            "ffinish": ((), parse_statements("sfence()")),
        },
    )


def flit_impl_mutated_no_fo() -> SyntacticImpl:
    """Mutation for fault-injection tests: the persistent write forgets its
    flush-opt."""
    impl = flit_impl()
    methods = dict(impl.methods)
    methods["fwrite_p"] = (
        ("l", "v"),
        parse_statements("a := faa(l + 1, 1); store(l, v); b := faa(l + 1, 0 - 1)"),
    )
    return SyntacticImpl(name="flit_no_fo", methods=methods)


def _persistify(impl: SyntacticImpl, table: Mapping[str, str], finish: Optional[str], name: str) -> SyntacticImpl:
    def tr(c):
        if isinstance(c, CallCmd):
            if c.method in table:
                return CallCmd(c.reg, table[c.method], c.args)
            return c
        if isinstance(c, Seq):
            return Seq(tuple(tr(s) for s in c.cmds))
        if isinstance(c, If):
            return If(c.cond, tr(c.then), tr(c.els))
        if isinstance(c, While):
            return While(c.cond, tr(c.body))
        if isinstance(c, Return) and finish:
            return Seq((CallCmd(None, finish, ()), c))
        return c

    methods = {}
    for m, (params, body) in impl.methods.items():
        body2 = tr(body)
        if finish:
            body2 = Seq((body2, CallCmd(None, finish, ())))
        methods[m] = (params, body2)
    return SyntacticImpl(name=name, methods=methods, globals=impl.globals)


def persistify_flit(impl: SyntacticImpl) -> SyntacticImpl:
    """p(I): reads/writes/allocations become persistent Flit accesses and a
    finish-op runs right before the end of each method."""
    table = {"store": "fwrite_p", "load": "fread_p", "alloc": "fnew"}
    return _persistify(impl, table, "ffinish", f"p({impl.name})")


def persistify_flit_mutated(impl: SyntacticImpl) -> SyntacticImpl:
    """Mutation: persistification without the finish-ops."""
    table = {"store": "fwrite_p", "load": "fread_p", "alloc": "fnew"}
    return _persistify(impl, table, None, f"p-mutated({impl.name})")


# --------------------------------------------------------------------------
# Mirror
# --------------------------------------------------------------------------

MIRROR_METHODS = {"mnew": 0, "mrd": 1, "mwr": 2, "mcas": 3}

#: packing modulus for (value, sequence-number) pairs in the implementation
MIRROR_K = 16


def _mirror_loc(l: Label) -> FrozenSet[int]:
    if l.method == "mnew":
        return frozenset() if l.ret in (None, BOT) else frozenset({l.ret, l.ret + 1})
    if l.method in ("mrd", "mwr", "mcas"):
        return frozenset({l.args[0]})
    return frozenset()


def _mirror_call_semantics(method: str, args: Tuple, ctx):
    if method == "mnew":
        x = ctx.fresh_loc()
        ctx.fresh_loc()
        return [((Label("mnew", (), x),), x)]
    if method == "mrd":
        return [((Label("mrd", args, v),), v) for v in ctx.domain]
    if method == "mwr":
        return [((Label("mwr", args, None),), None)]
    if method == "mcas":
        return [((Label("mcas", args, r),), r) for r in (1, 0)]
    raise ValueError(method)


def mirror_interface() -> LibraryInterface:
    return LibraryInterface(
        name="mirror",
        methods=MIRROR_METHODS,
        constructors=frozenset({"mnew"}),
        loc=_mirror_loc,
        tags_used=frozenset({P_TAG}),
        method_tags={m: frozenset({"D"}) for m in ("mwr", "mcas", "mnew")},
        returns={"mnew": "loc", "mrd": "value", "mwr": "void", "mcas": "value"},
        call_semantics=_mirror_call_semantics,
    )


def _mirror_is_write(l: Label) -> bool:
    return l.method == "mwr" or (l.method == "mcas" and l.ret == 1)


def _mirror_written(l: Label):
    if l.method == "mwr":
        return l.args[1]
    if l.method == "mcas":
        return l.args[2]
    return None


def _mirror_reads(l: Label) -> bool:
    return l.method in ("mrd", "mcas")


def check_mirror(x: Execution, budget: int = 100_000) -> Verdict:
    """Mirror correctness: a total lin agreeing with po and hb; sw must equal
    the derived latest-visible reads-from; completed writes are exactly the
    persisted set; same-era write chains persist in order."""
    ids = [e for e in x.events if not x.lab[e].is_crash]
    era = x.plain.era_of()
    lab = x.lab
    W = [e for e in ids if _mirror_is_write(lab[e])]
    R = [e for e in ids if _mirror_reads(lab[e])]

    def locof(e):
        l = lab[e]
        return l.args[0] if l.args else None

    P = frozenset(w for w in W if lab[w].is_complete)
    hb = {(a, b) for (a, b) in x.hb if a in set(ids) and b in set(ids)}
    hb |= {(a, b) for (a, b) in x.po if a in set(ids) and b in set(ids)}
    spent = [budget]
    try:
        for lin in _era_monotone_lins(sorted(ids), era, hb, spent):
            pos = {e: i for i, e in enumerate(lin)}

            def visible(w, r):
                return era[w] == era[r] or w in P

            sw_derived = set()
            ok = True
            for r in R:
                srcs = [
                    w
                    for w in W
                    if w != r and locof(w) == locof(r) and pos[w] < pos[r] and visible(w, r)
                ]
                if srcs:
                    w = max(srcs, key=lambda e: pos[e])
                    sw_derived.add((w, r))
                    wrote = _mirror_written(lab[w])
                    if lab[r].method == "mrd":
                        if lab[r].ret is not BOT and wrote != lab[r].ret:
                            ok = False
                    elif lab[r].ret == 1:  # successful cas read its expected value
                        if wrote != lab[r].args[1]:
                            ok = False
                    elif lab[r].ret == 0:  # failed cas saw something else
                        if wrote == lab[r].args[1]:
                            ok = False
                else:
                    if lab[r].method == "mrd" and lab[r].ret not in (0, BOT):
                        ok = False
                    if lab[r].method == "mcas" and lab[r].ret == 1 and lab[r].args[1] != 0:
                        ok = False
                    if lab[r].method == "mcas" and lab[r].ret == 0 and lab[r].args[1] == 0:
                        ok = False
                if not ok:
                    break
            if not ok:
                continue
            if set(x.sw) != sw_derived:
                continue
            po_sw_se = {
                (a, b)
                for (a, b) in (set(x.po) | set(x.sw))
                if a in set(ids) and b in set(ids) and era[a] == era[b]
            }
            chain = closure(po_sw_se)
            nvo = closure({(a, b) for (a, b) in chain if a in set(W) and b in set(W)})
            if not is_irreflexive(nvo):
                continue
            if any(b in P and a not in P for (a, b) in nvo):
                continue
            return Verdict.ok(witness={"lin": list(lin), "nvo": sorted(nvo), "P": sorted(P)})
    except BudgetExceeded as exc:
        return Verdict.budget(exc.stats)
    return Verdict.fail("no mirror witness (lin/nvo)")


def _mirror_sw_hook(g: PlainExecution) -> Sequence[FrozenSet[Tuple[int, int]]]:
    """Candidate sw sets: derived reads-from for each era-monotone lin."""
    ids = [e for e in g.events if not g.lab[e].is_crash]
    era = g.era_of()
    lab = g.lab
    W = [e for e in ids if _mirror_is_write(lab[e])]
    R = [e for e in ids if _mirror_reads(lab[e])]
    P = frozenset(w for w in W if lab[w].is_complete)

    def locof(e):
        return lab[e].args[0] if lab[e].args else None

    out: List[FrozenSet[Tuple[int, int]]] = [frozenset()]
    hb = {(a, b) for (a, b) in g.po if a in set(ids) and b in set(ids)}
    spent = [2_000]
    try:
        for lin in _era_monotone_lins(sorted(ids), era, hb, spent):
            pos = {e: i for i, e in enumerate(lin)}
            sw = set()
            for r in R:
                srcs = [
                    w
                    for w in W
                    if w != r
                    and locof(w) == locof(r)
                    and pos[w] < pos[r]
                    and (era[w] == era[r] or w in P)
                ]
                if srcs:
                    sw.add((max(srcs, key=lambda e: pos[e]), r))
            fz = frozenset(sw)
            if fz not in out:
                out.append(fz)
    except BudgetExceeded:
        pass
    return out


def mirror_spec(budget: int = 100_000) -> LibrarySpec:
    return LibrarySpec(
        interface=mirror_interface(),
        deps=frozenset({"px86"}),
        local_consistent=lambda x: check_mirror(x, budget),
        sw_candidates=_mirror_sw_hook,
    )


def mirror_impl() -> SyntacticImpl:
    """Two copies per cell (volatile at l, persistent at l+1), values packed
    with a sequence number (val*K + seq); pair reads are atomic by packing,
    double-width CAS is a single update on the packed location.  Writes
    install into the persistent copy, flush, then catch the volatile copy
    up; readers touch only the volatile copy."""
    K = MIRROR_K
    cas_body = parse_statements(
        f"""
        res := 2;
        while (res == 2) {{
          p := load(l + 1); v := load(l);
          pseq := p % {K}; pval := p / {K}; vseq := v % {K}; vval := v / {K};
          if (pseq == vseq + 1) {{
            flush(l + 1); sfence(); c0 := cas(l, v, p); res := 2
          }} else {{
            if (pseq != vseq) {{ res := 2 }}
            else {{
              if (pval != exp) {{ res := 0 }}
              else {{
                after := new * {K} + pseq + 1;
                c1 := cas(l + 1, p, after);
                flush(l + 1); sfence();
                if (c1 == 1) {{ c2 := cas(l, v, after); res := 1 }}
                else {{ res := 0 }}
              }}
            }}
          }}
        }};
        return res
        """
    )
    wr_body = parse_statements(
        f"r := 0; while (r == 0) {{ p := load(l + 1); e := p / {K}; r := mcas(l, e, v) }}"
    )
    return SyntacticImpl(
        name="mirror",
        methods={
            "mnew": ((), parse_statements("a := alloc(); b := alloc(); return a")),
            "mrd": (("l",), parse_statements(f"x := load(l); return x / {MIRROR_K}")),
            "mwr": (("l", "v"), wr_body),
            "mcas": (("l", "exp", "new"), cas_body),
        },
    )


def persistify_mirror(impl: SyntacticImpl) -> SyntacticImpl:
    """m(I): reads/writes/allocations become Mirror calls (completed Mirror
    writes persist, so no finish-op is needed)."""
    table = {"store": "mwr", "load": "mrd", "alloc": "mnew", "cas": "mcas"}
    return _persistify(impl, table, None, f"m({impl.name})")


def persistify_mirror_mutated(impl: SyntacticImpl) -> SyntacticImpl:
    """Mutation: stores degrade to reads of the target cell, so the data
    never reaches the mirror cells at all."""

    def tr(c):
        if isinstance(c, CallCmd):
            if c.method == "store":
                return CallCmd(c.reg, "mrd", (c.args[0],))
            if c.method == "load":
                return CallCmd(c.reg, "mrd", c.args)
            if c.method == "alloc":
                return CallCmd(c.reg, "mnew", c.args)
            return c
        if isinstance(c, Seq):
            return Seq(tuple(tr(x) for x in c.cmds))
        if isinstance(c, If):
            return If(c.cond, tr(c.then), tr(c.els))
        if isinstance(c, While):
            return While(c.cond, tr(c.body))
        return c

    methods = {m: (ps, tr(body)) for m, (ps, body) in impl.methods.items()}
    return SyntacticImpl(name=f"m-mutated({impl.name})", methods=methods, globals=impl.globals)


# --------------------------------------------------------------------------
# The persistent transaction library
# --------------------------------------------------------------------------

LTRANS_METHODS = {
    "pt_new": 0,
    "pt_begin": 0,
    "pt_end": 0,
    "pt_read": 1,
    "pt_write": 2,
    "pt_recover": 0,
}


def _ltrans_loc(l: Label) -> FrozenSet[int]:
    if l.method == "pt_new":
        return frozenset() if l.ret in (None, BOT) else frozenset({l.ret})
    if l.method in ("pt_read", "pt_write"):
        return frozenset({l.args[0]})
    return frozenset()


def ltrans_interface(name: str = "ltrans", begin: str = "pt_begin", end: str = "pt_end") -> LibraryInterface:
    return LibraryInterface(
        name=name,
        methods=LTRANS_METHODS,
        constructors=frozenset({"pt_new"}),
        loc=_ltrans_loc,
        tags_introduced=frozenset({T_TAG, PTR_TAG, B_TAG, E_TAG}),
        method_tags={
            "pt_read": frozenset({T_TAG}),
            "pt_write": frozenset({T_TAG}),
            begin: frozenset({B_TAG}),
            end: frozenset({E_TAG}),
        },
        returns={
            "pt_new": "loc",
            "pt_begin": "void",
            "pt_end": "void",
            "pt_write": "void",
            "pt_recover": "void",
            "pt_read": "value",
        },
    )


def _tagged(x: Execution, tag: str) -> List[int]:
    return [e for e in x.events if tag in x.lab[e].tags]


def same_transaction(x: Execution) -> FrozenSet[Tuple[int, int]]:
    """Pairs of same-thread transaction-relevant events with no begin- or
    end-tagged event strictly po-between them (symmetric)."""
    relevant = set(_tagged(x, T_TAG)) | set(_tagged(x, B_TAG)) | set(_tagged(x, E_TAG))
    seps = set(_tagged(x, B_TAG)) | set(_tagged(x, E_TAG))
    po = x.po
    out = set()
    for a in relevant:
        for b in relevant:
            if a == b:
                continue
            if x.lab[a].thread is None or x.lab[a].thread != x.lab[b].thread:
                continue
            if (a, b) not in po and (b, a) not in po:
                continue
            lo, hi = (a, b) if (a, b) in po else (b, a)
            if any(s not in (a, b) and (lo, s) in po and (s, hi) in po for s in seps):
                continue
            out.add((a, b))
            out.add((b, a))
    return frozenset(out)


def _ltrans_events(x: Execution):
    begins = [e for e in x.events if x.lab[e].method == "pt_begin"]
    ends = [e for e in x.events if x.lab[e].method == "pt_end"]
    writes = [e for e in x.events if x.lab[e].method == "pt_write"]
    reads = [e for e in x.events if x.lab[e].method == "pt_read"]
    news = [e for e in x.events if x.lab[e].method == "pt_new"]
    recovers = [e for e in x.events if x.lab[e].method == "pt_recover"]
    crashes = [e for e in x.events if x.lab[e].is_crash]
    return begins, ends, writes, reads, news, recovers, crashes


def ltrans_local_wellformed(x: Execution) -> Verdict:
    begins, ends, writes, reads, news, recovers, crashes = _ltrans_events(x)
    po = x.po
    hb = x.hb
    for e in ends:
        if not any((b, e) in po for b in begins):
            return Verdict.fail("cond 1: end without a prior begin")
    for e1 in ends:
        for e2 in ends:
            if (e1, e2) in po and not any((e1, b) in po and (b, e2) in po for b in begins):
                return Verdict.fail("cond 2: consecutive ends without a begin")
    for b1 in begins:
        for b2 in begins:
            if (b1, b2) in po and not any((b1, e) in po and (e, b2) in po for e in ends):
                return Verdict.fail("cond 2: nested transactions")
    for e in ends:
        for b in begins:
            if (e, b) not in hb and (b, e) not in hb:
                return Verdict.fail("cond 3: transactions not externally synchronized")
    b_tagged = _tagged(x, B_TAG)
    for c in crashes:
        for b in b_tagged:
            if (c, b) in hb and not any(
                (c, r) in hb and (r, b) in hb for r in recovers
            ):
                return Verdict.fail("cond 4: no recovery between crash and begin")
    for e in writes + reads:
        if T_TAG not in x.lab[e].tags:
            return Verdict.fail("cond 5: untagged transactional access")
    return Verdict.ok()


def ltrans_global_wellformed(x: Execution) -> Verdict:
    po = x.po
    t_tagged = _tagged(x, T_TAG)
    b_tagged = _tagged(x, B_TAG)
    e_tagged = _tagged(x, E_TAG)
    for t in t_tagged:
        if not any((b, t) in po for b in b_tagged):
            return Verdict.fail("cond 6: transactional event before any begin")
    for e in e_tagged:
        for t in t_tagged:
            if (e, t) in po and not any((e, b) in po and (b, t) in po for b in b_tagged):
                return Verdict.fail("cond 7: transactional event after end without new begin")
    return Verdict.ok()


def ltrans_local_consistent(x: Execution) -> Verdict:
    """Conditions 8-10: a reads-from with inverse total and functional on
    reads, reads access the most recent visible write (same era or
    persisted), and external reads come from persisted writes."""
    begins, ends, writes, reads, news, recovers, crashes = _ltrans_events(x)
    era = x.plain.era_of()
    hb = x.hb
    st = same_transaction(x)
    ptr = set(_tagged(x, PTR_TAG))

    def locof(e):
        l = x.lab[e]
        if l.method == "pt_new":
            return l.ret
        return l.args[0] if l.args else None

    sources = writes + news

    def written(e):
        l = x.lab[e]
        if l.method == "pt_new":
            return 0
        return l.args[1]

    def visible(w, r):
        return era[w] == era[r] or w in ptr or x.lab[w].method == "pt_new"

    for r in reads:
        if x.lab[r].ret is BOT:
            continue
        cands = [
            w
            for w in sources
            if locof(w) == locof(r)
            and written(w) == x.lab[r].ret
            and ((w, r) in hb or (w, r) in st)
            and visible(w, r)
        ]
        found = False
        for w in cands:
            blocked = any(
                w2 != w
                and w2 != r
                and locof(w2) == locof(r)
                and (w, w2) in hb
                and (w2, r) in hb
                and visible(w2, r)
                for w2 in sources
            )
            if blocked:
                continue
            if (w, r) not in st and w in writes and w not in ptr:
                continue  # cond 10: external reads need persisted sources
            found = True
            break
        if not found:
            return Verdict.fail(f"cond 8-10: read {r} has no admissible source")
    return Verdict.ok()


def ltrans_global_consistent(x: Execution) -> Verdict:
    """Conditions 11-14 over the tagged (possibly anonymized) execution."""
    hb = x.hb
    st = same_transaction(x)
    ptr = set(_tagged(x, PTR_TAG))
    t_tagged = set(_tagged(x, T_TAG))
    b_tagged = set(_tagged(x, B_TAG))
    e_tagged = set(_tagged(x, E_TAG))
    nvo_req = {
        (e, b) for e in e_tagged for b in b_tagged if (e, b) in hb
    }
    nvo = closure(nvo_req)
    if not is_irreflexive(nvo):
        return Verdict.fail("cond 11: cyclic transaction order")
    if any(b in ptr and a not in ptr for (a, b) in nvo):
        return Verdict.fail("cond 12: persisted set is not an nvo prefix")
    for (a, b) in st:
        if a in ptr and b in t_tagged and b not in ptr:
            return Verdict.fail("cond 13: partially persisted transaction")
    for e in e_tagged:
        if x.lab[e].is_complete and e not in ptr:
            return Verdict.fail("cond 14: completed transaction not persisted")
    return Verdict.ok()


def _ltrans_tag_hook(g: PlainExecution) -> Sequence[Mapping[int, FrozenSet[str]]]:
    """Persisted-marker candidates: subsets of transaction-relevant events,
    whole transactions at a time, committed transactions first."""
    tagged = [
        e
        for e in g.events
        if {T_TAG, B_TAG, E_TAG} & g.lab[e].tags and PTR_TAG not in g.lab[e].tags
    ]
    if not tagged:
        return [{}]
    # group by same-transaction over po (thread, segment between B/E tags)
    x = Execution(g)
    st = same_transaction(x)
    groups: List[List[int]] = []
    placed = set()
    for e in sorted(tagged):
        if e in placed:
            continue
        grp = sorted({e} | {b for (a, b) in st if a == e and b in set(tagged)})
        groups.append(grp)
        placed.update(grp)
    out: List[Mapping[int, FrozenSet[str]]] = []
    indices = list(range(len(groups)))
    for r in range(len(groups), -1, -1):
        for combo in itertools.combinations(indices, r):
            tags: Dict[int, FrozenSet[str]] = {}
            for gi in combo:
                for e in groups[gi]:
                    tags[e] = frozenset({PTR_TAG})
            out.append(tags)
    return out


def ltrans_spec() -> LibrarySpec:
    return LibrarySpec(
        interface=ltrans_interface(),
        local_consistent=ltrans_local_consistent,
        local_wellformed=ltrans_local_wellformed,
        global_consistent=ltrans_global_consistent,
        global_wellformed=ltrans_global_wellformed,
        tag_candidates=_ltrans_tag_hook,
    )


def ltrans_impl() -> SyntacticImpl:
    """The undo-log implementation over the weak registers and a durably
    linearizable queue: each write logs the register's previous value
    (location and value as two queue entries), commit appends the sentinel
    and fences, and recovery drains the log, keeping only the entries after
    the last sentinel, then writes those old values back."""
    return SyntacticImpl(
        name="ltrans",
        globals=(("log", parse_statements("g := qnew(); return g")),),
        methods={
            "pt_new": ((), parse_statements("r := rnew(); return r")),
            "pt_read": (("l",), parse_statements("v := rread(l); return v")),
            "pt_write": (
                ("l", "v"),
                parse_statements(
                    "old := rread(l); qappend(log, l); qappend(log, old); rwrite(l, v)"
                ),
            ),
            "pt_begin": ((), parse_statements("pfence()")),
            # fence first: the data writes must be durable before the commit
            # record (a durably linearizable append persists on completion)
            "pt_end": ((), parse_statements(f"pfence(); qappend(log, {COMMITTED})")),
            "pt_recover": (
                (),
                parse_statements(
                    f"""
                    w := qnew();
                    x := qpop(log);
                    while (x != null) {{
                      if (x == {COMMITTED}) {{ w := qnew() }} else {{ qappend(w, x) }};
                      x := qpop(log)
                    }};
                    l := qpop(w);
                    while (l != null) {{
                      v := qpop(w);
                      if (v != null) {{ rwrite(l, v) }};
                      l := qpop(w)
                    }}
                    """
                ),
            ),
        },
    )


# --------------------------------------------------------------------------
# Lock and the synchronized transaction wrapper
# --------------------------------------------------------------------------

LOCK_METHODS = {"lnew": 0, "lacq": 1, "lrel": 1}


def lock_interface() -> LibraryInterface:
    return LibraryInterface(
        name="lock",
        methods=LOCK_METHODS,
        constructors=frozenset({"lnew"}),
        loc=lambda l: (
            frozenset({l.ret}) if l.method == "lnew" and l.ret not in (None, BOT) else (
                frozenset({l.args[0]}) if l.method in ("lacq", "lrel") else frozenset()
            )
        ),
        returns={"lnew": "loc", "lacq": "void", "lrel": "void"},
    )


def lock_consistent(x: Execution) -> Verdict:
    """hb totally orders the lock events of each era into (acq·rel)*·acq?."""
    era = x.plain.era_of()
    n_eras = len(x.plain.crash_events()) + 1
    for k in range(n_eras):
        evs = [
            e
            for e in x.events
            if era[e] == k and x.lab[e].method in ("lacq", "lrel")
        ]
        for a in evs:
            for b in evs:
                if a != b and (a, b) not in x.hb and (b, a) not in x.hb:
                    return Verdict.fail("lock events not totally hb-ordered")
        word = [
            x.lab[e].method
            for e in sorted(evs, key=lambda e: sum(1 for o in evs if (o, e) in x.hb))
        ]
        expect_acq = True
        for m in word:
            if expect_acq and m != "lacq":
                return Verdict.fail("release without a held lock")
            if not expect_acq and m != "lrel":
                return Verdict.fail("double acquire")
            expect_acq = not expect_acq
    return Verdict.ok()


def _lock_sw_hook(g: PlainExecution) -> Sequence[FrozenSet[Tuple[int, int]]]:
    """Interleavings of critical sections: per era, per-thread (acq[,rel])
    sections ordered every possible way, rel -> next acq edges proposed."""
    era = g.era_of()
    n_eras = len(g.crash_events()) + 1
    per_era_sections: List[List[List[int]]] = []
    for k in range(n_eras):
        sections: List[List[int]] = []
        by_thread: Dict[int, List[int]] = {}
        for e in g.events:
            if era[e] == k and g.lab[e].method in ("lacq", "lrel"):
                by_thread.setdefault(g.lab[e].thread, []).append(e)
        for t, evs in sorted(by_thread.items(), key=lambda kv: repr(kv[0])):
            cur: List[int] = []
            for e in sorted(evs):
                cur.append(e)
                if g.lab[e].method == "lrel":
                    sections.append(cur)
                    cur = []
            if cur:
                sections.append(cur)
        per_era_sections.append(sections)
    options_per_era: List[List[FrozenSet[Tuple[int, int]]]] = []
    for sections in per_era_sections:
        if len(sections) <= 1:
            options_per_era.append([frozenset()])
            continue
        opts = []
        for perm in itertools.permutations(range(len(sections))):
            edges = set()
            ok = True
            for i in range(len(perm) - 1):
                last = sections[perm[i]][-1]
                nxt = sections[perm[i + 1]][0]
                if g.lab[last].method != "lrel":
                    ok = False  # only closed sections can precede others
                    break
                edges.add((last, nxt))
            if ok:
                opts.append(frozenset(edges))
        options_per_era.append(opts or [frozenset()])
    out = []
    for combo in itertools.product(*options_per_era):
        merged = frozenset().union(*combo) if combo else frozenset()
        if merged not in out:
            out.append(merged)
    return out


def lock_spec() -> LibrarySpec:
    return LibrarySpec(
        interface=lock_interface(),
        local_consistent=lock_consistent,
        sw_candidates=_lock_sw_hook,
    )


def lstrans_interface() -> LibraryInterface:
    return LibraryInterface(
        name="lstrans",
        methods={"lpt_begin": 0, "lpt_end": 0},
        method_tags={"lpt_begin": frozenset({B_TAG}), "lpt_end": frozenset({E_TAG})},
        tags_used=frozenset({T_TAG, PTR_TAG, B_TAG, E_TAG}),
        returns={"lpt_begin": "void", "lpt_end": "void"},
    )


def lstrans_spec() -> LibrarySpec:
    """The lock-wrapped transaction sections: external synchronization of
    begin/end becomes a guarantee, so local well-formedness only requires
    bracketing."""

    def wf(x: Execution) -> Verdict:
        po = x.po
        begins = [e for e in x.events if x.lab[e].method == "lpt_begin"]
        ends = [e for e in x.events if x.lab[e].method == "lpt_end"]
        for e in ends:
            if not any((b, e) in po for b in begins):
                return Verdict.fail("lpt_end without a prior lpt_begin")
        return Verdict.ok()

    return LibrarySpec(
        interface=lstrans_interface(),
        deps=frozenset({"ltrans"}),
        local_wellformed=wf,
    )


def lstrans_impl() -> SyntacticImpl:
    return SyntacticImpl(
        name="lstrans",
        globals=(("lock", parse_statements("g := lnew(); return g")),),
        methods={
            "lpt_begin": ((), parse_statements("lacq(lock); pt_begin()")),
            "lpt_end": ((), parse_statements("pt_end(); lrel(lock)")),
        },
    )


def lstrans_spec_and_impl() -> Tuple[LibrarySpec, SyntacticImpl]:
    return lstrans_spec(), lstrans_impl()


# --------------------------------------------------------------------------
# Counters over transactions
# --------------------------------------------------------------------------


def counter_interface() -> LibraryInterface:
    return LibraryInterface(
        name="counter",
        methods={"cnew": 0, "cinc": 1, "cread": 1},
        constructors=frozenset({"cnew"}),
        loc=lambda l: (
            frozenset({l.ret}) if l.method == "cnew" and l.ret not in (None, BOT) else (
                frozenset({l.args[0]}) if l.method in ("cinc", "cread") else frozenset()
            )
        ),
        tags_used=frozenset({T_TAG, PTR_TAG}),
        method_tags={"cinc": frozenset({T_TAG}), "cread": frozenset({T_TAG})},
        returns={"cnew": "loc", "cinc": "void", "cread": "value"},
    )


def counter_consistent(x: Execution) -> Verdict:
    """A read returns the number of increments hb-before it that are visible
    (same era or persisted)."""
    era = x.plain.era_of()
    ptr = set(_tagged(x, PTR_TAG))
    for r in [e for e in x.events if x.lab[e].method == "cread"]:
        if x.lab[r].ret is BOT:
            continue
        count = 0
        for i in [e for e in x.events if x.lab[e].method == "cinc"]:
            if x.lab[i].args[0] != x.lab[r].args[0]:
                continue
            if (i, r) in x.hb and (era[i] == era[r] or i in ptr):
                count += 1
        if x.lab[r].ret != count:
            return Verdict.fail(f"cread returned {x.lab[r].ret}, expected {count}")
    return Verdict.ok()


def counter_spec() -> LibrarySpec:
    return LibrarySpec(
        interface=counter_interface(),
        deps=frozenset({"ltrans"}),
        local_consistent=counter_consistent,
        tag_candidates=_ltrans_tag_hook,
    )


def counter_impl() -> SyntacticImpl:
    return SyntacticImpl(
        name="counter",
        methods={
            "cnew": ((), parse_statements("r := pt_new(); return r")),
            "cinc": (("c",), parse_statements("v := pt_read(c); pt_write(c, v + 1)")),
            "cread": (("c",), parse_statements("v := pt_read(c); return v")),
        },
    )


def counter_spec_and_impl() -> Tuple[LibrarySpec, SyntacticImpl]:
    return counter_spec(), counter_impl()


def mmcounter_interface() -> LibraryInterface:
    return LibraryInterface(
        name="mmcounter",
        methods={"mmnew": 0, "mmadd": 2, "mmmin": 1, "mmmax": 1},
        constructors=frozenset({"mmnew"}),
        loc=lambda l: (
            frozenset({l.ret, l.ret + 1})
            if l.method == "mmnew" and l.ret not in (None, BOT)
            else (
                frozenset({l.args[0], l.args[0] + 1})
                if l.method in ("mmadd", "mmmin", "mmmax")
                else frozenset()
            )
        ),
        tags_used=frozenset({T_TAG, PTR_TAG}),
        method_tags={
            "mmadd": frozenset({T_TAG}),
            "mmmin": frozenset({T_TAG}),
            "mmmax": frozenset({T_TAG}),
        },
        returns={"mmnew": "loc", "mmadd": "void", "mmmin": "value", "mmmax": "value"},
    )


def _s_mmcounter_step(state, c: Call):
    # state: loc -> (min, max); empty = (0, 0); positive values only
    state = dict(state)
    if c.method == "mmnew":
        state[c.ret] = (0, 0)
        return state
    x = c.args[0]
    lo, hi = state.get(x, (0, 0))
    if c.method == "mmadd":
        n = c.args[1]
        state[x] = (n if lo == 0 else min(lo, n), n if hi == 0 else max(hi, n))
        return state
    if c.method == "mmmin":
        return state if c.ret == lo else None
    if c.method == "mmmax":
        return state if c.ret == hi else None
    return None


S_MMCOUNTER = SequentialSpec("mmcounter", dict, _s_mmcounter_step)


def mmcounter_consistent(x: Execution, budget: int = 100_000) -> Verdict:
    """Era-wise persisted-prefix linearization: events of earlier eras count
    only when persisted; the final era contributes everything."""

    def keep(l: Label, era: int, last: bool) -> str:
        if last:
            return "keep" if l.is_complete else "optional"
        if PTR_TAG in l.tags or l.method == "mmnew":
            return "keep" if l.is_complete else "optional"
        return "drop"

    return execution_linearizable(x, S_MMCOUNTER, keep=keep, budget=budget, era_monotone=True)


def mmcounter_spec() -> LibrarySpec:
    return LibrarySpec(
        interface=mmcounter_interface(),
        deps=frozenset({"ltrans"}),
        local_consistent=mmcounter_consistent,
        tag_candidates=_ltrans_tag_hook,
    )


def mmcounter_impl() -> SyntacticImpl:
    """Min in the first transaction register, max in the second (positive
    values; zero marks the empty counter)."""
    return SyntacticImpl(
        name="mmcounter",
        methods={
            "mmnew": ((), parse_statements("a := pt_new(); b := pt_new(); return a")),
            "mmadd": (
                ("x", "n"),
                parse_statements(
                    "v := pt_read(x); "
                    "if (v == 0) { pt_write(x, n) } else { pt_write(x, min(n, v)) }; "
                    "w := pt_read(x + 1); pt_write(x + 1, max(n, w))"
                ),
            ),
            "mmmin": (("x",), parse_statements("v := pt_read(x); return v")),
            "mmmax": (("x",), parse_statements("v := pt_read(x + 1); return v")),
        },
    )


def mmcounter_spec_and_impl() -> Tuple[LibrarySpec, SyntacticImpl]:
    return mmcounter_spec(), mmcounter_impl()


def mmcounter_impl_broken() -> SyntacticImpl:
    """Non-example: the maximum lives in a plain weak register, breaking the
    atomicity guarantee of transactions."""
    impl = mmcounter_impl()
    methods = dict(impl.methods)
    methods["mmadd"] = (
        ("x", "n"),
        parse_statements(
            "v := pt_read(x); "
            "if (v == 0) { pt_write(x, n) } else { pt_write(x, min(n, v)) }; "
            "w := rread(x + 1); rwrite(x + 1, max(n, w))"
        ),
    )
    methods["mmmax"] = (("x",), parse_statements("v := rread(x + 1); return v"))
    return SyntacticImpl(name="mmcounter_broken", methods=methods)


# --------------------------------------------------------------------------
# Sound prefix pruning for SC-mode interpretation
# --------------------------------------------------------------------------


def sc_prune_factory(first_phase_exact: bool = True):
    """Prefix pruning for single-threaded programs over the weak registers
    and the durable queue.

    First phase: totally ordered crash-free prefixes must satisfy the
    sequential register/queue semantics outright, so infeasible call results
    are cut immediately.  Later phases only enforce value membership (a pop
    can return null or a value some phase ever appended; a read can return
    0, null, or a value some phase ever wrote to that register), which is
    sound under any persisted-set choice.
    """

    def factory(phase_index: int, earlier):
        if phase_index == 0 and first_phase_exact:

            def prune_first(trace) -> bool:
                queues: Dict[int, List] = {}
                regs: Dict[int, object] = {}
                for l in trace:
                    if l.is_crash or not l.is_complete:
                        continue
                    m = l.method
                    if m == "qnew":
                        queues[l.ret] = []
                    elif m in ("qappend", "qpush"):
                        queues.setdefault(l.args[0], []).append(l.args[1])
                    elif m == "qpop":
                        q = queues.setdefault(l.args[0], [])
                        want = q.pop(0) if q else None
                        if l.ret != want:
                            return False
                    elif m == "rnew":
                        regs[l.ret] = 0
                    elif m == "rwrite":
                        regs[l.args[0]] = l.args[1]
                    elif m == "rread":
                        if l.ret != regs.get(l.args[0], 0):
                            return False
                return True

            return prune_first

        # possible surviving queue contents and register values, per prior run
        contents: Dict[int, Set[Tuple]] = {}
        written: Dict[int, Set] = {}
        prior = earlier[-1] if earlier else None
        if prior is not None:
            run_traces = []
            thread_traces = [
                r.trace for runs in prior.thread_runs.values() for r in runs
            ] or [()]
            for tr in thread_traces:
                run_traces.append(tuple(prior.globals_trace) + tuple(tr))
            for tr in run_traces:
                qs: Dict[int, List] = {}

                def snapshot():
                    for q, content in qs.items():
                        contents.setdefault(q, set()).add(tuple(content))

                snapshot()
                for l in tr:
                    if l.is_crash:
                        continue
                    if l.method == "qnew" and l.ret is not None:
                        qs[l.ret] = []
                    elif l.method in ("qappend", "qpush"):
                        qs.setdefault(l.args[0], []).append(l.args[1])
                    elif l.method == "qpop" and l.ret is not None:
                        q = qs.setdefault(l.args[0], [])
                        if q:
                            q.pop(0)
                    elif l.method == "rwrite":
                        written.setdefault(l.args[0], set()).add(l.args[1])
                    snapshot()  # the crash can land after any step

        def prune_later(trace) -> bool:
            own_queues: Dict[int, List] = {}
            popped: Dict[int, List] = {}
            own_regs: Dict[int, object] = {}
            for l in trace:
                if l.is_crash or not l.is_complete:
                    continue
                m = l.method
                if m == "qnew":
                    own_queues[l.ret] = []
                elif m in ("qappend", "qpush"):
                    if l.args[0] in own_queues:
                        own_queues[l.args[0]].append(l.args[1])
                elif m == "qpop":
                    q = l.args[0]
                    if q in own_queues:
                        want = own_queues[q].pop(0) if own_queues[q] else None
                        if l.ret != want:
                            return False
                    else:
                        popped.setdefault(q, []).append(l.ret)
                        seq = popped[q]
                        vals = [v for v in seq if v is not None]
                        # after the first null the queue stays empty
                        first_null = next((i for i, v in enumerate(seq) if v is None), None)
                        if first_null is not None and any(
                            v is not None for v in seq[first_null:]
                        ):
                            return False
                        cands = contents.get(q, {()})
                        ok = any(
                            tuple(vals) == c[: len(vals)]
                            and (first_null is None or len(vals) == len(c))
                            for c in cands
                        )
                        if not ok:
                            return False
                elif m == "rwrite":
                    own_regs[l.args[0]] = l.args[1]
                elif m == "rread":
                    x = l.args[0]
                    if x in own_regs:
                        if l.ret != own_regs[x]:
                            return False
                    else:
                        if l.ret not in ({0} | written.get(x, set())):
                            return False
            return True

        return prune_later

    return factory


# --------------------------------------------------------------------------
# Built-in registry (CLI names)
# --------------------------------------------------------------------------


def builtin_spec(name: str, budget: int = 100_000) -> LibrarySpec:
    """Specs addressable by name: px86, flit, mirror, ltrans, lstrans, lock,
    durqueue, weakreg, counter, mmcounter, reg, lin:<seq>, durlin:<seq>."""
    table: Dict[str, Callable[[], LibrarySpec]] = {
        "px86": lambda: px86_spec(budget=max(budget, 100_000)),
        "flit": lambda: flit_spec(budget),
        "mirror": lambda: mirror_spec(budget),
        "ltrans": ltrans_spec,
        "lstrans": lstrans_spec,
        "lock": lock_spec,
        "durqueue": durqueue_spec,
        "weakreg": weakreg_spec,
        "counter": counter_spec,
        "mmcounter": mmcounter_spec,
        "reg": reg_lin_spec,
        "scmem": scmem_spec,
    }
    if name in table:
        return table[name]()
    if name.startswith("lin:") or name.startswith("durlin:"):
        kind, _, seq = name.partition(":")
        seqs = {"queue": S_QUEUE_ALIASED, "register": S_REG_ABSTRACT, "reg": S_REG_ABSTRACT, "mmcounter": S_MMCOUNTER}
        if seq not in seqs:
            raise KeyError(f"unknown sequential spec {seq}")
        ifaces = {"queue": queue_interface(), "register": _register_iface(), "reg": _register_iface(), "mmcounter": mmcounter_interface()}
        maker = make_lin_spec if kind == "lin" else make_durlin_spec
        return maker(seqs[seq], ifaces[seq], budget=budget)
    raise KeyError(f"unknown spec {name}")


def _s_mem_step(state, c: Call):
    # sequentially consistent flat memory over the px86 method names;
    # fences and flushes are no-ops
    state = dict(state)
    if c.method == "alloc":
        state[c.ret] = 0
        return state
    if c.method == "store":
        state[c.args[0]] = c.args[1]
        return state
    if c.method == "load":
        return state if c.ret == state.get(c.args[0], 0) else None
    if c.method == "upd":
        if state.get(c.args[0], 0) != c.args[1]:
            return None
        state[c.args[0]] = c.args[2]
        return state
    if c.method in ("flush", "fo", "mfence", "sfence"):
        return state
    return None


S_MEM = SequentialSpec("scmem", dict, _s_mem_step)


def scmem_spec(budget: int = 200_000) -> LibrarySpec:
    """The px86 interface under interleaving (SC) semantics: a reference
    point for litmus comparisons (the weak outcomes disappear)."""
    from .px86 import px86_interface

    iface = px86_interface()
    iface = LibraryInterface(
        name="scmem",
        methods=iface.methods,
        constructors=iface.constructors,
        loc=iface.loc,
        method_tags=iface.method_tags,
        returns=iface.returns,
        call_semantics=iface.call_semantics,
    )

    def check(x: Execution) -> Verdict:
        return execution_linearizable(x, S_MEM, budget=budget, era_monotone=True)

    return LibrarySpec(interface=iface, local_consistent=check)


def load_manifest(path) -> Tuple["Collection", dict]:
    """Build a Collection from a JSON manifest.

    Shape: {"libraries": [{"name": "px86", "budget": 50000}, ...],
            "domain": [0, 1], "unroll": 4}.
    Returns the frozen-free collection plus the leftover interpreter options.
    """
    import json
    from pathlib import Path

    from .framework import Collection

    data = json.loads(Path(path).read_text(encoding="utf-8"))
    coll = Collection()
    for entry in data.get("libraries", []):
        if isinstance(entry, str):
            entry = {"name": entry}
        coll.register(builtin_spec(entry["name"], budget=int(entry.get("budget", 100_000))))
    options = {
        "domain": tuple(data.get("domain", ())),
        "unroll": data.get("unroll"),
    }
    return coll, options


def builtin_impl(name: str) -> SyntacticImpl:
    table: Dict[str, Callable[[], SyntacticImpl]] = {
        "flit": flit_impl,
        "flit_no_fo": flit_impl_mutated_no_fo,
        "mirror": mirror_impl,
        "ltrans": ltrans_impl,
        "lstrans": lstrans_impl,
        "counter": counter_impl,
        "mmcounter": mmcounter_impl,
    }
    if name not in table:
        raise KeyError(f"unknown implementation {name}")
    return table[name]()
