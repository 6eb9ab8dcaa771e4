"""Concrete small-step machine for ANFJ.

States are (statement, frame pointer, store, continuation stack, time).
Time is the full label history, most recent first, so (label, time) pairs
handed out by the allocator are fresh at every step. The store maps
(name, pointer) addresses to class/object-pointer values and is updated
strongly. Continuations are a linked stack of call frames and handler
frames; exception dispatch walks it one frame per step, which is what the
abstract pushdown system later mirrors edge for edge.

The machine is deterministic: at most one rule applies to any state.
Non-terminal states with no applicable rule are stuck (unbound reads,
failed dispatch), reported as an Outcome rather than an exception.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .syntax import (
    OBJECT, THIS, Assign, Cast, FieldRef, Invoke, LabeledProgram, New,
    PopHandler, Return, Stmt, Throw, TryCatch, VarRef,
)

Time = tuple[int, ...]


def tick(label: int, t: Time) -> Time:
    return (label,) + t


class _Pointer:
    """Base for frame/object pointers: a (site, time) pair with cached hash."""

    __slots__ = ("site", "time", "_hash")

    def __init__(self, site: Optional[int], time: Time):
        self.site = site
        self.time = time
        self._hash = hash((self.__class__.__name__, site, time))

    def __eq__(self, other):
        return (self.__class__ is other.__class__
                and self.site == other.site and self.time == other.time)

    def __hash__(self):
        return self._hash

    def __repr__(self):
        t = ",".join(str(x) for x in self.time)
        return f"{self._tag}({self.site},[{t}])"


class FramePointer(_Pointer):
    _tag = "fp"


class ObjectPointer(_Pointer):
    _tag = "op"


FP0 = FramePointer(None, ())


@dataclass(frozen=True)
class Addr:
    base: str                      # variable or field name
    ptr: FramePointer | ObjectPointer


@dataclass(frozen=True)
class Value:
    class_name: str
    op: ObjectPointer


# continuations ---------------------------------------------------------------

@dataclass(frozen=True)
class Halt:
    pass


def _kont_eq(a, b) -> bool:
    # iterative: chains can be thousands of frames deep
    while True:
        if a is b:
            return True
        if type(a) is not type(b):
            return False
        if isinstance(a, Halt):
            return True
        if isinstance(a, Fun):
            if a.var != b.var or a.target != b.target or a.fp != b.fp:
                return False
        else:
            if (a.class_name != b.class_name or a.var != b.var
                    or a.target != b.target or a.fp != b.fp):
                return False
        a, b = a.next, b.next


@dataclass(frozen=True, eq=False)
class Fun:
    var: str                       # caller variable receiving the result
    target: Stmt                   # statement to resume at
    fp: FramePointer               # caller frame pointer
    next: "Kont"

    def __eq__(self, other):
        return isinstance(other, (Fun, Handle, Halt)) and _kont_eq(self, other)

    def __hash__(self):
        # shallow on purpose: hashing must not walk the chain
        return hash(("Fun", self.var, self.target, self.fp))


@dataclass(frozen=True, eq=False)
class Handle:
    class_name: str                # caught class
    var: str                       # catch variable
    target: Stmt                   # handler head
    fp: FramePointer
    next: "Kont"

    def __eq__(self, other):
        return isinstance(other, (Fun, Handle, Halt)) and _kont_eq(self, other)

    def __hash__(self):
        return hash(("Handle", self.class_name, self.var, self.target, self.fp))


Kont = Halt | Fun | Handle
HALT = Halt()


def kont_depth(k: Kont) -> int:
    d = 0
    while not isinstance(k, Halt):
        d += 1
        k = k.next
    return d


def kont_frames(k: Kont) -> list[Kont]:
    out = []
    while not isinstance(k, Halt):
        out.append(k)
        k = k.next
    return out


# states and outcomes ---------------------------------------------------------

@dataclass(frozen=True)
class ConcreteState:
    stmt: Stmt
    fp: FramePointer
    store: dict[Addr, Value]
    kont: Kont
    time: Time


@dataclass(frozen=True)
class Halted:
    value: Value


@dataclass(frozen=True)
class Uncaught:
    value: Value


@dataclass(frozen=True)
class Stuck:
    state: ConcreteState
    reason: str


@dataclass(frozen=True)
class FuelExhausted:
    state: ConcreteState


Outcome = Halted | Uncaught | Stuck | FuelExhausted


class StuckError(Exception):
    def __init__(self, reason: str):
        self.reason = reason
        super().__init__(reason)


def inject(lp: LabeledProgram) -> ConcreteState:
    """Initial state: the entry method's first statement, fresh frame,
    empty store, halt continuation, empty time."""
    entry = lp.entry_method
    return ConcreteState(lp.first_stmt(entry), FP0, {}, HALT, ())


def is_terminal(st: ConcreteState) -> bool:
    return isinstance(st.kont, Halt) and isinstance(st.stmt, (Return, Throw))


def _lookup(st: ConcreteState, var: str) -> Value:
    v = st.store.get(Addr(var, st.fp))
    if v is None:
        raise StuckError(f"unbound variable {var!r}")
    return v


def _succ(lp: LabeledProgram, s: Stmt) -> Stmt:
    nxt = lp.succ_map.get(s.label)
    if nxt is None:
        raise StuckError(f"no successor for label {s.label}")
    return nxt


def apply_constructor(lp: LabeledProgram, class_name: str, op: ObjectPointer,
                      args: tuple[Value, ...]) -> tuple[dict[Addr, Value], ObjectPointer]:
    """Run the constructor chain for class_name against the fresh object
    pointer op: parameters bind positionally, the super call forwards its
    parameter prefix, and each this.f = x init writes one field address.
    Returns the store delta and op."""
    delta: dict[Addr, Value] = {}

    def chain(cname: str, argv: list[Value]):
        if cname == OBJECT:
            return
        _, konst = lp.class_lookup(cname)
        env = {name: val for (_, name), val in zip(konst.params, argv)}
        chain(lp.classes[cname].parent, [env[a] for a in konst.super_args])
        for fname, pname in konst.inits:
            delta[Addr(fname, op)] = env[pname]

    chain(class_name, list(args))
    return delta, op


def step(lp: LabeledProgram, st: ConcreteState) -> ConcreteState:
    """One transition. Raises StuckError when no rule applies and
    ValueError on terminal states."""
    if is_terminal(st):
        raise ValueError("step on terminal state")
    s, fp, sigma, kont, t = st.stmt, st.fp, st.store, st.kont, st.time
    t2 = tick(s.label, t)

    if isinstance(s, Assign):
        e = s.exp
        if isinstance(e, VarRef):
            d = _lookup(st, e.var)
            sigma2 = dict(sigma)
            sigma2[Addr(s.var, fp)] = d
            return ConcreteState(_succ(lp, s), fp, sigma2, kont, t2)
        if isinstance(e, Cast):
            # the value moves unchanged; the named class is not consulted
            d = _lookup(st, e.var)
            sigma2 = dict(sigma)
            sigma2[Addr(s.var, fp)] = d
            return ConcreteState(_succ(lp, s), fp, sigma2, kont, t2)
        if isinstance(e, FieldRef):
            d = _lookup(st, e.var)
            fv = sigma.get(Addr(e.field, d.op))
            if fv is None:
                raise StuckError(f"unbound field {e.field!r} on {d.class_name}")
            sigma2 = dict(sigma)
            sigma2[Addr(s.var, fp)] = fv
            return ConcreteState(_succ(lp, s), fp, sigma2, kont, t2)
        if isinstance(e, Invoke):
            d0 = _lookup(st, e.receiver)
            method = lp.method_lookup(d0.class_name, e.method)
            if method is None:
                raise StuckError(f"no method {e.method!r} on class {d0.class_name!r}")
            argv = [_lookup(st, a) for a in e.args]
            fp2 = FramePointer(s.label, t2)
            sigma2 = dict(sigma)
            sigma2[Addr(THIS, fp2)] = d0
            for (_, pname), val in zip(method.params, argv):
                sigma2[Addr(pname, fp2)] = val
            kont2 = Fun(s.var, _succ(lp, s), fp, kont)
            return ConcreteState(lp.first_stmt(method), fp2, sigma2, kont2, t2)
        if isinstance(e, New):
            argv = tuple(_lookup(st, a) for a in e.args)
            op = ObjectPointer(s.label, t2)
            delta, op = apply_constructor(lp, e.class_name, op, argv)
            sigma2 = dict(sigma)
            sigma2.update(delta)
            sigma2[Addr(s.var, fp)] = Value(e.class_name, op)
            return ConcreteState(_succ(lp, s), fp, sigma2, kont, t2)
        raise StuckError(f"unknown expression {e!r}")

    if isinstance(s, TryCatch):
        kont2 = Handle(s.catch_class, s.catch_var, s.handler[0], fp, kont)
        return ConcreteState(_succ(lp, s), fp, sigma, kont2, t2)

    if isinstance(s, Return):
        d = _lookup(st, s.var)
        if isinstance(kont, Fun):
            sigma2 = dict(sigma)
            sigma2[Addr(kont.var, kont.fp)] = d
            return ConcreteState(kont.target, kont.fp, sigma2, kont.next, t2)
        if isinstance(kont, Handle):
            return ConcreteState(s, fp, sigma, kont.next, t2)
        raise StuckError("return with empty continuation")  # unreachable, run() handles

    if isinstance(s, Throw):
        d = _lookup(st, s.var)
        if isinstance(kont, Handle):
            if lp.subtype(d.class_name, kont.class_name):
                sigma2 = dict(sigma)
                sigma2[Addr(kont.var, kont.fp)] = d
                return ConcreteState(kont.target, kont.fp, sigma2, kont.next, t2)
            return ConcreteState(s, fp, sigma, kont.next, t2)
        if isinstance(kont, Fun):
            return ConcreteState(s, fp, sigma, kont.next, t2)
        raise StuckError("throw with empty continuation")  # unreachable, run() handles

    if isinstance(s, PopHandler):
        if isinstance(kont, Handle):
            return ConcreteState(_succ(lp, s), fp, sigma, kont.next, t2)
        raise StuckError("pophandler without a handler frame on top")

    raise StuckError(f"unknown statement {type(s).__name__}")


DEFAULT_FUEL = 100_000


def run(lp: LabeledProgram, state0: Optional[ConcreteState] = None,
        fuel: int = DEFAULT_FUEL) -> tuple[Outcome, list[ConcreteState]]:
    """Drive the machine from state0 (default: inject(lp)).

    Returns the outcome and the visited-state trace; at most fuel states
    are visited and stored."""
    st = inject(lp) if state0 is None else state0
    if fuel <= 0:
        return FuelExhausted(st), []
    trace = [st]
    while not is_terminal(st):
        if len(trace) == fuel:
            return FuelExhausted(st), trace
        try:
            st = step(lp, st)
        except StuckError as err:
            return Stuck(st, err.reason), trace
        trace.append(st)
    s = st.stmt
    try:
        d = _lookup(st, s.var)
    except StuckError as err:
        return Stuck(st, err.reason), trace
    if isinstance(s, Return):
        return Halted(d), trace
    return Uncaught(d), trace
