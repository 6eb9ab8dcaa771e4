"""Dyck state graph synthesis.

The analysis explores abstract control states with a worklist, but the
stack is never materialized: each node carries a set of possible top
frames (TF), and balanced push/pop paths are collapsed into summary
epsilon edges as they are discovered. The bookkeeping lives in six maps:

  eps_pred / eps_succ   epsilon reachability, kept transitively closed
  top_frames (TF)       every frame observed on top of the stack at a node
  psf                   every frame possibly anywhere on the stack (for gc)
  pfp                   (node, frame) -> push sources: who pushed that
                        frame onto a balanced path reaching the node
  nep                   push sources reaching the node (non-epsilon preds)

A pop edge (s1, pop g, s2) turns each push source w in pfp[(s1, g)] into
a summary edge (w, eps, s2): the push and the pop cancel, so anything
that held before the push holds after the pop. Summaries feed the same
closure, so deeper cancellations cascade.

Per-node stores come in two layers. The full store is the monotone join
of everything ever flowed into the node; growth of it (or of TF, or of
PSF when gc is on) re-enqueues the node, and monotonicity is what makes
the fixpoint terminate even though the graph has cycles. The visible
store is the garbage-collected view of the full store, recomputed from
the node's live roots and stack summary at every dequeue; it is what
stepping, export, and metrics see. With gc off the two layers are the
same object.
"""

from __future__ import annotations

import time as _time
from collections import deque
from dataclasses import dataclass, field

from .domain import (
    BOTTOM, ControlState, Epsilon, EPSILON, Policy, Pop, Push, frame_key,
    inject_abstract, next as abstract_next, state_key, store_join,
)
from .gc import eagc
from .syntax import LabeledProgram


@dataclass
class Budget:
    max_nodes: int = 200_000
    max_edges: int = 2_000_000
    max_seconds: float = 60.0


class BudgetExceeded(Exception):
    def __init__(self, what: str, nodes: int, edges: int, elapsed: float):
        super().__init__(
            f"analysis budget exceeded ({what}): "
            f"{nodes} nodes, {edges} edges, {elapsed:.1f}s")
        self.what = what
        self.nodes = nodes
        self.edges = edges
        self.elapsed = elapsed


class IECG:
    """The six closure maps plus change bookkeeping for the engine.

    Map mutations funnel through the add_* helpers so growth is recorded
    in the dirty_* lists; the engine drains those to schedule re-steps
    and summary creation. psf_deps remembers who read whose PSF so a
    later growth can be chased to fixpoint."""

    def __init__(self):
        self.eps_pred: dict = {}
        self.eps_succ: dict = {}
        self.top_frames: dict = {}
        self.psf: dict = {}
        self.pfp: dict = {}
        self.nep: dict = {}
        self.psf_deps: dict = {}
        self.dirty_tf: list = []       # nodes whose TF grew
        self.dirty_psf: list = []      # nodes whose PSF grew
        self.dirty_pfp: list = []      # (node, frame, new push source)

    def tf(self, s) -> set:
        return self.top_frames.get(s, set())

    def add_tf(self, s, frame) -> bool:
        have = self.top_frames.setdefault(s, set())
        if frame in have:
            return False
        have.add(frame)
        self.dirty_tf.append(s)
        return True

    def add_pfp(self, s, frame, src) -> bool:
        have = self.pfp.setdefault((s, frame), set())
        if src in have:
            return False
        have.add(src)
        self.dirty_pfp.append((s, frame, src))
        return True


def update_psf(s, top_frames: dict, psf: dict, nep: dict,
               eps_pred: dict) -> set:
    """The PSF a node should have right now: its own top frames plus
    everything possibly on the stack at any predecessor."""
    out = set(top_frames.get(s, ()))
    out |= psf.get(s, set())
    for p in nep.get(s, set()) | eps_pred.get(s, set()):
        out |= psf.get(p, set())
    return out


def _refresh_psf(s, iecg: IECG) -> None:
    preds = iecg.nep.get(s, set()) | iecg.eps_pred.get(s, set())
    for p in preds:
        iecg.psf_deps.setdefault(p, set()).add(s)
    new = update_psf(s, iecg.top_frames, iecg.psf, iecg.nep, iecg.eps_pred)
    old = iecg.psf.get(s)
    if old is None or new != old:
        iecg.psf[s] = new
        iecg.dirty_psf.append(s)


def propagate(s1, s2, iecg: IECG) -> IECG:
    """Record an epsilon edge s1 -> s2 and close the maps over it.

    Everything epsilon-before s1 reaches everything epsilon-after s2, so
    the closure works on the cross product: successors and top-frame
    pools flow forward, predecessors flow backward, and push-source
    entries are pulled across from every predecessor (a frame on top at
    a predecessor is still on top here, with the same pushers)."""
    preds = set(iecg.eps_pred.get(s1, ())) | {s1}
    nexts = set(iecg.eps_succ.get(s2, ())) | {s2}
    pool = set()
    for p in preds:
        pool |= iecg.tf(p)
    for p in preds:
        iecg.eps_succ.setdefault(p, set()).update(nexts)
    for n in nexts:
        iecg.eps_pred.setdefault(n, set()).update(preds)
        for f in pool:
            iecg.add_tf(n, f)
        for p in preds:
            for f in iecg.tf(p):
                for w in iecg.pfp.get((p, f), ()):
                    iecg.add_pfp(n, f, w)
        _refresh_psf(n, iecg)
    return iecg


def process_push(s1, frame, s2, iecg: IECG) -> IECG:
    """A push edge (s1, push frame, s2): the frame is now on top at s2
    and at everything epsilon-reachable from s2, pushed from s1."""
    for s in set(iecg.eps_succ.get(s2, ())) | {s2}:
        iecg.add_tf(s, frame)
        iecg.add_pfp(s, frame, s1)
        iecg.nep.setdefault(s, set()).add(s1)
        _refresh_psf(s, iecg)
    return iecg


def process_pop(s1, frame, s2, iecg: IECG) -> list:
    """A pop edge (s1, pop frame, s2) cancels against every recorded
    push of that frame reaching s1: each push source w yields a summary
    epsilon edge (w, s2), propagated here and returned for the caller to
    record in the graph."""
    pairs = []
    for w in sorted(iecg.pfp.get((s1, frame), ()), key=state_key):
        propagate(w, s2, iecg)
        pairs.append((w, s2))
    return pairs


@dataclass
class DSG:
    """Analysis result: the explored graph, per-node stores, the closure
    maps, and run metadata. node_stores holds the visible (collected)
    stores; full_stores the raw monotone joins backing them."""

    lp: LabeledProgram
    policy: Policy
    initial: ControlState
    nodes: set = field(default_factory=set)
    edges: set = field(default_factory=set)
    node_stores: dict = field(default_factory=dict)
    full_stores: dict = field(default_factory=dict)
    iecg: IECG = field(default_factory=IECG)
    diagnostics: set = field(default_factory=set)
    global_store: dict = field(default_factory=dict)
    stats: dict = field(default_factory=dict)

    def node_store(self, q) -> dict:
        if self.policy.store_mode == "global":
            return self.global_store
        return self.node_stores.get(q, {})


def step_ipds(lp, q, kappa, psf, sigma, policy, diags=None) -> list:
    """Successor (action, state) pairs of q under top frame kappa, with
    the store collected first when gc is on."""
    return [(a, s) for a, s, _ in step(lp, q, kappa, psf, sigma, policy, diags)]


def step(lp, q, kappa, psf, sigma, policy, diags=None) -> list:
    """Successor (action, state, store) triples of q under top frame
    kappa (None for the empty stack)."""
    if policy.gc:
        sigma = eagc(q, sigma, psf, lp, policy)
    out = []
    for q2, act, sg2 in abstract_next(lp, q, sigma, kappa, policy, diags):
        out.append((act, q2, sg2))
    return out


class _Engine:
    def __init__(self, lp: LabeledProgram, policy: Policy, budget: Budget):
        self.lp = lp
        self.policy = policy
        self.budget = budget
        q0 = inject_abstract(lp)
        self.dsg = DSG(lp=lp, policy=policy, initial=q0)
        self.dsg.nodes.add(q0)
        self.dsg.node_stores[q0] = {}
        self.iecg = self.dsg.iecg
        self.iecg.top_frames[q0] = {BOTTOM}
        self.iecg.psf[q0] = {BOTTOM}
        self.work = deque([q0])
        self.in_work = {q0}
        self.pop_targets: dict = {}    # (node, frame) -> set of pop dests
        self.pending_edges: deque = deque()
        self.t0 = _time.monotonic()
        self.diag_list: list = []

    # -- bookkeeping ----------------------------------------------------

    def enqueue(self, s) -> None:
        if s not in self.in_work:
            self.in_work.add(s)
            self.work.append(s)

    def full_store_of(self, s) -> dict:
        if self.policy.store_mode == "global":
            return self.dsg.global_store
        return self.dsg.full_stores.get(s, {})

    def join_store(self, s, sigma2: dict) -> None:
        """Join into the monotone layer; only growth there re-enqueues
        (the collected view may shrink bindings a predecessor keeps
        re-delivering, which must not count as progress)."""
        if self.policy.store_mode == "global":
            joined = store_join(self.dsg.global_store, sigma2)
            if joined != self.dsg.global_store:
                self.dsg.global_store = joined
                for n in self.dsg.nodes:
                    self.enqueue(n)
            return
        old = self.dsg.full_stores.get(s, {})
        joined = store_join(old, sigma2)
        if joined != old:
            self.dsg.full_stores[s] = joined
            if not self.policy.gc:
                self.dsg.node_stores[s] = joined
            self.enqueue(s)

    def add_node(self, s) -> None:
        if s in self.dsg.nodes:
            return
        if len(self.dsg.nodes) >= self.budget.max_nodes:
            raise BudgetExceeded("nodes", len(self.dsg.nodes),
                                 len(self.dsg.edges), self.elapsed())
        self.dsg.nodes.add(s)
        if self.policy.store_mode != "global":
            self.dsg.node_stores.setdefault(s, {})
            self.dsg.full_stores.setdefault(s, {})
        self.enqueue(s)

    def add_edge(self, s1, act, s2, dispatch: bool = True) -> None:
        edge = (s1, act, s2)
        if edge in self.dsg.edges:
            return
        if len(self.dsg.edges) >= self.budget.max_edges:
            raise BudgetExceeded("edges", len(self.dsg.nodes),
                                 len(self.dsg.edges), self.elapsed())
        self.dsg.edges.add(edge)
        if dispatch:
            self.pending_edges.append(edge)

    def elapsed(self) -> float:
        return _time.monotonic() - self.t0

    # -- closure maintenance --------------------------------------------

    def drain(self) -> None:
        """Dispatch pending edges into the closure maps and chase every
        consequence (summaries, PSF growth, re-enqueues) to a fixpoint."""
        iecg = self.iecg
        while True:
            if self.pending_edges:
                s1, act, s2 = self.pending_edges.popleft()
                if isinstance(act, Epsilon):
                    propagate(s1, s2, iecg)
                elif isinstance(act, Push):
                    process_push(s1, act.frame, s2, iecg)
                else:
                    key = (s1, act.frame)
                    self.pop_targets.setdefault(key, set()).add(s2)
                    for w, dst in process_pop(s1, act.frame, s2, iecg):
                        self.add_edge(w, EPSILON, dst, dispatch=False)
                continue
            if iecg.dirty_pfp:
                s, f, w = iecg.dirty_pfp.pop()
                # a new push source behind an already-seen pop edge
                # yields summaries the pop itself could not have known
                for dst in sorted(self.pop_targets.get((s, f), ()),
                                  key=state_key):
                    edge = (w, EPSILON, dst)
                    if edge not in self.dsg.edges:
                        self.add_edge(w, EPSILON, dst, dispatch=False)
                        propagate(w, dst, iecg)
                continue
            if iecg.dirty_tf:
                self.enqueue(iecg.dirty_tf.pop())
                continue
            if iecg.dirty_psf:
                s = iecg.dirty_psf.pop()
                for dep in sorted(iecg.psf_deps.get(s, ()), key=state_key):
                    _refresh_psf(dep, iecg)
                if self.policy.gc:
                    self.enqueue(s)
                continue
            return

    # -- main loop -------------------------------------------------------

    def run(self) -> DSG:
        lp, policy = self.lp, self.policy
        steps = 0
        while self.work:
            if self.elapsed() > self.budget.max_seconds:
                raise BudgetExceeded("time", len(self.dsg.nodes),
                                     len(self.dsg.edges), self.elapsed())
            s = self.work.popleft()
            self.in_work.discard(s)
            steps += 1
            sigma = self.full_store_of(s)
            psf = self.iecg.psf.get(s, set())
            if policy.gc:
                sigma = eagc(s, sigma, psf, lp, policy)
                if policy.store_mode != "global":
                    self.dsg.node_stores[s] = sigma
            for kappa in sorted(self.iecg.tf(s), key=frame_key):
                top = None if kappa is BOTTOM else kappa
                diags: list = []
                for q2, act, sg2 in abstract_next(lp, s, sigma, top,
                                                  policy, diags):
                    self.add_node(q2)
                    self.join_store(q2, sg2)
                    self.add_edge(s, act, q2)
                for q, reason in diags:
                    self.dsg.diagnostics.add((q.stmt.label, reason))
            self.drain()
        self.dsg.stats = {
            "steps": steps,
            "nodes": len(self.dsg.nodes),
            "edges": len(self.dsg.edges),
            "seconds": self.elapsed(),
        }
        if policy.store_mode == "global":
            for n in self.dsg.nodes:
                self.dsg.node_stores[n] = self.dsg.global_store
        return self.dsg


def eval(lp, dsg, iecg, worklist, policy,
         budget: Budget | None = None) -> DSG:
    """Drain worklist to fixpoint over an existing engine state. The
    moving parts live in _Engine; this entry point exists for driving
    partially-built graphs in tests."""
    eng = _Engine.__new__(_Engine)
    eng.lp = lp
    eng.policy = policy
    eng.budget = budget or Budget()
    eng.dsg = dsg
    eng.iecg = iecg
    for n in dsg.nodes:
        dsg.full_stores.setdefault(n, dsg.node_stores.get(n, {}))
    eng.work = deque(worklist)
    eng.in_work = set(worklist)
    eng.pop_targets = {}
    for s1, act, s2 in dsg.edges:
        if isinstance(act, Pop):
            eng.pop_targets.setdefault((s1, act.frame), set()).add(s2)
    eng.pending_edges = deque()
    eng.t0 = _time.monotonic()
    return eng.run()


def analyze(lp: LabeledProgram, policy: Policy | None = None,
            budget: Budget | None = None) -> DSG:
    """Run the full analysis and return the final graph."""
    if policy is None:
        policy = Policy()
    if policy.mode == "finite":
        from .finite import analyze_finite
        return analyze_finite(lp, policy, budget or Budget())
    eng = _Engine(lp, policy, budget or Budget())
    return eng.run()
