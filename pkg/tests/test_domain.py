"""Abstract domain: context policies, stores, and the transition rules."""

import random

import pytest

from anfj.domain import (
    BOTTOM, CallFrame, ControlState, EPSILON, FP0A, FramePtr, HandlerFrame,
    ObjPtr, Policy, Pop, Push, decide_stack_action, inject_abstract,
    next as abstract_next, state_key, store_extend, store_join, store_leq,
    store_restrict, tick, alloc,
)
from anfj.engine import analyze
from anfj.machine import Addr, Value
from anfj.syntax import (
    THIS, Assign, FieldRef, Invoke, New, Throw, TryCatch, VarRef,
    load_program,
)

from helpers import corpus_program
from oracles import explore_configs


def find_assign(lp, var, exp_type):
    for ell in lp.all_labels():
        s = lp.stmt(ell)
        if isinstance(s, Assign) and s.var == var and isinstance(s.exp, exp_type):
            return s
    raise AssertionError(f"no assignment {var} = <{exp_type.__name__}>")


# -- tick ---------------------------------------------------------------------

def test_tick_k0_is_monovariant():
    p = Policy(k=0)
    assert tick(7, (), p) == ()
    assert tick(3, (), p) == ()


def test_tick_k1_truncates_to_newest():
    assert tick(2, (1,), Policy(k=1)) == (2,)


def test_tick_k2_keeps_two_newest():
    assert tick(3, (2, 1), Policy(k=2)) == (3, 2)


# -- alloc --------------------------------------------------------------------

def test_alloc_k0_one_frame_pointer_per_site():
    p = Policy(k=0)
    assert alloc(4, (), p) == FramePtr(4, ())
    assert alloc(4, tick(9, (), p), p) == FramePtr(4, ())


def test_alloc_k1_distinct_histories_distinct_pointers():
    p = Policy(k=1)
    fp_a = alloc(4, tick(1, (), p), p)
    fp_b = alloc(4, tick(2, (), p), p)
    assert fp_a != fp_b


def test_alloc_object_receiver_component():
    on = Policy(obj_sensitivity=True)
    off = Policy(obj_sensitivity=False)
    assert alloc(5, (), on, "object", receiver_site=9) == ObjPtr(5, (), 9)
    assert alloc(5, (), off, "object", receiver_site=9) == ObjPtr(5, (), None)


def test_alloc_rejects_unknown_kind():
    with pytest.raises(ValueError):
        alloc(1, (), Policy(), "stack")


def test_object_sensitivity_splits_by_receiver_site():
    # one allocation site inside a factory method, two factory objects:
    # with the receiver component the site yields two pointers, without one
    lp = corpus_program("receiver_split")
    box_site = find_assign(lp, "b", New).label

    def box_ptrs(policy):
        dsg = analyze(lp, policy)
        ops = set()
        for q in dsg.nodes:
            for vals in dsg.node_store(q).values():
                ops.update(v.op for v in vals if v.op.site == box_site)
        return ops

    split = box_ptrs(Policy(obj_sensitivity=True))
    merged = box_ptrs(Policy(obj_sensitivity=False))
    assert len(split) == 2
    assert len({op.recv for op in split}) == 2
    assert all(op.recv is not None for op in split)
    assert len(merged) == 1 and next(iter(merged)).recv is None


# -- policy / store basics ------------------------------------------------------

def test_policy_validation():
    with pytest.raises(ValueError):
        Policy(k=-1)
    with pytest.raises(ValueError):
        Policy(mode="concolic")
    with pytest.raises(ValueError):
        Policy(store_mode="sharded")


def _random_store(rng, n_addrs=6):
    ptrs = [FramePtr(i, ()) for i in range(3)] + [ObjPtr(i, ()) for i in range(3)]
    classes = ["A", "B", "C"]
    sigma = {}
    for i in range(rng.randrange(1, n_addrs + 1)):
        addr = Addr(f"v{rng.randrange(4)}", rng.choice(ptrs))
        vals = frozenset(Value(rng.choice(classes), rng.choice(ptrs[3:]))
                         for _ in range(rng.randrange(1, 4)))
        sigma[addr] = sigma.get(addr, frozenset()) | vals
    return sigma


def test_store_join_lattice_laws():
    rng = random.Random(11)
    for _ in range(200):
        a, b, c = (_random_store(rng) for _ in range(3))
        assert store_join(a, b) == store_join(b, a)
        assert store_join(a, store_join(b, c)) == store_join(store_join(a, b), c)
        assert store_join(a, a) == a
        assert store_leq(a, store_join(a, b))
        assert store_leq(a, a)


def test_store_extend_is_weak():
    fp = FramePtr(1, ())
    v1 = Value("A", ObjPtr(1, ()))
    v2 = Value("B", ObjPtr(2, ()))
    sigma = {Addr("x", fp): frozenset((v1,))}
    out = store_extend(sigma, Addr("x", fp), frozenset((v2,)))
    assert out[Addr("x", fp)] == frozenset((v1, v2))
    assert sigma[Addr("x", fp)] == frozenset((v1,))  # input untouched


def test_store_restrict_keeps_only_named():
    rng = random.Random(5)
    sigma = _random_store(rng)
    keep = set(list(sigma)[:2])
    out = store_restrict(sigma, keep)
    assert set(out) == keep and store_leq(out, sigma)


# -- decide_stack_action --------------------------------------------------------

def test_decide_stack_action_cases():
    f = CallFrame("x", None, FP0A)
    g = HandlerFrame("E", "e", None, FP0A)
    assert decide_stack_action((f,), (f,)) == EPSILON
    assert decide_stack_action((), (g,)) == Push(g)
    assert decide_stack_action((f,), ()) == Pop(f)
    with pytest.raises(ValueError):
        decide_stack_action((), (f, g))


# -- transition rules -----------------------------------------------------------

SNIPPET = """
class E1 extends Object { E1() { super(); } }
class E2 extends E1 { E2() { super(); } }
class Main extends Object {
  Main() { super(); }
  Object main() {
    Object a;
    Object b;
    a = new Object();
    b = a;
    return b;
  }
}
"""


def test_assign_varref_copies_and_stays_epsilon():
    lp = load_program(SNIPPET)
    s = find_assign(lp, "b", VarRef)
    v = Value("Object", ObjPtr(s.label - 1, ()))
    sigma = {Addr("a", FP0A): frozenset((v,))}
    q = ControlState(s, FP0A, ())
    [(q2, act, sg2)] = abstract_next(lp, q, sigma, None, Policy())
    assert act == EPSILON
    assert q2.stmt is lp.successor(s.label) and q2.fp == FP0A
    assert sg2[Addr("b", FP0A)] == frozenset((v,))
    assert store_leq(sigma, sg2)


def test_unbound_read_yields_nothing_and_a_diagnostic():
    lp = load_program(SNIPPET)
    s = find_assign(lp, "b", VarRef)
    q = ControlState(s, FP0A, ())
    diags = []
    assert abstract_next(lp, q, {}, None, Policy(), diags) == []
    assert diags and "unbound" in diags[0][1]


def _throw_state_from_snippet(lp):
    # SNIPPET has no throw; synthesize one against an existing label
    ret = lp.stmt(max(lp.all_labels()))
    s = Throw(label=ret.label, var=ret.var)
    return s, ControlState(s, FP0A, ())


def test_try_pushes_handler_frame():
    lp = corpus_program("try_catch_local")
    trys = [lp.stmt(l) for l in lp.all_labels()
            if isinstance(lp.stmt(l), TryCatch)]
    s = trys[0]
    q = ControlState(s, FP0A, ())
    [(q2, act, _)] = abstract_next(lp, q, {}, None, Policy())
    assert isinstance(act, Push)
    f = act.frame
    assert isinstance(f, HandlerFrame)
    assert f.class_name == s.catch_class and f.var == s.catch_var
    assert f.target is s.handler[0] and f.fp == FP0A
    assert q2.stmt is s.body[0]


def test_throw_nonmatching_handler_pops_to_same_statement():
    lp = load_program(SNIPPET)
    s, q = _throw_state_from_snippet(lp)
    frame = HandlerFrame("E2", "e", s, FP0A)  # thrown E1 is not an E2
    v = Value("E1", ObjPtr(1, ()))
    sigma = {Addr(s.var, FP0A): frozenset((v,))}
    [(q2, act, sg2)] = abstract_next(lp, q, sigma, frame, Policy())
    assert act == Pop(frame)
    assert q2.stmt is s and q2.fp == FP0A
    assert sg2 == sigma


def test_throw_past_call_frame_pops_to_same_statement():
    lp = load_program(SNIPPET)
    s, q = _throw_state_from_snippet(lp)
    frame = CallFrame("r", lp.stmt(1), FP0A)
    sigma = {Addr(s.var, FP0A): frozenset((Value("E1", ObjPtr(1, ())),))}
    [(q2, act, _)] = abstract_next(lp, q, sigma, frame, Policy())
    assert act == Pop(frame)
    assert q2.stmt is s


def test_throw_matching_handler_enters_it_binding_the_value():
    lp = load_program(SNIPPET)
    s, q = _throw_state_from_snippet(lp)
    target = lp.stmt(1)
    frame = HandlerFrame("E1", "e", target, FP0A)
    v = Value("E2", ObjPtr(1, ()))  # subtype matches
    sigma = {Addr(s.var, FP0A): frozenset((v,))}
    [(q2, act, sg2)] = abstract_next(lp, q, sigma, frame, Policy())
    assert act == Pop(frame)
    assert q2.stmt is target
    assert sg2[Addr("e", FP0A)] == frozenset((v,))


def test_throw_mixed_values_fan_out_once_per_outcome():
    lp = load_program(SNIPPET)
    s, q = _throw_state_from_snippet(lp)
    target = lp.stmt(1)
    frame = HandlerFrame("E2", "e", target, FP0A)
    hit = Value("E2", ObjPtr(1, ()))
    miss_a = Value("E1", ObjPtr(2, ()))
    miss_b = Value("Object", ObjPtr(3, ()))
    sigma = {Addr(s.var, FP0A): frozenset((hit, miss_a, miss_b))}
    succs = abstract_next(lp, q, sigma, frame, Policy())
    entered = [x for x in succs if x[0].stmt is target]
    missed = [x for x in succs if x[0].stmt is s]
    assert len(entered) == 1 and len(missed) == 1  # misses deduplicate
    assert entered[0][2][Addr("e", FP0A)] == frozenset((hit,))


def test_fieldref_joins_across_receiver_objects():
    lp = corpus_program("site_conflation")
    s = find_assign(lp, "va", FieldRef)
    op1, op2 = ObjPtr(1, ()), ObjPtr(2, ())
    va, vb = Value("A", ObjPtr(8, ())), Value("B", ObjPtr(9, ()))
    both = {
        Addr(s.exp.var, FP0A): frozenset((Value("Box", op1), Value("Box", op2))),
        Addr("item", op1): frozenset((va,)),
        Addr("item", op2): frozenset((vb,)),
    }
    q = ControlState(s, FP0A, ())
    [(q2, act, sg2)] = abstract_next(lp, q, both, None, Policy())
    assert act == EPSILON

    # oracle: union of the two single-object rule instances
    expect = frozenset()
    for op in (op1, op2):
        single = dict(both)
        single[Addr(s.exp.var, FP0A)] = frozenset((Value("Box", op),))
        [(_, _, sg_one)] = abstract_next(lp, q, single, None, Policy())
        expect |= sg_one[Addr(s.var, FP0A)]
    assert sg2[Addr(s.var, FP0A)] == expect == frozenset((va, vb))


def test_invoke_fans_out_per_receiver_value_with_singleton_this():
    lp = corpus_program("site_conflation")
    s = find_assign(lp, "box1", Invoke)
    mk1, mk2 = Value("Mk", ObjPtr(3, ())), Value("Mk", ObjPtr(4, ()))
    arg = Value("A", ObjPtr(5, ()))
    sigma = {
        Addr(s.exp.receiver, FP0A): frozenset((mk1, mk2)),
        Addr(s.exp.args[0], FP0A): frozenset((arg,)),
    }
    q = ControlState(s, FP0A, ())
    succs = abstract_next(lp, q, sigma, None, Policy())
    assert len(succs) == 2
    m = lp.method_lookup("Mk", s.exp.method)
    this_sets = set()
    for q2, act, sg2 in succs:
        assert isinstance(act, Push)
        assert act.frame == CallFrame(s.var, lp.successor(s.label), FP0A)
        assert q2.stmt is m.body[0]
        assert q2.fp == FramePtr(s.label, ())
        this_sets.add(sg2[Addr(THIS, q2.fp)])
        assert sg2[Addr(m.params[0][1], q2.fp)] == frozenset((arg,))
    assert this_sets == {frozenset((mk1,)), frozenset((mk2,))}


def test_invoke_ticks_time_and_new_does_not():
    lp = corpus_program("site_conflation")
    call = find_assign(lp, "box1", Invoke)
    q = ControlState(call, FP0A, ())
    mk = Value("Mk", ObjPtr(3, ()))
    arg = Value("A", ObjPtr(5, ()))
    sigma = {Addr(call.exp.receiver, FP0A): frozenset((mk,)),
             Addr(call.exp.args[0], FP0A): frozenset((arg,))}
    [(q2, _, _)] = abstract_next(lp, q, sigma, None, Policy(k=1))
    assert q2.time == (call.label,)
    assert q2.fp == FramePtr(call.label, (call.label,))

    alloc_s = find_assign(lp, "mk", New)
    q3 = ControlState(alloc_s, FP0A, (9,))
    [(q4, _, sg4)] = abstract_next(lp, q3, {}, None, Policy(k=1))
    assert q4.time == (9,)  # allocation carries time through
    assert sg4[Addr("mk", FP0A)] == frozenset((Value("Mk", ObjPtr(alloc_s.label, (9,))),))


def test_return_binds_at_caller_and_skips_handler_frames():
    lp = load_program(SNIPPET)
    ret = lp.stmt(max(lp.all_labels()))
    v = Value("Object", ObjPtr(1, ()))
    sigma = {Addr(ret.var, FP0A): frozenset((v,))}
    caller_fp = FramePtr(9, ())
    target = lp.stmt(1)
    q = ControlState(ret, FP0A, ())

    [(q2, act, sg2)] = abstract_next(lp, q, sigma, CallFrame("r", target, caller_fp), Policy())
    assert act == Pop(CallFrame("r", target, caller_fp))
    assert q2 == ControlState(target, caller_fp, ())
    assert sg2[Addr("r", caller_fp)] == frozenset((v,))

    h = HandlerFrame("E1", "e", target, caller_fp)
    [(q3, act3, sg3)] = abstract_next(lp, q, sigma, h, Policy())
    assert act3 == Pop(h) and q3.stmt is ret and sg3 == sigma

    assert abstract_next(lp, q, sigma, None, Policy()) == []  # halt level


def test_constructor_chain_initializes_inherited_fields():
    lp = corpus_program("ctor_chain")
    s = find_assign(lp, next_new_var(lp), New)
    arg_vals = {a: frozenset((Value("Object", ObjPtr(90 + i, ())),))
                for i, a in enumerate(s.exp.args)}
    sigma = {Addr(a, FP0A): vs for a, vs in arg_vals.items()}
    q = ControlState(s, FP0A, ())
    [(q2, act, sg2)] = abstract_next(lp, q, sigma, None, Policy())
    assert act == EPSILON
    [made] = sorted(sg2[Addr(s.var, FP0A)], key=lambda v: v.class_name)
    fields, _ = lp.class_lookup(s.exp.class_name)
    for f in fields:
        assert sg2.get(Addr(f, made.op)), f"field {f} not initialized"


def next_new_var(lp):
    for ell in lp.all_labels():
        s = lp.stmt(ell)
        if isinstance(s, Assign) and isinstance(s.exp, New) and s.exp.args:
            return s.var
    raise AssertionError("no constructor call with arguments")


# -- properties over explored graphs ---------------------------------------------

PROGRAMS_SMALL = ["minimal", "var_chain", "invoke_id", "try_catch_local",
                  "throw_across_call", "dispatch"]


def _config_triples(name, policy):
    lp = corpus_program(name)
    g = explore_configs(lp, policy)
    assert not g.truncated
    for q, stack in sorted(g.configs, key=lambda c: state_key(c[0])):
        yield lp, q, (stack[0] if stack else None), g.store


def test_weak_update_every_successor_contains_input():
    for name in PROGRAMS_SMALL:
        for lp, q, top, sigma in _config_triples(name, Policy(gc=False)):
            for _, _, sg2 in abstract_next(lp, q, sigma, top, Policy(gc=False)):
                assert store_leq(sigma, sg2)


def test_monotone_in_the_store():
    rng = random.Random(23)
    policy = Policy(gc=False)
    for name in PROGRAMS_SMALL:
        for lp, q, top, sigma in _config_triples(name, policy):
            small = {}
            for addr, vals in sigma.items():
                kept = frozenset(v for v in vals if rng.random() < 0.6)
                if kept and rng.random() < 0.8:
                    small[addr] = kept
            lo = abstract_next(lp, q, small, top, policy)
            hi = abstract_next(lp, q, sigma, top, policy)
            hi_pairs = {(q2, act) for q2, act, _ in hi}
            for q2, act, sg_lo in lo:
                assert (q2, act) in hi_pairs
                assert any(q2 == qh and act == ah and store_leq(sg_lo, sgh)
                           for qh, ah, sgh in hi)


def test_reachable_control_space_is_finite_and_stable():
    for name in PROGRAMS_SMALL:
        lp = corpus_program(name)
        g1 = explore_configs(lp, Policy())
        g2 = explore_configs(lp, Policy())
        assert not g1.truncated
        assert g1.states() == g2.states()
        assert len(g1.states()) <= 4 * len(lp.all_labels())


def test_entry_state_shape():
    lp = corpus_program("minimal")
    q0 = inject_abstract(lp)
    assert q0.fp == FP0A and q0.time == () and q0.stmt.label == min(lp.all_labels())


def test_bottom_is_a_singleton_marker():
    assert BOTTOM is type(BOTTOM)()
    assert repr(BOTTOM) == "<bottom>"
