"""Serialization of decorated state graphs: canonical JSON and DOT.

Both formats are deterministic: nodes are sorted by (label, frame
pointer, time), edges by (source, action, destination), store entries
by address then value. Exporting the same graph twice yields identical
bytes. The JSON form round-trips through dsg_from_json given the same
program; the internal worklist bookkeeping is not serialized.
"""

from __future__ import annotations

import json

from .domain import (
    CallFrame, ControlState, Epsilon, EPSILON, FramePtr, HandlerFrame,
    ObjPtr, Policy, Pop, Push, action_key, addr_key, frame_key, state_key,
    sorted_values,
)
from .engine import DSG
from .machine import Addr, Value
from .syntax import LabeledProgram

FORMAT_NAME = "anfj-dsg"
FORMAT_VERSION = 1


# -- JSON pieces --------------------------------------------------------------

def ptr_to_json(ptr):
    if isinstance(ptr, FramePtr):
        return ["fp", ptr.site, list(ptr.time)]
    if isinstance(ptr, ObjPtr):
        return ["op", ptr.site, list(ptr.time), ptr.recv]
    raise TypeError(f"not a pointer: {ptr!r}")


def ptr_from_json(data):
    tag = data[0]
    if tag == "fp":
        return FramePtr(data[1], tuple(data[2]))
    if tag == "op":
        return ObjPtr(data[1], tuple(data[2]), data[3])
    raise ValueError(f"unknown pointer tag {tag!r}")


def value_to_json(v: Value):
    return [v.class_name, ptr_to_json(v.op)]


def value_from_json(data) -> Value:
    return Value(data[0], ptr_from_json(data[1]))


def addr_to_json(a: Addr):
    return [a.base, ptr_to_json(a.ptr)]


def addr_from_json(data) -> Addr:
    return Addr(data[0], ptr_from_json(data[1]))


def store_to_json(sigma: dict) -> list:
    return [[addr_to_json(a), [value_to_json(v) for v in sorted_values(vals)]]
            for a, vals in sorted(sigma.items(), key=lambda kv: addr_key(kv[0]))]


def store_from_json(data) -> dict:
    return {addr_from_json(a): frozenset(value_from_json(v) for v in vals)
            for a, vals in data}


def frame_to_json(f):
    if isinstance(f, CallFrame):
        return ["call", f.var, f.target.label, ptr_to_json(f.fp)]
    if isinstance(f, HandlerFrame):
        return ["handle", f.class_name, f.var, f.target.label,
                ptr_to_json(f.fp)]
    raise TypeError(f"not a frame: {f!r}")


def frame_from_json(lp: LabeledProgram, data):
    tag = data[0]
    if tag == "call":
        return CallFrame(data[1], lp.stmt(data[2]), ptr_from_json(data[3]))
    if tag == "handle":
        return HandlerFrame(data[1], data[2], lp.stmt(data[3]),
                            ptr_from_json(data[4]))
    raise ValueError(f"unknown frame tag {tag!r}")


def action_to_json(act):
    if isinstance(act, Epsilon):
        return ["eps"]
    if isinstance(act, Push):
        return ["push", frame_to_json(act.frame)]
    if isinstance(act, Pop):
        return ["pop", frame_to_json(act.frame)]
    raise TypeError(f"not a stack action: {act!r}")


def action_from_json(lp: LabeledProgram, data):
    tag = data[0]
    if tag == "eps":
        return EPSILON
    if tag == "push":
        return Push(frame_from_json(lp, data[1]))
    if tag == "pop":
        return Pop(frame_from_json(lp, data[1]))
    raise ValueError(f"unknown action tag {tag!r}")


def policy_to_json(p: Policy) -> dict:
    return {"k": p.k, "objSensitivity": p.obj_sensitivity, "gc": p.gc,
            "liveness": p.liveness, "mode": p.mode,
            "storeMode": p.store_mode}


def policy_from_json(data) -> Policy:
    return Policy(k=data["k"], obj_sensitivity=data["objSensitivity"],
                  gc=data["gc"], liveness=data["liveness"],
                  mode=data["mode"], store_mode=data["storeMode"])


# -- whole graphs -------------------------------------------------------------

def dsg_to_json_obj(dsg: DSG) -> dict:
    """The graph as plain JSON data, stable under re-export."""
    nodes = sorted(dsg.nodes, key=state_key)
    ids = {q: i for i, q in enumerate(nodes)}
    node_objs = []
    per_node = dsg.policy.store_mode != "global"
    for i, q in enumerate(nodes):
        obj = {"id": i, "label": q.stmt.label,
               "fp": ptr_to_json(q.fp), "time": list(q.time)}
        if per_node:
            obj["store"] = store_to_json(dsg.node_stores.get(q, {}))
        node_objs.append(obj)
    edges = sorted(dsg.edges,
                   key=lambda e: (ids[e[0]], action_key(e[1]), ids[e[2]]))
    edge_objs = [[ids[s1], action_to_json(act), ids[s2]]
                 for s1, act, s2 in edges]
    out = {
        "format": FORMAT_NAME,
        "version": FORMAT_VERSION,
        "policy": policy_to_json(dsg.policy),
        "initial": ids[dsg.initial],
        "nodes": node_objs,
        "edges": edge_objs,
        "diagnostics": sorted([lbl, reason]
                              for lbl, reason in dsg.diagnostics),
    }
    if not per_node:
        out["globalStore"] = store_to_json(dsg.global_store)
    return out


def dsg_from_json(lp: LabeledProgram, data) -> DSG:
    """Rebuild the structural graph (nodes, edges, stores, diagnostics)
    from exported JSON. Worklist internals start empty."""
    if data.get("format") != FORMAT_NAME:
        raise ValueError("not a state-graph document")
    policy = policy_from_json(data["policy"])
    states = {}
    stores = {}
    for obj in data["nodes"]:
        q = ControlState(lp.stmt(obj["label"]),
                         ptr_from_json(obj["fp"]), tuple(obj["time"]))
        states[obj["id"]] = q
        if "store" in obj:
            stores[q] = store_from_json(obj["store"])
    dsg = DSG(lp=lp, policy=policy, initial=states[data["initial"]])
    dsg.nodes = set(states.values())
    dsg.edges = {(states[i], action_from_json(lp, act), states[j])
                 for i, act, j in data["edges"]}
    dsg.node_stores = stores
    dsg.diagnostics = {(lbl, reason)
                       for lbl, reason in data.get("diagnostics", ())}
    if "globalStore" in data:
        dsg.global_store = store_from_json(data["globalStore"])
    return dsg


def _ptr_label(ptr) -> str:
    t = ",".join(str(x) for x in ptr.time)
    if isinstance(ptr, FramePtr):
        site = "entry" if ptr.site is None else ptr.site
        return f"fp({site};{t})"
    recv = "" if ptr.recv is None else f";r{ptr.recv}"
    return f"op({ptr.site};{t}{recv})"


def _frame_label(f) -> str:
    if isinstance(f, CallFrame):
        return f"call {f.var}<-L{f.target.label} {_ptr_label(f.fp)}"
    return f"handle {f.class_name} {f.var}->L{f.target.label} {_ptr_label(f.fp)}"


def dsg_to_dot(dsg: DSG) -> str:
    nodes = sorted(dsg.nodes, key=state_key)
    ids = {q: i for i, q in enumerate(nodes)}
    lines = ["digraph dsg {", "  rankdir=LR;", "  node [shape=box];"]
    for i, q in enumerate(nodes):
        kind = type(q.stmt).__name__.lower()
        label = f"L{q.stmt.label} {kind}\\n{_ptr_label(q.fp)}"
        extra = " penwidth=2" if q == dsg.initial else ""
        lines.append(f'  n{i} [label="{label}"{extra}];')
    edges = sorted(dsg.edges,
                   key=lambda e: (ids[e[0]], action_key(e[1]), ids[e[2]]))
    for s1, act, s2 in edges:
        if isinstance(act, Epsilon):
            attr = 'style=dashed label=""'
        elif isinstance(act, Push):
            attr = f'label="g+ {_frame_label(act.frame)}"'
        else:
            attr = f'label="g- {_frame_label(act.frame)}"'
        lines.append(f"  n{ids[s1]} -> n{ids[s2]} [{attr}];")
    lines.append("}")
    return "\n".join(lines) + "\n"


def export_dsg(dsg: DSG, format: str = "json") -> bytes:
    """Render the graph to bytes in the named format ('json' or 'dot')."""
    if format == "json":
        text = json.dumps(dsg_to_json_obj(dsg), sort_keys=True,
                          separators=(",", ":"))
        return text.encode("utf-8") + b"\n"
    if format == "dot":
        return dsg_to_dot(dsg).encode("utf-8")
    raise ValueError(f"unknown export format {format!r}")
