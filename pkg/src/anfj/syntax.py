"""Surface syntax, labeling, and static tables for ANFJ programs.

ANFJ is a tiny class-based language in A-normal form: every operand of an
expression is a bare variable, so each statement performs at most one
interesting operation. Statements are assignments, returns, throws, and
try/catch blocks; expressions are variable reads, field reads, method
invocations, allocations, and casts. Fields are written only by
constructors.

This module parses source text, assigns integer labels to statements in
program order, inserts the synthetic PopHandler statement at the end of
every try body, and derives the static tables the interpreters need:
statement successors, the flattened class table, subtyping, and per-label
live-variable sets (with an abrupt-completion edge from every statement
inside a try body to the handler head).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, Optional

OBJECT = "Object"
THIS = "this"

KEYWORDS = {"class", "extends", "super", "this", "new", "return", "throw", "try", "catch"}


class AnfjError(Exception):
    """Base error carrying an optional source position."""

    def __init__(self, message: str, line: int = 0, col: int = 0):
        self.message = message
        self.line = line
        self.col = col
        where = f" at {line}:{col}" if line else ""
        super().__init__(message + where)


class ParseError(AnfjError):
    pass


class ElaborationError(AnfjError):
    pass


# ---------------------------------------------------------------------------
# Expressions

@dataclass(frozen=True)
class VarRef:
    var: str


@dataclass(frozen=True)
class FieldRef:
    var: str
    field: str


@dataclass(frozen=True)
class Invoke:
    receiver: str
    method: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class New:
    class_name: str
    args: tuple[str, ...]


@dataclass(frozen=True)
class Cast:
    class_name: str
    var: str


Exp = VarRef | FieldRef | Invoke | New | Cast


# ---------------------------------------------------------------------------
# Statements
#
# Statement identity is the label: labels are unique program-wide after
# elaboration, so equality and hashing go through them. Parser-stage
# statements carry label -1 and fall back to object identity.

class Stmt:
    __slots__ = ()
    label: int

    def __eq__(self, other):
        if self is other:
            return True
        if not isinstance(other, Stmt):
            return NotImplemented
        if self.label < 0 or other.label < 0:
            return False
        return self.label == other.label

    def __ne__(self, other):
        eq = self.__eq__(other)
        return eq if eq is NotImplemented else not eq

    def __hash__(self):
        if self.label < 0:
            return object.__hash__(self)
        return hash(self.label)


@dataclass(frozen=True, eq=False)
class Assign(Stmt):
    label: int
    var: str
    exp: Exp


@dataclass(frozen=True, eq=False)
class Return(Stmt):
    label: int
    var: str


@dataclass(frozen=True, eq=False)
class Throw(Stmt):
    label: int
    var: str


@dataclass(frozen=True, eq=False)
class TryCatch(Stmt):
    label: int
    body: tuple[Stmt, ...]
    catch_class: str
    catch_var: str
    handler: tuple[Stmt, ...]

    def __repr__(self):
        return (f"TryCatch(label={self.label}, body=<{len(self.body)} stmts>, "
                f"catch=({self.catch_class} {self.catch_var}), "
                f"handler=<{len(self.handler)} stmts>)")


@dataclass(frozen=True, eq=False)
class PopHandler(Stmt):
    label: int


# ---------------------------------------------------------------------------
# Declarations

@dataclass(frozen=True, eq=False)
class Konst:
    class_name: str
    params: tuple[tuple[str, str], ...]       # (class, name)
    super_args: tuple[str, ...]
    inits: tuple[tuple[str, str], ...]        # (field, param) per this.f = x


@dataclass(frozen=True, eq=False)
class MethodDecl:
    return_class: str
    name: str
    params: tuple[tuple[str, str], ...]       # (class, name)
    locals: tuple[tuple[str, str], ...]       # (class, name)
    body: tuple[Stmt, ...]
    owner: str = ""                           # filled in by elaborate


@dataclass(frozen=True, eq=False)
class ClassDecl:
    name: str
    parent: str
    fields: tuple[tuple[str, str], ...]       # (class, name)
    konst: Konst
    methods: tuple[MethodDecl, ...]


@dataclass(frozen=True, eq=False)
class Program:
    classes: tuple[ClassDecl, ...]
    entry: tuple[str, str]                    # (class name, method name)


# ---------------------------------------------------------------------------
# Tokenizer

_PUNCT = {"{", "}", "(", ")", ";", ",", "=", "."}


@dataclass(frozen=True)
class Token:
    kind: str       # "ident", "punct", "eof"
    text: str
    line: int
    col: int


def _tokenize(src: str) -> list[Token]:
    toks = []
    line, col = 1, 1
    i, n = 0, len(src)
    while i < n:
        c = src[i]
        if c == "\n":
            i += 1
            line += 1
            col = 1
            continue
        if c in " \t\r":
            i += 1
            col += 1
            continue
        if c == "/" and i + 1 < n and src[i + 1] == "/":
            while i < n and src[i] != "\n":
                i += 1
            continue
        if c in _PUNCT:
            toks.append(Token("punct", c, line, col))
            i += 1
            col += 1
            continue
        if c.isalpha() or c == "_":
            j = i
            while j < n and (src[j].isalnum() or src[j] == "_"):
                j += 1
            toks.append(Token("ident", src[i:j], line, col))
            col += j - i
            i = j
            continue
        raise ParseError(f"unexpected character {c!r}", line, col)
    toks.append(Token("eof", "", line, col))
    return toks


# ---------------------------------------------------------------------------
# Parser

class _Parser:
    def __init__(self, src: str):
        self.toks = _tokenize(src)
        self.pos = 0

    def peek(self, ahead: int = 0) -> Token:
        return self.toks[min(self.pos + ahead, len(self.toks) - 1)]

    def next(self) -> Token:
        t = self.toks[self.pos]
        if t.kind != "eof":
            self.pos += 1
        return t

    def error(self, msg: str, tok: Token | None = None):
        t = tok or self.peek()
        raise ParseError(msg, t.line, t.col)

    def expect(self, text: str) -> Token:
        t = self.next()
        if t.text != text:
            self.error(f"expected {text!r}, found {t.text!r}", t)
        return t

    def ident(self, what: str = "identifier") -> str:
        t = self.next()
        if t.kind != "ident" or t.text in KEYWORDS:
            self.error(f"expected {what}, found {t.text!r}", t)
        return t.text

    def operand(self) -> str:
        # a variable position; `this` is allowed
        t = self.next()
        if t.kind != "ident" or (t.text in KEYWORDS and t.text != THIS):
            self.error(f"expected variable, found {t.text!r}", t)
        self._check_atomic(t)
        return t.text

    def _check_atomic(self, t: Token):
        nxt = self.peek()
        if nxt.text in (".", "("):
            self.error("non-atomic argument", nxt)

    def program(self) -> Program:
        classes = []
        while self.peek().text == "class":
            classes.append(self.class_decl())
        t = self.peek()
        if t.kind != "eof":
            self.error(f"expected 'class', found {t.text!r}", t)
        if not classes:
            self.error("empty program")
        seen = {}
        for c in classes:
            if c.name in seen or c.name == OBJECT:
                raise ParseError(f"duplicate class {c.name!r}")
            seen[c.name] = c
        entries = [(c.name, m.name) for c in classes for m in c.methods
                   if m.name == "main" and not m.params]
        if not entries:
            raise ParseError("no zero-argument method named 'main' found")
        if len(entries) > 1:
            raise ParseError("multiple zero-argument methods named 'main'")
        return Program(classes=tuple(classes), entry=entries[0])

    def class_decl(self) -> ClassDecl:
        self.expect("class")
        name = self.ident("class name")
        self.expect("extends")
        parent_tok = self.next()
        if parent_tok.kind != "ident" or parent_tok.text in KEYWORDS:
            self.error("expected parent class name", parent_tok)
        self.expect("{")
        fields = []
        # field declarations: IDENT IDENT ';' until we hit the constructor,
        # recognized by its name matching the class followed by '('
        while True:
            a, b, c = self.peek(0), self.peek(1), self.peek(2)
            if a.kind == "ident" and a.text == name and b.text == "(":
                break
            if a.kind == "ident" and a.text not in KEYWORDS and \
                    b.kind == "ident" and b.text not in KEYWORDS and c.text == ";":
                fcls = self.ident("field class")
                fname = self.ident("field name")
                self.expect(";")
                fields.append((fcls, fname))
                continue
            self.error(f"expected field declaration or constructor {name!r}", a)
        konst = self.konst(name)
        methods = []
        while self.peek().text != "}":
            methods.append(self.method_decl())
        self.expect("}")
        mnames = [m.name for m in methods]
        if len(mnames) != len(set(mnames)):
            self.error(f"duplicate method in class {name!r}")
        fnames = [f for _, f in fields]
        if len(fnames) != len(set(fnames)):
            self.error(f"duplicate field in class {name!r}")
        return ClassDecl(name=name, parent=parent_tok.text, fields=tuple(fields),
                         konst=konst, methods=tuple(methods))

    def konst(self, class_name: str) -> Konst:
        tok = self.next()
        if tok.text != class_name:
            self.error(f"constructor must be named {class_name!r}", tok)
        params = self.param_list()
        self.expect("{")
        self.expect("super")
        self.expect("(")
        super_args = self.arg_list()
        self.expect(";")
        inits = []
        while self.peek().text == "this":
            self.next()
            self.expect(".")
            fname = self.ident("field name")
            self.expect("=")
            pname = self.ident("parameter name")
            self.expect(";")
            inits.append((fname, pname))
        self.expect("}")
        return Konst(class_name=class_name, params=params,
                     super_args=super_args, inits=tuple(inits))

    def param_list(self) -> tuple[tuple[str, str], ...]:
        self.expect("(")
        params = []
        if self.peek().text != ")":
            while True:
                pcls = self.ident("parameter class")
                pname = self.ident("parameter name")
                params.append((pcls, pname))
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        return tuple(params)

    def arg_list(self) -> tuple[str, ...]:
        # caller has consumed '('
        args = []
        if self.peek().text != ")":
            while True:
                args.append(self.operand())
                if self.peek().text == ",":
                    self.next()
                    continue
                break
        self.expect(")")
        return tuple(args)

    def method_decl(self) -> MethodDecl:
        rcls = self.ident("return class")
        name = self.ident("method name")
        params = self.param_list()
        self.expect("{")
        locals_ = []
        while (self.peek(0).kind == "ident" and self.peek(0).text not in KEYWORDS
               and self.peek(1).kind == "ident" and self.peek(1).text not in KEYWORDS
               and self.peek(2).text == ";"):
            lcls = self.ident("local class")
            lname = self.ident("local name")
            self.expect(";")
            locals_.append((lcls, lname))
        body = self.stmt_seq()
        self.expect("}")
        return MethodDecl(return_class=rcls, name=name, params=params,
                          locals=tuple(locals_), body=body)

    def stmt_seq(self) -> tuple[Stmt, ...]:
        stmts = []
        while self.peek().text not in ("}",) and self.peek().kind != "eof":
            stmts.append(self.stmt())
        if not stmts:
            self.error("empty statement sequence")
        return tuple(stmts)

    def stmt(self) -> Stmt:
        t = self.peek()
        if t.text == "return":
            self.next()
            v = self.operand()
            self.expect(";")
            return Return(-1, v)
        if t.text == "throw":
            self.next()
            v = self.operand()
            self.expect(";")
            return Throw(-1, v)
        if t.text == "try":
            self.next()
            self.expect("{")
            body = self.stmt_seq()
            self.expect("}")
            self.expect("catch")
            self.expect("(")
            ccls = self.ident("exception class")
            cvar = self.ident("catch variable")
            self.expect(")")
            self.expect("{")
            handler = self.stmt_seq()
            self.expect("}")
            return TryCatch(-1, body, ccls, cvar, handler)
        if t.kind == "ident" and t.text not in KEYWORDS:
            v = self.ident("variable")
            self.expect("=")
            e = self.exp()
            self.expect(";")
            return Assign(-1, v, e)
        self.error(f"expected statement, found {t.text!r}", t)

    def exp(self) -> Exp:
        t = self.peek()
        if t.text == "new":
            self.next()
            cname = self.ident("class name")
            self.expect("(")
            return New(cname, self.arg_list())
        if t.text == "(":
            self.next()
            cname = self.ident("cast class")
            self.expect(")")
            v = self.operand()
            return Cast(cname, v)
        if t.kind == "ident" and (t.text not in KEYWORDS or t.text == THIS):
            base = self.next().text
            if self.peek().text == ".":
                self.next()
                member = self.ident("member name")
                if self.peek().text == "(":
                    self.next()
                    return Invoke(base, member, self.arg_list())
                self._check_atomic_member()
                return FieldRef(base, member)
            self._check_atomic(t)
            return VarRef(base)
        self.error(f"expected expression, found {t.text!r}", t)

    def _check_atomic_member(self):
        nxt = self.peek()
        if nxt.text == ".":
            self.error("non-atomic argument", nxt)


def parse_program(src: str) -> Program:
    """Parse ANFJ source text into an unlabeled Program."""
    return _Parser(src).program()


# ---------------------------------------------------------------------------
# Class table

@dataclass(eq=False)
class ClassInfo:
    decl: ClassDecl
    parent: Optional[str]
    fields_flat: tuple[str, ...]              # superclass fields first
    field_classes: dict[str, str]
    methods: dict[str, MethodDecl]            # own methods only


class LabeledProgram:
    """A labeled program plus every static table the analyses consume."""

    def __init__(self, program: Program):
        self.program = program
        self.classes: dict[str, ClassInfo] = {}
        self.stmt_by_label: dict[int, Stmt] = {}
        self.succ_map: dict[int, Stmt] = {}
        self.method_of: dict[int, MethodDecl] = {}
        self.lives: dict[int, frozenset[str]] = {}
        self.handler_heads: dict[int, TryCatch] = {}
        self.entry_method: MethodDecl | None = None

    # -- spec operations ----------------------------------------------------

    def successor(self, label: int) -> Stmt | None:
        if label not in self.stmt_by_label:
            raise KeyError(f"unknown label {label}")
        return self.succ_map.get(label)

    def class_lookup(self, name: str) -> tuple[tuple[str, ...], Konst | None]:
        info = self.classes.get(name)
        if info is None:
            raise KeyError(f"unknown class {name!r}")
        return info.fields_flat, (None if name == OBJECT else info.decl.konst)

    def method_lookup(self, class_name: str, method: str) -> MethodDecl | None:
        c: Optional[str] = class_name
        while c is not None:
            info = self.classes.get(c)
            if info is None:
                return None
            m = info.methods.get(method)
            if m is not None:
                return m
            c = info.parent
        return None

    def subtype(self, a: str, b: str) -> bool:
        c: Optional[str] = a
        while c is not None:
            if c == b:
                return True
            info = self.classes.get(c)
            if info is None:
                return False
            c = info.parent
        return False

    # -- conveniences --------------------------------------------------------

    def stmt(self, label: int) -> Stmt:
        return self.stmt_by_label[label]

    def first_stmt(self, method: MethodDecl) -> Stmt:
        return method.body[0]

    def method_of_label(self, label: int) -> MethodDecl:
        return self.method_of[label]

    def all_labels(self) -> list[int]:
        return sorted(self.stmt_by_label)


def _object_info() -> ClassInfo:
    decl = ClassDecl(name=OBJECT, parent=OBJECT, fields=(),
                     konst=Konst(OBJECT, (), (), ()), methods=())
    return ClassInfo(decl=decl, parent=None, fields_flat=(),
                     field_classes={}, methods={})


class _Labeler:
    def __init__(self):
        self.counter = 0

    def fresh(self) -> int:
        self.counter += 1
        return self.counter


def _relabel_seq(seq: tuple[Stmt, ...], lab: _Labeler) -> tuple[Stmt, ...]:
    out = []
    for s in seq:
        if isinstance(s, TryCatch):
            ell = lab.fresh()
            body = list(s.body)
            if not body or not isinstance(body[-1], PopHandler):
                body.append(PopHandler(-1))
            new_body = _relabel_seq(tuple(body), lab)
            new_handler = _relabel_seq(s.handler, lab)
            out.append(TryCatch(ell, new_body, s.catch_class, s.catch_var, new_handler))
        elif isinstance(s, Assign):
            out.append(Assign(lab.fresh(), s.var, s.exp))
        elif isinstance(s, Return):
            out.append(Return(lab.fresh(), s.var))
        elif isinstance(s, Throw):
            out.append(Throw(lab.fresh(), s.var))
        elif isinstance(s, PopHandler):
            out.append(PopHandler(lab.fresh()))
        else:
            raise ElaborationError(f"unknown statement kind {type(s).__name__}")
    return tuple(out)


def _path_terminates(seq: tuple[Stmt, ...]) -> bool:
    last = seq[-1]
    if isinstance(last, (Return, Throw)):
        return True
    if isinstance(last, TryCatch):
        body = last.body
        if body and isinstance(body[-1], PopHandler):
            body = body[:-1]
        return bool(body) and _path_terminates(body) and _path_terminates(last.handler)
    return False


def _exp_uses(e: Exp) -> frozenset[str]:
    if isinstance(e, VarRef):
        return frozenset((e.var,))
    if isinstance(e, FieldRef):
        return frozenset((e.var,))
    if isinstance(e, Invoke):
        return frozenset((e.receiver, *e.args))
    if isinstance(e, New):
        return frozenset(e.args)
    if isinstance(e, Cast):
        return frozenset((e.var,))
    raise TypeError(e)


def stmt_uses(s: Stmt) -> frozenset[str]:
    if isinstance(s, Assign):
        return _exp_uses(s.exp)
    if isinstance(s, (Return, Throw)):
        return frozenset((s.var,))
    return frozenset()


def stmt_defs(s: Stmt) -> frozenset[str]:
    if isinstance(s, Assign):
        return frozenset((s.var,))
    return frozenset()


def iter_stmts(seq: tuple[Stmt, ...]) -> Iterator[Stmt]:
    for s in seq:
        yield s
        if isinstance(s, TryCatch):
            yield from iter_stmts(s.body)
            yield from iter_stmts(s.handler)


class _Elaborator:
    def __init__(self, program: Program):
        self.program = program
        self.lp = LabeledProgram(program)

    def run(self) -> LabeledProgram:
        self._build_class_table()
        self._check_konsts()
        labeled_classes = self._relabel_classes()
        self.lp.program = Program(classes=labeled_classes, entry=self.program.entry)
        self._rebuild_class_table(labeled_classes)
        self._index_statements()
        self._check_scopes()
        self._build_succ()
        self._check_termination()
        self._compute_liveness()
        return self.lp

    def _build_class_table(self):
        table = {OBJECT: _object_info()}
        for decl in self.program.classes:
            table[decl.name] = ClassInfo(decl=decl, parent=decl.parent, fields_flat=(),
                                         field_classes={}, methods={m.name: m for m in decl.methods})
        for decl in self.program.classes:
            if decl.parent not in table:
                raise ElaborationError(f"unknown class {decl.parent!r} (parent of {decl.name!r})")
        # cycle check and field flattening, parents first
        resolved: dict[str, tuple[str, ...]] = {OBJECT: ()}
        fclasses: dict[str, dict[str, str]] = {OBJECT: {}}

        def resolve(name: str, trail: tuple[str, ...]) -> tuple[str, ...]:
            if name in resolved:
                return resolved[name]
            if name in trail:
                raise ElaborationError(f"extends cycle through {name!r}")
            info = table[name]
            parent_fields = resolve(info.decl.parent, trail + (name,))
            own = tuple(fn for _, fn in info.decl.fields)
            for fn in own:
                if fn in parent_fields:
                    raise ElaborationError(
                        f"field shadowing conflict: {fn!r} in {name!r} hides an inherited field")
            flat = parent_fields + own
            resolved[name] = flat
            fc = dict(fclasses[info.decl.parent])
            fc.update({fn: fc_ for fc_, fn in info.decl.fields})
            fclasses[name] = fc
            return flat

        for decl in self.program.classes:
            resolve(decl.name, ())
        for name, info in table.items():
            info.fields_flat = resolved[name]
            info.field_classes = fclasses[name]
        self.lp.classes = table
        # every class reference in declarations must resolve
        for decl in self.program.classes:
            for cls, _ in decl.fields + tuple(
                    p for m in decl.methods for p in m.params + m.locals):
                if cls not in table:
                    raise ElaborationError(f"unknown class {cls!r} referenced in {decl.name!r}")
            for m in decl.methods:
                if m.return_class not in table:
                    raise ElaborationError(
                        f"unknown class {m.return_class!r} referenced in {decl.name!r}")

    def _check_konsts(self):
        table = self.lp.classes
        for decl in self.program.classes:
            k = decl.konst
            pnames = [n for _, n in k.params]
            if len(pnames) != len(set(pnames)):
                raise ElaborationError(f"duplicate constructor parameter in {decl.name!r}")
            parent = table[decl.parent]
            parent_arity = 0 if decl.parent == OBJECT else len(parent.decl.konst.params)
            if len(k.super_args) != parent_arity:
                raise ElaborationError(
                    f"constructor of {decl.name!r} passes {len(k.super_args)} args to super, "
                    f"parent expects {parent_arity}")
            if tuple(k.super_args) != tuple(pnames[: len(k.super_args)]):
                raise ElaborationError(
                    f"constructor of {decl.name!r}: super args must be a prefix of the parameters")
            own_fields = [fn for _, fn in decl.fields]
            assigned = [f for f, _ in k.inits]
            if sorted(assigned) != sorted(own_fields) or len(assigned) != len(set(assigned)):
                raise ElaborationError(
                    f"constructor of {decl.name!r} must assign each declared field exactly once")
            for f, p in k.inits:
                if p not in pnames:
                    raise ElaborationError(
                        f"constructor of {decl.name!r} assigns field {f!r} from unknown parameter {p!r}")
            for pcls, _ in k.params:
                if pcls not in table:
                    raise ElaborationError(f"unknown class {pcls!r} in constructor of {decl.name!r}")

    def _relabel_classes(self) -> tuple[ClassDecl, ...]:
        lab = _Labeler()
        out = []
        for decl in self.program.classes:
            methods = []
            for m in decl.methods:
                body = _relabel_seq(m.body, lab)
                methods.append(MethodDecl(m.return_class, m.name, m.params,
                                          m.locals, body, owner=decl.name))
            out.append(replace_methods(decl, tuple(methods)))
        return tuple(out)

    def _rebuild_class_table(self, labeled: tuple[ClassDecl, ...]):
        table = self.lp.classes
        for decl in labeled:
            info = table[decl.name]
            info.decl = decl
            info.methods = {m.name: m for m in decl.methods}
        ecls, emeth = self.program.entry
        self.lp.entry_method = table[ecls].methods[emeth]

    def _index_statements(self):
        for decl in self.lp.program.classes:
            for m in decl.methods:
                for s in iter_stmts(m.body):
                    if s.label in self.lp.stmt_by_label:
                        raise ElaborationError(f"duplicate label {s.label}")
                    self.lp.stmt_by_label[s.label] = s
                    self.lp.method_of[s.label] = m
                    if isinstance(s, TryCatch):
                        self.lp.handler_heads[s.handler[0].label] = s

    def _check_scopes(self):
        table = self.lp.classes
        for decl in self.lp.program.classes:
            for m in decl.methods:
                env = {THIS: decl.name}
                for pcls, pname in m.params:
                    if pname in env:
                        raise ElaborationError(f"duplicate parameter {pname!r} in {decl.name}.{m.name}")
                    env[pname] = pcls
                for lcls, lname in m.locals:
                    if lname in env:
                        raise ElaborationError(f"duplicate local {lname!r} in {decl.name}.{m.name}")
                    env[lname] = lcls
                self._check_seq(m, decl, m.body, dict(env))

    def _check_seq(self, m: MethodDecl, decl: ClassDecl, seq: tuple[Stmt, ...], env: dict[str, str]):
        table = self.lp.classes

        def check_var(v: str, s: Stmt):
            if v not in env:
                raise ElaborationError(
                    f"unknown variable {v!r} in {decl.name}.{m.name} (label {s.label})")

        for s in seq:
            if isinstance(s, Assign):
                check_var(s.var, s)
                e = s.exp
                for v in sorted(_exp_uses(e)):
                    check_var(v, s)
                if isinstance(e, New):
                    if e.class_name not in table:
                        raise ElaborationError(f"unknown class {e.class_name!r} (label {s.label})")
                    arity = 0 if e.class_name == OBJECT else len(table[e.class_name].decl.konst.params)
                    if len(e.args) != arity:
                        raise ElaborationError(
                            f"new {e.class_name} expects {arity} args, got {len(e.args)} (label {s.label})")
                elif isinstance(e, Cast):
                    if e.class_name not in table:
                        raise ElaborationError(f"unknown class {e.class_name!r} (label {s.label})")
                elif isinstance(e, FieldRef):
                    owner = env[e.var]
                    if e.field not in table[owner].field_classes:
                        raise ElaborationError(
                            f"unknown field {e.field!r} on class {owner!r} (label {s.label})")
                elif isinstance(e, Invoke):
                    owner = env[e.receiver]
                    target = self.lp.method_lookup(owner, e.method)
                    if target is None:
                        raise ElaborationError(
                            f"unknown method {e.method!r} on class {owner!r} (label {s.label})")
                    if len(target.params) != len(e.args):
                        raise ElaborationError(
                            f"method {e.method!r} expects {len(target.params)} args, "
                            f"got {len(e.args)} (label {s.label})")
            elif isinstance(s, (Return, Throw)):
                check_var(s.var, s)
            elif isinstance(s, TryCatch):
                if s.catch_class not in table:
                    raise ElaborationError(f"unknown class {s.catch_class!r} (label {s.label})")
                self._check_seq(m, decl, s.body, env)
                inner = dict(env)
                inner[s.catch_var] = s.catch_class
                self._check_seq(m, decl, s.handler, inner)
            # PopHandler: nothing to check

    def _build_succ(self):
        for decl in self.lp.program.classes:
            for m in decl.methods:
                self._succ_seq(m.body, None)

    def _succ_seq(self, seq: tuple[Stmt, ...], after: Stmt | None):
        for i, s in enumerate(seq):
            nxt = seq[i + 1] if i + 1 < len(seq) else after
            if isinstance(s, (Assign, PopHandler)):
                if nxt is not None:
                    self.lp.succ_map[s.label] = nxt
            elif isinstance(s, TryCatch):
                self.lp.succ_map[s.label] = s.body[0]
                self._succ_seq(s.body, nxt)
                self._succ_seq(s.handler, nxt)
            # Return and Throw have no successor

    def _check_termination(self):
        for decl in self.lp.program.classes:
            for m in decl.methods:
                if not _path_terminates(m.body):
                    raise ElaborationError(
                        f"a control path in {decl.name}.{m.name} does not end in return or throw")

    def _compute_liveness(self):
        for decl in self.lp.program.classes:
            for m in decl.methods:
                self.lp.lives.update(compute_liveness(self.lp, m))


def replace_methods(decl: ClassDecl, methods: tuple[MethodDecl, ...]) -> ClassDecl:
    return ClassDecl(name=decl.name, parent=decl.parent, fields=decl.fields,
                     konst=decl.konst, methods=methods)


def elaborate(program: Program) -> LabeledProgram:
    """Label the program, insert PopHandlers, and build all static tables.

    Idempotent on structure: re-elaborating the labeled program's own
    declarations yields identical labels and successors.
    """
    return _Elaborator(program).run()


def method_flow_edges(lp: LabeledProgram, method: MethodDecl) -> dict[int, set[int]]:
    """Intra-method flow edges over labels: successor edges plus an edge from
    every statement lexically inside a try body to the handler head."""
    edges: dict[int, set[int]] = {s.label: set() for s in iter_stmts(method.body)}
    for s in iter_stmts(method.body):
        nxt = lp.succ_map.get(s.label)
        if nxt is not None:
            edges[s.label].add(nxt.label)
        if isinstance(s, TryCatch):
            head = s.handler[0].label
            for inner in iter_stmts(s.body):
                edges[inner.label].add(head)
    return edges


def compute_liveness(lp: LabeledProgram, method: MethodDecl) -> dict[int, frozenset[str]]:
    """Backward may-liveness per label:
    lives(l) = use(l) | (union of successor lives) - def(l)."""
    edges = method_flow_edges(lp, method)
    stmts = {s.label: s for s in iter_stmts(method.body)}
    lives: dict[int, frozenset[str]] = {ell: frozenset() for ell in stmts}
    changed = True
    while changed:
        changed = False
        for ell in sorted(stmts, reverse=True):
            s = stmts[ell]
            out: set[str] = set()
            for succ_ell in edges[ell]:
                out |= lives[succ_ell]
            new = stmt_uses(s) | frozenset(out - stmt_defs(s))
            if new != lives[ell]:
                lives[ell] = frozenset(new)
                changed = True
    return lives


def load_program(src: str) -> LabeledProgram:
    """Parse and elaborate in one step."""
    return elaborate(parse_program(src))
