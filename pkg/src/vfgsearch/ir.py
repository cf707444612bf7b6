"""Parser for a textual LLVM IR subset.

Covers the unoptimized (-O0) form clang emits for C: locals live in
allocas, values are loaded/stored explicitly, and phi nodes do not occur.
Types, alignment and attribute noise are parsed and discarded; only
opcodes, identifiers, constants and block labels survive into the
structured view.
"""

from __future__ import annotations

import enum
import re
from dataclasses import dataclass, field


class ParseError(Exception):
    """Malformed IR text. Carries the 1-based line and column."""

    def __init__(self, msg: str, line: int, col: int = 1):
        super().__init__(f"line {line}:{col}: {msg}")
        self.line = line
        self.col = col


class UnsupportedConstruct(ParseError):
    """Syntactically valid IR outside the supported subset (e.g. phi)."""

    def __init__(self, opcode: str, line: int):
        ParseError.__init__(self, f"unsupported construct '{opcode}'", line)
        self.opcode = opcode


class NotFound(KeyError):
    pass


class InstructionKind(enum.Enum):
    Computation = "computation"
    Call = "call"
    Load = "load"
    Store = "store"
    Alloca = "alloca"
    Branch = "branch"
    Return = "return"
    Other = "other"


_UNSUPPORTED = {
    "phi", "select", "switch", "indirectbr", "callbr", "invoke",
    "catchswitch", "catchret", "cleanupret", "va_arg", "landingpad",
    "resume",
}

_COMPUTATION = {
    # integer / float arithmetic
    "add", "fadd", "sub", "fsub", "mul", "fmul", "udiv", "sdiv", "fdiv",
    "urem", "srem", "frem", "fneg",
    # bitwise / shifts
    "shl", "lshr", "ashr", "and", "or", "xor",
    # comparisons
    "icmp", "fcmp",
    # conversions (same operand -> opcode -> result shape)
    "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi",
    "uitofp", "sitofp", "ptrtoint", "inttoptr", "bitcast", "addrspacecast",
    # address computation is modeled as a computation at build time
    "getelementptr",
    # vector/aggregate ops occasionally seen in C IR
    "extractelement", "insertelement", "extractvalue", "insertvalue",
}

_CONSTANT_WORDS = {"true", "false", "null", "undef", "none", "zeroinitializer", "poison"}

_NUMERIC_RE = re.compile(r"-?(\d+\.?\d*([eE][+-]?\d+)?|0x[0-9a-fA-F]+)$")
_IDENT_RE = re.compile(r"[%@][-a-zA-Z$._0-9]+$|[%@]\"[^\"]*\"$")
_TYPE_IDENT_RE = re.compile(r"%(struct|union|class|opaque)\.")
_LABEL_LINE_RE = re.compile(r"^([-a-zA-Z$._0-9]+|\"[^\"]*\"):")
_OLD_LABEL_RE = re.compile(r"^\s*;\s*<label>:(\d+)")
_DEFINE_RE = re.compile(r"^define\b[^@]*@([-a-zA-Z$._0-9]+|\"[^\"]*\")\s*\(")
_DECLARE_RE = re.compile(r"^declare\b[^@]*@([-a-zA-Z$._0-9]+|\"[^\"]*\")\s*\(")


def classify(opcode: str) -> InstructionKind:
    """Total mapping from opcode token to instruction kind."""
    if opcode in ("call", "invoke"):
        return InstructionKind.Call
    if opcode == "load":
        return InstructionKind.Load
    if opcode == "store":
        return InstructionKind.Store
    if opcode == "alloca":
        return InstructionKind.Alloca
    if opcode == "br":
        return InstructionKind.Branch
    if opcode in ("ret", "unreachable"):
        return InstructionKind.Return
    if opcode in _COMPUTATION:
        return InstructionKind.Computation
    return InstructionKind.Other


@dataclass(frozen=True)
class Instruction:
    opcode: str
    operands: tuple[str, ...]
    result: str | None
    kind: InstructionKind
    block: str = ""
    ordinal: int = 0

    def __str__(self) -> str:
        head = f"{self.result} = " if self.result else ""
        if self.kind is InstructionKind.Branch:
            if len(self.operands) == 1:
                return f"br label %{self.operands[0]}"
            c, t, f = self.operands
            return f"br {c}, label %{t}, label %{f}"
        if self.opcode == "ret":
            return f"ret {self.operands[0]}" if self.operands else "ret void"
        if self.kind is InstructionKind.Call:
            callee, args = self.operands[0], self.operands[1:]
            return f"{head}call {callee}({', '.join(args)})"
        return f"{head}{self.opcode} {', '.join(self.operands)}".rstrip()


@dataclass(frozen=True)
class BasicBlock:
    label: str
    instructions: tuple[Instruction, ...]
    successors: tuple[str, ...]


@dataclass(frozen=True)
class FunctionIR:
    name: str
    parameters: tuple[str, ...]
    blocks: tuple[BasicBlock, ...]
    entry: str

    _index: dict | None = field(default=None, compare=False, repr=False)

    def block(self, label: str) -> BasicBlock:
        idx = self._block_index()
        if label not in idx:
            raise NotFound(label)
        return self.blocks[idx[label]]

    def _block_index(self) -> dict:
        if self._index is None:
            object.__setattr__(
                self, "_index", {b.label: i for i, b in enumerate(self.blocks)}
            )
        return self._index

    def instructions(self):
        for b in self.blocks:
            yield from b.instructions


@dataclass(frozen=True)
class Module:
    functions: tuple[FunctionIR, ...]
    declarations: frozenset[str]

    def function_names(self) -> frozenset:
        return frozenset(f.name for f in self.functions)


def cfg_predecessors(f: FunctionIR, label: str) -> list[str]:
    """Inverse of block successors, ordered by block position in `f`."""
    f.block(label)  # raises NotFound for unknown labels
    return [b.label for b in f.blocks if label in b.successors]


# ---------------------------------------------------------------------------
# tokenization helpers


def _strip_comment(line: str) -> str:
    # ';' never appears inside function-body tokens in the supported subset
    # (string literals only occur in global initializers, which are skipped).
    pos = line.find(";")
    return line if pos < 0 else line[:pos]


def _tokenize(text: str, line_no: int) -> list[str]:
    """Split on whitespace and commas, keeping (), [], {}, <> groups intact."""
    tokens: list[str] = []
    buf: list[str] = []
    depth = 0
    for ch in text:
        if ch in "([{<":
            depth += 1
            buf.append(ch)
        elif ch in ")]}>":
            depth -= 1
            if depth < 0:
                raise ParseError("unbalanced bracket", line_no)
            buf.append(ch)
        elif depth == 0 and (ch.isspace() or ch == ","):
            if buf:
                tokens.append("".join(buf))
                buf = []
        else:
            buf.append(ch)
    if depth != 0:
        raise ParseError("unbalanced bracket", line_no)
    if buf:
        tokens.append("".join(buf))
    return tokens


def _split_top_level(text: str) -> list[str]:
    """Split at top-level commas, respecting bracket nesting."""
    pieces: list[str] = []
    piece: list[str] = []
    depth = 0
    for ch in text:
        if ch in "([{<":
            depth += 1
        elif ch in ")]}>":
            depth -= 1
        if ch == "," and depth == 0:
            pieces.append("".join(piece))
            piece = []
        else:
            piece.append(ch)
    pieces.append("".join(piece))
    return pieces


def _is_value_token(tok: str) -> bool:
    if _TYPE_IDENT_RE.match(tok):
        return False
    if _IDENT_RE.match(tok):
        return True
    if tok in _CONSTANT_WORDS:
        return True
    return bool(_NUMERIC_RE.match(tok))


def _extract_values(tokens: list[str]) -> list[str]:
    """Value-like tokens in order, skipping types, flags and attr noise."""
    out: list[str] = []
    skip_next = False
    for tok in tokens:
        if skip_next:
            skip_next = False
            continue
        if tok in ("align", "addrspace", "syncscope"):
            skip_next = True
            continue
        if tok.startswith("!") or tok.startswith("#"):
            continue
        if tok.startswith("(") and ("@" in tok or "%" in tok):
            # inline constant expression, e.g. getelementptr (... @.str ...):
            # keep the first identifier inside as the operand
            m = re.search(r"[%@][-a-zA-Z$._0-9]+", tok)
            if m and not _TYPE_IDENT_RE.match(m.group(0)):
                out.append(m.group(0))
            continue
        if _is_value_token(tok):
            out.append(tok)
    return out


def _parse_params(raw: str, line_no: int) -> list[str]:
    params: list[str] = []
    if raw.strip() in ("", "..."):
        return params
    unnamed = 0
    for piece_text in _split_top_level(raw):
        piece_text = piece_text.strip()
        if not piece_text or piece_text == "...":
            continue
        toks = _tokenize(piece_text, line_no)
        names = [t for t in toks if t.startswith("%") and not _TYPE_IDENT_RE.match(t)]
        if names:
            params.append(names[-1])
        else:
            # legacy unnamed-parameter form; follow the LLVM numbering
            params.append(f"%{unnamed}")
        unnamed += 1
    return params


# ---------------------------------------------------------------------------
# instruction parsing


def _parse_call(text: str, line_no: int) -> tuple[str, list[str]]:
    """Return (callee, args) for the text after the 'call' token."""
    depth = 0
    open_idx = close_idx = -1
    for i, ch in enumerate(text):
        if ch == "(":
            if depth == 0:
                open_idx = i
            depth += 1
        elif ch == ")":
            depth -= 1
            if depth == 0:
                close_idx = i
    if open_idx < 0 or close_idx < 0:
        raise ParseError("call without argument list", line_no)
    head_toks = _tokenize(text[:open_idx].strip(), line_no)
    callee = None
    for tok in reversed(head_toks):
        if (tok.startswith("@") or tok.startswith("%")) and not _TYPE_IDENT_RE.match(tok):
            callee = tok
            break
    if callee is None:
        raise ParseError("cannot determine call target", line_no)
    args: list[str] = []
    arg_text = text[open_idx + 1 : close_idx]
    if arg_text.strip():
        for p in _split_top_level(arg_text):
            toks = _tokenize(p.strip(), line_no)
            if toks and toks[0] == "metadata":
                continue
            vals = _extract_values(toks)
            if vals:
                args.append(vals[-1])
    return callee, args


def _parse_instruction(text: str, line_no: int) -> tuple[str | None, str, list[str]]:
    """Parse one instruction line into (result, opcode, operands)."""
    result = None
    m = re.match(r"^(%[-a-zA-Z$._0-9]+|%\"[^\"]*\")\s*=\s*(.*)$", text)
    if m:
        result = m.group(1)
        text = m.group(2)
    tokens = _tokenize(text, line_no)
    if not tokens:
        raise ParseError("empty instruction", line_no)
    while tokens and tokens[0] in ("tail", "musttail", "notail"):
        tokens = tokens[1:]
        split = text.split(None, 1)
        if len(split) < 2:
            raise ParseError("dangling call prefix", line_no)
        text = split[1]
    if not tokens:
        raise ParseError("empty instruction", line_no)
    opcode = tokens[0]
    if opcode in _UNSUPPORTED:
        raise UnsupportedConstruct(opcode, line_no)
    rest = tokens[1:]

    if opcode == "call":
        callee, args = _parse_call(text[len("call"):], line_no)
        return result, "call", [callee] + args

    if opcode == "br":
        ops: list[str] = []
        i = 0
        while i < len(rest):
            if rest[i] == "label" and i + 1 < len(rest):
                ops.append(rest[i + 1].lstrip("%"))
                i += 2
                continue
            if _is_value_token(rest[i]):
                ops.append(rest[i])
            i += 1
        if len(ops) not in (1, 3):
            raise ParseError("malformed br", line_no)
        return None, "br", ops

    if opcode == "ret":
        return None, "ret", _extract_values(rest)[:1]

    if opcode == "unreachable":
        return None, "unreachable", []

    vals = _extract_values(rest)

    if opcode == "store":
        if len(vals) != 2:
            raise ParseError("store needs a value and an address", line_no)
        return None, "store", vals

    if opcode == "load":
        if result is None or len(vals) != 1:
            raise ParseError("load needs a result and one address", line_no)
        return result, "load", vals

    if opcode == "alloca":
        return result, "alloca", vals

    return result, opcode, vals


# ---------------------------------------------------------------------------
# module parsing


def parse_module(text: str) -> Module:
    """Parse textual LLVM IR into functions plus declared external names.

    Raises ParseError / UnsupportedConstruct; never silently drops an
    instruction it cannot represent.
    """
    functions: list[FunctionIR] = []
    declarations: set[str] = set()

    lines = text.splitlines()
    i = 0
    n = len(lines)
    while i < n:
        raw = _strip_comment(lines[i]).strip()
        if not raw:
            i += 1
            continue
        m = _DECLARE_RE.match(raw)
        if m:
            declarations.add(m.group(1).strip('"'))
            i += 1
            continue
        m = _DEFINE_RE.match(raw)
        if m:
            func, i = _parse_function(lines, i)
            functions.append(func)
            continue
        # globals, metadata, attributes, target lines: not part of the
        # structured view
        if raw.startswith(("@", "!", "attributes", "target", "source_filename",
                           "%", "$", "module")):
            i += 1
            continue
        raise ParseError(f"unrecognized top-level construct: {raw.split()[0]}", i + 1)
    return Module(tuple(functions), frozenset(declarations))


def _parse_function(lines: list[str], start: int) -> tuple[FunctionIR, int]:
    header = _strip_comment(lines[start]).strip()
    m = _DEFINE_RE.match(header)
    name = m.group(1).strip('"')
    open_paren = header.index("(", m.start())
    depth = 0
    close_paren = -1
    for j in range(open_paren, len(header)):
        if header[j] == "(":
            depth += 1
        elif header[j] == ")":
            depth -= 1
            if depth == 0:
                close_paren = j
                break
    if close_paren < 0:
        raise ParseError("unterminated parameter list", start + 1)
    params = _parse_params(header[open_paren + 1 : close_paren], start + 1)
    if not header.rstrip().endswith("{"):
        raise ParseError("expected '{' on define line", start + 1)

    # collect body lines until the closing '}'; old-style `; <label>:N`
    # comment labels are normalized before comments are stripped
    body: list[tuple[int, str]] = []
    i = start + 1
    while i < len(lines):
        old = _OLD_LABEL_RE.match(lines[i])
        raw = f"{old.group(1)}:" if old else _strip_comment(lines[i]).strip()
        if raw == "}":
            i += 1
            break
        if raw:
            body.append((i + 1, raw))
        i += 1
    else:
        raise ParseError("unterminated function body", start + 1)

    entry_label = _pick_entry_label(params, body)
    blocks: list[tuple[str, list[tuple[int, str]]]] = []
    current_label = entry_label
    current: list[tuple[int, str]] = []
    saw_label = False
    for line_no, raw in body:
        lm = _LABEL_LINE_RE.match(raw)
        if lm:
            if saw_label or current:
                blocks.append((current_label, current))
            current_label = lm.group(1).strip('"')
            current = []
            saw_label = True
            rest = raw[lm.end():].strip()
            if rest:
                current.append((line_no, rest))
            continue
        current.append((line_no, raw))
    blocks.append((current_label, current))

    built: list[BasicBlock] = []
    seen_results: set[str] = set(params)
    for label, insts in blocks:
        parsed: list[Instruction] = []
        for ordinal, (line_no, raw) in enumerate(insts):
            result, opcode, operands = _parse_instruction(raw, line_no)
            kind = classify(opcode)
            if result is not None:
                if result in seen_results:
                    raise ParseError(
                        f"SSA violation: {result} assigned more than once", line_no
                    )
                seen_results.add(result)
            parsed.append(
                Instruction(
                    opcode=opcode,
                    operands=tuple(operands),
                    result=result,
                    kind=kind,
                    block=label,
                    ordinal=ordinal,
                )
            )
        if not parsed or parsed[-1].kind not in (
            InstructionKind.Branch,
            InstructionKind.Return,
        ):
            where = insts[-1][0] if insts else start + 1
            raise ParseError(f"block '{label}' is not terminated", where)
        term = parsed[-1]
        if term.kind is InstructionKind.Branch:
            successors = term.operands[1:] if len(term.operands) == 3 else term.operands
        else:
            successors = ()
        built.append(BasicBlock(label, tuple(parsed), tuple(successors)))

    labels = {b.label for b in built}
    if len(labels) != len(built):
        raise ParseError(f"duplicate block label in @{name}", start + 1)
    for b in built:
        for s in b.successors:
            if s not in labels:
                raise ParseError(f"branch to unknown label %{s} in @{name}", start + 1)
    func = FunctionIR(
        name=name,
        parameters=tuple(params),
        blocks=tuple(built),
        entry=built[0].label,
    )
    return func, i


def _pick_entry_label(params: list[str], body: list[tuple[int, str]]) -> str:
    if body and _LABEL_LINE_RE.match(body[0][1]):
        return _LABEL_LINE_RE.match(body[0][1]).group(1).strip('"')
    # unnamed entry block: follow the LLVM numbering (next unnamed slot after
    # the parameters) when the parameters are numeric, else use "entry"
    numeric = [int(p[1:]) for p in params if p[1:].isdigit()]
    if numeric and len(numeric) == len(params):
        return str(max(numeric) + 1)
    return "entry"


# ---------------------------------------------------------------------------
# printing (round-trips through parse_module)


def pretty_print(f: FunctionIR) -> str:
    out = [f"define @{f.name}({', '.join(f.parameters)}) {{"]
    for b in f.blocks:
        out.append(f"{b.label}:")
        for inst in b.instructions:
            out.append(f"  {inst}")
    out.append("}")
    return "\n".join(out) + "\n"
