"""Variable-based flow graph construction from parsed IR functions.

Nodes are variables, per-occurrence opcode tokens, constants and block
labels; edges carry either data dependencies (value flow) or control
dependencies (branch targets, block membership of stores, and the
sequential order of stores to one address).
"""

from __future__ import annotations

import enum
import json
from collections import deque
from dataclasses import dataclass, field

from .ir import (
    FunctionIR,
    Instruction,
    InstructionKind,
    Module,
    cfg_predecessors,
)


class UnresolvedOperand(Exception):
    pass


class NodeOrigin(enum.Enum):
    Variable = "variable"
    Opcode = "opcode"
    LabelId = "label"
    Parameter = "parameter"
    Constant = "constant"


class EdgeKind(enum.Enum):
    Data = "data"
    Control = "control"


@dataclass
class VfgNode:
    id: int
    label: str
    origin: NodeOrigin
    # key is a stable structural handle (identifier, opcode@instr, ...)
    # used by tests and debugging; it is not part of the wire format
    key: str = ""


@dataclass(frozen=True)
class VfgEdge:
    src: int
    dst: int
    kind: EdgeKind


@dataclass
class VfgMeta:
    """Bookkeeping the optimizer needs: address names, store/load sites,
    label-node ownership and the CFG shape."""

    address_names: dict = field(default_factory=dict)   # addr ident -> base name
    stores: dict = field(default_factory=dict)          # addr ident -> [[node ids], ...]
    loads: dict = field(default_factory=dict)           # addr ident -> [result node ids]
    label_nodes: dict = field(default_factory=dict)     # block label -> node id
    cfg: dict = field(default_factory=dict)             # block label -> [successors]


class Vfg:
    def __init__(self, function_name: str):
        self.function_name = function_name
        self.nodes: list[VfgNode] = []
        self.edges: list[VfgEdge] = []
        self.meta = VfgMeta()
        self._edge_set: set = set()

    def add_node(self, label: str, origin: NodeOrigin, key: str = "") -> int:
        nid = len(self.nodes)
        self.nodes.append(VfgNode(nid, label, origin, key or f"n{nid}"))
        return nid

    def add_edge(self, src: int, dst: int, kind: EdgeKind) -> None:
        if not (0 <= src < len(self.nodes) and 0 <= dst < len(self.nodes)):
            raise ValueError(f"edge endpoint out of range: {src}->{dst}")
        trip = (src, dst, kind)
        if trip in self._edge_set:
            return
        self._edge_set.add(trip)
        self.edges.append(VfgEdge(src, dst, kind))

    def has_edge(self, src: int, dst: int, kind: EdgeKind) -> bool:
        return (src, dst, kind) in self._edge_set

    def node_by_key(self, key: str) -> VfgNode:
        for n in self.nodes:
            if n.key == key:
                return n
        raise KeyError(key)

    def degrees(self) -> list[int]:
        deg = [0] * len(self.nodes)
        for e in self.edges:
            deg[e.src] += 1
            deg[e.dst] += 1
        return deg

    # -- serialization ------------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "function": self.function_name,
            "nodes": [
                {"id": n.id, "label": n.label, "origin": n.origin.value}
                for n in self.nodes
            ],
            "edges": [
                {"src": e.src, "dst": e.dst, "kind": e.kind.value}
                for e in self.edges
            ],
            "meta": {
                "address_names": self.meta.address_names,
                "stores": self.meta.stores,
                "loads": self.meta.loads,
                "label_nodes": self.meta.label_nodes,
                "cfg": self.meta.cfg,
            },
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json_dict(cls, data: dict) -> "Vfg":
        g = cls(data["function"])
        for nd in sorted(data["nodes"], key=lambda d: d["id"]):
            nid = g.add_node(nd["label"], NodeOrigin(nd["origin"]))
            if nid != nd["id"]:
                raise ValueError("node ids must be dense and sorted")
        for ed in data["edges"]:
            g.add_edge(ed["src"], ed["dst"], EdgeKind(ed["kind"]))
        meta = data.get("meta", {})
        g.meta.address_names = dict(meta.get("address_names", {}))
        g.meta.stores = {a: [list(ev) for ev in evs] for a, evs in meta.get("stores", {}).items()}
        g.meta.loads = {a: list(v) for a, v in meta.get("loads", {}).items()}
        g.meta.label_nodes = dict(meta.get("label_nodes", {}))
        g.meta.cfg = {b: list(s) for b, s in meta.get("cfg", {}).items()}
        return g

    @classmethod
    def from_json(cls, text: str) -> "Vfg":
        return cls.from_json_dict(json.loads(text))

    def to_dot(self) -> str:
        lines = [f'digraph "{self.function_name}" {{']
        for n in self.nodes:
            shape = "box"
            lines.append(f'  n{n.id} [label="{n.label}", shape={shape}];')
        for e in self.edges:
            style = "solid" if e.kind is EdgeKind.Data else "dashed"
            lines.append(f"  n{e.src} -> n{e.dst} [style={style}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# Backward store search


def _search_store_sites(
    f: FunctionIR, addr: str, block: str, before: int, visited: set, out: list
) -> None:
    blk = f.block(block)
    for pos in range(before - 1, -1, -1):
        inst = blk.instructions[pos]
        if inst.kind is InstructionKind.Store and inst.operands[1] == addr:
            site = (block, pos)
            if site not in out:
                out.append(site)
            return
    for pred in cfg_predecessors(f, block):
        if pred in visited:
            continue
        visited.add(pred)
        _search_store_sites(
            f, addr, pred, len(f.block(pred).instructions), visited, out
        )


def store_sites_for_load(f: FunctionIR, site: Instruction) -> list:
    """(block, position) of the nearest store to the loaded address on every
    backward CFG path from the load, in discovery order."""
    addr = site.operands[0]
    out: list = []
    _search_store_sites(f, addr, site.block, site.ordinal, set(), out)
    return out


def search_stored_values(addr: str, site: Instruction, f: FunctionIR) -> list[str]:
    """Stored-value identifiers reaching a load of `addr` at `site`.

    Walks backward from the load (first within its block, then through CFG
    predecessors), taking the nearest store per backward path; a visited set
    makes cycles terminate. Returns deduplicated identifiers in discovery
    order; never returns the address itself.
    """
    if site.kind is not InstructionKind.Load or site.operands[0] != addr:
        raise ValueError("site must be a load of addr")
    values: list[str] = []
    for block, pos in store_sites_for_load(f, site):
        v = f.block(block).instructions[pos].operands[0]
        if v not in values:
            values.append(v)
    return values


# ---------------------------------------------------------------------------
# Graph building


def _display(ident: str) -> str:
    ident = ident.lstrip("%@")
    return ident.strip('"')


def _base_name(ident: str) -> str | None:
    """Source-variable name behind an address identifier, if recoverable."""
    name = _display(ident)
    if name.endswith(".addr"):
        name = name[: -len(".addr")]
    if not name or name.isdigit():
        return None
    return name


class _Builder:
    def __init__(self, f: FunctionIR, module_functions):
        self.f = f
        self.module_functions = set(module_functions)
        self.g = Vfg(f.name)
        self.ident_nodes: dict[str, int] = {}
        self.alias: dict[str, list[str]] = {}
        self.param_set = set(f.parameters)

    # -- node lookup --------------------------------------------------------

    def _node_for_ident(self, ident: str) -> int:
        if ident in self.ident_nodes:
            return self.ident_nodes[ident]
        origin = (
            NodeOrigin.Parameter if ident in self.param_set else NodeOrigin.Variable
        )
        nid = self.g.add_node(_display(ident), origin, key=ident)
        self.ident_nodes[ident] = nid
        return nid

    def _expand_alias(self, ident: str, stack: tuple = ()) -> list[str]:
        if ident not in self.alias:
            return [ident]
        if ident in stack:
            return []
        out: list[str] = []
        for ret_ident in self.alias[ident]:
            for leaf in self._expand_alias(ret_ident, stack + (ident,)):
                if leaf not in out:
                    out.append(leaf)
        return out

    def resolve_operand(self, token: str, gi: int, pos: int) -> list[int]:
        """Node ids for an operand token; self-call results expand to the
        values feeding the function's returns. Literals (including literal
        return values reached through that expansion) get one constant node
        per occurrence."""
        out: list[int] = []
        if token.startswith("%") or token.startswith("@"):
            leaves = self._expand_alias(token)
        else:
            leaves = [token]
        for leaf in leaves:
            if leaf.startswith("%") or leaf.startswith("@"):
                out.append(self._node_for_ident(leaf))
            else:
                key = f"{leaf}@i{gi}.{pos}"
                out.append(self.g.add_node(leaf, NodeOrigin.Constant, key=key))
        return out

    def _label_node(self, block: str, role: str | None = None) -> int:
        if block in self.g.meta.label_nodes:
            return self.g.meta.label_nodes[block]
        label = f"label_{role}" if role else f"label_{block}"
        nid = self.g.add_node(label, NodeOrigin.LabelId, key=f"label:{block}")
        self.g.meta.label_nodes[block] = nid
        return nid

    # -- passes --------------------------------------------------------------

    def build(self) -> Vfg:
        f = self.f
        self.g.meta.cfg = {b.label: list(b.successors) for b in f.blocks}
        all_insts = list(f.instructions())

        returns = [i.operands[0] for i in all_insts if i.opcode == "ret" and i.operands]
        for inst in all_insts:
            if inst.kind is InstructionKind.Alloca and inst.result:
                base = _base_name(inst.result)
                if base:
                    self.g.meta.address_names[inst.result] = base
            if (
                inst.kind is InstructionKind.Call
                and inst.result
                and inst.operands[0].startswith("@")
                and _display(inst.operands[0]) == f.name
            ):
                self.alias[inst.result] = returns
        for p in f.parameters:
            base = _base_name(p)
            if base:
                self.g.meta.address_names.setdefault(p, base)

        # pass 1: stores define the value nodes and the per-address order
        for gi, inst in enumerate(all_insts):
            if inst.kind is not InstructionKind.Store:
                continue
            value, addr = inst.operands
            nodes = self.resolve_operand(value, gi, 0)
            self.g.meta.stores.setdefault(addr, []).append(list(nodes))
            if addr.startswith("@"):
                self.g.meta.address_names.setdefault(addr, _display(addr))

        # pass 2: per-instruction edges
        for gi, inst in enumerate(all_insts):
            kind = inst.kind
            if kind in (InstructionKind.Alloca, InstructionKind.Store):
                continue
            if kind is InstructionKind.Branch:
                if len(inst.operands) == 3:
                    cond, t_lab, f_lab = inst.operands
                    for cnode in self.resolve_operand(cond, gi, 0):
                        self.g.add_edge(
                            cnode, self._label_node(t_lab, "true"), EdgeKind.Control
                        )
                        self.g.add_edge(
                            cnode, self._label_node(f_lab, "false"), EdgeKind.Control
                        )
                continue
            if kind is InstructionKind.Return:
                if inst.opcode == "ret" and inst.operands:
                    ret_node = self.g.add_node("ret", NodeOrigin.Opcode, key=f"ret@i{gi}")
                    for vnode in self.resolve_operand(inst.operands[0], gi, 0):
                        self.g.add_edge(vnode, ret_node, EdgeKind.Data)
                continue
            if kind is InstructionKind.Load:
                addr = inst.operands[0]
                rnode = self._node_for_ident(inst.result)
                self.g.meta.loads.setdefault(addr, []).append(rnode)
                sites = store_sites_for_load(self.f, inst)
                sources: list[int] = []
                for s_block, s_pos in sites:
                    order = self._store_order(addr, s_block, s_pos)
                    for vn in self.g.meta.stores[addr][order]:
                        if vn not in sources:
                            sources.append(vn)
                if not sources:
                    # no store reaches this load: fall back to the address
                    # itself (parameter, global or computed pointer)
                    sources = self.resolve_operand(addr, gi, 0)
                for vn in sources:
                    if vn != rnode:
                        self.g.add_edge(vn, rnode, EdgeKind.Data)
                continue
            if kind is InstructionKind.Call:
                callee = inst.operands[0]
                args = inst.operands[1:]
                name = _display(callee)
                recursive = callee.startswith("@") and name == self.f.name
                if recursive:
                    for j, arg in enumerate(args):
                        if j >= len(self.f.parameters):
                            break
                        pnode = self._node_for_ident(self.f.parameters[j])
                        for anode in self.resolve_operand(arg, gi, j + 1):
                            self.g.add_edge(anode, pnode, EdgeKind.Data)
                    continue
                call_node = self.g.add_node(name, NodeOrigin.Opcode, key=f"{name}@i{gi}")
                for j, arg in enumerate(args):
                    for anode in self.resolve_operand(arg, gi, j + 1):
                        self.g.add_edge(anode, call_node, EdgeKind.Data)
                if inst.result:
                    rnode = self._node_for_ident(inst.result)
                    self.g.add_edge(call_node, rnode, EdgeKind.Data)
                continue
            # Computation and Other share the default shape
            op_node = self.g.add_node(inst.opcode, NodeOrigin.Opcode, key=f"{inst.opcode}@i{gi}")
            for j, operand in enumerate(inst.operands):
                for onode in self.resolve_operand(operand, gi, j + 1):
                    self.g.add_edge(onode, op_node, EdgeKind.Data)
            if inst.result:
                rnode = self._node_for_ident(inst.result)
                self.g.add_edge(op_node, rnode, EdgeKind.Data)

        # pass 3: store sequencing and block-membership control edges
        for addr, events in self.g.meta.stores.items():
            for prev, nxt in zip(events, events[1:]):
                for a in prev:
                    for b in nxt:
                        if a != b:
                            self.g.add_edge(a, b, EdgeKind.Control)
        stores_by_block: dict[str, list[int]] = {}
        for block in (b.label for b in f.blocks):
            stores_by_block[block] = []
        for inst in f.instructions():
            if inst.kind is InstructionKind.Store:
                addr = inst.operands[1]
                order = self._store_order(addr, inst.block, inst.ordinal)
                stores_by_block[inst.block].extend(self.g.meta.stores[addr][order])
        for block, value_nodes in stores_by_block.items():
            if not value_nodes:
                continue
            lnode = self._label_node(block)
            for vn in value_nodes:
                if vn != lnode:
                    self.g.add_edge(lnode, vn, EdgeKind.Control)
        return self.g

    def _store_order(self, addr: str, block: str, ordinal: int) -> int:
        """Index of the store at (block, ordinal) within the per-address
        event list (walk order)."""
        order = 0
        for inst in self.f.instructions():
            if inst.kind is InstructionKind.Store and inst.operands[1] == addr:
                if inst.block == block and inst.ordinal == ordinal:
                    return order
                order += 1
        raise UnresolvedOperand(f"no store to {addr} at {block}:{ordinal}")


def build_vfg(f: FunctionIR, module_functions=()) -> Vfg:
    """Construct the variable-based flow graph of one function.

    `module_functions` is the set of names defined in the module, used to
    distinguish recursive self-calls from calls into other code.
    """
    return _Builder(f, module_functions).build()


def build_all(module: Module) -> list[Vfg]:
    names = module.function_names()
    return [build_vfg(f, names) for f in module.functions]


# ---------------------------------------------------------------------------
# Statistics


def graph_stats(g: Vfg) -> dict:
    """Node/edge counts plus the undirected diameter (maximum finite
    shortest-path length over node pairs)."""
    n = len(g.nodes)
    data_edges = sum(1 for e in g.edges if e.kind is EdgeKind.Data)
    control_edges = len(g.edges) - data_edges
    adj: list[list[int]] = [[] for _ in range(n)]
    for e in g.edges:
        adj[e.src].append(e.dst)
        adj[e.dst].append(e.src)
    diameter = 0
    for start in range(n):
        dist = {start: 0}
        dq = deque([start])
        while dq:
            u = dq.popleft()
            for v in adj[u]:
                if v not in dist:
                    dist[v] = dist[u] + 1
                    dq.append(v)
        if dist:
            diameter = max(diameter, max(dist.values()))
    return {
        "node_count": n,
        "data_edge_count": data_edges,
        "control_edge_count": control_edges,
        "diameter": diameter,
    }
