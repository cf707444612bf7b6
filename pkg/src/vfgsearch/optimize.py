"""Four-step reduction of a freshly built flow graph.

1. numeric temporaries whose value chain starts at a named alloca or
   parameter take that variable's name (repeat stores get _1, _2, ...);
2. opcode nodes for memory/addressing, conversion and exception handling
   are deleted, predecessors bridged to successors;
3. remaining numeric register nodes are deleted the same way;
4. label nodes of single-successor/single-predecessor block pairs merge.

Each step preserves reachability between surviving nodes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .vfg import EdgeKind, NodeOrigin, Vfg, VfgEdge, VfgNode


@dataclass(frozen=True)
class TrivialOpcodeSet:
    memory: frozenset = frozenset({"alloca", "load", "store", "getelementptr"})
    conversion: frozenset = frozenset(
        {
            "trunc", "zext", "sext", "fptrunc", "fpext", "fptoui", "fptosi",
            "uitofp", "sitofp", "ptrtoint", "inttoptr", "bitcast",
            "addrspacecast",
        }
    )
    exception: frozenset = frozenset(
        {"landingpad", "resume", "unreachable", "cleanuppad", "catchpad"}
    )

    def union(self) -> frozenset:
        return self.memory | self.conversion | self.exception

    @classmethod
    def from_file(cls, path) -> "TrivialOpcodeSet":
        """One opcode per line, optionally prefixed 'memory:', 'conversion:'
        or 'exception:'; bare tokens land in the memory set."""
        sets = {"memory": set(), "conversion": set(), "exception": set()}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line or line.startswith("#"):
                    continue
                if ":" in line:
                    cat, tok = line.split(":", 1)
                    sets.setdefault(cat.strip(), sets["memory"]).add(tok.strip())
                else:
                    sets["memory"].add(line)
        return cls(
            memory=frozenset(sets["memory"]),
            conversion=frozenset(sets["conversion"]),
            exception=frozenset(sets["exception"]),
        )


@dataclass
class OptStats:
    nodes_before: int = 0
    nodes_after: int = 0
    edges_before: int = 0
    edges_after: int = 0
    renamed: int = 0
    removed_by_step: dict = field(
        default_factory=lambda: {
            "rename": 0,
            "trivial_opcodes": 0,
            "registers": 0,
            "block_merge": 0,
        }
    )

    def to_json_dict(self) -> dict:
        return {
            "nodes_before": self.nodes_before,
            "nodes_after": self.nodes_after,
            "edges_before": self.edges_before,
            "edges_after": self.edges_after,
            "renamed": self.renamed,
            "removed_by_step": dict(self.removed_by_step),
        }


def _is_numeric_label(label: str) -> bool:
    return label.isdigit()


def _copy_graph(g: Vfg) -> Vfg:
    out = Vfg(g.function_name)
    for n in g.nodes:
        out.add_node(n.label, n.origin, key=n.key)
    for e in g.edges:
        out.add_edge(e.src, e.dst, e.kind)
    out.meta.address_names = dict(g.meta.address_names)
    out.meta.stores = {a: [list(ev) for ev in evs] for a, evs in g.meta.stores.items()}
    out.meta.loads = {a: list(v) for a, v in g.meta.loads.items()}
    out.meta.label_nodes = dict(g.meta.label_nodes)
    out.meta.cfg = {b: list(s) for b, s in g.meta.cfg.items()}
    return out


def _remove_with_bridging(g: Vfg, doomed: set) -> Vfg:
    """Delete `doomed` nodes, linking predecessors to successors. A bridge
    edge is Data if either side was Data, else Control. Self-loops created
    by bridging are dropped. Node ids are re-densified."""
    if not doomed:
        return g
    outs: dict[int, set] = {n.id: set() for n in g.nodes}
    ins: dict[int, set] = {n.id: set() for n in g.nodes}
    for e in g.edges:
        outs[e.src].add((e.dst, e.kind))
        ins[e.dst].add((e.src, e.kind))
    for nid in sorted(doomed):
        for (p, pk) in sorted(ins[nid], key=lambda t: (t[0], t[1].value)):
            outs[p].discard((nid, pk))
        for (s, sk) in sorted(outs[nid], key=lambda t: (t[0], t[1].value)):
            ins[s].discard((nid, sk))
        for (p, pk) in sorted(ins[nid], key=lambda t: (t[0], t[1].value)):
            for (s, sk) in sorted(outs[nid], key=lambda t: (t[0], t[1].value)):
                if p == s:
                    continue
                kind = EdgeKind.Data if EdgeKind.Data in (pk, sk) else EdgeKind.Control
                outs[p].add((s, kind))
                ins[s].add((p, kind))
        del outs[nid], ins[nid]

    remap = {}
    survivors = [n for n in g.nodes if n.id not in doomed]
    for new_id, n in enumerate(survivors):
        remap[n.id] = new_id

    out = Vfg(g.function_name)
    for n in survivors:
        out.add_node(n.label, n.origin, key=n.key)
    edge_list = []
    for old_src, targets in outs.items():
        for (old_dst, kind) in targets:
            edge_list.append((remap[old_src], remap[old_dst], kind))
    for src, dst, kind in sorted(edge_list, key=lambda t: (t[0], t[1], t[2].value)):
        out.add_edge(src, dst, kind)

    out.meta.address_names = dict(g.meta.address_names)
    out.meta.stores = {
        a: [[remap[i] for i in ev if i in remap] for ev in evs]
        for a, evs in g.meta.stores.items()
    }
    out.meta.loads = {
        a: [remap[i] for i in v if i in remap] for a, v in g.meta.loads.items()
    }
    out.meta.label_nodes = {
        b: remap[i] for b, i in g.meta.label_nodes.items() if i in remap
    }
    out.meta.cfg = {b: list(s) for b, s in g.meta.cfg.items()}
    return out


# ---------------------------------------------------------------------------
# step 1: rename numeric temporaries


def rename_temporaries(g: Vfg, f=None, stats: OptStats | None = None) -> Vfg:
    """Give numeric temporaries the source-variable names recorded for the
    addresses they were stored to or loaded from."""
    g = _copy_graph(g)
    renamed = 0

    def rename(nid: int, to: str) -> int:
        node = g.nodes[nid]
        if node.origin in (NodeOrigin.Variable, NodeOrigin.Parameter) and (
            _is_numeric_label(node.label)
        ):
            node.label = to
            return 1
        return 0

    # stored values first (they own the name_1, name_2 progression), then
    # load results pick up the bare name
    for addr, base in g.meta.address_names.items():
        for slot, nodes in enumerate(g.meta.stores.get(addr, [])):
            for nid in nodes:
                renamed += rename(nid, base if slot == 0 else f"{base}_{slot}")
    for addr, base in g.meta.address_names.items():
        for nid in g.meta.loads.get(addr, []):
            renamed += rename(nid, base)
    if stats is not None:
        stats.renamed += renamed
    return g


# ---------------------------------------------------------------------------
# step 2: drop trivial opcode nodes


def remove_trivial_opcodes(g: Vfg, trivial: TrivialOpcodeSet | None = None) -> Vfg:
    trivial = trivial or TrivialOpcodeSet()
    labels = trivial.union()
    doomed = {n.id for n in g.nodes if n.origin is NodeOrigin.Opcode and n.label in labels}
    return _remove_with_bridging(_copy_graph(g), doomed)


# ---------------------------------------------------------------------------
# step 3: drop leftover numeric registers


def remove_register_nodes(g: Vfg) -> Vfg:
    doomed = {
        n.id
        for n in g.nodes
        if n.origin in (NodeOrigin.Variable, NodeOrigin.Parameter)
        and _is_numeric_label(n.label)
    }
    return _remove_with_bridging(_copy_graph(g), doomed)


# ---------------------------------------------------------------------------
# step 4: merge label nodes of trivially sequenced blocks


def merge_isolated_blocks(g: Vfg, f=None) -> Vfg:
    g = _copy_graph(g)
    cfg = g.meta.cfg
    changed = True
    while changed:
        changed = False
        for a in list(cfg):
            succs = cfg.get(a, [])
            distinct = sorted(set(succs))
            if len(distinct) != 1:
                continue
            b = distinct[0]
            if b == a or b not in cfg:
                continue
            preds_b = [x for x in cfg if b in cfg[x]]
            if preds_b != [a]:
                continue
            la = g.meta.label_nodes.get(a)
            lb = g.meta.label_nodes.get(b)
            if lb is not None:
                if la is None:
                    # b's node survives but now stands for the merged block
                    g.meta.label_nodes[a] = lb
                else:
                    _absorb_label_node(g, keep=la, drop=lb)
                del g.meta.label_nodes[b]
            cfg[a] = cfg[b]
            del cfg[b]
            changed = True
            break
    g = _drop_absorbed(g)
    return g


def _absorb_label_node(g: Vfg, keep: int, drop: int) -> None:
    new_edges = []
    for e in g.edges:
        src = keep if e.src == drop else e.src
        dst = keep if e.dst == drop else e.dst
        if src == dst:
            continue
        new_edges.append(VfgEdge(src, dst, e.kind))
    g.edges = []
    g._edge_set = set()
    for e in new_edges:
        g.add_edge(e.src, e.dst, e.kind)
    g.nodes[drop].label = "\0absorbed"


def _drop_absorbed(g: Vfg) -> Vfg:
    doomed = {n.id for n in g.nodes if n.label == "\0absorbed"}
    if not doomed:
        return g
    # absorbed nodes already forwarded their edges; plain removal
    for nid in doomed:
        g.edges = [e for e in g.edges if e.src != nid and e.dst != nid]
    g._edge_set = {(e.src, e.dst, e.kind) for e in g.edges}
    return _remove_with_bridging(g, doomed)


# ---------------------------------------------------------------------------
# the full pipeline


def optimize(
    g: Vfg, f=None, trivial: TrivialOpcodeSet | None = None
) -> tuple[Vfg, OptStats]:
    """Apply the four reduction steps in order and report what changed."""
    stats = OptStats(
        nodes_before=len(g.nodes),
        edges_before=len(g.edges),
    )
    g1 = rename_temporaries(g, f, stats=stats)
    g2 = remove_trivial_opcodes(g1, trivial)
    stats.removed_by_step["trivial_opcodes"] = len(g1.nodes) - len(g2.nodes)
    g3 = remove_register_nodes(g2)
    stats.removed_by_step["registers"] = len(g2.nodes) - len(g3.nodes)
    g4 = merge_isolated_blocks(g3, f)
    stats.removed_by_step["block_merge"] = len(g3.nodes) - len(g4.nodes)
    stats.nodes_after = len(g4.nodes)
    stats.edges_after = len(g4.edges)
    return g4, stats
