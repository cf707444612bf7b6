import pathlib
import random

import pytest


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    entries = []
    for outcome in ("passed", "failed"):
        for rep in terminalreporter.stats.get(outcome, []):
            if "test_acceptance" in getattr(rep, "nodeid", ""):
                entries.append((rep.nodeid.split("::")[-1], outcome))
    if entries:
        terminalreporter.write_sep("-", "acceptance criteria")
        for name, outcome in sorted(entries):
            mark = "PASS" if outcome == "passed" else "FAIL"
            terminalreporter.write_line(f"{mark}: {name}")

from vfgsearch.ir import FunctionIR, parse_module
from vfgsearch.vfg import Vfg, build_vfg

FIXTURES = pathlib.Path(__file__).parent / "fixtures"


def ir_text(name: str) -> str:
    return (FIXTURES / "ir" / name).read_text()


def figure_text(name: str) -> str:
    return (FIXTURES / "figures" / name).read_text()


def parse_fixture(name: str) -> FunctionIR:
    return parse_module(ir_text(name)).functions[0]


def build_fixture(name: str) -> Vfg:
    module = parse_module(ir_text(name))
    return build_vfg(module.functions[0], module.function_names())


def node_keyset(g: Vfg) -> set:
    return {(n.key, n.label, n.origin.value) for n in g.nodes}


def edge_keyset(g: Vfg) -> set:
    return {
        (g.nodes[e.src].key, g.nodes[e.dst].key, e.kind.value) for e in g.edges
    }


ALL_FIXTURES = sorted(p.name for p in (FIXTURES / "ir").glob("*.ll"))


@pytest.fixture
def rng():
    return random.Random(0xC0DE)


def random_ir_text(rng: random.Random, name: str = "f") -> str:
    """A small random function in the supported subset: allocas in the
    entry block, random store/load traffic, and random branch structure."""
    nblocks = rng.randint(1, 8)
    naddrs = rng.randint(1, 3)
    labels = [f"b{i}" for i in range(nblocks)]
    lines = [f"define void @{name}() {{"]
    tmp = 0
    for bi, lab in enumerate(labels):
        lines.append(f"{lab}:")
        block_tmps = []
        if bi == 0:
            for a in range(naddrs):
                lines.append(f"  %p{a} = alloca i32")
        for _ in range(rng.randint(0, 3)):
            addr = f"%p{rng.randint(0, naddrs - 1)}"
            if rng.random() < 0.55:
                if block_tmps and rng.random() < 0.4:
                    val = rng.choice(block_tmps)
                else:
                    val = str(rng.randint(0, 9))
                lines.append(f"  store i32 {val}, i32* {addr}")
            else:
                lines.append(f"  %t{tmp} = load i32, i32* {addr}")
                block_tmps.append(f"%t{tmp}")
                tmp += 1
        choice = rng.random()
        if bi == nblocks - 1 or choice < 0.25:
            lines.append("  ret void")
        elif choice < 0.6:
            lines.append(f"  br label %{rng.choice(labels)}")
        else:
            t1, t2 = rng.choice(labels), rng.choice(labels)
            if block_tmps:
                cond = f"%c{tmp}"
                lines.append(f"  {cond} = icmp slt i32 {block_tmps[-1]}, {rng.randint(0, 9)}")
                tmp += 1
            else:
                cond = "true"
            lines.append(f"  br i1 {cond}, label %{t1}, label %{t2}")
    lines.append("}")
    return "\n".join(lines) + "\n"


def random_function(rng: random.Random, name: str = "f") -> FunctionIR:
    return parse_module(random_ir_text(rng, name)).functions[0]
