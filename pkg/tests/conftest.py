import os

import pytest

import shype
from shype.lang import load_model, load_model_file

HERE = os.path.dirname(__file__)
BUFFER_EQ = os.path.join(HERE, "data", "buffer_eq.hype")
NODE = shype.data_path("network_node.hype")


def data(name):
    return os.path.join(HERE, "data", name)


def hype(defs="", mappings="", subs="", comps="", cons="", system="", name="t"):
    """Assemble a model text from section bodies."""
    return (f"hype model {name}\n#definitions\nfunction const() = 1;\n{defs}\n"
            f"#mappings\n{mappings}\n#subcomponents\n{subs}\n#components\n{comps}\n"
            f"#controller\n{cons}\n#system\n{system}\n")


# one stochastic event in isolation: k fires at rate lam forever
SINGLE_RATE = hype(
    defs="var n = 0; param lam = 0.5;",
    mappings="infl c :-> n; event k = :-> n = n + 1 @ lam;",
    subs="Count := init:[0,const()] + k:[0,const()] : c;",
    comps="Sys := Count;",
    cons="Loop := k.Loop;",
    system="Sys <*> Loop;",
)

# input switched on at init, full at B >= maxB
INPUT_ONLY = hype(
    defs="var B = 0; param maxB = 100; param r_in = 1;",
    mappings="infl in :-> B; event full = B >= maxB :-> B = (1 - 0.5) * B;",
    subs="Input := init:[r_in,const()] + full:[0,const()] : in;",
    comps="Sys := Input;",
    cons="Con := full.Done; Done := 0;",
    system="Sys <*> Con;",
)

# deterministic-only: a tank draining at unit rate and refilled on empty
REFILL = hype(
    defs="var x = 3; param top = 3;",
    mappings="infl d :-> x; event empty = x <= 0 :-> x = top;",
    subs="Drain := init:[-1,const()] + empty:[-1,const()] : d;",
    comps="Sys := Drain;",
    cons="Con := empty.Con;",
    system="Sys <*> Con;",
)


@pytest.fixture(scope="session")
def buffer_eq():
    return load_model_file(BUFFER_EQ)


@pytest.fixture(scope="session")
def node():
    return load_model_file(NODE)


@pytest.fixture(scope="session")
def node_text():
    with open(NODE, encoding="utf-8") as fh:
        return fh.read()


@pytest.fixture
def load():
    return load_model


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for k in sorted(results):
            terminalreporter.write_line(results[k])
