import pytest
from hypothesis import given, settings, strategies as st

from conftest import INPUT_ONLY, REFILL, SINGLE_RATE
from shype.lang import HypeSyntaxError, load_model, render
from shype.lang.parser import parse, tokenize
from shype.lang.render import isomorphic


def test_node_section_counts(node_text):
    src = parse(node_text)
    assert src.name == "network_node"
    assert len(src.variables) == 1
    assert len(src.params) == 7
    assert len(src.influences) == 2
    assert len(src.events) == 7
    assert [e.name for e in src.events if e.synthetic] == ["init"]
    assert len(src.templates) == 1
    assert len(src.components) == 3
    assert len(src.controllers) == 5


def test_node_elaborates(node):
    assert list(node.variables) == ["B"]
    assert node.params["r_out"] == -2
    assert set(node.events) == {"init", "on_in", "off_in", "on_out", "off_out", "full", "empty"}
    assert node.events["full"].kind == "deterministic"
    assert node.events["on_in"].kind == "stochastic"
    assert set(node.subcomponents) == {"input", "output"}


def test_comments_and_tabs_ignored():
    toks = tokenize("var B = 0;\t// trailing\n")
    assert [t.value for t in toks if t.kind != "eof"] == ["var", "B", "=", "0", ";"]


def test_controller_reference_renamed_is_reported(node_text):
    bad = node_text.replace("sys <*> con;", "sys <*> conx;")
    with pytest.raises(HypeSyntaxError) as exc:
        load_model(bad)
    assert "undefined name conx" in str(exc.value)
    assert exc.value.line == bad.splitlines().index("sys <*> conx;     //system") + 1


def test_missing_semicolon_position():
    with pytest.raises(HypeSyntaxError) as exc:
        load_model(SINGLE_RATE.replace("var n = 0;", "var n = 0"))
    assert exc.value.line == 4  # definitions start on line 4
    assert "expected" in exc.value.message


def test_template_arity_mismatch(node_text):
    bad = node_text.replace("switch(on_in,off_in,full,r_in)", "switch(on_in,off_in,full)")
    with pytest.raises(HypeSyntaxError, match="argument"):
        load_model(bad)


@pytest.mark.parametrize("text", [SINGLE_RATE, INPUT_ONLY, REFILL])
def test_render_roundtrip(text):
    m = load_model(text)
    assert isomorphic(load_model(render(m)), m)


def test_render_roundtrip_bundled(buffer_eq, node):
    for m in (buffer_eq, node):
        again = load_model(render(m))
        assert isomorphic(again, m)
        assert render(again) == render(m)


@settings(max_examples=60, deadline=None)
@given(st.floats(0, 1e6, allow_nan=False), st.floats(1e-6, 1e3, allow_nan=False),
       st.sampled_from(["maxB", "r_in"]))
def test_roundtrip_preserves_parameter_values(b0, rate, which):
    text = INPUT_ONLY.replace("param maxB = 100;", f"param maxB = {b0!r};") \
        .replace("param r_in = 1;", f"param r_in = {rate!r};")
    m = load_model(text)
    again = load_model(render(m))
    assert again.params[which] == m.params[which]
    assert isomorphic(again, m)
