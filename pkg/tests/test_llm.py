"""Provider plumbing: replay queue, terminate token, call validation, embedder."""
from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenoflow.errors import ProviderError, ReplayExhaustedError
from phenoflow.llm import (
    AssistantTurn,
    ChatMessage,
    HashEmbedder,
    ReplayProvider,
    ToolCall,
    has_terminate,
    strip_terminate,
    validate_tool_calls,
)
from phenoflow.tools import ToolParam, ToolSpec


@pytest.mark.parametrize(
    "text,expected",
    [
        ("TERMINATE", True),
        ("All done. TERMINATE", True),
        ("All done.\nTERMINATE.", True),
        ('reply with "TERMINATE" at the end', True),
        ("DO NOT TERMINATE_EARLY", False),
        ("terminate", False),
        ("ATERMINATE", False),
        ("", False),
        (None, False),
    ],
)
def test_terminate_token_detection(text, expected):
    assert has_terminate(text) is expected


def test_strip_terminate_keeps_surrounding_text():
    assert strip_terminate("Summary of the run. TERMINATE") == "Summary of the run."
    assert strip_terminate("TERMINATE") == ""


def test_replay_serves_turns_in_order_then_raises():
    provider = ReplayProvider(
        [
            {"text": "one"},
            {"text": "two", "tool_calls": [{"id": "a", "name": "t", "arguments": {"x": 1}}]},
        ]
    )
    assert provider.remaining == 2
    first = provider.chat([ChatMessage(role="user", content="hi")])
    assert first.text == "one" and first.finish_reason == "stop"
    second = provider.chat([ChatMessage(role="user", content="hi")])
    assert second.finish_reason == "tool_calls"
    assert second.tool_calls[0].arguments == {"x": 1}
    with pytest.raises(ReplayExhaustedError, match="exhausted after 2 turn"):
        provider.chat([ChatMessage(role="user", content="hi")])


def test_replay_generates_call_ids_when_missing():
    provider = ReplayProvider([{"tool_calls": [{"name": "t"}, {"name": "t"}]}])
    turn = provider.chat([])
    assert [c.id for c in turn.tool_calls] == ["call_0_0", "call_0_1"]


def test_replay_from_file_validates(tmp_path):
    good = tmp_path / "turns.json"
    good.write_text(json.dumps({"turns": [{"text": "hello"}]}))
    assert ReplayProvider.from_file(good).remaining == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"noturns": []}))
    with pytest.raises(ProviderError):
        ReplayProvider.from_file(bad)
    with pytest.raises(ProviderError):
        ReplayProvider.from_file(tmp_path / "absent.json")


SPEC = ToolSpec(
    name="demo",
    description="d",
    params=[
        ToolParam(name="path", type="path", description="p"),
        ToolParam(name="count", type="integer", description="c", required=False),
    ],
    category="analysis",
)


def turn_with(args, name="demo"):
    return AssistantTurn(text=None, tool_calls=[ToolCall(id="1", name=name, arguments=args)])


def test_validate_tool_calls_marks_problems():
    assert validate_tool_calls(turn_with({"path": "x"}), [SPEC]).tool_calls[0].validation_error is None
    assert "unknown tool" in validate_tool_calls(turn_with({}, name="nope"), [SPEC]).tool_calls[0].validation_error
    assert "missing required" in validate_tool_calls(turn_with({}), [SPEC]).tool_calls[0].validation_error
    assert "unknown parameter" in validate_tool_calls(
        turn_with({"path": "x", "extra": 1}), [SPEC]
    ).tool_calls[0].validation_error
    assert "should be of type" in validate_tool_calls(
        turn_with({"path": "x", "count": "three"}), [SPEC]
    ).tool_calls[0].validation_error
    # booleans must not satisfy integer or number parameters
    assert "should be of type" in validate_tool_calls(
        turn_with({"path": "x", "count": True}), [SPEC]
    ).tool_calls[0].validation_error


texts = st.text(
    alphabet=st.characters(whitelist_categories=("Ll", "Lu", "Nd"), whitelist_characters=" .-"),
    min_size=1,
    max_size=200,
).filter(lambda t: t.strip())


@settings(max_examples=80)
@given(text=texts)
def test_embeddings_are_unit_norm_and_deterministic(text):
    embedder = HashEmbedder(dim=64)
    a, b = embedder.embed([text, text])
    assert abs(float(np.linalg.norm(a)) - 1.0) <= 1e-9
    assert (a == b).all()
    again = HashEmbedder(dim=64).embed([text])[0]
    assert (a == again).all()


def test_embedder_input_validation():
    with pytest.raises(ProviderError):
        HashEmbedder().embed([""])
    with pytest.raises(ValueError):
        HashEmbedder(dim=4)


def test_embedder_separates_unrelated_texts():
    embedder = HashEmbedder()
    a, b = embedder.embed(
        ["the nitrogen treatment raised leaf area", "checkpoint registry token grammar"]
    )
    assert float(np.dot(a, b)) < 0.5
