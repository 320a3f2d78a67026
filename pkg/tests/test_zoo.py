"""Checkpoint naming grammar, the model zoo, and the tool registry."""
from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from phenoflow.errors import RegistryError, ValidationError
from phenoflow.tools import (
    ModelZoo,
    ModelZooEntry,
    ToolParam,
    ToolRegistry,
    ToolSpec,
    compose_model_id,
)


def test_compose_orders_tokens():
    assert compose_model_id("wheat", "spike-detection", "yolox") == "wheat_spike-detection_yolox"
    assert (
        compose_model_id("arabidopsis", "leaf-instance-segmentation", "m2fb",
                         dataset="cvppp2017-a1a4", finetune="fullft")
        == "arabidopsis_leaf-instance-segmentation_cvppp2017-a1a4_m2fb_fullft"
    )
    assert compose_model_id("potato", "count", "sam", finetune="lora") == "potato_count_sam_lora"


@pytest.mark.parametrize(
    "species",
    ["", "Potato", "pot ato", "pot_ato", "-potato", "pötato"],
)
def test_compose_rejects_bad_tokens(species):
    with pytest.raises(ValidationError):
        compose_model_id(species, "task", "model")


token = st.from_regex(r"[a-z0-9][a-z0-9.-]{0,8}", fullmatch=True)


@settings(max_examples=60)
@given(
    species=token,
    task=token,
    model=token,
    dataset=st.none() | token,
    finetune=st.none() | token,
    capability=st.sampled_from(["segment", "classify", "regress", "train"]),
)
def test_entry_round_trips_through_zoo_file(
    tmp_path_factory, species, task, model, dataset, finetune, capability
):
    entry = ModelZooEntry(
        species=species,
        task=task,
        model=model,
        dataset=dataset,
        finetune=finetune,
        capabilities=[capability],
        hub="somehub",
        metrics={"best_dice": 0.5},
    )
    path = tmp_path_factory.mktemp("zoo") / "zoo.json"
    zoo = ModelZoo([entry])
    zoo.save(path)
    loaded = ModelZoo.load(path).get(entry.identifier)
    assert loaded == entry
    assert loaded.checkpoint_ref == f"somehub/{entry.identifier}"
    parts = entry.identifier.split("_")
    assert parts[0] == species and parts[1] == task
    assert len(parts) == 3 + (dataset is not None) + (finetune is not None)


def test_zoo_rejects_duplicate_and_unknown():
    entry = ModelZooEntry(species="a", task="b", model="c")
    zoo = ModelZoo([entry])
    with pytest.raises(RegistryError):
        zoo.register(ModelZooEntry(species="a", task="b", model="c"))
    with pytest.raises(RegistryError):
        zoo.get("a_b_missing")
    assert "a_b_c" in zoo


def test_resolve_checkpoint_tolerates_hub_prefix():
    entry = ModelZooEntry(species="a", task="b", model="c", hub="hubx")
    zoo = ModelZoo([entry])
    assert zoo.resolve_checkpoint("a_b_c") is entry
    assert zoo.resolve_checkpoint("hubx/a_b_c") is entry
    with pytest.raises(RegistryError):
        zoo.resolve_checkpoint("hubx/a_b_zzz")


def test_load_rejects_identifier_mismatch(tmp_path):
    path = tmp_path / "zoo.json"
    path.write_text(
        '{"models": [{"species": "a", "task": "b", "model": "c", "identifier": "a_b_x"}]}'
    )
    with pytest.raises(ValidationError, match="compose"):
        ModelZoo.load(path)


def test_load_rejects_unknown_capability(tmp_path):
    path = tmp_path / "zoo.json"
    path.write_text(
        '{"models": [{"species": "a", "task": "b", "model": "c", "capabilities": ["fly"]}]}'
    )
    with pytest.raises(ValidationError, match="capabilities"):
        ModelZoo.load(path)


def test_with_capability_filters():
    zoo = ModelZoo(
        [
            ModelZooEntry(species="a", task="t", model="m1", capabilities=["segment"]),
            ModelZooEntry(species="a", task="t", model="m2", capabilities=["classify"]),
        ]
    )
    assert [e.model for e in zoo.with_capability("segment")] == ["m1"]


# ------------------------------------------------------------ tool registry ----

def spec(name="demo", **kwargs):
    defaults = dict(description="a demo tool", params=[], category="analysis")
    defaults.update(kwargs)
    return ToolSpec(name=name, **defaults)


def test_registry_keeps_registration_order():
    reg = ToolRegistry()
    reg.register(spec("zeta"), lambda a, c: {})
    reg.register(spec("alpha"), lambda a, c: {})
    assert [s.name for s in reg.list_tools()] == ["zeta", "alpha"]


def test_registry_is_idempotent_for_same_spec_but_guards_conflicts():
    reg = ToolRegistry()
    reg.register(spec(), lambda a, c: {})
    reg.register(spec())  # same spec again is fine
    with pytest.raises(RegistryError):
        reg.register(spec(description="different now"))


def test_registry_lookup_errors():
    reg = ToolRegistry()
    reg.register(spec("nohandler"))
    with pytest.raises(RegistryError, match="no handler"):
        reg.handler("nohandler")
    with pytest.raises(RegistryError):
        reg.get("ghost")
    reg.unregister("nohandler")
    with pytest.raises(RegistryError):
        reg.unregister("nohandler")


@pytest.mark.parametrize(
    "bad",
    [
        spec("BadName"),
        spec("x", description="  "),
        spec("x", category="misc"),
        spec("x", params=[ToolParam(name="p", type="floaty")]),
        spec("x", params=[ToolParam(name="p", type="string"), ToolParam(name="p", type="string")]),
    ],
)
def test_spec_validation(bad):
    with pytest.raises(ValidationError):
        ToolRegistry().register(bad)
