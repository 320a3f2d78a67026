"""Loads the packaged evaluation suites.

Tool and model selection golds are stored in the fixture JSONs. Data analysis
golds are derived here at load time from the packaged CSVs with the csv and
statistics modules, independently of the pandas scripts the recorded sessions
run, so both routes must agree for a task to pass.
"""
from __future__ import annotations

import csv
import io
import json
import statistics
from importlib import resources
from typing import Any

from ..errors import ValidationError
from .harness import EvalSuite, EvalTask, GoldStep

SUITE_NAMES = ("tool_selection", "model_selection", "data_analysis")

ARACROP_CSV = "aracrop_phenotypes.csv"
POTATO_CSV = "potato_metadata.csv"


def _data_text(name: str) -> str:
    return (resources.files("phenoflow.evals") / "data" / name).read_text(encoding="utf-8")


def _load_json(name: str) -> dict[str, Any]:
    return json.loads(_data_text(name))


def _rows(text: str) -> list[dict[str, str]]:
    return list(csv.DictReader(io.StringIO(text)))


def _unique_extreme(
    rows: list[dict[str, str]], column: str, want_max: bool, where: str
) -> dict[str, str]:
    values = [float(r[column]) for r in rows]
    target = max(values) if want_max else min(values)
    hits = [r for r, v in zip(rows, values) if v == target]
    if len(hits) != 1:
        raise ValidationError(f"fixture ambiguity: {len(hits)} rows share the {where} extreme")
    return hits[0]


def _data_analysis_gold(ara_text: str, potato_text: str) -> dict[str, dict[str, Any]]:
    ara = _rows(ara_text)
    potato = _rows(potato_text)

    day26 = [r for r in ara if int(r["days_after_sowing"]) == 26]
    day1 = [r for r in ara if int(r["days_after_sowing"]) == 1]
    best = _unique_extreme(day26, "leaf_count", True, "day-26 leaf count")
    worst = _unique_extreme(day1, "leaf_count", False, "day-1 leaf count")

    voyager = [r for r in potato if r["variety"] == "Voyager"]
    heaviest = _unique_extreme(voyager, "manually_measured_dried_weight", True, "Voyager weight")
    lightest = _unique_extreme(voyager, "manually_measured_dried_weight", False, "Voyager weight")

    ein2 = [
        float(r["projected_leaf_area"])
        for r in ara
        if r["ecotype"] == "ein2" and int(r["days_after_sowing"]) == 26
    ]
    desiree = [
        float(r["manually_measured_leaf_area"]) for r in potato if r["variety"] == "Desiree"
    ]
    if len(ein2) < 2 or len(desiree) < 2:
        raise ValidationError("fixture subsets too small for a standard deviation")

    def count(v: float) -> dict[str, Any]:
        return {"value": v, "kind": "count"}

    def stat(v: float) -> dict[str, Any]:
        return {"value": v, "kind": "stat"}

    return {
        "task1": {"values": [count(int(best["leaf_count"])), count(int(best["plant_id"]))]},
        "task2": {"values": [count(int(worst["leaf_count"])), count(int(worst["plant_id"]))]},
        "task3": {
            "values": [stat(float(heaviest["manually_measured_dried_weight"]))],
            "mentions": [heaviest["file_name"]],
        },
        "task4": {
            "values": [stat(float(lightest["manually_measured_dried_weight"]))],
            "mentions": [lightest["file_name"]],
        },
        "task5": {"values": [stat(statistics.mean(ein2)), stat(statistics.stdev(ein2))]},
        "task6": {"values": [stat(statistics.mean(desiree)), stat(statistics.stdev(desiree))]},
    }


def load_suite(name: str) -> EvalSuite:
    if name not in SUITE_NAMES:
        raise ValidationError(f"unknown suite {name!r}; choose from {', '.join(SUITE_NAMES)}")

    if name == "tool_selection":
        doc = _load_json("tool_selection.json")
        tasks = [
            EvalTask(
                suite=name,
                id=t["id"],
                prompt=doc["preamble"] + "\n" + t["body"],
                gold=[GoldStep(tool=s["tool"], args=s.get("args", {})) for s in t["gold"]],
                replay_turns=t["replay"],
            )
            for t in doc["tasks"]
        ]
        return EvalSuite(name=name, tasks=tasks)

    if name == "model_selection":
        doc = _load_json("model_selection.json")
        tasks = [
            EvalTask(
                suite=name,
                id=t["id"],
                prompt=doc["preamble"] + "\n\n" + t["line"],
                gold=list(t["gold"]),
                replay_turns=[{"text": t["answer"] + " TERMINATE"}],
            )
            for t in doc["tasks"]
        ]
        return EvalSuite(name=name, tasks=tasks)

    doc = _load_json("data_analysis.json")
    ara_text = _data_text(ARACROP_CSV)
    potato_text = _data_text(POTATO_CSV)
    gold = _data_analysis_gold(ara_text, potato_text)
    tasks = []
    for t in doc["tasks"]:
        task_gold = {"artifact": t["artifact"]} if t.get("artifact") else gold[t["id"]]
        tasks.append(
            EvalTask(
                suite=name,
                id=t["id"],
                prompt=t["prompt"],
                gold=task_gold,
                replay_turns=t["replay"],
            )
        )
    return EvalSuite(
        name=name,
        tasks=tasks,
        fixtures={
            f"data_for_eval/{ARACROP_CSV}": ara_text,
            f"data_for_eval/{POTATO_CSV}": potato_text,
        },
    )
