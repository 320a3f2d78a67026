"""Tool registry and the model zoo.

Tool names are lower_snake identifiers; each spec carries typed parameters, a
category, and whether a call needs user approval. Model identifiers are
composed from structured fields (species, task, optional dataset, model,
optional finetune) joined with underscores; the tokens themselves never
contain underscores, and the composed string is never parsed back as a source
of truth.
"""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

from .errors import RegistryError, ValidationError

TOOL_NAME_RE = re.compile(r"^[a-z][a-z0-9_]*$")
TOKEN_RE = re.compile(r"^[a-z0-9][a-z0-9.-]*$")

CATEGORIES = ("vision", "analysis", "io", "training", "pipeline")
PARAM_TYPES = ("string", "path", "paths", "number", "integer", "boolean", "array", "object")

CAPABILITIES = ("segment", "classify", "regress", "train")


@dataclass
class ToolParam:
    name: str
    type: str
    description: str = ""
    required: bool = True


@dataclass
class ToolSpec:
    name: str
    description: str
    params: list[ToolParam] = field(default_factory=list)
    category: str = "analysis"
    approval_required: bool = False

    def validate(self) -> None:
        if not TOOL_NAME_RE.match(self.name):
            raise ValidationError(f"bad tool name {self.name!r}")
        if not self.description.strip():
            raise ValidationError(f"tool {self.name!r} needs a description")
        if self.category not in CATEGORIES:
            raise ValidationError(f"tool {self.name!r} has unknown category {self.category!r}")
        seen = set()
        for p in self.params:
            if p.type not in PARAM_TYPES:
                raise ValidationError(
                    f"tool {self.name!r} parameter {p.name!r} has unknown type {p.type!r}"
                )
            if p.name in seen:
                raise ValidationError(f"tool {self.name!r} repeats parameter {p.name!r}")
            seen.add(p.name)


ToolHandler = Callable[[dict[str, Any], Any], dict[str, Any]]


class ToolRegistry:
    """Names to specs and handlers; registration order is preserved."""

    def __init__(self) -> None:
        self._specs: dict[str, ToolSpec] = {}
        self._handlers: dict[str, ToolHandler] = {}

    def register(self, spec: ToolSpec, handler: ToolHandler | None = None) -> str:
        spec.validate()
        existing = self._specs.get(spec.name)
        if existing is not None and existing != spec:
            raise RegistryError(f"tool {spec.name!r} is already registered with a different spec")
        self._specs[spec.name] = spec
        if handler is not None:
            self._handlers[spec.name] = handler
        return spec.name

    def unregister(self, name: str) -> None:
        if name not in self._specs:
            raise RegistryError(f"tool {name!r} is not registered")
        del self._specs[name]
        self._handlers.pop(name, None)

    def __contains__(self, name: str) -> bool:
        return name in self._specs

    def get(self, name: str) -> ToolSpec:
        try:
            return self._specs[name]
        except KeyError:
            raise RegistryError(f"tool {name!r} is not registered") from None

    def handler(self, name: str) -> ToolHandler:
        if name not in self._specs:
            raise RegistryError(f"tool {name!r} is not registered")
        try:
            return self._handlers[name]
        except KeyError:
            raise RegistryError(f"tool {name!r} has no handler bound") from None

    def list_tools(self) -> list[ToolSpec]:
        return list(self._specs.values())


def compose_model_id(
    species: str,
    task: str,
    model: str,
    dataset: str | None = None,
    finetune: str | None = None,
) -> str:
    """Join naming tokens with underscores, omitting the optional ones."""
    parts = [("species", species), ("task", task)]
    if dataset is not None:
        parts.append(("dataset", dataset))
    parts.append(("model", model))
    if finetune is not None:
        parts.append(("finetune", finetune))
    for label, tok in parts:
        if not isinstance(tok, str) or not tok:
            raise ValidationError(f"model id field {label!r} must be a non-empty string")
        if "_" in tok:
            raise ValidationError(f"model id field {label!r} must not contain underscores: {tok!r}")
        if not TOKEN_RE.match(tok):
            raise ValidationError(f"model id field {label!r} has invalid characters: {tok!r}")
    return "_".join(tok for _, tok in parts)


@dataclass
class ModelZooEntry:
    species: str
    task: str
    model: str
    dataset: str | None = None
    finetune: str | None = None
    capabilities: list[str] = field(default_factory=list)
    adapter: dict[str, Any] = field(default_factory=dict)
    hub: str | None = None
    description: str = ""
    metrics: dict[str, float] = field(default_factory=dict)

    @property
    def identifier(self) -> str:
        return compose_model_id(
            self.species, self.task, self.model, dataset=self.dataset, finetune=self.finetune
        )

    @property
    def checkpoint_ref(self) -> str:
        """Identifier with the hub namespace prefix when one is set."""
        ident = self.identifier
        return f"{self.hub}/{ident}" if self.hub else ident

    def as_dict(self) -> dict[str, Any]:
        return {
            "identifier": self.identifier,
            "checkpoint": self.checkpoint_ref,
            "species": self.species,
            "task": self.task,
            "dataset": self.dataset,
            "model": self.model,
            "finetune": self.finetune,
            "hub": self.hub,
            "capabilities": list(self.capabilities),
            "adapter": dict(self.adapter),
            "description": self.description,
            "metrics": dict(self.metrics),
        }


def _entry_from_dict(raw: dict[str, Any], where: str) -> ModelZooEntry:
    for key in ("species", "task", "model"):
        if not raw.get(key):
            raise ValidationError(f"model zoo entry {where} is missing {key!r}")
    caps = raw.get("capabilities", [])
    if not isinstance(caps, list) or any(c not in CAPABILITIES for c in caps):
        raise ValidationError(
            f"model zoo entry {where} has invalid capabilities {caps!r}; "
            f"allowed: {', '.join(CAPABILITIES)}"
        )
    entry = ModelZooEntry(
        species=raw["species"],
        task=raw["task"],
        model=raw["model"],
        dataset=raw.get("dataset"),
        finetune=raw.get("finetune"),
        capabilities=list(caps),
        adapter=dict(raw.get("adapter", {})),
        hub=raw.get("hub"),
        description=raw.get("description", ""),
        metrics=dict(raw.get("metrics", {})),
    )
    ident = entry.identifier  # validates the tokens
    declared = raw.get("identifier")
    if declared is not None and declared != ident:
        raise ValidationError(
            f"model zoo entry {where} declares identifier {declared!r} "
            f"but its fields compose to {ident!r}"
        )
    return entry


class ModelZoo:
    """Checkpoint catalogue keyed by composed identifier."""

    def __init__(self, entries: Sequence[ModelZooEntry] = ()):
        self._entries: dict[str, ModelZooEntry] = {}
        for e in entries:
            self.register(e)

    @classmethod
    def load(cls, path: str | Path) -> "ModelZoo":
        p = Path(path)
        if not p.is_file():
            raise ValidationError(f"model zoo file not found: {p}")
        try:
            doc = json.loads(p.read_text())
        except ValueError as exc:
            raise ValidationError(f"model zoo file is not valid JSON: {exc}") from exc
        models = doc.get("models")
        if not isinstance(models, list):
            raise ValidationError("model zoo file must contain a 'models' list")
        zoo = cls()
        for i, raw in enumerate(models):
            zoo.register(_entry_from_dict(raw, f"#{i}"))
        return zoo

    def save(self, path: str | Path) -> None:
        doc = {"models": [e.as_dict() for e in self._entries.values()]}
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    def register(self, entry: ModelZooEntry) -> str:
        ident = entry.identifier
        if ident in self._entries:
            raise RegistryError(f"model {ident!r} is already in the zoo")
        self._entries[ident] = entry
        return ident

    def __contains__(self, identifier: str) -> bool:
        return identifier in self._entries

    def get(self, identifier: str) -> ModelZooEntry:
        try:
            return self._entries[identifier]
        except KeyError:
            raise RegistryError(f"unknown model {identifier!r}") from None

    def resolve_checkpoint(self, ref: str) -> ModelZooEntry:
        """Look up by identifier, tolerating a hub namespace prefix."""
        if ref in self._entries:
            return self._entries[ref]
        tail = ref.rsplit("/", 1)[-1]
        if tail in self._entries:
            return self._entries[tail]
        raise RegistryError(f"unknown checkpoint {ref!r}")

    def entries(self) -> list[ModelZooEntry]:
        return list(self._entries.values())

    def with_capability(self, capability: str) -> list[ModelZooEntry]:
        return [e for e in self._entries.values() if capability in e.capabilities]
