"""Exception taxonomy shared across the package."""
from __future__ import annotations


class PhenoflowError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(PhenoflowError):
    """Input failed a schema or contract check."""


class RegistryError(PhenoflowError):
    """Duplicate or unknown name in a registry or zoo."""


class ProviderError(PhenoflowError):
    """Chat or embedding provider failed (transport, credential, parse)."""


class ReplayExhaustedError(ProviderError):
    """Replay fixture ran out of queued turns."""


class SessionStateError(PhenoflowError):
    """Operation not valid for the session's current status."""


class SandboxViolation(PhenoflowError):
    """Sandboxed script tried to touch a path outside its root."""


class ScriptTaskError(PhenoflowError):
    """Script task could not be driven to completion."""


class AdapterError(PhenoflowError):
    """Vision adapter transport or protocol failure."""


class AdapterOutputError(AdapterError):
    """Adapter responded but the payload failed schema validation."""


class CapabilityError(AdapterError):
    """Adapter does not support the requested operation."""


class PipelineError(PhenoflowError):
    """Pipeline manifest is invalid or replay cannot proceed."""


class DatasetLayoutError(ValidationError):
    """Training dataset directory does not match the expected layout."""


class StatsError(PhenoflowError):
    """Statistical routine got degenerate input."""
