"""Confined subprocess execution for generated scripts.

Scripts run with their working directory pinned to the session root, a
minimal environment, a wall-clock timeout and capped captured output. A
sitecustomize guard injected through PYTHONPATH intercepts file and socket
access inside the child: writes outside the root (and reads outside the root
or the interpreter installation) abort the process with a distinct marker the
runner turns into SandboxViolation.
"""
from __future__ import annotations

import logging
import os
import subprocess
import sys
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path

from .errors import SandboxViolation, ValidationError

log = logging.getLogger(__name__)

VIOLATION_MARKER = "__SANDBOX_VIOLATION__"
VIOLATION_EXIT = 77

DEFAULT_TIMEOUT_S = 120.0
DEFAULT_OUTPUT_CAP = 64 * 1024
_MAX_CONCURRENT = 4

_slots = threading.BoundedSemaphore(_MAX_CONCURRENT)

_GUARD_SOURCE = '''\
"""Injected by the script sandbox; do not edit."""
import builtins
import io
import os
import sys

_ROOT = os.path.realpath(os.environ.get("SANDBOX_ROOT", os.getcwd()))
_READ_PREFIXES = tuple(
    os.path.realpath(p)
    for p in {
        sys.prefix,
        sys.base_prefix,
        sys.exec_prefix,
        os.path.dirname(os.__file__),
        "/usr",
        "/lib",
        "/lib64",
        "/etc",
        "/proc",
        "/dev",
    }
)


def _violate(detail):
    sys.stderr.write("__SANDBOX_VIOLATION__ " + detail + chr(10))
    sys.stderr.flush()
    os._exit(77)


def _inside(path, prefix):
    return path == prefix or path.startswith(prefix + os.sep)


def _check(path, writing):
    try:
        real = os.path.realpath(os.fspath(path))
    except TypeError:
        return
    if _inside(real, _ROOT):
        return
    if not writing:
        for prefix in _READ_PREFIXES:
            if _inside(real, prefix):
                return
    _violate(("write " if writing else "read ") + real)


_real_open = builtins.open


def _guarded_open(file, mode="r", *args, **kwargs):
    if not isinstance(file, int):
        writing = any(c in mode for c in "wax+")
        _check(file, writing)
    return _real_open(file, mode, *args, **kwargs)


builtins.open = _guarded_open
io.open = _guarded_open

_real_os_open = os.open
_WRITE_FLAGS = os.O_WRONLY | os.O_RDWR | os.O_CREAT | os.O_APPEND | os.O_TRUNC


def _guarded_os_open(path, flags, *args, **kwargs):
    _check(path, bool(flags & _WRITE_FLAGS))
    return _real_os_open(path, flags, *args, **kwargs)


os.open = _guarded_os_open

for _name in ("remove", "unlink", "rmdir", "truncate"):
    _orig = getattr(os, _name)

    def _wrap(path, *a, __orig=_orig, **kw):
        _check(path, True)
        return __orig(path, *a, **kw)

    setattr(os, _name, _wrap)

for _name in ("mkdir", "makedirs"):
    _orig = getattr(os, _name)

    def _wrap(path, *a, __orig=_orig, **kw):
        _check(path, True)
        return __orig(path, *a, **kw)

    setattr(os, _name, _wrap)

for _name in ("rename", "replace", "link", "symlink"):
    _orig = getattr(os, _name)

    def _wrap(src, dst, *a, __orig=_orig, **kw):
        _check(src, True)
        _check(dst, True)
        return __orig(src, dst, *a, **kw)

    setattr(os, _name, _wrap)

try:
    import socket as _socket

    def _no_socket(*a, **kw):
        _violate("network")

    _socket.socket = _no_socket
    _socket.create_connection = _no_socket
except ImportError:
    pass
'''


@dataclass
class InterpreterProfile:
    """How to launch a script: command template plus execution limits.

    ``command`` entries may use the placeholders {python}, {script_path} and
    {workdir}.
    """

    name: str = "python3"
    command: list[str] = field(default_factory=lambda: ["{python}", "{script_path}"])
    timeout_s: float = DEFAULT_TIMEOUT_S
    output_cap: int = DEFAULT_OUTPUT_CAP


@dataclass
class SandboxResult:
    exit_code: int | None
    stdout: str
    stderr: str
    duration_s: float
    timed_out: bool = False
    violation: str | None = None

    @property
    def ok(self) -> bool:
        return self.exit_code == 0 and not self.timed_out and self.violation is None


def _truncate(text: str, cap: int) -> str:
    if len(text) <= cap:
        return text
    return text[:cap] + "\n... [output truncated]"


def _ensure_guard(workdir: Path) -> Path:
    guard_dir = workdir / ".sandbox"
    guard_dir.mkdir(exist_ok=True)
    guard = guard_dir / "sitecustomize.py"
    if not guard.exists() or guard.read_text() != _GUARD_SOURCE:
        guard.write_text(_GUARD_SOURCE)
    return guard_dir


def _build_env(workdir: Path, guard_dir: Path) -> dict[str, str]:
    env = {}
    for key in ("PATH", "LANG", "LC_ALL", "TZ"):
        if key in os.environ:
            env[key] = os.environ[key]
    home = workdir / ".home"
    tmp = workdir / ".tmp"
    mpl = workdir / ".mpl"
    for d in (home, tmp, mpl):
        d.mkdir(exist_ok=True)
    env.update(
        {
            "PYTHONPATH": str(guard_dir),
            "PYTHONDONTWRITEBYTECODE": "1",
            "PYTHONHASHSEED": "0",
            "HOME": str(home),
            "TMPDIR": str(tmp),
            "MPLCONFIGDIR": str(mpl),
            "MPLBACKEND": "Agg",
            "SANDBOX_ROOT": str(workdir.resolve()),
        }
    )
    return env


def run_sandboxed(
    script: str,
    workdir: str | Path,
    profile: InterpreterProfile | None = None,
    script_name: str = "script.py",
) -> SandboxResult:
    """Execute a Python script inside the sandbox and capture its output."""
    profile = profile or InterpreterProfile()
    wd = Path(workdir).resolve()
    if not wd.is_dir():
        raise ValidationError(f"sandbox working directory does not exist: {wd}")
    scripts_dir = wd / ".scripts"
    scripts_dir.mkdir(exist_ok=True)
    script_path = scripts_dir / script_name
    script_path.write_text(script)

    guard_dir = _ensure_guard(wd)
    env = _build_env(wd, guard_dir)
    command = [
        part.format(python=sys.executable, script_path=str(script_path), workdir=str(wd))
        for part in profile.command
    ]

    start = time.monotonic()
    with _slots:
        proc = subprocess.Popen(
            command,
            cwd=str(wd),
            env=env,
            stdout=subprocess.PIPE,
            stderr=subprocess.PIPE,
            text=True,
        )
        try:
            out, err = proc.communicate(timeout=profile.timeout_s)
            timed_out = False
        except subprocess.TimeoutExpired:
            proc.kill()
            out, err = proc.communicate()
            timed_out = True
    duration = time.monotonic() - start

    violation = None
    for line in (err or "").splitlines():
        if line.startswith(VIOLATION_MARKER):
            violation = line[len(VIOLATION_MARKER) :].strip()
            break
    if proc.returncode == VIOLATION_EXIT and violation is None:
        violation = "unspecified"

    result = SandboxResult(
        exit_code=proc.returncode,
        stdout=_truncate(out or "", profile.output_cap),
        stderr=_truncate(err or "", profile.output_cap),
        duration_s=duration,
        timed_out=timed_out,
        violation=violation,
    )
    if violation is not None:
        log.warning("sandbox violation in %s: %s", script_path, violation)
    return result


def raise_on_violation(result: SandboxResult) -> SandboxResult:
    if result.violation is not None:
        raise SandboxViolation(f"script tried to access {result.violation}")
    return result
