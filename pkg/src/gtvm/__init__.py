"""gtvm: a miniature graph-transformation virtual machine.

Typed graph model space, a graph-pattern language with local-search and
incremental (Rete) matcher backends, graph-transformation rules, an
ASM-style control interpreter, a textual DSL front end, and the Hello World
task corpus as executable programs.
"""

from .errors import (DivergenceError, ExecError, GtvmError, LinkError,
                     MatcherError, ParseError, PatternError, SnapshotError,
                     SpaceError, UnknownTypeError)
from .matcher_ls import LocalSearchMatcher
from .modelspace import ModelSpace, TypeRegistry, replay
from .rules import VM, ExecutionReport, execute_machine
from .snapshot import load as load_snapshot
from .snapshot import save as save_snapshot
from .vtcl import link, parse, pretty

__version__ = "0.1.0"

__all__ = [
    "DivergenceError", "ExecError", "GtvmError", "LinkError", "MatcherError",
    "ParseError", "PatternError", "SnapshotError", "SpaceError",
    "UnknownTypeError", "LocalSearchMatcher", "ModelSpace", "TypeRegistry",
    "replay", "VM", "ExecutionReport", "execute_machine", "load_snapshot", "save_snapshot",
    "link", "parse", "pretty", "__version__",
]
