"""Kernel backend selection.

The compiled extension is preferred; the numpy fallback is used when the
extension was not built or when FACEPIPE_PURE is set in the environment.
"""

import os

from . import _graph_py

if os.environ.get("FACEPIPE_PURE"):
    graph = _graph_py
else:
    try:
        from . import _graph_cy as graph  # type: ignore[no-redef]
    except ImportError:
        graph = _graph_py

BACKEND = graph.BACKEND


def load_backend(name: str = "auto"):
    """Resolve a kernel module by name: "auto", "cython" or "python"."""
    if name == "auto":
        return graph
    if name == "python":
        return _graph_py
    if name == "cython":
        from . import _graph_cy

        return _graph_cy
    raise ValueError(f"unknown kernel backend {name!r}")
