"""Three-phase distribution OPF bindings."""

try:
    from ._opf3 import *  # noqa: F401,F403  (installed package layout)
except ImportError:
    from _opf3 import *  # noqa: F401,F403  (build-tree layout)
