"""Survival prognosis toolkit: Cox PH, MTLR and risk ensembling.

The heavy lifting lives in the compiled extension; this package re-exports it.
"""

try:
    from survfuse._core import *  # noqa: F401,F403  (installed layout)
    from survfuse._core import __version__  # noqa: F401
except ImportError:  # in-tree layout: extension built as a top-level module
    from _core import *  # noqa: F401,F403
    from _core import __version__  # noqa: F401
