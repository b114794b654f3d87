"""Sample-free incremental classifier learning engine."""

try:
    from ._amgc import *  # noqa: F401,F403  (installed layout)
    from ._amgc import __version__  # noqa: F401
except ImportError:  # build-tree layout: extension sits directly on PYTHONPATH
    from _amgc import *  # noqa: F401,F403
    from _amgc import __version__  # noqa: F401
