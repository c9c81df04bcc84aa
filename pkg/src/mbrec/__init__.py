"""Multi-behavior recommender built around gated item-preference modeling.

Heavy imports (numpy, numba) are deferred so that the CLI can pin thread
counts before they load; grab classes lazily via attribute access.
"""

import importlib

__version__ = "0.1.0"

_EXPORTS = {
    "BehaviorRegistry": ".data",
    "Dataset": ".data",
    "Split": ".data",
    "load_interactions": ".data",
    "leave_one_out_split": ".data",
    "TrainConfig": ".config",
    "Trainer": ".training",
    "EvalReport": ".evaluation",
    "set_backend": ".backend",
    "active_backend": ".backend",
}

__all__ = sorted(_EXPORTS) + ["__version__"]


def __getattr__(name):
    if name in _EXPORTS:
        module = importlib.import_module(_EXPORTS[name], __name__)
        return getattr(module, name)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
