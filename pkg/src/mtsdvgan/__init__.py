"""MTS-DVGAN: dual-variational LSTM GAN anomaly detection for
multivariate time series.

Subpackages load lazily so the CLI can cap BLAS threads before numpy
initializes.
"""

__version__ = "0.1.0"

_SUBMODULES = ("autodiff", "config", "data", "detection", "kernels", "losses",
               "metrics", "networks", "optim", "serialize", "stats", "synth",
               "training")


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f".{name}", __name__)
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
