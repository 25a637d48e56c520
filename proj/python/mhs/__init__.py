"""Python bindings for the multi-head scan module."""

import json

from ._mhs import (
    ContractError,
    DimensionError,
    DomainError,
    FormatError,
    ValidationError,
    coefficient_variation,
    conv_kernel,
    conv_scan,
    discretize,
    fuse,
    gradcheck,
    gradcheck_ops,
    num_threads,
    recurrence_scan,
    route,
    route_dump,
    run_checks,
    set_num_threads,
)
from . import _mhs


def _config_text(config):
    if config is None:
        return "{}"
    if isinstance(config, str):
        return config
    return json.dumps(config)


def normalize_config(config=None):
    """Validated config as a dict with every default filled in."""
    return json.loads(_mhs.normalize_config(_config_text(config)))


def param_count(config=None):
    return _mhs.param_count(_config_text(config))


class Model:
    """Module forward pass with freshly initialised or loaded weights."""

    def __init__(self, config=None, seed=0, _impl=None):
        self._impl = _impl if _impl is not None else _mhs.Model(_config_text(config), seed)

    @classmethod
    def load(cls, config, path):
        return cls(_impl=_mhs.Model.load(_config_text(config), str(path)))

    def save(self, path, f32=False):
        self._impl.save(str(path), f32)

    def __call__(self, x):
        return self._impl.forward(x)

    forward = __call__

    @property
    def config(self):
        return json.loads(self._impl.config_json)

    @property
    def param_count(self):
        return self._impl.param_count

    def parameters(self):
        return self._impl.parameters()


__all__ = [
    "ContractError",
    "DimensionError",
    "DomainError",
    "FormatError",
    "Model",
    "ValidationError",
    "coefficient_variation",
    "conv_kernel",
    "conv_scan",
    "discretize",
    "fuse",
    "gradcheck",
    "gradcheck_ops",
    "normalize_config",
    "num_threads",
    "param_count",
    "recurrence_scan",
    "route",
    "route_dump",
    "run_checks",
    "set_num_threads",
]
