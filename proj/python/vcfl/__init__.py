"""Python access to the vcfl core: worlds, partitions, campaigns and the grating run."""

import json

from ._vcfl import (
    Error,
    Partition,
    Predictor,
    World,
    causal_partition,
    interventional_posteriors,
    is_coarsening,
    observational_partition,
    observational_posteriors,
)
from . import _vcfl

__all__ = [
    "Error",
    "Partition",
    "Predictor",
    "World",
    "appendix9",
    "causal_partition",
    "cct_sweep",
    "config",
    "config_hash",
    "interventional_posteriors",
    "is_coarsening",
    "observational_partition",
    "observational_posteriors",
    "run_grating",
    "theorem2",
]


def _dump(cfg):
    return json.dumps(cfg if cfg is not None else {})


def appendix9():
    return json.loads(_vcfl.appendix9_json())


def cct_sweep(trials, mode="constrained", seed=1):
    return json.loads(_vcfl.cct_sweep_json(trials, mode, seed))


def theorem2(worlds, max_n=6, seed=1):
    return json.loads(_vcfl.theorem2_json(worlds, max_n, seed))


def config(cfg=None):
    """Effective experiment config with every default filled in."""
    return json.loads(_vcfl.config_json(_dump(cfg)))


def config_hash(cfg=None):
    return _vcfl.config_hash(_dump(cfg))


def run_grating(cfg=None):
    """Full grating run with the synthetic oracle; returns metrics per round."""
    return json.loads(_vcfl.run_grating_json(_dump(cfg)))
