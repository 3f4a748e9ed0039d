"""Triplane tokenizer for multi-camera scenes.

Configs are plain dicts with the same layout as the JSON files read by the
``tritok`` command-line tool.
"""

import json

import numpy as np

from . import _core
from ._core import (
    AxisWarp,
    GridWarp,
    HalfKeep,
    PatchConfig,
    TritokError,
    baseline_token_count,
    plane_token_counts,
    psnr,
    ssim,
    token_count,
)

__all__ = [
    "AxisWarp",
    "GridWarp",
    "HalfKeep",
    "PatchConfig",
    "Trainer",
    "TritokError",
    "baseline_token_count",
    "default_config",
    "desk_config",
    "load_checkpoint",
    "normalize_config",
    "plane_token_counts",
    "prefill_flops",
    "psnr",
    "run_profile",
    "scene_views",
    "ssim",
    "token_count",
    "tokenize",
]

PLANES = ("xy", "xz", "yz")


def desk_config():
    return json.loads(_core.desk_config())


def default_config():
    return json.loads(_core.default_config())


def normalize_config(config):
    return json.loads(_core.normalize_config(json.dumps(config)))


def scene_views(config=None):
    """Ground-truth RGB and depth for every training and held-out camera."""
    return _core.scene_views(json.dumps(config if config is not None else desk_config()))


def tokenize(planes, warp, patch, front_facing=True, seed=0):
    """Returns (tokens [L, d_ar], provenance [L, 3]) for (xy, xz, yz) planes.

    Provenance rows are (plane index, patch row, patch column) in token order.
    """
    xy, xz, yz = (np.ascontiguousarray(p, dtype=np.float32) for p in planes)
    return _core.tokenize(xy, xz, yz, warp, patch, front_facing, seed)


def prefill_flops(backbone, tokens):
    return _core.prefill_flops(backbone, tokens)


def run_profile(config=None, measure=False):
    cfg = config if config is not None else default_config()
    return json.loads(_core.run_profile(json.dumps(cfg), measure))


def load_checkpoint(path):
    """(config dict, (xy, xz, yz), warp) for a checkpoint written by training."""
    cfg, planes, warp = _core.load_checkpoint(str(path))
    return json.loads(cfg), planes, warp


class Trainer:
    """Optimizes a triplane and decoder against the configured scene."""

    def __init__(self, config=None):
        self._t = _core.Trainer(json.dumps(config if config is not None else desk_config()))

    @property
    def config(self):
        return json.loads(self._t.config)

    @property
    def steps_done(self):
        return self._t.steps_done

    def step(self):
        return json.loads(self._t.step())

    def train(self, steps):
        return [self.step() for _ in range(steps)]

    def triplane(self):
        return self._t.triplane()

    def evaluate_training_views(self):
        return json.loads(self._t.evaluate_training_views())

    def evaluate_heldout(self):
        return json.loads(self._t.evaluate_heldout())

    def save(self, path):
        self._t.save(str(path))

    def resume(self, path):
        self._t.resume(str(path))
