"""scikit-learn style wrapper around training and inference."""
from __future__ import annotations

from typing import List

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .core.types import ActionSegment, SkeletonFrame
from .model import ModelConfig
from .pipeline import evaluate_scenes, run_pipeline
from .simkit import GridSpec, HeatmapStream, SimulatedScene
from .train import TrainConfig, fit


def check_heatmap_stream(x, grid: GridSpec | None = None) -> HeatmapStream:
    """Accept a stream or a ``(horizontal, vertical)`` array pair; check grid shapes."""
    if isinstance(x, SimulatedScene):
        x = x.heatmaps
    if not isinstance(x, HeatmapStream):
        if not isinstance(x, (tuple, list)) or len(x) != 2:
            raise TypeError("expected a HeatmapStream or a (horizontal, vertical) pair")
        x = HeatmapStream(np.asarray(x[0], np.float32), np.asarray(x[1], np.float32))
    if grid is not None and (x.horizontal.shape[1:] != tuple(grid.horizontal) or x.vertical.shape[1:] != tuple(grid.vertical)):
        raise ValueError(f"heatmap grids {x.horizontal.shape[1:]}/{x.vertical.shape[1:]} do not match the model's "
                         f"{tuple(grid.horizontal)}/{tuple(grid.vertical)}")
    if not (np.all(np.isfinite(x.horizontal)) and np.all(np.isfinite(x.vertical))):
        raise ValueError("heatmaps contain non-finite values")
    return x


def check_scenes(X, y=None) -> List[SimulatedScene]:
    """Training scenes from ``X`` alone, or from heatmaps ``X`` and ``(frames, segments)`` pairs ``y``."""
    X = list(X)
    if not X:
        raise ValueError("need at least one training scene")
    if y is None:
        if not all(isinstance(s, SimulatedScene) for s in X):
            raise TypeError("without y, X must hold SimulatedScene objects")
        return X
    y = list(y)
    if len(y) != len(X):
        raise ValueError(f"X has {len(X)} streams but y has {len(y)} targets")
    scenes = []
    for x, (frames, segments) in zip(X, y):
        stream = check_heatmap_stream(x)
        if len(frames) != len(stream):
            raise ValueError("each target needs one skeleton frame per heatmap frame")
        scenes.append(SimulatedScene(stream, list(frames), list(segments), GridSpec()))
    return scenes


class RFActionDetector(BaseEstimator):
    """Train the end-to-end model on scenes and detect actions from heatmaps.

    ``fit`` takes simulated scenes (or heatmap streams plus
    ``(frames, segments)`` targets); ``predict`` returns one list of scored
    segments per stream; ``transform`` returns the tracked skeleton frames.
    """

    def __init__(self, steps: int = 2000, lr: float = 1e-3, optimizer: str = "adam", mode: str = "end_to_end",
                 proposals: str = "multi", attention: bool = True, ratio: int = 1, lam: float = 1.0,
                 clip_windows: int = 3, seed: int = 0):
        self.steps = steps
        self.lr = lr
        self.optimizer = optimizer
        self.mode = mode
        self.proposals = proposals
        self.attention = attention
        self.ratio = ratio
        self.lam = lam
        self.clip_windows = clip_windows
        self.seed = seed

    def _train_config(self) -> TrainConfig:
        model = ModelConfig(proposals=self.proposals, attention=bool(self.attention))
        return TrainConfig(seed=self.seed, steps=self.steps, optimizer=self.optimizer, lr=self.lr, lam=self.lam,
                           ratio=self.ratio, mode=self.mode, clip_windows=self.clip_windows, log_every=0, model=model)

    def fit(self, X, y=None):
        scenes = check_scenes(X, y)
        self.state_ = fit(self._train_config(), scenes)
        self.model_ = self.state_.model
        self.n_steps_ = self.state_.step
        return self

    def _streams(self, X) -> List[HeatmapStream]:
        check_is_fitted(self, "model_")
        if isinstance(X, (HeatmapStream, SimulatedScene)):
            X = [X]
        return [check_heatmap_stream(x, self.model_.cfg.grid) for x in X]

    def predict(self, X) -> List[List[ActionSegment]]:
        return [run_pipeline(self.model_, s).segments for s in self._streams(X)]

    def transform(self, X) -> List[List[SkeletonFrame]]:
        return [run_pipeline(self.model_, s).frames for s in self._streams(X)]

    def score(self, X, y=None, theta: float = 0.1) -> float:
        """mAP at ``theta``; ``X`` and ``y`` as for :meth:`fit`. Track ids are aligned to GT ids first."""
        check_is_fitted(self, "model_")
        return evaluate_scenes(self.model_, check_scenes(X, y), (theta,)).map[theta]
