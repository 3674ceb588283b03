"""Combining the DNN and GMM paths.

The DNN flag overrides toward speech; otherwise the GMM flag passes
through. The DNN posteriors of the previous frame are blended into the GMM
class likelihoods, and the blended pair drives the GMM responsibilities.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dnn import DnnPosterior, dnn_flag
from .gmm import ClassLikelihoods, GmmConfig, GmmState, adapt, gmm_decide_full


@dataclass(frozen=True)
class FusionConfig:
    alpha: float = 0.1  # DNN share of the noise likelihood
    beta: float = 0.8  # DNN share of the speech likelihood
    dnn_threshold: float = 0.5

    def __post_init__(self) -> None:
        if not (0.0 <= self.alpha <= 1.0 and 0.0 <= self.beta <= 1.0):
            raise ValueError("alpha and beta must lie in [0, 1]")


@dataclass(frozen=True)
class FusedDecision:
    frame_index: int
    flag: int
    p_h0_smoothed: float
    p_h1_smoothed: float
    dnn_flag: int = 0
    gmm_flag: int = 0
    p_speech: float = 0.5
    gmm_llr: float = 0.0


def fuse_flags(dnn: int, gmm: int) -> int:
    return 1 if dnn == 1 else int(gmm)


def smooth_likelihoods(prev_dnn: DnnPosterior, prev_gmm: ClassLikelihoods, cfg: FusionConfig = FusionConfig()) -> ClassLikelihoods:
    """Blend last frame's DNN posterior into last frame's (normalized) GMM pair and renormalize."""
    if cfg.alpha == 0.0 and cfg.beta == 0.0:
        return ClassLikelihoods(prev_gmm.p_h0, prev_gmm.p_h1)
    h0 = cfg.alpha * prev_dnn.p_silence + (1.0 - cfg.alpha) * prev_gmm.p_h0
    h1 = cfg.beta * prev_dnn.p_speech + (1.0 - cfg.beta) * prev_gmm.p_h1
    total = h0 + h1
    if total <= 0.0:
        return ClassLikelihoods(0.5, 0.5)
    return ClassLikelihoods(h0 / total, h1 / total)


_NEUTRAL_DNN = DnnPosterior(0.5, 0.5)
_NEUTRAL_LIK = ClassLikelihoods(0.5, 0.5)


class FusionEngine:
    """Per-stream state machine for one frame clock.

    Order inside a frame: GMM decision, flag fusion, likelihood smoothing,
    minimum tracker, noise update, speech update.
    """

    def __init__(self, gmm_cfg: GmmConfig = GmmConfig(), cfg: FusionConfig = FusionConfig()):
        self.gmm_cfg = gmm_cfg
        self.cfg = cfg
        self.state: GmmState | None = None
        self._boot: list[np.ndarray] = []
        self._prev_dnn: DnnPosterior | None = None
        self._prev_gmm: ClassLikelihoods | None = None
        self._index = 0

    def step(self, feats: np.ndarray, post: DnnPosterior) -> FusedDecision:
        feats = np.asarray(feats, dtype=np.float64) * self.gmm_cfg.feature_scale
        index = self._index
        self._index += 1
        d_flag = dnn_flag(post, self.cfg.dnn_threshold)

        if self.state is None:
            self._boot.append(feats)
            if len(self._boot) >= self.gmm_cfg.bootstrap_frames:
                self.state = GmmState.from_bootstrap(np.stack(self._boot), self.gmm_cfg)
                self._boot = []
            return FusedDecision(index, fuse_flags(d_flag, 0), 0.5, 0.5, d_flag, 0, post.p_speech, 0.0)

        g_flag, lik, total = gmm_decide_full(feats, self.state)
        flag = fuse_flags(d_flag, g_flag)
        if self._prev_gmm is None:
            smoothed = _NEUTRAL_LIK
        else:
            smoothed = smooth_likelihoods(self._prev_dnn or _NEUTRAL_DNN, self._prev_gmm, self.cfg)
        adapt(self.state, feats, flag, smoothed)
        self._prev_dnn = post
        self._prev_gmm = lik.normalized()
        return FusedDecision(index, flag, smoothed.p_h0, smoothed.p_h1, d_flag, g_flag, post.p_speech, total)


def step(engine: FusionEngine, feats: np.ndarray, post: DnnPosterior) -> FusedDecision:
    return engine.step(feats, post)
