"""Streaming VAD pipeline and batch helpers used by the harness."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .audio_io import FRAME_HOP, FRAME_LEN, frame_matrix
from .config import Config
from .dnn import DnnPosterior, DnnWeights, forward_batch
from .features import StreamingFrontend, cmn_stream, deltas, fbank_matrix, splice, subband_matrix
from .fusion import FusedDecision, FusionEngine
from .gmm import GmmDetector
from .segmenter import Segment, Segmenter

_INERT = DnnPosterior(0.0, 1.0)


def dnn_features(windows: np.ndarray, cfg: Config) -> np.ndarray:
    """Spliced DNN inputs for a whole utterance using the streaming normalizer."""
    fe = cfg.frontend
    stacked = deltas(fbank_matrix(windows))
    return splice(cmn_stream(stacked, fe.cmn_decay, fe.cmn_warmup), fe.context_left, fe.context_right)


@dataclass
class FrameOutput:
    decision: FusedDecision
    segments: list[Segment] = field(default_factory=list)


class Pipeline:
    """Push audio, get per-frame fused decisions and finished speech segments.

    The DNN path needs a few frames of lookahead (deltas and right context),
    so decisions trail the input by that many frames until ``finish``.
    """

    def __init__(self, cfg: Config = Config(), weights: DnnWeights | None = None):
        fe = cfg.frontend
        self.cfg = cfg
        self.weights = weights
        if weights is not None and weights.input_dim != 87 * (fe.context_left + 1 + fe.context_right):
            raise ValueError("weights do not match the configured context")
        self.frontend = StreamingFrontend(fe.context_left, fe.context_right, fe.cmn_decay, fe.cmn_warmup)
        self.engine = FusionEngine(cfg.gmm, cfg.fusion)
        self.segmenter = Segmenter(cfg.endpoint, cfg.buffer_frames, FRAME_HOP)
        self._carry = np.zeros(0)
        self._pending_sub: list[np.ndarray] = []
        self._pending_hop: list[np.ndarray] = []
        self.segments: list[Segment] = []

    def _posteriors(self, rows: list[np.ndarray]) -> list[DnnPosterior]:
        if not rows:
            return []
        if self.weights is None:
            return [_INERT] * len(rows)
        p = forward_batch(self.weights, np.stack(rows))
        return [DnnPosterior(float(a), float(b)) for a, b in p]

    def _consume(self, spliced: list[np.ndarray]) -> list[FrameOutput]:
        out = []
        for post in self._posteriors(spliced):
            sub = self._pending_sub.pop(0)
            hop = self._pending_hop.pop(0)
            dec = self.engine.step(sub, post)
            segs = self.segmenter.push(dec.flag, hop)
            self.segments.extend(segs)
            out.append(FrameOutput(dec, segs))
        return out

    def push(self, samples: np.ndarray) -> list[FrameOutput]:
        buf = np.concatenate([self._carry, np.asarray(samples, dtype=np.float64)])
        windows = frame_matrix(buf)
        n = len(windows)
        if n == 0:
            self._carry = buf
            return []
        self._carry = buf[n * FRAME_HOP:]
        for i, row in enumerate(subband_matrix(windows)):
            self._pending_sub.append(row)
            self._pending_hop.append(windows[i, :FRAME_HOP].copy())
        return self._consume(self.frontend.push(fbank_matrix(windows)))

    def finish(self) -> list[FrameOutput]:
        out = self._consume(self.frontend.flush())
        segs = self.segmenter.finish()
        self.segments.extend(segs)
        if segs:
            if out:
                out[-1].segments.extend(segs)
            else:
                out.append(FrameOutput(FusedDecision(-1, 0, 0.5, 0.5), segs))
        return out


def run_file(samples: np.ndarray, cfg: Config = Config(), weights: DnnWeights | None = None,
             chunk: int = 16000) -> tuple[list[FusedDecision], list[Segment]]:
    pipe = Pipeline(cfg, weights)
    decisions = []
    for start in range(0, len(samples), chunk):
        decisions.extend(o.decision for o in pipe.push(samples[start:start + chunk]))
    decisions.extend(o.decision for o in pipe.finish() if o.decision.frame_index >= 0)
    return decisions, pipe.segments


@dataclass
class StreamFlags:
    gmm: np.ndarray
    dnn: np.ndarray
    fused: np.ndarray
    p_speech: np.ndarray


def run_all_modes(samples: np.ndarray, cfg: Config, weights: DnnWeights | None) -> StreamFlags:
    """Standalone GMM, standalone DNN and fused flags for one utterance (batch features)."""
    windows = frame_matrix(samples, FRAME_LEN, FRAME_HOP)
    sub = subband_matrix(windows)
    if weights is not None:
        post = forward_batch(weights, dnn_features(windows, cfg))
    else:
        post = np.tile([0.0, 1.0], (len(windows), 1))
    dnn = (post[:, 0] > cfg.fusion.dnn_threshold).astype(np.int8)
    gmm = GmmDetector(cfg.gmm).run(sub)
    engine = FusionEngine(cfg.gmm, cfg.fusion)
    fused = np.array([engine.step(s, DnnPosterior(float(a), float(b))).flag for s, (a, b) in zip(sub, post)],
                     dtype=np.int8)
    return StreamFlags(gmm, dnn, fused, post[:, 0])
