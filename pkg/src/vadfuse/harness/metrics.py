"""Frame and utterance accuracy, and grid calibration of the detector thresholds.

Frames labelled 0.5 are left out of frame accuracy. An utterance counts as
detected when some detected segment starts and ends within ``tolerance``
frames of its true begin and end.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from itertools import product
from typing import Iterable, Sequence

import numpy as np

from ..fusion import FusionConfig
from ..gmm import GmmConfig, GmmDetector

UTTERANCE_TOLERANCE = 20  # frames, i.e. 200 ms at a 10 ms hop


class LengthMismatch(ValueError):
    pass


class EmptyGrid(ValueError):
    pass


@dataclass(frozen=True)
class EvalReport:
    n_scored: int
    n_correct: int
    n_utterances: int
    n_detected: int

    @property
    def frame_accuracy(self) -> float:
        return self.n_correct / self.n_scored if self.n_scored else float("nan")

    @property
    def utterance_accuracy(self) -> float:
        return self.n_detected / self.n_utterances if self.n_utterances else float("nan")

    def __add__(self, other: "EvalReport") -> "EvalReport":
        return EvalReport(self.n_scored + other.n_scored, self.n_correct + other.n_correct,
                          self.n_utterances + other.n_utterances, self.n_detected + other.n_detected)


EMPTY_REPORT = EvalReport(0, 0, 0, 0)


def runs(flags: Sequence[int] | np.ndarray) -> list[tuple[int, int]]:
    """Half-open [begin, end) runs of ones."""
    f = np.concatenate([[0], np.asarray(flags, dtype=np.int8) != 0, [0]]).astype(np.int8)
    d = np.diff(f)
    return list(zip(np.flatnonzero(d == 1).tolist(), np.flatnonzero(d == -1).tolist()))


def harden(labels: np.ndarray) -> np.ndarray:
    """Undo the 0.5 softening: each 0.5 run splits at its midpoint between its neighbours."""
    lab = np.asarray(labels, dtype=np.float64)
    hard = (lab > 0.5).astype(np.int8)
    i, n = 0, len(lab)
    while i < n:
        if lab[i] != 0.5:
            i += 1
            continue
        j = i
        while j < n and lab[j] == 0.5:
            j += 1
        left = hard[i - 1] if i > 0 else (hard[j] if j < n else 0)
        right = hard[j] if j < n else left
        mid = (i + j) // 2
        hard[i:mid] = left
        hard[mid:j] = right
        i = j
    return hard


def labels_to_segments(labels: np.ndarray) -> list[tuple[int, int]]:
    return runs(harden(labels))


def frame_report(decisions: np.ndarray, truth: np.ndarray) -> tuple[int, int]:
    d = np.asarray(decisions)
    t = np.asarray(truth, dtype=np.float64)
    if len(d) != len(t):
        raise LengthMismatch(f"{len(d)} decisions vs {len(t)} labels")
    scored = t != 0.5
    return int(scored.sum()), int(np.sum(d[scored] == t[scored]))


def utterance_hits(detected: Iterable[tuple[int, int]], reference: Iterable[tuple[int, int]],
                   tolerance: int = UTTERANCE_TOLERANCE) -> int:
    det = list(detected)
    hits = 0
    for b, e in reference:
        if any(abs(b - db) <= tolerance and abs(e - de) <= tolerance for db, de in det):
            hits += 1
    return hits


def evaluate(decisions: np.ndarray, truth: np.ndarray, detected: Sequence[tuple[int, int]] | None = None,
             reference: Sequence[tuple[int, int]] | None = None,
             tolerance: int = UTTERANCE_TOLERANCE) -> EvalReport:
    """Score one stream.

    ``detected`` defaults to the runs of ``decisions`` and ``reference`` to the
    speech runs of the hardened labels. Both are half-open frame intervals.
    """
    n_scored, n_correct = frame_report(decisions, truth)
    if detected is None:
        detected = runs(decisions)
    if reference is None:
        reference = labels_to_segments(truth)
    return EvalReport(n_scored, n_correct, len(reference), utterance_hits(detected, reference, tolerance))


def grid_product(tau_values: Iterable[float], a_values: Iterable[float]) -> list[tuple[float, float]]:
    return [(float(t), float(a)) for t, a in product(tau_values, a_values)]


@dataclass(frozen=True)
class CalibrationItem:
    subbands: np.ndarray  # (n, 6) natural-log band energies
    labels: np.ndarray
    p_speech: np.ndarray | None = None


@dataclass(frozen=True)
class Calibration:
    T_tau: float
    T_a: float
    dnn_threshold: float
    gmm_accuracy: float
    dnn_accuracy: float


def _pick(scores: dict[tuple[float, ...], float]) -> tuple[tuple[float, ...], float]:
    """Best score, ties going to the lexicographically smallest point."""
    best = None
    for point in sorted(scores):
        if best is None or scores[point] > scores[best]:
            best = point
    return best, scores[best]


def _pooled(reports: Iterable[tuple[int, int]]) -> float:
    scored = correct = 0
    for s, c in reports:
        scored += s
        correct += c
    return correct / scored if scored else 0.0


def gmm_objective(corpus: Sequence[CalibrationItem], cfg: GmmConfig) -> float:
    return _pooled(frame_report(GmmDetector(cfg).run(it.subbands), it.labels) for it in corpus)


def dnn_objective(corpus: Sequence[CalibrationItem], threshold: float) -> float:
    items = [it for it in corpus if it.p_speech is not None]
    return _pooled(frame_report((it.p_speech > threshold).astype(np.int8), it.labels) for it in items)


def calibrate_thresholds(corpus: Sequence[CalibrationItem], grid: Sequence[tuple[float, float]],
                         dnn_grid: Sequence[float] = (), base: GmmConfig = GmmConfig(),
                         fusion: FusionConfig = FusionConfig()) -> Calibration:
    """Exhaustive search of (T_tau, T_a) for the standalone GMM, then the DNN threshold."""
    grid = [(float(t), float(a)) for t, a in grid]
    if not grid:
        raise EmptyGrid("threshold grid is empty")
    scores = {p: gmm_objective(corpus, replace(base, T_tau=p[0], T_a=p[1])) for p in set(grid)}
    (t_tau, t_a), gmm_acc = _pick(scores)
    dnn_thr, dnn_acc = fusion.dnn_threshold, float("nan")
    if dnn_grid and any(it.p_speech is not None for it in corpus):
        (dnn_thr,), dnn_acc = _pick({(float(t),): dnn_objective(corpus, float(t)) for t in set(dnn_grid)})
    return Calibration(t_tau, t_a, dnn_thr, gmm_acc, dnn_acc)

