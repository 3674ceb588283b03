"""Frame labels: energy thresholding of clean speech and segment expansion."""

from __future__ import annotations

from typing import Iterable, Sequence, TextIO

import numpy as np

from ..audio_io import FRAME_HOP, SAMPLE_RATE, frame_matrix

SPEECH_CLASSES = {"speech", "sp", "s", "1", "voice"}


class OverlappingSegments(ValueError):
    pass


def frame_energy(samples: np.ndarray) -> np.ndarray:
    windows = frame_matrix(samples)
    return (windows ** 2).sum(axis=1)


def soften(hard: np.ndarray, boundary: int) -> np.ndarray:
    """Relabel frames within ``boundary`` of every interior 0/1 transition as 0.5."""
    labels = np.asarray(hard, dtype=np.float64).copy()
    if boundary <= 0 or len(labels) < 2:
        return labels
    edges = np.flatnonzero(np.diff(hard) != 0) + 1  # first frame after each transition
    for i in edges:
        labels[max(0, i - boundary):min(len(labels), i + boundary)] = 0.5
    return labels


def energy_labels(clean: np.ndarray, threshold_ratio: float = 0.01, boundary: int = 3) -> np.ndarray:
    """Label a frame 1 when its clean energy exceeds ratio * 95th-percentile frame energy."""
    if not 0.0 < threshold_ratio < 1.0:
        raise ValueError("threshold_ratio must lie in (0, 1)")
    e = frame_energy(clean)
    if len(e) == 0:
        return np.zeros(0)
    hard = (e > threshold_ratio * np.percentile(e, 95)).astype(np.int8)
    return soften(hard, boundary)


def refine_segment_labels(segments: Sequence[tuple[float, float, str]], total_frames: int, boundary: int = 2,
                          hop_s: float = FRAME_HOP / SAMPLE_RATE) -> np.ndarray:
    """Expand (start_sec, end_sec, class) annotations into per-frame soft labels."""
    hard = np.zeros(total_frames, dtype=np.int8)
    last_end = -np.inf
    for start, end, cls in segments:
        if end < start or start < last_end:
            raise OverlappingSegments(f"segment ({start}, {end}) overlaps or is out of order")
        last_end = end
        if str(cls).strip().lower() in SPEECH_CLASSES:
            a = max(0, int(round(start / hop_s)))
            b = min(total_frames, int(round(end / hop_s)))
            hard[a:b] = 1
    return soften(hard, boundary)


def spans_to_frames(spans: Iterable[tuple[float, float]], hop_s: float = FRAME_HOP / SAMPLE_RATE) -> list[tuple[int, int]]:
    return [(int(round(a / hop_s)), int(round(b / hop_s))) for a, b in spans]


def read_annotations(fh: TextIO) -> list[tuple[float, float, str]]:
    out = []
    for line in fh:
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        start, end, cls = line.split("\t")[:3]
        out.append((float(start), float(end), cls))
    return out


def write_labels(fh: TextIO, labels: np.ndarray) -> None:
    for i, v in enumerate(labels):
        fh.write(f"{i}\t{float(v):g}\n")


def read_labels(fh: TextIO) -> np.ndarray:
    rows = [line.split("\t") for line in fh if line.strip() and not line.startswith("#")]
    labels = np.zeros(len(rows))
    for frame, value in rows:
        labels[int(frame)] = float(value)
    return labels
