"""Feature front ends.

The DNN consumes 29 log mel filterbank energies with first and second order
regression deltas, mean normalized and spliced with left/right context. The
GMM consumes six subband log energies computed from the same frame clock.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, TextIO

import numpy as np

from .audio_io import SAMPLE_RATE, Frame

N_FFT = 512
N_MELS = 29
N_STATIC = N_MELS
FEAT_DIM = 3 * N_MELS  # statics + delta + delta-delta
ENERGY_FLOOR = 1e-10
PRE_EMPHASIS = 0.97
DELTA_WINDOW = 2
SUBBAND_EDGES = (80.0, 250.0, 500.0, 1000.0, 2000.0, 3000.0, 4000.0)


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_points(n_mels: int = N_MELS, fmin: float = 0.0, fmax: float = SAMPLE_RATE / 2) -> np.ndarray:
    """Edge/center frequencies in Hz: n_mels + 2 points equally spaced in mel."""
    return mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))


def mel_centers(n_mels: int = N_MELS) -> np.ndarray:
    return mel_points(n_mels)[1:-1]


def mel_filterbank(n_mels: int = N_MELS, n_fft: int = N_FFT, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Triangular filters evaluated at the FFT bin frequencies, shape (n_mels, n_fft//2+1)."""
    pts = mel_points(n_mels, 0.0, sr / 2)
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    lo, ctr, hi = pts[:-2, None], pts[1:-1, None], pts[2:, None]
    up = (freqs[None, :] - lo) / (ctr - lo)
    down = (hi - freqs[None, :]) / (hi - ctr)
    return np.maximum(0.0, np.minimum(up, down))


def subband_masks(edges=SUBBAND_EDGES, n_fft: int = N_FFT, sr: int = SAMPLE_RATE) -> np.ndarray:
    edges = np.asarray(edges, dtype=np.float64)
    if len(edges) != 7 or np.any(np.diff(edges) <= 0) or edges[0] < 0 or edges[-1] > sr / 2:
        raise ValueError(f"bad subband edges {edges}")
    freqs = np.arange(n_fft // 2 + 1) * sr / n_fft
    return np.stack([(freqs >= lo) & (freqs < hi) for lo, hi in zip(edges[:-1], edges[1:])]).astype(np.float64)


_MEL_FB = mel_filterbank()
_BAND_MASKS = subband_masks()
_WINDOW_CACHE: dict[int, np.ndarray] = {}


def _hamming(n: int) -> np.ndarray:
    w = _WINDOW_CACHE.get(n)
    if w is None:
        w = _WINDOW_CACHE[n] = np.hamming(n)
    return w


def power_spectrum(windows: np.ndarray, pre_emphasis: float = 0.0) -> np.ndarray:
    """|rfft|^2 of Hamming-windowed frames; accepts (frame_len,) or (n, frame_len)."""
    x = np.atleast_2d(np.asarray(windows, dtype=np.float64))
    if pre_emphasis:
        x = np.concatenate([x[:, :1], x[:, 1:] - pre_emphasis * x[:, :-1]], axis=1)
    spec = np.fft.rfft(x * _hamming(x.shape[1]), n=N_FFT, axis=1)
    return spec.real ** 2 + spec.imag ** 2


def fbank_matrix(windows: np.ndarray) -> np.ndarray:
    """Log mel energies for a stack of windows, shape (n, 29)."""
    pw = power_spectrum(windows, PRE_EMPHASIS)
    return np.log(np.maximum(pw @ _MEL_FB.T, ENERGY_FLOOR))


def subband_matrix(windows: np.ndarray, masks: np.ndarray = _BAND_MASKS) -> np.ndarray:
    """Log subband energies for a stack of windows, shape (n, 6)."""
    pw = power_spectrum(windows)
    return np.log(np.maximum(pw @ masks.T, ENERGY_FLOOR))


def fbank(frame: Frame | np.ndarray) -> np.ndarray:
    window = frame.window if isinstance(frame, Frame) else frame
    return fbank_matrix(window)[0]


def subbands(frame: Frame | np.ndarray) -> np.ndarray:
    window = frame.window if isinstance(frame, Frame) else frame
    return subband_matrix(window)[0]


def delta_matrix(seq: np.ndarray, width: int = DELTA_WINDOW) -> np.ndarray:
    """Regression deltas over +-width frames with edge replication."""
    seq = np.asarray(seq, dtype=np.float64)
    n = len(seq)
    if n == 0:
        raise ValueError("empty sequence")
    padded = np.concatenate([np.repeat(seq[:1], width, axis=0), seq, np.repeat(seq[-1:], width, axis=0)])
    denom = 2.0 * sum(k * k for k in range(1, width + 1))
    out = np.zeros_like(seq)
    for k in range(1, width + 1):
        out += k * (padded[width + k:width + k + n] - padded[width - k:width - k + n])
    return out / denom


def deltas(seq: np.ndarray) -> np.ndarray:
    """Stack statics, delta and delta-delta into (n, 87) feature frames."""
    seq = np.asarray(seq, dtype=np.float64)
    d1 = delta_matrix(seq)
    d2 = delta_matrix(d1)
    return np.concatenate([seq, d1, d2], axis=1)


@dataclass
class CmnState:
    """Causal running-mean normalizer.

    The first ``warmup`` frames use the cumulative mean including the
    current frame; afterwards the mean is an exponential average updated
    after subtraction.
    """

    dim: int = FEAT_DIM
    decay: float = 0.995
    warmup: int = 20
    running_mean: np.ndarray = field(default=None)  # type: ignore[assignment]
    warmup_count: int = 0

    def __post_init__(self) -> None:
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")
        if self.running_mean is None:
            self.running_mean = np.zeros(self.dim)

    def apply(self, f: np.ndarray) -> np.ndarray:
        f = np.asarray(f, dtype=np.float64)
        if self.warmup_count < self.warmup:
            self.warmup_count += 1
            self.running_mean = self.running_mean + (f - self.running_mean) / self.warmup_count
            return f - self.running_mean
        out = f - self.running_mean
        self.running_mean = self.decay * self.running_mean + (1.0 - self.decay) * f
        return out


def cmn_apply(state: CmnState, f: np.ndarray) -> np.ndarray:
    return state.apply(f)


def cmn_stream(seq: np.ndarray, decay: float = 0.995, warmup: int = 20) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    state = CmnState(seq.shape[1], decay, warmup)
    return np.stack([state.apply(row) for row in seq]) if len(seq) else seq.copy()


def cmn_batch(seq: np.ndarray) -> np.ndarray:
    seq = np.asarray(seq, dtype=np.float64)
    return seq - seq.mean(axis=0, keepdims=True)


def splice(seq: np.ndarray, left: int = 5, right: int = 5) -> np.ndarray:
    """Concatenate each frame with its context, replicating edge frames."""
    if left < 0 or right < 0:
        raise ValueError("context sizes must be non-negative")
    seq = np.asarray(seq, dtype=np.float64)
    n = len(seq)
    idx = np.clip(np.arange(n)[:, None] + np.arange(-left, right + 1)[None, :], 0, n - 1)
    return seq[idx].reshape(n, -1)


class StreamingFrontend:
    """Incremental Fbank -> deltas -> CMN -> splice.

    Frames come out in order, delayed by the delta and right-context
    lookahead (2 * DELTA_WINDOW + right frames). ``flush`` releases the tail
    using the same edge replication as the batch functions, so the output
    of a complete stream equals ``splice(cmn_stream(deltas(fb)))``.
    """

    def __init__(self, left: int = 5, right: int = 5, cmn_decay: float = 0.995, cmn_warmup: int = 20):
        self.left = left
        self.right = right
        self.cmn = CmnState(FEAT_DIM, cmn_decay, cmn_warmup)
        self._fb: dict[int, np.ndarray] = {}
        self._d1: dict[int, np.ndarray] = {}
        self._d2: dict[int, np.ndarray] = {}
        self._norm: dict[int, np.ndarray] = {}
        self._n_fb = 0
        self._n_d1 = 0
        self._n_d2 = 0
        self._n_out = 0
        self._flushed = False
        self._denom = 2.0 * sum(k * k for k in range(1, DELTA_WINDOW + 1))

    @property
    def dim(self) -> int:
        return FEAT_DIM * (self.left + 1 + self.right)

    def _delta_at(self, src: dict[int, np.ndarray], t: int, n: int) -> np.ndarray:
        acc = 0.0
        for k in range(1, DELTA_WINDOW + 1):
            acc = acc + k * (src[min(t + k, n - 1)] - src[max(t - k, 0)])
        return acc / self._denom

    def _advance(self) -> list[np.ndarray]:
        w = DELTA_WINDOW
        while self._n_d1 < self._n_fb and (self._flushed or self._n_d1 + w < self._n_fb):
            t = self._n_d1
            self._d1[t] = self._delta_at(self._fb, t, self._n_fb)
            self._n_d1 += 1
        while self._n_d2 < self._n_d1 and (self._flushed or self._n_d2 + w < self._n_d1):
            t = self._n_d2
            self._d2[t] = self._delta_at(self._d1, t, self._n_d1)
            self._norm[t] = self.cmn.apply(np.concatenate([self._fb[t], self._d1[t], self._d2[t]]))
            self._n_d2 += 1
        out = []
        while self._n_out < self._n_d2 and (self._flushed or self._n_out + self.right < self._n_d2):
            t = self._n_out
            last = self._n_d2 - 1
            out.append(np.concatenate([self._norm[min(max(j, 0), last)] for j in range(t - self.left, t + self.right + 1)]))
            self._n_out += 1
        self._prune()
        return out

    def _prune(self) -> None:
        keep = 2 * DELTA_WINDOW + 1
        for store, upto in ((self._fb, self._n_d2 - keep), (self._d1, self._n_d2 - keep),
                            (self._d2, self._n_d2 - keep), (self._norm, self._n_out - self.left - 1)):
            # index 0 stays alive for left-edge replication at stream start
            for k in [k for k in store if 0 < k < upto]:
                del store[k]

    def push(self, fb_rows: Iterable[np.ndarray]) -> list[np.ndarray]:
        if self._flushed:
            raise RuntimeError("frontend already flushed")
        for row in fb_rows:
            self._fb[self._n_fb] = np.asarray(row, dtype=np.float64)
            self._n_fb += 1
        return self._advance()

    def flush(self) -> list[np.ndarray]:
        self._flushed = True
        if self._n_fb == 0:
            return []
        return self._advance()


def write_feature_dump(fh: TextIO, rows: np.ndarray) -> None:
    rows = np.atleast_2d(rows)
    fh.write(f"#dims={rows.shape[1]}\n")
    for row in rows:
        fh.write("\t".join(repr(float(v)) for v in row) + "\n")


def read_feature_dump(fh: TextIO) -> np.ndarray:
    header = fh.readline().strip()
    if not header.startswith("#dims="):
        raise ValueError("missing #dims header")
    dims = int(header.split("=", 1)[1])
    rows = [[float(v) for v in line.split("\t")] for line in fh if line.strip()]
    if any(len(r) != dims for r in rows):
        raise ValueError("row width does not match header")
    return np.array(rows, dtype=np.float64).reshape(-1, dims)
