"""Additive noise mixing at a target SNR measured over speech frames."""

from __future__ import annotations

import numpy as np

from ..audio_io import FRAME_HOP

CLIP_MAX = 1.0 - 1.0 / 32768.0


class SilentClean(ValueError):
    pass


def speech_power(clean: np.ndarray, labels: np.ndarray) -> float:
    """Mean power over the hop regions of frames labelled 1."""
    clean = np.asarray(clean, dtype=np.float64)
    idx = np.flatnonzero(np.asarray(labels) == 1.0)
    if len(idx) == 0:
        return 0.0
    hops = clean[: (len(clean) // FRAME_HOP) * FRAME_HOP].reshape(-1, FRAME_HOP)
    idx = idx[idx < len(hops)]
    return float(np.mean(hops[idx] ** 2)) if len(idx) else 0.0


def fit_noise(noise: np.ndarray, n: int) -> np.ndarray:
    noise = np.asarray(noise, dtype=np.float64)
    if len(noise) == 0:
        raise ValueError("empty noise")
    reps = -(-n // len(noise))
    return np.tile(noise, reps)[:n]


def noise_gain(p_speech: float, p_noise: float, snr_db: float) -> float:
    return float(np.sqrt(p_speech / (p_noise * 10.0 ** (snr_db / 10.0))))


def mix_at_snr(clean: np.ndarray, noise: np.ndarray, snr_db: float, labels: np.ndarray) -> tuple[np.ndarray, float]:
    """Return (mixture, gain); the noise is tiled or truncated to the clean length."""
    clean = np.asarray(clean, dtype=np.float64)
    p_s = speech_power(clean, labels)
    if p_s <= 0.0:
        raise SilentClean("clean signal has no power over speech frames")
    n = fit_noise(noise, len(clean))
    p_n = float(np.mean(n ** 2))
    g = noise_gain(p_s, p_n, snr_db)
    return np.clip(clean + g * n, -1.0, CLIP_MAX), g


def measured_snr(clean: np.ndarray, mixed: np.ndarray, labels: np.ndarray) -> float:
    residual = np.asarray(mixed, dtype=np.float64) - np.asarray(clean, dtype=np.float64)
    return 10.0 * np.log10(speech_power(clean, labels) / np.mean(residual ** 2))
