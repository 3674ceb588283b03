"""Deterministic synthetic speech and noise for hermetic experiments.

Speech is a harmonic complex with a wandering pitch, shaped by three
formant resonances that move from syllable to syllable and gated by
syllabic envelopes. Noises are cheap stand-ins for the four conditions
used in the simulation tables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal

from ..audio_io import SAMPLE_RATE

NOISE_KINDS = ("wind", "water", "babble", "television")


@dataclass(frozen=True)
class NoiseSpec:
    kind: str
    seed: int = 0

    def __post_init__(self) -> None:
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")


def _smooth_random(rng: np.random.Generator, n: int, rate_hz: float, sr: int = SAMPLE_RATE) -> np.ndarray:
    """Piecewise-linear random curve in [0, 1] with knots every 1/rate_hz seconds."""
    if n == 0:
        return np.zeros(0)
    step = max(1, int(sr / rate_hz))
    knots = rng.random(n // step + 2)
    return np.interp(np.arange(n), np.arange(len(knots)) * step, knots)


def _normalize(x: np.ndarray, rms: float) -> np.ndarray:
    p = np.sqrt(np.mean(x ** 2)) if len(x) else 0.0
    return x * (rms / p) if p > 0 else x


def _harmonic_voice(rng: np.random.Generator, n: int, f0_lo: float, f0_hi: float, sr: int = SAMPLE_RATE,
                    formants: np.ndarray | None = None, fmax: float = 4000.0) -> np.ndarray:
    """Harmonic complex with random-walk pitch and a fixed or supplied formant track."""
    walk = np.cumsum(rng.normal(0.0, 1.0, n // 160 + 2))
    walk = (walk - walk.min()) / (np.ptp(walk) + 1e-9)
    f0 = np.interp(np.arange(n), np.arange(len(walk)) * 160, f0_lo + (f0_hi - f0_lo) * walk)
    phase = 2 * np.pi * np.cumsum(f0) / sr
    if formants is None:
        formants = np.tile(np.array([[500.0], [1500.0], [2500.0]]), (1, n))
    out = np.zeros(n)
    n_harm = int(fmax // f0_lo)
    bw = np.array([90.0, 120.0, 180.0])[:, None]
    for k in range(1, n_harm + 1):
        fk = k * f0
        if fk.min() > fmax:
            break
        gain = (1.0 / (1.0 + ((fk[None, :] - formants) / bw) ** 2)).sum(axis=0)
        gain *= fk < fmax
        out += gain * np.sin(k * phase + rng.uniform(0, 2 * np.pi)) / np.sqrt(k)
    return out


def synth_utterance(rng: np.random.Generator, duration: float, sr: int = SAMPLE_RATE) -> np.ndarray:
    """One utterance of syllables separated by short pauses, unit-ish RMS."""
    n = int(duration * sr)
    formants = np.zeros((3, n))
    env = np.zeros(n)
    pos = 0
    while pos < n:
        syl = int(rng.uniform(0.12, 0.30) * sr)
        end = min(n, pos + syl)
        length = end - pos
        f1, f2, f3 = rng.uniform(300, 850), rng.uniform(900, 2300), rng.uniform(2400, 3400)
        f1b, f2b = f1 * rng.uniform(0.8, 1.2), f2 * rng.uniform(0.8, 1.2)
        formants[0, pos:end] = np.linspace(f1, f1b, length)
        formants[1, pos:end] = np.linspace(f2, f2b, length)
        formants[2, pos:end] = f3
        env[pos:end] = np.sin(np.pi * np.linspace(0, 1, length)) ** 0.6 * rng.uniform(0.5, 1.0)
        gap = int(rng.uniform(0.0, 0.06) * sr)
        formants[:, end:min(n, end + gap)] = formants[:, end - 1:end]
        pos = end + gap
    voice = _harmonic_voice(rng, n, rng.uniform(90, 140), rng.uniform(160, 260), sr, formants)
    fric = signal.lfilter(*signal.butter(2, [2500, 6000], btype="band", fs=sr), rng.normal(0, 1, n))
    fric_env = env * (_smooth_random(rng, n, 8.0, sr) > 0.75)
    x = _normalize(voice, 1.0) * env + 0.3 * fric * fric_env
    return x


def synth_speech_file(seed: int, n_utts: int = 1, lead: float = 1.0, gap: tuple[float, float] = (0.6, 1.2),
                      dur: tuple[float, float] = (0.8, 2.0), tail: float = 0.8, rms: float = 0.1,
                      sr: int = SAMPLE_RATE) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Clean file with leading silence; returns samples and utterance (start, end) seconds."""
    rng = np.random.default_rng(seed)
    parts = [np.zeros(int(lead * sr))]
    spans = []
    t = lead
    for i in range(n_utts):
        d = rng.uniform(*dur)
        u = synth_utterance(rng, d, sr)
        parts.append(u)
        spans.append((t, t + d))
        t += d
        pause = tail if i == n_utts - 1 else rng.uniform(*gap)
        parts.append(np.zeros(int(pause * sr)))
        t += int(pause * sr) / sr
        t = round(t, 9)
    x = np.concatenate(parts)
    speech = np.concatenate([p for p in parts[1::2]])
    scale = rms / np.sqrt(np.mean(speech ** 2))
    return x * scale, spans


def _wind(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    base = signal.sosfilt(signal.butter(4, 200, btype="low", fs=sr, output="sos"), rng.normal(0, 1, n + 4000))[4000:]
    gust = 0.3 + 0.7 * _smooth_random(rng, n, 0.7, sr)
    return base * gust


def _water(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """White noise under a fast random amplitude flutter (running tap)."""
    flutter = 0.5 + 0.5 * _smooth_random(rng, n, 40.0, sr)
    return rng.normal(0, 1, n) * flutter


# Babble and television share the band of a small loudspeaker. A weak
# broadband floor keeps every subband populated, as in any real recording.
_SPEAKER_BAND = (300.0, 3000.0)
_HARMONIC_CAP = 2900.0
_FLOOR = 0.1
_TV_BED = 0.3  # level of the source that is not currently on top


def _speaker(x: np.ndarray, sr: int) -> np.ndarray:
    return signal.sosfilt(signal.butter(8, _SPEAKER_BAND, btype="band", fs=sr, output="sos"), x)


def _tone(rng: np.random.Generator, n: int, lo: float, hi: float, sr: int) -> np.ndarray:
    """Three-harmonic tone whose pitch random-walks inside [lo, hi] Hz; harmonics stop at the band cap."""
    walk = np.cumsum(rng.normal(0.0, 1.0, n // 160 + 2))
    walk = (walk - walk.min()) / (np.ptp(walk) + 1e-9)
    f0 = np.interp(np.arange(n), np.arange(len(walk)) * 160, lo + (hi - lo) * walk)
    phase = 2 * np.pi * np.cumsum(f0) / sr
    out = np.zeros(n)
    for k, a in ((1, 1.0), (2, 0.5), (3, 0.25)):
        out += a * np.sin(k * phase) * (k * f0 < _HARMONIC_CAP)
    return out


def _babble(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    out = np.zeros(n)
    for _ in range(6):
        lo = rng.uniform(300, 600)
        am = 0.3 + 0.7 * _smooth_random(rng, n, 5.0, sr)
        out += _tone(rng, n, lo, lo * rng.uniform(1.3, 1.8), sr) * am
    return _normalize(_speaker(out, sr), 1.0) + _FLOOR * rng.normal(0, 1, n)


def _music(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """Sustained major chords with a decaying attack, one chord every 0.25-0.6 s."""
    out = np.zeros(n)
    t = np.arange(n) / sr
    pos = 0
    while pos < n:
        end = min(n, pos + int(rng.uniform(0.25, 0.6) * sr))
        root = 220.0 * 2 ** (rng.integers(0, 12) / 12)
        env = 0.4 + 0.6 * np.exp(-np.arange(end - pos) / (0.3 * sr))
        for semis in (0, 4, 7, 12, 19):
            f = root * 2 ** (semis / 12)
            for k in (1, 2, 3, 4):
                if k * f < _HARMONIC_CAP:
                    out[pos:end] += env * np.sin(2 * np.pi * k * f * t[pos:end] + rng.uniform(0, 2 * np.pi)) / k
        pos = end
    return out


def _television(rng: np.random.Generator, n: int, sr: int) -> np.ndarray:
    """Music and babble taking turns on top every 1.5 s with a short crossfade."""
    music = _normalize(_speaker(_music(rng, n, sr), sr), 1.0)
    chat = _normalize(_babble(rng, n, sr), 1.0)
    seg = int(1.5 * sr)
    sel = (np.arange(n) // seg + rng.integers(0, 2)) % 2
    fade = np.clip(signal.lfilter([0.002], [1.0, -0.998], sel.astype(float)), 0, 1)
    lo = _TV_BED
    return music * (lo + (1 - lo) * (1 - fade)) + chat * (lo + (1 - lo) * fade) + _FLOOR * rng.normal(0, 1, n)


_GENERATORS = {"wind": _wind, "water": _water, "babble": _babble, "television": _television}


def synth_noise(spec: NoiseSpec, length: int, sr: int = SAMPLE_RATE) -> np.ndarray:
    if length <= 0:
        return np.zeros(0)
    rng = np.random.default_rng([spec.seed, NOISE_KINDS.index(spec.kind)])
    return _normalize(_GENERATORS[spec.kind](rng, length, sr), 0.1)
