"""PCM decoding and the fixed frame clock shared by the DNN and GMM paths."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import BinaryIO, Iterator

import numpy as np

SAMPLE_RATE = 16000
FRAME_LEN = 400  # 25 ms
FRAME_HOP = 160  # 10 ms


class AudioError(Exception):
    pass


class NotWav(AudioError):
    pass


class UnsupportedFormat(AudioError):
    pass


class WrongRate(AudioError):
    pass


class TooShort(AudioError):
    pass


@dataclass(frozen=True)
class SampleStream:
    """Mono audio normalized to [-1, 1)."""

    samples: np.ndarray
    sample_rate_hz: int = SAMPLE_RATE

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def duration(self) -> float:
        return len(self.samples) / self.sample_rate_hz


@dataclass(frozen=True)
class Frame:
    index: int
    window: np.ndarray


def pcm16_to_float(raw: bytes) -> np.ndarray:
    return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0


def float_to_pcm16(samples: np.ndarray) -> bytes:
    x = np.clip(np.round(np.asarray(samples) * 32768.0), -32768, 32767)
    return x.astype("<i2").tobytes()


def read_wav(path: str | Path) -> SampleStream:
    """Read a 16-bit mono 16 kHz RIFF/WAVE file.

    Raises:
        NotWav: the file is not RIFF/WAVE.
        UnsupportedFormat: non-PCM encoding, sample width other than 16 bits,
            or more than one channel.
        WrongRate: sample rate other than 16 kHz.
    """
    path = Path(path)
    with open(path, "rb") as fh:
        head = fh.read(12)
    if len(head) < 12 or head[:4] != b"RIFF" or head[8:12] != b"WAVE":
        raise NotWav(f"{path}: not a RIFF/WAVE file")
    try:
        with wave.open(str(path), "rb") as wf:
            channels = wf.getnchannels()
            width = wf.getsampwidth()
            rate = wf.getframerate()
            raw = wf.readframes(wf.getnframes())
    except wave.Error as exc:
        # the wave module only understands PCM; anything else lands here
        raise UnsupportedFormat(f"{path}: {exc}") from exc
    except EOFError as exc:
        raise NotWav(f"{path}: truncated header") from exc
    if channels != 1:
        raise UnsupportedFormat(f"{path}: {channels} channels, expected mono")
    if width != 2:
        raise UnsupportedFormat(f"{path}: {8 * width}-bit samples, expected 16-bit")
    if rate != SAMPLE_RATE:
        raise WrongRate(f"{path}: {rate} Hz, expected {SAMPLE_RATE} Hz")
    return SampleStream(pcm16_to_float(raw), rate)


def write_wav(path: str | Path, samples: np.ndarray, sample_rate_hz: int = SAMPLE_RATE) -> None:
    with wave.open(str(path), "wb") as wf:
        wf.setnchannels(1)
        wf.setsampwidth(2)
        wf.setframerate(sample_rate_hz)
        wf.writeframes(float_to_pcm16(samples))


def read_raw_pcm(fh: BinaryIO, chunk_bytes: int = 3200) -> Iterator[np.ndarray]:
    """Yield float chunks from headerless little-endian 16-bit PCM."""
    carry = b""
    while True:
        buf = fh.read(chunk_bytes)
        if not buf:
            break
        buf = carry + buf
        cut = len(buf) - (len(buf) % 2)
        carry = buf[cut:]
        if cut:
            yield pcm16_to_float(buf[:cut])


def num_frames(n_samples: int, frame_len: int = FRAME_LEN, hop: int = FRAME_HOP) -> int:
    if n_samples < frame_len:
        return 0
    return (n_samples - frame_len) // hop + 1


def frame_matrix(samples: np.ndarray, frame_len: int = FRAME_LEN, hop: int = FRAME_HOP) -> np.ndarray:
    """Stack all complete analysis windows into an (n_frames, frame_len) view."""
    samples = np.asarray(samples, dtype=np.float64)
    n = num_frames(len(samples), frame_len, hop)
    if n == 0:
        return np.zeros((0, frame_len))
    windows = np.lib.stride_tricks.sliding_window_view(samples, frame_len)
    return windows[::hop][:n]


def frame_stream(s: SampleStream, frame_len: int = FRAME_LEN, hop: int = FRAME_HOP) -> list[Frame]:
    if len(s.samples) < frame_len:
        raise TooShort(f"{len(s.samples)} samples, need at least {frame_len}")
    mat = frame_matrix(s.samples, frame_len, hop)
    return [Frame(i, mat[i]) for i in range(len(mat))]
