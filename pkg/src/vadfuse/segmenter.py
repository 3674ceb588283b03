"""Endpoint detection and speech extraction from a bounded circular buffer.

Frame indices are absolute (0-based on the stream). Buffer pointers are
slots in ``[0, capacity)``; slot 0 is the buffer base. A segment is the
half-open frame range ``[begin, end)``.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import NamedTuple

import numpy as np

from .audio_io import FRAME_HOP


class SegmenterError(Exception):
    pass


class InvalidTraceback(SegmenterError):
    pass


class SpanOutOfRange(SegmenterError):
    pass


@dataclass(frozen=True)
class EndpointConfig:
    N: int = 30
    rho: float = 0.7
    M: int = 35
    N_end: int = 50
    rho_end: float = 0.9
    M_end: int = 40

    def __post_init__(self) -> None:
        if self.N < 1 or self.N_end < 1:
            raise ValueError("window lengths must be >= 1")
        if self.M < 0 or self.M_end < 0:
            raise ValueError("traceback lengths must be >= 0")
        if not (0.0 < self.rho <= 1.0 and 0.0 < self.rho_end <= 1.0):
            raise ValueError("rho and rho_end must lie in (0, 1]")
        if self.rho * self.N < 1 - 1e-9 or self.rho_end * self.N_end < 1 - 1e-9:
            raise ValueError("rho * N must be at least one frame")

    @property
    def begin_count(self) -> int:
        return math.ceil(self.rho * self.N - 1e-9)

    @property
    def end_count(self) -> int:
        return math.ceil(self.rho_end * self.N_end - 1e-9)


class Mode(Enum):
    SILENCE = 0
    IN_SPEECH = 1


class Event(NamedTuple):
    kind: str  # "begin" or "end"
    at: int  # begin: first frame of the segment; end: exclusive end frame
    trigger: int  # frame whose flag completed the window


class EndpointState:
    """Sliding-window begin/end detector with traceback.

    In silence, a begin fires once the window holds ``ceil(rho * N)`` speech
    flags; the segment start is traced back ``M`` frames from the trigger.
    In speech, the mirrored rule on silence flags fires the end, traced
    back ``M_end`` frames. The window is cleared on every transition.
    """

    def __init__(self, cfg: EndpointConfig = EndpointConfig()):
        self.cfg = cfg
        self.mode = Mode.SILENCE
        self.window: deque[int] = deque(maxlen=cfg.N)
        self.count = 0  # flags equal to 1 in the window
        self.begin: int | None = None
        self.prev_end = 0
        self._last_index = -1

    def _reset(self, size: int) -> None:
        self.window = deque(maxlen=size)
        self.count = 0

    def push(self, flag: int, frame_index: int, earliest: int = 0) -> Event | None:
        """Feed one frame's flag. ``earliest`` bounds how far a begin may be traced back."""
        if frame_index <= self._last_index:
            raise ValueError("frame indices must be strictly increasing")
        self._last_index = frame_index
        flag = 1 if flag else 0
        if len(self.window) == self.window.maxlen:
            self.count -= self.window[0]
        self.window.append(flag)
        self.count += flag

        if self.mode is Mode.SILENCE:
            if self.count >= self.cfg.begin_count:
                at = max(frame_index - self.cfg.M, 0, self.prev_end, earliest)
                self.begin = at
                self.mode = Mode.IN_SPEECH
                self._reset(self.cfg.N_end)
                return Event("begin", at, frame_index)
            return None

        silence = len(self.window) - self.count
        if silence >= self.cfg.end_count:
            assert self.begin is not None
            at = max(frame_index + 1 - self.cfg.M_end, self.begin + 1)
            self.prev_end = at
            self.begin = None
            self.mode = Mode.SILENCE
            self._reset(self.cfg.N)
            return Event("end", at, frame_index)
        return None


def push_flag(st: EndpointState, flag: int, frame_index: int) -> Event | None:
    return st.push(flag, frame_index)


def endpoint_segments(flags, cfg: EndpointConfig = EndpointConfig()) -> list[tuple[int, int]]:
    """Half-open (begin, end) segments from a flag stream; an open segment ends with the stream."""
    st = EndpointState(cfg)
    out = []
    begin = None
    n = 0
    for n, flag in enumerate(flags, 1):
        ev = st.push(flag, n - 1)
        if ev is None:
            continue
        if ev.kind == "begin":
            begin = ev.at
        else:
            out.append((begin, ev.at))
            begin = None
    if begin is not None:
        out.append((begin, n))
    return out


class RingBuffer:
    """Fixed-capacity frame store; ``written`` is the absolute write pointer."""

    def __init__(self, capacity: int = 1000, frame_size: int = FRAME_HOP, dtype=np.float64):
        if capacity < 1:
            raise ValueError("capacity must be positive")
        self.capacity = capacity
        self.frame_size = frame_size
        self.data = np.zeros((capacity, frame_size), dtype=dtype)
        self.written = 0

    @property
    def write_slot(self) -> int:
        """Slot the next frame goes to, measured from the buffer base."""
        return self.written % self.capacity

    def slot(self, frame_index: int) -> int:
        return frame_index % self.capacity

    def oldest(self) -> int:
        """Absolute index of the oldest frame still held."""
        return max(0, self.written - self.capacity)

    def write_frame(self, samples: np.ndarray) -> None:
        samples = np.asarray(samples)
        if samples.shape != (self.frame_size,):
            raise ValueError(f"frame of shape {samples.shape}, expected ({self.frame_size},)")
        self.data[self.written % self.capacity] = samples
        self.written += 1

    def read_last(self, n: int) -> np.ndarray:
        n = min(n, self.written, self.capacity)
        slots = [(self.written - n + i) % self.capacity for i in range(n)]
        return self.data[slots].reshape(-1)


def write_frame(rb: RingBuffer, samples: np.ndarray) -> RingBuffer:
    rb.write_frame(samples)
    return rb


class Case(Enum):
    INSIDE = "inside"  # segment never wrapped
    PULLED_BACK = "pulled_back"  # wrapped part lies entirely in the traceback
    SPLIT = "split"  # wrapped; two spans
    FLUSH = "flush"  # buffer exhausted before the end was found


@dataclass(frozen=True)
class SegmentSpan:
    spans: tuple[tuple[int, int], ...]  # (slot, length in frames)
    truncated: bool = False
    case: Case = Case.INSIDE

    @property
    def length(self) -> int:
        return sum(n for _, n in self.spans)


def resolve_segment(rb: RingBuffer, p_begin: int, l_segment: int, l_tb: int, ended: bool = True) -> SegmentSpan:
    """Locate the retained part of a segment inside the buffer.

    Args:
        rb: buffer holding the segment; its write slot is the current pointer.
        p_begin: slot of the segment's first frame.
        l_segment: frames accumulated from the begin up to the current pointer.
        l_tb: trailing frames discarded by the end traceback.
        ended: False requests the emergency copy of a full buffer.
    """
    cap = rb.capacity
    if not 0 <= p_begin < cap:
        raise SpanOutOfRange(f"begin slot {p_begin} outside buffer of {cap}")
    if not ended:
        if l_segment < cap:
            raise SegmenterError("emergency copy requested before the buffer is exhausted")
        return SegmentSpan(((p_begin, cap - p_begin), (0, p_begin)), truncated=True, case=Case.FLUSH)
    if l_tb < 0 or l_tb > l_segment:
        raise InvalidTraceback(f"traceback {l_tb} exceeds segment length {l_segment}")
    if l_segment > cap:
        raise SegmenterError(f"segment of {l_segment} frames cannot be held by a buffer of {cap}")
    if p_begin + l_segment <= cap:
        return SegmentSpan(((p_begin, l_segment - l_tb),), case=Case.INSIDE)
    p_t = rb.write_slot  # relative to the buffer base
    if p_t <= l_tb:
        return SegmentSpan(((p_begin, l_segment - l_tb),), case=Case.PULLED_BACK)
    return SegmentSpan(((p_begin, cap - p_begin), (0, p_t - l_tb)), case=Case.SPLIT)


def extract(rb: RingBuffer, span: SegmentSpan) -> np.ndarray:
    parts = []
    for ptr, length in span.spans:
        if length < 0 or not 0 <= ptr < rb.capacity or length > rb.capacity:
            raise SpanOutOfRange(f"span ({ptr}, {length}) outside buffer of {rb.capacity}")
        end = ptr + length
        if end <= rb.capacity:
            parts.append(rb.data[ptr:end])
        else:
            # a single span may still wrap once after pointer arithmetic
            parts.append(rb.data[ptr:])
            parts.append(rb.data[:end - rb.capacity])
    if not parts:
        return np.zeros(0, dtype=rb.data.dtype)
    return np.concatenate(parts).reshape(-1)


@dataclass
class Segment:
    begin: int
    end: int | None = None
    truncated: bool = False
    pieces: list[np.ndarray] = field(default_factory=list)
    spans: list[SegmentSpan] = field(default_factory=list)
    frame_size: int = FRAME_HOP

    @property
    def audio(self) -> np.ndarray:
        """Segment samples; frames copied out by an emergency flush beyond the end are dropped."""
        if not self.pieces:
            return np.zeros(0)
        audio = np.concatenate(self.pieces)
        if self.end is not None:
            audio = audio[:(self.end - self.begin) * self.frame_size]
        return audio


class Segmenter:
    """Couples the endpoint detector with the ring buffer on one frame clock.

    Per frame: store the audio, feed the flag, extract on an end event, and
    copy the buffer away if an open segment has filled it.
    """

    def __init__(self, cfg: EndpointConfig = EndpointConfig(), capacity: int = 1000, frame_size: int = FRAME_HOP):
        self.cfg = cfg
        self.buffer = RingBuffer(capacity, frame_size)
        self.detector = EndpointState(cfg)
        self.current: Segment | None = None
        self._chunk_begin = 0  # first frame not yet copied out of the current segment
        self.events: list[Event] = []

    def _flush_full(self) -> None:
        assert self.current is not None
        rb = self.buffer
        span = resolve_segment(rb, rb.slot(self._chunk_begin), rb.written - self._chunk_begin, 0, ended=False)
        self.current.pieces.append(extract(rb, span))
        self.current.spans.append(span)
        self.current.truncated = True
        self._chunk_begin = rb.written

    def push(self, flag: int, samples: np.ndarray) -> list[Segment]:
        rb = self.buffer
        index = rb.written
        rb.write_frame(samples)
        done = []
        ev = self.detector.push(flag, index, earliest=rb.oldest())
        if ev is not None:
            self.events.append(ev)
            if ev.kind == "begin":
                self.current = Segment(ev.at, frame_size=rb.frame_size)
                self._chunk_begin = ev.at
            else:
                done.append(self._close(ev.at))
        if self.current is not None and rb.written - self._chunk_begin >= rb.capacity:
            self._flush_full()
        return done

    def _close(self, end: int) -> Segment:
        seg = self.current
        assert seg is not None
        rb = self.buffer
        seg.end = end
        l_segment = rb.written - self._chunk_begin
        l_tb = rb.written - end
        if l_segment > 0 and l_tb <= l_segment:
            span = resolve_segment(rb, rb.slot(self._chunk_begin), l_segment, l_tb)
            seg.pieces.append(extract(rb, span))
            seg.spans.append(span)
        self.current = None
        return seg

    def finish(self) -> list[Segment]:
        """Close a segment still open at end of stream, without traceback."""
        if self.current is None:
            return []
        end = self.buffer.written
        self.events.append(Event("end", end, end - 1))
        return [self._close(end)]
