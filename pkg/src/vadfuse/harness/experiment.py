"""Synthetic version of the noisy-condition comparison of GMM, DNN and fused detectors.

Every condition mixes the same seeded clean files with one noise kind at one
SNR. The DNN is trained on separate clean files mixed with a configurable set
of noises, so a noise kind can be held out to probe mismatch.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from ..audio_io import frame_matrix
from ..config import Config
from ..dnn import DnnWeights, init_weights, train
from ..features import subband_matrix
from ..pipeline import dnn_features, run_all_modes
from ..segmenter import endpoint_segments
from .labels import energy_labels, spans_to_frames
from .metrics import EMPTY_REPORT, EvalReport, evaluate
from .mixing import mix_at_snr
from .synth import NOISE_KINDS, NoiseSpec, synth_noise, synth_speech_file

ALGORITHMS = ("gmm", "dnn", "fused")


@dataclass(frozen=True)
class CleanFile:
    seed: int
    samples: np.ndarray
    labels: np.ndarray
    utterances: list[tuple[int, int]]


def clean_file(seed: int, n_utts: int) -> CleanFile:
    x, spans = synth_speech_file(seed, n_utts=n_utts)
    labels = energy_labels(x)
    return CleanFile(seed, x, labels, spans_to_frames(spans))


def noisy(f: CleanFile, kind: str, snr_db: float, seed: int) -> np.ndarray:
    noise = synth_noise(NoiseSpec(kind, seed), len(f.samples))
    return mix_at_snr(f.samples, noise, snr_db, f.labels)[0]


@dataclass(frozen=True)
class TrainSpec:
    noises: tuple[str, ...] = ("wind", "babble", "television")
    snrs: tuple[float, ...] = (0.0, 5.0, 10.0, 15.0, 20.0)
    n_files: int = 36
    utts_per_file: int = 3
    seed: int = 10_000
    epochs: int = 15
    clean_share: float = 0.1  # fraction of training files left noise-free


def training_set(spec: TrainSpec, cfg: Config = Config()) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    xs, ts = [], []
    for i in range(spec.n_files):
        f = clean_file(spec.seed + i, spec.utts_per_file)
        if rng.random() < spec.clean_share:
            mix = f.samples
        else:
            kind = spec.noises[rng.integers(len(spec.noises))]
            mix = noisy(f, kind, float(rng.choice(spec.snrs)), spec.seed + i)
        X = dnn_features(frame_matrix(mix), cfg)
        xs.append(X.astype(np.float32))
        ts.append(f.labels[:len(X)])
    return np.concatenate(xs), np.concatenate(ts)


def train_dnn(spec: TrainSpec = TrainSpec(), cfg: Config = Config()) -> DnnWeights:
    X, T = training_set(spec, cfg)
    t = cfg.train
    w = init_weights(X.shape[1], seed=t.seed, activation=t.activation)
    w, _ = train(w, X, T, epochs=spec.epochs, lr=t.lr, batch_size=t.batch_size, seed=t.seed)
    return w


@dataclass
class ConditionResult:
    noise: str
    snr: float
    reports: dict[str, EvalReport] = field(default_factory=lambda: {a: EMPTY_REPORT for a in ALGORITHMS})

    def frame_accuracy(self, algo: str) -> float:
        return self.reports[algo].frame_accuracy


def run_condition(files: list[CleanFile], kind: str, snr: float, weights: DnnWeights | None,
                  cfg: Config = Config(), noise_seed: int = 500) -> ConditionResult:
    res = ConditionResult(kind, snr)
    for f in files:
        mix = noisy(f, kind, snr, noise_seed + f.seed)
        flags = run_all_modes(mix, cfg, weights)
        truth = f.labels[:len(flags.fused)]
        for algo in ALGORITHMS:
            dec = getattr(flags, algo)
            rep = evaluate(dec, truth, endpoint_segments(dec, cfg.endpoint), f.utterances)
            res.reports[algo] = res.reports[algo] + rep
    return res


@dataclass
class TrendResult:
    conditions: list[ConditionResult]
    seconds: float
    weights: DnnWeights | None = None

    def table(self) -> str:
        lines = ["noise\tsnr\tgmm\tdnn\tfused\tgmm_utt\tdnn_utt\tfused_utt"]
        for c in self.conditions:
            fa = [f"{100 * c.frame_accuracy(a):.2f}" for a in ALGORITHMS]
            ua = [f"{100 * c.reports[a].utterance_accuracy:.2f}" for a in ALGORITHMS]
            lines.append("\t".join([c.noise, f"{c.snr:g}", *fa, *ua]))
        return "\n".join(lines)


def trend_experiment(n_files: int = 10, utts_per_file: int = 5, snrs=(5.0, 10.0, 15.0), noises=NOISE_KINDS,
                     train_spec: TrainSpec = TrainSpec(), cfg: Config = Config(), seed: int = 0) -> TrendResult:
    """Train a DNN on ``train_spec`` noises, then score all three detectors per (noise, snr)."""
    t0 = time.perf_counter()
    weights = train_dnn(train_spec, cfg)
    files = [clean_file(seed + i, utts_per_file) for i in range(n_files)]
    conditions = [run_condition(files, kind, snr, weights, cfg) for kind in noises for snr in snrs]
    return TrendResult(conditions, time.perf_counter() - t0, weights)


if __name__ == "__main__":
    print(trend_experiment().table())
