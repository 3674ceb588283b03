"""On-disk corpora: simulated noisy sets, training lists and their label files.

A simulated corpus is a directory with ``manifest.tsv`` and, per mixture, a
WAV file, a frame label TSV (``frame<TAB>label``) and an utterance
annotation TSV (``start_sec<TAB>end_sec<TAB>class``).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..audio_io import FRAME_HOP, SAMPLE_RATE, frame_matrix, num_frames, read_wav, write_wav
from ..config import Config
from ..dnn import DnnWeights, forward_batch
from ..features import subband_matrix
from ..pipeline import dnn_features, run_all_modes
from ..segmenter import endpoint_segments
from .experiment import ALGORITHMS, clean_file
from .labels import SPEECH_CLASSES, read_annotations, read_labels, refine_segment_labels, spans_to_frames, write_labels
from .metrics import EMPTY_REPORT, UTTERANCE_TOLERANCE, CalibrationItem, EvalReport, evaluate
from .mixing import mix_at_snr
from .synth import NoiseSpec, synth_noise

MANIFEST = "manifest.tsv"
LABEL_SUFFIX = ".labels.tsv"
ANNOTATION_SUFFIX = ".segments.tsv"
HOP_S = FRAME_HOP / SAMPLE_RATE


class CorpusError(ValueError):
    pass


@dataclass(frozen=True)
class Entry:
    wav: Path
    labels: Path
    annotations: Path | None = None
    noise: str = "-"
    snr: str = "-"


def _sidecar(wav: Path, suffix: str) -> Path:
    return wav.with_name(wav.stem + suffix)


def simulate(out: str | Path, snrs: Sequence[float], noises: Sequence[str], seed: int = 0, n_files: int = 10,
             utts_per_file: int = 5, noise_files: dict[str, np.ndarray] | None = None) -> list[Entry]:
    """Mix seeded synthetic speech with each noise at each SNR and write the corpus.

    ``noise_files`` maps a noise name to recorded samples that replace the
    synthetic generator of that name (or add a new name).
    """
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    noise_files = noise_files or {}
    entries = []
    for i in range(n_files):
        f = clean_file(seed + i, utts_per_file)
        for kind in noises:
            for snr in snrs:
                sub = out / f"{kind}_{snr:g}dB"
                sub.mkdir(exist_ok=True)
                wav = sub / f"utt{seed + i:05d}.wav"
                if kind in noise_files:
                    noise = noise_files[kind]
                else:
                    noise = synth_noise(NoiseSpec(kind, seed + 500 + i), len(f.samples))
                write_wav(wav, mix_at_snr(f.samples, noise, snr, f.labels)[0])
                labels = _sidecar(wav, LABEL_SUFFIX)
                with open(labels, "w") as fh:
                    write_labels(fh, f.labels)
                ann = _sidecar(wav, ANNOTATION_SUFFIX)
                with open(ann, "w") as fh:
                    for b, e in f.utterances:
                        fh.write(f"{b * HOP_S:.2f}\t{e * HOP_S:.2f}\tspeech\n")
                entries.append(Entry(wav, labels, ann, kind, f"{snr:g}"))
    write_manifest(out, entries)
    return entries


def write_manifest(root: Path, entries: Iterable[Entry]) -> None:
    with open(root / MANIFEST, "w", newline="") as fh:
        w = csv.writer(fh, delimiter="\t", lineterminator="\n")
        w.writerow(["wav", "labels", "annotations", "noise", "snr"])
        for e in entries:
            ann = e.annotations.relative_to(root).as_posix() if e.annotations else ""
            w.writerow([e.wav.relative_to(root).as_posix(), e.labels.relative_to(root).as_posix(), ann, e.noise, e.snr])


def load_corpus(root: str | Path) -> list[Entry]:
    """Entries from ``manifest.tsv``, or every WAV with a label sidecar when there is none."""
    root = Path(root)
    if not root.is_dir():
        raise CorpusError(f"{root} is not a directory")
    manifest = root / MANIFEST
    if manifest.exists():
        with open(manifest, newline="") as fh:
            rows = list(csv.DictReader(fh, delimiter="\t"))
        return [Entry(root / r["wav"], root / r["labels"], root / r["annotations"] if r["annotations"] else None,
                      r["noise"], r["snr"]) for r in rows]
    entries = []
    for wav in sorted(root.rglob("*.wav")):
        labels = _sidecar(wav, LABEL_SUFFIX)
        if labels.exists():
            ann = _sidecar(wav, ANNOTATION_SUFFIX)
            entries.append(Entry(wav, labels, ann if ann.exists() else None))
    if not entries:
        raise CorpusError(f"no labelled WAV files under {root}")
    return entries


def load_labels(path: str | Path, n_frames: int) -> np.ndarray:
    """Frame labels from a ``frame<TAB>label`` file or expanded from an annotation file."""
    with open(path) as fh:
        first = next((ln for ln in fh if ln.strip() and not ln.startswith("#")), "")
    with open(path) as fh:
        if len(first.rstrip("\n").split("\t")) >= 3:
            labels = refine_segment_labels(read_annotations(fh), n_frames)
        else:
            labels = read_labels(fh)
    if len(labels) < n_frames:
        labels = np.concatenate([labels, np.zeros(n_frames - len(labels))])
    return labels[:n_frames]


def read_train_list(path: str | Path) -> list[tuple[Path, Path]]:
    """Lines of ``wav[<TAB>labels]``; a missing labels column means the ``.labels.tsv`` sidecar."""
    base = Path(path).parent
    pairs = []
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            cols = line.split("\t")
            wav = base / cols[0]
            pairs.append((wav, base / cols[1] if len(cols) > 1 else _sidecar(wav, LABEL_SUFFIX)))
    return pairs


def training_arrays(pairs: Sequence[tuple[Path, Path]], cfg: Config = Config()) -> tuple[np.ndarray, np.ndarray]:
    xs, ts = [], []
    for wav, lab in pairs:
        windows = frame_matrix(read_wav(wav).samples)
        X = dnn_features(windows, cfg)
        xs.append(X.astype(np.float32))
        ts.append(load_labels(lab, len(X)))
    if not xs:
        raise CorpusError("training list is empty")
    return np.concatenate(xs), np.concatenate(ts)


def _reference(entry: Entry) -> list[tuple[int, int]] | None:
    if entry.annotations is None:
        return None
    with open(entry.annotations) as fh:
        spans = [(a, b) for a, b, cls in read_annotations(fh) if cls.strip().lower() in SPEECH_CLASSES]
    return spans_to_frames(spans)


def evaluate_corpus(entries: Sequence[Entry], cfg: Config = Config(), weights: DnnWeights | None = None,
                    tolerance: int = UTTERANCE_TOLERANCE) -> dict[tuple[str, str, str], EvalReport]:
    """Pooled reports keyed by (noise, snr, algorithm)."""
    reports: dict[tuple[str, str, str], EvalReport] = {}
    for e in entries:
        samples = read_wav(e.wav).samples
        flags = run_all_modes(samples, cfg, weights)
        truth = load_labels(e.labels, len(flags.fused))
        ref = _reference(e)
        for algo in ALGORITHMS:
            dec = getattr(flags, algo)
            rep = evaluate(dec, truth, endpoint_segments(dec, cfg.endpoint), ref, tolerance)
            key = (e.noise, e.snr, algo)
            reports[key] = reports.get(key, EMPTY_REPORT) + rep
    return reports


def format_report(reports: dict[tuple[str, str, str], EvalReport], tolerance: int = UTTERANCE_TOLERANCE) -> str:
    lines = [f"# frame accuracy excludes 0.5 labels; utterance tolerance +-{tolerance} frames",
             "snr\tnoise\talgorithm\tframe_accuracy\tutterance_accuracy\tn_scored\tn_correct\tn_utterances\tn_detected"]
    for (noise, snr, algo), r in sorted(reports.items()):
        lines.append(f"{snr}\t{noise}\t{algo}\t{r.frame_accuracy:.4f}\t{r.utterance_accuracy:.4f}\t"
                     f"{r.n_scored}\t{r.n_correct}\t{r.n_utterances}\t{r.n_detected}")
    return "\n".join(lines) + "\n"


def calibration_items(entries: Sequence[Entry], cfg: Config = Config(),
                      weights: DnnWeights | None = None) -> list[CalibrationItem]:
    items = []
    for e in entries:
        windows = frame_matrix(read_wav(e.wav).samples)
        if len(windows) == 0:
            continue
        p = forward_batch(weights, dnn_features(windows, cfg))[:, 0] if weights is not None else None
        items.append(CalibrationItem(subband_matrix(windows), load_labels(e.labels, len(windows)), p))
    return items


def total_frames(entries: Sequence[Entry]) -> int:
    return sum(num_frames(len(read_wav(e.wav).samples)) for e in entries)
