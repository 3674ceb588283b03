"""Command line entry point: ``vadfuse run|train|simulate|eval|calibrate``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from .audio_io import FRAME_HOP, SAMPLE_RATE, AudioError, read_raw_pcm, read_wav, write_wav
from .config import ConfigError, dump_config, load_config
from .dnn import DnnError, init_weights, load_weights, save_weights, train
from .pipeline import Pipeline
from .segmenter import Segment


def _load(args) -> tuple:
    cfg = load_config(getattr(args, "config", None))
    weights = load_weights(args.weights, cfg.train.activation) if getattr(args, "weights", None) else None
    return cfg, weights


def _chunks(args):
    if args.raw:
        src = sys.stdin.buffer if args.wav == "-" else open(args.wav, "rb")
        try:
            yield from read_raw_pcm(src)
        finally:
            if src is not sys.stdin.buffer:
                src.close()
        return
    samples = read_wav(args.wav).samples
    for start in range(0, len(samples), SAMPLE_RATE):
        yield samples[start:start + SAMPLE_RATE]


def segment_row(seg: Segment) -> str:
    hop_s = FRAME_HOP / SAMPLE_RATE
    return f"{seg.begin}\t{seg.end}\t{seg.begin * hop_s:.2f}\t{seg.end * hop_s:.2f}\t{int(seg.truncated)}"


def cmd_run(args) -> int:
    cfg, weights = _load(args)
    pipe = Pipeline(cfg, weights)
    log = None
    if args.decisions_out:
        Path(args.decisions_out).parent.mkdir(parents=True, exist_ok=True)
        log = open(args.decisions_out, "w")
    seg_dir = Path(args.segments_out) if args.segments_out else None
    if seg_dir:
        seg_dir.mkdir(parents=True, exist_ok=True)
    rows = []

    def emit(outputs):
        for o in outputs:
            d = o.decision
            if log and d.frame_index >= 0:
                log.write(json.dumps({"frame": d.frame_index, "dnn": round(d.p_speech, 6),
                                      "gmm_llr": round(d.gmm_llr, 6), "flag": d.flag}) + "\n")
            for seg in o.segments:
                rows.append(segment_row(seg))
                if seg_dir:
                    write_wav(seg_dir / f"segment_{len(rows):04d}.wav", seg.audio)

    try:
        for chunk in _chunks(args):
            emit(pipe.push(chunk))
        emit(pipe.finish())
    finally:
        if log:
            log.close()
    report = "begin_frame\tend_frame\tbegin_sec\tend_sec\ttruncated\n" + "".join(r + "\n" for r in rows)
    if seg_dir:
        (seg_dir / "segments.tsv").write_text(report)
    sys.stdout.write(report)
    return 0


def cmd_train(args) -> int:
    from .harness.corpus import read_train_list, training_arrays

    cfg, _ = _load(args)
    X, T = training_arrays(read_train_list(args.list), cfg)
    t = cfg.train
    w = init_weights(X.shape[1], seed=t.seed, activation=t.activation)
    epochs = t.epochs if args.epochs is None else args.epochs
    w, losses = train(w, X, T, epochs=epochs, lr=t.lr, batch_size=t.batch_size, seed=t.seed)
    save_weights(w, args.out)
    loss = f"final loss {losses[-1]:.4f}" if losses else "untrained"
    print(f"trained on {len(X)} frames; {loss}; wrote {args.out}")
    return 0


def _floats(text: str) -> list[float]:
    return [float(v) for v in text.split(",") if v.strip()]


def cmd_simulate(args) -> int:
    from .harness.corpus import simulate

    noise_files = {}
    for item in args.noise_file or []:
        name, _, path = item.partition("=")
        if not path:
            raise SystemExit(f"--noise-file expects name=path, got {item!r}")
        noise_files[name] = read_wav(path).samples
    noises = [n for n in args.noise.split(",") if n]
    entries = simulate(args.out, _floats(args.snr), noises, args.seed, args.files, args.utts, noise_files)
    print(f"wrote {len(entries)} mixtures to {args.out}")
    return 0


def cmd_eval(args) -> int:
    from .harness.corpus import evaluate_corpus, format_report, load_corpus

    cfg, weights = _load(args)
    text = format_report(evaluate_corpus(load_corpus(args.dir), cfg, weights))
    if args.report:
        Path(args.report).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_calibrate(args) -> int:
    from .harness.corpus import calibration_items, load_corpus
    from .harness.metrics import calibrate_thresholds, grid_product

    cfg, weights = _load(args)
    items = calibration_items(load_corpus(args.dir), cfg, weights)
    grid = grid_product(_floats(args.tau), _floats(args.total))
    cal = calibrate_thresholds(items, grid, _floats(args.dnn) if weights is not None else (), cfg.gmm, cfg.fusion)
    text = (f"# gmm frame accuracy {cal.gmm_accuracy:.4f}; dnn frame accuracy {cal.dnn_accuracy:.4f}\n"
            f"T_tau = {cal.T_tau:g}\nT_a = {cal.T_a:g}\ndnn_threshold = {cal.dnn_threshold:g}\n")
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return 0


def cmd_config(args) -> int:
    cfg, _ = _load(args)
    sys.stdout.write(dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="vadfuse", description="DNN + GMM fused voice activity detection")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="detect speech segments in one file")
    r.add_argument("wav", help="16 kHz mono 16-bit WAV, or raw PCM with --raw ('-' reads stdin)")
    r.add_argument("--weights")
    r.add_argument("--config")
    r.add_argument("--segments-out", help="directory for numbered segment WAVs and segments.tsv")
    r.add_argument("--decisions-out", help="per-frame JSON lines log")
    r.add_argument("--raw", action="store_true", help="input is headerless little-endian 16-bit PCM")
    r.set_defaults(func=cmd_run)

    t = sub.add_parser("train", help="train the DNN from a list of labelled WAVs")
    t.add_argument("list", help="lines of wav[<TAB>labels]")
    t.add_argument("--out", required=True)
    t.add_argument("--config")
    t.add_argument("--epochs", type=int)
    t.set_defaults(func=cmd_train)

    s = sub.add_parser("simulate", help="write a seeded noisy corpus")
    s.add_argument("--out", required=True)
    s.add_argument("--snr", default="5,10,15")
    s.add_argument("--noise", default="wind,water,babble,television")
    s.add_argument("--noise-file", action="append", metavar="NAME=WAV", help="use a recorded noise for NAME")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--files", type=int, default=10)
    s.add_argument("--utts", type=int, default=5, help="utterances per file")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("eval", help="score GMM, DNN and fused detectors on a corpus")
    e.add_argument("dir")
    e.add_argument("--report", help="write the TSV report here as well")
    e.add_argument("--weights")
    e.add_argument("--config")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("calibrate", help="grid-search the GMM and DNN thresholds")
    c.add_argument("dir")
    c.add_argument("--weights")
    c.add_argument("--config")
    c.add_argument("--tau", default="1,1.5,2,2.5,3,3.5,4,5,6")
    c.add_argument("--total", default="0.5,1,1.5,2,2.5,3")
    c.add_argument("--dnn", default="0.3,0.4,0.5,0.6,0.7")
    c.add_argument("--out", help="write the result as a config file")
    c.set_defaults(func=cmd_calibrate)

    k = sub.add_parser("config", help="print the effective configuration")
    k.add_argument("--config")
    k.set_defaults(func=cmd_config)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (AudioError, ConfigError, DnnError, OSError, ValueError) as exc:
        print(f"vadfuse: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
