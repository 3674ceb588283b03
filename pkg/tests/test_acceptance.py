"""Acceptance criteria 1-9, each at its stated tolerance.

Every test records one PASS/FAIL line, printed in the terminal summary.
"""

import math
import subprocess
import sys
import time
from collections import Counter

import numpy as np
import pytest

from conftest import ACCEPTANCE
from gradcheck import random_problem, relative_errors
from segmenter_oracle import oracle_segments, random_episode
import gmm_oracle

from vadfuse.audio_io import frame_matrix, write_wav
from vadfuse.dnn import DnnPosterior, init_weights, save_weights, to_float32
from vadfuse.features import (
    FEAT_DIM,
    N_MELS,
    cmn_batch,
    deltas,
    fbank_matrix,
    splice,
    subband_matrix,
)
from vadfuse.fusion import FusionConfig, fuse_flags, smooth_likelihoods
from vadfuse.gmm import ClassLikelihoods, GmmConfig, GmmState, adapt, gmm_decide_full
from vadfuse.harness.experiment import clean_file, noisy, trend_experiment
from vadfuse.pipeline import Pipeline
from vadfuse.segmenter import EndpointConfig, Segmenter


def record(n: int, ok: bool, detail: str) -> None:
    ACCEPTANCE[n] = f"criterion {n}: {'PASS' if ok else 'FAIL'}  {detail}"
    assert ok, detail


def test_1_flag_fusion_truth_table():
    table = {(d, g): fuse_flags(d, g) for d in (0, 1) for g in (0, 1)}
    record(1, table == {(0, 0): 0, (0, 1): 1, (1, 0): 1, (1, 1): 1}, f"{table}")


def test_2_likelihood_blend():
    rng = np.random.default_rng(2)
    cfg = FusionConfig(0.1, 0.8)
    worst_formula = worst_sum = 0.0
    for _ in range(100):
        p, q = rng.random(2)
        out = smooth_likelihoods(DnnPosterior(p, 1 - p), ClassLikelihoods(q, 1 - q), cfg)
        h0 = 0.1 * (1 - p) + 0.9 * q
        h1 = 0.8 * p + 0.2 * (1 - q)
        worst_formula = max(worst_formula, abs(out.p_h0 - h0 / (h0 + h1)), abs(out.p_h1 - h1 / (h0 + h1)))
        worst_sum = max(worst_sum, abs(out.p_h0 + out.p_h1 - 1))
    record(2, worst_formula <= 1e-12 and worst_sum <= 1e-9,
           f"max formula error {worst_formula:.1e}, max |sum-1| {worst_sum:.1e}")


def test_3_gmm_update_oracle():
    rng = np.random.default_rng(3)
    cfg = GmmConfig(feature_scale=1.0, min_std=0.0)
    nm = rng.normal(0, 2, (6, 2))
    s = GmmState(nm + 4.0, rng.uniform(0.5, 3, (6, 2)), nm, rng.uniform(0.5, 3, (6, 2)), nm.mean(axis=1), cfg)
    ref = {"sm": s.speech_mean.tolist(), "sv": s.speech_var.tolist(), "nm": s.noise_mean.tolist(),
           "nv": s.noise_var.tolist(), "xmin": s.x_min.tolist()}
    worst, min_var, flag_mismatch = 0.0, math.inf, 0
    prev = (0.5, 0.5)
    for _ in range(10_000):
        f = rng.normal(0, 2, 6) + 4.0 * (rng.random() < 0.4)
        flag, _, _ = gmm_decide_full(f, s)
        oflag, l0, l1 = gmm_oracle.decide(ref, f.tolist(), cfg.T_tau, cfg.T_a)
        flag_mismatch += flag != oflag
        adapt(s, f, oflag, ClassLikelihoods(*prev))
        gmm_oracle.step(ref, f.tolist(), oflag, *prev)
        hi = max(l0, l1)
        a, b = math.exp(l0 - hi), math.exp(l1 - hi)
        prev = (a / (a + b), b / (a + b))
        for mine, theirs in ((s.noise_mean, "nm"), (s.noise_var, "nv"), (s.speech_mean, "sm"),
                             (s.speech_var, "sv")):
            worst = max(worst, float(np.max(np.abs(mine - np.array(ref[theirs])))))
        worst = max(worst, float(np.max(np.abs(s.x_min - np.array(ref["xmin"])))))
        min_var = min(min_var, s.noise_var.min(), s.speech_var.min())
    record(3, worst <= 1e-12 and min_var >= 1e-4 and flag_mismatch == 0,
           f"max |module - oracle| {worst:.1e}, min variance {min_var:.2e}, flag mismatches {flag_mismatch}")


def test_4_segmenter_oracle():
    rng = np.random.default_rng(4)
    t0 = time.perf_counter()
    cases, mismatches = Counter(), 0
    for _ in range(10_000):
        params, flags = random_episode(rng)
        cap = params.pop("capacity")
        audio = np.arange(2 * len(flags), dtype=np.float64)
        seg = Segmenter(EndpointConfig(**params), cap, 2)
        got = []
        for i, f in enumerate(flags):
            got += seg.push(f, audio[2 * i:2 * i + 2])
        got += seg.finish()
        expected = oracle_segments(flags, audio, capacity=cap, frame_size=2, **params)
        same = len(got) == len(expected) and all(
            (g.begin, g.end, g.truncated) == e[:3] and np.array_equal(g.audio, e[3]) for g, e in zip(got, expected))
        mismatches += not same
        cases.update(span.case.name for g in got for span in g.spans)
    elapsed = time.perf_counter() - t0
    record(4, mismatches == 0 and min(cases.values()) >= 100 and len(cases) == 4 and elapsed < 60,
           f"mismatches {mismatches}, case counts {dict(cases)}, {elapsed:.1f} s")


def test_5_gradient_check():
    rng = np.random.default_rng(5)
    worst = 0.0
    for _ in range(10):
        d, h, n = (int(v) for v in rng.integers([2, 1, 2], [60, 40, 32]))
        w, X, T = random_problem(rng, d, h, n)
        worst = max(worst, float(relative_errors(w, X, T, 50, rng).max()))
    record(5, worst < 1e-4, f"max relative error {worst:.1e} over 10 shapes x 50 coordinates")


def test_6_feature_invariants():
    rng = np.random.default_rng(6)
    windows = frame_matrix(rng.normal(0, 0.1, 16000))
    fb, sb = fbank_matrix(windows), subband_matrix(windows)
    dims = (fb.shape[1], sb.shape[1], deltas(fb).shape[1], splice(deltas(fb), 5, 5).shape[1])
    c = 3.7
    shift = max(np.max(np.abs(fbank_matrix(c * windows) - fb - 2 * math.log(c))),
                np.max(np.abs(subband_matrix(c * windows) - sb - 2 * math.log(c))))
    const = deltas(np.tile(rng.normal(size=N_MELS), (50, 1)))[:, N_MELS:]
    cmn_mean = np.max(np.abs(cmn_batch(deltas(fb)).mean(axis=0)))
    ok = (dims == (29, 6, FEAT_DIM, 87 * 11) and shift <= 1e-6 and np.all(const == 0.0) and cmn_mean <= 1e-9)
    record(6, bool(ok), f"dims {dims}, scale shift error {shift:.1e}, constant deltas max "
                        f"{np.abs(const).max():.1e}, CMN mean {cmn_mean:.1e}")


@pytest.mark.slow
def test_7_trend_reproduction():
    res = trend_experiment()
    wins, violations, lines = 0, [], []
    for c in res.conditions:
        g, d, f = (c.frame_accuracy(a) for a in ("gmm", "dnn", "fused"))
        wins += f > g and f > d
        if f < max(g, d) - 0.01:
            violations.append(f"{c.noise}@{c.snr:g}")
        lines.append(f"{c.noise}@{c.snr:g} {g:.4f}/{d:.4f}/{f:.4f}")
    water5 = next(c for c in res.conditions if c.noise == "water" and c.snr == 5)
    inverted = water5.frame_accuracy("dnn") < water5.frame_accuracy("gmm")
    n_utts = min(c.reports["fused"].n_utterances for c in res.conditions)
    print("\n".join(lines))
    ok = not violations and wins >= 6 and inverted and n_utts >= 50 and res.seconds < 600
    record(7, ok, f"(a) wins {wins}/12, violations {violations or 'none'}; (b) water 5 dB dnn "
                  f"{water5.frame_accuracy('dnn'):.4f} vs gmm {water5.frame_accuracy('gmm'):.4f}; "
                  f"{n_utts} utterances/condition; {res.seconds:.0f} s")


def test_8_cli_determinism(tmp_path):
    f = clean_file(8, 4)
    wav = tmp_path / "in.wav"
    write_wav(wav, noisy(f, "television", 10.0, 508))
    weights = tmp_path / "w.bin"
    save_weights(to_float32(init_weights(957, seed=8)), weights)
    outputs = []
    for run in ("a", "b"):
        d = tmp_path / run
        subprocess.run([sys.executable, "-m", "vadfuse.cli", "run", str(wav), "--weights", str(weights),
                        "--decisions-out", str(d / "log.jsonl"), "--segments-out", str(d / "segs")],
                       check=True, capture_output=True)
        files = sorted(p for p in d.rglob("*") if p.is_file())
        outputs.append({p.relative_to(d).as_posix(): p.read_bytes() for p in files})
    n_wavs = sum(k.endswith(".wav") for k in outputs[0])
    record(8, outputs[0] == outputs[1] and n_wavs > 0,
           f"{len(outputs[0])} files compared ({n_wavs} segment WAVs), identical={outputs[0] == outputs[1]}")


def test_9_throughput():
    rng = np.random.default_rng(9)
    x = noisy(clean_file(9, 1), "babble", 10.0, 509)
    x = np.resize(x, 60 * 16000) + rng.normal(0, 1e-4, 60 * 16000)
    pipe = Pipeline(weights=to_float32(init_weights(957, seed=9)))
    t0 = time.perf_counter()
    for start in range(0, len(x), 1600):
        pipe.push(x[start:start + 1600])
    pipe.finish()
    elapsed = time.perf_counter() - t0
    record(9, elapsed < 2.0, f"60 s of audio in {elapsed:.2f} s")
