"""WebRTC-style subband GMM detector with online adaptation.

Each of the six subbands carries a two-component speech mixture and a
two-component noise mixture over the band log energy. The per-band
log-likelihood ratios drive a two-threshold decision; after every frame the
noise and speech models take gradient-style steps gated by the (fused)
decision and scaled by class responsibilities, and the noise means are
anchored to a slow-rise / fast-fall minimum tracker.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence, TextIO

import numpy as np

N_BANDS = 6
VAR_FLOOR = 1e-4
MIX_FLOOR = 1e-300
_LOG_MIX_FLOOR = math.log(MIX_FLOOR)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
DB_PER_NEPER = 10.0 / math.log(10.0)


@dataclass(frozen=True)
class GmmCoeffs:
    K_dn: float = 0.02  # noise mean step
    K_ds: float = 0.2  # speech mean step
    C_dn: float = 0.1  # noise std step
    C_ds: float = 0.1  # speech std step
    K_L: float = 0.6  # pull of noise means toward the minimum tracker
    min_rise: float = 0.99  # tracker weight on itself when the feature is above it
    min_fall: float = 0.20  # tracker weight on itself when the feature is below it


@dataclass(frozen=True)
class GmmConfig:
    T_tau: float = 3.0
    T_a: float = 1.5
    weights: tuple[float, ...] = (1 / 6,) * 6
    coeffs: GmmCoeffs = GmmCoeffs()
    var_floor: float = VAR_FLOOR
    bootstrap_frames: int = 20
    # Initial offsets and variance are in natural-log feature units and are
    # multiplied by feature_scale (feature_scale**2 for the variance).
    init_offset: float = 0.1
    speech_offset: float = 4.0
    init_var: float = 1.0
    llr_mode: str = "exact"  # or "approx": the exponent-only approximation
    feature_scale: float = DB_PER_NEPER  # natural-log band energies -> model units
    min_std: float = 3.0  # model units; 0 leaves only var_floor
    min_target: str = "noise_mean"  # minimum tracker blend target, or "feature"

    def __post_init__(self) -> None:
        w = np.asarray(self.weights, dtype=np.float64)
        if w.shape != (N_BANDS,) or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError(f"subband weights must be 6 non-negative values summing to 1, got {self.weights}")
        if not (math.isfinite(self.T_tau) and math.isfinite(self.T_a)):
            raise ValueError("thresholds must be finite")
        if self.llr_mode not in ("exact", "approx"):
            raise ValueError(f"unknown llr_mode {self.llr_mode!r}")
        if not self.feature_scale > 0:
            raise ValueError("feature_scale must be positive")
        if self.min_std < 0:
            raise ValueError("min_std must be non-negative")
        if self.min_target not in ("noise_mean", "feature"):
            raise ValueError(f"unknown min_target {self.min_target!r}")


@dataclass
class GaussComponent:
    mean: float
    var: float


@dataclass
class SubbandModel:
    speech: tuple[GaussComponent, GaussComponent]
    noise: tuple[GaussComponent, GaussComponent]
    x_min: float
    k: float = 1 / 6


class ClassLikelihoods(NamedTuple):
    """Per-frame class likelihoods; when log values are known they are kept for stable normalization."""

    p_h0: float
    p_h1: float
    log_h0: float | None = None
    log_h1: float | None = None

    def normalized(self) -> "ClassLikelihoods":
        if self.log_h0 is not None and self.log_h1 is not None:
            hi = max(self.log_h0, self.log_h1)
            a = math.exp(self.log_h0 - hi)
            b = math.exp(self.log_h1 - hi)
        else:
            a, b = self.p_h0, self.p_h1
        s = a + b
        if s <= 0.0 or not math.isfinite(s):
            return ClassLikelihoods(0.5, 0.5)
        return ClassLikelihoods(a / s, b / s)


def responsibility(lik: ClassLikelihoods) -> tuple[float, float]:
    """(noise, speech) responsibilities; 0.5 each when both likelihoods vanish."""
    s = lik.p_h0 + lik.p_h1
    if s <= 0.0:
        return 0.5, 0.5
    return lik.p_h0 / s, lik.p_h1 / s


@dataclass
class GmmState:
    """Array form of the six subband models.

    ``speech_mean`` etc. have shape (6, 2): band by mixture component.
    """

    speech_mean: np.ndarray
    speech_var: np.ndarray
    noise_mean: np.ndarray
    noise_var: np.ndarray
    x_min: np.ndarray
    cfg: GmmConfig = field(default_factory=GmmConfig)

    @property
    def k(self) -> np.ndarray:
        return np.asarray(self.cfg.weights, dtype=np.float64)

    @classmethod
    def from_bootstrap(cls, rows: np.ndarray, cfg: GmmConfig = GmmConfig()) -> "GmmState":
        """Warm start from frames (already in model units) assumed to be non-speech."""
        rows = np.atleast_2d(np.asarray(rows, dtype=np.float64))
        mu = rows.mean(axis=0)
        c = cfg.feature_scale
        off = np.array([-cfg.init_offset, cfg.init_offset]) * c
        noise_mean = mu[:, None] + off[None, :]
        var = max(cfg.init_var * c * c, cfg.var_floor)
        return cls(
            speech_mean=noise_mean + cfg.speech_offset * c,
            speech_var=np.full((N_BANDS, 2), var),
            noise_mean=noise_mean,
            noise_var=np.full((N_BANDS, 2), var),
            x_min=mu.copy(),
            cfg=cfg,
        )

    @classmethod
    def from_bands(cls, bands: Sequence[SubbandModel], cfg: GmmConfig | None = None) -> "GmmState":
        if len(bands) != N_BANDS:
            raise ValueError(f"expected {N_BANDS} bands, got {len(bands)}")
        if cfg is None:
            cfg = GmmConfig(weights=tuple(float(b.k) for b in bands))
        return cls(
            speech_mean=np.array([[c.mean for c in b.speech] for b in bands], dtype=np.float64),
            speech_var=np.array([[c.var for c in b.speech] for b in bands], dtype=np.float64),
            noise_mean=np.array([[c.mean for c in b.noise] for b in bands], dtype=np.float64),
            noise_var=np.array([[c.var for c in b.noise] for b in bands], dtype=np.float64),
            x_min=np.array([b.x_min for b in bands], dtype=np.float64),
            cfg=cfg,
        )

    def band(self, i: int) -> SubbandModel:
        return SubbandModel(
            speech=(GaussComponent(float(self.speech_mean[i, 0]), float(self.speech_var[i, 0])),
                    GaussComponent(float(self.speech_mean[i, 1]), float(self.speech_var[i, 1]))),
            noise=(GaussComponent(float(self.noise_mean[i, 0]), float(self.noise_var[i, 0])),
                   GaussComponent(float(self.noise_mean[i, 1]), float(self.noise_var[i, 1]))),
            x_min=float(self.x_min[i]),
            k=float(self.k[i]),
        )

    def copy(self) -> "GmmState":
        return GmmState(self.speech_mean.copy(), self.speech_var.copy(), self.noise_mean.copy(),
                        self.noise_var.copy(), self.x_min.copy(), self.cfg)

    def equals(self, other: "GmmState") -> bool:
        return all(np.array_equal(a, b) for a, b in zip(self._arrays(), other._arrays()))

    def _arrays(self) -> tuple[np.ndarray, ...]:
        return self.speech_mean, self.speech_var, self.noise_mean, self.noise_var, self.x_min

    def dump(self, fh: TextIO) -> None:
        """One line per band: band_i k u_sx var_sx u_sy var_sy u_nx var_nx u_ny var_ny xmin."""
        for i in range(N_BANDS):
            vals = [self.k[i], self.speech_mean[i, 0], self.speech_var[i, 0], self.speech_mean[i, 1],
                    self.speech_var[i, 1], self.noise_mean[i, 0], self.noise_var[i, 0],
                    self.noise_mean[i, 1], self.noise_var[i, 1], self.x_min[i]]
            fh.write(f"{i} " + " ".join(repr(float(v)) for v in vals) + "\n")


def gauss_pdf(x: float, g: GaussComponent) -> float:
    return _INV_SQRT_2PI / math.sqrt(g.var) * math.exp(-((x - g.mean) ** 2) / (2.0 * g.var))


def _mixture(x, means, vars_):
    """0.5/0.5 Gaussian mixture density; broadcasts over leading axes of means."""
    x = np.asarray(x, dtype=np.float64)[..., None]
    dens = _INV_SQRT_2PI / np.sqrt(vars_) * np.exp(-((x - means) ** 2) / (2.0 * vars_))
    return 0.5 * dens.sum(axis=-1)


def _approx_ratio(x, s_mean, s_var, n_mean, n_var):
    x = np.asarray(x, dtype=np.float64)[..., None]
    num = np.exp(-((x - s_mean) ** 2) / s_var).sum(axis=-1)
    den = np.exp(-((x - n_mean) ** 2) / n_var).sum(axis=-1)
    return np.maximum(num, MIX_FLOOR) / np.maximum(den, MIX_FLOOR)


def subband_llr(f: float, m: SubbandModel) -> float:
    sp = 0.5 * gauss_pdf(f, m.speech[0]) + 0.5 * gauss_pdf(f, m.speech[1])
    no = 0.5 * gauss_pdf(f, m.noise[0]) + 0.5 * gauss_pdf(f, m.noise[1])
    return math.log(max(sp, MIX_FLOOR)) - math.log(max(no, MIX_FLOOR))


def band_terms(feats: np.ndarray, s: GmmState) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-band (llr, log speech mixture, log noise mixture)."""
    sp = np.log(np.maximum(_mixture(feats, s.speech_mean, s.speech_var), MIX_FLOOR))
    no = np.log(np.maximum(_mixture(feats, s.noise_mean, s.noise_var), MIX_FLOOR))
    if s.cfg.llr_mode == "approx":
        llr = _approx_ratio(feats, s.speech_mean, s.speech_var, s.noise_mean, s.noise_var)
    else:
        llr = sp - no
    return llr, sp, no


def subband_llrs(feats: np.ndarray, s: GmmState) -> np.ndarray:
    return band_terms(feats, s)[0]


def total_llr(feats: np.ndarray, s: GmmState, weights: np.ndarray | None = None) -> float:
    k = s.k if weights is None else np.asarray(weights, dtype=np.float64)
    return float(np.dot(k, subband_llrs(feats, s)))


def decide_from_llrs(llrs: np.ndarray, k: np.ndarray, T_tau: float, T_a: float) -> tuple[int, float]:
    total = float(np.dot(k, llrs))
    flag = int(bool(np.any(llrs > T_tau)) or total > T_a)
    return flag, total


def _clamped_exp(v: float) -> float:
    return math.exp(min(max(v, -745.0), 709.0))


def gmm_decide(feats: np.ndarray, s: GmmState) -> tuple[int, ClassLikelihoods]:
    flag, lik, _ = gmm_decide_full(feats, s)
    return flag, lik


def gmm_decide_full(feats: np.ndarray, s: GmmState) -> tuple[int, ClassLikelihoods, float]:
    """Decision, class likelihoods (product over bands) and the weighted total LLR."""
    llrs, sp, no = band_terms(feats, s)
    flag, total = decide_from_llrs(llrs, s.k, s.cfg.T_tau, s.cfg.T_a)
    log_h0 = float(no.sum())
    log_h1 = float(sp.sum())
    return flag, ClassLikelihoods(_clamped_exp(log_h0), _clamped_exp(log_h1), log_h0, log_h1), total


def _gradient_step(mean, var, f, gate, k_mean, k_std, r, cfg: GmmConfig):
    std = np.sqrt(var)
    diff = f[:, None] - mean
    grad_u = diff / var
    grad_s = (diff * diff / var - 1.0) / std
    new_mean = mean + gate * k_mean * grad_u * r
    new_std = np.maximum(std + gate * k_std * grad_s * r, max(math.sqrt(cfg.var_floor), cfg.min_std))
    return new_mean, np.maximum(new_std * new_std, cfg.var_floor)


def update_noise(s: GmmState, feats: np.ndarray, fused_flag: int, lik: ClassLikelihoods) -> GmmState:
    """Noise step gated by (1 - flag) plus the unconditional pull toward x_min."""
    c = s.cfg.coeffs
    r, _ = responsibility(lik)
    f = np.asarray(feats, dtype=np.float64)
    mean, var = _gradient_step(s.noise_mean, s.noise_var, f, 1 - fused_flag, c.K_dn, c.C_dn, r, s.cfg)
    s.noise_mean = mean + c.K_L * (s.x_min[:, None] - s.noise_mean)
    s.noise_var = var
    return s


def update_speech(s: GmmState, feats: np.ndarray, fused_flag: int, lik: ClassLikelihoods) -> GmmState:
    c = s.cfg.coeffs
    _, r = responsibility(lik)
    f = np.asarray(feats, dtype=np.float64)
    s.speech_mean, s.speech_var = _gradient_step(s.speech_mean, s.speech_var, f, fused_flag, c.K_ds, c.C_ds, r, s.cfg)
    return s


def min_track(x_min: float, f: float, u_n: float, rise: float = 0.99, fall: float = 0.20) -> float:
    if f > x_min:
        return rise * x_min + (1.0 - rise) * u_n
    if f < x_min:
        return fall * x_min + (1.0 - fall) * u_n
    return x_min


def update_min(m: SubbandModel, f: float, u_n: float | None = None, coeffs: GmmCoeffs = GmmCoeffs()) -> SubbandModel:
    if u_n is None:
        u_n = 0.5 * (m.noise[0].mean + m.noise[1].mean)
    m.x_min = min_track(m.x_min, f, u_n, coeffs.min_rise, coeffs.min_fall)
    return m


def update_min_all(s: GmmState, feats: np.ndarray) -> GmmState:
    """Vectorized minimum tracker over all bands.

    The blend target is the pre-update mean of the two noise components, or
    the scaled feature itself when ``cfg.min_target == "feature"``.
    """
    c = s.cfg.coeffs
    f = np.asarray(feats, dtype=np.float64)
    target = f if s.cfg.min_target == "feature" else s.noise_mean.mean(axis=1)
    rise = c.min_rise * s.x_min + (1.0 - c.min_rise) * target
    fall = c.min_fall * s.x_min + (1.0 - c.min_fall) * target
    s.x_min = np.where(f > s.x_min, rise, np.where(f < s.x_min, fall, s.x_min))
    return s


def adapt(s: GmmState, feats: np.ndarray, flag: int, lik: ClassLikelihoods) -> GmmState:
    """Minimum tracker, then noise, then speech update for one frame."""
    update_min_all(s, feats)
    update_noise(s, feats, flag, lik)
    update_speech(s, feats, flag, lik)
    return s


class GmmDetector:
    """Standalone streaming GMM VAD: its own decision gates its own adaptation.

    The responsibilities of frame n use the normalized class likelihoods of
    frame n-1 (neutral 0.5/0.5 on the first adapted frame).
    """

    def __init__(self, cfg: GmmConfig = GmmConfig()):
        self.cfg = cfg
        self.state: GmmState | None = None
        self._boot: list[np.ndarray] = []
        self._prev = ClassLikelihoods(0.5, 0.5)
        self.frames_seen = 0

    @property
    def ready(self) -> bool:
        return self.state is not None

    def bootstrap(self, feats: np.ndarray) -> bool:
        """Feed a warm-up frame; True once the state has been initialised."""
        self._boot.append(np.asarray(feats, dtype=np.float64))
        self.frames_seen += 1
        if len(self._boot) >= self.cfg.bootstrap_frames:
            self.state = GmmState.from_bootstrap(np.stack(self._boot), self.cfg)
            self._boot = []
        return self.ready

    def step(self, feats: np.ndarray) -> tuple[int, float]:
        feats = np.asarray(feats, dtype=np.float64) * self.cfg.feature_scale
        if self.state is None:
            self.bootstrap(feats)
            return 0, 0.0
        self.frames_seen += 1
        flag, lik, total = gmm_decide_full(feats, self.state)
        adapt(self.state, feats, flag, self._prev)
        self._prev = lik.normalized()
        return flag, total

    def run(self, rows: np.ndarray) -> np.ndarray:
        return np.array([self.step(r)[0] for r in np.atleast_2d(rows)], dtype=np.int8)
