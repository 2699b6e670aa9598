"""Measurement harness: error norms, bound and indistinguishability
batteries, a simple statistical detector, and the sweep runner.

Everything here treats the protocol as a black box driven through its
public operations; expected behaviors are checked statistically, with all
randomness derived from explicit seeds so runs replay exactly.
"""

from __future__ import annotations

import csv
import hashlib
import struct
import time
from dataclasses import dataclass
from itertools import product

import numpy as np
from scipy import stats

from .codec import CodecSpec, decode_latent, encode_latent
from .diffusion import BackendSpec, Sample, Schedule
from .errors import ParameterError, ShapeMismatchError
from .keys import STEP_NOISE_TAG, KeySet, NoiseContext, SecretKey, derive_keyset, gaussian_field
from .protocol import (
    CellMap,
    ProtocolParams,
    StegoContainer,
    cover_sample,
    decode_digits,
    encode_digits,
    max_payload_bytes,
    mix,
    pack_message,
    reference_samples,
)

SWEEP_COLUMNS = [
    "kind",
    "trial",
    "d",
    "r",
    "precision",
    "codec",
    "bytes",
    "bit_accuracy",
    "E_sec",
    "E_rec",
    "separation_margin",
    "auc",
    "runtime_ms",
]

DETECTOR_FEATURE_SET = "mean-var-lag1-hfdiff"


def trial_key(seed: int, *indices: int) -> SecretKey:
    """Deterministic per-trial master key; replaces ad-hoc RNG seeding."""
    h = hashlib.blake2b(digest_size=32, person=b"psyd.trial")
    h.update(struct.pack("<q", seed))
    for ix in indices:
        h.update(struct.pack("<q", ix))
    return SecretKey(h.digest())


@dataclass
class TrialRecord:
    d: int
    r: int
    precision: str
    codec: str
    bytes_encoded: int
    bit_accuracy: float
    e_sec: float
    e_rec: float
    separation_margin: float
    runtime_ms: float


@dataclass
class DetectorReport:
    feature_set: str
    auc: float
    ci_low: float
    ci_high: float
    n_cover: int
    n_stego: int


# ---------------------------------------------------------------------------
# Error norms and the security-error bound


def security_error(
    stego_latent: Sample,
    keys: KeySet,
    params: ProtocolParams,
    sched: Schedule,
    spec: BackendSpec,
) -> float:
    """L2 distance between the pre-codec stego latent and the cover sample
    the sync key alone would have produced."""
    if stego_latent.shape != params.cells.sample_shape:
        raise ShapeMismatchError(
            f"stego shape {stego_latent.shape} != configured {params.cells.sample_shape}"
        )
    cover = cover_sample(keys, params, sched, spec)
    delta = stego_latent.values.astype(np.float64) - cover.values.astype(np.float64)
    return float(np.linalg.norm(delta))


@dataclass
class BoundCheckReport:
    ratios: dict[tuple[int, int], float]
    baseline: float
    max_ratio: float
    max_point: tuple[int, int]
    trials: int
    passed: bool


def bound_check(
    sched: Schedule,
    spec: BackendSpec,
    *,
    sample_shape: tuple[int, ...] = (1024,),
    d_values: tuple[int, ...] = (1, 2, 3, 5, 10),
    r_values: tuple[int, ...] = (2, 4),
    trials: int = 30,
    seed: int = 0,
) -> BoundCheckReport:
    """Measure rho(d, r) = mean E_sec / (d * r * sigma_{d+1} * sqrt(n)).

    Passes when the normalized ratio never exceeds 3x its value at the
    (d=1, r=2) anchor, i.e. the security error does not outgrow the stated
    d * r * sigma_{d+1} envelope.
    """
    if trials < 30:
        raise ParameterError("bound check needs at least 30 trials per grid point")
    points = sorted(set(product(d_values, r_values)) | {(1, 2)})
    n = int(np.prod(sample_shape))
    ratios: dict[tuple[int, int], float] = {}
    for d, r in points:
        params = ProtocolParams(
            d=d, r=r, cells=CellMap.unit(sample_shape),
            step_mode=spec.step_mode, precision="f64",
        )
        rng = np.random.default_rng([seed, d, r])
        acc = 0.0
        for i in range(trials):
            keys = derive_keyset(trial_key(seed, d, r, i), r)
            payload = rng.bytes(max_payload_bytes(params))
            message = pack_message(payload, params)
            stego = encode_digits(message, keys, params, sched, spec)
            e_sec = security_error(stego, keys, params, sched, spec)
            acc += e_sec / (d * r * float(sched.sigma[d]) * np.sqrt(n))
        ratios[(d, r)] = acc / trials
    baseline = ratios[(1, 2)]
    max_point = max(ratios, key=ratios.get)
    max_ratio = ratios[max_point]
    return BoundCheckReport(
        ratios=ratios,
        baseline=baseline,
        max_ratio=max_ratio,
        max_point=max_point,
        trials=trials,
        passed=bool(max_ratio <= 3.0 * baseline),
    )


# ---------------------------------------------------------------------------
# Mixed-noise indistinguishability battery


@dataclass
class SecurityTestEntry:
    r: int
    test: str
    p_value: float
    p_corrected: float
    passed: bool


@dataclass
class SecurityTestReport:
    entries: list[SecurityTestEntry]
    n_elements: int
    alpha: float
    passed: bool

    def failing(self) -> list[SecurityTestEntry]:
        return [e for e in self.entries if not e.passed]


def mixed_noise_field(keys: KeySet, r: int, n: int, *, timestep: int = 2, seed: int = 0) -> np.ndarray:
    """Mix(b, [eps_0..eps_{r-1}]) for uniform random digits b."""
    if r > keys.r:
        raise ParameterError(f"key set provides {keys.r} refs, requested r={r}")
    fields = np.stack(
        [
            gaussian_field(NoiseContext(keys.refs[i], timestep, STEP_NOISE_TAG), (n,), "f64")
            for i in range(r)
        ]
    )
    digits = np.random.default_rng([seed, r]).integers(0, r, size=n)
    return fields[digits, np.arange(n)]


def stochastic_security_test(
    keys: KeySet | None = None,
    *,
    n_elements: int = 10**6,
    r_values: tuple[int, ...] = (2, 4),
    seed: int = 0,
    variance_scale: float = 1.0,
    alpha: float = 0.01,
) -> SecurityTestReport:
    """Battery over mixed noise: KS vs standard normal, variance, and lag-1
    autocorrelation, Bonferroni-corrected across all tests run.

    Elementwise selection among independent standard normals is exactly
    standard normal, so a correct implementation passes; variance_scale is
    a fault-injection hook for checking the battery's power.
    """
    if keys is None:
        keys = derive_keyset(trial_key(seed, 0xBA77E), max(r_values))
    m = 3 * len(r_values)
    entries: list[SecurityTestEntry] = []

    def add(r: int, name: str, p: float) -> None:
        p_corr = min(1.0, p * m)
        entries.append(
            SecurityTestEntry(r=r, test=name, p_value=float(p), p_corrected=p_corr,
                              passed=bool(p_corr > alpha))
        )

    for r in r_values:
        x = mixed_noise_field(keys, r, n_elements, seed=seed) * variance_scale
        n = x.size
        add(r, "ks_normal", stats.kstest(x, "norm").pvalue)
        s2 = float(np.var(x, ddof=1))
        chi = (n - 1) * s2
        add(r, "variance", 2.0 * min(stats.chi2.cdf(chi, n - 1), stats.chi2.sf(chi, n - 1)))
        rho = float(np.corrcoef(x[:-1], x[1:])[0, 1])
        add(r, "lag1_autocorr", 2.0 * stats.norm.sf(abs(rho) * np.sqrt(n)))
    return SecurityTestReport(
        entries=entries,
        n_elements=n_elements,
        alpha=alpha,
        passed=all(e.passed for e in entries),
    )


# ---------------------------------------------------------------------------
# Statistical detector (stand-in for learned steganalyzers)


def detector_features(values: np.ndarray) -> np.ndarray:
    """Per-sample features: mean, variance, lag-1 autocorrelation, and
    high-frequency energy from first differences."""
    flat = np.ravel(values).astype(np.float64)
    lag1 = float(np.corrcoef(flat[:-1], flat[1:])[0, 1]) if flat.size > 2 else 0.0
    return np.array(
        [float(flat.mean()), float(flat.var()), lag1, float(np.mean(np.diff(flat) ** 2))]
    )


def _rank_auc(cover_scores: np.ndarray, stego_scores: np.ndarray) -> float:
    """Tie-aware probability that a stego score outranks a cover score."""
    both = np.concatenate([cover_scores, stego_scores])
    ranks = stats.rankdata(both)
    n_c, n_s = len(cover_scores), len(stego_scores)
    u = ranks[n_c:].sum() - n_s * (n_s + 1) / 2.0
    return float(u / (n_c * n_s))


def detector_auc(
    covers: list[StegoContainer],
    stegos: list[StegoContainer],
    *,
    n_boot: int = 1000,
    seed: int = 0,
) -> DetectorReport:
    """Fisher-discriminant ranking fit on half the data, AUC on the rest.

    Requires balanced sets of at least 100 samples each; reports a 95%
    bootstrap confidence interval so chance-level detection (AUC 0.5) is a
    checkable claim rather than a point estimate.
    """
    if len(covers) != len(stegos):
        raise ParameterError("detector needs balanced cover/stego sets")
    if len(covers) < 100:
        raise ParameterError("detector needs at least 100 samples per class")
    f_cover = np.stack([detector_features(c.values) for c in covers])
    f_stego = np.stack([detector_features(s.values) for s in stegos])
    train_c, test_c = f_cover[0::2], f_cover[1::2]
    train_s, test_s = f_stego[0::2], f_stego[1::2]
    pooled = np.cov(np.vstack([train_c, train_s]).T) + 1e-12 * np.eye(f_cover.shape[1])
    w = np.linalg.pinv(pooled) @ (train_s.mean(axis=0) - train_c.mean(axis=0))
    sc, ss = test_c @ w, test_s @ w
    auc = _rank_auc(sc, ss)
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        boots[b] = _rank_auc(
            rng.choice(sc, size=len(sc), replace=True),
            rng.choice(ss, size=len(ss), replace=True),
        )
    lo, hi = np.percentile(boots, [2.5, 97.5])
    return DetectorReport(
        feature_set=DETECTOR_FEATURE_SET,
        auc=auc,
        ci_low=float(lo),
        ci_high=float(hi),
        n_cover=len(covers),
        n_stego=len(stegos),
    )


# ---------------------------------------------------------------------------
# Trials and the sweep harness


@dataclass(frozen=True)
class SweepPoint:
    d: int
    r: int
    precision: str
    codec: str


@dataclass(frozen=True)
class SweepGrid:
    d_values: tuple[int, ...] = (1,)
    r_values: tuple[int, ...] = (2,)
    precisions: tuple[str, ...] = ("f64",)
    codecs: tuple[str, ...] = ("identity",)

    def points(self) -> list[SweepPoint]:
        return [
            SweepPoint(d, r, p, c)
            for d, r, p, c in product(self.d_values, self.r_values, self.precisions, self.codecs)
        ]


def _message_bits(digits: np.ndarray, bpd: int) -> np.ndarray:
    shifts = np.arange(bpd - 1, -1, -1, dtype=np.int64)
    return ((digits[:, None] >> shifts) & 1).reshape(-1)


def run_trial(
    point: SweepPoint,
    trial: int,
    *,
    sample_shape: tuple[int, ...],
    sched: Schedule,
    backend: BackendSpec,
    final_step_key_mode: str = "sync",
    cell_shape: tuple[int, ...] | None = None,
    seed: int = 0,
    keep_container: bool = False,
) -> tuple[TrialRecord, StegoContainer | None]:
    """One encode -> channel -> decode pass with fresh keys and payload."""
    cells = CellMap(sample_shape, cell_shape) if cell_shape else CellMap.unit(sample_shape)
    params = ProtocolParams(
        d=point.d, r=point.r, cells=cells,
        final_step_key_mode=final_step_key_mode,
        step_mode=backend.step_mode, precision=point.precision,
    )
    codec = CodecSpec.parse(point.codec)
    # keys and payload depend only on (seed, d, r, trial): trials at different
    # precisions or codec levels share trajectories, so those comparisons pair up
    keys = derive_keyset(trial_key(seed, point.d, point.r, trial), point.r)
    rng = np.random.default_rng([seed, point.d, point.r, trial])
    payload = rng.bytes(max_payload_bytes(params))

    t0 = time.perf_counter()
    message = pack_message(payload, params)
    stego_latent = encode_digits(message, keys, params, sched, backend)
    container = StegoContainer.from_sample(decode_latent(stego_latent, codec))
    received = encode_latent(container.to_sample(), codec)
    references = reference_samples(keys, params, sched, backend)
    decoded, margins = decode_digits(received, references, params.cells)
    runtime_ms = 1000.0 * (time.perf_counter() - t0)

    bits_true = _message_bits(message.digits, params.bits_per_digit)
    bits_seen = _message_bits(decoded.digits & ((1 << params.bits_per_digit) - 1),
                              params.bits_per_digit)
    accuracy = float(np.mean(bits_true == bits_seen))
    e_rec = float(
        np.linalg.norm(
            received.values.astype(np.float64)
            - mix(message, references, params.cells).values.astype(np.float64)
        )
    )
    e_sec = security_error(stego_latent, keys, params, sched, backend)
    record = TrialRecord(
        d=point.d,
        r=point.r,
        precision=point.precision,
        codec=point.codec,
        bytes_encoded=len(payload),
        bit_accuracy=accuracy,
        e_sec=e_sec,
        e_rec=e_rec,
        separation_margin=float(np.median(margins)),
        runtime_ms=runtime_ms,
    )
    return record, (container if keep_container else None)


def run_point(
    point: SweepPoint,
    trials: int,
    **kwargs,
) -> list[TrialRecord]:
    """All trials for one grid point (containers discarded)."""
    return [run_trial(point, i, **kwargs)[0] for i in range(trials)]


def _aggregate(records: list[TrialRecord]) -> dict:
    return {
        "bytes": float(np.mean([r.bytes_encoded for r in records])),
        "bit_accuracy": float(np.mean([r.bit_accuracy for r in records])),
        "E_sec": float(np.mean([r.e_sec for r in records])),
        "E_rec": float(np.mean([r.e_rec for r in records])),
        "separation_margin": float(np.mean([r.separation_margin for r in records])),
        "runtime_ms": float(np.mean([r.runtime_ms for r in records])),
    }


def run_sweep(
    grid: SweepGrid,
    trials: int,
    out_path: str,
    *,
    sample_shape: tuple[int, ...],
    sched: Schedule,
    backend: BackendSpec,
    final_step_key_mode: str = "sync",
    cell_shape: tuple[int, ...] | None = None,
    seed: int = 0,
    include_auc: bool = False,
) -> list[dict]:
    """Run the grid, write one CSV row per trial plus one aggregate row per
    point, and return the aggregates.

    Row order is deterministic: grid points in declaration order, trials in
    index order, aggregate after its point's trials.
    """
    if trials < 1:
        raise ParameterError("sweep needs at least one trial per grid point")
    points = grid.points()
    if not points:
        raise ParameterError("sweep grid is empty")
    aggregates: list[dict] = []
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(SWEEP_COLUMNS)
        for p_ix, point in enumerate(points):
            records: list[TrialRecord] = []
            containers: list[StegoContainer] = []
            for i in range(trials):
                record, container = run_trial(
                    point, i,
                    sample_shape=sample_shape, sched=sched, backend=backend,
                    final_step_key_mode=final_step_key_mode, cell_shape=cell_shape,
                    seed=seed, keep_container=include_auc,
                )
                records.append(record)
                if container is not None:
                    containers.append(container)
                try:
                    writer.writerow(
                        ["trial", i, point.d, point.r, point.precision, point.codec,
                         record.bytes_encoded, f"{record.bit_accuracy:.6f}",
                         f"{record.e_sec:.6g}", f"{record.e_rec:.6g}",
                         f"{record.separation_margin:.6g}", "", f"{record.runtime_ms:.3f}"]
                    )
                except OSError as exc:
                    raise OSError(
                        f"writing {out_path} at grid point {p_ix} "
                        f"(d={point.d}, r={point.r}, {point.precision}, "
                        f"{point.codec}), trial {i}: {exc}"
                    ) from exc
            agg = _aggregate(records)
            auc_text = ""
            if include_auc:
                covers = _cover_containers(
                    len(containers), point, sample_shape=sample_shape, sched=sched,
                    backend=backend, codec=CodecSpec.parse(point.codec), seed=seed,
                )
                report = detector_auc(covers, containers, seed=seed)
                agg["auc"] = report.auc
                auc_text = f"{report.auc:.4f}"
            writer.writerow(
                ["aggregate", "", point.d, point.r, point.precision, point.codec,
                 f"{agg['bytes']:.1f}", f"{agg['bit_accuracy']:.6f}",
                 f"{agg['E_sec']:.6g}", f"{agg['E_rec']:.6g}",
                 f"{agg['separation_margin']:.6g}", auc_text, f"{agg['runtime_ms']:.3f}"]
            )
            agg.update(d=point.d, r=point.r, precision=point.precision, codec=point.codec,
                       grid_index=p_ix, trials=trials)
            aggregates.append(agg)
    return aggregates


def _cover_containers(
    count: int,
    point: SweepPoint,
    *,
    sample_shape: tuple[int, ...],
    sched: Schedule,
    backend: BackendSpec,
    codec: CodecSpec,
    seed: int,
) -> list[StegoContainer]:
    """Plain generative outputs matching a grid point's channel settings."""
    covers = []
    params = ProtocolParams(
        d=point.d, r=point.r, cells=CellMap.unit(sample_shape),
        step_mode=backend.step_mode, precision=point.precision,
    )
    for i in range(count):
        keys = derive_keyset(trial_key(seed, 0xC0FE, point.d, point.r, i), point.r)
        sample = cover_sample(keys, params, sched, backend)
        covers.append(StegoContainer.from_sample(decode_latent(sample, codec)))
    return covers


# ---------------------------------------------------------------------------
# Small statistics helpers shared by tests and the verify command


def bootstrap_mean_ci(
    values: np.ndarray,
    *,
    n_boot: int = 2000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float]:
    values = np.asarray(values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    draws = rng.choice(values, size=(n_boot, values.size), replace=True).mean(axis=1)
    lo, hi = np.percentile(draws, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(lo), float(hi)


def mean_diff_ci(
    xs: np.ndarray,
    ys: np.ndarray,
    *,
    n_boot: int = 2000,
    alpha: float = 0.05,
    seed: int = 0,
) -> tuple[float, float, float]:
    """Bootstrap CI for mean(ys) - mean(xs); used by the trend checks."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    rng = np.random.default_rng(seed)
    bx = rng.choice(xs, size=(n_boot, xs.size), replace=True).mean(axis=1)
    by = rng.choice(ys, size=(n_boot, ys.size), replace=True).mean(axis=1)
    diffs = by - bx
    lo, hi = np.percentile(diffs, [100 * alpha / 2, 100 * (1 - alpha / 2)])
    return float(ys.mean() - xs.mean()), float(lo), float(hi)
