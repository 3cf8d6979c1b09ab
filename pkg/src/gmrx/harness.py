"""Seeded Monte Carlo sweeps: uncoded/coded BER, channel-estimation MSE,
model-mismatch robustness, component-count studies, and the analytic floor.

Reproducibility contract: every trial draws from substreams keyed by
(seed, trial, purpose), so results depend only on the configuration and seed,
never on worker count or scheduling order.  Aggregation walks trials in index
order.  Rows are emitted in a fixed CSV schema (see SweepRow).
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .baselines import (
    MmseConfig,
    analytic_error_floor,
    full_csi_ml_detect,
    genie_detect,
    mmse_detect,
    mmse_estimate,
)
from .channel import (
    ChannelParams,
    FadingTrace,
    PilotPattern,
    gen_clarke,
    gen_gauss_markov,
    gen_symbols,
    simulate_frame,
)
from .detector import DetectorConfig, detect_frame, hard_decisions, pilot_priors
from .ldpc import (
    LLR_CLAMP,
    Schedule,
    SparseParityMatrix,
    code_500_250,
    construct_code,
    encode,
    decode,
    joint_receive,
)
from .streams import substream

__all__ = [
    "ExperimentConfig",
    "SweepRow",
    "wilson_interval",
    "run_uncoded_sweep",
    "run_mse_sweep",
    "run_mismatch_sweep",
    "run_coded_sweep",
    "run_components_sweep",
    "run_floor_curve",
    "write_csv",
    "CSV_HEADER",
]

_Z95 = 1.959963984540054

ALL_RECEIVERS = ("bp", "mmse", "genie", "full_csi")


@dataclass
class ExperimentConfig:
    snr_grid_db: tuple[float, ...]
    sir_db: float = 3.0
    alpha: float = 0.99
    alpha_assumed: float | None = None  # receiver model; None means matched
    channel_kind: str = "gauss_markov"  # or "clarke"
    fd_norm: float = 0.02
    pilot_period: int = 4
    pilot_offset: int = 0
    frame_len: int = 200
    n_rx: int = 2
    cap: int = 8
    trials: int = 100
    seed: int = 0
    receivers: tuple[str, ...] = ALL_RECEIVERS
    schedules: tuple[tuple[int, int], ...] = ((5, 10), (1, 50))
    caps: tuple[int, ...] = (1, 2, 4, 8)
    mmse_window: int | None = None  # default: 2 * pilot_period
    sigma_h2: float = 1.0
    no_interferer: bool = False
    workers: int | None = None  # None: RX_THREADS env or CPU count

    def __post_init__(self):
        self.snr_grid_db = tuple(float(s) for s in self.snr_grid_db)
        if not self.snr_grid_db:
            raise ValueError("SNR grid must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.channel_kind not in ("gauss_markov", "clarke"):
            raise ValueError(f"unknown channel kind {self.channel_kind!r}")
        unknown = set(self.receivers) - set(ALL_RECEIVERS)
        if unknown:
            raise ValueError(f"unknown receivers {sorted(unknown)}")

    def sigma_hp2(self) -> float:
        if self.no_interferer:
            return 0.0
        return self.sigma_h2 / 10.0 ** (self.sir_db / 10.0)

    def params_true(self, snr_db: float) -> ChannelParams:
        return ChannelParams(
            alpha=self.alpha,
            sigma_h2=self.sigma_h2,
            sigma_hp2=self.sigma_hp2(),
            sigma_n2=self.sigma_h2 / 10.0 ** (snr_db / 10.0),
            n_rx=self.n_rx,
        )

    def params_rx(self, snr_db: float) -> ChannelParams:
        alpha_hat = self.alpha if self.alpha_assumed is None else self.alpha_assumed
        return replace(self.params_true(snr_db), alpha=alpha_hat)

    def pattern(self) -> PilotPattern:
        return PilotPattern(self.pilot_period, self.pilot_offset)

    def window(self) -> MmseConfig:
        return MmseConfig(self.mmse_window or 2 * self.pilot_period)


@dataclass
class SweepRow:
    snr_db: float
    sir_db: float
    receiver: str
    metric_name: str
    value: float
    ci95_halfwidth: float
    n_bits_or_frames: int
    seed: int


CSV_HEADER = "snr_db,sir_db,receiver,metric_name,value,ci95_halfwidth,n_bits_or_frames,seed"


def write_csv(rows: list[SweepRow], path) -> None:
    with open(path, "w") as fh:
        fh.write(format_csv(rows))


def format_csv(rows: list[SweepRow]) -> str:
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(
            f"{float(r.snr_db)!r},{float(r.sir_db)!r},{r.receiver},{r.metric_name},"
            f"{float(r.value)!r},{float(r.ci95_halfwidth)!r},{int(r.n_bits_or_frames)},{int(r.seed)}"
        )
    return "\n".join(lines) + "\n"


def wilson_interval(errors: int, total: int) -> tuple[float, float]:
    """95% Wilson score interval for a binomial proportion."""
    if total < 1:
        raise ValueError("need at least one observation")
    z2 = _Z95 * _Z95
    p = errors / total
    denom = 1.0 + z2 / total
    center = (p + z2 / (2 * total)) / denom
    half = _Z95 * np.sqrt(p * (1 - p) / total + z2 / (4 * total * total)) / denom
    return float(max(0.0, center - half)), float(min(1.0, center + half))


def _ber_row(cfg, snr_db, receiver, errors, total, metric="ber") -> SweepRow:
    lo, hi = wilson_interval(errors, total)
    return SweepRow(
        snr_db, cfg.sir_db, receiver, metric, errors / total, (hi - lo) / 2, total, cfg.seed
    )


def _n_workers(cfg: ExperimentConfig) -> int:
    if cfg.workers is not None:
        return max(1, cfg.workers)
    env = os.environ.get("RX_THREADS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def _map_trials(fn, jobs: list, cfg: ExperimentConfig) -> list:
    workers = min(_n_workers(cfg), len(jobs))
    if workers <= 1:
        return [fn(job) for job in jobs]
    chunk = max(1, len(jobs) // (workers * 8))
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, jobs, chunksize=chunk))


def _make_frame(cfg: ExperimentConfig, snr_db: float, trial: int):
    p_true = cfg.params_true(snr_db)
    rng_trace = substream(cfg.seed, trial, "trace")
    if cfg.channel_kind == "gauss_markov":
        trace = gen_gauss_markov(rng_trace, p_true, cfg.frame_len)
    else:
        h = gen_clarke(rng_trace, cfg.fd_norm, p_true.sigma_h2, p_true.n_rx, cfg.frame_len)
        hp = gen_clarke(rng_trace, cfg.fd_norm, p_true.sigma_hp2, p_true.n_rx, cfg.frame_len)
        trace = FadingTrace(h, hp)
    x, pilots = gen_symbols(substream(cfg.seed, trial, "symbols"), cfg.pattern(), cfg.frame_len)
    xp = substream(cfg.seed, trial, "interferer").choice(np.array([-1, 1]), size=cfg.frame_len)
    frame = simulate_frame(
        substream(cfg.seed, trial, "noise"), p_true, trace, x, xp.astype(np.int8), pilots
    )
    return frame, p_true


# ---------------------------------------------------------------------------
# Uncoded BER
# ---------------------------------------------------------------------------


def _uncoded_trial(job):
    cfg, snr_db, trial = job
    frame, p_true = _make_frame(cfg, snr_db, trial)
    p_rx = cfg.params_rx(snr_db)
    data = ~frame.pilots
    truth = frame.x[data]
    out = {"n": int(data.sum())}
    for receiver in cfg.receivers:
        if receiver == "bp":
            det = detect_frame(
                frame.y,
                pilot_priors(frame.pilots),
                DetectorConfig(p_rx, cap=cfg.cap),
                channel_posterior=False,
            )
            decisions = hard_decisions(det.post_x)[data]
        elif receiver == "mmse":
            h_est = mmse_estimate(frame.y, frame.pilots, p_rx, cfg.window())
            decisions = mmse_detect(h_est, frame.y)[data]
        elif receiver == "genie":
            decisions = genie_detect(frame.trace, frame.y, p_true)[0][data]
        else:  # full_csi
            decisions = full_csi_ml_detect(frame.trace, frame.y, p_true)[data]
        out[receiver] = int(np.count_nonzero(decisions != truth))
    return out


def run_uncoded_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Bit error rate of the selected receivers on fresh frames per trial;
    pilot positions are excluded from the count."""
    rows = []
    for snr_db in cfg.snr_grid_db:
        jobs = [(cfg, snr_db, t) for t in range(cfg.trials)]
        results = _map_trials(_uncoded_trial, jobs, cfg)
        total = sum(r["n"] for r in results)
        for receiver in cfg.receivers:
            errors = sum(r[receiver] for r in results)
            rows.append(_ber_row(cfg, snr_db, receiver, errors, total))
    return rows


# ---------------------------------------------------------------------------
# Channel-estimation MSE
# ---------------------------------------------------------------------------


def _mse_trial(job):
    cfg, snr_db, trial = job
    frame, p_true = _make_frame(cfg, snr_db, trial)
    p_rx = cfg.params_rx(snr_db)
    data = ~frame.pilots
    if not data.any():  # all-pilot frames: score every position
        data = ~data
    scale = p_true.n_rx * p_true.sigma_h2
    out = {}
    if "bp" in cfg.receivers:
        det = detect_frame(
            frame.y,
            pilot_priors(frame.pilots),
            DetectorConfig(p_rx, cap=cfg.cap),
            channel_posterior=False,
        )
        err = det.g_mmse[:, : p_true.n_rx] - frame.trace.h
        out["bp"] = float(np.mean(np.sum(np.abs(err[data]) ** 2, axis=1)) / scale)
    if "mmse" in cfg.receivers:
        h_est = mmse_estimate(frame.y, frame.pilots, p_rx, cfg.window())
        err = h_est - frame.trace.h
        out["mmse"] = float(np.mean(np.sum(np.abs(err[data]) ** 2, axis=1)) / scale)
    return out


def run_mse_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Normalized channel-estimation MSE at data positions: squared estimate
    error per antenna divided by sigma_h2, for the mixture detector's
    posterior mean and the pilot-window Wiener estimator."""
    receivers = tuple(r for r in cfg.receivers if r in ("bp", "mmse"))
    rows = []
    for snr_db in cfg.snr_grid_db:
        jobs = [(cfg, snr_db, t) for t in range(cfg.trials)]
        results = _map_trials(_mse_trial, jobs, cfg)
        for receiver in receivers:
            per_trial = np.array([r[receiver] for r in results])
            half = _Z95 * per_trial.std(ddof=1) / np.sqrt(len(per_trial)) if len(per_trial) > 1 else 0.0
            rows.append(
                SweepRow(
                    snr_db, cfg.sir_db, receiver, "nmse", float(per_trial.mean()),
                    float(half), len(per_trial), cfg.seed,
                )
            )
    return rows


# ---------------------------------------------------------------------------
# Model mismatch
# ---------------------------------------------------------------------------


def run_mismatch_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """Uncoded BER with the channel drawn from the configured (possibly
    Clarke) process while the receiver models a Gauss-Markov channel with
    alpha_assumed.  Rows are tagged with the true channel parameter."""
    if cfg.channel_kind == "clarke":
        tag = f"[fd={cfg.fd_norm:g}]"
    else:
        tag = f"[alpha={cfg.alpha:g}]"
    rows = run_uncoded_sweep(cfg)
    return [replace(r, metric_name=r.metric_name + tag) for r in rows]


# ---------------------------------------------------------------------------
# Coded frames
# ---------------------------------------------------------------------------


def _coded_frame(cfg: ExperimentConfig, snr_db: float, trial: int, h: SparseParityMatrix):
    p_true = cfg.params_true(snr_db)
    pattern = cfg.pattern()
    pilots = pattern.mask(cfg.frame_len)
    n_data = int(np.count_nonzero(~pilots))
    if n_data != h.cols:
        raise ValueError(
            f"frame_len {cfg.frame_len} carries {n_data} data symbols; code needs {h.cols}"
        )
    info = substream(cfg.seed, trial, "info").integers(0, 2, size=len(h.info_positions))
    codeword = encode(h, info)
    x = np.ones(cfg.frame_len, dtype=np.int8)
    x[~pilots] = 1 - 2 * codeword
    rng_trace = substream(cfg.seed, trial, "trace")
    if cfg.channel_kind == "gauss_markov":
        trace = gen_gauss_markov(rng_trace, p_true, cfg.frame_len)
    else:
        hh = gen_clarke(rng_trace, cfg.fd_norm, p_true.sigma_h2, p_true.n_rx, cfg.frame_len)
        hp = gen_clarke(rng_trace, cfg.fd_norm, p_true.sigma_hp2, p_true.n_rx, cfg.frame_len)
        trace = FadingTrace(hh, hp)
    xp = substream(cfg.seed, trial, "interferer").choice(np.array([-1, 1]), size=cfg.frame_len)
    frame = simulate_frame(
        substream(cfg.seed, trial, "noise"), p_true, trace, x, xp.astype(np.int8), pilots
    )
    return frame, info, p_true


def _coded_trial(job):
    cfg, snr_db, trial, h = job
    frame, info, p_true = _coded_frame(cfg, snr_db, trial, h)
    p_rx = cfg.params_rx(snr_db)
    out = {}
    for i_det, i_dec in cfg.schedules:
        res = joint_receive(
            frame.y, frame.pilots, h, DetectorConfig(p_rx, cap=cfg.cap), Schedule(i_det, i_dec)
        )
        bit_errs = int(np.count_nonzero(res.info_bits != info))
        out[f"bp_{i_det}x{i_dec}"] = (bit_errs, int(bit_errs > 0))
    # Conventional baseline: Wiener estimate, interference as noise, decode once.
    h_est = mmse_estimate(frame.y, frame.pilots, p_rx, cfg.window())
    soft = 4.0 * np.sum(h_est.conj() * frame.y, axis=1).real
    noise_var = p_rx.sigma_hp2 + p_rx.sigma_n2
    llr = np.clip(soft[~frame.pilots] / max(noise_var, 1e-30), -LLR_CLAMP, LLR_CLAMP)
    total_iters = max(i_det * i_dec for i_det, i_dec in cfg.schedules)
    llr_post, _, _ = decode(h, llr, total_iters)
    bits = (llr_post < 0).astype(np.int8)
    bit_errs = int(np.count_nonzero(bits[h.info_positions] != info))
    out["mmse_sep"] = (bit_errs, int(bit_errs > 0))
    return out


def run_coded_sweep(cfg: ExperimentConfig, h: SparseParityMatrix | None = None) -> list[SweepRow]:
    """Frame and info-bit error rates of the joint schedules and of the
    conventional estimate-then-decode baseline, one codeword per frame."""
    if h is None:
        h = construct_code(cfg.seed, code_500_250())
    rows = []
    k = len(h.info_positions)
    for snr_db in cfg.snr_grid_db:
        jobs = [(cfg, snr_db, t, h) for t in range(cfg.trials)]
        results = _map_trials(_coded_trial, jobs, cfg)
        for name in list(results[0]):
            bit_errors = sum(r[name][0] for r in results)
            frame_errors = sum(r[name][1] for r in results)
            rows.append(_ber_row(cfg, snr_db, name, frame_errors, cfg.trials, metric="fer"))
            rows.append(_ber_row(cfg, snr_db, name, bit_errors, cfg.trials * k, metric="ber"))
    return rows


# ---------------------------------------------------------------------------
# Component count
# ---------------------------------------------------------------------------


def _components_trial(job):
    cfg, snr_db, trial = job
    frame, _ = _make_frame(cfg, snr_db, trial)
    p_rx = cfg.params_rx(snr_db)
    data = ~frame.pilots
    truth = frame.x[data]
    out = {"n": int(data.sum())}
    for cap in cfg.caps:
        det_cfg = DetectorConfig(p_rx, cap=cap, collapse=(cap == 1))
        det = detect_frame(frame.y, pilot_priors(frame.pilots), det_cfg, channel_posterior=False)
        errs = np.count_nonzero(hard_decisions(det.post_x)[data] != truth)
        out[f"bp_cap{cap}"] = int(errs)
    return out


def run_components_sweep(cfg: ExperimentConfig) -> list[SweepRow]:
    """BER versus mixture size; cap 1 uses the moment-matched single
    Gaussian, larger caps keep the heaviest components."""
    rows = []
    for snr_db in cfg.snr_grid_db:
        jobs = [(cfg, snr_db, t) for t in range(cfg.trials)]
        results = _map_trials(_components_trial, jobs, cfg)
        total = sum(r["n"] for r in results)
        for cap in cfg.caps:
            errors = sum(r[f"bp_cap{cap}"] for r in results)
            rows.append(_ber_row(cfg, snr_db, f"bp_cap{cap}", errors, total))
    return rows


# ---------------------------------------------------------------------------
# Analytic floor
# ---------------------------------------------------------------------------


def run_floor_curve(cfg: ExperimentConfig) -> list[SweepRow]:
    """Closed-form genie error floor on the SNR grid; no simulation."""
    rows = []
    for snr_db in cfg.snr_grid_db:
        value = analytic_error_floor(cfg.params_true(snr_db))
        rows.append(
            SweepRow(snr_db, cfg.sir_db, "genie_floor", "ber_floor", value, 0.0, 0, cfg.seed)
        )
    return rows
