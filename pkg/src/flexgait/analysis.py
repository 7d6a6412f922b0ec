"""Gait and entrainment analytics.

Period estimation uses the autocorrelation of the complex pair
z(t) = x(t) + i y(t) built from the leg and knee fast variables.  The score
maximized is the real part of the normalized autocorrelation, i.e. the
realignment of the planar (x, y) orbit with its lagged self; unlike the raw
modulus this is not degenerate for circularly symmetric orbits and peaks at
the full period rather than at half-period echoes.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import gaussian_filter1d
from scipy.signal import fftconvolve, find_peaks
from scipy.stats import t as t_dist

from . import body
from .errors import InsufficientDataError, RankDeficiencyError, ValidationError

GAIT_WALK = "Walk"
GAIT_TROT = "Trot"
GAIT_PACE = "Pace"
GAIT_BOUND = "Bound"
GAIT_UNCLASSIFIED = "Unclassified"

# limb indexing (LF, RF, LH, RH)
_PAIR_CLASSES = {
    (0, 3): GAIT_TROT, (1, 2): GAIT_TROT,       # diagonal pairs
    (0, 2): GAIT_PACE, (1, 3): GAIT_PACE,       # same-side pairs
    (0, 1): GAIT_BOUND, (2, 3): GAIT_BOUND,     # front / back pairs
}

HEIGHT_GATE = 0.75  # mean-height threshold below which a trial is excluded


def passes_height_gate(h_tot: float) -> bool:
    return h_tot >= HEIGHT_GATE


def estimate_period(
    x: np.ndarray,
    y: np.ndarray,
    dt: float,
    min_lag: float = 0.05,
    max_lag: float | None = None,
    prominence: float = 0.05,
    min_height: float = 0.1,
    refine: bool = True,
) -> float | None:
    """Dominant period of the planar signal (x, y), or None when no peak of
    the lagged-realignment score exists in [min_lag, max_lag].

    The score is Re of the mean-subtracted, unbiased-normalized complex
    autocorrelation of z = x + i y.  The default max_lag is half the series
    length; peak candidates need the given prominence and height.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValidationError(f"x and y must be equal-length 1-D series, got {x.shape} and {y.shape}")
    n = x.size
    if max_lag is None:
        max_lag = (n - 1) * dt / 2.0
    if n * dt < 2.0 * max_lag:
        raise InsufficientDataError(
            f"series of {n * dt:.3f}s cannot resolve lags up to {max_lag:.3f}s (needs 2x)"
        )
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y))):
        return None  # diverged trials carry no measurable period
    z = (x - x.mean()) + 1j * (y - y.mean())
    var = np.mean(np.abs(z) ** 2)
    if var <= 0:
        return None
    # r[l] = sum_t conj(z[t]) z[t+l] via FFT
    nfft = 1 << int(np.ceil(np.log2(2 * n)))
    Z = np.fft.fft(z, nfft)
    r = np.fft.ifft(Z * np.conj(Z))[:n]
    lags = np.arange(n)
    score = r.real / (n - lags) / var

    lo = max(int(np.ceil(min_lag / dt)), 1)
    hi = min(int(np.floor(max_lag / dt)), n - 2)
    if hi <= lo:
        return None
    seg = score[lo : hi + 1]
    peaks, _ = find_peaks(seg, prominence=prominence, height=min_height)
    if peaks.size == 0:
        return None
    # near-periodic signals repeat at every multiple of the period, and grid
    # alignment can make a distant multiple score marginally higher; prefer
    # the fundamental, i.e. the smallest lag within 1% of the best peak
    heights = seg[peaks]
    best_score = heights.max()
    best = peaks[heights >= best_score - 0.01 * abs(best_score)][0]
    idx = lo + int(best)
    lag = float(idx)
    if refine and 0 < idx < n - 1:
        y0, y1, y2 = score[idx - 1], score[idx], score[idx + 1]
        denom = y0 - 2 * y1 + y2
        if denom < 0:
            lag += float(np.clip(0.5 * (y0 - y2) / denom, -0.5, 0.5))
    return lag * dt


@dataclass
class CorrelationResult:
    matrix: np.ndarray  # (4, 4), symmetric, zero diagonal
    degenerate: np.ndarray  # (4,) bool, True where a series had zero variance


def interlimb_correlation(leg_outputs: np.ndarray) -> CorrelationResult:
    """Pearson correlations between the four leg-neuron output series.

    Diagonal entries are set to zero; zero-variance series get zero
    correlations and a degeneracy flag."""
    leg_outputs = np.asarray(leg_outputs, dtype=float)
    if leg_outputs.ndim != 2 or leg_outputs.shape[0] != 4:
        raise ValidationError(f"expected (4, m) leg output series, got {leg_outputs.shape}")
    finite = np.isfinite(leg_outputs).all(axis=1)
    leg_outputs = np.where(finite[:, None], leg_outputs, 0.0)
    centered = leg_outputs - leg_outputs.mean(axis=1, keepdims=True)
    var = (centered**2).mean(axis=1)
    degenerate = (var < 1e-18) | ~finite
    corr = np.zeros((4, 4))
    for i in range(4):
        for j in range(i + 1, 4):
            if degenerate[i] or degenerate[j]:
                continue
            c = (centered[i] * centered[j]).mean() / np.sqrt(var[i] * var[j])
            corr[i, j] = corr[j, i] = c
    return CorrelationResult(matrix=corr, degenerate=degenerate)


def classify_gait(
    corr: np.ndarray,
    threshold: float = 0.3,
    degenerate: np.ndarray | None = None,
    rule: str = "threshold",
) -> str:
    """Gait class from the interlimb correlation matrix.

    rule="threshold": Walk when the maximum off-diagonal correlation is below
    the threshold.  rule="all_negative": Walk when every pair is negatively
    correlated.  Otherwise the maximally correlated pair decides: diagonal ->
    Trot, same-side -> Pace, front/back -> Bound."""
    corr = np.asarray(corr, dtype=float)
    if corr.shape != (4, 4):
        raise ValidationError(f"expected a 4x4 correlation matrix, got {corr.shape}")
    if degenerate is not None and np.any(degenerate):
        return GAIT_UNCLASSIFIED
    pairs = list(_PAIR_CLASSES)
    values = np.array([corr[i, j] for i, j in pairs])
    if not np.all(np.isfinite(values)):
        return GAIT_UNCLASSIFIED
    if rule == "threshold":
        if values.max() < threshold:
            return GAIT_WALK
    elif rule == "all_negative":
        if np.all(values < 0.0):
            return GAIT_WALK
    else:
        raise ValidationError(f"unknown walk rule {rule!r}")
    return _PAIR_CLASSES[pairs[int(np.argmax(values))]]


def entrainment_Q(
    t_out: float,
    t_in: float,
    sigma0: float,
    sigma_t: float = 0.1,
    epsilon: float = 0.1,
) -> float:
    """Entrainment quality in (0, 1]: rewards output periods at half-integer
    or integer multiples of the input period, penalized by spontaneous filter
    activity sigma0."""
    if t_in <= 0:
        raise ValidationError(f"t_in must be positive, got {t_in}")
    ratio = 2.0 * t_out / t_in
    mismatch = abs(ratio - np.rint(ratio))
    return float(1.0 / (1.0 + mismatch / epsilon + sigma0 / sigma_t))


def wavelet_sync(
    x: np.ndarray,
    period: float,
    dt: float,
    sigma: float = 1.5,
    smooth: float = 0.5,
    normalize: bool = True,
) -> np.ndarray:
    """Band-limited synchrony trace: modulus of the convolution with a complex
    Morlet wavelet at the probe period, Gaussian smoothed.

    The wavelet is a complex exponential windowed by a Gaussian whose standard
    deviation spans `sigma` cycles of the probe period; `smooth` is the
    standard deviation (seconds) of the post-hoc Gaussian filter.  With
    normalize=True the trace is scaled to a maximum of one (skipped for an
    all-zero signal)."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1:
        raise ValidationError(f"expected 1-D series, got shape {x.shape}")
    s_t = sigma * period
    if x.size * dt < 3.0 * 2.0 * s_t:
        raise InsufficientDataError(
            f"series of {x.size * dt:.2f}s is shorter than 3 wavelet supports ({6 * s_t:.2f}s)"
        )
    half = min(int(round(4.0 * s_t / dt)), x.size // 2)
    t = np.arange(-half, half + 1) * dt
    kernel = np.exp(2j * np.pi * t / period) * np.exp(-0.5 * (t / s_t) ** 2)
    kernel *= dt / (s_t * np.sqrt(2.0 * np.pi))
    mod = np.abs(fftconvolve(x, kernel, mode="same"))
    out = gaussian_filter1d(mod, smooth / dt)
    peak = out.max()
    if normalize and peak > 0:
        out = out / peak
    return out


@dataclass
class GaitMetrics:
    """Summary of one analyzed trial."""

    period: float | None
    corr: np.ndarray
    gait: str
    h_tot: float
    t_tot: float
    excluded: bool  # below the mean-height gate
    q_scores: dict = field(default_factory=dict)


def gait_metrics(result: body.TrialResult, max_lag: float | None = None) -> GaitMetrics:
    """Period, interlimb correlation and gait class from a fully recorded
    trial, measured over the second half of the series."""
    if result.neuron_u is None or len(result.neuron_channels) < 12:
        raise ValidationError("gait_metrics needs a trial recorded with record='full'")
    half = result.neuron_u.shape[0] // 2
    channels = list(result.neuron_channels)
    # limb-major channel layout: interneuron, motor-A, motor-B per limb
    n = len(channels)
    offset = n - 12  # combined filter+CPG networks put the CPG last
    idx_a = [offset + 3 * limb + 1 for limb in range(4)]
    idx_b = [offset + 3 * limb + 2 for limb in range(4)]
    u = result.neuron_u[half:]
    out = result.neuron_out[half:]
    dt = float(result.neuron_t[1] - result.neuron_t[0])
    try:
        period = estimate_period(u[:, idx_a[0]], u[:, idx_b[0]], dt, max_lag=max_lag)
    except InsufficientDataError:
        period = None
    corr_res = interlimb_correlation(out[:, idx_a].T)
    gait = classify_gait(corr_res.matrix, degenerate=corr_res.degenerate)
    h_tot = result.metrics.h_tot
    return GaitMetrics(
        period=period,
        corr=corr_res.matrix,
        gait=gait,
        h_tot=h_tot,
        t_tot=result.metrics.t_tot,
        excluded=not passes_height_gate(h_tot),
    )


@dataclass
class SweepCell:
    i_dc: float
    theta_c: float
    speed: float
    side_speed: float
    height: float
    max_corr: float
    period: float | None
    gait: str
    excluded: bool
    failed: bool


def sweep_heatmap(
    network,
    command,
    morphology,
    i_dc_grid,
    theta_c_grid,
    duration: float = 10.0,
    seed: int = 0,
) -> list[SweepCell]:
    """One constant-parameter trial per grid cell; all cells run in one batch.
    Failed (diverged) cells are recorded with NaN metrics."""
    i_dc_grid = np.atleast_1d(np.asarray(i_dc_grid, dtype=float))
    theta_c_grid = np.atleast_1d(np.asarray(theta_c_grid, dtype=float))
    if i_dc_grid.size == 0 or theta_c_grid.size == 0:
        raise ValidationError("sweep grids must be nonempty")
    cells = [(i, th) for i in i_dc_grid for th in theta_c_grid]
    schedules = [body.constant_schedule(duration, i_dc=i, theta_c=th) for i, th in cells]
    results = []
    for sched, (i_dc, th) in zip(schedules, cells):
        res = body.run_trial(network, command, morphology, sched, seed, record="full")
        m = res.metrics
        if m.fallen:
            results.append(SweepCell(i_dc, th, np.nan, np.nan, np.nan, np.nan, None, GAIT_UNCLASSIFIED, True, True))
            continue
        g = gait_metrics(res)
        dx, dy = m.stage_displacements[0]
        results.append(
            SweepCell(
                i_dc=i_dc,
                theta_c=th,
                speed=dy / duration,
                side_speed=dx / duration,
                height=m.h_tot,
                max_corr=float(g.corr.max()),
                period=g.period,
                gait=g.gait,
                excluded=g.excluded,
                failed=False,
            )
        )
    return results


@dataclass
class OlsResult:
    coef: np.ndarray
    stderr: np.ndarray
    tvalues: np.ndarray
    pvalues: np.ndarray
    residuals: np.ndarray
    df: int


def ols_fit(y: np.ndarray, X: np.ndarray, add_intercept: bool = True) -> OlsResult:
    """Ordinary least squares with classical standard errors.

    Raises RankDeficiencyError naming the collinear columns when the design
    matrix is not full rank (column 0 is the intercept when added)."""
    y = np.asarray(y, dtype=float).ravel()
    X = np.asarray(X, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if add_intercept:
        X = np.column_stack([np.ones(len(X)), X])
    n, p = X.shape
    if n <= p:
        raise ValidationError(f"need more rows ({n}) than columns ({p})")
    if np.linalg.matrix_rank(X) < p:
        _, R = np.linalg.qr(X)
        diag = np.abs(np.diag(R))
        bad = np.flatnonzero(diag < 1e-10 * max(diag.max(), 1.0))
        raise RankDeficiencyError(f"design matrix is rank deficient in columns {bad.tolist()}", columns=bad.tolist())
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    df = n - p
    sigma2 = float(resid @ resid) / df
    cov = sigma2 * np.linalg.inv(X.T @ X)
    se = np.sqrt(np.diag(cov))
    with np.errstate(divide="ignore", invalid="ignore"):
        tvals = np.where(se > 0, beta / se, 0.0)
    pvals = 2.0 * t_dist.sf(np.abs(tvals), df)
    return OlsResult(coef=beta, stderr=se, tvalues=tvals, pvalues=pvals, residuals=resid, df=df)
