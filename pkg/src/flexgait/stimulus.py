"""Rhythmic impulse trains, low-pass preprocessing, and the filter-to-CPG wiring.

The filter layer is a 6-neuron network with purely inhibitory internal
connections and no brain-stem coupling.  Its outputs reach the CPG through
rectifying links with threshold tau0 followed by a 6x4 weight matrix, one
column per limb interneuron, so a resting filter injects nothing.
"""

from __future__ import annotations

from dataclasses import dataclass
import numpy as np
from scipy.signal import lfilter

from . import neuro
from .errors import ConfigurationError, ValidationError

FILTER_SIZE = 6
N_CPG_TARGETS = 4
TAU0 = 0.15

# fixed filter neuron constants (everything except the evolved bias c and the
# low-pass time constant)
FILTER_NEURON_CONSTANTS = dict(t0=0.052, gamma=0.03, a=2.0, b=0.3, kappa=4.0, u0=1.0, d=0.0)


@dataclass(frozen=True)
class StimulusTrain:
    """Impulse train description: evenly spaced impulses at the base period
    with every fourth impulse missing, optionally jittered."""

    period: float
    duration: float
    jitter_sd: float = 0.0  # fraction of the period
    amplitude: float = 1.0
    drop_every: int = 4
    seed: int = 0

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigurationError(f"period must be positive, got {self.period}")
        if self.jitter_sd < 0:
            raise ConfigurationError(f"jitter_sd must be nonnegative, got {self.jitter_sd}")


def generate_train(train: StimulusTrain) -> np.ndarray:
    """Impulse times in [0, duration).  Nominal times k*T with indices
    k = 3 (mod drop_every) removed, then Gaussian timing noise, clipped to
    the trial window."""
    k = np.arange(int(np.ceil(train.duration / train.period)) + 1)
    k = k[k * train.period < train.duration]
    if train.drop_every:
        k = k[(k % train.drop_every) != train.drop_every - 1]
    times = k * train.period
    if train.jitter_sd > 0:
        rng = np.random.default_rng(train.seed)
        times = times + rng.normal(0.0, train.jitter_sd * train.period, times.shape)
        times = np.clip(times, 0.0, np.nextafter(train.duration, 0.0))
    return times


def lowpass_signal(
    impulse_times: np.ndarray,
    time_constant: float,
    dt: float = neuro.DT_CPG,
    duration: float | None = None,
    amplitude: float = 1.0,
) -> np.ndarray:
    """Sample the exponentially low-passed impulse train at the network step.

    Each impulse adds `amplitude` to the state at the nearest step; between
    impulses the state decays with the given time constant.
    """
    if time_constant <= 0:
        raise ConfigurationError(f"time_constant must be positive, got {time_constant}")
    impulse_times = np.asarray(impulse_times, dtype=float)
    if duration is None:
        duration = float(impulse_times.max()) + 5.0 * time_constant if impulse_times.size else 0.0
    n = int(round(duration / dt))
    out = np.zeros(n)
    if n == 0:
        return out
    kick = np.zeros(n)
    idx = np.rint(impulse_times / dt).astype(int)
    idx = idx[(idx >= 0) & (idx < n)]
    np.add.at(kick, idx, amplitude)
    decay = np.exp(-dt / time_constant)
    # the recursion level[i] = decay * level[i-1] + kick[i] as an IIR filter
    out[:] = lfilter([1.0], [1.0, -decay], kick)
    return out


@dataclass
class FilterWiring:
    """Evolvable filter quantities: input weights G, inhibitory internal
    weights, output matrix M, shared bias and the input low-pass constant."""

    G: np.ndarray  # (6,)
    w: np.ndarray  # (6, 6), all <= 0, zero diagonal
    M: np.ndarray  # (6, 4)
    c: float
    lowpass_tc: float
    tau0: float = TAU0

    def __post_init__(self):
        self.G = np.asarray(self.G, dtype=float)
        self.w = np.asarray(self.w, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        if self.G.shape != (FILTER_SIZE,):
            raise ConfigurationError(f"G shape {self.G.shape}, expected ({FILTER_SIZE},)")
        if self.w.shape != (FILTER_SIZE, FILTER_SIZE):
            raise ConfigurationError(f"w shape {self.w.shape}, expected ({FILTER_SIZE}, {FILTER_SIZE})")
        if self.M.shape != (FILTER_SIZE, N_CPG_TARGETS):
            raise ConfigurationError(f"M shape {self.M.shape}, expected ({FILTER_SIZE}, {N_CPG_TARGETS})")
        if np.any(np.diag(self.w) != 0.0):
            raise ConfigurationError("filter weight matrix must have zero diagonal")
        if np.any(self.w > 0.0):
            raise ConfigurationError("filter internal weights must be inhibitory (<= 0)")
        if self.tau0 <= 0:
            raise ConfigurationError("tau0 must be positive")

    def to_dict(self) -> dict:
        return {
            "G": self.G.tolist(),
            "w": self.w.tolist(),
            "M": self.M.tolist(),
            "c": self.c,
            "lowpass_tc": self.lowpass_tc,
            "tau0": self.tau0,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FilterWiring":
        return cls(
            G=data["G"], w=data["w"], M=data["M"], c=data["c"],
            lowpass_tc=data["lowpass_tc"], tau0=data.get("tau0", TAU0),
        )


def build_filter_spec(wiring: FilterWiring) -> neuro.NetworkSpec:
    """The 6-neuron filter module as a standalone network."""
    neurons = [neuro.NeuronParams(c=wiring.c, G=float(wiring.G[i]), **FILTER_NEURON_CONSTANTS) for i in range(FILTER_SIZE)]
    roles = (neuro.ROLE_FILTER,) * FILTER_SIZE
    return neuro.NetworkSpec(neurons, wiring.w, roles=roles)


def combine_with_cpg(cpg_spec: neuro.NetworkSpec, wiring: FilterWiring) -> neuro.NetworkSpec:
    """Stack the filter on top of a CPG: one 18-neuron network where filter
    outputs reach the four limb interneurons through thresholded rectifying
    links weighted by M.  There are no connections back into the filter."""
    targets = cpg_spec.interneuron_indices()
    if len(targets) != N_CPG_TARGETS:
        raise ConfigurationError(f"CPG spec exposes {len(targets)} interneurons, expected {N_CPG_TARGETS}")
    nf, nc = FILTER_SIZE, cpg_spec.n
    n = nf + nc
    params = {}
    fspec = build_filter_spec(wiring)
    for name in ("t0", "gamma", "a", "b", "kappa", "u0", "c", "d", "G"):
        params[name] = np.concatenate([getattr(fspec, name), getattr(cpg_spec, name)])
    w = np.zeros((n, n))
    w[:nf, :nf] = wiring.w
    w[nf:, nf:] = cpg_spec.w
    tau = np.zeros((n, n))
    tau[nf:, nf:] = cpg_spec.tau
    for t_idx, cpg_i in enumerate(targets):
        w[nf + cpg_i, :nf] = wiring.M[:, t_idx]
        tau[nf + cpg_i, :nf] = wiring.tau0
    roles = fspec.roles + cpg_spec.roles
    return neuro.NetworkSpec(params, w, tau, roles)


def filter_to_cpg_currents(u_filter: np.ndarray, wiring: FilterWiring) -> np.ndarray:
    """Currents delivered to the four limb interneurons: M^T h(u_f - tau0)."""
    u_filter = np.asarray(u_filter, dtype=float)
    if u_filter.shape != (FILTER_SIZE,):
        raise ConfigurationError(f"expected {FILTER_SIZE} filter outputs, got shape {u_filter.shape}")
    return wiring.M.T @ neuro.rectify(u_filter - wiring.tau0)


def measure_sigma0(
    wiring: FilterWiring,
    seed: int = 0,
    settle: float = 5.0,
    window: float = 10.0,
    dt: float = neuro.DT_CPG,
) -> float:
    """Mean per-neuron standard deviation of the filter outputs with no input,
    measured over `window` seconds after `settle` seconds of settling."""
    spec = build_filter_spec(wiring)
    rng = np.random.default_rng(seed)
    state = neuro.random_state(spec.n, rng)
    trace = neuro.simulate(spec, None, settle + window, dt=dt, state=state)
    keep = trace.t > settle
    return float(trace.out[keep].std(axis=0).mean())


def save_train(times: np.ndarray, path) -> None:
    """Write impulse times (seconds) one per line, sorted."""
    with open(path, "w") as f:
        for t in np.sort(np.asarray(times, dtype=float)):
            f.write(f"{float(t)!r}\n")


def load_train(path) -> np.ndarray:
    """Read impulse times; rejects unsorted, negative or non-finite entries."""
    with open(path) as f:
        try:
            times = np.array([float(line) for line in f if line.strip()], dtype=float)
        except ValueError as e:
            raise ValidationError(f"unparseable impulse time in {path}: {e}") from None
    if times.size and not np.all(np.isfinite(times)):
        raise ValidationError(f"non-finite impulse time in {path}")
    if np.any(np.diff(times) < 0):
        idx = int(np.flatnonzero(np.diff(times) < 0)[0]) + 1
        raise ValidationError(f"impulse times not sorted at line {idx + 1}", index=idx)
    if times.size and times[0] < 0:
        raise ValidationError("impulse times must be nonnegative", index=0)
    return times
