"""Networks of two-variable rate neurons with fixed-step explicit integration.

Two step rules are provided: the classic linear-recovery neuron and the
modified neuron whose recovery term is gated by a falling sigmoid, which makes
the firing rate sensitive to tonic drive.  All stepping math is written
batch-first (leading axis = independent network instances); the public
single-network operations wrap batch size 1 so that results are bit-identical
whether a network is simulated alone or inside a vectorized batch.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError, IntegrationBlowupError

DT_CPG = 0.008  # s, network integration step
T0_DEFAULT = 0.052  # s, membrane time constant (fixed, not evolved)

ROLE_INTERNEURON = "interneuron"
ROLE_MOTOR_A = "motor-A"
ROLE_MOTOR_B = "motor-B"
ROLE_FILTER = "filter"

LIMBS = ("LF", "RF", "LH", "RH")
NEURONS_PER_LIMB = 3  # interneuron, motor-A (leg), motor-B (knee)
CPG_SIZE = len(LIMBS) * NEURONS_PER_LIMB

# left-right limb swap on the 12 CPG neurons (LF<->RF, LH<->RH)
MIRROR_PERMUTATION = np.array([3, 4, 5, 0, 1, 2, 9, 10, 11, 6, 7, 8])

_PARAM_FIELDS = ("t0", "gamma", "a", "b", "kappa", "u0", "c", "d", "G")

SPEC_SCHEMA_VERSION = 1


def rectify(x):
    """Rectified linear output h(u)."""
    return np.maximum(x, 0.0)


def deactivation(x):
    """Falling sigmoid S(x) = 1 / (1 + exp(x)) used to gate the recovery term."""
    return 1.0 / (1.0 + np.exp(x))


@dataclass(frozen=True)
class NeuronParams:
    """Parameters of a single neuron.

    t0: membrane time constant (s); gamma: recovery decay; a: adaptation gain;
    b: recovery gain; kappa: deactivation sharpness; u0: deactivation midpoint;
    c: constant offset; d: brain-stem coupling; G: external-input sensitivity.
    """

    t0: float = T0_DEFAULT
    gamma: float = 0.03
    a: float = 2.0
    b: float = 0.3
    kappa: float = 4.0
    u0: float = 1.0
    c: float = 0.0
    d: float = 0.0
    G: float = 0.0

    def __post_init__(self):
        if self.t0 <= 0:
            raise ConfigurationError(f"t0 must be positive, got {self.t0}")


class NetworkSpec:
    """Immutable description of a neuron network: per-neuron parameters plus
    connection weights ``w[i, j]`` and thresholds ``tau[i, j]`` for the link
    from neuron j to neuron i."""

    def __init__(self, params, w, tau=None, roles=None):
        if isinstance(params, dict):
            n = len(np.asarray(params["t0"], dtype=float))
            for name in _PARAM_FIELDS:
                arr = np.asarray(params[name], dtype=float)
                if arr.shape != (n,):
                    raise ConfigurationError(f"parameter array {name} has shape {arr.shape}, expected ({n},)")
                setattr(self, name, arr)
        else:
            neurons = list(params)
            n = len(neurons)
            for name in _PARAM_FIELDS:
                setattr(self, name, np.array([getattr(p, name) for p in neurons], dtype=float))
        self.n = n
        self.w = np.array(w, dtype=float)
        if self.w.shape != (n, n):
            raise ConfigurationError(f"weight matrix shape {self.w.shape} does not match n={n}")
        if tau is None:
            self.tau = np.zeros((n, n))
        else:
            self.tau = np.array(tau, dtype=float)
            if self.tau.shape != (n, n):
                raise ConfigurationError(f"threshold matrix shape {self.tau.shape} does not match n={n}")
        self.roles = tuple(roles) if roles is not None else tuple([ROLE_INTERNEURON] * n)
        if len(self.roles) != n:
            raise ConfigurationError(f"{len(self.roles)} role labels for {n} neurons")
        if np.any(np.diag(self.w) != 0.0):
            raise ConfigurationError("self-connections are not allowed (nonzero w diagonal)")
        for name in ("w", "tau"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise ConfigurationError(f"non-finite entries in {name}")

    def neuron(self, i: int) -> NeuronParams:
        return NeuronParams(**{name: float(getattr(self, name)[i]) for name in _PARAM_FIELDS})

    def param_arrays(self) -> dict:
        return {name: getattr(self, name) for name in _PARAM_FIELDS}

    def motor_indices(self):
        """(A indices, B indices) in the order the motor neurons appear (limb order)."""
        idx_a = np.array([i for i, r in enumerate(self.roles) if r == ROLE_MOTOR_A])
        idx_b = np.array([i for i, r in enumerate(self.roles) if r == ROLE_MOTOR_B])
        return idx_a, idx_b

    def interneuron_indices(self):
        return np.array([i for i, r in enumerate(self.roles) if r == ROLE_INTERNEURON])

    def to_dict(self) -> dict:
        return {
            "schema_version": SPEC_SCHEMA_VERSION,
            "n": self.n,
            "params": {name: getattr(self, name).tolist() for name in _PARAM_FIELDS},
            "w": self.w.tolist(),
            "tau": self.tau.tolist(),
            "roles": list(self.roles),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "NetworkSpec":
        if data.get("schema_version") != SPEC_SCHEMA_VERSION:
            raise ConfigurationError(f"unsupported network schema version {data.get('schema_version')}")
        return cls(data["params"], data["w"], data["tau"], data["roles"])

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "NetworkSpec":
        return cls.from_dict(json.loads(text))


@dataclass
class NetworkState:
    """Fast variable u, slow variable v, and the simulation clock."""

    u: np.ndarray
    v: np.ndarray
    t: float = 0.0

    def copy(self) -> "NetworkState":
        return NetworkState(self.u.copy(), self.v.copy(), self.t)


def zero_state(n: int) -> NetworkState:
    return NetworkState(np.zeros(n), np.zeros(n), 0.0)


def random_state(n: int, rng: np.random.Generator) -> NetworkState:
    """u uniform in [0, 1), v = 0: the conventional start before burn-in."""
    return NetworkState(rng.uniform(0.0, 1.0, n), np.zeros(n), 0.0)


@dataclass
class StepInput:
    """External drive for one step: shared tonic drive, shared scalar input and
    per-neuron feedback currents."""

    i_dc: float = 0.0
    i_ext: float = 0.0
    i_fb: np.ndarray | None = None


# ---------------------------------------------------------------------------
# batched stepping core: u, v have shape (B, n); w, tau have shape (B, n, n)
# or (n, n) shared across the batch.


def _synaptic_batch(w, tau, tau_is_zero, G, u, i_ext, i_fb):
    # accumulate over source neurons in a fixed sequential order: exactly-zero
    # contributions (zero weight, or a thresholded link whose rectifier is
    # closed) then leave the sum bit-identical, so a quiescent attached module
    # does not perturb downstream trajectories at all
    syn = G * np.asarray(i_ext)[..., None]
    if i_fb is not None:
        syn = syn + i_fb
    syn = np.broadcast_to(syn, u.shape).copy()
    n = u.shape[-1]
    if tau_is_zero:
        h = rectify(u)
        for j in range(n):
            syn += w[..., :, j] * h[..., j, None]
    else:
        for j in range(n):
            syn += w[..., :, j] * rectify(u[..., j, None] - tau[..., :, j])
    return syn


def _step_batch(u, v, dt, p, w, tau, tau_is_zero, i_dc, i_ext, i_fb, classic):
    syn = _synaptic_batch(w, tau, tau_is_zero, p["G"], u, i_ext, i_fb)
    drive = p["c"] + p["d"] * np.asarray(i_dc)[..., None] + syn
    if classic:
        du = -u - p["a"] * v + drive
    else:
        du = -u - p["a"] * deactivation(p["kappa"] * (u - p["u0"])) * v + drive
    dv = -p["gamma"] * v + p["b"] * rectify(u)
    scale = dt / p["t0"]
    return u + scale * du, v + scale * dv


def _check_state(spec, state):
    n = spec.n
    if state.u.shape != (n,) or state.v.shape != (n,):
        raise ConfigurationError(f"state shape {state.u.shape} does not match network size {n}")


def _resolve_input(spec, inp):
    if inp is None:
        inp = StepInput()
    i_fb = inp.i_fb
    if i_fb is not None:
        i_fb = np.asarray(i_fb, dtype=float)
        if i_fb.shape != (spec.n,):
            raise ConfigurationError(f"feedback vector shape {i_fb.shape} does not match network size {spec.n}")
    return inp.i_dc, inp.i_ext, i_fb


def synaptic_input(spec: NetworkSpec, state: NetworkState, inp: StepInput | None = None) -> np.ndarray:
    """Per-neuron input current: G_i * I_ext + I_fb_i + sum_j w_ij h(u_j - tau_ij)."""
    _check_state(spec, state)
    i_dc, i_ext, i_fb = _resolve_input(spec, inp)
    tau_is_zero = not np.any(spec.tau)
    fb = None if i_fb is None else i_fb[None, :]
    return _synaptic_batch(
        spec.w[None], spec.tau[None], tau_is_zero, spec.G[None], state.u[None], np.array([i_ext]), fb
    )[0]


def _step(spec, state, inp, dt, classic):
    if dt <= 0:
        raise ConfigurationError(f"dt must be positive, got {dt}")
    _check_state(spec, state)
    i_dc, i_ext, i_fb = _resolve_input(spec, inp)
    tau_is_zero = not np.any(spec.tau)
    fb = None if i_fb is None else i_fb[None, :]
    p = {k: v[None, :] for k, v in spec.param_arrays().items()}
    with np.errstate(over="ignore", invalid="ignore", under="ignore"):
        u, v = _step_batch(
            state.u[None], state.v[None], dt, p, spec.w[None], spec.tau[None], tau_is_zero,
            np.array([i_dc]), np.array([i_ext]), fb, classic,
        )
    u, v = u[0], v[0]
    bad = ~(np.isfinite(u) & np.isfinite(v))
    if np.any(bad):
        idx = int(np.flatnonzero(bad)[0])
        raise IntegrationBlowupError(f"non-finite state at neuron {idx} (t={state.t + dt:.3f}s)", neuron_index=idx)
    return NetworkState(u, v, state.t + dt)


def step_modified(spec: NetworkSpec, state: NetworkState, inp: StepInput | None = None, dt: float = DT_CPG) -> NetworkState:
    """One explicit-Euler update of the modified (sigmoid-gated recovery) neuron model."""
    return _step(spec, state, inp, dt, classic=False)


def step_classic(spec: NetworkSpec, state: NetworkState, inp: StepInput | None = None, dt: float = DT_CPG) -> NetworkState:
    """One explicit-Euler update of the classic linear-recovery neuron model."""
    return _step(spec, state, inp, dt, classic=True)


def check_oscillation_condition(params: NeuronParams, i_dc: float = 0.0) -> bool:
    """True when the effective bias exceeds the self-oscillation threshold:
    c + d * I_DC > u0 + 2 / kappa."""
    if params.kappa <= 0:
        raise ConfigurationError(f"kappa must be positive, got {params.kappa}")
    return (params.c + params.d * i_dc) > params.u0 + 2.0 / params.kappa


@dataclass
class NetworkTrace:
    """Sampled trajectories: state after each step."""

    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    out: np.ndarray  # rectified h(u)


def simulate(
    spec: NetworkSpec,
    inputs: StepInput | Callable[[float], StepInput] | None = None,
    duration: float = 1.0,
    dt: float = DT_CPG,
    state: NetworkState | None = None,
    model: str = "modified",
) -> NetworkTrace:
    """Integrate a network for `duration` seconds and sample after every step.

    `inputs` may be None (no drive), a constant StepInput, or a callable
    evaluated at the pre-step clock. Deterministic given the initial state.
    """
    if duration < 0:
        raise ConfigurationError(f"duration must be nonnegative, got {duration}")
    classic = {"modified": False, "classic": True}[model]
    if state is None:
        state = zero_state(spec.n)
    n_steps = int(round(duration / dt))
    t = np.empty(n_steps)
    u = np.empty((n_steps, spec.n))
    v = np.empty((n_steps, spec.n))
    cur = state
    fn = inputs if callable(inputs) else (lambda _t: inputs)
    for k in range(n_steps):
        cur = _step(spec, cur, fn(cur.t), dt, classic)
        t[k] = cur.t
        u[k] = cur.u
        v[k] = cur.v
    return NetworkTrace(t=t, u=u, v=v, out=rectify(u))


# ---------------------------------------------------------------------------
# CPG construction: 4 identical limbs of (interneuron, motor-A, motor-B) with
# laterally symmetric interneuron coupling.


@dataclass(frozen=True)
class CpgParams:
    """The 23 evolvable CPG quantities: 5 shared neuron constants, c and d per
    neuron type, 6 directed within-limb weights and 6 interneuron weight
    classes (lateral symmetry ties each class to its mirror connection)."""

    gamma: float
    a: float
    b: float
    kappa: float
    u0: float
    c_in: float
    c_a: float
    c_b: float
    d_in: float
    d_a: float
    d_b: float
    w_in_to_a: float
    w_a_to_in: float
    w_in_to_b: float
    w_b_to_in: float
    w_a_to_b: float
    w_b_to_a: float
    w_ipsi_front_to_hind: float
    w_ipsi_hind_to_front: float
    w_contra_front: float
    w_contra_hind: float
    w_diag_front_to_hind: float
    w_diag_hind_to_front: float
    t0: float = T0_DEFAULT


# interneuron-network links as (destination limb, source limb) pairs per class;
# mutual contralateral classes list both directions explicitly
DEFAULT_INTERLIMB_TOPOLOGY = {
    "w_ipsi_front_to_hind": (("LH", "LF"), ("RH", "RF")),
    "w_ipsi_hind_to_front": (("LF", "LH"), ("RF", "RH")),
    "w_contra_front": (("LF", "RF"), ("RF", "LF")),
    "w_contra_hind": (("LH", "RH"), ("RH", "LH")),
    "w_diag_front_to_hind": (("RH", "LF"), ("LH", "RF")),
    "w_diag_hind_to_front": (("RF", "LH"), ("LF", "RH")),
}

_WITHIN_LIMB_LINKS = {
    "w_in_to_a": (1, 0),
    "w_a_to_in": (0, 1),
    "w_in_to_b": (2, 0),
    "w_b_to_in": (0, 2),
    "w_a_to_b": (2, 1),
    "w_b_to_a": (1, 2),
}


def limb_neuron_index(limb: str, kind: str) -> int:
    """Index of a CPG neuron given limb name and kind ('in' | 'a' | 'b')."""
    return LIMBS.index(limb) * NEURONS_PER_LIMB + {"in": 0, "a": 1, "b": 2}[kind]


def build_cpg_spec(p: CpgParams, topology: dict | None = None) -> NetworkSpec:
    """Assemble the 12-neuron CPG. G = 0 and tau = 0 throughout; interlimb
    links exist only between interneurons, per the supplied topology."""
    if topology is None:
        topology = DEFAULT_INTERLIMB_TOPOLOGY
    neurons = []
    shared = dict(t0=p.t0, gamma=p.gamma, a=p.a, b=p.b, kappa=p.kappa, u0=p.u0, G=0.0)
    for _ in LIMBS:
        neurons.append(NeuronParams(c=p.c_in, d=p.d_in, **shared))
        neurons.append(NeuronParams(c=p.c_a, d=p.d_a, **shared))
        neurons.append(NeuronParams(c=p.c_b, d=p.d_b, **shared))
    w = np.zeros((CPG_SIZE, CPG_SIZE))
    for name, (dst, src) in _WITHIN_LIMB_LINKS.items():
        for limb_idx in range(len(LIMBS)):
            base = limb_idx * NEURONS_PER_LIMB
            w[base + dst, base + src] = getattr(p, name)
    for name, links in topology.items():
        for dst_limb, src_limb in links:
            w[limb_neuron_index(dst_limb, "in"), limb_neuron_index(src_limb, "in")] = getattr(p, name)
    roles = (ROLE_INTERNEURON, ROLE_MOTOR_A, ROLE_MOTOR_B) * len(LIMBS)
    return NetworkSpec(neurons, w, roles=roles)


def is_laterally_symmetric(spec: NetworkSpec) -> bool:
    """True when weights, thresholds and parameters are invariant under the
    left-right limb swap."""
    if spec.n != CPG_SIZE:
        return False
    perm = MIRROR_PERMUTATION
    if not np.array_equal(spec.w[np.ix_(perm, perm)], spec.w):
        return False
    if not np.array_equal(spec.tau[np.ix_(perm, perm)], spec.tau):
        return False
    return all(np.array_equal(getattr(spec, f)[perm], getattr(spec, f)) for f in _PARAM_FIELDS)


def mirror_state(state: NetworkState) -> NetworkState:
    """Swap left and right limb state variables."""
    perm = MIRROR_PERMUTATION
    return NetworkState(state.u[perm].copy(), state.v[perm].copy(), state.t)


def save_spec(spec: NetworkSpec, path) -> None:
    with open(path, "w") as f:
        f.write(spec.to_json())


def load_spec(path) -> NetworkSpec:
    with open(path) as f:
        return NetworkSpec.from_json(f.read())
