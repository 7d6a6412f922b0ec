"""Integer-vector genotypes and their decoding against the parameter tables.

Every evolvable quantity is encoded as one allele in [1, 10] that maps
linearly onto its range: value = low + (allele - 1) * (high - low) / 9.
Negative-only ranges (the knee standing angle) use a descending (low, high)
pair so allele 1 stays at the small-magnitude end.  Angles are stored in the
tables in degrees and converted to radians while decoding.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass

import numpy as np

from . import body, neuro, stimulus
from .errors import ValidationError

ALLELE_MIN = 1
ALLELE_MAX = 10

KIND_CPG = "cpg"
KIND_FILTER = "filter"

GENOME_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class ParamSpec:
    name: str
    low: float
    high: float


def _weight_entries():
    names = [
        "w_in_to_a", "w_a_to_in", "w_in_to_b", "w_b_to_in", "w_a_to_b", "w_b_to_a",
        "w_ipsi_front_to_hind", "w_ipsi_hind_to_front", "w_contra_front",
        "w_contra_hind", "w_diag_front_to_hind", "w_diag_hind_to_front",
    ]
    return [ParamSpec(n, -1.8, 1.8) for n in names]


# 23 CPG entries + 9 joint/feedback entries = 32 alleles
CPG_BODY_ENTRIES = tuple(
    [
        ParamSpec("gamma", 0.01, 0.1),
        ParamSpec("a", 0.2, 2.0),
        ParamSpec("b", 0.02, 0.2),
        ParamSpec("kappa", 0.5, 5.0),
        ParamSpec("u0", 0.1, 1.0),
        ParamSpec("c_in", 1.1, 2.0),
        ParamSpec("c_a", 1.1, 2.0),
        ParamSpec("c_b", 1.1, 2.0),
        ParamSpec("d_in", -0.9, 0.9),
        ParamSpec("d_a", -0.9, 0.9),
        ParamSpec("d_b", -0.9, 0.9),
    ]
    + _weight_entries()
    + [
        ParamSpec("theta0_hip_deg", 2.7, 27.0),
        ParamSpec("theta0_leg_deg", 4.5, 45.0),
        ParamSpec("theta0_knee_deg", -7.2, -72.0),
        ParamSpec("gain_a", 0.005, 0.05),
        ParamSpec("gain_b", 0.005, 0.05),
        ParamSpec("q_a_front", -0.45, 0.45),
        ParamSpec("q_b_front", -0.45, 0.45),
        ParamSpec("q_a_side", -0.45, 0.45),
        ParamSpec("q_b_side", -0.45, 0.45),
    ]
)


def _filter_entries():
    entries = [ParamSpec(f"G_{i}", -1.0, 1.0) for i in range(stimulus.FILTER_SIZE)]
    for i in range(stimulus.FILTER_SIZE):
        for j in range(stimulus.N_CPG_TARGETS):
            entries.append(ParamSpec(f"M_{i}_{j}", -10.0, 10.0))
    for i in range(stimulus.FILTER_SIZE):
        for j in range(stimulus.FILTER_SIZE):
            if i != j:
                entries.append(ParamSpec(f"w_{i}_{j}", -1.2, 0.0))
    entries.append(ParamSpec("c", 2.0, 2.5))
    entries.append(ParamSpec("lowpass_tc", 0.05, 0.55))
    return tuple(entries)


FILTER_ENTRIES = _filter_entries()


@dataclass(frozen=True)
class ParamMap:
    kind: str
    entries: tuple

    def __len__(self) -> int:
        return len(self.entries)

    def index(self, name: str) -> int:
        for i, e in enumerate(self.entries):
            if e.name == name:
                return i
        raise KeyError(name)

    @property
    def version_hash(self) -> str:
        payload = json.dumps([(e.name, e.low, e.high) for e in self.entries]).encode()
        return hashlib.sha256(payload).hexdigest()[:12]


CPG_BODY_MAP = ParamMap(KIND_CPG, CPG_BODY_ENTRIES)
FILTER_MAP = ParamMap(KIND_FILTER, FILTER_ENTRIES)

_MAPS = {KIND_CPG: CPG_BODY_MAP, KIND_FILTER: FILTER_MAP}


def map_for(kind: str) -> ParamMap:
    try:
        return _MAPS[kind]
    except KeyError:
        raise ValidationError(f"unknown genome kind {kind!r}") from None


@dataclass
class Genome:
    alleles: np.ndarray
    kind: str

    def __post_init__(self):
        self.alleles = np.asarray(self.alleles, dtype=int)
        pmap = map_for(self.kind)
        if self.alleles.shape != (len(pmap),):
            raise ValidationError(
                f"{self.kind} genome needs {len(pmap)} alleles, got shape {self.alleles.shape}"
            )
        bad = (self.alleles < ALLELE_MIN) | (self.alleles > ALLELE_MAX)
        if np.any(bad):
            idx = int(np.flatnonzero(bad)[0])
            raise ValidationError(
                f"allele {idx} = {self.alleles[idx]} outside [{ALLELE_MIN}, {ALLELE_MAX}]", index=idx
            )

    def to_dict(self) -> dict:
        return {
            "schema_version": GENOME_SCHEMA_VERSION,
            "kind": self.kind,
            "map_version": map_for(self.kind).version_hash,
            "alleles": self.alleles.tolist(),
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Genome":
        g = cls(np.array(data["alleles"]), data["kind"])
        expected = map_for(g.kind).version_hash
        if data.get("map_version", expected) != expected:
            raise ValidationError(
                f"genome was encoded against map {data['map_version']}, current map is {expected}"
            )
        return g


def decode_value(allele: int, entry: ParamSpec) -> float:
    return entry.low + (allele - 1) * (entry.high - entry.low) / 9.0


def encode_value(value: float, entry: ParamSpec) -> int:
    if entry.high == entry.low:
        return 1
    return int(round(1 + 9.0 * (value - entry.low) / (entry.high - entry.low)))


def decode_values(genome: Genome) -> dict:
    pmap = map_for(genome.kind)
    return {e.name: decode_value(int(a), e) for a, e in zip(genome.alleles, pmap.entries)}


def encode_values(values: dict, kind: str) -> Genome:
    pmap = map_for(kind)
    alleles = np.array([encode_value(values[e.name], e) for e in pmap.entries])
    return Genome(alleles, kind)


@dataclass
class DecodedCpg:
    network: neuro.NetworkSpec
    command: body.JointCommandParams
    values: dict


@dataclass
class DecodedFilter:
    wiring: stimulus.FilterWiring
    values: dict


def decode(genome: Genome):
    """Decode a genome into its executable pieces: a laterally symmetric CPG
    spec plus joint command parameters, or a filter wiring."""
    vals = decode_values(genome)
    if genome.kind == KIND_CPG:
        cpg_names = [f.name for f in CPG_BODY_ENTRIES[:23]]
        network = neuro.build_cpg_spec(neuro.CpgParams(**{n: vals[n] for n in cpg_names}))
        command = body.JointCommandParams(
            theta0_hip=math.radians(vals["theta0_hip_deg"]),
            theta0_leg=math.radians(vals["theta0_leg_deg"]),
            theta0_knee=math.radians(vals["theta0_knee_deg"]),
            gain_a=vals["gain_a"],
            gain_b=vals["gain_b"],
            q_a_front=vals["q_a_front"],
            q_b_front=vals["q_b_front"],
            q_a_side=vals["q_a_side"],
            q_b_side=vals["q_b_side"],
        )
        return DecodedCpg(network=network, command=command, values=vals)
    w = np.zeros((stimulus.FILTER_SIZE, stimulus.FILTER_SIZE))
    for i in range(stimulus.FILTER_SIZE):
        for j in range(stimulus.FILTER_SIZE):
            if i != j:
                w[i, j] = vals[f"w_{i}_{j}"]
    wiring = stimulus.FilterWiring(
        G=np.array([vals[f"G_{i}"] for i in range(stimulus.FILTER_SIZE)]),
        w=w,
        M=np.array([[vals[f"M_{i}_{j}"] for j in range(stimulus.N_CPG_TARGETS)] for i in range(stimulus.FILTER_SIZE)]),
        c=vals["c"],
        lowpass_tc=vals["lowpass_tc"],
    )
    return DecodedFilter(wiring=wiring, values=vals)


def random_genome(kind: str, rng: np.random.Generator) -> Genome:
    pmap = map_for(kind)
    return Genome(rng.integers(ALLELE_MIN, ALLELE_MAX + 1, len(pmap)), kind)


def save_genome(genome: Genome, path) -> None:
    with open(path, "w") as f:
        json.dump(genome.to_dict(), f, sort_keys=True)


def load_genome(path) -> Genome:
    with open(path) as f:
        return Genome.from_dict(json.load(f))
