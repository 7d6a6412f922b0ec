"""NSGA-III evolution plus the CPG sweep and filter entrainment protocols.

All objectives are maximized.  Selection fills whole non-dominated fronts
while they fit; the partial last front is chosen by normalized-objective
association to Das-Dennis reference points with niche-count preservation.
Survivors additionally always include, per objective, an individual attaining
the pool maximum, so the best value of every objective is monotone across
generations.

Evaluation is organized as stateless jobs over (genome, derived seeds); jobs
are grouped into fixed-size chunks that vectorized trial batches execute.
Chunk composition depends only on the configuration, never on the worker
count, so parallel runs are bit-identical to serial ones.
"""

from __future__ import annotations

import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, asdict
from itertools import combinations

import numpy as np

from . import analysis, body, genome as genome_mod, neuro, stimulus
from .errors import ConfigurationError, InsufficientDataError, ValidationError

X0_SIDEWAYS = math.sqrt(5.0)  # m, sideways punishment scale
Y0_FORWARD = 2.5  # m, optimal steady forward distance
PHI = 0.618  # input-period ratio for filter evaluation

CHECKPOINT_SCHEMA_VERSION = 1


@dataclass(frozen=True)
class EvolutionConfig:
    """Core NSGA-III settings (protocol knobs live in the evaluators)."""

    kind: str
    n_alleles: int
    population: int
    partitions: int
    objectives: int
    generations: int
    p_c: float
    p_m: float
    eval_repeats: int
    final_eval_repeats: int
    seed: int = 0
    batch_size: int = 40

    @classmethod
    def cpg_default(cls, **overrides) -> "EvolutionConfig":
        base = dict(
            kind="cpg", n_alleles=32, population=168, partitions=8, objectives=4,
            generations=200, p_c=0.7, p_m=0.05, eval_repeats=3, final_eval_repeats=15,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def filter_default(cls, **overrides) -> "EvolutionConfig":
        base = dict(
            kind="filter", n_alleles=62, population=92, partitions=12, objectives=3,
            generations=150, p_c=1.0, p_m=0.05, eval_repeats=1, final_eval_repeats=5,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "EvolutionConfig":
        fields = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - fields
        if unknown:
            raise ValidationError(f"unknown config field {sorted(unknown)[0]!r}")
        missing = fields - set(data) - {"seed", "batch_size"}
        if missing:
            raise ValidationError(f"missing config field {sorted(missing)[0]!r}")
        return cls(**data)


# ---------------------------------------------------------------------------
# NSGA-III pieces


def reference_points(m: int, p: int) -> np.ndarray:
    """Das-Dennis simplex lattice: all points with coordinates i/p summing
    to 1.  Count is C(p + m - 1, m - 1)."""
    if m < 2 or p < 1:
        raise ConfigurationError(f"need m >= 2 objectives and p >= 1 partitions, got {m}, {p}")
    points = []
    for dividers in combinations(range(p + m - 1), m - 1):
        prev = -1
        coords = []
        for d in dividers:
            coords.append(d - prev - 1)
            prev = d
        coords.append(p + m - 2 - prev)
        points.append(coords)
    return np.array(points, dtype=float) / p


def nondominated_sort(fitnesses: np.ndarray) -> list[list[int]]:
    """Fronts of indices under maximization domination (>= in all objectives,
    > in at least one)."""
    F = np.asarray(fitnesses, dtype=float)
    if F.size == 0:
        return []
    N = len(F)
    ge = (F[:, None, :] >= F[None, :, :]).all(axis=-1)
    gt = (F[:, None, :] > F[None, :, :]).any(axis=-1)
    dom = ge & gt  # dom[i, j]: i dominates j
    n_dom = dom.sum(axis=0)
    fronts = []
    assigned = np.zeros(N, dtype=bool)
    current = np.flatnonzero((n_dom == 0) & ~assigned)
    while current.size:
        fronts.append([int(i) for i in current])
        assigned[current] = True
        n_dom = n_dom - dom[current].sum(axis=0)
        current = np.flatnonzero((n_dom == 0) & ~assigned)
    return fronts


def _normalize(G: np.ndarray) -> np.ndarray:
    """Deb-Jain normalization of minimization objectives: translate to the
    ideal point and divide by hyperplane intercepts through the ASF extremes,
    falling back to objective spans, then to unit denominators."""
    z_min = G.min(axis=0)
    Gt = G - z_min
    m = G.shape[1]
    spans = Gt.max(axis=0)
    weights = np.full((m, m), 1e-6) + np.eye(m)
    denom = None
    extremes = np.array([int(np.argmin(np.max(Gt / weights[i], axis=1))) for i in range(m)])
    E = Gt[extremes]
    try:
        plane = np.linalg.solve(E, np.ones(m))
        with np.errstate(divide="ignore"):
            intercepts = 1.0 / plane
        if np.all(np.isfinite(intercepts)) and np.all(intercepts > 1e-12):
            denom = intercepts
    except np.linalg.LinAlgError:
        denom = None
    if denom is None:
        denom = spans.copy()
    denom = np.where(denom > 1e-12, denom, 1.0)
    return Gt / denom


def nsga3_select(fitnesses: np.ndarray, refpoints: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """Indices of the k survivors from a parents+offspring pool."""
    F = np.asarray(fitnesses, dtype=float)
    N = len(F)
    if N < k:
        raise ConfigurationError(f"pool of {N} cannot supply {k} survivors")
    fronts = nondominated_sort(F)
    selected: list[int] = []
    i = 0
    while i < len(fronts) and len(selected) + len(fronts[i]) <= k:
        selected.extend(fronts[i])
        i += 1
    if len(selected) == k or i >= len(fronts):
        return np.array(selected[:k], dtype=int)
    last = fronts[i]
    need = k - len(selected)

    pool = selected + last
    G = -F[pool]  # minimization space
    Gn = _normalize(G)
    ref_unit = refpoints / np.linalg.norm(refpoints, axis=1, keepdims=True)
    proj = Gn @ ref_unit.T
    sq = (Gn**2).sum(axis=1, keepdims=True)
    d_perp = np.sqrt(np.maximum(sq - proj**2, 0.0))
    assoc = np.argmin(d_perp, axis=1)
    dmin = d_perp[np.arange(len(pool)), assoc]

    n_sel = len(selected)
    rho = np.bincount(assoc[:n_sel], minlength=len(refpoints)).astype(float)
    available = [[] for _ in range(len(refpoints))]
    for off, pool_idx in enumerate(last):
        available[assoc[n_sel + off]].append((dmin[n_sel + off], pool_idx))
    niche_open = np.array([len(a) > 0 for a in available])

    picks: list[int] = []
    while len(picks) < need:
        open_idx = np.flatnonzero(niche_open)
        least = open_idx[rho[open_idx] == rho[open_idx].min()]
        j = int(least[rng.integers(len(least))]) if len(least) > 1 else int(least[0])
        cands = available[j]
        if rho[j] == 0:
            pick_pos = int(np.argmin([c[0] for c in cands]))
        else:
            pick_pos = int(rng.integers(len(cands)))
        _, chosen = cands.pop(pick_pos)
        picks.append(chosen)
        rho[j] += 1
        if not cands:
            niche_open[j] = False

    survivors = selected + picks
    # objective-maximum preservation: swap in any missing per-objective best
    surv_set = set(survivors)
    protected = set()
    for mobj in range(F.shape[1]):
        best = F[pool, mobj].max()
        attained = [s for s in survivors if F[s, mobj] >= best]
        if attained:
            protected.add(attained[0])
            continue
        candidates = [p for p in last if F[p, mobj] >= best and p not in surv_set]
        if not candidates:
            continue
        incoming = candidates[0]
        victims = [p for p in picks if p not in protected and F[p, mobj] < best]
        if not victims:
            continue
        victim_rho = [rho[assoc[n_sel + last.index(p)]] for p in victims]
        victim = victims[int(np.argmax(victim_rho))]
        picks[picks.index(victim)] = incoming
        survivors = selected + picks
        surv_set = set(survivors)
        protected.add(incoming)
    return np.array(survivors, dtype=int)


def vary(population: np.ndarray, p_c: float, p_m: float, rng: np.random.Generator,
         low: int = genome_mod.ALLELE_MIN, high: int = genome_mod.ALLELE_MAX) -> np.ndarray:
    """Pairwise uniform crossover with probability p_c, then per-allele
    mutation with probability p_m to a uniform random value in [low, high]."""
    off = np.array(population, dtype=int, copy=True)
    N, L = off.shape
    for i in range(0, N - 1, 2):
        if rng.random() < p_c:
            mask = rng.random(L) < 0.5
            a = off[i, mask].copy()
            off[i, mask] = off[i + 1, mask]
            off[i + 1, mask] = a
    mut = rng.random((N, L)) < p_m
    vals = rng.integers(low, high + 1, (N, L))
    off[mut] = vals[mut]
    return off


# ---------------------------------------------------------------------------
# CPG fitness


def fitness_from_metrics(
    metrics: body.TrialMetrics,
    y0: float = Y0_FORWARD,
    x0: float = X0_SIDEWAYS,
    per_stage_penalty: bool = True,
) -> np.ndarray:
    """The four sweep objectives from one three-stage trial.

    F1 = -y1 - (x/x0)^2, F2 = 2 y0 y2 - y2^2 - (x/x0)^2, F3 = y3 - (x/x0)^2,
    F4 = y0^2 H / (1 + t).  With per_stage_penalty each stage is penalized by
    its own sideways displacement; otherwise stage 1's is used throughout."""
    if len(metrics.stage_displacements) != 3:
        raise ValidationError(f"expected 3 stage displacements, got {len(metrics.stage_displacements)}")
    (x1, y1), (x2, y2), (x3, y3) = metrics.stage_displacements
    if per_stage_penalty:
        p1, p2, p3 = ((x / x0) ** 2 for x in (x1, x2, x3))
    else:
        p1 = p2 = p3 = (x1 / x0) ** 2
    f1 = -y1 - p1
    f2 = 2.0 * y0 * y2 - y2 * y2 - p2
    f3 = y3 - p3
    f4 = y0 * y0 * metrics.h_tot / (1.0 + metrics.t_tot)
    return np.array([f1, f2, f3, f4])


def _trial_seed(*key) -> np.random.SeedSequence:
    return np.random.SeedSequence([int(k) & 0x7FFFFFFF for k in key])


@dataclass
class CpgEvaluator:
    """Three-stage control-parameter sweep, median fitness over seeded repeats.

    A custom Schedule (e.g. parsed from a config file) overrides the standard
    sweep; it must keep three stages for the fitness formulas to apply."""

    morphology: body.MorphologyParams
    repeats: int = 3
    theta_c_mag: float = 0.016
    i_dc_base: float = 0.5
    i_dc_end: float = 1.0
    stage_duration: float = 10.0
    per_stage_penalty: bool = True
    custom_schedule: body.Schedule | None = None
    n_objectives: int = 4

    def schedule(self) -> body.Schedule:
        if self.custom_schedule is not None:
            if len(self.custom_schedule.stages) != 3:
                raise ConfigurationError("the sweep evaluation needs a three-stage schedule")
            return self.custom_schedule
        return body.standard_sweep_schedule(self.theta_c_mag, self.i_dc_base, self.i_dc_end, self.stage_duration)

    def evaluate_batch(self, genomes, generation: int, root_seed: int, index_offset: int = 0,
                       repeats: int | None = None) -> np.ndarray:
        repeats = repeats or self.repeats
        networks, commands, seeds = [], [], []
        for gi, alleles in enumerate(genomes):
            dec = genome_mod.decode(genome_mod.Genome(alleles, genome_mod.KIND_CPG))
            for r in range(repeats):
                networks.append(dec.network)
                commands.append(dec.command)
                seeds.append(_trial_seed(root_seed, generation, index_offset + gi, r))
        results = body.run_trials(networks, commands, self.morphology, self.schedule(), seeds, record="none")
        fits = np.array([fitness_from_metrics(r.metrics, per_stage_penalty=self.per_stage_penalty) for r in results])
        fits = fits.reshape(len(genomes), repeats, self.n_objectives)
        return np.median(fits, axis=1)


def evaluate_cpg(genome: genome_mod.Genome, morphology: body.MorphologyParams, seed: int,
                 repeats: int = 3, **protocol) -> np.ndarray:
    """Median of the four objectives over `repeats` seeded sweep trials."""
    ev = CpgEvaluator(morphology=morphology, repeats=repeats, **protocol)
    return ev.evaluate_batch([genome.alleles], generation=0, root_seed=seed)[0]


def select_representatives(fitnesses: np.ndarray, z_max: int = 1000) -> list[int]:
    """Up to four diverse individuals: per objective, the argmax of
    F*_m = z F_m + sum_k F_k with the smallest integer z making the four
    argmaxes distinct.  Only all-positive individuals are eligible."""
    F = np.asarray(fitnesses, dtype=float)
    eligible = np.flatnonzero((F > 0).all(axis=1))
    if eligible.size == 0:
        raise ValidationError("no individuals with all-positive fitness")
    Fe = F[eligible]
    total = Fe.sum(axis=1)
    m = F.shape[1]
    picks = []
    for z in range(1, z_max + 1):
        picks = [int(eligible[np.argmax(z * Fe[:, j] + total)]) for j in range(m)]
        if len(set(picks)) == m:
            return picks
    out = []
    for p in picks:
        if p not in out:
            out.append(p)
    return out


# ---------------------------------------------------------------------------
# filter fitness


@dataclass
class FilterEvaluationContext:
    """Frozen CPG controller and protocol constants for filter evolution."""

    cpg_network: neuro.NetworkSpec
    command: body.JointCommandParams
    morphology: body.MorphologyParams
    t0_period: float  # natural walking period at theta_C = 0, I_DC = 0.5
    phi: float = PHI
    duration: float = 40.0
    i_dc: float = 0.5
    theta_c: float = 0.0
    jitter_sd: float = 0.02
    jitter_start_generation: int = 51
    sigma_t: float = 0.1
    epsilon: float = 0.1
    amplitude: float = 1.0
    max_lag_factor: float = 2.25
    min_period_lag: float = 0.05

    def input_periods(self) -> list[float]:
        return [self.t0_period / self.phi, self.t0_period, self.phi * self.t0_period]

    def probe_periods(self) -> list[float]:
        root = math.sqrt(self.phi)
        return [self.t0_period / root, root * self.t0_period]


@dataclass
class FilterEvaluator:
    context: FilterEvaluationContext
    repeats: int = 1
    n_objectives: int = 3

    def _run_rows(self, genomes, generation: int, root_seed: int, index_offset: int,
                  repeats: int, periods: list[float]):
        """(h_tot, Q) arrays of shape (genomes, repeats, periods)."""
        ctx = self.context
        jitter = ctx.jitter_sd if generation >= ctx.jitter_start_generation else 0.0
        schedule = body.constant_schedule(ctx.duration, i_dc=ctx.i_dc, theta_c=ctx.theta_c)
        n_steps = int(math.ceil(round(ctx.duration / body.DT_DECISION) * (body.DT_DECISION / neuro.DT_CPG) - 1e-9))

        networks, commands, seeds, inputs = [], [], [], []
        sigma0 = np.empty((len(genomes), repeats))
        for gi, alleles in enumerate(genomes):
            dec = genome_mod.decode(genome_mod.Genome(alleles, genome_mod.KIND_FILTER))
            combined = stimulus.combine_with_cpg(ctx.cpg_network, dec.wiring)
            for r in range(repeats):
                seed_key = (root_seed, generation, index_offset + gi, r)
                sigma0[gi, r] = stimulus.measure_sigma0(dec.wiring, seed=_trial_seed(*seed_key, 991))
                for pk, period in enumerate(periods):
                    train = stimulus.StimulusTrain(
                        period=period, duration=ctx.duration, jitter_sd=jitter,
                        amplitude=ctx.amplitude, seed=_trial_seed(*seed_key, 100 + pk),
                    )
                    times = stimulus.generate_train(train)
                    sig = stimulus.lowpass_signal(times, dec.wiring.lowpass_tc, neuro.DT_CPG, ctx.duration,
                                                  amplitude=ctx.amplitude)
                    inputs.append(sig[:n_steps] if sig.size >= n_steps else np.pad(sig, (0, n_steps - sig.size)))
                    networks.append(combined)
                    commands.append(ctx.command)
                    seeds.append(_trial_seed(*seed_key, 7))
        results = body.run_trials(
            networks, commands, ctx.morphology, schedule, seeds,
            external_inputs=np.array(inputs), record="period",
        )
        n_p = len(periods)
        h = np.empty((len(genomes), repeats, n_p))
        q = np.empty((len(genomes), repeats, n_p))
        for gi in range(len(genomes)):
            for r in range(repeats):
                for pk in range(n_p):
                    res = results[(gi * repeats + r) * n_p + pk]
                    h[gi, r, pk] = res.metrics.h_tot
                    q[gi, r, pk] = self._q_score(res, periods[pk], sigma0[gi, r])
        return h, q

    def _q_score(self, res: body.TrialResult, period_in: float, sigma0: float) -> float:
        ctx = self.context
        half = res.neuron_u.shape[0] // 2
        try:
            t_out = analysis.estimate_period(
                res.neuron_u[half:, 0], res.neuron_u[half:, 1],
                neuro.DT_CPG, min_lag=ctx.min_period_lag, max_lag=ctx.max_lag_factor * ctx.t0_period,
            )
        except InsufficientDataError:
            t_out = None
        if t_out is None:
            return 0.0
        return analysis.entrainment_Q(t_out, period_in, sigma0, ctx.sigma_t, ctx.epsilon)

    def evaluate_batch(self, genomes, generation: int, root_seed: int, index_offset: int = 0,
                       repeats: int | None = None) -> np.ndarray:
        """Median over repeats of H_tot,k * Q_k per evolution input period."""
        repeats = repeats or self.repeats
        h, q = self._run_rows(genomes, generation, root_seed, index_offset, repeats, self.context.input_periods())
        return np.median(h * q, axis=1)

    def detailed_scores(self, genomes, generation: int, root_seed: int, repeats: int | None = None,
                        include_probes: bool = True):
        """Median H_tot,k and Q_k per period, evolution periods first and the
        two probe periods appended; used by the final selection rule."""
        ctx = self.context
        repeats = repeats or self.repeats
        periods = ctx.input_periods() + (ctx.probe_periods() if include_probes else [])
        h, q = self._run_rows(genomes, generation, root_seed, 0, repeats, periods)
        return periods, np.median(h, axis=1), np.median(q, axis=1)


def evaluate_filter(filter_genome: genome_mod.Genome, context: FilterEvaluationContext,
                    generation: int, seed: int, repeats: int = 1) -> np.ndarray:
    """H_tot * Q per input period {T0/phi, T0, phi T0}."""
    ev = FilterEvaluator(context=context, repeats=repeats)
    return ev.evaluate_batch([filter_genome.alleles], generation, seed)[0]


def select_best_filter(h: np.ndarray, q: np.ndarray, height_gate: float = 0.75,
                       n_evolution_periods: int = 3) -> int | None:
    """Index of the filter with the highest sum of Q over the evolution
    periods, among those whose H_tot clears the height gate at every
    evolution period; None when no filter qualifies."""
    h = np.asarray(h, dtype=float)
    q = np.asarray(q, dtype=float)
    eligible = np.flatnonzero((h[:, :n_evolution_periods] > height_gate).all(axis=1))
    if eligible.size == 0:
        return None
    scores = q[eligible, :n_evolution_periods].sum(axis=1)
    return int(eligible[np.argmax(scores)])


def measure_natural_period(
    network: neuro.NetworkSpec,
    command: body.JointCommandParams,
    morphology: body.MorphologyParams,
    seed: int = 0,
    duration: float = 40.0,
    i_dc: float = 0.5,
    theta_c: float = 0.0,
) -> tuple[float | None, body.TrialResult]:
    """Walking period at constant control parameters; None when no peak."""
    sched = body.constant_schedule(duration, i_dc=i_dc, theta_c=theta_c)
    res = body.run_trial(network, command, morphology, sched, seed, record="full")
    g = analysis.gait_metrics(res)
    return g.period, res


# ---------------------------------------------------------------------------
# generational loop


@dataclass
class EvolutionResult:
    config: EvolutionConfig
    population: np.ndarray
    fitness: np.ndarray
    archive: list
    final_fitness: np.ndarray | None = None
    final_extra: dict | None = None


def _chunked(seq, size):
    return [seq[i : i + size] for i in range(0, len(seq), size)]


def _eval_chunk(args):
    evaluator, chunk, generation, root_seed, offset, repeats = args
    return evaluator.evaluate_batch(chunk, generation, root_seed, index_offset=offset, repeats=repeats)


def _evaluate_population(evaluator, genomes, generation, root_seed, batch_size, workers, repeats=None):
    chunks = _chunked(list(genomes), batch_size)
    offsets = list(range(0, len(genomes), batch_size))
    jobs = [(evaluator, c, generation, root_seed, o, repeats) for c, o in zip(chunks, offsets)]
    if workers <= 1 or len(jobs) == 1:
        parts = [_eval_chunk(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_eval_chunk, jobs))
    return np.vstack(parts)


def _sanitize_fitness(F: np.ndarray) -> tuple[np.ndarray, int]:
    """Replace non-finite objective rows (failed evaluations) with a
    worst-case value so the individual survives bookkeeping but loses."""
    bad = ~np.isfinite(F).all(axis=1)
    if not np.any(bad):
        return F, 0
    F = F.copy()
    for m in range(F.shape[1]):
        col = F[:, m]
        finite = col[np.isfinite(col)]
        floor = (finite.min() if finite.size else 0.0) - 1e3
        col[~np.isfinite(col)] = floor
        F[bad, m] = np.minimum(F[bad, m], floor)
    return F, int(bad.sum())


def _archive_row(generation: int, fitness: np.ndarray, failures: int = 0) -> dict:
    return {
        "generation": generation,
        "max": [float(v) for v in fitness.max(axis=0)],
        "median": [float(v) for v in np.median(fitness, axis=0)],
        "failures": failures,
    }


def checkpoint_payload(config, generation, population, fitness, rng, archive) -> dict:
    return {
        "schema_version": CHECKPOINT_SCHEMA_VERSION,
        "kind": config.kind,
        "generation": generation,
        "config": config.to_dict(),
        "population": np.asarray(population).tolist(),
        "fitness": np.asarray(fitness).tolist(),
        "rng_state": rng.bit_generator.state,
        "archive": archive,
    }


def save_checkpoint(path, payload: dict) -> None:
    with open(path, "w") as f:
        json.dump(payload, f, sort_keys=True)


def load_checkpoint(path) -> dict:
    with open(path) as f:
        data = json.load(f)
    if data.get("schema_version") != CHECKPOINT_SCHEMA_VERSION:
        raise ValidationError(f"unsupported checkpoint schema {data.get('schema_version')}")
    return data


def run_evolution(
    config: EvolutionConfig,
    evaluator,
    workers: int = 1,
    checkpoint_dir=None,
    resume: dict | None = None,
    final_evaluation: bool = True,
    progress=None,
) -> EvolutionResult:
    """Generational NSGA-III loop; checkpoints every generation; the final
    population is re-evaluated with final_eval_repeats and medians stored."""
    if evaluator.n_objectives != config.objectives:
        raise ConfigurationError(
            f"evaluator provides {evaluator.n_objectives} objectives, config expects {config.objectives}"
        )
    refpoints = reference_points(config.objectives, config.partitions)
    rng = np.random.default_rng(config.seed)

    if resume is not None:
        population = np.array(resume["population"], dtype=int)
        fitness = np.array(resume["fitness"], dtype=float)
        archive = list(resume["archive"])
        rng.bit_generator.state = resume["rng_state"]
        start_gen = resume["generation"] + 1
    else:
        population = rng.integers(genome_mod.ALLELE_MIN, genome_mod.ALLELE_MAX + 1,
                                  (config.population, config.n_alleles))
        fitness = _evaluate_population(evaluator, population, 0, config.seed,
                                       config.batch_size, workers, config.eval_repeats)
        fitness, failures = _sanitize_fitness(fitness)
        archive = [_archive_row(0, fitness, failures)]
        start_gen = 1
        if checkpoint_dir is not None:
            save_checkpoint(os.path.join(checkpoint_dir, "gen_0000.json"),
                            checkpoint_payload(config, 0, population, fitness, rng, archive))

    for gen in range(start_gen, config.generations + 1):
        mating = population[rng.permutation(len(population))]
        offspring = vary(mating, config.p_c, config.p_m, rng)
        off_fitness = _evaluate_population(evaluator, offspring, gen, config.seed,
                                           config.batch_size, workers, config.eval_repeats)
        off_fitness, failures = _sanitize_fitness(off_fitness)
        pool = np.vstack([population, offspring])
        pool_fit = np.vstack([fitness, off_fitness])
        survivors = nsga3_select(pool_fit, refpoints, config.population, rng)
        population = pool[survivors]
        fitness = pool_fit[survivors]
        archive.append(_archive_row(gen, fitness, failures))
        if checkpoint_dir is not None:
            save_checkpoint(os.path.join(checkpoint_dir, f"gen_{gen:04d}.json"),
                            checkpoint_payload(config, gen, population, fitness, rng, archive))
        if progress is not None:
            progress(gen, archive[-1])

    final_fitness = None
    if final_evaluation and config.final_eval_repeats > 0:
        final_fitness = _evaluate_population(
            evaluator, population, config.generations + 1, config.seed,
            config.batch_size, workers, config.final_eval_repeats,
        )
    return EvolutionResult(
        config=config, population=population, fitness=fitness,
        archive=archive, final_fitness=final_fitness,
    )
