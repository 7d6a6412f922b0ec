"""Command-line workbench: evolution runs, representative selection, sweeps,
entrainment demos and trajectory analysis.

Every command writes a manifest.json into its output directory; re-running a
manifest (`flexgait rerun`) reproduces all numeric outputs byte-identically,
regardless of worker count.  Structured artifacts are JSON, time series and
metric tables are CSV (schemas in docs/formats.md).
"""

from __future__ import annotations

import hashlib
import json
import os

import click
import numpy as np

from . import __version__, analysis, body, evolve, genome as genome_mod, neuro, stimulus
from .errors import FlexgaitError, ValidationError

MANIFEST_SCHEMA_VERSION = 1
CONTROLLER_SCHEMA_VERSION = 1


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:12]


def _write_json(path, obj) -> None:
    with open(path, "w") as f:
        json.dump(obj, f, sort_keys=True, indent=1)


def _read_json(path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise click.UsageError(f"file not found: {path}")
    except json.JSONDecodeError as e:
        raise click.UsageError(f"unparseable JSON in {path}: {e}")


def _new_experiment_dir(out, manifest) -> str:
    os.makedirs(out, exist_ok=False)
    _write_json(os.path.join(out, "manifest.json"), manifest)
    return out


def _manifest(command: str, config: dict, seed: int, outputs: list, extra: dict | None = None) -> dict:
    # worker count is deliberately not recorded: it never affects results
    data = {
        "schema_version": MANIFEST_SCHEMA_VERSION,
        "experiment_id": _digest({"command": command, "config": config, "seed": seed}),
        "command": command,
        "config": config,
        "seed": seed,
        "outputs": sorted(outputs),
        "version": __version__,
    }
    if extra:
        data.update(extra)
    return data


def _load_evolution_config(data: dict, kind: str, seed_override: int | None) -> tuple[evolve.EvolutionConfig, dict]:
    if not isinstance(data, dict):
        raise click.UsageError("config must be a JSON object")
    protocol = data.get("protocol", {})
    core = {k: v for k, v in data.items() if k != "protocol"}
    core.setdefault("kind", kind)
    if core["kind"] != kind:
        raise click.UsageError(f"config field 'kind' is {core['kind']!r}, expected {kind!r}")
    if seed_override is not None:
        core["seed"] = seed_override
    try:
        cfg = evolve.EvolutionConfig.from_dict(core)
    except (ValidationError, TypeError) as e:
        raise click.UsageError(f"invalid config: {e}")
    return cfg, protocol


def _fitness_curve_csv(path, archive, n_obj) -> None:
    cols = ["generation"] + [f"max_f{i+1}" for i in range(n_obj)] + [f"median_f{i+1}" for i in range(n_obj)]
    with open(path, "w") as f:
        f.write(",".join(cols) + "\n")
        for row in archive:
            vals = [str(row["generation"])] + [repr(v) for v in row["max"]] + [repr(v) for v in row["median"]]
            f.write(",".join(vals) + "\n")


def _write_final_population(path, kind, result, extra=None) -> None:
    data = {
        "schema_version": 1,
        "kind": kind,
        "population": result.population.tolist(),
        "fitness": result.fitness.tolist(),
        "final_fitness": None if result.final_fitness is None else result.final_fitness.tolist(),
    }
    if extra:
        data.update(extra)
    _write_json(path, data)


def _run_cpg_experiment(config: evolve.EvolutionConfig, protocol: dict, out: str, workers: int,
                        command_name: str = "evolve-cpg") -> str:
    morphology = body.get_morphology(protocol.get("morphology", "normal"))
    evaluator = evolve.CpgEvaluator(
        morphology=morphology,
        repeats=config.eval_repeats,
        theta_c_mag=protocol.get("theta_c_mag", 0.016),
        i_dc_base=protocol.get("i_dc_base", 0.5),
        i_dc_end=protocol.get("i_dc_end", 1.0),
        stage_duration=protocol.get("stage_duration", 10.0),
        per_stage_penalty=protocol.get("per_stage_penalty", True),
        custom_schedule=body.Schedule.from_dict(protocol["schedule"]) if "schedule" in protocol else None,
    )
    manifest = _manifest(command_name, {"core": config.to_dict(), "protocol": protocol},
                         config.seed,
                         ["config.json", "checkpoints", "fitness_curve.csv", "final_population.json"],
                         extra={"morphology": morphology.name})
    _new_experiment_dir(out, manifest)
    _write_json(os.path.join(out, "config.json"), {"core": config.to_dict(), "protocol": protocol})
    ckpt_dir = os.path.join(out, "checkpoints")
    os.makedirs(ckpt_dir)
    result = evolve.run_evolution(config, evaluator, workers=workers, checkpoint_dir=ckpt_dir)
    _fitness_curve_csv(os.path.join(out, "fitness_curve.csv"), result.archive, config.objectives)
    _write_final_population(os.path.join(out, "final_population.json"), "cpg", result)
    return out


def _run_filter_experiment(config: evolve.EvolutionConfig, protocol: dict, rep: dict, out: str,
                           workers: int, command_name: str = "evolve-filter") -> str:
    morphology = body.get_morphology(protocol.get("morphology", rep.get("morphology", "normal")))
    cpg_genome = genome_mod.Genome.from_dict(rep["genome"])
    decoded = genome_mod.decode(cpg_genome)
    context = evolve.FilterEvaluationContext(
        cpg_network=decoded.network,
        command=decoded.command,
        morphology=morphology,
        t0_period=rep["t0_period"],
        jitter_sd=protocol.get("jitter_sd", 0.02),
        jitter_start_generation=protocol.get("jitter_start_generation", 51),
        duration=protocol.get("duration", 40.0),
        amplitude=protocol.get("amplitude", 1.0),
    )
    evaluator = evolve.FilterEvaluator(context=context, repeats=config.eval_repeats)
    jitter_gens = (
        [context.jitter_start_generation, config.generations]
        if config.generations >= context.jitter_start_generation
        else None
    )
    manifest = _manifest(command_name, {"core": config.to_dict(), "protocol": protocol, "cpg_rep": rep},
                         config.seed,
                         ["config.json", "checkpoints", "fitness_curve.csv", "final_population.json",
                          "selected_filter.json"],
                         extra={"morphology": morphology.name, "t0_period": rep["t0_period"],
                                "jitter_generations": jitter_gens})
    _new_experiment_dir(out, manifest)
    _write_json(os.path.join(out, "config.json"), {"core": config.to_dict(), "protocol": protocol, "cpg_rep": rep})
    ckpt_dir = os.path.join(out, "checkpoints")
    os.makedirs(ckpt_dir)
    result = evolve.run_evolution(config, evaluator, workers=workers, checkpoint_dir=ckpt_dir,
                                  final_evaluation=False)
    _fitness_curve_csv(os.path.join(out, "fitness_curve.csv"), result.archive, config.objectives)

    periods, h_med, q_med = evaluator.detailed_scores(
        list(result.population), config.generations + 1, config.seed,
        repeats=config.final_eval_repeats, include_probes=True,
    )
    final_fitness = (h_med * q_med)[:, :3]
    best = evolve.select_best_filter(h_med, q_med)
    _write_final_population(
        os.path.join(out, "final_population.json"), "filter",
        replace_final(result, final_fitness),
        extra={"periods": periods, "h_tot": h_med.tolist(), "q": q_med.tolist()},
    )
    selected = {
        "schema_version": 1,
        "selected_index": best,
        "periods": periods,
        "h_tot": None if best is None else h_med[best].tolist(),
        "q": None if best is None else q_med[best].tolist(),
        "genome": None if best is None else genome_mod.Genome(result.population[best], "filter").to_dict(),
        "cpg_genome": rep["genome"],
        "t0_period": rep["t0_period"],
        "morphology": morphology.name,
    }
    _write_json(os.path.join(out, "selected_filter.json"), selected)
    return out


def replace_final(result: evolve.EvolutionResult, final_fitness: np.ndarray) -> evolve.EvolutionResult:
    return evolve.EvolutionResult(
        config=result.config, population=result.population, fitness=result.fitness,
        archive=result.archive, final_fitness=final_fitness,
    )


def _load_controller(path):
    data = _read_json(path)
    if data.get("schema_version") != CONTROLLER_SCHEMA_VERSION:
        raise click.UsageError(f"unsupported controller schema in {path}")
    try:
        cpg = genome_mod.Genome.from_dict(data["cpg_genome"])
    except (KeyError, ValidationError) as e:
        raise click.UsageError(f"invalid controller file {path}: {e}")
    decoded = genome_mod.decode(cpg)
    morphology = body.get_morphology(data.get("morphology", "normal"))
    wiring = None
    if data.get("filter_genome"):
        fdec = genome_mod.decode(genome_mod.Genome.from_dict(data["filter_genome"]))
        wiring = fdec.wiring
    return {
        "data": data,
        "network": decoded.network,
        "command": decoded.command,
        "morphology": morphology,
        "wiring": wiring,
        "t0_period": data.get("t0_period"),
    }


@click.group()
@click.version_option(__version__)
@click.option("--seed", type=int, default=None, help="Override the configured rng seed.")
@click.option("--workers", type=int, default=1, show_default=True, help="Evaluation worker processes (never affects results).")
@click.option("--out", type=click.Path(), default=None, help="Output directory or file.")
@click.pass_context
def main(ctx, seed, workers, out):
    """Quadruped CPG evolution workbench."""
    ctx.ensure_object(dict)
    ctx.obj.update(seed=seed, workers=workers, out=out)


def _resolve_out(ctx, default):
    out = ctx.obj.get("out")
    return out if out else default


@main.command("evolve-cpg")
@click.argument("config_path", type=click.Path())
@click.pass_context
def cmd_evolve_cpg(ctx, config_path):
    """Evolve a population of CPG+body genomes with the control-parameter sweep."""
    config, protocol = _load_evolution_config(_read_json(config_path), "cpg", ctx.obj["seed"])
    out = _resolve_out(ctx, f"cpg_run_seed{config.seed}")
    try:
        _run_cpg_experiment(config, protocol, out, ctx.obj["workers"])
    except FlexgaitError as e:
        raise click.UsageError(str(e))
    click.echo(out)


@main.command("evolve-filter")
@click.argument("reps_path", type=click.Path())
@click.argument("config_path", type=click.Path())
@click.option("--index", type=int, default=0, show_default=True, help="Representative CPG index in the reps file.")
@click.pass_context
def cmd_evolve_filter(ctx, reps_path, config_path, index):
    """Evolve a rhythmic-input filter on top of a chosen representative CPG."""
    reps = _read_json(reps_path)
    entries = reps["representatives"] if isinstance(reps, dict) else reps
    if not 0 <= index < len(entries):
        raise click.UsageError(f"--index {index} out of range (reps file has {len(entries)})")
    rep = entries[index]
    if rep.get("t0_period") is None:
        raise click.UsageError(
            f"representative {index} has no measurable walking period; cannot determine an input period"
        )
    config, protocol = _load_evolution_config(_read_json(config_path), "filter", ctx.obj["seed"])
    out = _resolve_out(ctx, f"filter_run_seed{config.seed}")
    try:
        _run_filter_experiment(config, protocol, rep, out, ctx.obj["workers"])
    except FlexgaitError as e:
        raise click.UsageError(str(e))
    click.echo(out)


@main.command("reps")
@click.argument("experiment_dir", type=click.Path())
@click.option("--eval-i-dc", type=float, default=0.5, show_default=True)
@click.option("--eval-theta-c", type=float, default=0.016, show_default=True)
@click.pass_context
def cmd_reps(ctx, experiment_dir, eval_i_dc, eval_theta_c):
    """Select up to four representative CPGs from a finished evolution run and
    measure their natural periods and gaits."""
    final_path = os.path.join(experiment_dir, "final_population.json")
    data = _read_json(final_path)
    manifest = _read_json(os.path.join(experiment_dir, "manifest.json"))
    morphology = body.get_morphology(manifest.get("morphology", "normal"))
    fitness = np.array(data["final_fitness"] if data.get("final_fitness") else data["fitness"])
    population = np.array(data["population"], dtype=int)
    try:
        picks = evolve.select_representatives(fitness)
    except ValidationError as e:
        raise click.UsageError(str(e))
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else manifest["seed"]
    entries = []
    for idx in picks:
        g = genome_mod.Genome(population[idx], "cpg")
        dec = genome_mod.decode(g)
        period, _ = evolve.measure_natural_period(dec.network, dec.command, morphology, seed=seed)
        sched = body.constant_schedule(20.0, i_dc=eval_i_dc, theta_c=eval_theta_c)
        res = body.run_trial(dec.network, dec.command, morphology, sched, seed, record="full")
        gm = analysis.gait_metrics(res)
        entries.append({
            "index": int(idx),
            "genome": g.to_dict(),
            "fitness": [float(v) for v in fitness[idx]],
            "t0_period": period,
            "gait": gm.gait,
            "max_corr": float(gm.corr.max()),
            "h_tot": gm.h_tot,
            "excluded": gm.excluded,
            "morphology": morphology.name,
        })
    out = _resolve_out(ctx, os.path.join(experiment_dir, "reps.json"))
    _write_json(out, {"schema_version": 1, "source": experiment_dir, "seed": seed, "representatives": entries})
    click.echo(out)


def _parse_grid(text: str) -> np.ndarray:
    try:
        lo, hi, n = text.split(":")
        return np.linspace(float(lo), float(hi), int(n))
    except ValueError:
        raise click.UsageError(f"grid must be 'lo:hi:n', got {text!r}")


@main.command("sweep")
@click.argument("controller_path", type=click.Path())
@click.option("--i-dc", "i_dc_spec", default="0.0:1.0:6", show_default=True, help="Grid lo:hi:n.")
@click.option("--theta-c", "theta_c_spec", default="-0.048:0.048:7", show_default=True, help="Grid lo:hi:n.")
@click.option("--duration", type=float, default=10.0, show_default=True)
@click.pass_context
def cmd_sweep(ctx, controller_path, i_dc_spec, theta_c_spec, duration):
    """Constant-parameter heatmap grid over brain-stem drive and posture shift."""
    ctl = _load_controller(controller_path)
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    cells = analysis.sweep_heatmap(
        ctl["network"], ctl["command"], ctl["morphology"],
        _parse_grid(i_dc_spec), _parse_grid(theta_c_spec), duration=duration, seed=seed,
    )
    out = _resolve_out(ctx, "sweep.csv")
    with open(out, "w") as f:
        f.write("i_dc,theta_c,speed,side_speed,height,max_corr,period,gait,excluded,failed\n")
        for c in cells:
            period = "" if c.period is None else repr(c.period)
            f.write(f"{c.i_dc!r},{c.theta_c!r},{c.speed!r},{c.side_speed!r},{c.height!r},"
                    f"{c.max_corr!r},{period},{c.gait},{int(c.excluded)},{int(c.failed)}\n")
    click.echo(out)


@main.command("entrain")
@click.argument("controller_path", type=click.Path())
@click.option("--period", type=float, default=None, help="Stimulus period in seconds.")
@click.option("--period-factor", type=float, default=None, help="Stimulus period as a multiple of the controller's natural period.")
@click.option("--times-file", type=click.Path(), default=None, help="Externally supplied impulse times (one per line, sorted).")
@click.option("--pre", type=float, default=8.0, show_default=True, help="Silent seconds before the stimulus.")
@click.option("--on", "on_duration", type=float, default=8.0, show_default=True, help="Stimulus duration.")
@click.option("--post", type=float, default=8.0, show_default=True, help="Silent seconds after the stimulus.")
@click.option("--amplitude", type=float, default=1.0, show_default=True)
@click.pass_context
def cmd_entrain(ctx, controller_path, period, period_factor, times_file, pre, on_duration, post, amplitude):
    """Silent/stimulus/silent run of a CPG+filter controller; emits joint,
    neuron, impulse and wavelet-sync series."""
    ctl = _load_controller(controller_path)
    if ctl["wiring"] is None:
        raise click.UsageError("controller has no filter module; entrainment needs one")
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    t0_period = ctl["t0_period"]

    if times_file is not None:
        try:
            times = stimulus.load_train(times_file)
        except ValidationError as e:
            raise click.UsageError(f"invalid stimulus file: {e}")
        stim_period = period or (t0_period if t0_period else 1.0)
    else:
        if period is None and period_factor is None:
            raise click.UsageError("give --period, --period-factor or --times-file")
        if period is None:
            if not t0_period:
                raise click.UsageError("controller has no natural period; use --period")
            period = period_factor * t0_period
        train = stimulus.StimulusTrain(period=period, duration=on_duration, amplitude=amplitude, seed=seed)
        times = stimulus.generate_train(train) + pre
        stim_period = period

    duration = pre + on_duration + post
    combined = stimulus.combine_with_cpg(ctl["network"], ctl["wiring"])
    signal = stimulus.lowpass_signal(times, ctl["wiring"].lowpass_tc, neuro.DT_CPG, duration, amplitude=amplitude)
    sched = body.constant_schedule(duration, i_dc=0.5, theta_c=0.0)
    n_steps = int(round(round(duration / body.DT_DECISION) * body.DT_DECISION / neuro.DT_CPG))
    if signal.size < n_steps:
        signal = np.pad(signal, (0, n_steps - signal.size))
    res = body.run_trial(combined, ctl["command"], ctl["morphology"], sched, seed,
                         external_input=signal[:n_steps], record="full")

    out = _resolve_out(ctx, "entrain_out")
    manifest = _manifest("entrain", {"controller": ctl["data"], "period": stim_period, "pre": pre,
                                     "on": on_duration, "post": post, "amplitude": amplitude},
                         seed,
                         ["trial_neurons.csv", "trial_body.csv", "impulses.txt", "sync.csv", "metrics.json"])
    _new_experiment_dir(out, manifest)
    body.export_trial_csv(res, os.path.join(out, "trial"))
    stimulus.save_train(times, os.path.join(out, "impulses.txt"))

    # wavelet synchrony of the first limb's leg joint angle at the stimulus period
    left_leg = res.body_joints[:, 0]
    sync = analysis.wavelet_sync(left_leg, stim_period, body.DT_PHYSICS)
    with open(os.path.join(out, "sync.csv"), "w") as f:
        f.write("time,sync\n")
        for t, s in zip(res.body_t, sync):
            f.write(f"{t!r},{s!r}\n")

    # entrainment quality over the second half of the stimulus window
    sel = (res.neuron_t >= pre + on_duration / 2) & (res.neuron_t < pre + on_duration)
    idx_a, idx_b = combined.motor_indices()
    sigma0 = stimulus.measure_sigma0(ctl["wiring"], seed=seed)
    try:
        t_out = analysis.estimate_period(
            res.neuron_u[sel, idx_a[0]], res.neuron_u[sel, idx_b[0]], neuro.DT_CPG,
            max_lag=(2.25 * t0_period) if t0_period else None,
        )
    except FlexgaitError:
        t_out = None
    q = 0.0 if t_out is None else analysis.entrainment_Q(t_out, stim_period, sigma0)
    _write_json(os.path.join(out, "metrics.json"), {
        "stimulus_period": stim_period, "t_out": t_out, "sigma0": sigma0, "q": q,
        "h_tot": res.metrics.h_tot, "fallen": res.metrics.fallen,
    })
    click.echo(out)


@main.command("analyze")
@click.option("--controller", "controller_path", type=click.Path(), default=None)
@click.option("--trajectory", "trajectory_prefix", type=click.Path(), default=None,
              help="Prefix of exported trial CSVs (<prefix>_neurons.csv, <prefix>_body.csv).")
@click.option("--i-dc", type=float, default=0.5, show_default=True)
@click.option("--theta-c", type=float, default=0.016, show_default=True)
@click.option("--duration", type=float, default=20.0, show_default=True)
@click.pass_context
def cmd_analyze(ctx, controller_path, trajectory_prefix, i_dc, theta_c, duration):
    """Gait metrics (period, interlimb correlation, class, height gate) for a
    controller run or an exported trajectory."""
    seed = ctx.obj["seed"] if ctx.obj["seed"] is not None else 0
    if (controller_path is None) == (trajectory_prefix is None):
        raise click.UsageError("give exactly one of --controller or --trajectory")
    if controller_path is not None:
        ctl = _load_controller(controller_path)
        sched = body.constant_schedule(duration, i_dc=i_dc, theta_c=theta_c)
        res = body.run_trial(ctl["network"], ctl["command"], ctl["morphology"], sched, seed, record="full")
        gm = analysis.gait_metrics(res)
        h_tot = gm.h_tot
    else:
        neurons = _read_csv(trajectory_prefix + "_neurons.csv")
        bodycsv = _read_csv(trajectory_prefix + "_body.csv")
        u_cols = [c for c in neurons["columns"] if c.startswith("u_")]
        u = neurons["data"][:, [neurons["columns"].index(c) for c in u_cols]]
        t = neurons["data"][:, neurons["columns"].index("time")]
        dt = float(t[1] - t[0])
        half = len(u) // 2
        offset = len(u_cols) - 12
        idx_a = [offset + 3 * k + 1 for k in range(4)]
        idx_b = [offset + 3 * k + 2 for k in range(4)]
        try:
            period = analysis.estimate_period(u[half:, idx_a[0]], u[half:, idx_b[0]], dt)
        except FlexgaitError:
            period = None
        corr = analysis.interlimb_correlation(np.maximum(u[half:, idx_a], 0.0).T)
        gait = analysis.classify_gait(corr.matrix, degenerate=corr.degenerate)
        z = bodycsv["data"][:, bodycsv["columns"].index("pos_z")]
        h_tot = float(np.minimum(z / z[0], 1.25).mean())
        gm = analysis.GaitMetrics(period=period, corr=corr.matrix, gait=gait, h_tot=h_tot,
                                  t_tot=float("nan"), excluded=not analysis.passes_height_gate(h_tot))
    out = _resolve_out(ctx, "metrics.csv")
    with open(out, "w") as f:
        f.write("period,gait,max_corr,h_tot,excluded\n")
        period = "" if gm.period is None else repr(gm.period)
        f.write(f"{period},{gm.gait},{float(gm.corr.max())!r},{gm.h_tot!r},{int(gm.excluded)}\n")
    click.echo(out)


def _read_csv(path):
    try:
        with open(path) as f:
            header = f.readline().strip().split(",")
            rows = [[float(v) if v else float("nan") for v in line.strip().split(",")] for line in f if line.strip()]
    except FileNotFoundError:
        raise click.UsageError(f"file not found: {path}")
    return {"columns": header, "data": np.array(rows)}


@main.command("resume")
@click.argument("experiment_dir", type=click.Path())
@click.pass_context
def cmd_resume(ctx, experiment_dir):
    """Continue an interrupted evolution run to its configured generation count."""
    manifest = _read_json(os.path.join(experiment_dir, "manifest.json"))
    ckpt_dir = os.path.join(experiment_dir, "checkpoints")
    try:
        names = sorted(n for n in os.listdir(ckpt_dir) if n.startswith("gen_"))
    except FileNotFoundError:
        raise click.UsageError(f"no checkpoints directory in {experiment_dir}")
    if not names:
        raise click.UsageError(f"no checkpoints found in {ckpt_dir}")
    state = evolve.load_checkpoint(os.path.join(ckpt_dir, names[-1]))
    cfg_all = manifest["config"]
    config = evolve.EvolutionConfig.from_dict(cfg_all["core"])
    protocol = cfg_all.get("protocol", {})
    workers = ctx.obj["workers"]
    if config.kind == "cpg":
        evaluator = evolve.CpgEvaluator(
            morphology=body.get_morphology(protocol.get("morphology", "normal")),
            repeats=config.eval_repeats,
            theta_c_mag=protocol.get("theta_c_mag", 0.016),
            i_dc_base=protocol.get("i_dc_base", 0.5),
            i_dc_end=protocol.get("i_dc_end", 1.0),
            stage_duration=protocol.get("stage_duration", 10.0),
            per_stage_penalty=protocol.get("per_stage_penalty", True),
            custom_schedule=body.Schedule.from_dict(protocol["schedule"]) if "schedule" in protocol else None,
        )
        result = evolve.run_evolution(config, evaluator, workers=workers,
                                      checkpoint_dir=ckpt_dir, resume=state)
        _fitness_curve_csv(os.path.join(experiment_dir, "fitness_curve.csv"), result.archive, config.objectives)
        _write_final_population(os.path.join(experiment_dir, "final_population.json"), "cpg", result)
    else:
        raise click.UsageError("resume currently supports CPG runs; rerun filter experiments from their manifest")
    click.echo(experiment_dir)


@main.command("rerun")
@click.argument("manifest_path", type=click.Path())
@click.pass_context
def cmd_rerun(ctx, manifest_path):
    """Re-execute an experiment from its manifest; outputs are byte-identical
    to the original regardless of --workers."""
    manifest = _read_json(manifest_path)
    command = manifest.get("command")
    out = _resolve_out(ctx, None)
    if out is None:
        raise click.UsageError("rerun needs --out for the new experiment directory")
    workers = ctx.obj["workers"]
    if command == "evolve-cpg":
        config = evolve.EvolutionConfig.from_dict(manifest["config"]["core"])
        _run_cpg_experiment(config, manifest["config"].get("protocol", {}), out, workers)
    elif command == "evolve-filter":
        config = evolve.EvolutionConfig.from_dict(manifest["config"]["core"])
        _run_filter_experiment(config, manifest["config"].get("protocol", {}),
                               manifest["config"]["cpg_rep"], out, workers)
    else:
        raise click.UsageError(f"cannot rerun command {command!r}")
    click.echo(out)


if __name__ == "__main__":
    main()
