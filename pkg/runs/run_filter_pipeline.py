"""Champion selection + desk-scale filter evolution over 3 seeds."""
import json, math, os, time
import numpy as np
from flexgait import analysis, body, evolve, genome, neuro, stimulus

t0 = time.time()
morph = body.normal_morphology()

# champion: best all-positive individual with measurable period and upright trial
candidates = []
for seed in (1, 2, 3, 4, 5):
    data = json.load(open(f"/root/pkg/runs/cpg_seed{seed}/final.json"))
    pop = np.array(data["population"], dtype=int)
    fit = np.array(data["final_fitness"])
    for idx in np.flatnonzero((fit > 0).all(axis=1)):
        candidates.append((float(fit[idx].sum()), seed, int(idx)))
candidates.sort(reverse=True)
print(f"{len(candidates)} all-positive candidates", flush=True)

champion = None
for s, seed, idx in candidates:
    data = json.load(open(f"/root/pkg/runs/cpg_seed{seed}/final.json"))
    g = genome.Genome(np.array(data["population"][idx]), "cpg")
    dec = genome.decode(g)
    period, trial = evolve.measure_natural_period(dec.network, dec.command, morph, seed=0)
    gm = analysis.gait_metrics(trial)
    print(f"cand seed{seed}#{idx} sum={s:.2f} T0={period} H={trial.metrics.h_tot:.3f} gait={gm.gait}", flush=True)
    if period is not None and trial.metrics.h_tot >= 0.75:
        champion = dict(seed=seed, idx=idx, genome=g, dec=dec, period=period,
                        h=trial.metrics.h_tot, gait=gm.gait, fsum=s)
        break
assert champion, "no champion found"
print("CHAMPION:", champion["seed"], champion["idx"], champion["period"], champion["gait"], flush=True)

ctx = evolve.FilterEvaluationContext(
    cpg_network=champion["dec"].network, command=champion["dec"].command,
    morphology=morph, t0_period=champion["period"])
results = {}
best = None
for fseed in (1, 2, 3):
    cfg = evolve.EvolutionConfig(kind="filter", n_alleles=62, population=40, partitions=7,
                                 objectives=3, generations=30, p_c=1.0, p_m=0.05,
                                 eval_repeats=1, final_eval_repeats=5, seed=fseed, batch_size=20)
    ev = evolve.FilterEvaluator(context=ctx, repeats=1)
    res = evolve.run_evolution(cfg, ev, workers=2, final_evaluation=False)
    periods, h_med, q_med = ev.detailed_scores(list(res.population), cfg.generations + 1,
                                               cfg.seed, repeats=5, include_probes=True)
    sel = evolve.select_best_filter(h_med, q_med)
    entry = {"selected": sel, "periods": periods}
    if sel is not None:
        entry.update(h=h_med[sel].tolist(), q=q_med[sel].tolist(),
                     mean_q=float(q_med[sel, :3].mean()),
                     genome=genome.Genome(res.population[sel], "filter").to_dict())
        if best is None or entry["mean_q"] > best[1]["mean_q"]:
            best = (fseed, entry)
    results[fseed] = entry
    print(f"filter seed {fseed}: sel={sel} "
          + (f"meanQ={entry.get('mean_q'):.3f} h={np.round(entry['h'],3)} q={np.round(entry['q'],3)}" if sel is not None else "none")
          + f" t={time.time()-t0:.0f}s", flush=True)

out = {
    "champion_cpg": {"run_seed": champion["seed"], "index": champion["idx"],
                     "genome": champion["genome"].to_dict(), "t0_period": champion["period"],
                     "h_tot": champion["h"], "gait": champion["gait"], "fitness_sum": champion["fsum"]},
    "filters": {str(k): v for k, v in results.items()},
    "best_filter_seed": None if best is None else best[0],
}
json.dump(out, open("/root/pkg/runs/filter_summary.json", "w"), indent=1)
print("DONE", time.time() - t0, flush=True)
