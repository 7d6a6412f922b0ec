"""Desk-scale CPG evolution: 5 seeds, pop 40, 40 generations."""
import json, os, sys, time
import numpy as np
from flexgait import body, evolve

t0 = time.time()
summary = {}
for seed in (1, 2, 3, 4, 5):
    cfg = evolve.EvolutionConfig(
        kind="cpg", n_alleles=32, population=40, partitions=4, objectives=4,
        generations=40, p_c=0.7, p_m=0.05, eval_repeats=3, final_eval_repeats=15,
        seed=seed, batch_size=20,
    )
    ev = evolve.CpgEvaluator(morphology=body.normal_morphology(), repeats=cfg.eval_repeats)
    out = f"/root/pkg/runs/cpg_seed{seed}"
    os.makedirs(out + "/checkpoints", exist_ok=True)
    res = evolve.run_evolution(cfg, ev, workers=2, checkpoint_dir=out + "/checkpoints")
    n_pos = int((res.final_fitness > 0).all(axis=1).sum())
    summary[seed] = {
        "all_positive": n_pos,
        "max_final": [float(v) for v in res.final_fitness.max(axis=0)],
        "elapsed": time.time() - t0,
    }
    json.dump({"population": res.population.tolist(),
               "fitness": res.fitness.tolist(),
               "final_fitness": res.final_fitness.tolist(),
               "archive": res.archive}, open(out + "/final.json", "w"))
    print(f"seed {seed}: all_positive={n_pos} max={summary[seed]['max_final']} t={summary[seed]['elapsed']:.0f}s", flush=True)
json.dump(summary, open("/root/pkg/runs/cpg_summary.json", "w"), indent=1)
print("DONE", time.time() - t0, flush=True)
