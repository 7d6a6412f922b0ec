"""Write the shipped champion controller asset + entrainment diagnostics."""
import json, math, os
import numpy as np
from flexgait import analysis, body, evolve, genome, neuro, stimulus

summary = json.load(open("/root/pkg/runs/filter_summary.json"))
champ = summary["champion_cpg"]
best_seed = summary["best_filter_seed"]
filt = summary["filters"][str(best_seed)]
print("champion:", champ["run_seed"], champ["index"], "T0", champ["t0_period"], "gait", champ["gait"])
print("filter seed", best_seed, "meanQ", filt["mean_q"], "q", filt["q"])

controller = {
    "schema_version": 1,
    "morphology": "normal",
    "cpg_genome": champ["genome"],
    "filter_genome": filt["genome"],
    "t0_period": champ["t0_period"],
}
os.makedirs("/root/pkg/assets", exist_ok=True)
json.dump(controller, open("/root/pkg/assets/champion_controller.json", "w"), sort_keys=True, indent=1)

manifest = {
    "description": "CPG+filter controller produced by the desk-scale pipeline in this repository",
    "cpg": {"config": {"population": 40, "partitions": 4, "objectives": 4, "generations": 40,
                       "p_c": 0.7, "p_m": 0.05, "eval_repeats": 3, "final_eval_repeats": 15,
                       "seed": champ["run_seed"], "batch_size": 20},
            "individual_index": champ["index"], "gait": champ["gait"],
            "t0_period": champ["t0_period"], "h_tot": champ["h_tot"],
            "fitness_sum": champ["fitness_sum"]},
    "filter": {"config": {"population": 40, "partitions": 7, "objectives": 3, "generations": 30,
                          "p_c": 1.0, "p_m": 0.05, "eval_repeats": 1, "final_eval_repeats": 5,
                          "seed": best_seed, "batch_size": 20},
               "periods": filt["periods"], "h_tot": filt["h"], "q": filt["q"],
               "mean_q_evolution_periods": filt["mean_q"]},
}
json.dump(manifest, open("/root/pkg/assets/champion_manifest.json", "w"), sort_keys=True, indent=1)
print("assets written")

# entrainment sync diagnostics at each period
dec = genome.decode(genome.Genome.from_dict(champ["genome"]))
wiring = genome.decode(genome.Genome.from_dict(filt["genome"])).wiring
combined = stimulus.combine_with_cpg(dec.network, wiring)
morph = body.normal_morphology()
t0p = champ["t0_period"]
phi = evolve.PHI
for label, period in [("T0/phi", t0p/phi), ("T0", t0p), ("phi*T0", phi*t0p),
                      ("T0/sqrt(phi)", t0p/math.sqrt(phi)), ("sqrt(phi)*T0", math.sqrt(phi)*t0p)]:
    pre = on = post = 8.0
    duration = pre + on + post
    times = stimulus.generate_train(stimulus.StimulusTrain(period=period, duration=on, seed=0)) + pre
    signal = stimulus.lowpass_signal(times, wiring.lowpass_tc, neuro.DT_CPG, duration)
    n_steps = int(round(round(duration / body.DT_DECISION) * body.DT_DECISION / neuro.DT_CPG))
    res = body.run_trial(combined, dec.command, morph, body.constant_schedule(duration), 0,
                         external_input=signal[:n_steps], record="full")
    sync = analysis.wavelet_sync(res.body_joints[:, 0], period, body.DT_PHYSICS)
    t = res.body_t
    edge = 2 * 1.5 * period
    b_pre = float(sync[(t > edge) & (t < pre)].mean())
    s_on = float(sync[(t > pre + on/2) & (t < pre + on)].mean())
    b_post = float(sync[(t > duration - post + edge) & (t < duration - edge)].mean())
    # measured walking period in the stimulated window
    sel = (res.neuron_t >= pre + on/2) & (res.neuron_t < pre + on)
    idx_a, idx_b = combined.motor_indices()
    try:
        t_out = analysis.estimate_period(res.neuron_u[sel, idx_a[0]], res.neuron_u[sel, idx_b[0]],
                                         neuro.DT_CPG, max_lag=2.25*t0p)
    except Exception:
        t_out = None
    print(f"{label:14s} T_in={period:.3f} t_out={t_out} pre={b_pre:.3f} on={s_on:.3f} post={b_post:.3f} H={res.metrics.h_tot:.3f}")
