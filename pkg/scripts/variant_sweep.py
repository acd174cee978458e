#!/usr/bin/env python3
"""Compare exchange schedules and damping settings at desk scale."""

import sys
import time

import numpy as np

from platoonloc.channel import synthesize_scene
from platoonloc.config import desk_preset
from platoonloc.tracker import initial_state, make_vbi_options, track_slot

VARIANTS = {
    "sweep-undamped": dict(exchange_every_sweep=True, message_damping=1.0),
    "sweep-damped": dict(exchange_every_sweep=True, message_damping=0.5),
    "pass-undamped": dict(exchange_every_sweep=False, message_damping=1.0),
}


def run(tag, variant, L, seed):
    cfg = desk_preset()
    cfg.nlos.l_bs = L
    cfg.nlos.l_ris = L
    scene = synthesize_scene(cfg, seed=seed)
    opts = make_vbi_options(cfg)
    for k, v in VARIANTS[variant].items():
        setattr(opts, k, v)
    state = initial_state(scene)
    errs, its = [], []
    t0 = time.perf_counter()
    for t in range(cfg.n_slots):
        state, pos, rec = track_slot(scene.y[t], state, scene, t, opts)
        errs.append(np.linalg.norm(pos - scene.trajectory.positions[t], axis=1))
        its.append(rec.iterations)
    errs = np.array(errs)
    its = np.array(its)
    print(
        f"{tag} L={L} s{seed}: rmse={np.sqrt((errs**2).mean()):.2f} "
        f"m0={np.sqrt((errs[:, 0] ** 2).mean()):.2f} m1={np.sqrt((errs[:, 1] ** 2).mean()):.2f} "
        f"le10={(its <= 10).mean():.2f} t={time.perf_counter() - t0:.0f}s",
        flush=True,
    )
    return np.sqrt((errs**2).mean()), (its <= 10).mean()


if __name__ == "__main__":
    names = sys.argv[1].split(",") if len(sys.argv) > 1 else list(VARIANTS)
    for name in names:
        stats = []
        for L in (0, 1):
            for seed in (1, 2, 3):
                stats.append(run(name, name, L, seed))
        r = np.mean([s[0] ** 2 for s in stats]) ** 0.5
        f = np.mean([s[1] for s in stats])
        print(f"== {name}: rms {r:.2f}, le10 {f:.2f}", flush=True)
    print("ALLDONE", flush=True)
