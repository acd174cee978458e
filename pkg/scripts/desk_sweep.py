#!/usr/bin/env python3
"""Quick desk-scale tracking sweep used while tuning: rmse and iteration
counts per seed and scatterer level."""

import sys
import time

import numpy as np

from platoonloc.channel import synthesize_scene
from platoonloc.config import desk_preset
from platoonloc.tracker import initial_state, make_vbi_options, track_slot


def run(tag, cfg, seed):
    scene = synthesize_scene(cfg, seed=seed)
    opts = make_vbi_options(cfg)
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
        f"{tag} s{seed}: rmse={np.sqrt((errs**2).mean()):.2f} "
        f"m0={np.sqrt((errs[:, 0] ** 2).mean()):.2f} "
        f"m1={np.sqrt((errs[:, -1] ** 2).mean()):.2f} "
        f"le10={(its <= 10).mean():.2f} t={time.perf_counter() - t0:.0f}s "
        f"iters={its.tolist()}",
        flush=True,
    )


if __name__ == "__main__":
    levels = [int(v) for v in (sys.argv[1] if len(sys.argv) > 1 else "0,1,4").split(",")]
    seeds = [int(v) for v in (sys.argv[2] if len(sys.argv) > 2 else "1,2,3").split(",")]
    for L in levels:
        for seed in seeds:
            cfg = desk_preset()
            cfg.nlos.l_bs = L
            cfg.nlos.l_ris = L
            run(f"L={L}", cfg, seed)
    print("ALLDONE", flush=True)
