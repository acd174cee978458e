"""Built-in oracle checks runnable from the CLI without the test suite."""

import itertools

import numpy as np

from .channel import ground_truth_sparse, synthesize_scene, true_offsets
from .config import desk_preset
from .gdop import fim_aoa_ula, fim_numeric_oracle, gdop_combined, gdop_ula
from .geometry import steering_ula
from .vbi import forward_backward_q


def _check(name, ok, detail=""):
    status = "pass" if ok else "FAIL"
    print(f"[{status}] {name}" + (f" ({detail})" if detail else ""))
    return bool(ok)


def run_selftest(verbose: bool = True) -> int:
    ok = True
    rng = np.random.default_rng(2024)

    # dictionaries reproduce the noiseless observation at the true offsets
    cfg = desk_preset()
    scene = synthesize_scene(cfg, seed=0)
    worst = 0.0
    for t in (0, cfg.n_slots // 2, cfg.n_slots - 1):
        off = true_offsets(scene.trajectory, scene.channels[t], scene.grid, t)
        mats = scene.sensing_at(off)
        z, v = ground_truth_sparse(scene.trajectory, scene.channels[t], scene.grid, t)
        rel = np.linalg.norm(scene.y_clean[t] - mats.F @ z - mats.Xi @ v) / np.linalg.norm(
            scene.y_clean[t]
        )
        worst = max(worst, rel)
    ok &= _check("sensing consistency", worst < 1e-9, f"worst rel {worst:.2e}")

    # chain marginals equal exhaustive enumeration
    worst = 0.0
    for _ in range(10):
        U, M = int(rng.integers(2, 6)), int(rng.integers(1, 5))
        T = rng.uniform(0.05, 1, (U, U))
        T /= T.sum(axis=1, keepdims=True)
        nu = rng.uniform(0.05, 1, (M, U))
        nu /= nu.sum(axis=1, keepdims=True)
        tm = rng.uniform(0.05, 1, (M, U))
        tm /= tm.sum(axis=1, keepdims=True)
        marg = np.zeros((M, U))
        for q in itertools.product(range(U), repeat=M):
            w = 1.0 / U
            for m in range(M):
                w *= nu[m, q[m]] * tm[m, q[m]]
            for m in range(M - 1):
                w *= T[q[m], q[m + 1]]
            for m in range(M):
                marg[m, q[m]] += w
        marg /= marg.sum(axis=1, keepdims=True)
        _, belief = forward_backward_q(nu, T, tm)
        worst = max(worst, float(np.abs(belief - marg).max()))
    ok &= _check("chain marginals", worst < 1e-9, f"worst {worst:.2e}")

    # numeric information matches the closed form
    worst = 0.0
    for omega in (-0.9, 0.0, 0.7):
        for K in (2, 8, 16):
            closed = fim_aoa_ula(omega, 1.3, 0.5, K)
            num = fim_numeric_oracle(
                lambda p: 1.3 * steering_ula(np.pi / 2 - p[0], K), [omega], 0.5
            )[0, 0]
            worst = max(worst, abs(num - closed) / closed)
    ok &= _check("linear-array information", worst < 1e-6, f"worst rel {worst:.2e}")

    g = rng.uniform(0.1, 10.0, 200)
    h = rng.uniform(0.1, 10.0, 200)
    comb = np.array([gdop_combined(a, b) for a, b in zip(g, h)])
    ok &= _check("harmonic combination bound", bool(np.all(comb <= np.minimum(g, h) + 1e-12)))
    ok &= _check(
        "equal-anchor halving",
        abs(gdop_combined(3.7, 3.7) - 1.85) < 1e-12,
    )
    ratio = gdop_ula(0.3, 80.0, 1e-5, 8, 7e9, 3) / gdop_ula(0.3, 40.0, 1e-5, 8, 7e9, 3)
    ok &= _check("distance power law", abs(ratio - 2**4) < 1e-9, f"ratio {ratio:.6f}")

    # determinism of scene synthesis
    s1 = synthesize_scene(cfg, seed=7)
    s2 = synthesize_scene(cfg, seed=7)
    same = all(np.array_equal(a, b) for a, b in zip(s1.y, s2.y))
    ok &= _check("seeded determinism", same)

    print("selftest:", "all checks passed" if ok else "FAILURES present")
    return 0 if ok else 1
