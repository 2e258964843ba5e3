"""Time the compiled kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Also runs one full baseline platoon rollout under each backend and checks
that both produce the same trajectory bytes.
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from stopgo import _pycore

try:
    from stopgo import _core
except ImportError:
    _core = None


def sweep_case(mod, n=10, steps=1000):
    rng = np.random.default_rng(0)
    old_pos = -30.0 * np.arange(n, dtype=np.float64)
    old_spd = np.full(n, 5.0)
    lengths = np.full(n, 5.0)
    held = np.zeros(n)
    us = rng.random((steps, n))

    def run():
        pos, spd, acc = old_pos.copy(), old_spd.copy(), np.zeros(n)
        for k in range(steps):
            mod.human_sweep(old_pos, old_spd, pos, spd, acc, held, lengths, 1, k % 10 == 0, us[k],
                            2.6, 4.5, 30.0, 1.0, 0.9, 2.5, 1.0, 0.1)
    return run


def rolling_case(mod, n=72_000, window=100):
    x = np.random.default_rng(1).uniform(0, 10, n)
    return lambda: mod.rolling_stats(x, window)


ROLLOUT = """
import hashlib
from stopgo.sim import PlatoonEnv, SimConfig, rollout
from stopgo.trajdata import synth_profile
from stopgo import kernels
import time
prof = synth_profile("sine", 5, 3, 60, 1801, 0.1)
t0 = time.perf_counter()
tr = rollout(PlatoonEnv(SimConfig(), prof, baseline=True, record=True), horizon=18000)
dt = time.perf_counter() - t0
print(kernels.BACKEND, f"{dt:.3f}", hashlib.sha256(tr.position.tobytes() + tr.speed.tobytes()).hexdigest())
"""


def rollout_under(pure):
    env = dict(os.environ)
    env.pop("STOPGO_PURE_PYTHON", None)
    if pure:
        env["STOPGO_PURE_PYTHON"] = "1"
    out = subprocess.run([sys.executable, "-c", ROLLOUT], env=env, capture_output=True,
                         text=True, check=True)
    backend, secs, digest = out.stdout.split()
    return backend, float(secs), digest


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _core is None:
        sys.exit("compiled extension not built; run `pip install -e . --no-build-isolation`")

    print(f"{'kernel':<34}{'python s':>10}{'cython s':>10}{'speedup':>9}")
    for label, case in (("human_sweep x1000 steps, 10 veh", sweep_case),
                        ("rolling_stats n=72000, T=100", rolling_case)):
        tp = best(case(_pycore), args.repeat)
        tc = best(case(_core), args.repeat)
        print(f"{label:<34}{tp:>10.4f}{tc:>10.4f}{tp / tc:>8.1f}x")

    py = rollout_under(pure=True)
    cy = rollout_under(pure=False)
    print(f"{'baseline rollout 18000 steps':<34}{py[1]:>10.3f}{cy[1]:>10.3f}{py[1] / cy[1]:>8.1f}x")
    print("trajectories identical:", py[2] == cy[2], f"({py[0]} vs {cy[0]})")


if __name__ == "__main__":
    main()
