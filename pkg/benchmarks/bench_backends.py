"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_backends.py [--repeat 5]

Each row reports the best wall time over ``--repeat`` calls per backend and the
speedup of the compiled path. The SMC row swaps the kernel module used by
``gpsmc.gp`` and ``gpsmc.smc`` in place, so both runs see identical inputs.
"""
import argparse
import time

import numpy as np

from gpsmc import _backend, gp, smc
from gpsmc.gp import Dataset, GpModel, KernelSpec, MeanSpec
from gpsmc.priors import GaussianOnLog, GaussianOnNatural, PriorSpec


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def batch_inputs(N, n, d, m, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (n, d))
    Xs = rng.uniform(-2, 2, (m, d))
    R = rng.standard_normal((N, n))
    inv_ls = np.exp(-rng.normal(0, 0.3, (N, d)))
    sf2 = np.exp(rng.normal(0, 0.3, N))
    sn2 = np.exp(rng.uniform(-3, -1, N))
    return X, Xs, R, inv_ls, sf2, sn2


def smc_problem(n=40, d=3, seed=1):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-1, 1, (n, d))
    y = np.sin(2 * X[:, 0]) + 0.1 * rng.standard_normal(n)
    model = GpModel(KernelSpec("se_ard", d), MeanSpec("constant", d), Dataset(X, y))
    prior = PriorSpec([GaussianOnLog(0, 1)] * (d + 1) + [GaussianOnNatural(0, 1), GaussianOnLog(-2, 1)])
    return model, prior


def cases():
    X, Xs, R, inv_ls, sf2, sn2 = batch_inputs(200, 60, 3, 50)
    yield "loglik batch N=200 n=60", lambda k: k.se_loglik_batch(X, R, inv_ls, sf2, sn2)
    X2, Xs2, R2, inv2, sf22, sn22 = batch_inputs(100, 200, 5, 100)
    yield "loglik batch N=100 n=200", lambda k: k.se_loglik_batch(X2, R2, inv2, sf22, sn22)
    yield "predict batch N=200 n=60 m=50", lambda k: k.se_predict_batch(X, R, Xs, inv_ls, sf2, sn2)
    w = np.random.default_rng(2).random(100_000)
    w /= w.sum()
    yield "systematic resample N=1e5", lambda k: k.systematic_resample(w, 0.37)
    model, prior = smc_problem()
    cfg = smc.SmcConfig(n_particles=100, n_stages=4, n_moves=5)

    def run_smc(k):
        saved = gp._kern, smc._kern
        gp._kern = smc._kern = k
        try:
            smc.run(cfg, smc.TemperingSequence.from_config(model, prior, cfg), np.random.default_rng(0))
        finally:
            gp._kern, smc._kern = saved

    yield "SMC run N=100 P=4 K=5 n=40", run_smc


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args(argv)
    names = _backend.available_backends()
    if "compiled" not in names:
        print("compiled backend not built; only timing the python fallback")
    kerns = {name: _backend.get_backend(name) for name in names}
    print(f"{'case':34s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases():
        t = {name: best_time(lambda: fn(k), args.repeat) for name, k in kerns.items()}
        row = f"{label:34s}" + "".join(f"{t[n] * 1e3:10.2f}ms" for n in names)
        if len(names) > 1:
            row += f"{t['python'] / t['compiled']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
