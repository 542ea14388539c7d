"""Time the numba kernels against their pure-numpy fallbacks.

Run with ``python benchmarks/bench_kernels.py [--repeat N]``. The jitted
variants are warmed up once before timing so compilation is excluded.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np

from relstate import _kernels as kn


def _cases(rng: np.random.Generator) -> dict:
    states = rng.normal(size=(10_001, 2)) + 1j * rng.normal(size=(10_001, 2))
    values = rng.normal(size=(129, 129)) + 1j * rng.normal(size=(129, 129))
    pu, pv = rng.uniform(-1, 1, 20_000), rng.uniform(-1, 1, 20_000)
    field = rng.normal(size=(64, 512)) + 1j * rng.normal(size=(64, 512))
    m, n_steps = 512, 800
    x0 = rng.normal(size=m) + 1j * rng.normal(size=m)
    v0 = rng.normal(size=m) + 1j * rng.normal(size=m)
    nu2 = rng.uniform(1, 100, m).astype(np.complex128)
    k_table = (0.5j + 1e-3 * np.arange(2 * n_steps + 1)).astype(np.complex128)
    return {
        "overlap_increments": (states,),
        "bilinear": (values, -1.0, -1.0, 2 / 128, 2 / 128, pu, pv),
        "laplacian_periodic": (field, 0.1),
        "modal_rk4": (x0, v0, nu2, k_table, 1e-3, n_steps, 8),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    cases = _cases(np.random.default_rng(0))
    print(f"{'kernel':22s} {'numpy [ms]':>12s} {'numba [ms]':>12s} {'speedup':>9s}")
    for name, call_args in cases.items():
        numpy_fn = getattr(kn, f"{name}_numpy")
        jit_fn = getattr(kn, f"{name}_jit")
        jit_fn(*call_args)
        t_np = min(timeit.repeat(lambda: numpy_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        t_jit = min(timeit.repeat(lambda: jit_fn(*call_args), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:22s} {t_np:12.3f} {t_jit:12.3f} {t_np / t_jit:9.2f}x")
    print(f"active backend: {kn.BACKEND}")


if __name__ == "__main__":
    main()
