"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py --n 128 --repeat 5
"""

import argparse
import timeit

import numpy as np

from qchydro import _kernels_py as py

try:
    from qchydro import _core as core
except ImportError:  # extension not built
    core = None


def _herm(rng, shape):
    a = rng.standard_normal(shape + (2, 2)) + 1j * rng.standard_normal(shape + (2, 2))
    return 0.5 * (a + np.conj(np.swapaxes(a, -1, -2)))


def cases(n, rng):
    shape = (n, n)
    rho, H = _herm(rng, shape), _herm(rng, shape)
    gr = np.stack([_herm(rng, shape) for _ in range(2)])
    gH = np.stack([_herm(rng, shape) for _ in range(2)])
    gcr = np.stack([_herm(rng, shape) for _ in range(2)])
    gc = rng.standard_normal((2,) + shape)
    c = rng.standard_normal(shape)
    D = 1.0 + rng.random(shape)
    u = rng.standard_normal((2,) + shape)
    psi = rng.standard_normal(shape + (2,)) + 1j * rng.standard_normal(shape + (2,))
    gpsi = rng.standard_normal((2,) + shape + (2,)) + 1j * rng.standard_normal((2,) + shape + (2,))
    f = rng.standard_normal(shape + (2, 2))
    return {
        "fd4": lambda m: m.fd4(f, 0, 0.1),
        "matmul2": lambda m: m.matmul2(rho, H),
        "inner_re2": lambda m: m.inner_re2(rho, H),
        "hermitize2": lambda m: m.hermitize2(rho),
        "qc_pointwise": lambda m: m.qc_pointwise(rho, H, gr, gH, gc, gcr, None, c, 1.0 / D, D, 1.0, u),
        "outer2": lambda m: m.outer2(psi),
        "renormalize2": lambda m: m.renormalize2(psi, 1e-15),
        "spinor_rhs2": lambda m: m.spinor_rhs2(H, psi, gpsi, u, 1.0),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=128, help="planar grid size")
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--number", type=int, default=10)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    print(f"grid {args.n}x{args.n}, best of {args.repeat} x {args.number} calls")
    print(f"{'kernel':<14}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases(args.n, rng).items():
        t_py = min(timeit.repeat(lambda: fn(py), number=args.number, repeat=args.repeat)) / args.number
        if core is None:
            print(f"{name:<14}{1e3 * t_py:12.3f}{'-':>12}{'-':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(core), number=args.number, repeat=args.repeat)) / args.number
        print(f"{name:<14}{1e3 * t_py:12.3f}{1e3 * t_c:12.3f}{t_py / t_c:10.1f}")


if __name__ == "__main__":
    main()
