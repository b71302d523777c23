"""Compare the compiled (python-flint) and pure-Python (sympy) polynomial backends.

Each workload builds the Fedosov connection and a few star products on a
builtin geometry with both backends, checks that the rendered outputs are
byte-identical, and reports the best-of-N wall time.

    python benchmarks/bench_backends.py
    python benchmarks/bench_backends.py --geometry so3_rank3 --K 7 --order 2 --repeat 3
"""
import argparse
import time

from superfedosov._polybackend import HAVE_FLINT
from superfedosov.fedosov import build_r, dump_r, fibre_product, star
from superfedosov.galgebra import render
from superfedosov.geometry import builtin_geometry
from superfedosov.sections import parse_section

PAIRS = [("x1*e1", "e2 + x2"), ("x1^2", "x2*e1^e2"), ("e1", "e1")]


def workload(name, backend, K, order):
    spec = builtin_geometry(name, backend)
    data = build_r(spec, K=K)
    alg = spec.algebra
    out = [dump_r(data)]
    for a, b in PAIRS:
        phi, psi = parse_section(a, alg), parse_section(b, alg)
        out.append(render(star(phi, psi, data, order)))
    return "\n".join(out), fibre_product(spec).stats()


def best_of(fn, repeat):
    best, result = None, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        result = fn()
        dt = time.perf_counter() - t0
        best = dt if best is None else min(best, dt)
    return best, result


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--geometry", default="hess_rank2")
    p.add_argument("--K", type=int, default=8)
    p.add_argument("--order", type=int, default=2)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    if args.K < 2 * args.order + builtin_geometry(args.geometry).n:
        p.error("--K must be at least 2*order + n")

    backends = ["flint", "sympy"] if HAVE_FLINT else ["sympy"]
    outputs, times = {}, {}
    for be in backends:
        dt, (text, stats) = best_of(lambda: workload(args.geometry, be, args.K, args.order), args.repeat)
        outputs[be], times[be] = text, dt
        print(f"{be:6s} {dt:8.3f} s   ({len(text)} bytes of output, tables {stats})")
    if len(backends) == 2:
        same = outputs["flint"] == outputs["sympy"]
        print(f"identical output: {same}")
        print(f"speedup flint vs sympy: {times['sympy'] / times['flint']:.1f}x")
        if not same:
            raise SystemExit(1)


if __name__ == "__main__":
    main()
