"""Benchmark the duel pipeline kernel: compiled extension vs pure Python.

Runs the same grid of (total_us, period_us) workloads through every
available backend, checks that they agree on every output tuple, and
reports per-round timings. Invoke from the repository root:

    python3 benchmarks/bench_kernel.py
    python3 benchmarks/bench_kernel.py --repeats 9 --rounds 300
"""

from __future__ import annotations

import argparse
import random
import time

from frameguard.duel import kernel_backends

ARGS = (400, 12, 10, 20, 9, 3600)  # hp, hit periods/damages, max_frames


def build_workload(rounds, seed):
    rng = random.Random(seed)
    cases = [
        (16667, 16667),
        (15850, 16667),
        (16700, 16667),
        (33334, 16667),
        (50000, 16667),
    ]
    while len(cases) < rounds:
        period = rng.randrange(1000, 33000)
        cases.append((rng.randrange(1, period * 4), period))
    return cases[:rounds]


def check_agreement(backends, workload):
    names = sorted(backends)
    for total, period in workload:
        results = {n: backends[n](total, period, *ARGS) for n in names}
        baseline = results[names[0]]
        for name in names[1:]:
            if results[name] != baseline:
                raise AssertionError(
                    f"backend disagreement at total={total} period={period}: "
                    f"{names[0]}={baseline} {name}={results[name]}"
                )


def time_backend(fn, workload, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        for total, period in workload:
            fn(total, period, *ARGS)
        best = min(best, time.perf_counter() - start)
    return best / len(workload)


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rounds", type=int, default=200,
                        help="rounds per timing pass (default 200)")
    parser.add_argument("--repeats", type=int, default=5,
                        help="timing passes, best is kept (default 5)")
    parser.add_argument("--seed", type=int, default=31415)
    args = parser.parse_args(argv)

    backends = kernel_backends()
    workload = build_workload(args.rounds, args.seed)
    check_agreement(backends, workload)
    print(f"backends agree on {len(workload)} rounds")

    timings = {}
    for name, fn in sorted(backends.items()):
        per_round = time_backend(fn, workload, args.repeats)
        timings[name] = per_round
        print(f"{name:>7}: {per_round * 1e6:9.1f} us/round")
    if "cython" in timings:
        print(f"speedup: {timings['python'] / timings['cython']:.1f}x")
    else:
        print("speedup: n/a (extension not built, python backend only)")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
