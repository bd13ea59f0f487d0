"""Compare the compiled kernel backend against the numpy fallback.

Run from the repository root:

    python3 benchmarks/bench_kernels.py

Two array regimes matter. Adaptive quadrature and the flow integrator
evaluate profiles on small panels (tens of points) thousands of times,
where per-call overhead dominates and the compiled point loop wins by an
order of magnitude. Bulk tabulation over a single huge array favors the
numpy backend instead, whose per-opcode sweeps vectorize; the extension
is kept for the panel regime the pipelines actually live in, and the
hypergeometric series, which is scalar recurrence all the way down.
"""

import time

import numpy as np

from afmass._kernels import _fast, pure
from afmass.expressions import compile_expr, parse_radial_expression

PROFILES = {
    "schwarzschild factor": "(1 + 1/(2*r))^2",
    "bump conformal": "1 + 1/(2*r) + 0.1/sqrt(r^2 + 0.25)",
    "log tail": "1 + log(1 + 1/r)/4",
}

PANEL_POINTS = 61
PANEL_CALLS = 20_000
BULK_POINTS = 1_000_000
REPEATS = 5


def best_of(fn, repeats=REPEATS):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def report_line(label, t_fast, t_pure, note=""):
    print(
        f"  {label:24s} compiled {t_fast * 1e3:9.2f} ms"
        f"   pure {t_pure * 1e3:9.2f} ms"
        f"   speedup {t_pure / t_fast:6.2f}x   {note}"
    )


def bench_panels():
    rng = np.random.default_rng(7)
    panels = np.exp(rng.uniform(-0.5, 11.0, size=(PANEL_CALLS, PANEL_POINTS)))
    panels.sort(axis=1)
    print(
        f"panel regime: {PANEL_CALLS:,} calls x {PANEL_POINTS} points "
        f"(best of {REPEATS})"
    )
    for label, source in PROFILES.items():
        program = compile_expr(parse_radial_expression(source).expr)

        def sweep(backend):
            for row in panels:
                backend.eval_program(
                    program.code, program.consts, program.stack_depth, row
                )

        t_fast = best_of(lambda: sweep(_fast))
        t_pure = best_of(lambda: sweep(pure))
        report_line(label, t_fast, t_pure)


def bench_bulk():
    x = np.geomspace(0.5, 1e5, BULK_POINTS)
    print(f"bulk regime: one array of {BULK_POINTS:,} points (best of {REPEATS})")
    for label, source in PROFILES.items():
        program = compile_expr(parse_radial_expression(source).expr)
        args = (program.code, program.consts, program.stack_depth, x)
        t_fast = best_of(lambda: _fast.eval_program(*args))
        t_pure = best_of(lambda: pure.eval_program(*args))
        check = np.max(np.abs(
            np.asarray(_fast.eval_program(*args)) - np.asarray(pure.eval_program(*args))
        ))
        report_line(label, t_fast, t_pure, f"max|diff| {check:.2e}")


def bench_hyp2f1():
    z_grid = np.linspace(-0.95, 0.95, 2000)
    params = [(0.5, 3.0, 4.0), (0.5, 1.5, 2.0), (0.5, 0.25, 4.0)]

    def sweep(backend):
        total = 0.0
        for a, b, c in params:
            for z in z_grid:
                total += backend.hyp2f1_series(a, b, c, float(z), 1e-14, 500)[0]
        return total

    print(
        f"hyp2f1 series: {len(params) * z_grid.size:,} evaluations "
        f"(best of {REPEATS})"
    )
    t_fast = best_of(lambda: sweep(_fast))
    t_pure = best_of(lambda: sweep(pure))
    diff = abs(sweep(_fast) - sweep(pure))
    report_line("series grid", t_fast, t_pure, f"sum diff {diff:.2e}")


if __name__ == "__main__":
    bench_panels()
    bench_bulk()
    bench_hyp2f1()
