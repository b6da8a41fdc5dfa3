"""Reference CMA-ES runs (pycma) used to pin the convergence budgets in the C++ tests.

Run: python3 tests/reference/cma_reference.py
"""
import numpy as np
import cma


def sphere(x):
    return float(np.dot(x, x))


def rosenbrock(x):
    return float(sum(100.0 * (x[1:] - x[:-1] ** 2) ** 2 + (1.0 - x[:-1]) ** 2))


def evals_to_target(f, x0, sigma0, target, budget, seed):
    es = cma.CMAEvolutionStrategy(x0, sigma0, {"seed": seed, "verbose": -9, "tolfun": 0, "tolx": 0,
                                               "tolfunhist": 0, "maxfevals": budget, "ftarget": target})
    while not es.stop():
        xs = es.ask()
        es.tell(xs, [f(x) for x in xs])
        if es.result.fbest < target:
            break
    return es.result.evaluations, es.result.fbest


if __name__ == "__main__":
    for name, f, x0, target, budget in [
        ("sphere n=10", sphere, np.ones(10), 1e-10, 5000),
        ("rosenbrock n=2", rosenbrock, np.array([-1.2, 1.0]), 1e-6, 20000),
    ]:
        runs = [evals_to_target(f, x0, 1.0, target, budget, seed) for seed in range(1, 21)]
        evals = [e for e, fb in runs if fb < target]
        print(f"{name}: {len(evals)}/20 reached target; evaluations min={min(evals)} "
              f"median={int(np.median(evals))} max={max(evals)} (budget {budget})")
