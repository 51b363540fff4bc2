"""Smoke test for the pylinimpact extension module.

Build and install first:
    pip install maturin
    maturin build --release -m crates/python/Cargo.toml -o dist
    pip install dist/pylinimpact-*.whl
"""

import math
import sys

import pylinimpact as li


def check(name, ok, detail=""):
    print(f"{'ok  ' if ok else 'FAIL'} {name} {detail}")
    return ok


def main():
    results = []

    kernel = li.Kernel.exponential(1.0, 0.8, 40)
    flow = li.generate_flow("white", 50_000, seed=1)
    prices = li.simulate_market(kernel, flow)
    results.append(check("series", len(prices) == 50_000 and prices.kind == "price", repr(prices)))

    cal = li.calibrate(prices, flow, max_lag=60)
    g = cal.kernel.values
    err = max(abs(a - 0.8**n) for n, a in enumerate(g[:41]))
    results.append(check("calibrate", err < 1e-2, f"max |G - 0.8^n| = {err:.2e}"))

    again = li.generate_flow("white", 50_000, seed=1)
    results.append(check("determinism", again.values == flow.values))

    coarse = li.coarsen(flow, 5)
    results.append(check("coarsen", len(coarse) == 10_000 and coarse.tau == (5.0, "step")))

    r = li.price_variance_ratio(0.6)
    results.append(check("variance ratio", abs(r - 5 / 9) < 1e-15, f"{r:.16f}"))

    closed = li.solve_markovian(0.9, max_lag=100)
    sigma = [0.9**n for n in range(3001)]
    omega = [1.0] + [0.0] * 3000
    combo = li.solve_kyle(sigma, omega, max_lag=100)
    dev = max(abs(a - b) for a, b in zip(closed.kernel.values, combo.kernel.values))
    results.append(check("kyle", dev < 1e-3, f"max dev {dev:.2e}"))

    try:
        li.coarsen(flow, 0)
        results.append(check("error mapping", False))
    except li.ValidationError as e:
        results.append(check("error mapping", True, str(e)))

    summary = li.run_experiment("universality", "[synthetic]\nlength = 100000\n")
    dev = summary["scalars"]["max_rel_dev_deep"]
    results.append(check("experiment", math.isfinite(dev) and len(summary["curves"]) > 0, f"deep dev {dev:.4f}"))

    return 0 if all(results) else 1


if __name__ == "__main__":
    sys.exit(main())
