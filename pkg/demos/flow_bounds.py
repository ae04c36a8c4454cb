"""Growth of the frozen symbolic flow for resonant blocks.

Run with ``python demos/flow_bounds.py``.  For a single resonant pair the
flow grows like exp(gamma t) in rescaled time.  In the plane, three resonance
sets meet at two points; the assembled blocks are triangular after the
transparent coefficients are dropped, so the rate is unchanged and only a
logarithmic prefactor can appear.  The script prints the fitted bound
constants and shows that halving gamma+ breaks the bound.
"""

import numpy as np

from resonalab.coupling import classify_resonances
from resonalab.flow import build_block, fit_growth_rate, integrate_flow, verify_flow_bound
from resonalab.kg import KGParams, build_kg, kg_geometry
from resonalab.resonance import characteristic_phase


def main() -> None:
    params = KGParams(d=2)
    spec = build_kg(params)
    beta = characteristic_phase(spec, [1.0, 0.0], branch=1)
    verdict = classify_resonances(spec, beta)
    gamma = verdict.gamma_plus_per_pair[(1, 2)]
    geo = kg_geometry(params)
    print(f"gamma12+ = {gamma:.6f}; triple points {np.round(geo['R25_R53'], 6).tolist()}")

    x = geo["R25_R53"][-1]
    cases = {
        "pair (1,2)": ([(1, 2)], verdict.argmax_xi, [], None),
        "triple chain": ([(1, 2), (2, 5), (5, 3)], x, ["b52-", "b53+"], (2, 5)),
        "chain without (1,2)": ([(2, 5), (5, 3)], x, ["b52-", "b53+"], (2, 5)),
    }
    for eps in (1e-2, 1e-3, 1e-4):
        T = 10 * abs(np.log(eps))
        print(f"\neps = {eps:g}, horizon t <= {T:.1f}")
        for name, (pairs, xi, drop, anchor) in cases.items():
            blk = build_block(spec, beta, pairs, xi, eps, drop=drop, anchor=anchor)
            traj = integrate_flow(blk, T, n_times=401)
            rate, _ = fit_growth_rate(traj)
            bound = verify_flow_bound(traj, gamma, log_power_cap=2.0)
            half = verify_flow_bound(traj, 0.5 * gamma, log_power_cap=2.0)
            print(f"  {name:22s} size {blk.size}  rate {rate:8.5f}  C={bound.C:6.3f} N*={bound.n_star:4.2f}"
                  f"  bound {'holds' if bound.ok else 'fails'}, half rate {'holds' if half.ok else 'fails'}")


if __name__ == "__main__":
    main()
