"""Stability analysis of a coupled Klein-Gordon pair around a plane wave.

Run with ``python demos/kg_stability.py``.  The script walks through the
pipeline a user would follow for a new system:

1. build the first-order system and pick a characteristic phase,
2. locate every resonance set and test each pair for transparency,
3. read off the stability index and the growth rate gamma+.
"""

import numpy as np

from resonalab.coupling import classify_resonances
from resonalab.kg import KGParams, build_kg
from resonalab.resonance import characteristic_phase, phase_admissibility


def main() -> None:
    spec = build_kg(KGParams(d=1, omega0=1.0, theta0=0.5))
    beta = characteristic_phase(spec, [1.0], branch=1)
    print(f"system '{spec.name}': N={spec.N}, phase omega={beta.omega:.6f}, k={beta.k.tolist()}")

    adm = phase_admissibility(spec, beta)
    print(f"phase admissible: {adm.ok}")

    verdict = classify_resonances(spec, beta)
    print("\nresonant pairs and their sets:")
    for pair in verdict.resonant:
        rset = verdict.sets[pair]
        status = "non-transparent" if pair in verdict.Re0 else "transparent"
        print(f"  {pair}: {rset.points.shape[0]:4d} points, {status}")

    print(f"\nstability index: {verdict.index_label}")
    print(f"gamma+ = {verdict.gamma_plus:.6f} reached by pair {verdict.argmax_pair} "
          f"at xi = {np.round(verdict.argmax_xi, 6).tolist()}")

    # The same amplitude at a smaller value scales gamma+ linearly.
    weak = classify_resonances(spec, beta, amplitude=0.25, pairs=[(1, 2)])
    print(f"with amplitude 0.25 the (1,2) rate drops to {weak.gamma_plus:.6f}")


if __name__ == "__main__":
    main()
