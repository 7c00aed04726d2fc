"""Target-zone control with dual-speed interventions.

A toolkit for keeping a noisy scalar process inside a target zone using two
intervention modalities — instantaneous impulses and a long-acting effect that
decays through discrete residual levels — under hard budget constraints
(intervention count, admissible dosing range, zone-violation allowance).

Layers:

* ``processes``    — controlled process, intervention accumulators, residual-level decay
* ``constraints``  — budget vectors, constraint functions, reward shaping
* ``controller``   — proposal policies, switching logic, predictive shield, episode loops
* ``tabular``      — finite-MDP fixtures, Bellman/intervention operators, DP oracle, Q-learning
* ``glucose``      — stylised blood-glucose environment with meal scenarios
* ``metrics``      — time-in-range style reporting
* ``experiments``  — end-to-end experiment commands (theory checks, runs, sweeps, ablation)
* ``service``      — FastAPI wrapper; the ``zone-rl`` CLI is a thin client of it
"""

__version__ = "0.1.0"
