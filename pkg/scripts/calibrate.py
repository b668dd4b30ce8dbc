"""Offline search for the shipped workload calibration.

Fits cycle counts, payload sizes and the CPU energy coefficient.  Hard
constraints (any violation is rejected outright):

* every scheme keeps its worst min-max latency at N=30 below 0.285 s over
  50 seeds, so the 0.3 s tolerance point stays feasible;
* mean latency and energy are ordered EDGE < CLOUD < LOCAL at N=6 and N=36;
* the EDGE latency gaps against LOCAL and CLOUD and the energy gap against
  LOCAL sit within 8.5 points of the reference values at N=36.

Within that region the energy gap against CLOUD is maximised.  Search seeds
(1000 + r) are disjoint from the default seed range used by the test suite.

    PYTHONPATH=src python3 scripts/calibrate.py [reps] [maxfev] [x0-json]
"""

import json
import sys

import numpy as np
from scipy.optimize import minimize

from mecar.allocation import SolverStatus, min_energy, min_max_latency
from mecar.models import SchemeKind as S
from mecar.scenario import ARWorkload, build_scenario, default_config

TARGET = {"lat_local": 41.44, "lat_cloud": 12.85, "en_local": 73.71, "en_cloud": 65.34}
BAND = 8.5
WORST_N30 = 0.285
REPS = int(sys.argv[1]) if len(sys.argv) > 1 else 16
MAXFEV = int(sys.argv[2]) if len(sys.argv) > 2 else 500


def unpack(x):
    """x = log of (video=render, tracker+mapper, recognizer, uplink bits,
    result bits, kappa) and the logit of recognizer_bits / uplink_bits."""
    v, tm, r, u, d, kappa = np.exp(x[:6])
    frac = 1.0 / (1.0 + np.exp(-x[6]))
    return ARWorkload(v, tm / 2, tm / 2, r, v, u, u * frac, d), kappa


def run(wl, kappa, n, reps, t_max):
    lat = {s: [] for s in S}
    en = {s: [] for s in S}
    for rep in range(reps):
        cfg = default_config().replace(workload=wl, kappa=kappa, num_devices=n, seed=1000 + rep)
        sc = build_scenario(cfg)
        for s in S:
            lat[s].append(min_max_latency(sc, s).objective_value)
            e = min_energy(sc, s, t_max)
            en[s].append(np.inf if e.solver_status is SolverStatus.INFEASIBLE else e.objective_value)
    return lat, en


def worst_latency(wl, kappa, n, reps):
    worst = 0.0
    for rep in range(reps):
        cfg = default_config().replace(workload=wl, kappa=kappa, num_devices=n, seed=1000 + rep)
        sc = build_scenario(cfg)
        worst = max(worst, max(min_max_latency(sc, s).objective_value for s in S))
    return worst


def mean(d):
    return {s: float(np.mean(v)) for s, v in d.items()}


def reductions(lat, en):
    lat, en = mean(lat), mean(en)
    return {
        "lat_local": 100 * (1 - lat[S.EDGE] / lat[S.LOCAL]),
        "lat_cloud": 100 * (1 - lat[S.EDGE] / lat[S.CLOUD]),
        "en_local": 100 * (1 - en[S.EDGE] / en[S.LOCAL]),
        "en_cloud": 100 * (1 - en[S.EDGE] / en[S.CLOUD]),
    }


def ordering_violation(lat, en, margin_lat, margin_en):
    lat, en = mean(lat), mean(en)
    return (
        max(0.0, margin_lat * lat[S.EDGE] - lat[S.CLOUD])
        + max(0.0, margin_lat * lat[S.CLOUD] - lat[S.LOCAL])
        + max(0.0, margin_en * en[S.EDGE] - en[S.CLOUD])
        + max(0.0, margin_en * en[S.CLOUD] - en[S.LOCAL])
    )


def loss(x):
    wl, kappa = unpack(x)
    lat, en = run(wl, kappa, 36, REPS, 0.45)
    red = reductions(lat, en)
    if not all(np.isfinite(list(red.values()))):
        return 1e9
    hard = sum(max(0.0, abs(red[k] - TARGET[k]) - BAND) for k in ("lat_local", "lat_cloud", "en_local"))
    hard += ordering_violation(lat, en, 1.03, 1.0005)
    lat6, en6 = run(wl, kappa, 6, REPS, 0.45)
    hard += ordering_violation(lat6, en6, 1.02, 1.0005)
    worst = worst_latency(wl, kappa, 30, 50)
    hard += max(0.0, worst - WORST_N30)
    val = 1e6 * (1.0 + hard) if hard > 0 else -red["en_cloud"]
    print(json.dumps({k: round(v, 2) for k, v in red.items()}), round(worst, 3), round(val, 2),
          json.dumps([float(v) for v in x]), flush=True)
    return val


if __name__ == "__main__":
    if len(sys.argv) > 3:
        x0 = np.array(json.loads(sys.argv[3]))
    else:
        x0 = np.array(np.log([1e6, 6e7, 1e7, 5e5, 5e4, 5e-30]).tolist() + [4.0])
    res = minimize(loss, x0, method="Nelder-Mead", options={"maxfev": MAXFEV, "xatol": 1e-3, "fatol": 1e-3})
    print("best", json.dumps(res.x.tolist()), res.fun)
