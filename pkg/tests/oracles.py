"""Independent brute-force oracles shared by the unit and acceptance suites."""

import itertools

import numpy as np


def bruteforce_l1min(a: np.ndarray, b: np.ndarray, lam: float):
    """Enumerate basic solutions of the standard-form LP.

    min 1'(u+v) s.t. A(u-v) <= b + lam, -A(u-v) <= lam - b, u, v >= 0.
    Returns (objective, feasible): the minimal l1 norm over all basic
    feasible points, found by enumeration rather than pivoting.
    """
    p = a.shape[0]
    m = 2 * p
    cons = np.vstack([np.hstack([a, -a]), np.hstack([-a, a])])
    rhs = np.concatenate([b + lam, lam - b])
    full = np.hstack([cons, np.eye(m)])
    cost = np.concatenate([np.ones(2 * p), np.zeros(m)])
    best = np.inf
    for cols in itertools.combinations(range(full.shape[1]), m):
        sub = full[:, cols]
        if abs(np.linalg.det(sub)) < 1e-10:
            continue
        x = np.linalg.solve(sub, rhs)
        if np.all(x >= -1e-9):
            best = min(best, cost[list(cols)] @ x)
    return best, np.isfinite(best)
