"""Simulators for the processes the estimators are aimed at.

Covers Poisson INAR(p) count series, multivariate Poisson INAR(1),
stationary Ornstein-Uhlenbeck systems observed on a grid, and Hawkes
point processes with a piecewise-constant excitation kernel together
with their binned-count representation.

All simulators are pure functions of ``(spec, seed)``: PCG64 streams, no
shared state, safe to call concurrently.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import DomainError, StationarityError
from .rng import make_rng

_COUNT_CAP = 1e12  # conditional mean beyond this aborts instead of overflowing


@dataclass(frozen=True)
class InarSpec:
    """Poisson INAR(p): X_t | past ~ Poisson(mu_eps + sum_i alpha[i] * X_{t-1-i}).

    ``alpha`` must sum to < 1 for a stationary solution to exist.
    """

    mu_eps: float
    alpha: np.ndarray
    burn_in: int = 1000

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        if alpha.ndim != 1:
            raise ValueError("alpha must be a vector")
        if np.any(alpha < 0) or self.mu_eps < 0:
            raise ValueError("alpha and mu_eps must be nonnegative")
        if alpha.sum() >= 1.0:
            raise StationarityError(
                f"thinning means sum to {alpha.sum():.3f} >= 1; no stationary solution"
            )
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    @property
    def order(self) -> int:
        return self.alpha.size

    def stationary_mean(self) -> float:
        return self.mu_eps / (1.0 - self.alpha.sum())


@dataclass(frozen=True)
class Minar1Spec:
    """Multivariate Poisson INAR(1): Y_{t,j} | past ~ Poisson((eta + A Y_{t-1})_j)."""

    eta: np.ndarray
    a_matrix: np.ndarray
    burn_in: int = 1000

    def __post_init__(self):
        eta = np.asarray(self.eta, dtype=float)
        a = np.asarray(self.a_matrix, dtype=float)
        object.__setattr__(self, "eta", eta)
        object.__setattr__(self, "a_matrix", a)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or eta.shape != (a.shape[0],):
            raise ValueError("a_matrix must be square and match eta")
        if np.any(a < 0) or np.any(eta < 0):
            raise ValueError("eta and a_matrix must be nonnegative")
        if a.sum(axis=1).max() >= 1.0:
            raise StationarityError(
                f"max row sum of A is {a.sum(axis=1).max():.3f} >= 1; no stationary solution"
            )
        if self.burn_in < 0:
            raise ValueError("burn_in must be nonnegative")

    @property
    def dim(self) -> int:
        return self.eta.size

    def stationary_mean(self) -> np.ndarray:
        return np.linalg.solve(np.eye(self.dim) - self.a_matrix, self.eta)


@dataclass(frozen=True)
class OuSpec:
    """Linear SDE dY = A Y dt + Sigma dW observed every ``delta`` time units.

    ``a_matrix`` must be stable (eigenvalue real parts < 0) and block
    diagonal up to simultaneous row/column permutation with blocks of size
    at most 8, so the stationary covariance can be solved per block.
    ``sigma_diag`` is the diagonal of Sigma.  Each observation step is
    integrated with ``substeps`` Euler-Maruyama sub-intervals.
    """

    a_matrix: np.ndarray
    sigma_diag: np.ndarray
    delta: float
    n_steps: int
    substeps: int = 10

    def __post_init__(self):
        a = np.asarray(self.a_matrix, dtype=float)
        s = np.asarray(self.sigma_diag, dtype=float)
        object.__setattr__(self, "a_matrix", a)
        object.__setattr__(self, "sigma_diag", s)
        if a.ndim != 2 or a.shape[0] != a.shape[1] or s.shape != (a.shape[0],):
            raise ValueError("a_matrix must be square and match sigma_diag")
        if np.any(s <= 0):
            raise ValueError("sigma_diag entries must be positive")
        if self.delta <= 0 or self.n_steps < 1 or self.substeps < 1:
            raise ValueError("delta, n_steps, substeps must be positive")
        if np.max(np.linalg.eigvals(a).real) >= -1e-12:
            raise StationarityError("drift matrix has an eigenvalue with nonnegative real part")

    @property
    def dim(self) -> int:
        return self.sigma_diag.size


@dataclass(frozen=True)
class HawkesSpec:
    """Self-exciting point process with intensity eta + sum a(t - t_i).

    The excitation kernel a is piecewise constant: a(t) = kernel_values[k]
    on (kernel_breakpoints[k-1], kernel_breakpoints[k]] (with an implicit
    leading breakpoint 0) and zero beyond the last breakpoint.  Its
    integral must be < 1 (subcriticality).
    """

    eta: float
    kernel_breakpoints: np.ndarray
    kernel_values: np.ndarray
    horizon: float

    def __post_init__(self):
        bp = np.asarray(self.kernel_breakpoints, dtype=float)
        vals = np.asarray(self.kernel_values, dtype=float)
        object.__setattr__(self, "kernel_breakpoints", bp)
        object.__setattr__(self, "kernel_values", vals)
        if self.eta <= 0:
            raise ValueError("baseline eta must be positive")
        if bp.ndim != 1 or vals.shape != bp.shape:
            raise ValueError("breakpoints and values must be vectors of equal length")
        if bp.size and (np.any(np.diff(bp) <= 0) or bp[0] <= 0):
            raise ValueError("breakpoints must be positive and strictly increasing")
        if np.any(vals < 0):
            raise ValueError("kernel values must be nonnegative")
        if self.horizon <= 0:
            raise ValueError("horizon must be positive")
        if self.branching_ratio() >= 1.0:
            raise StationarityError(
                f"kernel integral {self.branching_ratio():.3f} >= 1; process is supercritical"
            )

    def branching_ratio(self) -> float:
        widths = np.diff(np.concatenate(([0.0], self.kernel_breakpoints)))
        return float(widths @ self.kernel_values)

    def kernel_at(self, t: float) -> float:
        """a(t); zero outside (0, last breakpoint]."""
        bp = self.kernel_breakpoints
        if t <= 0 or not bp.size or t > bp[-1]:
            return 0.0
        return float(self.kernel_values[np.searchsorted(bp, t, side="left")])


@dataclass
class SeriesSample:
    """An observed path: ``values`` is n x d (d = 1 for univariate series).

    ``lag_buffer`` holds the pre-sample values (p x d, chronological order,
    last row immediately precedes ``values[0]``).  ``delta`` is the sampling
    interval for paths observed in continuous time.
    """

    values: np.ndarray
    lag_buffer: np.ndarray = field(default_factory=lambda: np.empty((0, 1)))
    delta: Optional[float] = None
    kind: str = "counts"

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        self.values = values.reshape(-1, 1) if values.ndim == 1 else values
        buf = np.asarray(self.lag_buffer, dtype=float)
        if buf.size == 0:
            buf = np.empty((0, self.values.shape[1]))
        self.lag_buffer = buf.reshape(-1, 1) if buf.ndim == 1 else buf
        if self.kind not in ("counts", "reals"):
            raise ValueError("kind must be 'counts' or 'reals'")
        if self.kind == "counts":
            allv = np.concatenate([self.values.ravel(), self.lag_buffer.ravel()])
            if np.any(allv < 0) or np.any(allv != np.round(allv)):
                raise ValueError("counts series must contain nonnegative integers")
        if self.kind == "reals" and self.delta is not None and self.delta <= 0:
            raise ValueError("delta must be positive")

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def dim(self) -> int:
        return self.values.shape[1]


def _column(x: np.ndarray) -> np.ndarray:
    return np.asarray(x, dtype=float).reshape(-1, 1)


def simulate_inar(spec: InarSpec, n: int, seed: int) -> SeriesSample:
    """Simulate n observations of the Poisson INAR(p) model after burn-in.

    Starts from the all-zero state, discards ``spec.burn_in`` draws, and
    returns the series together with the final p pre-sample values as the
    lag buffer.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    p = spec.order
    alpha = spec.alpha
    history = np.zeros(max(p, 1))  # history[0] = X_{t-1}, ... , history[p-1] = X_{t-p}
    out = np.empty(spec.burn_in + n)
    for t in range(spec.burn_in + n):
        lam = spec.mu_eps + (alpha @ history[:p] if p else 0.0)
        if lam > _COUNT_CAP:
            raise DomainError("conditional mean overflow in INAR simulation")
        x = rng.poisson(lam)
        if p:
            history[1:p] = history[: p - 1]
            history[0] = x
        out[t] = x
    values = out[spec.burn_in:]
    # chronological buffer: the p values immediately before the first kept one
    buf = out[max(spec.burn_in - p, 0): spec.burn_in]
    buf = np.concatenate([np.zeros(p - buf.size), buf])
    return SeriesSample(values=_column(values), lag_buffer=_column(buf), kind="counts")


def simulate_minar1(spec: Minar1Spec, n: int, seed: int) -> SeriesSample:
    """Simulate the p-dimensional Poisson INAR(1): lambda_t = eta + A Y_{t-1}."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = make_rng(seed)
    d = spec.dim
    y = np.zeros(d)
    out = np.empty((spec.burn_in + n, d))
    for t in range(spec.burn_in + n):
        lam = spec.eta + spec.a_matrix @ y
        if lam.max() > _COUNT_CAP:
            raise DomainError("conditional mean overflow in INAR simulation")
        y = rng.poisson(lam).astype(float)
        out[t] = y
    values = out[spec.burn_in:]
    if spec.burn_in >= 1:
        buf = out[spec.burn_in - 1: spec.burn_in]
    else:
        buf = np.zeros((1, d))
    return SeriesSample(values=values, lag_buffer=buf, kind="counts")


def lyapunov_covariance(a_matrix: np.ndarray, sigma_diag: np.ndarray,
                        max_block: int = 8) -> np.ndarray:
    """Stationary covariance V solving A V + V A^T + Sigma Sigma^T = 0.

    The drift must decompose into diagonal blocks of size <= ``max_block``
    (after grouping coordinates connected through nonzero entries); each
    block is solved densely through the Kronecker identity
    (I (x) A + A (x) I) vec(V) = -vec(Sigma Sigma^T).
    """
    a = np.asarray(a_matrix, dtype=float)
    d = a.shape[0]
    q_diag = np.asarray(sigma_diag, dtype=float) ** 2
    # connected components of the symmetrized sparsity pattern
    adj = (a != 0) | (a.T != 0)
    unseen = set(range(d))
    v = np.zeros((d, d))
    while unseen:
        stack = [min(unseen)]
        block = set()
        while stack:
            i = stack.pop()
            if i in block:
                continue
            block.add(i)
            stack.extend(j for j in np.nonzero(adj[i])[0] if j not in block)
        unseen -= block
        idx = np.array(sorted(block))
        if idx.size > max_block:
            raise ValueError(
                f"drift block of size {idx.size} exceeds the supported maximum {max_block}"
            )
        ab = a[np.ix_(idx, idx)]
        qb = np.diag(q_diag[idx])
        k = np.kron(np.eye(idx.size), ab) + np.kron(ab, np.eye(idx.size))
        try:
            vb = np.linalg.solve(k, -qb.flatten(order="F")).reshape(
                (idx.size, idx.size), order="F")
        except np.linalg.LinAlgError as exc:
            raise np.linalg.LinAlgError(f"Lyapunov solve singular: {exc}") from exc
        v[np.ix_(idx, idx)] = 0.5 * (vb + vb.T)
    return v


def simulate_ou(spec: OuSpec, seed: int, y0: Optional[np.ndarray] = None) -> SeriesSample:
    """Sample a stationary OU path at t_k = k * delta, k = 0..n_steps.

    The initial state is drawn from N(0, V) with V the stationary
    covariance (or fixed to ``y0`` when given); increments use
    Euler-Maruyama with ``spec.substeps`` sub-intervals per observation
    step.
    """
    rng = make_rng(seed)
    d = spec.dim
    if y0 is not None:
        y = np.asarray(y0, dtype=float).copy()
        if y.shape != (d,):
            raise ValueError("y0 must match the state dimension")
    else:
        v = lyapunov_covariance(spec.a_matrix, spec.sigma_diag)
        chol = np.linalg.cholesky(v + 1e-14 * np.trace(v) / d * np.eye(d))
        y = chol @ rng.standard_normal(d)
    dt = spec.delta / spec.substeps
    sig_step = spec.sigma_diag * np.sqrt(dt)
    path = np.empty((spec.n_steps + 1, d))
    path[0] = y
    for k in range(spec.n_steps):
        noise = rng.standard_normal((spec.substeps, d))
        for j in range(spec.substeps):
            y = y + dt * (spec.a_matrix @ y) + sig_step * noise[j]
        path[k + 1] = y
    return SeriesSample(values=path, delta=spec.delta, kind="reals")


def simulate_hawkes(spec: HawkesSpec, seed: int) -> np.ndarray:
    """Event times in (0, horizon] drawn by Ogata thinning.

    Between kernel breakpoints the intensity is constant, so the local
    upper bound is the current intensity itself and every proposal that
    stays within the current piece is accepted.
    """
    rng = make_rng(seed)
    bp = spec.kernel_breakpoints
    vals = spec.kernel_values
    tail = bp[-1] if bp.size else 0.0
    events: list[float] = []
    t = 0.0
    first_active = 0  # events earlier than t - tail never contribute again
    while True:
        while first_active < len(events) and events[first_active] <= t - tail:
            first_active += 1
        active = events[first_active:]
        # intensity just right of t and the next time it can change
        lam = spec.eta
        next_change = np.inf
        for ti in active:
            age = t - ti
            k = int(np.searchsorted(bp, age, side="right"))
            if k < bp.size:
                lam += vals[k]
                boundary = ti + bp[k]
                if boundary > t:  # guard: float rounding may land exactly on t
                    next_change = min(next_change, boundary)
        if lam <= 0:
            if not np.isfinite(next_change) or next_change >= spec.horizon:
                break
            t = np.nextafter(next_change, np.inf)
            continue
        wait = rng.exponential(1.0 / lam)
        if t + wait > next_change:
            t = np.nextafter(next_change, np.inf)
            continue
        t = t + wait
        if t > spec.horizon:
            break
        events.append(t)
    return np.array(events)


def bin_counts(events: np.ndarray, delta: float, horizon: float) -> SeriesSample:
    """Counts per interval (k*delta, (k+1)*delta], k = 0..ceil(horizon/delta)-1."""
    if delta <= 0:
        raise ValueError("delta must be positive")
    events = np.asarray(events, dtype=float)
    if events.size and (events.min() <= 0 or events.max() > horizon):
        raise ValueError("events must lie in (0, horizon]")
    n_bins = int(np.ceil(horizon / delta))
    idx = np.ceil(events / delta).astype(int) - 1
    counts = np.bincount(idx, minlength=n_bins).astype(float)
    return SeriesSample(values=_column(counts), delta=delta, kind="counts")


# ---------------------------------------------------------------------------
# File formats: series CSV and spec JSON dictionaries


def write_series_csv(sample: SeriesSample, path) -> None:
    """CSV with header t,x1[,x2,...]; lag-buffer rows carry negative t.

    Count series use integer t (1..n); continuous paths use t = k*delta.
    """
    d = sample.dim
    p = sample.lag_buffer.shape[0]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t"] + [f"x{j + 1}" for j in range(d)])
        for i in range(p):
            w.writerow([i - p] + list(sample.lag_buffer[i]))
        for i in range(sample.n):
            t = i * sample.delta if sample.delta is not None else i + 1
            w.writerow([t] + list(sample.values[i]))


def read_series_csv(path, kind: str = "counts", delta: Optional[float] = None) -> SeriesSample:
    """Read a series CSV written by :func:`write_series_csv`."""
    buf_rows, val_rows = [], []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "t":
            raise ValueError("series CSV must start with a 't' header column")
        for row in reader:
            t = float(row[0])
            xs = [float(x) for x in row[1:]]
            (buf_rows if t < 0 else val_rows).append(xs)
    if not val_rows:
        raise ValueError("series CSV contains no observations")
    values = np.array(val_rows)
    buf = np.array(buf_rows) if buf_rows else np.empty((0, values.shape[1]))
    return SeriesSample(values=values, lag_buffer=buf, delta=delta, kind=kind)


def spec_to_dict(spec) -> dict:
    """JSON-ready dictionary mirroring the spec dataclass fields."""
    if isinstance(spec, InarSpec):
        return {"model": "inar", "mu_eps": spec.mu_eps,
                "alpha": spec.alpha.tolist(), "burn_in": spec.burn_in}
    if isinstance(spec, Minar1Spec):
        return {"model": "minar1", "eta": spec.eta.tolist(),
                "a_matrix": spec.a_matrix.tolist(), "burn_in": spec.burn_in}
    if isinstance(spec, OuSpec):
        return {"model": "ou", "a_matrix": spec.a_matrix.tolist(),
                "sigma_diag": spec.sigma_diag.tolist(), "delta": spec.delta,
                "n_steps": spec.n_steps, "substeps": spec.substeps}
    if isinstance(spec, HawkesSpec):
        return {"model": "hawkes", "eta": spec.eta,
                "kernel_breakpoints": spec.kernel_breakpoints.tolist(),
                "kernel_values": spec.kernel_values.tolist(), "horizon": spec.horizon}
    raise TypeError(f"unknown spec type {type(spec).__name__}")


def spec_from_dict(d: dict):
    """Inverse of :func:`spec_to_dict`."""
    model = d.get("model")
    body = {k: v for k, v in d.items() if k != "model"}
    ctor = {"inar": InarSpec, "minar1": Minar1Spec, "ou": OuSpec, "hawkes": HawkesSpec}.get(model)
    if ctor is None:
        raise ValueError(f"unknown model kind {model!r}")
    return ctor(**body)
