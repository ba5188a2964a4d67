"""Generic 1-D/2-D posterior machinery: adaptive random-walk Metropolis with
split-R-hat diagnostics, and deterministic trapezoidal grid quadrature with
CDF inversion.  The quadrature path is the reproducible oracle; the sampler
cross-validates it.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

RHAT_WARN = 1.01
RHAT_FAIL = 1.05


class InitializationError(RuntimeError):
    """Sampler could not leave its starting point during adaptation."""


class WidenRangeError(ValueError):
    """Quadrature range too narrow: non-negligible mass at the boundary."""


@dataclass(frozen=True)
class MCMCConfig:
    """Random-walk Metropolis settings."""

    seed: int                   # explicit seed; no default on purpose
    chains: int = 4
    warmup: int = 1000          # adaptation iterations, discarded
    samples: int = 1000         # kept iterations per chain
    target_accept: float = 0.4  # Robbins-Monro acceptance target

    def __post_init__(self):
        if min(self.chains, self.warmup, self.samples) <= 0:
            raise ValueError("chains, warmup and samples must all be positive")
        if not 0 < self.target_accept < 1:
            raise ValueError("target acceptance must lie in (0,1)")


@dataclass(frozen=True)
class QuadratureConfig:
    """Deterministic grid-quadrature settings."""

    range_sd: float = 8.0       # half-width of the grid in prior-sd units
    node_budget: int = 4001     # max nodes (per axis in 2-D: sqrt of budget)
    rel_tol: float = 1e-8       # refinement tolerance on the normalizing sum

    def __post_init__(self):
        if self.rel_tol <= 0:
            raise ValueError("tolerance must be positive")
        if self.node_budget < 9 or self.range_sd <= 0:
            raise ValueError("node budget/range too small")


def split_rhat(chains: np.ndarray) -> float:
    """Split-R-hat of one scalar quantity; `chains` shaped (n_chains, n_iter)."""
    n_chains, n = chains.shape
    half = n // 2
    if half < 2:
        return float("nan")
    seq = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m, k = seq.shape
    means = seq.mean(axis=1)
    w = seq.var(axis=1, ddof=1).mean()
    b = k * means.var(ddof=1)
    if w == 0:
        return 1.0 if b == 0 else np.inf
    var_plus = (k - 1) / k * w + b / k
    return float(np.sqrt(var_plus / w))


@dataclass(frozen=True)
class Draws:
    """Pooled MCMC output with convergence diagnostics."""

    samples: np.ndarray      # (chains*iters, dim)
    by_chain: np.ndarray     # (chains, iters, dim)
    rhat: np.ndarray         # (dim,)
    accept_rate: float
    converged: bool          # False iff any R-hat >= RHAT_FAIL


def sample(log_density, dim: int, config: MCMCConfig, init=None, init_scale=1.0) -> Draws:
    """Adaptive random-walk Metropolis targeting `log_density` on R^dim.

    Warmup runs in three phases: step-size tuning, a collection phase whose
    draws set a diagonal preconditioner, and a final retune.  Each chain
    consumes its own pre-generated random stream, so results are identical
    however chains are scheduled.

    Raises InitializationError when the chains never move during adaptation
    (e.g. a density returning -inf around the start point).
    """
    if init is None:
        init = np.zeros(dim)
    init = np.asarray(init, dtype=float).reshape(dim)
    scale = np.broadcast_to(np.asarray(init_scale, dtype=float), (dim,)).copy()

    f0 = _eval(log_density, init[None, :])[0]
    if not np.isfinite(f0):
        raise InitializationError("log density is not finite at the start point")

    C = config.chains
    total = config.warmup + config.samples
    # per-chain streams, pre-generated so chain scheduling cannot matter
    seqs = np.random.SeedSequence(config.seed).spawn(C)
    normals = np.empty((total, C, dim))
    unifs = np.empty((total, C))
    jitter = np.empty((C, dim))
    for c, ss in enumerate(seqs):
        rng = np.random.default_rng(ss)
        normals[:, c, :] = rng.standard_normal((total, dim))
        unifs[:, c] = rng.random(total)
        jitter[c] = rng.standard_normal(dim)

    th = init[None, :] + 0.1 * scale * jitter
    lp = _eval(log_density, th)
    bad = ~np.isfinite(lp)
    if np.any(bad):  # fall back to the exact start point for those chains
        th[bad] = init
        lp[bad] = f0

    step = np.full(C, 0.5)
    w1 = config.warmup // 3
    w2 = config.warmup // 3
    w3 = config.warmup - w1 - w2
    collect = np.empty((w2, C, dim))
    kept = np.empty((config.samples, C, dim))
    acc_win = np.zeros(C)
    warm_accepts = 0.0
    n_win = 0

    for it in range(total):
        prop = th + (step[:, None] * scale) * normals[it]
        lp_prop = _eval(log_density, prop)
        accept = np.log(unifs[it]) < lp_prop - lp
        th = np.where(accept[:, None], prop, th)
        lp = np.where(accept, lp_prop, lp)

        if it < config.warmup:
            warm_accepts += accept.sum()
            acc_win += accept
            n_win += 1
            if n_win == 25:
                step *= np.exp((acc_win / n_win - config.target_accept) * 0.5)
                acc_win[:] = 0.0
                n_win = 0
            if w1 <= it < w1 + w2:
                collect[it - w1] = th
            if it == w1 + w2 - 1:
                sd = collect.std(axis=0).mean(axis=0) + 1e-12 * scale
                # renormalize so the tuned step size keeps its meaning
                scale = sd / np.exp(np.log(sd).mean())
            if it == config.warmup - 1 and warm_accepts == 0:
                raise InitializationError(
                    "no proposal accepted during adaptation; check the density "
                    "and the initial point"
                )
        else:
            kept[it - config.warmup] = th

    by_chain = np.swapaxes(kept, 0, 1)  # (C, iters, dim)
    rhat = np.array([split_rhat(by_chain[:, :, d]) for d in range(dim)])
    worst = float(np.max(rhat))
    if worst >= RHAT_FAIL:
        converged = False
    else:
        converged = True
        if worst >= RHAT_WARN:
            warnings.warn(f"split R-hat {worst:.4f} above {RHAT_WARN}", stacklevel=2)
    # acceptance measured over the kept phase
    moved = np.any(np.diff(by_chain, axis=1) != 0, axis=2)
    accept_rate = float(moved.mean())
    return Draws(
        samples=by_chain.reshape(C * config.samples, dim),
        by_chain=by_chain,
        rhat=rhat,
        accept_rate=accept_rate,
        converged=converged,
    )


def _eval(log_density, points: np.ndarray) -> np.ndarray:
    """Evaluate the density on (n, dim) points, accepting scalar-only callables."""
    try:
        out = np.asarray(log_density(points), dtype=float)
        if out.shape == (points.shape[0],):
            return out
    except Exception:
        pass
    return np.array([float(log_density(p)) for p in points])


@dataclass(frozen=True)
class Quadrature:
    """Normalized grid posterior on 1 or 2 dimensions.

    `nodes` is (n,) in 1-D or a (n1, n2) meshgrid pair in 2-D; `weights`
    are trapezoidal masses summing to 1.  1-D instances expose a CDF and
    its inverse for interval masses and quantiles.
    """

    nodes: tuple
    weights: np.ndarray
    log_norm: float

    @property
    def grid(self) -> np.ndarray:
        return self.nodes[0]

    def expect(self, values: np.ndarray) -> float:
        """Posterior expectation of a functional tabulated on the nodes."""
        return float(np.sum(values * self.weights))

    # ---- 1-D functionals -------------------------------------------------
    def cdf(self, x: float) -> float:
        """P(X <= x) with piecewise-linear interpolation inside the cell."""
        g = self.grid
        c = np.concatenate([[0.0], np.cumsum(self._cell_masses())])
        return float(np.interp(x, g, c / c[-1]))

    def mass_above(self, x: float) -> float:
        return 1.0 - self.cdf(x)

    def mass_between(self, a: float, b: float) -> float:
        return self.cdf(b) - self.cdf(a)

    def quantile(self, q) -> np.ndarray:
        g = self.grid
        c = np.concatenate([[0.0], np.cumsum(self._cell_masses())])
        return np.interp(q, c / c[-1], g)

    def _cell_masses(self) -> np.ndarray:
        g = self.grid
        dens = self.weights / _trap_weights(g)
        return 0.5 * (dens[1:] + dens[:-1]) * np.diff(g)


def _trap_weights(g: np.ndarray) -> np.ndarray:
    w = np.zeros_like(g)
    d = np.diff(g)
    w[:-1] += d / 2
    w[1:] += d / 2
    return w


def integrate(log_density, dim: int, config: QuadratureConfig,
              center, sd) -> Quadrature:
    """Deterministic trapezoidal quadrature of exp(log_density) on a grid
    spanning center +- range_sd * sd per axis.

    The full node budget is evaluated in one pass; a nested half-resolution
    grid (every other node, no extra density calls) verifies that the
    normalizing sum is stable to `rel_tol`, warning otherwise.  Raises
    WidenRangeError when more than 1e-3 of the posterior mass sits in the
    outermost cells, or when the density underflows on the whole grid.
    """
    center = np.broadcast_to(np.asarray(center, dtype=float), (dim,))
    sd = np.broadcast_to(np.asarray(sd, dtype=float), (dim,))
    lo = center - config.range_sd * sd
    hi = center + config.range_sd * sd

    if dim == 1:
        n = config.node_budget
    elif dim == 2:
        n = max(int(np.sqrt(config.node_budget)), 9)
    else:
        raise ValueError("only 1-D and 2-D quadrature is supported")
    if n % 2 == 0:  # odd count so the half-resolution subgrid nests exactly
        n += 1

    axes = [np.linspace(lo[d], hi[d], n) for d in range(dim)]
    if dim == 1:
        lp = _eval(log_density, axes[0][:, None])
        logw = lp + np.log(_trap_weights(axes[0]))
        logw_half = lp[::2] + np.log(_trap_weights(axes[0][::2]))
    else:
        g1, g2 = np.meshgrid(axes[0], axes[1], indexing="ij")
        lp = _eval(log_density, np.column_stack([g1.ravel(), g2.ravel()])).reshape(n, n)
        logw = lp + np.log(np.outer(_trap_weights(axes[0]), _trap_weights(axes[1])))
        logw_half = lp[::2, ::2] + np.log(
            np.outer(_trap_weights(axes[0][::2]), _trap_weights(axes[1][::2]))
        )

    m = float(np.max(logw))
    if not np.isfinite(m):
        raise WidenRangeError("density underflows on the whole grid")
    log_norm = m + np.log(np.sum(np.exp(logw - m)))
    log_norm_half = m + np.log(np.sum(np.exp(logw_half - m)))
    if abs(log_norm - log_norm_half) > max(config.rel_tol, 1e-12) * max(1.0, abs(log_norm)):
        warnings.warn(
            f"quadrature not converged at the node budget "
            f"(delta log-norm {abs(log_norm - log_norm_half):.2e})",
            stacklevel=2,
        )

    weights = np.exp(logw - log_norm)
    edge = weights[[0, -1]].sum() if dim == 1 else (
        weights[0, :].sum() + weights[-1, :].sum()
        + weights[:, 0].sum() + weights[:, -1].sum()
    )
    if edge > 1e-3:
        raise WidenRangeError(
            f"{edge:.2e} posterior mass at the grid boundary; widen range_sd"
        )
    if dim == 1:
        return Quadrature(nodes=(axes[0],), weights=weights, log_norm=float(log_norm))
    return Quadrature(nodes=(g1, g2), weights=weights, log_norm=float(log_norm))
