"""Reference optimizers: random search, RGF, its prior-averaged variant, and
pure transfer ascent on the prior.

All baselines maximize, use sign-normalized steps projected back onto the
box, and check the success threshold on every objective query (probe
queries included).  Budgets are hard caps enforced by the query tracker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .records import RunRecord, RunTracker

#: Effective finite-difference scales below this contribute nothing to the
#: estimate (probe collapsed onto the base point at a box face).
PROBE_FLOOR = 1e-12


@dataclass
class RgfConfig:
    """Random gradient-free estimator settings.

    With ``orthogonalize`` the random directions form an orthonormal frame
    (requires ``q <= d``) and the estimate is the least-squares
    reconstruction ``sum_i delta_i u_i``, which is exact for linear
    functions once the frame is complete.  Without it, directions are
    independent unit vectors and the plain ``1/q`` average is used (same
    direction in expectation, different scale).  ``prior_weight`` is the
    fixed averaging weight of the prior-guided variant.
    """

    q: int = 5
    sigma: float = 0.05
    lr: float = 0.1
    orthogonalize: bool = True
    prior_weight: float = 0.5

    def __post_init__(self):
        if self.q < 1 or self.sigma <= 0.0 or self.lr <= 0.0:
            raise ValueError("q, sigma, and lr must be positive")
        if not 0.0 <= self.prior_weight <= 1.0:
            raise ValueError("prior_weight must be in [0, 1]")


def _directions(rng: np.random.Generator, d: int, cfg: RgfConfig) -> np.ndarray:
    G = rng.standard_normal((d, cfg.q))
    if cfg.orthogonalize:
        if cfg.q > d:
            raise ValueError(f"orthogonalized directions need q <= d, got q={cfg.q}, d={d}")
        Q, _ = np.linalg.qr(G)
        return Q.T  # (q, d) orthonormal rows
    return (G / np.linalg.norm(G, axis=0, keepdims=True)).T


def _feasible_scales(x: np.ndarray, U: np.ndarray, sigma: float) -> np.ndarray:
    """Largest t in [0, 1] per direction such that x + t*sigma*u stays in the box."""
    step = sigma * U
    with np.errstate(divide="ignore", invalid="ignore"):
        cap = np.where(
            step > 0.0,
            (1.0 - x[None, :]) / step,
            np.where(step < 0.0, (-1.0 - x[None, :]) / step, np.inf),
        )
    return np.clip(np.min(cap, axis=1), 0.0, 1.0)


def rgf_estimate(f, x, cfg: RgfConfig, rng: np.random.Generator, query=None) -> np.ndarray:
    """Finite-difference gradient estimate from q random directions (q+1 queries).

    Probes that would exit the box shrink their step to the largest
    feasible scale; a probe collapsed onto the base point contributes zero.
    ``query`` overrides how the objective is evaluated (used by runs to
    route queries through their budget tracker).
    """
    x = np.asarray(x, dtype=float)
    query = query or f.eval
    U = _directions(rng, x.shape[0], cfg)
    y0 = query(x)
    scales = _feasible_scales(x, U, cfg.sigma)
    est = np.zeros_like(x)
    for u, t in zip(U, scales):
        sigma_eff = t * cfg.sigma
        y_probe = query(x + sigma_eff * u)
        if sigma_eff > PROBE_FLOOR:
            est += ((y_probe - y0) / sigma_eff) * u
    if not cfg.orthogonalize:
        est /= cfg.q
    return est


def _unit(v: np.ndarray) -> np.ndarray:
    n = np.linalg.norm(v)
    return v / n if n > 1e-12 else np.zeros_like(v)


def _sign_ascent_loop(f, cfg: RgfConfig, budget: int, rng, combine, method: str) -> RunRecord:
    tracker = RunTracker(f, budget)
    x = rng.uniform(-1.0, 1.0, f.dim)
    while not tracker.success and tracker.remaining >= cfg.q + 1:
        est = rgf_estimate(f, x, cfg, rng, query=tracker.query)
        if tracker.success:
            break
        x = np.clip(x + cfg.lr * np.sign(combine(est, x)), -1.0, 1.0)
    if not tracker.success and tracker.remaining >= 1:
        tracker.query(x)
    return tracker.finish(method=method)


def rgf_run(f, cfg: RgfConfig, budget: int, rng: np.random.Generator) -> RunRecord:
    """Sign-step ascent driven by the RGF estimate, from a uniform start."""
    return _sign_ascent_loop(f, cfg, budget, rng, lambda est, x: est, "rgf")


def prgf_run(f, prior, cfg: RgfConfig, budget: int, rng: np.random.Generator) -> RunRecord:
    """Prior-guided RGF: fixed-weight average of the normalized estimate and
    the normalized prior gradient, then a sign step.

    ``prior_weight=0`` reduces to plain RGF step for step under a shared
    seed; ``prior_weight=1`` is pure transfer ascent with the estimator
    queries spent only on success checks.
    """
    w = cfg.prior_weight

    def combine(est, x):
        return (1.0 - w) * _unit(est) + w * _unit(prior.grad(x))

    return _sign_ascent_loop(f, cfg, budget, rng, combine, "prgf")


def prior_only_run(
    f,
    prior,
    budget: int,
    eta: float = 0.05,
    rng: np.random.Generator | None = None,
    inner_steps: int = 20,
) -> RunRecord:
    """Repeated transfer attacks: sign-PGD ascent on the prior alone.

    Each attempt starts uniformly in the box, takes ``inner_steps`` sign
    steps of size ``eta`` on the prior gradient, then spends one query on
    the resulting candidate.  Repeats until success or budget exhaustion.
    """
    rng = rng if rng is not None else np.random.default_rng()
    tracker = RunTracker(f, budget)
    while not tracker.success and tracker.remaining >= 1:
        x = rng.uniform(-1.0, 1.0, f.dim)
        for _ in range(inner_steps):
            x = np.clip(x + eta * np.sign(prior.grad(x)), -1.0, 1.0)
        tracker.query(x)
    return tracker.finish(method="prior_only")


def random_run(f, budget: int, rng: np.random.Generator) -> RunRecord:
    """Uniform random search over the box."""
    tracker = RunTracker(f, budget)
    while not tracker.success and tracker.remaining >= 1:
        tracker.query(rng.uniform(-1.0, 1.0, f.dim))
    return tracker.finish(method="random")
