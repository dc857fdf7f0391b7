"""Synthetic black-box objectives, controllable-similarity priors, and the
external-process objective protocol.

Synthetic objectives are finite kernel expansions with exact RKHS geometry,
so similarity between an objective and its prior can be dialed in exactly:
``make_pair`` performs Gram-Schmidt in the RKHS to produce a prior whose
cosine angle with the objective equals the request to float precision.

Every objective evaluation is counted; the audit counter is the ground
truth for query-budget accounting in the benchmark harness.
"""

from __future__ import annotations

import json
import math
import queue
import subprocess
import threading
from dataclasses import dataclass, field

import numpy as np

from .kernels import (
    KernelExpansion,
    KernelParams,
    combine_expansions,
    expansion_inner_product,
)

BOX_TOL = 1e-9

#: Residual-norm floor below which a random direction is resampled during
#: RKHS Gram-Schmidt.
ORTHOGONALIZE_FLOOR = 1e-8


class ProtocolError(RuntimeError):
    """External objective process misbehaved (bad reply, exit, or timeout)."""


class BoxObjective:
    """Deterministic objective on [-1, 1]^d with a success threshold.

    A run is declared successful once an observed value exceeds
    ``threshold``.  ``eval`` increments the query counter; oracles that
    need free evaluations should go through ``exact_expansion`` instead.
    """

    def __init__(self, dim, fn, threshold, descriptor=None, exact_expansion=None):
        self.dim = int(dim)
        self._fn = fn
        self.threshold = float(threshold)
        self.descriptor = dict(descriptor or {})
        self.exact_expansion: KernelExpansion | None = exact_expansion
        self.queries = 0

    def eval(self, x) -> float:
        """Query the objective once (counted against the budget)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim,):
            raise ValueError(f"expected a point of dimension {self.dim}, got shape {x.shape}")
        if np.max(np.abs(x)) > 1.0 + BOX_TOL:
            raise ValueError("query point outside [-1, 1]^d")
        self.queries += 1
        return float(self._fn(x))

    def is_success(self, y: float) -> bool:
        return y > self.threshold

    def close(self):
        """Release external resources (no-op for in-process objectives)."""


@dataclass
class PriorFunction:
    """Differentiable stand-in for the unknown objective (value + gradient).

    ``exact_expansion`` is present for synthetic priors built in the RKHS,
    enabling exact norms and inner products.
    """

    dim: int
    value_fn: object
    grad_fn: object
    value_batch_fn: object = None
    grad_batch_fn: object = None
    exact_expansion: KernelExpansion | None = None

    def value(self, x) -> float:
        return float(self.value_fn(np.asarray(x, dtype=float)))

    def grad(self, x) -> np.ndarray:
        return np.asarray(self.grad_fn(np.asarray(x, dtype=float)), dtype=float)

    def value_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.value_batch_fn is not None:
            return np.asarray(self.value_batch_fn(X), dtype=float)
        return np.array([self.value(row) for row in X])

    def grad_batch(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if self.grad_batch_fn is not None:
            return np.asarray(self.grad_batch_fn(X), dtype=float)
        return np.vstack([self.grad(row) for row in X])

    @classmethod
    def from_expansion(cls, expansion: KernelExpansion) -> "PriorFunction":
        return cls(
            dim=expansion.dim,
            value_fn=expansion.value,
            grad_fn=expansion.grad,
            value_batch_fn=expansion.value_batch,
            grad_batch_fn=expansion.grad_batch,
            exact_expansion=expansion,
        )


@dataclass
class SimilarityControlledPair:
    """Objective plus a prior with an exactly controlled RKHS cosine angle."""

    f: BoxObjective
    f_prior: PriorFunction
    cos_angle: float

    def residual_norm(self, lam: float = 1.0) -> float:
        """Exact ``||f - lam * f'||_k`` (both members are unit norm)."""
        return math.sqrt(max(1.0 - 2.0 * lam * self.cos_angle + lam * lam, 0.0))


def _unit_norm_expansion(
    rng: np.random.Generator, d: int, m_centers: int, kernel: KernelParams
) -> KernelExpansion:
    centers = rng.uniform(-1.0, 1.0, size=(m_centers, d))
    coeffs = rng.standard_normal(m_centers)
    h = KernelExpansion(centers, coeffs, kernel)
    nsq = h.norm_sq()
    if nsq <= 0.0:
        raise RuntimeError("degenerate random expansion")
    return h.scaled(1.0 / math.sqrt(nsq))


def _threshold_quantile(
    expansion: KernelExpansion,
    rng: np.random.Generator,
    quantile: float,
    n_samples: int,
    chunk: int = 20000,
) -> float:
    vals = np.empty(n_samples)
    done = 0
    while done < n_samples:
        n = min(chunk, n_samples - done)
        X = rng.uniform(-1.0, 1.0, size=(n, expansion.dim))
        vals[done : done + n] = expansion.value_batch(X)
        done += n
    return float(np.quantile(vals, quantile))


def make_rkhs_objective(
    d: int,
    m_centers: int,
    seed: int,
    kernel: KernelParams | None = None,
    threshold_quantile: float = 0.95,
    threshold_samples: int = 100_000,
) -> BoxObjective:
    """Random unit-RKHS-norm expansion objective with a stored success threshold.

    Centers are uniform in the box and coefficients standard normal, rescaled
    so the exact RKHS norm is 1.  The threshold is the ``threshold_quantile``
    quantile of the objective over ``threshold_samples`` uniform points, so a
    single uniform query succeeds with probability ``1 - threshold_quantile``.
    Everything is reproducible from the seed.
    """
    if m_centers < 1:
        raise ValueError("m_centers must be >= 1")
    kernel = kernel or KernelParams.for_dim(d)
    rng = np.random.default_rng(seed)
    expansion = _unit_norm_expansion(rng, d, m_centers, kernel)
    tau = _threshold_quantile(expansion, rng, threshold_quantile, threshold_samples)
    return BoxObjective(
        dim=d,
        fn=expansion.value,
        threshold=tau,
        descriptor={"family": "rkhs", "d": d, "m_centers": m_centers, "seed": seed},
        exact_expansion=expansion,
    )


def make_pair(
    d: int,
    cos_angle: float,
    seed: int,
    m_centers: int = 25,
    kernel: KernelParams | None = None,
) -> SimilarityControlledPair:
    """Objective/prior pair with exact RKHS cosine angle ``cos_angle``.

    Both members have unit RKHS norm, so the best prior coefficient is
    exactly ``cos_angle`` and ``||f - f'||_k^2 = 2 - 2 cos_angle``.  The
    orthogonal component is a fresh random expansion with its projection on
    the objective removed (resampled if the residual is negligible).
    """
    if not -1.0 <= cos_angle <= 1.0:
        raise ValueError("cos_angle must lie in [-1, 1]")
    kernel = kernel or KernelParams.for_dim(d)
    f_obj = make_rkhs_objective(d, m_centers, seed, kernel)
    fe = f_obj.exact_expansion
    sin_angle = math.sqrt(max(1.0 - cos_angle * cos_angle, 0.0))

    if sin_angle == 0.0:
        prior_expansion = fe.scaled(cos_angle)
    else:
        for attempt in range(32):
            rng = np.random.default_rng([seed, 1001 + attempt])
            g_raw = _unit_norm_expansion(rng, d, m_centers, kernel)
            c = expansion_inner_product(g_raw, fe)
            resid_sq = 1.0 - c * c
            if resid_sq > ORTHOGONALIZE_FLOOR**2:
                break
        else:
            raise RuntimeError("could not draw a direction independent of the objective")
        g_perp = combine_expansions([(1.0, g_raw), (-c, fe)]).scaled(1.0 / math.sqrt(resid_sq))
        prior_expansion = combine_expansions([(cos_angle, fe), (sin_angle, g_perp)])

    prior = PriorFunction.from_expansion(prior_expansion)
    realized = expansion_inner_product(fe, prior_expansion)
    if abs(realized - cos_angle) > 1e-6:
        raise RuntimeError(f"realized cosine {realized} too far from request {cos_angle}")
    return SimilarityControlledPair(f=f_obj, f_prior=prior, cos_angle=realized)


def make_quadratic_objective(
    d: int, center: np.ndarray | None = None, threshold: float = -0.01
) -> BoxObjective:
    """Concave quadratic ``-||x - center||^2`` (known interior optimum)."""
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)

    def fn(x):
        diff = x - c
        return -float(diff @ diff)

    return BoxObjective(
        dim=d,
        fn=fn,
        threshold=threshold,
        descriptor={"family": "quadratic", "d": d, "center": c.tolist()},
    )


def make_quadratic_prior(d: int, center: np.ndarray | None = None, sign: float = 1.0) -> PriorFunction:
    """Prior matching (or opposing, with ``sign=-1``) the concave quadratic."""
    c = np.zeros(d) if center is None else np.asarray(center, dtype=float)
    return PriorFunction(
        dim=d,
        value_fn=lambda x: -sign * float((x - c) @ (x - c)),
        grad_fn=lambda x: -2.0 * sign * (x - c),
        value_batch_fn=lambda X: -sign * np.sum((X - c) ** 2, axis=1),
        grad_batch_fn=lambda X: -2.0 * sign * (X - c),
    )


def linear_sphere_sample(d: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Two independent uniform draws from the unit hypersphere in R^d."""
    if d < 2:
        raise ValueError("d must be >= 2")
    rng = np.random.default_rng(seed)
    w = rng.standard_normal(d)
    w /= np.linalg.norm(w)
    w_prime = rng.standard_normal(d)
    w_prime /= np.linalg.norm(w_prime)
    return w, w_prime


def sphere_pair_statistics(d: int, n_pairs: int, seed: int) -> dict:
    """Monte Carlo statistics of ``w . w'`` for uniform unit-sphere pairs.

    Returns the empirical mean of the squared dot product (expected value
    1/d), its standard error, and the fraction of pairs with dot product
    at least 1/2 (the alignment needed for an unscaled linear prior to
    shrink the residual norm).
    """
    rng = np.random.default_rng(seed)
    W = rng.standard_normal((n_pairs, d))
    W /= np.linalg.norm(W, axis=1, keepdims=True)
    Wp = rng.standard_normal((n_pairs, d))
    Wp /= np.linalg.norm(Wp, axis=1, keepdims=True)
    dots = np.sum(W * Wp, axis=1)
    sq = dots * dots
    return {
        "mean_sq": float(np.mean(sq)),
        "stderr_sq": float(np.std(sq, ddof=1) / math.sqrt(n_pairs)),
        "frac_dot_ge_half": float(np.mean(dots >= 0.5)),
    }


# ---------------------------------------------------------------------------
# External objective protocol: newline-delimited JSON over a child's stdio.
#
# handshake: {"op": "hello"}            -> {"dim": int, "threshold": float}
# request:   {"op": "eval", "x": [...]} -> {"y": float} or {"error": "msg"}
# ---------------------------------------------------------------------------


@dataclass
class ProtocolConfig:
    """Settings for talking to an external objective process."""

    timeout: float = 30.0


class _LineReader:
    """Background reader so replies can be awaited with a timeout."""

    def __init__(self, stream):
        self._queue: queue.Queue = queue.Queue()
        self._thread = threading.Thread(target=self._pump, args=(stream,), daemon=True)
        self._thread.start()

    def _pump(self, stream):
        for line in stream:
            self._queue.put(line)
        self._queue.put(None)

    def readline(self, timeout: float) -> str:
        try:
            line = self._queue.get(timeout=timeout)
        except queue.Empty:
            raise ProtocolError(f"no reply within {timeout} s") from None
        if line is None:
            raise ProtocolError("objective process closed its output")
        return line


class ExternalObjective(BoxObjective):
    """Objective served by a child process speaking the line protocol.

    Each evaluation is one request/response round trip.  Dimension and
    success threshold come from the handshake.  Timeouts and malformed
    replies raise :class:`ProtocolError`; the budget counter still reflects
    every request that was sent.
    """

    def __init__(self, command, config: ProtocolConfig | None = None, record_transcript=False):
        self.config = config or ProtocolConfig()
        self.transcript: list[tuple[str, str]] = [] if record_transcript else None
        self._proc = subprocess.Popen(
            command,
            stdin=subprocess.PIPE,
            stdout=subprocess.PIPE,
            text=True,
            bufsize=1,
        )
        self._reader = _LineReader(self._proc.stdout)
        hello = self._round_trip({"op": "hello"})
        try:
            dim = int(hello["dim"])
            threshold = float(hello["threshold"])
        except (KeyError, TypeError, ValueError) as exc:
            self.close()
            raise ProtocolError(f"bad handshake reply: {hello!r}") from exc
        super().__init__(
            dim=dim,
            fn=self._eval_remote,
            threshold=threshold,
            descriptor={"family": "external", "command": list(command)},
        )

    def _round_trip(self, request: dict) -> dict:
        line = json.dumps(request, separators=(",", ":"))
        try:
            self._proc.stdin.write(line + "\n")
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise ProtocolError("objective process is gone") from exc
        reply = self._reader.readline(self.config.timeout)
        if self.transcript is not None:
            self.transcript.append((line, reply.rstrip("\n")))
        try:
            parsed = json.loads(reply)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"malformed reply line: {reply!r}") from exc
        if not isinstance(parsed, dict):
            raise ProtocolError(f"malformed reply line: {reply!r}")
        return parsed

    def _eval_remote(self, x: np.ndarray) -> float:
        reply = self._round_trip({"op": "eval", "x": [float(v) for v in x]})
        if "error" in reply:
            raise ProtocolError(f"objective reported: {reply['error']}")
        if "y" not in reply:
            raise ProtocolError(f"reply missing 'y': {reply!r}")
        return float(reply["y"])

    def close(self):
        if self._proc.poll() is None:
            try:
                self._proc.stdin.close()
            except OSError:
                pass
            self._proc.terminate()
            try:
                self._proc.wait(timeout=5)
            except subprocess.TimeoutExpired:
                self._proc.kill()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def external_objective(command, config: ProtocolConfig | None = None, **kwargs) -> ExternalObjective:
    """Spawn ``command`` and wrap it as a query-counted objective."""
    return ExternalObjective(command, config, **kwargs)
