"""Per-run outcome records and query-accounting helpers."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


@dataclass
class RunRecord:
    """Outcome of a single optimization run.

    ``best_trace`` is the running maximum of raw observed values, one entry
    per query.  ``queries`` is the total number of objective evaluations
    spent; ``queries_to_success`` is the 1-based index of the first value
    above the threshold (None if the run failed).  ``lambda_trace`` starts
    with the coefficient's initial value and then holds the value used at
    each surrogate iteration (empty for methods without a surrogate).
    """

    method: str
    seed: int
    success: bool
    queries: int
    queries_to_success: int | None
    best_trace: list[float]
    lambda_trace: list[float] = field(default_factory=list)
    raw_values: list[float] = field(default_factory=list)
    points: np.ndarray | None = None
    regret_trace: list[float] | None = None
    init_size: int = 0
    wallclock: float = 0.0
    aborted: bool = False
    abort_reason: str | None = None

    def to_json_obj(self) -> dict:
        return {
            "method": self.method,
            "seed": self.seed,
            "success": self.success,
            "queries": self.queries_to_success if self.success else self.queries,
            "best_trace": self.best_trace,
            "lambda_trace": self.lambda_trace,
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_json_obj(), separators=(",", ":"))


class RunTracker:
    """Routes objective queries, keeping traces and success bookkeeping.

    Every query passes through :meth:`query`, so the tracker's counts match
    the objective's audit counter by construction; :meth:`finish` asserts
    that equality.
    """

    def __init__(self, objective, budget: int, to_full=None):
        self.objective = objective
        self.budget = int(budget)
        self._to_full = to_full
        self._start_count = objective.queries
        self.values: list[float] = []
        self.best: list[float] = []
        self.points: list[np.ndarray] = []
        self.success_index: int | None = None

    @property
    def used(self) -> int:
        return len(self.values)

    @property
    def remaining(self) -> int:
        return self.budget - self.used

    @property
    def success(self) -> bool:
        return self.success_index is not None

    def query(self, x) -> float:
        if self.remaining <= 0:
            raise RuntimeError("query budget exhausted")
        x = np.asarray(x, dtype=float)
        full = x if self._to_full is None else self._to_full(x)
        y = self.objective.eval(full)
        self.points.append(x)
        self.values.append(y)
        self.best.append(y if not self.best else max(self.best[-1], y))
        if self.success_index is None and self.objective.is_success(y):
            self.success_index = len(self.values)
        return y

    def finish(
        self,
        method: str,
        seed: int = 0,
        lambda_trace: list[float] | None = None,
        init_size: int = 0,
        wallclock: float = 0.0,
        aborted: bool = False,
        abort_reason: str | None = None,
    ) -> RunRecord:
        spent = self.objective.queries - self._start_count
        if spent != self.used:
            raise RuntimeError(
                f"query accounting mismatch: tracker saw {self.used}, objective counted {spent}"
            )
        regret = None
        optimum = getattr(self.objective, "optimum_value", None)
        if optimum is not None:
            regret = [float(optimum) - v for v in self.values]
        return RunRecord(
            method=method,
            seed=seed,
            success=self.success,
            queries=self.used,
            queries_to_success=self.success_index,
            best_trace=list(self.best),
            lambda_trace=list(lambda_trace or []),
            raw_values=list(self.values),
            points=np.array(self.points) if self.points else None,
            regret_trace=regret,
            init_size=init_size,
            wallclock=wallclock,
            aborted=aborted,
            abort_reason=abort_reason,
        )
