"""Learning-rate schedules, fold planning, and fold aggregation.

These are standalone numerical utilities; no training loop lives here.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import StepOutOfRange, TooFewRecords

N_FOLDS = 5


@dataclass
class OneCycleState:
    max_lr: float
    total_steps: int
    pct_start: float = 0.3
    div_factor: float = 25.0
    final_div_factor: float = 1e4
    step: int = 0

    def __post_init__(self):
        if not (0.0 < self.pct_start < 1.0):
            raise ValueError("pct_start must be in (0, 1)")

    @property
    def peak_step(self) -> int:
        return round(self.pct_start * self.total_steps)


def onecycle_lr(state: OneCycleState, step: int) -> float:
    """Cosine ramp up to max_lr, then cosine anneal down to the final floor."""
    if not (0 <= step <= state.total_steps):
        raise StepOutOfRange(f"step {step} outside [0, {state.total_steps}]")
    initial = state.max_lr / state.div_factor
    final = state.max_lr / state.final_div_factor
    peak = state.peak_step
    if step <= peak:
        frac = step / peak if peak else 1.0
        return initial + (state.max_lr - initial) * (1 - math.cos(math.pi * frac)) / 2
    frac = (step - peak) / (state.total_steps - peak)
    return final + (state.max_lr - final) * (1 + math.cos(math.pi * frac)) / 2


@dataclass
class PlateauState:
    lr: float
    factor: float = 0.1
    patience: int = 10
    best: float | None = None
    bad_epochs: int = 0
    mode: str = "min"
    min_lr: float = 0.0

    def __post_init__(self):
        if self.mode not in ("min", "max"):
            raise ValueError("mode must be 'min' or 'max'")


def plateau_step(state: PlateauState, metric: float) -> PlateauState:
    """Advance one epoch; reduce lr after more than `patience` stalled epochs."""
    if not math.isfinite(metric):
        raise ValueError("metric must be finite")
    improved = (state.best is None or
                (metric < state.best if state.mode == "min" else metric > state.best))
    if improved:
        state.best = metric
        state.bad_epochs = 0
    else:
        state.bad_epochs += 1
        if state.bad_epochs > state.patience:
            state.lr = max(state.lr * state.factor, state.min_lr)
            state.bad_epochs = 0
    return state


@dataclass(frozen=True)
class FoldPlan:
    seed: int
    folds: tuple[tuple[int, ...], ...]

    def validation(self, fold: int):
        return list(self.folds[fold])

    def training(self, fold: int):
        return sorted(i for j, f in enumerate(self.folds) if j != fold for i in f)

    def to_json(self) -> str:
        return json.dumps({"seed": self.seed, "folds": [list(f) for f in self.folds]})

    @classmethod
    def from_json(cls, text: str) -> "FoldPlan":
        doc = json.loads(text)
        return cls(seed=doc["seed"], folds=tuple(tuple(f) for f in doc["folds"]))


def make_folds(n_records: int, seed: int) -> FoldPlan:
    """Deterministic shuffle then round-robin split into 5 validation folds."""
    if n_records < N_FOLDS:
        raise TooFewRecords(f"need at least {N_FOLDS} records, got {n_records}")
    perm = np.random.default_rng(seed).permutation(n_records)
    folds = tuple(tuple(int(i) for i in perm[j::N_FOLDS]) for j in range(N_FOLDS))
    return FoldPlan(seed=seed, folds=folds)


def aggregate_folds(per_fold_metrics, ddof: int = 1):
    """Mean and SD per metric across folds.

    Sample SD (ddof=1) reproduces the published fold tables at 2-decimal
    rounding; population SD is available via ddof=0.
    """
    if not per_fold_metrics:
        raise ValueError("need at least one fold")
    keys = per_fold_metrics[0].keys()
    out = {}
    for key in keys:
        vals = np.array([fold[key] for fold in per_fold_metrics], dtype=np.float64)
        sd = float(vals.std(ddof=ddof)) if len(vals) > ddof else 0.0
        out[key] = (float(vals.mean()), sd)
    return out


def format_mean_sd(mean: float, sd: float, decimals: int = 2) -> str:
    return f"{mean:.{decimals}f} ({sd:.{decimals}f})"


def format_report(aggregate, decimals: int = 2) -> str:
    """Text table in the mean (SD) convention."""
    width = max((len(k) for k in aggregate), default=0)
    lines = [f"{k:<{width}}  {format_mean_sd(m, s, decimals)}"
             for k, (m, s) in aggregate.items()]
    return "\n".join(lines)
