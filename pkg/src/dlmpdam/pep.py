"""Probability efficient points of multi-site VRE output from historical samples.

A gamma-efficient point is the smallest vector ``v`` (in total) that
dominates a set of whole historical sample vectors carrying at least
probability ``gamma``.  Selecting whole vectors keeps the cross-site
correlation present in the data.

``gamma`` is the probability level throughout.  Results reported at
"confidence 0.25 / 0.75" with more generation at the higher value
behave like ``gamma``, so that number is what callers should pass.
"""

from __future__ import annotations

import csv
import itertools
from collections import defaultdict
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .errors import EnumerationTooLarge, InputError, SolverError
from .solver import LinearModel

PROB_TOL = 1e-9
BRUTE_FORCE_LIMIT = 20


@dataclass(frozen=True)
class SampleSet:
    sites: tuple[str, ...]
    samples: np.ndarray  # (|S|, |R|) MW
    probabilities: np.ndarray  # (|S|,)

    def __post_init__(self):
        s = np.asarray(self.samples, float)
        if s.ndim != 2 or s.shape[1] != len(self.sites):
            raise InputError(f"samples must be (|S|, {len(self.sites)}), got {s.shape}")
        if s.shape[0] < 1:
            raise InputError("need at least one sample")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise InputError("sample values must be finite and non-negative")
        pi = np.asarray(self.probabilities, float)
        if pi.shape != (s.shape[0],) or np.any(pi <= 0):
            raise InputError("probabilities must be positive, one per sample")
        if abs(pi.sum() - 1.0) > PROB_TOL:
            raise InputError(f"probabilities sum to {pi.sum()!r}, not 1")
        object.__setattr__(self, "samples", s)
        object.__setattr__(self, "probabilities", pi)

    @classmethod
    def uniform(cls, sites: Sequence[str], samples) -> "SampleSet":
        samples = np.atleast_2d(np.asarray(samples, float))
        return cls(tuple(sites), samples, np.full(samples.shape[0], 1.0 / samples.shape[0]))

    @property
    def size(self) -> int:
        return self.samples.shape[0]


@dataclass(frozen=True)
class PepResult:
    gamma: float
    sites: tuple[str, ...]
    v: np.ndarray
    selected: np.ndarray  # bool per sample
    probability: float  # mass of the selected samples

    @property
    def total(self) -> float:
        return float(self.v.sum())

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.sites, map(float, self.v)))


def _check_gamma(gamma: float) -> None:
    if not 0.0 < gamma < 1.0:
        raise InputError(f"gamma must lie in (0, 1), got {gamma}")


def _result(samples: SampleSet, gamma: float, selected: np.ndarray) -> PepResult:
    selected = np.asarray(selected, bool)
    v = samples.samples[selected].max(axis=0)
    return PepResult(
        gamma=gamma,
        sites=samples.sites,
        v=v,
        selected=selected,
        probability=float(samples.probabilities[selected].sum()),
    )


def _pep_model(samples: SampleSet, gamma: float) -> tuple[LinearModel, np.ndarray, np.ndarray]:
    S, R = samples.samples.shape
    m = LinearModel(name="pep")
    v = m.add_vars("v", R, lb=0.0, cost=1.0)
    z = m.add_vars("z", S, binary=True)
    m.add_rows("probability", [z], [samples.probabilities], ">=", [gamma - PROB_TOL])
    cols, coefs = [], []
    for s in range(S):
        for k in range(R):
            cols.append([v[k], z[s]])
            coefs.append([1.0, -samples.samples[s, k]])
    m.add_rows("dominance", cols, coefs, ">=", np.zeros(S * R))
    return m, v, z


def solve_pep(samples: SampleSet, gamma: float, tie_break: bool = True, time_limit: float | None = 60.0) -> PepResult:
    """Minimise the sum of the efficient point over probability-``gamma`` selections.

    With ``tie_break`` the selection among equal-total optima is the
    lexicographically smallest 0/1 vector: samples are visited in order
    and excluded whenever the optimal total can still be reached.
    """
    _check_gamma(gamma)
    model, v, z = _pep_model(samples, gamma)
    sol = model.solve_milp(time_limit=time_limit, mip_rel_gap=0.0)
    chosen = np.round(sol.x[z]).astype(bool)
    best = float(samples.samples[chosen].max(axis=0).sum())
    if tie_break:
        slack = 1e-9 * max(1.0, abs(best))
        model.add_rows("optimal_total", [v], [np.ones(len(v))], "<=", [best + slack])
        for s in range(samples.size):
            if not chosen[s]:
                model.fix([z[s]], [0])
                continue
            trial = model.copy()
            trial.fix([z[s]], [0])
            try:
                alt = trial.solve_milp(time_limit=time_limit, mip_rel_gap=0.0)
            except SolverError:
                model.fix([z[s]], [1])
                continue
            model = trial
            chosen = np.round(alt.x[z]).astype(bool)
    if samples.probabilities[chosen].sum() < gamma - PROB_TOL:
        raise SolverError("PEP selection does not reach the probability level")
    return _result(samples, gamma, chosen)


def brute_force_pep(samples: SampleSet, gamma: float) -> PepResult:
    """Enumerate every selection; same tie rule as :func:`solve_pep`."""
    _check_gamma(gamma)
    S = samples.size
    if S > BRUTE_FORCE_LIMIT:
        raise EnumerationTooLarge(f"{S} samples exceed the enumeration limit of {BRUTE_FORCE_LIMIT}")
    best_total, best_sel = np.inf, None
    totals = []
    for bits in itertools.product((0, 1), repeat=S):
        sel = np.array(bits, bool)
        if not sel.any() or samples.probabilities[sel].sum() < gamma - PROB_TOL:
            continue
        total = float(samples.samples[sel].max(axis=0).sum())
        totals.append((total, bits))
        best_total = min(best_total, total)
    # product() yields selections in lexicographic order, so the first
    # selection within tolerance of the optimum is the tie-break winner.
    slack = 1e-9 * max(1.0, abs(best_total))
    for total, bits in totals:
        if total <= best_total + slack:
            best_sel = np.array(bits, bool)
            break
    return _result(samples, gamma, best_sel)


@dataclass(frozen=True)
class HistoricalData:
    """Daily VRE histories: ``values[s, t, m]`` for sample day ``s``, slot ``t``, site ``m``."""

    sites: tuple[str, ...]
    days: tuple[str, ...]
    values: np.ndarray
    probabilities: np.ndarray

    @property
    def horizon(self) -> int:
        return self.values.shape[1]

    def at(self, t: int) -> SampleSet:
        return SampleSet(self.sites, self.values[:, t, :], self.probabilities)


def load_history_csv(path: str | Path, horizon: int = 24) -> HistoricalData:
    """Read ``timestamp, site, mw[, probability]`` rows into daily sample vectors.

    The slot is the hour of the timestamp; each calendar day is one sample.
    Without a probability column the days are equiprobable.
    """
    path = Path(path)
    data: dict[str, dict[tuple[int, str], float]] = defaultdict(dict)
    probs: dict[str, float] = {}
    sites: list[str] = []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = {"timestamp", "site", "mw"} - set(reader.fieldnames or ())
        if missing:
            raise InputError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                ts = datetime.fromisoformat(row["timestamp"])
                mw = float(row["mw"])
            except ValueError as exc:
                raise InputError(f"{path}:{lineno}: {exc}") from None
            if ts.hour >= horizon:
                raise InputError(f"{path}:{lineno}: hour {ts.hour} outside horizon {horizon}")
            day = ts.date().isoformat()
            site = row["site"].strip()
            if site not in sites:
                sites.append(site)
            data[day][(ts.hour, site)] = mw
            if row.get("probability"):
                probs[day] = float(row["probability"])
    days = sorted(data)
    values = np.zeros((len(days), horizon, len(sites)))
    for s, day in enumerate(days):
        for t in range(horizon):
            for m, site in enumerate(sites):
                try:
                    values[s, t, m] = data[day][(t, site)]
                except KeyError:
                    raise InputError(f"{path}: no value for {site} on {day} hour {t}") from None
    if probs:
        if set(probs) != set(days):
            raise InputError(f"{path}: probability given for some days only")
        pi = np.array([probs[d] for d in days])
    else:
        pi = np.full(len(days), 1.0 / len(days))
    return HistoricalData(tuple(sites), tuple(days), values, pi)


def pep_schedule(history: HistoricalData, gamma: float, **kwargs) -> list[PepResult]:
    """One independent PEP per timeslot."""
    return [solve_pep(history.at(t), gamma, **kwargs) for t in range(history.horizon)]


def schedule_matrix(results: Sequence[PepResult]) -> np.ndarray:
    """``(T, |R|)`` array of efficient points."""
    return np.vstack([r.v for r in results])


def site_schedule(results: Sequence[PepResult]) -> Mapping[str, np.ndarray]:
    mat = schedule_matrix(results)
    return {site: mat[:, k] for k, site in enumerate(results[0].sites)}
