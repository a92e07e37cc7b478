"""Staircase selection over a finite candidate set.

Each candidate ``r`` is chosen with probability proportional to the staircase
density evaluated at its score ``C(D, r)``.  Scores of neighbouring datasets
differ by at most the sensitivity, which yields a ``2 * epsilon`` guarantee.
Weights are computed from integer levels, ``f = a * b**level``, relative to the
smallest level so that far-out scores do not underflow.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import _kernels
from .exceptions import ValidationError
from .mechanisms import PrivacyParams


@dataclass(frozen=True)
class CandidateScoring:
    candidates: tuple
    scores: np.ndarray
    sensitivity: float

    def __post_init__(self):
        cands = tuple(self.candidates)
        scores = np.asarray(self.scores, dtype=np.float64).reshape(-1)
        if not cands:
            raise ValidationError("at least one candidate is required")
        if len(cands) != scores.size:
            raise ValidationError("candidates and scores must have the same length")
        if not np.all(np.isfinite(scores)) or np.any(scores < 0):
            raise ValidationError("scores must be finite and non-negative")
        sens = float(self.sensitivity)
        if not math.isfinite(sens) or sens <= 0:
            raise ValidationError(f"sensitivity must be positive, got {self.sensitivity!r}")
        object.__setattr__(self, "candidates", cands)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "sensitivity", sens)

    @classmethod
    def from_csv(cls, path, sensitivity: float) -> "CandidateScoring":
        """Read rows ``candidate_id,score``; a header row is optional."""
        ids, scores = [], []
        with open(path, newline="") as fh:
            for rec in csv.reader(fh):
                if not rec or rec[0].lstrip().startswith("#"):
                    continue
                if len(rec) < 2:
                    raise ValidationError(f"{path}: expected 'candidate_id,score', got {rec!r}")
                try:
                    score = float(rec[1])
                except ValueError:
                    if not ids:
                        continue  # header
                    raise ValidationError(f"{path}: bad score {rec[1]!r}") from None
                ids.append(rec[0].strip())
                scores.append(score)
        return cls(tuple(ids), np.array(scores), sensitivity)


def _check_params(scoring: CandidateScoring, params: PrivacyParams, gamma: float) -> float:
    if not math.isclose(params.delta, scoring.sensitivity, rel_tol=1e-12):
        raise ValidationError(
            f"params.delta ({params.delta}) must equal the scoring sensitivity ({scoring.sensitivity})")
    gamma = float(gamma)
    if not 0.0 <= gamma <= 1.0:
        raise ValidationError(f"gamma must lie in [0, 1], got {gamma!r}")
    return gamma


def abstract_distribution(scoring: CandidateScoring, params: PrivacyParams, gamma: float) -> np.ndarray:
    """Selection probabilities, in the declared candidate order."""
    gamma = _check_params(scoring, params, gamma)
    levels = _kernels.staircase_level_numpy(scoring.scores, scoring.sensitivity, gamma)
    w = np.exp(-params.epsilon * (levels - levels.min()))
    return w / w.sum()


def abstract_select(scoring: CandidateScoring, params: PrivacyParams, gamma: float, u):
    """Inverse-CDF selection: ``u`` in [0, 1) maps to the first candidate whose
    cumulative probability exceeds it."""
    p = abstract_distribution(scoring, params, gamma)
    cum = np.cumsum(p)
    idx = np.minimum(np.searchsorted(cum, np.asarray(u), side="right"), p.size - 1)
    if np.ndim(idx) == 0:
        return scoring.candidates[int(idx)]
    return [scoring.candidates[i] for i in idx.reshape(-1)]


def abstract_sample(scoring: CandidateScoring, params: PrivacyParams, gamma: float,
                    rng: np.random.Generator, size: Optional[int] = None):
    u = rng.random() if size is None else rng.random(size)
    return abstract_select(scoring, params, gamma, u)


def max_log_ratio(p1: np.ndarray, p2: np.ndarray) -> float:
    """``max_r |log p1(r) - log p2(r)|``."""
    return float(np.max(np.abs(np.log(p1) - np.log(p2))))


def fuzz_neighbours(params: PrivacyParams, gamma: float, n_pairs: int = 1000,
                    max_candidates: int = 16, seed: int = 0,
                    score_scale: Optional[float] = None) -> dict:
    """Worst probability ratio over random neighbouring scorings.

    Each pair draws scores ``c1`` and a perturbation ``c2 = c1 + e`` with
    ``|e| <= delta`` (clipped at zero).  Half the perturbations sit exactly on
    ``+-delta`` to probe the boundary.
    """
    rng = np.random.default_rng(seed)
    d = params.delta
    scale = 5 * d if score_scale is None else score_scale
    worst = 0.0
    for _ in range(n_pairs):
        k = int(rng.integers(1, max_candidates + 1))
        c1 = rng.random(k) * scale
        e = rng.uniform(-d, d, k)
        edge = rng.random(k) < 0.5
        e[edge] = np.where(rng.random(edge.sum()) < 0.5, -d, d)
        c2 = np.maximum(c1 + e, 0.0)
        s1 = CandidateScoring(tuple(range(k)), c1, d)
        s2 = CandidateScoring(tuple(range(k)), c2, d)
        p1 = abstract_distribution(s1, params, gamma)
        p2 = abstract_distribution(s2, params, gamma)
        worst = max(worst, max_log_ratio(p1, p2))
    ratio = math.exp(worst)
    bound = math.exp(2 * params.epsilon)
    return {"max_ratio": ratio, "bound": bound, "pairs": n_pairs,
            "passed": ratio <= bound * (1 + 1e-12)}


def grid_scoring(grid: Sequence[float], target: float, sensitivity: float) -> CandidateScoring:
    """Candidates on a grid of reals scored by distance to ``target``."""
    grid = np.asarray(grid, dtype=np.float64)
    return CandidateScoring(tuple(grid.tolist()), np.abs(grid - target), sensitivity)
