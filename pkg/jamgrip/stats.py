"""
Mann-Whitney U tests and pairwise comparison matrices.

U(a, b) counts the pairs with a > b, ties counting one half, so
U(a, b) + U(b, a) = |a| * |b|. Small samples use the exact permutation
distribution of the midranks; larger ones the tie-corrected normal
approximation with continuity correction.
"""

import csv
import io
import itertools
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Mapping, NamedTuple, Sequence, Union

import numpy as np
from scipy.stats import norm, rankdata

from .errors import DomainError

logger = logging.getLogger(__name__)

ALTERNATIVES = ("two-sided", "less", "greater")
METHODS = ("auto", "exact", "asymptotic")
CORRECTIONS = ("none", "holm", "bonferroni")
EXACT_MAX_TOTAL = 12
_TOL = 1e-9


class MannWhitneyResult(NamedTuple):
    u: float
    p: float


def _as_sample(values: Sequence[float], name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float).reshape(-1)
    if arr.size == 0:
        raise DomainError(f"sample {name} is empty")
    if not np.all(np.isfinite(arr)):
        raise DomainError(f"sample {name} has non-finite values")
    return arr


def _exact_p(
    ranks: np.ndarray, n1: int, u: float, alternative: str
) -> float:
    offset = n1 * (n1 + 1) / 2.0
    center = n1 * (ranks.size - n1) / 2.0
    hits = 0
    total = 0
    for combo in itertools.combinations(range(ranks.size), n1):
        u_c = float(ranks[list(combo)].sum()) - offset
        total += 1
        if alternative == "less":
            hits += u_c <= u + _TOL
        elif alternative == "greater":
            hits += u_c >= u - _TOL
        else:
            hits += abs(u_c - center) >= abs(u - center) - _TOL
    return hits / total


def _normal_p(
    ranks: np.ndarray, n1: int, n2: int, u: float, alternative: str
) -> float:
    n = n1 + n2
    mu = n1 * n2 / 2.0
    _, counts = np.unique(ranks, return_counts=True)
    ties = float(((counts**3) - counts).sum())
    var = n1 * n2 / 12.0 * ((n + 1) - ties / (n * (n - 1)))
    if var <= 0:
        return 1.0
    sigma = math.sqrt(var)
    if alternative == "less":
        return float(norm.cdf((u - mu + 0.5) / sigma))
    if alternative == "greater":
        return float(norm.sf((u - mu - 0.5) / sigma))
    z = max(0.0, abs(u - mu) - 0.5) / sigma
    return float(min(1.0, 2.0 * norm.sf(z)))


def mann_whitney_u(
    a: Sequence[float],
    b: Sequence[float],
    alternative: str = "two-sided",
    method: str = "auto",
    exact_max_total: int = EXACT_MAX_TOTAL,
) -> MannWhitneyResult:
    """
    Mann-Whitney U of `a` against `b` with its p-value.

    Args:
        a, b: samples, each non-empty
        alternative: "two-sided", "less" (a tends lower) or "greater"
        method: "exact" enumerates rank arrangements, "asymptotic" uses
            the normal approximation, "auto" picks exact when
            |a| + |b| <= exact_max_total

    Returns:
        (U, p) with U = #(a > b) + 0.5 * #(a == b)
    """
    if alternative not in ALTERNATIVES:
        raise DomainError(f"alternative must be one of {ALTERNATIVES}")
    if method not in METHODS:
        raise DomainError(f"method must be one of {METHODS}")
    x = _as_sample(a, "a")
    y = _as_sample(b, "b")
    n1, n2 = x.size, y.size
    ranks = rankdata(np.concatenate([x, y]))
    u = float(ranks[:n1].sum() - n1 * (n1 + 1) / 2.0)
    exact = method == "exact" or (
        method == "auto" and n1 + n2 <= exact_max_total
    )
    if exact:
        p = _exact_p(ranks, n1, u, alternative)
    else:
        p = _normal_p(ranks, n1, n2, u, alternative)
    return MannWhitneyResult(u, min(1.0, max(0.0, p)))


def adjust_p_values(p_values: Sequence[float], correction: str) -> np.ndarray:
    """Family-wise correction over a flat list of p-values."""
    if correction not in CORRECTIONS:
        raise DomainError(f"correction must be one of {CORRECTIONS}")
    p = np.asarray(p_values, dtype=float)
    m = p.size
    if correction == "none" or m == 0:
        return p.copy()
    if correction == "bonferroni":
        return np.minimum(1.0, p * m)
    order = np.argsort(p, kind="stable")
    adjusted = np.empty(m)
    running = 0.0
    for rank, index in enumerate(order):
        running = max(running, min(1.0, (m - rank) * p[index]))
        adjusted[index] = running
    return adjusted


@dataclass(frozen=True)
class PairResult:
    a: str
    b: str
    n_a: int
    n_b: int
    u: float
    p: float
    p_adjusted: float
    significant: bool


@dataclass
class ComparisonMatrix:
    """
    Pairwise results. u[i, j] = U(group i, group j); p and flags are
    symmetric; the diagonal is NaN / False.
    """

    labels: List[str]
    sizes: List[int]
    u: np.ndarray
    p: np.ndarray
    p_adjusted: np.ndarray
    significant: np.ndarray
    alpha: float
    correction: str = "none"

    @classmethod
    def empty(
        cls,
        labels: Sequence[str],
        sizes: Sequence[int],
        alpha: float = 0.05,
        correction: str = "none",
    ) -> "ComparisonMatrix":
        """A matrix with no testable pairs (fewer than two groups)."""
        k = len(labels)
        return cls(
            labels=list(labels),
            sizes=list(sizes),
            u=np.full((k, k), np.nan),
            p=np.full((k, k), np.nan),
            p_adjusted=np.full((k, k), np.nan),
            significant=np.zeros((k, k), dtype=bool),
            alpha=alpha,
            correction=correction,
        )

    @property
    def pair_count(self) -> int:
        k = len(self.labels)
        return k * (k - 1) // 2

    def pairs(self) -> List[PairResult]:
        out = []
        for i, j in itertools.combinations(range(len(self.labels)), 2):
            out.append(
                PairResult(
                    a=self.labels[i],
                    b=self.labels[j],
                    n_a=self.sizes[i],
                    n_b=self.sizes[j],
                    u=float(self.u[i, j]),
                    p=float(self.p[i, j]),
                    p_adjusted=float(self.p_adjusted[i, j]),
                    significant=bool(self.significant[i, j]),
                )
            )
        return out

    def significant_pairs(self) -> List[PairResult]:
        return [pair for pair in self.pairs() if pair.significant]

    def to_csv_text(self) -> str:
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(
            ["a", "b", "n_a", "n_b", "u", "p", "p_adjusted", "significant"]
        )
        for pair in self.pairs():
            writer.writerow(
                [
                    pair.a,
                    pair.b,
                    pair.n_a,
                    pair.n_b,
                    f"{pair.u:g}",
                    f"{pair.p:.6g}",
                    f"{pair.p_adjusted:.6g}",
                    int(pair.significant),
                ]
            )
        return buffer.getvalue()

    def to_csv(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_csv_text())
        return path

    def to_dict(self) -> Dict[str, object]:
        return {
            "labels": self.labels,
            "alpha": self.alpha,
            "correction": self.correction,
            "pairs": [pair.__dict__ for pair in self.pairs()],
        }


def pairwise_matrix(
    groups: Mapping[str, Sequence[float]],
    alpha: float = 0.05,
    correction: str = "none",
    alternative: str = "two-sided",
    method: str = "auto",
) -> ComparisonMatrix:
    """Test every unordered pair of groups; flags adjusted p < alpha."""
    if len(groups) < 2:
        raise DomainError("pairwise_matrix needs at least two groups")
    if not 0 < alpha < 1:
        raise DomainError("alpha must be in (0, 1)")
    labels = [str(label) for label in groups]
    samples = [_as_sample(groups[label], label) for label in groups]
    k = len(labels)
    u = np.full((k, k), np.nan)
    p = np.full((k, k), np.nan)
    flat = []
    for i, j in itertools.combinations(range(k), 2):
        result = mann_whitney_u(samples[i], samples[j], alternative, method)
        u[i, j] = result.u
        u[j, i] = samples[i].size * samples[j].size - result.u
        p[i, j] = p[j, i] = result.p
        flat.append((i, j, result.p))
    adjusted_flat = adjust_p_values([f[2] for f in flat], correction)
    p_adjusted = np.full((k, k), np.nan)
    significant = np.zeros((k, k), dtype=bool)
    for (i, j, _), q in zip(flat, adjusted_flat):
        p_adjusted[i, j] = p_adjusted[j, i] = q
        significant[i, j] = significant[j, i] = q < alpha
    logger.debug(
        "Compared %d groups: %d of %d pairs significant",
        k,
        int(significant.sum() // 2),
        len(flat),
    )
    return ComparisonMatrix(
        labels=labels,
        sizes=[s.size for s in samples],
        u=u,
        p=p,
        p_adjusted=p_adjusted,
        significant=significant,
        alpha=alpha,
        correction=correction,
    )
