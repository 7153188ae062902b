"""Expert-knowledge rule tree over study summaries, plus its grid search.

The tree follows Chicago Classification v3.0-style criteria: an elevated
supine median IRP selects among the obstruction diagnoses, otherwise the
swallow-type mix selects among the non-obstructive ones. The raw 10-class
output merges to 8 classes (DES into T3A, FRP into IEM).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DataError
from .labels import (
    MERGE_MAP,
    PressurizationType,
    RawDiagnosis10,
    StudyDiagnosis,
    SwallowType,
)

NOMINAL_PARAMS = (15.0, 0.2, 0.5)
DEFAULT_GRID = {"a1": (12.0, 17.0, 0.5), "a2": (0.1, 0.3, 0.01), "a3": (0.4, 0.6, 0.01)}


@dataclass(frozen=True)
class RuleParams:
    """Branch thresholds: IRP cut-off a1 (mmHg), minor-fraction threshold a2,
    majority-fraction threshold a3."""

    a1: float = 15.0
    a2: float = 0.2
    a3: float = 0.5

    def __post_init__(self):
        if not (5.0 <= self.a1 <= 30.0):
            raise ConfigError(f"a1 must be in [5, 30] mmHg, got {self.a1}")
        if not (0.0 < self.a2 < 1.0) or not (0.0 < self.a3 < 1.0):
            raise ConfigError("a2 and a3 must be in (0, 1)")


@dataclass(frozen=True)
class StudySummary:
    """Supine-swallow statistics feeding the rule tree."""

    irp_median: float
    p_type: tuple       # 6 fractions, argmax counts over supine swallows
    p_press: tuple      # 3 fractions

    def __post_init__(self):
        p_type = tuple(float(p) for p in self.p_type)
        p_press = tuple(float(p) for p in self.p_press)
        if len(p_type) != 6 or len(p_press) != 3:
            raise DataError("summary needs 6 type fractions and 3 pressurization fractions")
        if abs(sum(p_type) - 1.0) > 1e-9 or abs(sum(p_press) - 1.0) > 1e-9:
            raise DataError("summary fractions must sum to 1")
        object.__setattr__(self, "irp_median", float(self.irp_median))
        object.__setattr__(self, "p_type", p_type)
        object.__setattr__(self, "p_press", p_press)

    @classmethod
    def from_labels(cls, type_labels, press_labels, irp_values) -> "StudySummary":
        """Summary from per-swallow hard labels (already position-filtered)."""
        type_labels = np.asarray(type_labels, dtype=np.int64)
        press_labels = np.asarray(press_labels, dtype=np.int64)
        irp_values = np.asarray(irp_values, dtype=np.float64)
        if type_labels.size == 0:
            raise DataError("summary requires at least one swallow")
        p_type = np.bincount(type_labels, minlength=6) / type_labels.size
        p_press = np.bincount(press_labels, minlength=3) / press_labels.size
        return cls(float(np.median(irp_values)), tuple(p_type), tuple(p_press))


def classify_rule(summary: StudySummary, params: RuleParams | None = None) -> RawDiagnosis10:
    """Walk the decision tree; deterministic branch order."""
    p = params or RuleParams(*NOMINAL_PARAMS)
    t = summary.p_type
    F, W, FR, P, H = (
        t[SwallowType.F],
        t[SwallowType.W],
        t[SwallowType.FR],
        t[SwallowType.P],
        t[SwallowType.H],
    )
    pep = summary.p_press[PressurizationType.PEP]
    if summary.irp_median > p.a1:
        if F >= 1.0:
            return RawDiagnosis10.T2A if pep >= p.a2 else RawDiagnosis10.T1A
        if P >= p.a2:
            return RawDiagnosis10.T3A
        return RawDiagnosis10.EGJOO
    if F >= 1.0:
        return RawDiagnosis10.ABC
    if P >= p.a2:
        return RawDiagnosis10.DES
    if H >= p.a2:
        return RawDiagnosis10.JES
    if W + F >= p.a3:
        return RawDiagnosis10.IEM
    if FR >= p.a3:
        return RawDiagnosis10.FRP
    return RawDiagnosis10.NEM


def merge_to8(raw: RawDiagnosis10) -> StudyDiagnosis:
    """Total 10-to-8 class merge: DES -> T3A, FRP -> IEM, identity otherwise."""
    return MERGE_MAP[RawDiagnosis10(raw)]


def classify_merged(summary: StudySummary, params: RuleParams | None = None) -> StudyDiagnosis:
    return merge_to8(classify_rule(summary, params))


# ---------------------------------------------------------------------------
# Grid search
# ---------------------------------------------------------------------------


def _summaries_to_arrays(summaries):
    irp = np.array([s.irp_median for s in summaries])
    p_type = np.array([s.p_type for s in summaries])
    p_press = np.array([s.p_press for s in summaries])
    return irp, p_type, p_press


def _classify_batch(irp, p_type, p_press, a1, a2, a3):
    """Vectorized rule tree over study arrays; returns merged 8-class ids."""
    F = p_type[:, SwallowType.F]
    W = p_type[:, SwallowType.W]
    FR = p_type[:, SwallowType.FR]
    P = p_type[:, SwallowType.P]
    H = p_type[:, SwallowType.H]
    pep = p_press[:, PressurizationType.PEP]

    elevated = irp > a1
    all_failed = F >= 1.0
    out = np.full(irp.shape, int(StudyDiagnosis.NEM), dtype=np.int64)

    hi_t2a = elevated & all_failed & (pep >= a2)
    hi_t1a = elevated & all_failed & ~(pep >= a2)
    hi_t3a = elevated & ~all_failed & (P >= a2)
    hi_egjoo = elevated & ~all_failed & ~(P >= a2)
    lo = ~elevated
    lo_abc = lo & all_failed
    lo_des = lo & ~all_failed & (P >= a2)
    lo_jes = lo & ~all_failed & ~(P >= a2) & (H >= a2)
    lo_iem = lo & ~all_failed & ~(P >= a2) & ~(H >= a2) & (W + F >= a3)
    lo_frp = lo & ~all_failed & ~(P >= a2) & ~(H >= a2) & ~(W + F >= a3) & (FR >= a3)

    out[hi_t2a] = int(StudyDiagnosis.T2A)
    out[hi_t1a] = int(StudyDiagnosis.T1A)
    out[hi_t3a] = int(StudyDiagnosis.T3A)
    out[hi_egjoo] = int(StudyDiagnosis.EGJOO)
    out[lo_abc] = int(StudyDiagnosis.ABC)
    out[lo_des] = int(StudyDiagnosis.T3A)  # merged
    out[lo_jes] = int(StudyDiagnosis.JES)
    out[lo_iem] = int(StudyDiagnosis.IEM)
    out[lo_frp] = int(StudyDiagnosis.IEM)  # merged
    return out


def _axis(lo, hi, step):
    n = int(round((hi - lo) / step)) + 1
    return np.round(lo + step * np.arange(n), 9)


@dataclass(frozen=True)
class GridSearchResult:
    params: RuleParams
    train_accuracy: float
    valid_accuracy: float
    n_evaluated: int


def grid_search(train, valid, grid: dict | None = None) -> GridSearchResult:
    """Exhaustive search maximizing training accuracy of the merged rule.

    ``train`` and ``valid`` are (summaries, labels) pairs with 8-class
    labels. Ties break toward the lexicographically smallest (a1, a2, a3).
    """
    grid = dict(DEFAULT_GRID if grid is None else grid)
    axes = {}
    for key in ("a1", "a2", "a3"):
        if key not in grid:
            raise ConfigError(f"grid is missing axis {key!r}")
        lo, hi, step = grid[key]
        if step <= 0 or hi < lo:
            raise ConfigError(f"invalid grid axis {key}: {grid[key]}")
        axes[key] = _axis(lo, hi, step)
    if any(len(v) == 0 for v in axes.values()):
        raise ConfigError("empty grid")

    train_summaries, train_labels = train
    valid_summaries, valid_labels = valid
    if len(train_summaries) == 0 or len(valid_summaries) == 0:
        raise ConfigError("grid search needs non-empty train and validation sets")
    t_irp, t_type, t_press = _summaries_to_arrays(train_summaries)
    train_labels = np.asarray([int(l) for l in train_labels])

    best = None
    n_evaluated = 0
    for a1, a2, a3 in itertools.product(axes["a1"], axes["a2"], axes["a3"]):
        preds = _classify_batch(t_irp, t_type, t_press, a1, a2, a3)
        acc = float((preds == train_labels).mean())
        n_evaluated += 1
        key = (-acc, a1, a2, a3)
        if best is None or key < best[0]:
            best = (key, (float(a1), float(a2), float(a3)), acc)

    params = RuleParams(*best[1])
    v_irp, v_type, v_press = _summaries_to_arrays(valid_summaries)
    valid_labels = np.asarray([int(l) for l in valid_labels])
    v_preds = _classify_batch(v_irp, v_type, v_press, params.a1, params.a2, params.a3)
    return GridSearchResult(
        params=params,
        train_accuracy=best[2],
        valid_accuracy=float((v_preds == valid_labels).mean()),
        n_evaluated=n_evaluated,
    )
