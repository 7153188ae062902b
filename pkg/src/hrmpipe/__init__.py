"""Two-stage esophageal manometry diagnosis pipeline.

Swallow-level CNNs predict type, pressurization, and IRP from 36x240
pressure grids; study-level models (a clinical rule tree, boosted trees
with an injectable base learner, and a dense classifier) map aggregated
swallow statistics to an eight-class motility diagnosis, optionally
blended by per-class precision weights. A parametric synthetic generator
stands in for clinical data so the whole pipeline trains at desk scale.
"""

from . import blending, data, features, gbm, metrics, nn, rules, study_ann, synth
from .data import DatasetSplit, PressureMatrix, StudyRecord, SwallowRecord
from .labels import (
    PressurizationType,
    RawDiagnosis10,
    StudyDiagnosis,
    SwallowType,
)

__version__ = "0.1.0"

__all__ = [
    "DatasetSplit",
    "PressureMatrix",
    "PressurizationType",
    "RawDiagnosis10",
    "StudyDiagnosis",
    "StudyRecord",
    "SwallowRecord",
    "SwallowType",
    "blending",
    "data",
    "features",
    "gbm",
    "metrics",
    "nn",
    "rules",
    "study_ann",
    "synth",
]
