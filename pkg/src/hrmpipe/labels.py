"""Label taxonomies for swallow-level and study-level outcomes."""

from enum import IntEnum


class SwallowType(IntEnum):
    """Per-swallow contraction pattern category."""

    N = 0   # normal
    W = 1   # weak
    F = 2   # failed
    FR = 3  # fragmented
    P = 4   # premature
    H = 5   # hypercontractile


class PressurizationType(IntEnum):
    """Per-swallow pressurization pattern category."""

    NP = 0   # normal pressurization
    CP = 1   # compartmentalized pressurization
    PEP = 2  # pan-esophageal pressurization


class StudyDiagnosis(IntEnum):
    """Eight-class study-level motility diagnosis."""

    ABC = 0    # absent contractility
    T1A = 1    # type 1 achalasia
    T2A = 2    # type 2 achalasia
    T3A = 3    # type 3 achalasia
    EGJOO = 4  # EGJ outflow obstruction
    JES = 5    # jackhammer esophagus
    NEM = 6    # normal motility
    IEM = 7    # ineffective esophageal motility


class RawDiagnosis10(IntEnum):
    """Ten-class diagnosis as emitted by the rule tree, before merging.

    DES merges into T3A and FRP merges into IEM to obtain the eight-class
    taxonomy used by the learned study models.
    """

    ABC = 0
    T1A = 1
    T2A = 2
    T3A = 3
    EGJOO = 4
    JES = 5
    NEM = 6
    IEM = 7
    DES = 8
    FRP = 9


#: Total merge map from the 10-class to the 8-class taxonomy.
MERGE_MAP = {raw: StudyDiagnosis(raw.value) if raw.value < 8 else None for raw in RawDiagnosis10}
MERGE_MAP[RawDiagnosis10.DES] = StudyDiagnosis.T3A
MERGE_MAP[RawDiagnosis10.FRP] = StudyDiagnosis.IEM

SUPINE = "supine"
UPRIGHT = "upright"
POSITIONS = (SUPINE, UPRIGHT)

N_SWALLOW_TYPES = len(SwallowType)
N_PRESSURIZATIONS = len(PressurizationType)
N_DIAGNOSES = len(StudyDiagnosis)
