"""Parametric generator of label-consistent synthetic manometry data.

Stands in for the proprietary clinical registry: each swallow grid is
composed of a Gaussian-ridge peristaltic wave (shaped by swallow type), an
EGJ high-pressure band whose post-deglutitive trough encodes the IRP
target, optional pressurization overlays, and additive Gaussian noise.
Study compositions are built so that the clinical rule tree with nominal
parameters recovers the requested diagnosis exactly.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, replace

import numpy as np

from .data import (
    CHANNELS,
    GRID_RATE_HZ,
    PRESSURE_MAX,
    PRESSURE_MIN,
    WINDOW_COLUMNS,
    PressureMatrix,
    StudyRecord,
    SwallowRecord,
    _largest_remainder,
)
from .labels import (
    SUPINE,
    UPRIGHT,
    PressurizationType,
    StudyDiagnosis,
    SwallowType,
)

# channel geometry: body channels 4..30, EGJ band 31..34
EGJ_CHANNELS = (31, 35)  # half-open
BODY_CHANNELS = (4, 31)  # half-open

# EGJ relaxation trough: flat floor between 2 s and 8 s post onset, which
# leaves >= 40 floor columns inside the 10 s oracle window
TROUGH_START_S = 2.0
TROUGH_END_S = 8.0
TROUGH_RAMP_S = 0.6

ORACLE_WINDOW_COLUMNS = 100  # 10 s post onset
ORACLE_TROUGH_COLUMNS = 40   # 4 s equivalent

UPRIGHT_EGJ_OFFSET = 5.0  # mmHg subtracted from the EGJ band when upright

# per-type wave shaping: (amplitude factor, transit factor)
_TYPE_AMP = {
    SwallowType.N: 1.0,
    SwallowType.W: 0.35,
    SwallowType.F: 0.02,
    SwallowType.FR: 1.0,
    SwallowType.P: 1.0,
    SwallowType.H: 2.2,
}
_TYPE_TRANSIT = {t: 1.0 for t in SwallowType}
_TYPE_TRANSIT[SwallowType.P] = 0.5  # premature: short transit (distal-latency analog)


class ParamClampWarning(UserWarning):
    """Raised when generator parameters are clamped into their valid range."""


@dataclass(frozen=True)
class SwallowGenParams:
    """Knobs of the forward swallow model. Values are clamped, not rejected."""

    body_amplitude: float = 80.0
    wave_onset_channel: int = 3
    wave_end_channel: int = 29
    transit_time: float = 5.5
    break_span: int = 5
    egj_rest: float = 30.0
    irp_target: float = 12.0
    pressurization_level: float = 30.0
    noise_sigma: float = 1.0
    seed: int = 0

    def clamped(self) -> "SwallowGenParams":
        fixes = {}
        if self.body_amplitude < 0:
            fixes["body_amplitude"] = 0.0
        onset = int(min(max(self.wave_onset_channel, 0), 34))
        end = int(min(max(self.wave_end_channel, onset + 1), 35))
        if (onset, end) != (self.wave_onset_channel, self.wave_end_channel):
            fixes["wave_onset_channel"] = onset
            fixes["wave_end_channel"] = end
        if self.transit_time <= 0:
            fixes["transit_time"] = 1.0
        if self.break_span < 0:
            fixes["break_span"] = 0
        if self.egj_rest < 0:
            fixes["egj_rest"] = 0.0
        if self.irp_target < 0:
            fixes["irp_target"] = 0.0
        if self.pressurization_level < 0:
            fixes["pressurization_level"] = 0.0
        if self.noise_sigma < 0:
            fixes["noise_sigma"] = 0.0
        if fixes:
            warnings.warn(f"clamped generator parameters: {sorted(fixes)}", ParamClampWarning)
            return replace(self, **fixes)
        return self


@dataclass(frozen=True)
class StudyGenSpec:
    """Request for one synthetic study with a guaranteed rule-tree diagnosis."""

    diagnosis: StudyDiagnosis
    seed: int = 0
    noise_sigma: float = 1.0


def _time_axis():
    return np.arange(WINDOW_COLUMNS) / GRID_RATE_HZ


def _egj_band(rest: float, trough: float, t: np.ndarray) -> np.ndarray:
    """EGJ pressure over time: rest level with a smooth relaxation trough."""
    ramp_in = np.clip((t - (TROUGH_START_S - TROUGH_RAMP_S)) / TROUGH_RAMP_S, 0.0, 1.0)
    ramp_out = np.clip((t - TROUGH_END_S) / TROUGH_RAMP_S, 0.0, 1.0)
    # raised-cosine edges so the floor is exactly flat at `trough`
    depth = 0.5 * (1 - np.cos(np.pi * ramp_in)) * 0.5 * (1 + np.cos(np.pi * ramp_out))
    return rest + (trough - rest) * depth


def synth_swallow(
    swallow_type: SwallowType,
    pressurization: PressurizationType,
    irp_target: float,
    params: SwallowGenParams | None = None,
    position: str = SUPINE,
) -> SwallowRecord:
    """Generate one labeled synthetic swallow.

    The stored labels equal the requested labels; with zero noise the IRP
    oracle recovers ``irp_target`` exactly because the trough floor spans
    more than the 40 columns the oracle averages.
    """
    params = (params or SwallowGenParams()).clamped()
    if irp_target < 0:
        warnings.warn("clamped generator parameters: ['irp_target']", ParamClampWarning)
        irp_target = 0.0
    rng = np.random.default_rng(params.seed)
    t = _time_axis()
    grid = np.full((CHANNELS, WINDOW_COLUMNS), 2.0)  # resting baseline, mmHg

    onset, end = params.wave_onset_channel, params.wave_end_channel
    transit = params.transit_time * _TYPE_TRANSIT[swallow_type]
    amp = params.body_amplitude * _TYPE_AMP[swallow_type]
    t_wave0 = 0.8
    sigma_t = 0.7

    # (a) peristaltic wave: per-channel Gaussian ridge along the arrival line
    channels = np.arange(onset, end + 1)
    arrivals = t_wave0 + (channels - onset) / max(end - onset, 1) * transit
    ridge = amp * np.exp(-((t[None, :] - arrivals[:, None]) ** 2) / (2 * sigma_t**2))
    if swallow_type is SwallowType.FR and params.break_span > 0:
        mid = (onset + end) // 2
        lo = max(onset, mid - params.break_span // 2)
        hi = min(end, lo + params.break_span - 1)
        ridge[(channels >= lo) & (channels <= hi), :] = 0.0
    grid[onset : end + 1, :] += ridge

    # (b) EGJ band with a relaxation trough equal to the IRP target
    rest = params.egj_rest - (UPRIGHT_EGJ_OFFSET if position == UPRIGHT else 0.0)
    rest = max(rest, irp_target + 5.0, 0.0)
    grid[EGJ_CHANNELS[0] : EGJ_CHANNELS[1], :] = _egj_band(rest, irp_target, t)[None, :]

    # (c) pressurization overlays (never touch the EGJ band)
    level = params.pressurization_level
    body_lo, body_hi = BODY_CHANNELS
    chan = np.arange(CHANNELS)
    if pressurization is PressurizationType.PEP:
        mask = (chan[:, None] >= body_lo) & (chan[:, None] < body_hi) & (t >= 1.0) & (t <= 9.0)
        grid += level * mask
    elif pressurization is PressurizationType.CP:
        # elevate between the advancing wavefront and the EGJ, late in transit
        frac = np.clip((t - t_wave0) / max(transit, 1e-9), 0.0, 1.0)
        front = onset + frac * (end - onset)
        active = (t >= t_wave0 + 0.5 * transit) & (t <= t_wave0 + transit + 2.0)
        mask = (chan[:, None] > front[None, :]) & (chan[:, None] < body_hi) & active[None, :]
        grid += level * mask

    # (d) measurement noise
    if params.noise_sigma > 0:
        grid += rng.normal(0.0, params.noise_sigma, grid.shape)

    grid = np.clip(grid, PRESSURE_MIN, PRESSURE_MAX)
    return SwallowRecord(
        matrix=PressureMatrix(grid),
        position=position,
        type_label=swallow_type,
        pressurization_label=pressurization,
        irp_label=float(irp_target),
    )


def oracle_irp(matrix: PressureMatrix) -> float:
    """Analytic IRP surrogate: mean of the 40 lowest columns of the EGJ band
    average within the 10 s post-onset window, clamped at zero."""
    band = matrix.values[EGJ_CHANNELS[0] : EGJ_CHANNELS[1], :ORACLE_WINDOW_COLUMNS]
    profile = band.mean(axis=0)
    lowest = np.sort(profile)[:ORACLE_TROUGH_COLUMNS]
    return float(max(lowest.mean(), 0.0))


# ---------------------------------------------------------------------------
# Study-level composition
# ---------------------------------------------------------------------------

_NORMAL_IRP = (5.0, 12.0)
_ELEVATED_IRP = (18.0, 28.0)


def _counts_to_labels(rng, counts: dict) -> list:
    labels = [lab for lab, n in counts.items() for _ in range(n)]
    rng.shuffle(labels)
    return labels


def _compose(diagnosis: StudyDiagnosis, rng) -> tuple:
    """Supine composition (type labels, pressurization labels, irp range).

    Counts are randomized inside margins that keep every rule-tree branch
    condition satisfied at the nominal thresholds [15.0, 0.2, 0.5].
    """
    N, W, F, FR, P, H = SwallowType
    NP, CP, PEP = PressurizationType
    press = {NP: 10}
    if diagnosis is StudyDiagnosis.ABC:
        types, irp = {F: 10}, _NORMAL_IRP
    elif diagnosis is StudyDiagnosis.T1A:
        types, irp = {F: 10}, _ELEVATED_IRP
    elif diagnosis is StudyDiagnosis.T2A:
        types, irp = {F: 10}, _ELEVATED_IRP
        n_pep = int(rng.integers(4, 9))
        press = {PEP: n_pep, NP: 10 - n_pep}
    elif diagnosis is StudyDiagnosis.T3A:
        n_p = int(rng.integers(4, 7))
        if rng.random() < 0.7:  # elevated-IRP spastic branch
            types, irp = {P: n_p, N: 10 - n_p - 2, F: 2}, _ELEVATED_IRP
        else:  # distal-spasm branch, merged back into T3A
            types, irp = {P: n_p, N: 10 - n_p}, _NORMAL_IRP
    elif diagnosis is StudyDiagnosis.EGJOO:
        n_n = int(rng.integers(7, 10))
        types, irp = {N: n_n, W: 10 - n_n}, _ELEVATED_IRP
        n_cp = int(rng.integers(0, 4))
        press = {CP: n_cp, NP: 10 - n_cp}
    elif diagnosis is StudyDiagnosis.JES:
        n_h = int(rng.integers(3, 6))
        types, irp = {H: n_h, N: 10 - n_h}, _NORMAL_IRP
    elif diagnosis is StudyDiagnosis.NEM:
        n_n = int(rng.integers(8, 11))
        extra = 10 - n_n
        types, irp = {N: n_n, W: extra}, _NORMAL_IRP
    elif diagnosis is StudyDiagnosis.IEM:
        if rng.random() < 0.7:  # weak-or-failed majority
            n_w = int(rng.integers(4, 7))
            n_f = int(rng.integers(max(6 - n_w, 1), 9 - n_w))  # 6 <= n_w + n_f <= 8
            types = {W: n_w, F: n_f, N: 10 - n_w - n_f}
        else:  # fragmented-peristalsis branch, merged back into IEM
            n_fr = int(rng.integers(6, 8))
            types = {FR: n_fr, N: 10 - n_fr}
        irp = _NORMAL_IRP
    else:
        raise ValueError(f"unsupported diagnosis {diagnosis!r}")
    return types, press, irp


def synth_study(spec: StudyGenSpec) -> StudyRecord:
    """Generate one study whose ground-truth summary maps to ``spec.diagnosis``
    under the nominal rule tree."""
    diagnosis = StudyDiagnosis(spec.diagnosis)
    root = np.random.SeedSequence(entropy=spec.seed, spawn_key=(int(diagnosis),))
    rng = np.random.default_rng(root)
    types, press, irp_range = _compose(diagnosis, rng)
    type_labels = _counts_to_labels(rng, types)
    press_labels = _counts_to_labels(rng, press)
    supine_irps = rng.uniform(*irp_range, size=10)

    # upright swallows mirror the supine mix with a lower EGJ pressure
    up_idx = rng.integers(0, 10, size=5)
    upright_types = [type_labels[i] for i in up_idx]
    upright_press = [press_labels[i] for i in up_idx]
    upright_irps = np.clip(rng.uniform(*irp_range, size=5) - UPRIGHT_EGJ_OFFSET, 0.0, None)

    swallow_seeds = root.spawn(15)
    swallows = []
    for i in range(10):
        params = SwallowGenParams(
            noise_sigma=spec.noise_sigma,
            seed=int(swallow_seeds[i].generate_state(1)[0]),
            body_amplitude=float(80.0 * rng.uniform(0.92, 1.08)),
            transit_time=float(5.5 * rng.uniform(0.9, 1.1)),
        )
        swallows.append(
            synth_swallow(type_labels[i], press_labels[i], float(supine_irps[i]), params, SUPINE)
        )
    for i in range(5):
        params = SwallowGenParams(
            noise_sigma=spec.noise_sigma,
            seed=int(swallow_seeds[10 + i].generate_state(1)[0]),
            body_amplitude=float(80.0 * rng.uniform(0.92, 1.08)),
            transit_time=float(5.5 * rng.uniform(0.9, 1.1)),
        )
        swallows.append(
            synth_swallow(
                upright_types[i], upright_press[i], float(upright_irps[i]), params, UPRIGHT
            )
        )
    study_id = f"{diagnosis.name}-{spec.seed:06d}"
    return StudyRecord(study_id, tuple(swallows), diagnosis)


#: Study-level class mix of the reference training registry, used to scale
#: desk-size datasets to a similar imbalance profile.
REFERENCE_TRAIN_COUNTS = {
    StudyDiagnosis.ABC: 55,
    StudyDiagnosis.T1A: 47,
    StudyDiagnosis.T2A: 93,
    StudyDiagnosis.T3A: 64,
    StudyDiagnosis.EGJOO: 207,
    StudyDiagnosis.JES: 27,
    StudyDiagnosis.NEM: 565,
    StudyDiagnosis.IEM: 165,
}


def desk_profile(total_studies: int = 200) -> dict:
    """Scale the reference class mix to ``total_studies`` (largest remainder)."""
    diagnoses = list(REFERENCE_TRAIN_COUNTS)
    ref_total = sum(REFERENCE_TRAIN_COUNTS.values())
    fractions = [REFERENCE_TRAIN_COUNTS[d] / ref_total for d in diagnoses]
    counts = _largest_remainder(total_studies, fractions)
    return dict(zip(diagnoses, counts))


def synth_dataset(class_counts: dict, seed: int = 0, noise_sigma: float = 1.0) -> list:
    """Generate a deterministic multiset of studies, ``class_counts`` each."""
    studies = []
    serial = 0
    for diagnosis in sorted(class_counts, key=int):
        count = int(class_counts[diagnosis])
        if count < 0:
            raise ValueError("class counts must be non-negative")
        for _ in range(count):
            study = synth_study(
                StudyGenSpec(StudyDiagnosis(diagnosis), seed=seed * 1_000_003 + serial,
                             noise_sigma=noise_sigma)
            )
            studies.append(study)
            serial += 1
    return studies
