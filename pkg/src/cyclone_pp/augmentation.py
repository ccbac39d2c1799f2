"""Training-set expansion for short TC sequences.

Two operators stretch N original reports into 2*(2N-1): midpoint
interpolation of consecutive reports (N-1 new fractional indices) and
additive Gaussian noise injection into every member field of all 2N-1
reports (one noise copy each, same fractional index). Noise streams are
keyed on (seed, index) so parallel generation reproduces serial output.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import Report, ReportOrigin

DEFAULT_NOISE_SCALE = 0.05


def _index_tenths(index: float) -> int:
    tenths = round(float(index) * 10)
    if abs(tenths - float(index) * 10) > 1e-9:
        raise ValueError(f"report index {index} is not a multiple of 0.1")
    return tenths


def report_sort_key(report: Report) -> tuple[int, int]:
    """Orders by fractional index, plain origins before noise copies."""
    return (_index_tenths(report.index), 1 if report.origin is ReportOrigin.NOISE_INJECTED else 0)


def interpolate_reports(a: Report, b: Report) -> Report:
    """Midpoint of two consecutive original reports.

    Every member field, the observation, and the TC center are averaged
    coordinate-wise; the result carries index k + 0.5.
    """
    if a.origin is not ReportOrigin.ORIGINAL or b.origin is not ReportOrigin.ORIGINAL:
        raise ValueError("can only interpolate original reports")
    if b.index != a.index + 1:
        raise ValueError(f"reports must have consecutive indices, got {a.index} and {b.index}")
    if a.observation is None or b.observation is None:
        raise ValueError("both reports need observations to interpolate")
    valid_time = None
    if a.valid_time is not None and b.valid_time is not None:
        valid_time = a.valid_time + (b.valid_time - a.valid_time) / 2
    return Report(
        index=a.index + 0.5,
        origin=ReportOrigin.INTERPOLATED,
        members=0.5 * (a.members + b.members),
        observation=0.5 * (a.observation + b.observation),
        tc_center=(0.5 * (a.tc_center[0] + b.tc_center[0]),
                   0.5 * (a.tc_center[1] + b.tc_center[1])),
        valid_time=valid_time,
    )


def inject_noise(report: Report, eta: float, rng: np.random.Generator) -> Report:
    """Perturb each member field with zero-mean Gaussian noise.

    The noise standard deviation is eta times the standard deviation of that
    member's own field; results are clamped at zero. The observation, TC
    center, and fractional index are untouched.
    """
    if eta < 0:
        raise ValueError(f"noise scale must be >= 0, got {eta}")
    members = report.members.copy()
    for m in range(members.shape[0]):
        scale = eta * float(np.std(members[m]))
        noise = rng.standard_normal(members[m].shape)
        members[m] = np.maximum(members[m] + scale * noise, 0.0)
    return Report(
        index=report.index,
        origin=ReportOrigin.NOISE_INJECTED,
        members=members,
        observation=report.observation,
        tc_center=report.tc_center,
        valid_time=report.valid_time,
    )


def _noise_rng(seed: int, index: float) -> np.random.Generator:
    # keyed on the fractional index so per-report streams are order-free
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), _index_tenths(index))))


@dataclass(frozen=True)
class AugmentedSet:
    """Original, interpolated, and noise-injected reports for one sequence.

    Sorted by fractional index with each noise copy directly after its
    source. From N originals the set holds 2*(2N-1) reports.
    """

    reports: list[Report] = field(repr=False)
    noise_scale: float = DEFAULT_NOISE_SCALE
    seed: int = 0

    @property
    def n_original(self) -> int:
        return sum(1 for r in self.reports if r.origin is ReportOrigin.ORIGINAL)

    @property
    def indices(self) -> list[float]:
        return [r.index for r in self.reports]

    def __len__(self) -> int:
        return len(self.reports)


def build_augmented_set(originals, eta: float = DEFAULT_NOISE_SCALE, seed: int = 0) -> AugmentedSet:
    """Interpolate consecutive pairs, then noise-inject everything.

    ``originals`` must be >= 2 reports with consecutive integer indices.
    The result's index multiset is {k, k+0.5, ..., N} each appearing twice
    (plain and noise copy).
    """
    originals = sorted(originals, key=report_sort_key)
    if len(originals) < 2:
        raise ValueError("need at least two original reports to augment")
    indices = [r.index for r in originals]
    if any(r.origin is not ReportOrigin.ORIGINAL for r in originals):
        raise ValueError("augmentation inputs must all be original reports")
    if any(b != a + 1 for a, b in zip(indices, indices[1:])):
        raise ValueError(f"original indices must be consecutive integers, got {indices}")

    expanded = list(originals)
    for a, b in zip(originals, originals[1:]):
        expanded.append(interpolate_reports(a, b))
    noisy = [inject_noise(r, eta, _noise_rng(seed, r.index)) for r in expanded]
    reports = sorted(expanded + noisy, key=report_sort_key)
    return AugmentedSet(reports=reports, noise_scale=eta, seed=seed)


def training_subset(aset: AugmentedSet, target_k: int) -> list[Report]:
    """All reports of any origin with fractional index strictly below k."""
    if target_k != int(target_k) or target_k < 2:
        raise ValueError(f"target index must be an integer >= 2, got {target_k}")
    subset = [r for r in aset.reports if r.index < target_k]
    if not subset:
        raise ValueError(f"no reports precede target index {target_k}")
    return sorted(subset, key=report_sort_key)
