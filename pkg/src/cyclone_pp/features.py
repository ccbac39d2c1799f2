"""Input-channel assembly: 20 members plus geographic and TC-relative fields.

A full stack is 25 channels over the grid: the 20 ensemble member fields,
then longitude, latitude, altitude, great-circle distance to the current TC
center, and a binary flag marking cells the TC track has already passed
within a neighborhood radius.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .domain import N_MEMBERS, GridDomain, Report

EARTH_RADIUS_KM = 6371.0

DEFAULT_PASSED_RADIUS_KM = 100.0

CHANNEL_NAMES = tuple(
    [f"member_{i + 1}" for i in range(N_MEMBERS)]
    + ["lon", "lat", "altitude", "dist_tc", "passed_flag"]
)

N_CHANNELS = len(CHANNEL_NAMES)  # 25

#: Channels below this std are treated as constant and passed through.
_CONST_STD = 1e-12


@dataclass(frozen=True)
class NormStats:
    """Per-channel standardization parameters."""

    mean: np.ndarray
    std: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "mean", np.asarray(self.mean, dtype=float))
        object.__setattr__(self, "std", np.asarray(self.std, dtype=float))
        if self.mean.shape != self.std.shape or self.mean.ndim != 1:
            raise ValueError("mean/std must be equal-length 1-D arrays")
        if np.any(self.std <= 0):
            raise ValueError("std must be > 0 (constant channels are clamped to 1)")


@dataclass(frozen=True)
class FeatureStack:
    """Channel stack for one report, optionally standardized."""

    channels: np.ndarray
    channel_names: tuple[str, ...]
    norm_stats: NormStats | None = None

    def __post_init__(self):
        ch = np.asarray(self.channels, dtype=float)
        object.__setattr__(self, "channels", ch)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))
        if ch.ndim != 3 or ch.shape[0] != len(self.channel_names):
            raise ValueError(f"channels shape {ch.shape} does not match {len(self.channel_names)} names")
        if not np.all(np.isfinite(ch)):
            raise ValueError("feature channels must be finite")

    @property
    def n_channels(self) -> int:
        return self.channels.shape[0]

    def channel(self, name: str) -> np.ndarray:
        return self.channels[self.channel_names.index(name)]


def haversine_km(lat1, lon1, lat2, lon2) -> np.ndarray:
    """Great-circle distance on a 6371 km sphere; arguments in degrees."""
    lat1, lon1, lat2, lon2 = (np.radians(np.asarray(a, dtype=float)) for a in (lat1, lon1, lat2, lon2))
    dlat = lat2 - lat1
    dlon = lon2 - lon1
    h = np.sin(dlat / 2) ** 2 + np.cos(lat1) * np.cos(lat2) * np.sin(dlon / 2) ** 2
    return 2.0 * EARTH_RADIUS_KM * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))


def _check_center(tc_center) -> tuple[float, float]:
    lat, lon = float(tc_center[0]), float(tc_center[1])
    if not (np.isfinite(lat) and np.isfinite(lon)):
        raise ValueError(f"non-finite TC center {tc_center}")
    if not (-90.0 <= lat <= 90.0):
        raise ValueError(f"TC latitude {lat} outside [-90, 90]")
    if not (-180.0 <= lon < 360.0):
        raise ValueError(f"TC longitude {lon} outside [-180, 360)")
    return lat, lon


def tc_distance_field(domain: GridDomain, tc_center) -> np.ndarray:
    """Distance (km) from every cell center to the TC center."""
    lat, lon = _check_center(tc_center)
    lat_grid, lon_grid = domain.latlon_grids()
    return haversine_km(lat_grid, lon_grid, lat, lon)


def passed_flag_field(track, domain: GridDomain, radius_km: float = DEFAULT_PASSED_RADIUS_KM) -> np.ndarray:
    """1.0 where any track position so far came within radius_km, else 0.0.

    ``track`` is the sequence of TC centers up to and including the current
    report.
    """
    track = list(track)
    if not track:
        raise ValueError("track must contain at least one TC position")
    min_dist = np.full(domain.shape, np.inf)
    for center in track:
        np.minimum(min_dist, tc_distance_field(domain, center), out=min_dist)
    return (min_dist <= radius_km).astype(float)


def assemble_stack(report: Report, domain: GridDomain, track,
                   radius_km: float = DEFAULT_PASSED_RADIUS_KM) -> FeatureStack:
    """Build the 25-channel stack for one report.

    Geographic channels depend only on the domain; the two dynamic channels
    are recomputed from the report's TC center and the track up to it.
    """
    if report.members.shape != (N_MEMBERS, *domain.shape):
        raise ValueError(f"member fields {report.members.shape} do not match domain {domain.shape}")
    lat_grid, lon_grid = domain.latlon_grids()
    channels = np.empty((N_CHANNELS, *domain.shape))
    channels[:N_MEMBERS] = report.members
    channels[N_MEMBERS + 0] = lon_grid
    channels[N_MEMBERS + 1] = lat_grid
    channels[N_MEMBERS + 2] = domain.altitude
    channels[N_MEMBERS + 3] = tc_distance_field(domain, report.tc_center)
    channels[N_MEMBERS + 4] = passed_flag_field(track, domain, radius_km)
    return FeatureStack(channels=channels, channel_names=CHANNEL_NAMES)


def fit_standardizer(stacks) -> NormStats:
    """Per-channel mean/std over a fitting set of stacks.

    Constant channels keep their mean but have std clamped to 1 so the
    transform degrades to a pure shift.
    """
    stacks = list(stacks)
    if not stacks:
        raise ValueError("need at least one stack to fit")
    names = stacks[0].channel_names
    if any(s.channel_names != names for s in stacks):
        raise ValueError("stacks have inconsistent channel layouts")
    data = np.stack([s.channels for s in stacks])  # (R, C, H, W)
    mean = data.mean(axis=(0, 2, 3))
    std = data.std(axis=(0, 2, 3))
    std = np.where(std < _CONST_STD, 1.0, std)
    return NormStats(mean=mean, std=std)


def apply_standardizer(stack: FeatureStack, stats: NormStats) -> FeatureStack:
    """Affine (x - mean) / std per channel; shape and order are preserved."""
    if stats.mean.shape[0] != stack.n_channels:
        raise ValueError(f"stats cover {stats.mean.shape[0]} channels, stack has {stack.n_channels}")
    z = (stack.channels - stats.mean[:, None, None]) / stats.std[:, None, None]
    return FeatureStack(channels=z, channel_names=stack.channel_names, norm_stats=stats)


def invert_standardizer(stack: FeatureStack, stats: NormStats) -> FeatureStack:
    """Inverse of :func:`apply_standardizer`."""
    x = stack.channels * stats.std[:, None, None] + stats.mean[:, None, None]
    return FeatureStack(channels=x, channel_names=stack.channel_names)


def save_feature_stack(stack: FeatureStack, out_dir) -> None:
    """Write one row-major CSV per channel plus a manifest.json.

    The manifest records the channel order and, when present, the per-channel
    standardization stats.
    """
    import json
    from pathlib import Path

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    for i, name in enumerate(stack.channel_names):
        np.savetxt(out / f"channel_{i:02d}_{name}.csv", stack.channels[i],
                   delimiter=",", fmt="%.10g")
    manifest = {"channel_names": list(stack.channel_names)}
    if stack.norm_stats is not None:
        manifest["norm_stats"] = {
            "mean": stack.norm_stats.mean.tolist(),
            "std": stack.norm_stats.std.tolist(),
        }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def load_feature_stack(in_dir) -> FeatureStack:
    """Read a stack written by :func:`save_feature_stack`."""
    import json
    from pathlib import Path

    src = Path(in_dir)
    manifest = json.loads((src / "manifest.json").read_text())
    names = manifest["channel_names"]
    channels = np.stack([
        np.loadtxt(src / f"channel_{i:02d}_{name}.csv", delimiter=",", ndmin=2)
        for i, name in enumerate(names)
    ])
    stats = None
    if "norm_stats" in manifest:
        stats = NormStats(mean=np.array(manifest["norm_stats"]["mean"]),
                          std=np.array(manifest["norm_stats"]["std"]))
    return FeatureStack(channels=channels, channel_names=names, norm_stats=stats)
