"""Seeded synthetic TC rainfall scenarios with a known truth law.

The real event data cannot be redistributed, so the pipeline is
exercised on fabricated storms: an elliptical island with a central
mountain ridge, a linear TC track crossing it mid-sequence, and a
per-report truth law

    rain(cell, k) = A * exp(-dist(cell, track_k) / L) * (1 + tf * alt_km)

multiplied by unit-mean lognormal noise. Ensemble members see the same
signal through a per-member multiplicative bias (drawn once per
scenario, i.i.d. across members, so the ensemble is exchangeable) plus
their own field noise; the bias mean sits above 1, giving the raw
ensemble a systematic overforecast that post-processing can learn away.

Everything is deterministic in (spec, domain): per-report noise streams
are keyed on (seed, report index), so reports can be generated in any
order or in parallel with identical results.
"""

from __future__ import annotations

import re
import warnings
from dataclasses import asdict, dataclass, replace
from datetime import datetime, timedelta, timezone
from pathlib import Path

import numpy as np

from .domain import (
    GridDomain,
    Report,
    ReportOrigin,
    load_domain_file,
    save_domain_file,
    tabulate_categories,
)
from .features import tc_distance_field
from .storage import load_grid_csv, read_json, save_grid_csv, write_json

SCENARIO_FORMAT = "cyclone-pp-scenario/1"
# island extent in degrees, kept constant across grid resolutions
ISLAND_EXTENT_LAT = 2.52
_STREAM_REPORT = 101
_STREAM_BIAS = 9001

_REPORT_DIR_RE = re.compile(r"report_(\d{4})(n?)$")
_EPOCH = datetime(2015, 8, 6, 0, tzinfo=timezone.utc)


@dataclass(frozen=True)
class ScenarioSpec:
    """Parameters of one synthetic storm.

    amplitude_mm and decay_km shape the rain field; terrain_factor adds
    fractional enhancement per km of altitude; noise_sigma is the
    log-std of the truth's lognormal noise.

    The ensemble is imperfect in three learnable ways. member_bias is
    the mean multiplicative bias (above 1 = overforecast), with
    member_bias_spread the log-std of the per-member draw and
    member_noise_sigma the log-std of each member's own field noise
    (member_noise_mm adds a small additive jitter, clamped at zero).
    member_terrain_factor is the weaker orographic response the members
    believe in, and track_bias_deg displaces every member's storm center
    from the true track (track_jitter_deg adds a per-member scatter on
    top), so the true-position and altitude channels carry correction
    signal the raw forecasts lack.
    """

    seed: int = 0
    n_reports: int = 15
    track_start: tuple[float, float] = (21.0, 124.5)
    track_end: tuple[float, float] = (25.5, 117.5)
    amplitude_mm: float = 550.0
    decay_km: float = 80.0
    terrain_factor: float = 0.35
    noise_sigma: float = 0.35
    member_bias: float = 1.35
    member_bias_spread: float = 0.10
    member_noise_sigma: float = 0.10
    member_noise_mm: float = 1.0
    member_terrain_factor: float = 0.15
    track_bias_deg: tuple[float, float] = (0.18, 0.27)
    track_jitter_deg: float = 0.03

    def __post_init__(self):
        if self.n_reports < 2:
            raise ValueError(f"need at least 2 reports, got {self.n_reports}")
        if self.amplitude_mm < 0 or self.decay_km <= 0:
            raise ValueError("amplitude must be >= 0 and decay length > 0")
        if min(self.noise_sigma, self.member_bias_spread,
               self.member_noise_sigma, self.member_noise_mm,
               self.track_jitter_deg) < 0:
            raise ValueError("noise scales must be >= 0")
        if self.member_bias <= 0:
            raise ValueError(f"member bias must be positive, got {self.member_bias}")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["track_start"] = list(self.track_start)
        d["track_end"] = list(self.track_end)
        d["track_bias_deg"] = list(self.track_bias_deg)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        d = dict(d)
        d["track_start"] = tuple(d["track_start"])
        d["track_end"] = tuple(d["track_end"])
        d["track_bias_deg"] = tuple(d["track_bias_deg"])
        return cls(**d)


@dataclass(frozen=True)
class Scenario:
    spec: ScenarioSpec
    domain: GridDomain
    reports: list[Report]

    @property
    def track(self) -> list[tuple[float, float]]:
        return [r.tc_center for r in self.reports]


def make_island_domain(n_rows: int = 84, n_cols: int = 70, lat0: float = 21.9,
                       lon0: float = 120.0, cell: float | None = None,
                       peak_altitude_m: float = 3200.0) -> GridDomain:
    """Elliptical island with a ridge rising toward its center.

    The island's geographic extent stays fixed as the grid is refined or
    coarsened: cell size defaults to ISLAND_EXTENT_LAT / n_rows, so a
    28x24 grid covers the same storm at reduced cost as the full 84x70.
    """
    if cell is None:
        cell = ISLAND_EXTENT_LAT / n_rows
    rows = np.arange(n_rows)[:, None]
    cols = np.arange(n_cols)[None, :]
    r = np.hypot((rows - (n_rows - 1) / 2) / (0.38 * n_rows),
                 (cols - (n_cols - 1) / 2) / (0.22 * n_cols))
    land = r < 1.0
    altitude = np.where(land, peak_altitude_m * np.maximum(1.0 - r, 0.0) ** 1.6, 0.0)
    return GridDomain(n_rows=n_rows, n_cols=n_cols, lat0=lat0, lon0=lon0,
                      cell=cell, land_mask=land, altitude=altitude)


def track_positions(spec: ScenarioSpec) -> list[tuple[float, float]]:
    """Linear path from track_start to track_end, one point per report."""
    (lat_a, lon_a), (lat_b, lon_b) = spec.track_start, spec.track_end
    out = []
    for k in range(spec.n_reports):
        t = k / (spec.n_reports - 1)
        out.append((lat_a + t * (lat_b - lat_a), lon_a + t * (lon_b - lon_a)))
    return out


def _base_field(spec: ScenarioSpec, domain: GridDomain,
                tc_center: tuple[float, float]) -> np.ndarray:
    dist = tc_distance_field(domain, tc_center)
    terrain = 1.0 + spec.terrain_factor * domain.altitude / 1000.0
    return spec.amplitude_mm * np.exp(-dist / spec.decay_km) * terrain


def _member_base_field(spec: ScenarioSpec, domain: GridDomain,
                       center: tuple[float, float]) -> np.ndarray:
    dist = tc_distance_field(domain, center)
    terrain = 1.0 + spec.member_terrain_factor * domain.altitude / 1000.0
    return spec.amplitude_mm * np.exp(-dist / spec.decay_km) * terrain


def truth_distribution(spec: ScenarioSpec, domain: GridDomain,
                       k: int) -> tuple[np.ndarray, np.ndarray]:
    """Analytic conditional mean and standard deviation of truth at report k.

    Truth is base * LogNormal(-s^2/2, s), so the conditional mean is the
    base field itself and the std is base * sqrt(exp(s^2) - 1).
    """
    if not 1 <= k <= spec.n_reports:
        raise ValueError(f"report index {k} outside 1..{spec.n_reports}")
    base = _base_field(spec, domain, track_positions(spec)[k - 1])
    s2 = spec.noise_sigma ** 2
    return base, base * np.sqrt(np.expm1(s2))


def _report_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=(int(seed), _STREAM_REPORT, k)))


def _member_biases(spec: ScenarioSpec) -> np.ndarray:
    rng = np.random.default_rng(
        np.random.SeedSequence(entropy=(int(spec.seed), _STREAM_BIAS)))
    mu = np.log(spec.member_bias) - spec.member_bias_spread ** 2 / 2
    return np.exp(rng.normal(mu, spec.member_bias_spread, size=20))


def generate_scenario(spec: ScenarioSpec, domain: GridDomain) -> Scenario:
    """Draw the full report sequence for one storm."""
    track = track_positions(spec)
    lat_lo = domain.lat0
    lat_hi = domain.lat0 + domain.n_rows * domain.cell
    lon_lo = domain.lon0
    lon_hi = domain.lon0 + domain.n_cols * domain.cell
    if not any(lat_lo <= lat <= lat_hi and lon_lo <= lon <= lon_hi for lat, lon in track):
        warnings.warn("TC track never enters the domain; scenario will be nearly dry",
                      stacklevel=2)

    biases = _member_biases(spec)
    shape = domain.shape
    reports = []
    for k in range(1, spec.n_reports + 1):
        rng = _report_rng(spec.seed, k)
        base = _base_field(spec, domain, track[k - 1])
        s = spec.noise_sigma
        eps = np.exp(rng.normal(-s * s / 2, s, size=shape)) if s > 0 else np.ones(shape)
        observation = base * eps

        sm = spec.member_noise_sigma
        blat, blon = spec.track_bias_deg
        members = np.empty((20, *shape))
        for m in range(20):
            jlat, jlon = spec.track_jitter_deg * rng.standard_normal(2)
            center_m = (track[k - 1][0] + blat + jlat,
                        track[k - 1][1] + blon + jlon)
            base_m = _member_base_field(spec, domain, center_m)
            zeta = np.exp(rng.normal(-sm * sm / 2, sm, size=shape)) if sm > 0 else 1.0
            jitter = spec.member_noise_mm * rng.standard_normal(shape)
            members[m] = np.maximum(biases[m] * base_m * zeta + jitter, 0.0)

        reports.append(Report(
            index=float(k),
            origin=ReportOrigin.ORIGINAL,
            members=members,
            observation=observation,
            tc_center=track[k - 1],
            valid_time=_EPOCH + timedelta(hours=6 * (k - 1)),
        ))
    return Scenario(spec=spec, domain=domain, reports=reports)


def category_profile(scenario: Scenario) -> np.ndarray:
    """Land-cell rain-category counts per report, shape (n_reports, 4)."""
    rows = []
    for report in scenario.reports:
        counts = tabulate_categories(report, scenario.domain)
        rows.append(counts.sum(axis=1))
    return np.array(rows)


def report_dirname(index: float, origin: ReportOrigin) -> str:
    """Directory name for one report: index in zero-padded tenths.

    report_0010 is index 1, report_0015 is the 1.5 interpolation, and a
    trailing 'n' marks a noise copy (report_0015n).
    """
    tenths = round(float(index) * 10)
    if abs(tenths - float(index) * 10) > 1e-9:
        raise ValueError(f"report index {index} is not a multiple of 0.1")
    suffix = "n" if origin is ReportOrigin.NOISE_INJECTED else ""
    return f"report_{tenths:04d}{suffix}"


def parse_report_dirname(name: str) -> tuple[float, bool] | None:
    """Inverse of report_dirname; None when the name is not a report dir."""
    m = _REPORT_DIR_RE.fullmatch(name)
    if not m:
        return None
    return int(m.group(1)) / 10.0, m.group(2) == "n"


def save_scenario(scenario: Scenario, out_dir) -> None:
    """Write spec.json, domain.txt, track.csv, and one report_XXXX/ each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_json(out_dir / "spec.json",
               {"format": SCENARIO_FORMAT, "spec": scenario.spec.to_dict()})
    save_domain_file(scenario.domain, out_dir / "domain.txt")
    track_lines = ["index,lat,lon"]
    for r in scenario.reports:
        track_lines.append(f"{r.index:g},{r.tc_center[0]:.6f},{r.tc_center[1]:.6f}")
    (out_dir / "track.csv").write_text("\n".join(track_lines) + "\n")
    for r in scenario.reports:
        rdir = out_dir / report_dirname(r.index, r.origin)
        rdir.mkdir(exist_ok=True)
        for m in range(r.members.shape[0]):
            save_grid_csv(rdir / f"member_{m + 1:02d}.csv", r.members[m])
        save_grid_csv(rdir / "obs.csv", r.observation)
        write_json(rdir / "meta.json", {
            "index": r.index,
            "origin": r.origin.value,
            "tc_lat": r.tc_center[0],
            "tc_lon": r.tc_center[1],
            "valid_time": r.valid_time.isoformat() if r.valid_time else None,
        })


def load_scenario_header(path) -> tuple[ScenarioSpec, GridDomain]:
    """Read just spec.json and domain.txt, leaving report data untouched."""
    path = Path(path)
    doc = read_json(path / "spec.json")
    if doc.get("format") != SCENARIO_FORMAT:
        raise ValueError(f"unrecognized scenario format {doc.get('format')!r}")
    return ScenarioSpec.from_dict(doc["spec"]), load_domain_file(path / "domain.txt")


def list_report_dirs(path) -> list[tuple[float, bool, Path]]:
    """(index, is_noise_copy, dir) per report directory, sorted, no file reads.

    The index and noise flag come from the directory name alone, so callers
    can select the reports they are allowed to open before touching any
    report's contents.
    """
    path = Path(path)
    entries = []
    for child in path.iterdir():
        parsed = parse_report_dirname(child.name)
        if parsed is not None:
            entries.append((parsed[0], parsed[1], child))
    entries.sort(key=lambda e: (e[0], e[1]))
    return entries


def load_report(rdir, with_observation: bool = True) -> Report:
    """Read one report directory.

    ``with_observation=False`` skips obs.csv entirely; forecast-only
    consumers (prediction on a target report) must never open it.
    """
    rdir = Path(rdir)
    meta = read_json(rdir / "meta.json")
    members = np.stack([load_grid_csv(rdir / f"member_{m + 1:02d}.csv")
                        for m in range(20)])
    observation = load_grid_csv(rdir / "obs.csv") if with_observation else None
    valid_time = (datetime.fromisoformat(meta["valid_time"])
                  if meta.get("valid_time") else None)
    return Report(
        index=float(meta["index"]),
        origin=ReportOrigin(meta["origin"]),
        members=members,
        observation=observation,
        tc_center=(meta["tc_lat"], meta["tc_lon"]),
        valid_time=valid_time,
    )


def load_track_csv(path) -> list[tuple[float, tuple[float, float]]]:
    """(index, (lat, lon)) rows of a track.csv, in file order."""
    lines = Path(path).read_text().strip().splitlines()
    if not lines or lines[0] != "index,lat,lon":
        raise ValueError(f"{path} is not a track file")
    out = []
    for line in lines[1:]:
        idx, lat, lon = line.split(",")
        out.append((float(idx), (float(lat), float(lon))))
    return out


def load_scenario(path) -> Scenario:
    """Read a scenario directory back; inverse of save_scenario."""
    path = Path(path)
    spec, domain = load_scenario_header(path)
    entries = list_report_dirs(path)
    reports = [load_report(rdir) for _index, _is_noise, rdir in entries]
    if not reports:
        raise FileNotFoundError(f"no report_XXXX directories under {path}")
    return Scenario(spec=spec, domain=domain, reports=reports)


def default_acceptance_spec(seed: int) -> ScenarioSpec:
    """The seeded spec family used by the synthetic verification sweeps."""
    return replace(ScenarioSpec(), seed=seed)
