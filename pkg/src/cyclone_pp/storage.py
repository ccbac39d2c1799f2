"""File plumbing shared by the pipeline stages.

Everything on disk is CSV or JSON: grid fields as comma-separated
row-major text, metadata as JSON. Writes go to a temporary path first
and rename into place, so a crashed stage never leaves a half-written
file or directory behind. Each stage directory carries a manifest.json
recording the stage, config hash, seed, and a sha256 per output file;
re-running a stage with the same inputs and seed must reproduce the
manifest fingerprint bit for bit (wall time is excluded from it).
"""

from __future__ import annotations

import contextlib
import hashlib
import json
import os
import shutil
import tempfile
from pathlib import Path

import numpy as np

MANIFEST_NAME = "manifest.json"
ENGINE_VERSION = "0.1.0"


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def sha256_text(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def config_hash(obj) -> str:
    """Stable digest of a JSON-serializable config."""
    return sha256_text(json.dumps(obj, sort_keys=True, separators=(",", ":")))


def save_grid_csv(path, field: np.ndarray, fmt: str = "%.17g") -> None:
    """Write a 2D field as comma-separated rows, atomically.

    The default format round-trips float64 exactly, so a saved scenario
    trains bit-identically to the in-memory one.
    """
    field = np.asarray(field)
    if field.ndim != 2:
        raise ValueError(f"expected a 2D field, got shape {field.shape}")
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            np.savetxt(fh, field, fmt=fmt, delimiter=",")
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def load_grid_csv(path) -> np.ndarray:
    field = np.loadtxt(path, delimiter=",", ndmin=2)
    return field


def write_json(path, obj) -> None:
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            json.dump(obj, fh, indent=2, sort_keys=True)
            fh.write("\n")
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def write_text(path, text: str) -> None:
    """Write a text file atomically (temp file in place, then rename)."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        with contextlib.suppress(OSError):
            os.unlink(tmp)
        raise


def read_json(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


@contextlib.contextmanager
def staged_dir(final_path):
    """Build a stage output directory atomically.

    Yields a temporary directory; on clean exit it replaces final_path
    (removing any previous version), on error it is deleted and the old
    final_path is left untouched.
    """
    final_path = Path(final_path)
    final_path.parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(tempfile.mkdtemp(dir=final_path.parent,
                                prefix=f".{final_path.name}-staging-"))
    try:
        yield tmp
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    if final_path.exists():
        shutil.rmtree(final_path)
    os.replace(tmp, final_path)


def write_manifest(out_dir, stage: str, config, seed, inputs: dict[str, str],
                   wall_time_s: float) -> dict:
    """Record a stage's outputs: sha256 of every file under out_dir."""
    out_dir = Path(out_dir)
    outputs = {}
    for p in sorted(out_dir.rglob("*")):
        if p.is_file() and p.name != MANIFEST_NAME:
            outputs[p.relative_to(out_dir).as_posix()] = sha256_file(p)
    manifest = {
        "stage": stage,
        "engine_version": ENGINE_VERSION,
        "config": config,
        "config_hash": config_hash(config),
        "seed": seed,
        "inputs": inputs,
        "outputs": outputs,
        "wall_time_s": wall_time_s,
    }
    write_json(out_dir / MANIFEST_NAME, manifest)
    return manifest


def manifest_fingerprint(manifest: dict) -> str:
    """Digest of a manifest with volatile fields (wall time) excluded."""
    stable = {k: v for k, v in manifest.items() if k != "wall_time_s"}
    return config_hash(stable)


def verify_manifest(stage_dir, include=None) -> dict:
    """Check recorded output hashes; returns the manifest.

    ``include`` optionally filters the relative paths to verify, for
    consumers that are only entitled to read part of a stage directory
    and must not open the rest even to hash it.
    """
    stage_dir = Path(stage_dir)
    manifest = read_json(stage_dir / MANIFEST_NAME)
    for rel, want in manifest["outputs"].items():
        if include is not None and not include(rel):
            continue
        path = stage_dir / rel
        if not path.is_file():
            raise FileNotFoundError(f"manifest lists missing file {rel!r} in {stage_dir}")
        got = sha256_file(path)
        if got != want:
            raise ValueError(f"hash mismatch for {rel!r} in {stage_dir}: "
                             f"recorded {want[:12]}, found {got[:12]}")
    return manifest
