"""On-disk recording formats, stream synchronization, and dataset splits.

CSI stream file (little-endian binary):

    bytes 0..3    magic b"CSIR"
    bytes 4..7    format version, uint32 (currently 1)
    bytes 8..11   receiver id, uint32
    bytes 12..15  antenna count, uint32
    bytes 16..19  subcarrier count, uint32
    bytes 20..27  sample rate in Hz, float64
    frames        repeated records: timestamp float64 followed by
                  antenna_count * subcarrier_count (re, im) float64 pairs

Pose stream file: one line per pose, timestamp followed by 51
coordinates (17 joints x 3, meters), whitespace-separated, full
round-trip precision.

A recording directory holds ``manifest.json`` plus the referenced
stream files.
"""

from __future__ import annotations

import json
import os
import zipfile
from dataclasses import dataclass, field

import numpy as np

from csipose.errors import (
    FormatError,
    SyncDriftError,
    TimestampOrderError,
    TruncatedFileError,
    VersionError,
)
from csipose.simulate import CsiStream, SubcarrierGrid
from csipose.skeleton import NUM_JOINTS

CSI_MAGIC = b"CSIR"
CSI_VERSION = 1
_CSI_HEADER_SIZE = 28

MANIFEST_VERSION = 1
MANIFEST_NAME = "manifest.json"

DATASET_VERSION = 1

SCENARIOS = ("basic", "occluded")


# --------------------------------------------------------------------------
# CSI stream files
# --------------------------------------------------------------------------

def write_csi_file(path, stream: CsiStream):
    t, a, s = stream.values.shape
    header = (
        CSI_MAGIC
        + np.uint32(CSI_VERSION).tobytes()
        + np.uint32(stream.receiver_id).tobytes()
        + np.uint32(a).tobytes()
        + np.uint32(s).tobytes()
        + np.float64(stream.sample_rate).tobytes()
    )
    frames = np.empty((t, 1 + 2 * a * s), dtype="<f8")
    frames[:, 0] = stream.timestamps
    inter = frames[:, 1:].reshape(t, a, s, 2)
    inter[..., 0] = stream.values.real
    inter[..., 1] = stream.values.imag
    with open(path, "wb") as fh:
        fh.write(header)
        fh.write(frames.tobytes())


def read_csi_file(path, grid: SubcarrierGrid | None = None) -> CsiStream:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _CSI_HEADER_SIZE:
        raise TruncatedFileError(f"{path}: shorter than the {_CSI_HEADER_SIZE}-byte header", len(raw))
    if raw[:4] != CSI_MAGIC:
        raise FormatError(f"{path}: bad magic {raw[:4]!r}")
    version = int(np.frombuffer(raw, "<u4", 1, 4)[0])
    if version != CSI_VERSION:
        raise VersionError(f"{path}: unsupported CSI format version {version}")
    receiver_id = int(np.frombuffer(raw, "<u4", 1, 8)[0])
    n_ant = int(np.frombuffer(raw, "<u4", 1, 12)[0])
    n_sub = int(np.frombuffer(raw, "<u4", 1, 16)[0])
    rate = float(np.frombuffer(raw, "<f8", 1, 20)[0])
    if n_ant <= 0 or n_sub <= 0 or rate <= 0:
        raise FormatError(f"{path}: invalid header (antennas={n_ant}, subcarriers={n_sub}, rate={rate})")

    frame_bytes = 8 * (1 + 2 * n_ant * n_sub)
    body = len(raw) - _CSI_HEADER_SIZE
    if body % frame_bytes != 0:
        offset = _CSI_HEADER_SIZE + (body // frame_bytes) * frame_bytes
        raise TruncatedFileError(
            f"{path}: file ends mid-frame at byte {len(raw)} "
            f"(last whole frame ends at byte {offset})",
            offset,
        )
    t = body // frame_bytes
    frames = np.frombuffer(raw, "<f8", t * (1 + 2 * n_ant * n_sub), _CSI_HEADER_SIZE)
    frames = frames.reshape(t, 1 + 2 * n_ant * n_sub)
    timestamps = frames[:, 0].copy()
    if t > 1 and np.any(np.diff(timestamps) <= 0):
        raise TimestampOrderError(f"{path}: timestamps are not strictly increasing")
    inter = frames[:, 1:].reshape(t, n_ant, n_sub, 2)
    values = inter[..., 0] + 1j * inter[..., 1]
    return CsiStream(
        receiver_id=receiver_id,
        timestamps=timestamps,
        values=values,
        sample_rate=rate,
        grid=grid or SubcarrierGrid(subcarrier_count=n_sub),
    )


# --------------------------------------------------------------------------
# pose stream files
# --------------------------------------------------------------------------

def write_pose_file(path, timestamps, poses):
    poses = np.asarray(poses, dtype=np.float64)
    with open(path, "w", encoding="utf-8") as fh:
        for ts, pose in zip(timestamps, poses):
            vals = " ".join(format(v, ".17g") for v in pose.reshape(-1))
            fh.write(f"{ts:.17g} {vals}\n")


def read_pose_file(path):
    timestamps = []
    poses = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            parts = line.split()
            if len(parts) != 1 + NUM_JOINTS * 3:
                raise FormatError(
                    f"{path}:{lineno}: expected {1 + NUM_JOINTS * 3} values, got {len(parts)}"
                )
            try:
                row = np.array([float(p) for p in parts])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: unparseable value: {exc}") from exc
            if not np.all(np.isfinite(row)):
                raise FormatError(f"{path}:{lineno}: non-finite coordinate")
            timestamps.append(row[0])
            poses.append(row[1:].reshape(NUM_JOINTS, 3))
    ts = np.array(timestamps)
    if len(ts) > 1 and np.any(np.diff(ts) <= 0):
        raise TimestampOrderError(f"{path}: pose timestamps are not strictly increasing")
    return ts, (np.stack(poses) if poses else np.zeros((0, NUM_JOINTS, 3)))


# --------------------------------------------------------------------------
# recording manifests
# --------------------------------------------------------------------------

@dataclass
class RecordingManifest:
    recording_id: str
    subject_id: str
    scenario: str = "basic"
    csi_sample_rate: float = 150.0
    pose_sample_rate: float = 30.0
    csi_files: list = field(default_factory=list)
    pose_file: str = "poses.txt"
    scene: dict | None = None
    format_version: int = MANIFEST_VERSION

    def __post_init__(self):
        if self.scenario not in SCENARIOS:
            raise FormatError(f"scenario must be one of {SCENARIOS}, got {self.scenario!r}")


@dataclass
class RecordingData:
    manifest: RecordingManifest
    streams: list
    pose_timestamps: np.ndarray
    poses: np.ndarray


def write_recording(directory, recording, recording_id="rec", scene_dict=None):
    """Persist a SyntheticRecording under ``directory``; returns the manifest."""
    os.makedirs(directory, exist_ok=True)
    csi_files = []
    for stream in recording.streams:
        name = f"csi_rx{stream.receiver_id}.bin"
        write_csi_file(os.path.join(directory, name), stream)
        csi_files.append(name)
    write_pose_file(
        os.path.join(directory, "poses.txt"), recording.pose_timestamps, recording.poses
    )
    manifest = RecordingManifest(
        recording_id=recording_id,
        subject_id=recording.scene.subject_id,
        scenario=recording.scene.scenario,
        csi_sample_rate=recording.scene.sample_rate,
        pose_sample_rate=recording.scene.pose_rate,
        csi_files=csi_files,
        pose_file="poses.txt",
        scene=scene_dict,
    )
    payload = {
        "format_version": manifest.format_version,
        "recording_id": manifest.recording_id,
        "subject_id": manifest.subject_id,
        "scenario": manifest.scenario,
        "csi_sample_rate": manifest.csi_sample_rate,
        "pose_sample_rate": manifest.pose_sample_rate,
        "csi_files": manifest.csi_files,
        "pose_file": manifest.pose_file,
        "scene": manifest.scene,
    }
    with open(os.path.join(directory, MANIFEST_NAME), "w", encoding="utf-8") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
    return manifest


def read_recording(directory) -> RecordingData:
    manifest_path = os.path.join(directory, MANIFEST_NAME)
    if not os.path.exists(manifest_path):
        raise FormatError(f"{directory}: no {MANIFEST_NAME}")
    with open(manifest_path, "r", encoding="utf-8") as fh:
        try:
            payload = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{manifest_path}: invalid JSON: {exc}") from exc
    version = payload.get("format_version")
    if version != MANIFEST_VERSION:
        raise VersionError(f"{manifest_path}: unsupported manifest version {version}")
    manifest = RecordingManifest(
        recording_id=payload["recording_id"],
        subject_id=payload["subject_id"],
        scenario=payload.get("scenario", "basic"),
        csi_sample_rate=float(payload.get("csi_sample_rate", 150.0)),
        pose_sample_rate=float(payload.get("pose_sample_rate", 30.0)),
        csi_files=list(payload["csi_files"]),
        pose_file=payload["pose_file"],
        scene=payload.get("scene"),
    )
    streams = []
    for name in manifest.csi_files:
        path = os.path.join(directory, name)
        if not os.path.exists(path):
            raise FormatError(f"{directory}: manifest references missing file {name}")
        streams.append(read_csi_file(path))
    pose_path = os.path.join(directory, manifest.pose_file)
    if not os.path.exists(pose_path):
        raise FormatError(f"{directory}: manifest references missing file {manifest.pose_file}")
    ts, poses = read_pose_file(pose_path)
    return RecordingData(manifest=manifest, streams=streams, pose_timestamps=ts, poses=poses)


# --------------------------------------------------------------------------
# synchronization
# --------------------------------------------------------------------------

@dataclass
class SyncResult:
    pose_indices: np.ndarray  # (K,) indices into the pose stream
    csi_indices: np.ndarray  # (K, n_receivers, 5) indices into each CSI stream
    dropped: int


def synchronize(streams, pose_timestamps, group: int = 5, max_drift: float = 0.01) -> SyncResult:
    """Map each pose to its ``group`` co-timed CSI samples per receiver.

    A pose matches when the nearest CSI timestamp lies within half a CSI
    sample period and starts a full group. Poses without a full match in
    every stream are dropped and counted. A systematic rate mismatch
    beyond ``max_drift`` raises SyncDriftError.
    """
    pose_timestamps = np.asarray(pose_timestamps, dtype=float)
    n_pose = len(pose_timestamps)
    if n_pose == 0:
        return SyncResult(np.zeros(0, int), np.zeros((0, len(streams), group), int), 0)

    for stream in streams:
        ts = stream.timestamps
        if len(ts) >= 2 and n_pose >= 2:
            csi_rate = (len(ts) - 1) / (ts[-1] - ts[0])
            pose_rate = (n_pose - 1) / (pose_timestamps[-1] - pose_timestamps[0])
            ratio = csi_rate / (group * pose_rate)
            if abs(ratio - 1.0) > max_drift:
                raise SyncDriftError(
                    f"receiver {stream.receiver_id}: CSI rate {csi_rate:.3f} Hz is "
                    f"{ratio:.4f}x the expected {group}x pose rate "
                    f"({group * pose_rate:.3f} Hz); drift exceeds {max_drift:.1%}"
                )

    kept = []
    groups = []
    for p in range(n_pose):
        tp = pose_timestamps[p]
        per_receiver = []
        ok = True
        for stream in streams:
            ts = stream.timestamps
            tol = 0.5 / stream.sample_rate
            j = int(np.searchsorted(ts, tp))
            best = None
            for cand in (j - 1, j):
                if 0 <= cand < len(ts) and abs(ts[cand] - tp) <= tol:
                    if best is None or abs(ts[cand] - tp) < abs(ts[best] - tp):
                        best = cand
            if best is None or best + group > len(ts):
                ok = False
                break
            per_receiver.append(np.arange(best, best + group))
        if ok:
            kept.append(p)
            groups.append(np.stack(per_receiver))
    dropped = n_pose - len(kept)
    if kept:
        return SyncResult(np.array(kept), np.stack(groups), dropped)
    return SyncResult(np.zeros(0, int), np.zeros((0, len(streams), group), int), dropped)


# --------------------------------------------------------------------------
# dataset splits
# --------------------------------------------------------------------------

def split_dataset(subject_ids, policy: str, seed: int = 0, holdout: str | None = None,
                  train_fraction: float = 0.75):
    """Disjoint, exhaustive (train, test) index arrays.

    ``within-subject``: seeded per-subject split at ``train_fraction``.
    ``cross-subject``: every sample of the held-out subject (default:
    last in sorted order) is test, the rest train.
    """
    subject_ids = np.asarray(subject_ids)
    n = len(subject_ids)
    subjects = sorted(set(subject_ids.tolist()))
    if policy in ("within-subject", "within"):
        rng = np.random.default_rng(seed)
        train, test = [], []
        for subject in subjects:
            idx = np.flatnonzero(subject_ids == subject)
            idx = idx[rng.permutation(len(idx))]
            cut = int(len(idx) * train_fraction)
            train.extend(idx[:cut])
            test.extend(idx[cut:])
        return np.sort(np.array(train, int)), np.sort(np.array(test, int))
    if policy in ("cross-subject", "cross"):
        if len(subjects) < 2:
            raise ValueError("cross-subject split needs at least 2 subjects")
        holdout = holdout if holdout is not None else subjects[-1]
        if holdout not in subjects:
            raise ValueError(f"holdout subject {holdout!r} not present in {subjects}")
        test = np.flatnonzero(subject_ids == holdout)
        train = np.flatnonzero(subject_ids != holdout)
        return train, test
    raise ValueError(f"unknown split policy {policy!r}")


# --------------------------------------------------------------------------
# preprocessed (image, pose) pair datasets
# --------------------------------------------------------------------------

def save_pair_dataset(path, images, poses, end_timestamps, subject_ids, meta=None):
    images = np.asarray(images, dtype=np.float64)
    poses = np.asarray(poses, dtype=np.float64)
    info = {"version": DATASET_VERSION}
    if meta:
        info.update(meta)
    with open(path, "wb") as fh:
        np.savez(
            fh,
            images=images,
            poses=poses,
            end_timestamps=np.asarray(end_timestamps, dtype=np.float64),
            subject_ids=np.asarray(subject_ids, dtype="U32"),
            meta=json.dumps(info),
        )


def load_pair_dataset(path):
    try:
        with np.load(path, allow_pickle=False) as data:
            required = ("images", "poses", "end_timestamps", "subject_ids", "meta")
            for key in required:
                if key not in data:
                    raise FormatError(f"{path}: dataset missing array {key!r}")
            meta = json.loads(str(data["meta"]))
            if meta.get("version") != DATASET_VERSION:
                raise VersionError(
                    f"{path}: unsupported dataset version {meta.get('version')}"
                )
            return (
                data["images"],
                data["poses"],
                data["end_timestamps"],
                data["subject_ids"],
                meta,
            )
    except (OSError, ValueError, KeyError, zipfile.BadZipFile) as exc:
        raise FormatError(f"{path}: unreadable dataset: {exc}") from exc


def concat_pair_datasets(parts):
    """Merge loaded datasets (images, poses, ts, subjects, meta) into one."""
    images = np.concatenate([p[0] for p in parts])
    poses = np.concatenate([p[1] for p in parts])
    ts = np.concatenate([p[2] for p in parts])
    subjects = np.concatenate([p[3] for p in parts])
    return images, poses, ts, subjects
