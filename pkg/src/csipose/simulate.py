"""Synthetic multipath CSI generation from a parametric moving-body scene.

The channel at frequency f and time t is the coherent sum over
propagation paths of complex attenuation times a phase delay term:

    H(f, t) = sum_i a_i(t) * exp(-j * 2*pi * f * tau_i(t))

Paths are tagged static (constant geometry: the direct link and fixed
clutter reflectors) or dynamic (one specular reflection per body joint).
The dynamic delay of a joint is (tx->joint->rx distance) / c and its
attenuation magnitude is reflection_strength / (d_tx * d_rx), with a
fixed half-cycle reflection phase shift.

Two receivers with 3 antennas each sample the channel at 150 Hz on a
30-subcarrier grid; ground-truth poses are sampled at 30 Hz so every
pose timestamp coincides with every 5th CSI timestamp.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Union

import numpy as np

from csipose import skeleton
from csipose.skeleton import MovingBody, build_standing, build_walker

SPEED_OF_LIGHT = 299792458.0  # m/s

_Scalar = Union[float, complex]
_TimeFn = Callable[[float], _Scalar]


@dataclass
class PathComponent:
    """One propagation path: complex attenuation and time of flight.

    Either field may be a constant or a callable of time; static paths
    must be constants.
    """

    attenuation: Union[complex, _TimeFn]
    delay: Union[float, _TimeFn]
    kind: str = "static"

    def __post_init__(self):
        if self.kind not in ("static", "dynamic"):
            raise ValueError(f"path kind must be 'static' or 'dynamic', got {self.kind!r}")
        if self.kind == "static" and (callable(self.attenuation) or callable(self.delay)):
            raise ValueError("static paths must have constant attenuation and delay")

    def attenuation_at(self, t: float) -> complex:
        return complex(self.attenuation(t) if callable(self.attenuation) else self.attenuation)

    def delay_at(self, t: float) -> float:
        d = self.delay(t) if callable(self.delay) else self.delay
        if d < 0:
            raise ValueError(f"negative path delay {d}")
        return float(d)


def channel_response(paths, f: float, t: float = 0.0) -> complex:
    """Coherent multipath sum at frequency f and time t."""
    if not paths:
        raise ValueError("path list must be non-empty")
    total = 0.0 + 0.0j
    for p in paths:
        total += p.attenuation_at(t) * np.exp(-2j * math.pi * f * p.delay_at(t))
    return complex(total)


def decompose_response(paths, f: float, t: float = 0.0) -> tuple[complex, complex]:
    """(static_part, dynamic_part); the parts sum to the full response."""
    static = 0.0 + 0.0j
    dynamic = 0.0 + 0.0j
    for p in paths:
        term = p.attenuation_at(t) * np.exp(-2j * math.pi * f * p.delay_at(t))
        if p.kind == "static":
            static += term
        else:
            dynamic += term
    return complex(static), complex(dynamic)


@dataclass
class SubcarrierGrid:
    center_frequency: float = 5.18e9
    bandwidth: float = 20e6
    subcarrier_count: int = 30

    @property
    def frequencies(self) -> np.ndarray:
        half = self.bandwidth / 2.0
        return np.linspace(
            self.center_frequency - half,
            self.center_frequency + half,
            self.subcarrier_count,
        )


@dataclass
class ReceiverGeometry:
    position: np.ndarray
    antenna_offsets: np.ndarray  # (3, 3): one row per antenna

    def antenna_positions(self) -> np.ndarray:
        return np.asarray(self.position, dtype=float) + np.asarray(
            self.antenna_offsets, dtype=float
        )


def _default_geometry() -> "SceneGeometry":
    # Perpendicular links, transmitter at the intersection; antenna
    # spacing about half a wavelength at 5 GHz so per-antenna responses
    # (and their variances) differ.
    d = 0.029
    return SceneGeometry(
        tx=np.array([0.0, 0.0, 1.0]),
        receivers=[
            ReceiverGeometry(
                position=np.array([3.0, 0.0, 1.0]),
                antenna_offsets=np.array([[0.0, 0.0, 0.0], [0.0, d, 0.0], [0.0, 2 * d, 0.0]]),
            ),
            ReceiverGeometry(
                position=np.array([0.0, 3.0, 1.0]),
                antenna_offsets=np.array([[0.0, 0.0, 0.0], [d, 0.0, 0.0], [2 * d, 0.0, 0.0]]),
            ),
        ],
        static_reflectors=[(np.array([2.4, 2.6, 1.3]), 0.6)],
        los_strength=1.0,
    )


@dataclass
class SceneGeometry:
    tx: np.ndarray
    receivers: list[ReceiverGeometry]
    static_reflectors: list[tuple[np.ndarray, float]] = field(default_factory=list)
    los_strength: float = 1.0


@dataclass
class SceneConfig:
    geometry: SceneGeometry
    body: MovingBody
    duration: float
    sample_rate: float = 150.0
    pose_rate: float = 30.0
    noise_level: float = 0.01
    seed: int = 0
    grid: SubcarrierGrid = field(default_factory=SubcarrierGrid)
    subject_id: str = "S1"
    scenario: str = "basic"

    def __post_init__(self):
        if len(self.receivers_positions()) != 2:
            raise ValueError("scene must have exactly two receiver links")
        if self.sample_rate <= 0 or self.duration <= 0:
            raise ValueError("sample_rate and duration must be positive")
        if self.scenario not in ("basic", "occluded"):
            raise ValueError(f"scenario must be 'basic' or 'occluded', got {self.scenario!r}")

    def receivers_positions(self):
        return [r.position for r in self.geometry.receivers]


@dataclass
class CsiFrame:
    """One CSI measurement: (antenna, subcarrier) complex responses."""

    timestamp: float
    values: np.ndarray  # (antennas, subcarriers) complex128


@dataclass
class CsiStream:
    receiver_id: int
    timestamps: np.ndarray  # (T,)
    values: np.ndarray  # (T, antennas, subcarriers) complex128
    sample_rate: float
    grid: SubcarrierGrid = field(default_factory=SubcarrierGrid)

    def frame(self, i: int) -> CsiFrame:
        return CsiFrame(float(self.timestamps[i]), self.values[i])

    def __len__(self):
        return len(self.timestamps)


@dataclass
class SyntheticRecording:
    streams: list[CsiStream]
    pose_timestamps: np.ndarray
    poses: np.ndarray  # (P, 17, 3)
    scene: SceneConfig


def static_paths_for_link(geometry: SceneGeometry, rx_antenna: np.ndarray):
    """Direct path plus fixed clutter reflections for one tx-antenna link."""
    tx = np.asarray(geometry.tx, dtype=float)
    rx = np.asarray(rx_antenna, dtype=float)
    d_los = float(np.linalg.norm(rx - tx))
    paths = [
        PathComponent(geometry.los_strength / d_los, d_los / SPEED_OF_LIGHT, "static")
    ]
    for point, strength in geometry.static_reflectors:
        point = np.asarray(point, dtype=float)
        d1 = float(np.linalg.norm(point - tx))
        d2 = float(np.linalg.norm(rx - point))
        paths.append(
            PathComponent(-strength / (d1 * d2), (d1 + d2) / SPEED_OF_LIGHT, "static")
        )
    return paths


def body_to_paths(body: MovingBody, tx, rx_antenna, t: float):
    """One dynamic path per joint for the link tx -> body -> rx_antenna."""
    tx = np.asarray(tx, dtype=float)
    rx = np.asarray(rx_antenna, dtype=float)
    joints = body.pose_at(t)
    d1 = np.linalg.norm(joints - tx, axis=1)
    d2 = np.linalg.norm(rx - joints, axis=1)
    alphas = -body.reflection_strengths / (d1 * d2)
    delays = (d1 + d2) / SPEED_OF_LIGHT
    return [
        PathComponent(complex(alphas[i]), float(delays[i]), "dynamic")
        for i in range(skeleton.NUM_JOINTS)
    ]


def _link_responses(scene: SceneConfig, rx_antenna, times, joints_series):
    """(T, S) complex responses of one link, noise-free, vectorized."""
    tx = np.asarray(scene.geometry.tx, dtype=float)
    rx = np.asarray(rx_antenna, dtype=float)
    freqs = scene.grid.frequencies  # (S,)

    statics = static_paths_for_link(scene.geometry, rx)
    s_alpha = np.array([p.attenuation_at(0.0) for p in statics])
    s_delay = np.array([p.delay_at(0.0) for p in statics])
    static_resp = (
        s_alpha[:, None] * np.exp(-2j * math.pi * freqs[None, :] * s_delay[:, None])
    ).sum(axis=0)  # (S,)

    d1 = np.linalg.norm(joints_series - tx, axis=2)  # (T, 17)
    d2 = np.linalg.norm(rx - joints_series, axis=2)  # (T, 17)
    alphas = -scene.body.reflection_strengths[None, :] / (d1 * d2)  # (T, 17)
    delays = (d1 + d2) / SPEED_OF_LIGHT  # (T, 17)

    out = np.empty((len(times), len(freqs)), dtype=np.complex128)
    chunk = 512
    for lo in range(0, len(times), chunk):
        hi = min(lo + chunk, len(times))
        phase = np.exp(
            -2j * math.pi * delays[lo:hi, :, None] * freqs[None, None, :]
        )  # (chunk, 17, S)
        out[lo:hi] = (alphas[lo:hi, :, None] * phase).sum(axis=1)
    return out + static_resp[None, :]


def synthesize_recording(scene: SceneConfig) -> SyntheticRecording:
    """Sample CSI at the scene rate and ground-truth poses at 30 Hz."""
    n_csi = round(scene.duration * scene.sample_rate)
    n_pose = round(scene.duration * scene.pose_rate)
    csi_times = np.arange(n_csi) / scene.sample_rate
    pose_times = np.arange(n_pose) / scene.pose_rate

    joints_series = np.stack([scene.body.pose_at(t) for t in csi_times])
    poses = np.stack([scene.body.pose_at(t) for t in pose_times])

    rng = np.random.default_rng(scene.seed)
    streams = []
    for rid, receiver in enumerate(scene.geometry.receivers):
        antennas = receiver.antenna_positions()
        values = np.empty(
            (n_csi, len(antennas), scene.grid.subcarrier_count), dtype=np.complex128
        )
        for ai, antenna in enumerate(antennas):
            values[:, ai, :] = _link_responses(scene, antenna, csi_times, joints_series)
        if scene.noise_level > 0:
            noise = scene.noise_level * (
                rng.standard_normal(values.shape)
                + 1j * rng.standard_normal(values.shape)
            )
            values += noise
        streams.append(
            CsiStream(
                receiver_id=rid,
                timestamps=csi_times.copy(),
                values=values,
                sample_rate=scene.sample_rate,
                grid=scene.grid,
            )
        )
    return SyntheticRecording(
        streams=streams, pose_timestamps=pose_times, poses=poses, scene=scene
    )


# --------------------------------------------------------------------------
# scene files
# --------------------------------------------------------------------------

def scene_from_dict(spec: dict) -> SceneConfig:
    """Build a SceneConfig from a parsed scene definition."""
    duration = float(spec["duration"])
    if duration <= 0:
        raise ValueError("scene duration must be positive")

    geometry = _default_geometry()
    g = spec.get("geometry") or {}
    if "tx" in g:
        geometry.tx = np.asarray(g["tx"], dtype=float)
    if "receivers" in g:
        geometry.receivers = [
            ReceiverGeometry(
                position=np.asarray(r["position"], dtype=float),
                antenna_offsets=np.asarray(
                    r.get(
                        "antenna_offsets",
                        [[0.0, 0.0, 0.0], [0.0, 0.029, 0.0], [0.0, 0.058, 0.0]],
                    ),
                    dtype=float,
                ),
            )
            for r in g["receivers"]
        ]
    if "static_reflectors" in g:
        geometry.static_reflectors = [
            (np.asarray(r["position"], dtype=float), float(r["strength"]))
            for r in g["static_reflectors"]
        ]
    if "los_strength" in g:
        geometry.los_strength = float(g["los_strength"])

    traj = spec.get("trajectory") or {"kind": "walk"}
    kind = traj.get("kind", "walk")
    if kind == "walk":
        body = build_walker(
            duration=duration,
            height=float(traj.get("height", 1.70)),
            gait_frequency=float(traj.get("gait_frequency", 1.0)),
            path=traj.get("path"),
            leg_amp=float(traj.get("leg_amp", 0.50)),
            knee_amp=float(traj.get("knee_amp", 0.70)),
            arm_amp=float(traj.get("arm_amp", 0.45)),
            reflection_strengths=traj.get("reflection_strengths"),
        )
    elif kind == "static":
        body = build_standing(
            duration=duration,
            height=float(traj.get("height", 1.70)),
            position=tuple(traj.get("position", (1.5, 1.5))),
            heading_angle=float(traj.get("heading", 0.0)),
            reflection_strengths=traj.get("reflection_strengths"),
        )
    else:
        raise ValueError(f"unknown trajectory kind {kind!r}")

    noise = spec.get("noise") or {}
    carrier = spec.get("carrier") or {}
    grid = SubcarrierGrid(
        center_frequency=float(carrier.get("center_frequency", 5.18e9)),
        bandwidth=float(carrier.get("bandwidth", 20e6)),
        subcarrier_count=int(carrier.get("subcarrier_count", 30)),
    )
    return SceneConfig(
        geometry=geometry,
        body=body,
        duration=duration,
        sample_rate=float(spec.get("sample_rate", 150.0)),
        noise_level=float(noise.get("level", 0.01)),
        seed=int(spec.get("seed", 0)),
        grid=grid,
        subject_id=str(spec.get("subject", "S1")),
        scenario=str(spec.get("scenario", "basic")),
    )


def load_scene(path) -> SceneConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return scene_from_dict(json.load(fh))
