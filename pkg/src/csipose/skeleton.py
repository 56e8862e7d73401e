"""17-joint skeleton model and parametric moving bodies.

Joint taxonomy (order is fixed and shared by annotations, network
output, and the error report):

    MidHip LHip LKnee LAnkle RHip RKnee RAnkle Back Neck Nose Head
    LShoulder LElbow LWrist RShoulder RElbow RWrist

Moving bodies are built by forward kinematics: every bone is a fixed
length times a unit direction, so bone lengths are constant over any
trajectory to machine precision.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from csipose.errors import ShapeError

JOINT_NAMES = (
    "MidHip",
    "LHip",
    "LKnee",
    "LAnkle",
    "RHip",
    "RKnee",
    "RAnkle",
    "Back",
    "Neck",
    "Nose",
    "Head",
    "LShoulder",
    "LElbow",
    "LWrist",
    "RShoulder",
    "RElbow",
    "RWrist",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX = {name: i for i, name in enumerate(JOINT_NAMES)}

# Parent of each non-root joint; used to check bone-length invariance.
BONE_PARENTS = {
    "LHip": "MidHip",
    "LKnee": "LHip",
    "LAnkle": "LKnee",
    "RHip": "MidHip",
    "RKnee": "RHip",
    "RAnkle": "RKnee",
    "Back": "MidHip",
    "Neck": "Back",
    "Nose": "Neck",
    "Head": "Neck",
    "LShoulder": "Neck",
    "LElbow": "LShoulder",
    "LWrist": "LElbow",
    "RShoulder": "Neck",
    "RElbow": "RShoulder",
    "RWrist": "RElbow",
}

# Reflection strength defaults: trunk reflects more than extremities.
DEFAULT_REFLECTION_STRENGTHS = {
    "MidHip": 1.0,
    "LHip": 0.9,
    "LKnee": 0.7,
    "LAnkle": 0.5,
    "RHip": 0.9,
    "RKnee": 0.7,
    "RAnkle": 0.5,
    "Back": 1.0,
    "Neck": 0.9,
    "Nose": 0.6,
    "Head": 0.8,
    "LShoulder": 0.9,
    "LElbow": 0.6,
    "LWrist": 0.4,
    "RShoulder": 0.9,
    "RElbow": 0.6,
    "RWrist": 0.4,
}


@dataclass
class SkeletonPose:
    """One annotated or predicted pose: 17 joints, meters."""

    joints: np.ndarray

    def __post_init__(self):
        self.joints = np.asarray(self.joints, dtype=np.float64)
        if self.joints.shape != (NUM_JOINTS, 3):
            raise ShapeError(f"pose must be {NUM_JOINTS}x3, got {self.joints.shape}")
        if not np.all(np.isfinite(self.joints)):
            raise ValueError("pose contains non-finite coordinates")

    @classmethod
    def from_flat(cls, flat) -> "SkeletonPose":
        flat = np.asarray(flat, dtype=np.float64)
        if flat.size != NUM_JOINTS * 3:
            raise ShapeError(f"flat pose must have {NUM_JOINTS * 3} values, got {flat.size}")
        return cls(flat.reshape(NUM_JOINTS, 3))

    def flat(self) -> np.ndarray:
        return self.joints.reshape(-1)

    def __getitem__(self, joint: str) -> np.ndarray:
        return self.joints[JOINT_INDEX[joint]]


def bone_lengths(joints: np.ndarray) -> np.ndarray:
    """Lengths of the 16 parent-child bones, in JOINT_NAMES child order."""
    out = []
    for child, parent in BONE_PARENTS.items():
        out.append(
            np.linalg.norm(joints[JOINT_INDEX[child]] - joints[JOINT_INDEX[parent]])
        )
    return np.array(out)


@dataclass
class MovingBody:
    """Articulated body: a trajectory of poses plus per-joint reflectivity."""

    duration: float
    pose_fn: Callable[[float], np.ndarray]
    reflection_strengths: np.ndarray = field(
        default_factory=lambda: np.array(
            [DEFAULT_REFLECTION_STRENGTHS[n] for n in JOINT_NAMES]
        )
    )

    def pose_at(self, t: float) -> np.ndarray:
        if not 0.0 <= t <= self.duration:
            raise ValueError(f"t={t} outside trajectory duration [0, {self.duration}]")
        return self.pose_fn(t)


def _walker_pose(
    t: float,
    height: float,
    gait_frequency: float,
    root_xy: Callable[[float], tuple[float, float]],
    heading: Callable[[float], float],
    leg_amp: float,
    knee_amp: float,
    arm_amp: float,
) -> np.ndarray:
    h = height
    phase = 2.0 * math.pi * gait_frequency * t
    theta = heading(t)
    fwd = np.array([math.cos(theta), math.sin(theta), 0.0])
    left = np.array([-math.sin(theta), math.cos(theta), 0.0])
    up = np.array([0.0, 0.0, 1.0])

    def pitched_down(angle):
        # unit vector in the forward/up plane, angle forward of straight down
        return fwd * math.sin(angle) - up * math.cos(angle)

    lean = 0.06 + 0.03 * math.sin(2.0 * phase)
    spine = up * math.cos(lean) + fwd * math.sin(lean)

    x, y = root_xy(t)
    mid_hip = np.array([x, y, 0.530 * h + 0.015 * h * math.cos(2.0 * phase)])

    joints = np.zeros((NUM_JOINTS, 3))
    joints[JOINT_INDEX["MidHip"]] = mid_hip
    joints[JOINT_INDEX["LHip"]] = mid_hip + 0.052 * h * left
    joints[JOINT_INDEX["RHip"]] = mid_hip - 0.052 * h * left

    for side, sign in (("L", 1.0), ("R", -1.0)):
        leg_pitch = sign * leg_amp * math.sin(phase)
        knee_flex = knee_amp * (0.5 + 0.5 * math.sin(sign * phase + 0.9))
        hip = joints[JOINT_INDEX[side + "Hip"]]
        knee = hip + 0.242 * h * pitched_down(leg_pitch)
        ankle = knee + 0.245 * h * pitched_down(leg_pitch - knee_flex)
        joints[JOINT_INDEX[side + "Knee"]] = knee
        joints[JOINT_INDEX[side + "Ankle"]] = ankle

    back = mid_hip + 0.096 * h * spine
    neck = back + 0.192 * h * spine
    joints[JOINT_INDEX["Back"]] = back
    joints[JOINT_INDEX["Neck"]] = neck
    joints[JOINT_INDEX["Nose"]] = neck + 0.062 * h * (0.866 * fwd + 0.5 * up)
    joints[JOINT_INDEX["Head"]] = neck + 0.118 * h * (0.150 * fwd + 0.98869611 * up)

    for side, sign in (("L", 1.0), ("R", -1.0)):
        shoulder = neck + sign * 0.129 * h * left - 0.010 * h * spine
        arm_pitch = -sign * arm_amp * math.sin(phase)
        elbow_flex = 0.35 + 0.15 * math.sin(sign * phase + 0.4)
        elbow = shoulder + 0.172 * h * pitched_down(arm_pitch)
        wrist = elbow + 0.157 * h * pitched_down(arm_pitch + elbow_flex)
        joints[JOINT_INDEX[side + "Shoulder"]] = shoulder
        joints[JOINT_INDEX[side + "Elbow"]] = elbow
        joints[JOINT_INDEX[side + "Wrist"]] = wrist

    return joints


def build_walker(
    duration: float,
    height: float = 1.70,
    gait_frequency: float = 1.0,
    path: dict | None = None,
    leg_amp: float = 0.50,
    knee_amp: float = 0.70,
    arm_amp: float = 0.45,
    reflection_strengths: dict | None = None,
) -> MovingBody:
    """A walking body whose root follows a line or an arc.

    ``path`` is ``{"kind": "line", "start": [x, y], "velocity": [vx, vy]}``
    or ``{"kind": "arc", "center": [x, y], "radius": r,
    "angular_speed": w, "start_angle": a}``. Defaults to a slow arc
    around (1.5, 1.5).
    """
    if path is None:
        path = {"kind": "arc", "center": [1.5, 1.5], "radius": 0.8,
                "angular_speed": 0.35, "start_angle": 0.0}

    kind = path.get("kind", "arc")
    if kind == "line":
        start = np.asarray(path["start"], dtype=float)
        vel = np.asarray(path["velocity"], dtype=float)

        def root_xy(t):
            return start[0] + vel[0] * t, start[1] + vel[1] * t

        head_angle = math.atan2(vel[1], vel[0]) if np.any(vel != 0) else 0.0

        def heading(t):
            return head_angle

    elif kind == "arc":
        cx, cy = path["center"]
        radius = float(path["radius"])
        omega = float(path["angular_speed"])
        angle0 = float(path.get("start_angle", 0.0))

        def root_xy(t):
            a = angle0 + omega * t
            return cx + radius * math.cos(a), cy + radius * math.sin(a)

        def heading(t):
            return angle0 + omega * t + math.pi / 2.0

    else:
        raise ValueError(f"unknown path kind {kind!r}")

    strengths = dict(DEFAULT_REFLECTION_STRENGTHS)
    if reflection_strengths:
        strengths.update(reflection_strengths)
    strengths_arr = np.array([strengths[n] for n in JOINT_NAMES], dtype=float)

    def pose_fn(t):
        return _walker_pose(
            t, height, gait_frequency, root_xy, heading, leg_amp, knee_amp, arm_amp
        )

    return MovingBody(duration=duration, pose_fn=pose_fn,
                      reflection_strengths=strengths_arr)


def build_standing(
    duration: float,
    height: float = 1.70,
    position: tuple[float, float] = (1.5, 1.5),
    heading_angle: float = 0.0,
    reflection_strengths: dict | None = None,
) -> MovingBody:
    """A motionless body (static scene); pose is constant over time."""
    strengths = dict(DEFAULT_REFLECTION_STRENGTHS)
    if reflection_strengths:
        strengths.update(reflection_strengths)
    strengths_arr = np.array([strengths[n] for n in JOINT_NAMES], dtype=float)

    frozen = _walker_pose(
        0.0,
        height,
        0.0,
        lambda t: position,
        lambda t: heading_angle,
        0.0,
        0.0,
        0.0,
    )

    return MovingBody(
        duration=duration,
        pose_fn=lambda t: frozen.copy(),
        reflection_strengths=strengths_arr,
    )
