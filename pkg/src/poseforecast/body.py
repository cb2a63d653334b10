"""Procedural 13-joint body model used for the bundled MoCap pool and toy videos.

World frame: x right, y down, z away from the camera, millimetres.
"""
from __future__ import annotations

import numpy as np

from .geometry import NUM_JOINTS, Skeleton3D, rotation_x, rotation_y, rotation_z

BONES = {
    "hip_width": 300.0,
    "shoulder_width": 380.0,
    "torso": 520.0,
    "head": 260.0,
    "upper_arm": 300.0,
    "forearm": 270.0,
    "thigh": 440.0,
    "shin": 420.0,
}

# stick-figure edges between joint indices, used for drawing
LIMBS = [(0, 1), (0, 2), (1, 2), (1, 3), (3, 5), (2, 4), (4, 6),
         (1, 7), (2, 8), (7, 8), (7, 9), (9, 11), (8, 10), (10, 12)]

ANGLE_KEYS = (
    "torso_lean", "torso_twist",
    "r_shoulder_flex", "r_shoulder_abd", "r_elbow",
    "l_shoulder_flex", "l_shoulder_abd", "l_elbow",
    "r_hip_flex", "r_hip_abd", "r_knee",
    "l_hip_flex", "l_hip_abd", "l_knee",
)

DOWN = np.array([0.0, 1.0, 0.0])


def _limb(flex, abd, bend, side):
    # side = -1 for right (negative x), +1 for left
    upper = rotation_x(-flex) @ rotation_z(-side * abd) @ DOWN
    lower = rotation_x(-(flex + bend)) @ rotation_z(-side * abd) @ DOWN
    return upper, lower


def articulate(angles: dict, bones: dict = BONES) -> np.ndarray:
    """Forward kinematics; returns world-frame ``(13, 3)`` joints with the pelvis at the origin."""
    a = {k: 0.0 for k in ANGLE_KEYS}
    a.update(angles)
    torso_rot = rotation_y(a["torso_twist"]) @ rotation_x(-a["torso_lean"])
    neck = torso_rot @ np.array([0.0, -bones["torso"], 0.0])
    head = neck + torso_rot @ np.array([0.0, -bones["head"], 0.0])
    half_sh = torso_rot @ np.array([bones["shoulder_width"] / 2, 0.0, 0.0])
    joints = np.zeros((NUM_JOINTS, 3))
    joints[0] = head
    for side, sh_idx, el_idx, wr_idx, prefix in ((-1, 1, 3, 5, "r_"), (1, 2, 4, 6, "l_")):
        shoulder = neck + side * half_sh
        up, low = _limb(a[prefix + "shoulder_flex"], a[prefix + "shoulder_abd"], a[prefix + "elbow"], side)
        up, low = torso_rot @ up, torso_rot @ low
        joints[sh_idx] = shoulder
        joints[el_idx] = shoulder + bones["upper_arm"] * up
        joints[wr_idx] = joints[el_idx] + bones["forearm"] * low
    for side, hip_idx, kn_idx, an_idx, prefix in ((-1, 7, 9, 11, "r_"), (1, 8, 10, 12, "l_")):
        hip = np.array([side * bones["hip_width"] / 2, 0.0, 0.0])
        up, low = _limb(a[prefix + "hip_flex"], a[prefix + "hip_abd"], -a[prefix + "knee"], side)
        joints[hip_idx] = hip
        joints[kn_idx] = hip + bones["thigh"] * up
        joints[an_idx] = joints[kn_idx] + bones["shin"] * low
    return joints


def random_angles(rng: np.random.Generator) -> dict:
    return {
        "torso_lean": rng.uniform(-0.3, 0.6),
        "torso_twist": rng.uniform(-0.6, 0.6),
        "r_shoulder_flex": rng.uniform(-0.8, 2.8),
        "r_shoulder_abd": rng.uniform(0.0, 2.6),
        "r_elbow": rng.uniform(0.0, 2.2),
        "l_shoulder_flex": rng.uniform(-0.8, 2.8),
        "l_shoulder_abd": rng.uniform(0.0, 2.6),
        "l_elbow": rng.uniform(0.0, 2.2),
        "r_hip_flex": rng.uniform(-0.4, 1.6),
        "r_hip_abd": rng.uniform(0.0, 0.6),
        "r_knee": rng.uniform(0.0, 2.0),
        "l_hip_flex": rng.uniform(-0.4, 1.6),
        "l_hip_abd": rng.uniform(0.0, 0.6),
        "l_knee": rng.uniform(0.0, 2.0),
    }


def bundled_pool(count: int = 20, seed: int = 0) -> list:
    """The small self-contained MoCap stand-in: ``count`` centred world-frame skeletons."""
    rng = np.random.default_rng(seed)
    poses = []
    for _ in range(count):
        joints = articulate(random_angles(rng))
        poses.append(Skeleton3D(joints - joints.mean(axis=0)))
    return poses


def _ease(t):
    return 0.5 - 0.5 * np.cos(np.pi * t)


def action_angles(action: str, phase: float) -> tuple[dict, np.ndarray]:
    """Joint angles and a root offset (mm) for an action at ``phase`` in [0, 1]."""
    s = _ease(phase)
    root = np.zeros(3)
    if action == "jumping_jacks":
        w = 0.5 - 0.5 * np.cos(2 * np.pi * phase)
        angles = {"r_shoulder_abd": 0.2 + 2.6 * w, "l_shoulder_abd": 0.2 + 2.6 * w,
                  "r_hip_abd": 0.05 + 0.35 * w, "l_hip_abd": 0.05 + 0.35 * w,
                  "r_elbow": 0.2, "l_elbow": 0.2}
        root[1] = -120 * np.sin(np.pi * w)
    elif action == "squat":
        w = np.sin(np.pi * phase)
        angles = {"r_hip_flex": 1.5 * w, "l_hip_flex": 1.5 * w, "r_knee": 2.2 * w, "l_knee": 2.2 * w,
                  "torso_lean": 0.5 * w, "r_shoulder_flex": 1.5 * w, "l_shoulder_flex": 1.5 * w}
        root[1] = 380 * w
    elif action == "swing":
        angles = {"torso_twist": -1.0 + 2.0 * s, "r_shoulder_flex": 0.8 + 0.8 * s,
                  "r_shoulder_abd": 1.3 - 1.0 * s, "l_shoulder_flex": 0.6, "l_shoulder_abd": 0.4,
                  "r_elbow": 0.4, "l_elbow": 1.2, "r_knee": 0.3, "l_knee": 0.3 * s}
    elif action == "wave":
        angles = {"r_shoulder_abd": 2.3 * s, "r_elbow": 1.2 * s + 0.6 * s * np.sin(6 * np.pi * phase),
                  "l_shoulder_abd": 0.1, "torso_lean": -0.1 * s}
    else:
        raise ValueError(f"unknown action {action!r}")
    return angles, root


ACTIONS = ("jumping_jacks", "squat", "swing", "wave")
