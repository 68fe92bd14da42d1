"""Independent reference calculations used by the tests.

Nothing here imports the package kernel: rotations are composed as unit
quaternions, written out from scratch.
"""

import math

import numpy as np


def axis_angle_quat(axis, angle):
    n = np.asarray(axis, dtype=float)
    n = n / np.linalg.norm(n)
    h = 0.5 * angle
    return np.array([math.cos(h), *(math.sin(h) * n)])


def quat_mul(p, q):
    w1, x1, y1, z1 = p
    w2, x2, y2, z2 = q
    return np.array([
        w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
        w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
        w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
        w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
    ])


def quat_rotate(q, v):
    """Active right-handed rotation of vector ``v`` by unit quaternion ``q``."""
    qv = np.array([0.0, *v])
    conj = q * np.array([1.0, -1.0, -1.0, -1.0])
    return quat_mul(quat_mul(q, qv), conj)[1:]


def quat_to_matrix(q):
    return np.column_stack([quat_rotate(q, e) for e in np.eye(3)])


def step_quat(amplitude_hz, dwell_s, theta, nu):
    omega = math.hypot(amplitude_hz, nu)
    axis = (amplitude_hz * math.cos(theta), amplitude_hz * math.sin(theta), nu)
    return axis_angle_quat(axis, 2 * math.pi * omega * dwell_s)


def sequence_quat(amplitude_hz, dwell_s, phases, nu):
    """Quaternion of a whole phase list at offset ``nu`` (first phase applied first)."""
    q = np.array([1.0, 0.0, 0.0, 0.0])
    for theta in phases:
        q = quat_mul(step_quat(amplitude_hz, dwell_s, theta, nu), q)
    return q


def great_circle_steps(flip_deg, epsilon):
    """Steps for an on-resonance spin, pushed straight down, to reach z <= -(1 - epsilon)."""
    return math.ceil(math.degrees(math.acos(-(1.0 - epsilon))) / flip_deg)
