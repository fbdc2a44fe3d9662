"""Rigid poses with unit-quaternion orientations ([w, x, y, z] order)."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

UNIT_TOL = 1e-9


def _as_vec(v, n, name):
    arr = np.asarray(v, dtype=float)
    if arr.shape != (n,):
        raise ValueError(f"{name} must have shape ({n},), got {arr.shape}")
    return arr


def normalize(v: np.ndarray) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    nrm = np.linalg.norm(v)
    if nrm == 0.0:
        raise ValueError("cannot normalize a zero vector")
    return v / nrm


def _rot_from_wxyz(q: np.ndarray) -> Rotation:
    # scipy stores quaternions as [x, y, z, w]
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])


def _wxyz_from_rot(r: Rotation) -> np.ndarray:
    x, y, z, w = r.as_quat()
    q = np.array([w, x, y, z], dtype=float)
    if q[0] < 0.0:  # canonical sign, keeps serialization stable
        q = -q
    return q


@dataclass(frozen=True)
class Pose:
    """Position in meters plus unit quaternion [w, x, y, z]."""

    position: np.ndarray = field(default_factory=lambda: np.zeros(3))
    orientation: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))

    def __post_init__(self):
        p = _as_vec(self.position, 3, "position")
        q = _as_vec(self.orientation, 4, "orientation")
        if abs(np.linalg.norm(q) - 1.0) > 1e-6:
            raise ValueError(f"orientation quaternion not unit norm: {q}")
        q = q / np.linalg.norm(q)
        if q[0] < 0.0:
            q = -q
        p.flags.writeable = False
        q.flags.writeable = False
        object.__setattr__(self, "position", p)
        object.__setattr__(self, "orientation", q)

    @property
    def rotation(self) -> Rotation:
        return _rot_from_wxyz(self.orientation)

    def rotate(self, v: np.ndarray) -> np.ndarray:
        return self.rotation.apply(np.asarray(v, dtype=float))

    def apply(self, points: np.ndarray) -> np.ndarray:
        return self.rotation.apply(np.asarray(points, dtype=float)) + self.position

    def compose(self, other: "Pose") -> "Pose":
        """self * other: other expressed in self's frame, result in the parent frame."""
        r = self.rotation * other.rotation
        return Pose(self.apply(other.position), _wxyz_from_rot(r))

    def inverse(self) -> "Pose":
        r_inv = self.rotation.inv()
        return Pose(-r_inv.apply(self.position), _wxyz_from_rot(r_inv))

    def rotvec(self) -> np.ndarray:
        return self.rotation.as_rotvec()

    def translation_to(self, other: "Pose") -> np.ndarray:
        return other.position - self.position

    def rotation_to(self, other: "Pose") -> np.ndarray:
        """Axis-angle vector taking self's orientation to other's."""
        return (other.rotation * self.rotation.inv()).as_rotvec()

    def distance(self, other: "Pose") -> tuple[float, float]:
        """(translational, angular) distance."""
        return (
            float(np.linalg.norm(self.translation_to(other))),
            float(np.linalg.norm(self.rotation_to(other))),
        )

    def approx_equal(self, other: "Pose", tol: float = 1e-9) -> bool:
        d, a = self.distance(other)
        return d <= tol and a <= tol

    def translated(self, offset: np.ndarray) -> "Pose":
        return Pose(self.position + np.asarray(offset, dtype=float), self.orientation)

    def as_vector(self) -> np.ndarray:
        """6-vector [x, y, z, rx, ry, rz] with axis-angle orientation."""
        return np.concatenate([self.position, self.rotvec()])

    def to_json(self) -> dict:
        return {
            "position": [float(x) for x in self.position],
            "orientation": [float(x) for x in self.orientation],
        }

    @staticmethod
    def from_json(obj: dict) -> "Pose":
        return Pose(np.asarray(obj["position"], dtype=float),
                    np.asarray(obj["orientation"], dtype=float))

    @staticmethod
    def from_rotvec(position, rotvec) -> "Pose":
        r = Rotation.from_rotvec(np.array(rotvec, dtype=float))
        return Pose(np.array(position, dtype=float), _wxyz_from_rot(r))


IDENTITY = Pose()


def pose_step(pose: Pose, linear: np.ndarray, angular: np.ndarray, dt: float) -> Pose:
    """Integrate a world-frame twist over dt (rotation composed on the left)."""
    dr = Rotation.from_rotvec(np.asarray(angular, dtype=float) * dt)
    r = dr * pose.rotation
    return Pose(pose.position + np.asarray(linear, dtype=float) * dt, _wxyz_from_rot(r))


def random_rotation(rng: np.random.Generator) -> Rotation:
    """Uniform random rotation from four normal deviates (deterministic per rng state)."""
    q = rng.normal(size=4)
    q = q / np.linalg.norm(q)
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])
