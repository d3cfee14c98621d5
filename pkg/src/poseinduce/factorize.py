"""Viewpoint recovery from 2D keypoint annotations.

Orthographic rigid factorization with missing-data alternation: stack
all instances' centered keypoint observations into a 2n x P matrix,
factor it at rank 3, upgrade the affine solution to a metric one, read
off per-instance rotation/scale/translation, re-fill occluded entries
from the model, and repeat. A second step rotates the recovered shape
into a canonical frame where the object's lateral symmetry plane is
x = 0 and the object's right side points toward +x.

The orthographic mirror ambiguity -- (S, R_i) and (J S, D R_i J) with
J = D = diag(1, 1, -1) project identically -- cannot be resolved from
2D data; consumers comparing against external ground truth must align
up to that mirror.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .rotations import validate_rotation

DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITERS = 100
MIN_VISIBLE_KEYPOINTS = 4

MIRROR_J = np.diag([1.0, 1.0, -1.0])
MIRROR_D = np.diag([1.0, 1.0, -1.0])


class DegenerateInputError(ValueError):
    """Measurements do not constrain a 3D model (e.g. a single shared
    viewpoint makes the stacked observation matrix rank-deficient)."""


@dataclass(frozen=True)
class KeypointTable:
    """Keypoint observations for n instances of one category.

    uv holds pixel coordinates with shape (n, P, 2); visible flags which
    entries are trustworthy. pairs optionally names (left, right)
    keypoint index pairs related by the object's lateral symmetry.
    """

    uv: np.ndarray
    visible: np.ndarray
    ids: tuple[str, ...] | None = None
    pairs: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        uv = np.asarray(self.uv, dtype=float)
        visible = np.asarray(self.visible, dtype=bool)
        if uv.ndim != 3 or uv.shape[2] != 2:
            raise ValueError("uv must have shape (n, P, 2)")
        if visible.shape != uv.shape[:2]:
            raise ValueError("visible must have shape (n, P)")
        if not np.all(np.isfinite(uv[visible])):
            raise ValueError("visible keypoints must be finite")
        if self.ids is not None and len(self.ids) != uv.shape[0]:
            raise ValueError("ids length must match instance count")
        for left, right in self.pairs:
            if not (0 <= left < uv.shape[1] and 0 <= right < uv.shape[1]):
                raise ValueError("pair index out of range")
            if left == right:
                raise ValueError("a keypoint cannot pair with itself")
        object.__setattr__(self, "uv", uv)
        object.__setattr__(self, "visible", visible)

    @property
    def n_instances(self) -> int:
        return self.uv.shape[0]

    @property
    def n_keypoints(self) -> int:
        return self.uv.shape[1]


@dataclass(frozen=True)
class RigidModel:
    """A mean 3D shape and per-instance orthographic camera parameters.

    shape: (3, P) with column centroid at the origin; rotations (n,3,3);
    scales (n,) positive; translations (n, 2) pixels. instance_indices
    maps model rows back to rows of the input table (instances with too
    few visible keypoints are dropped).
    """

    shape: np.ndarray
    rotations: np.ndarray
    scales: np.ndarray
    translations: np.ndarray
    instance_indices: tuple[int, ...]
    # RMS of (metric reprojection - observation) over visible entries
    residual: float
    # rank-3 factorization RMS per alternation iteration; non-increasing
    residual_history: tuple[float, ...]
    converged: bool

    @property
    def n_instances(self) -> int:
        return self.rotations.shape[0]


def reproject(model: RigidModel, i: int) -> np.ndarray:
    """Predicted (2, P) image coordinates of model instance i."""
    proj = model.rotations[i][:2] @ model.shape
    return model.scales[i] * proj + model.translations[i][:, None]


def reprojection_residual(model: RigidModel, table: KeypointTable) -> float:
    """RMS over visible coordinate entries of (prediction - observation)."""
    sq_sum = 0.0
    count = 0
    for row, orig in enumerate(model.instance_indices):
        pred = reproject(model, row)
        vis = table.visible[orig]
        diff = pred[:, vis] - table.uv[orig, vis, :].T
        sq_sum += float(np.sum(diff**2))
        count += 2 * int(vis.sum())
    if count == 0:
        raise ValueError("no visible entries to evaluate")
    return float(np.sqrt(sq_sum / count))


def _project_to_rotation(a: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(a)
    r = u @ vt
    if np.linalg.det(r) < 0:
        r = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    return r


def _symmetric_from_vec(q: np.ndarray) -> np.ndarray:
    q11, q12, q13, q22, q23, q33 = q
    return np.array([[q11, q12, q13], [q12, q22, q23], [q13, q23, q33]])


def _constraint_row(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Coefficients of x^T Q y in the 6-vector parameterization of
    symmetric Q (order q11,q12,q13,q22,q23,q33)."""
    return np.array(
        [
            x[0] * y[0],
            x[0] * y[1] + x[1] * y[0],
            x[0] * y[2] + x[2] * y[0],
            x[1] * y[1],
            x[1] * y[2] + x[2] * y[1],
            x[2] * y[2],
        ]
    )


def _metric_upgrade(m: np.ndarray) -> np.ndarray:
    """Corrective transform G for the affine motion matrix m (2n x 3).

    Least-squares solve for the Gram matrix Q = G G^T demanding each
    instance's projection rows be equal-norm and orthogonal; one extra
    inhomogeneous equation anchors the mean squared row norm at 1,
    which both fixes the free global scale and steers the solver toward
    the positive-definite solution. G comes out of Q's
    eigendecomposition.
    """
    n = m.shape[0] // 2
    rows = []
    rhs = []
    anchor = np.zeros(6)
    for i in range(n):
        x, y = m[2 * i], m[2 * i + 1]
        rows.append(_constraint_row(x, x) - _constraint_row(y, y))
        rhs.append(0.0)
        rows.append(_constraint_row(x, y))
        rhs.append(0.0)
        anchor += _constraint_row(x, x) + _constraint_row(y, y)
    rows.append(anchor / (2 * n))
    rhs.append(1.0)
    a = np.stack(rows)
    q_vec, _, rank, _ = np.linalg.lstsq(a, np.array(rhs), rcond=None)
    if rank < 6:
        raise DegenerateInputError(
            "metric upgrade underdetermined: too few independent viewpoints"
        )
    q = _symmetric_from_vec(q_vec)
    eigvals, eigvecs = np.linalg.eigh(q)
    top = eigvals[-1]
    if top <= 0:
        raise DegenerateInputError("metric upgrade failed: Gram matrix has no positive part")
    eigvals = np.maximum(eigvals, top * 1e-8)
    if np.linalg.det(eigvecs) < 0:
        eigvecs = eigvecs * np.array([1.0, 1.0, -1.0])
    return eigvecs @ np.diag(np.sqrt(eigvals))


def _motion_to_cameras(m: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Per-instance rotations and scales from the metric motion matrix."""
    n = m.shape[0] // 2
    rotations = np.empty((n, 3, 3))
    scales = np.empty(n)
    frames = np.empty((n, 3, 3))
    for i in range(n):
        x, y = m[2 * i], m[2 * i + 1]
        c = 0.5 * (np.linalg.norm(x) + np.linalg.norm(y))
        if c <= 0:
            raise DegenerateInputError("zero-scale instance in motion matrix")
        scales[i] = c
        frames[i] = np.stack([x / c, y / c, np.cross(x, y) / c**2])
    # reflection rule: flip if most frames are left-handed before
    # projection (cross-product completion keeps determinants positive,
    # so this is a safeguard rather than a decision point)
    dets = np.linalg.det(frames)
    if np.sum(dets < 0) > n / 2:
        frames[:, 2, :] *= -1.0
    for i in range(n):
        rotations[i] = _project_to_rotation(frames[i])
    return rotations, scales


def rigid_factorize(
    table: KeypointTable,
    max_iters: int = DEFAULT_MAX_ITERS,
    tol: float = DEFAULT_TOL,
) -> RigidModel:
    """Fit a rigid orthographic model to a keypoint table.

    Instances with fewer than MIN_VISIBLE_KEYPOINTS visible keypoints
    are excluded. Missing entries start at per-keypoint visible means
    and are re-estimated from the model each iteration; iteration stops
    when the visible-entry reprojection RMS changes by less than tol.
    """
    if max_iters < 1:
        raise ValueError("max_iters must be >= 1")
    if tol < 0:
        raise ValueError("tol must be >= 0")
    kept = tuple(
        int(i)
        for i in range(table.n_instances)
        if int(table.visible[i].sum()) >= MIN_VISIBLE_KEYPOINTS
    )
    if len(kept) < 2:
        raise DegenerateInputError(
            "need at least 2 instances with "
            f"{MIN_VISIBLE_KEYPOINTS}+ visible keypoints, got {len(kept)}"
        )
    n = len(kept)
    p = table.n_keypoints

    obs = np.empty((2 * n, p))
    vis = np.empty((2 * n, p), dtype=bool)
    for row, orig in enumerate(kept):
        obs[2 * row] = table.uv[orig, :, 0]
        obs[2 * row + 1] = table.uv[orig, :, 1]
        vis[2 * row] = vis[2 * row + 1] = table.visible[orig]

    # initial fill: per-keypoint means over instances that see it
    work = obs.copy()
    for j in range(p):
        for parity in (0, 1):
            col_rows = np.arange(parity, 2 * n, 2)
            seen = vis[col_rows, j]
            if seen.any():
                fill = float(np.mean(obs[col_rows[seen], j]))
            else:
                fill = float(np.mean(obs[vis]))
            work[col_rows[~seen], j] = fill

    history: list[float] = []
    prev_rms = np.inf
    converged = False
    shape = rotations = scales = translations = None
    for _ in range(max_iters):
        translations_flat = work.mean(axis=1)
        centered = work - translations_flat[:, None]
        u, s, vt = np.linalg.svd(centered, full_matrices=False)
        if s[2] < 1e-9 * s[0]:
            raise DegenerateInputError(
                "observations are rank-deficient (all instances share one "
                "viewpoint, or the shape is degenerate)"
            )
        motion_affine = u[:, :3] * s[:3]
        shape_affine = vt[:3]
        g = _metric_upgrade(motion_affine)
        motion = motion_affine @ g
        shape = np.linalg.solve(g, shape_affine)
        rotations, scales = _motion_to_cameras(motion)
        translations = translations_flat.reshape(n, 2)

        # the alternation minimizes the rank-3 fit on visible entries;
        # that residual is non-increasing by the EM argument and drives
        # the stopping rule. The refill uses the same rank-3 product
        # (identical to M G G^-1 S but immune to the conditioning of G).
        fill = motion_affine @ shape_affine + translations_flat[:, None]
        rms = float(np.sqrt(np.mean((fill[vis] - obs[vis]) ** 2)))
        history.append(rms)
        work = obs.copy()
        work[~vis] = fill[~vis]
        if abs(prev_rms - rms) < tol:
            converged = True
            break
        prev_rms = rms

    for r in rotations:
        validate_rotation(r, tol=1e-6)

    pred = np.empty_like(obs)
    for i in range(n):
        proj = scales[i] * (rotations[i][:2] @ shape)
        pred[2 * i] = proj[0] + translations[i, 0]
        pred[2 * i + 1] = proj[1] + translations[i, 1]
    residual = float(np.sqrt(np.mean((pred[vis] - obs[vis]) ** 2)))

    return RigidModel(
        shape=shape,
        rotations=rotations,
        scales=scales,
        translations=translations,
        instance_indices=kept,
        residual=residual,
        residual_history=tuple(history),
        converged=converged,
    )


def asymmetry_energy(shape: np.ndarray, pairs: Sequence[tuple[int, int]], normal: np.ndarray) -> float:
    """Sum over pairs of squared distance between the left keypoint and
    the right keypoint reflected through the plane with the given unit
    normal (through the origin)."""
    total = 0.0
    for left, right in pairs:
        s_l = shape[:, left]
        s_r = shape[:, right]
        reflected = s_r - 2.0 * float(normal @ s_r) * normal
        total += float(np.sum((s_l - reflected) ** 2))
    return total


def _rotation_between(v: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Minimal rotation carrying unit vector v onto unit vector w."""
    axis = np.cross(v, w)
    s = np.linalg.norm(axis)
    c = float(v @ w)
    if s < 1e-12:
        if c > 0:
            return np.eye(3)
        # antiparallel: half turn about any axis orthogonal to v
        helper = np.array([0.0, 0.0, 1.0]) if abs(v[2]) < 0.9 else np.array([0.0, 1.0, 0.0])
        axis = np.cross(v, helper)
        axis /= np.linalg.norm(axis)
        k = np.array(
            [[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]]
        )
        return np.eye(3) + 2.0 * (k @ k)
    k = np.array([[0, -axis[2], axis[1]], [axis[2], 0, -axis[0]], [-axis[1], axis[0], 0]])
    return np.eye(3) + k + k @ k * ((1.0 - c) / (s * s))


def canonical_align(model: RigidModel, pairs: Sequence[tuple[int, int]]) -> RigidModel:
    """Rotate the model's gauge so the lateral symmetry plane is x = 0
    and left-to-right points toward +x.

    The symmetry-plane normal minimizes the quadratic asymmetry energy
    n^T A n over unit normals (A assembled from the pairs), so the
    optimum is the smallest eigenvector -- no orientation sampling
    needed. Applies shape <- Q shape, R_i <- R_i Q^T: reprojections are
    untouched.
    """
    if len(pairs) < 2:
        raise ValueError("need at least 2 left/right pairs")
    p = model.shape.shape[1]
    for left, right in pairs:
        if not (0 <= left < p and 0 <= right < p):
            raise ValueError("pair index out of range")

    a = np.zeros((3, 3))
    rightward = np.zeros(3)
    for left, right in pairs:
        s_l = model.shape[:, left]
        s_r = model.shape[:, right]
        d = s_l - s_r
        a += 2.0 * (np.outer(s_r, d) + np.outer(d, s_r)) + 4.0 * np.outer(s_r, s_r)
        rightward += s_r - s_l
    _, eigvecs = np.linalg.eigh(a)
    normal = eigvecs[:, 0]
    sign = float(rightward @ normal)
    if sign < 0 or (sign == 0 and normal[0] < 0):
        normal = -normal

    q = _rotation_between(normal, np.array([1.0, 0.0, 0.0]))
    new_shape = q @ model.shape
    new_rotations = np.einsum("nij,kj->nik", model.rotations, q)
    return replace(model, shape=new_shape, rotations=new_rotations)
