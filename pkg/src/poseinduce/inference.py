"""Joint hypothesis selection by iterated conditional updates.

Every instance holds a small set of pose hypotheses with unary
log-likelihoods. One hypothesis per instance is selected by coordinate
ascent: visiting instances in id order, each update picks the hypothesis
maximizing

    beta + lambda * log(neighbor_agreement + eps)
         - lambda * log(global_agreement + eps)

where neighbor_agreement counts feature-similar neighbors whose selected
pose is within delta of the candidate, and global_agreement counts the
same over the whole collection. The subtracted global term is a pointwise
mutual information normalization: it cancels the advantage a pose gets
merely from being popular in the dataset. Updates always observe the
latest assignment of every other instance; sweeps repeat until none
changes or a cap is hit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .hypotheses import PoseHypothesis, argmax_init
from .rotations import EulerPose, rotation_to_euler
from .similarity import NeighborGraph


@dataclass(frozen=True)
class InferenceConfig:
    """Knobs for joint selection.

    lam weights the consistency term; delta is the agreement radius in
    radians; smoothing is added to both agreement counts before the log
    (keeping the numerator <= denominator ordering); pmi_normalize turns
    the global-agreement subtraction off to expose the popularity-biased
    variant; unary_confidence ranks confidence by beta alone instead of
    the full converged score.
    """

    lam: float = 1.0
    delta: float = math.pi / 6
    max_sweeps: int = 50
    smoothing: float = 1.0
    pmi_normalize: bool = True
    unary_confidence: bool = False

    def __post_init__(self) -> None:
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if not 0 < self.delta <= math.pi:
            raise ValueError("delta must be in (0, pi]")
        if self.max_sweeps < 1:
            raise ValueError("max_sweeps must be >= 1")
        if self.smoothing <= 0:
            raise ValueError("smoothing must be > 0")


@dataclass
class Assignment:
    """Selected hypothesis index per instance, plus per-instance confidence."""

    z: np.ndarray
    confidence: np.ndarray | None = None

    def copy(self) -> "Assignment":
        return Assignment(
            z=self.z.copy(),
            confidence=None if self.confidence is None else self.confidence.copy(),
        )


@dataclass(frozen=True)
class InducedPose:
    """Final selection for one instance."""

    instance_id: str
    rotation: np.ndarray
    euler: EulerPose
    confidence: float
    z_index: int


@dataclass(frozen=True)
class InductionResult:
    poses: list[InducedPose]
    sweeps: int
    converged: bool
    assignment: Assignment = field(repr=False)


class _Stacked:
    """Hypothesis sets padded into arrays for vectorized scoring."""

    def __init__(self, hypothesis_sets: Sequence[Sequence[PoseHypothesis]]):
        if len(hypothesis_sets) == 0:
            raise ValueError("dataset is empty")
        self.n = len(hypothesis_sets)
        self.k_of = np.array([len(h) for h in hypothesis_sets], dtype=int)
        if np.any(self.k_of < 1):
            raise ValueError("every instance needs at least one hypothesis")
        kmax = int(self.k_of.max())
        self.rot = np.zeros((self.n, kmax, 3, 3))
        self.beta = np.full((self.n, kmax), -np.inf)
        for i, hyps in enumerate(hypothesis_sets):
            for k, h in enumerate(hyps):
                self.rot[i, k] = h.rotation
                self.beta[i, k] = h.beta

    def selected_rotations(self, z: np.ndarray) -> np.ndarray:
        return self.rot[np.arange(self.n), z]


def _cos_threshold(delta: float) -> float:
    return math.cos(delta)


def _candidate_scores(
    i: int,
    stacked: _Stacked,
    selected_rot: np.ndarray,
    graph: NeighborGraph,
    cfg: InferenceConfig,
) -> np.ndarray:
    """Conditional score of every hypothesis of instance i given the
    current selections of all other instances."""
    ki = stacked.k_of[i]
    cand = stacked.rot[i, :ki]
    # trace(R_ik^T R_jzj) via elementwise products; agreement <=> cos > cos(delta)
    traces = np.einsum("kab,nab->kn", cand, selected_rot)
    agree = (traces - 1.0) / 2.0 > _cos_threshold(cfg.delta)
    agree[:, i] = False  # the instance itself never votes
    neighbor_counts = agree[:, graph.neighbor_ids[i]].sum(axis=1)
    scores = stacked.beta[i, :ki] + cfg.lam * np.log(neighbor_counts + cfg.smoothing)
    if cfg.pmi_normalize:
        global_counts = agree.sum(axis=1)
        scores -= cfg.lam * np.log(global_counts + cfg.smoothing)
    return scores


def consistency_counts(
    i: int,
    k: int,
    assignment: Assignment,
    graph: NeighborGraph,
    hypothesis_sets: Sequence[Sequence[PoseHypothesis]],
    delta: float,
) -> tuple[int, int]:
    """Agreement counts for hypothesis k of instance i.

    Returns (neighbors within delta, all other instances within delta),
    both measured against the currently selected hypotheses and both
    excluding instance i itself.
    """
    n = len(hypothesis_sets)
    if not 0 <= i < n:
        raise ValueError("instance index out of range")
    if not 0 <= k < len(hypothesis_sets[i]):
        raise ValueError("hypothesis index out of range")
    stacked = _Stacked(hypothesis_sets)
    selected = stacked.selected_rotations(assignment.z)
    traces = np.einsum("ab,nab->n", hypothesis_sets[i][k].rotation, selected)
    agree = (traces - 1.0) / 2.0 > _cos_threshold(delta)
    agree[i] = False
    return int(agree[graph.neighbor_ids[i]].sum()), int(agree.sum())


def local_score(
    i: int,
    k: int,
    assignment: Assignment,
    graph: NeighborGraph,
    hypothesis_sets: Sequence[Sequence[PoseHypothesis]],
    cfg: InferenceConfig,
) -> float:
    """beta_ik plus the weighted consistency terms, conditioned on the
    current selections of every other instance."""
    c_n, c_g = consistency_counts(i, k, assignment, graph, hypothesis_sets, cfg.delta)
    score = hypothesis_sets[i][k].beta + cfg.lam * math.log(c_n + cfg.smoothing)
    if cfg.pmi_normalize:
        score -= cfg.lam * math.log(c_g + cfg.smoothing)
    return score


def icm_sweep(
    assignment: Assignment,
    graph: NeighborGraph,
    hypothesis_sets: Sequence[Sequence[PoseHypothesis]],
    cfg: InferenceConfig,
    on_update: Callable[[int, int, int, float, float], None] | None = None,
) -> tuple[Assignment, int]:
    """One pass of conditional updates in ascending instance id order.

    Each update re-selects z_i as the argmax of the conditional score
    (ties to the lowest index) against the *latest* assignment of all
    other instances. Returns the new assignment and how many z_i changed.
    on_update, if given, receives (i, old_z, new_z, old_score, new_score)
    for every instance visited.
    """
    stacked = _Stacked(hypothesis_sets)
    return _sweep_impl(assignment, graph, stacked, cfg, on_update)


def _sweep_impl(
    assignment: Assignment,
    graph: NeighborGraph,
    stacked: _Stacked,
    cfg: InferenceConfig,
    on_update: Callable[[int, int, int, float, float], None] | None = None,
) -> tuple[Assignment, int]:
    z = assignment.z.copy()
    selected = stacked.selected_rotations(z)
    changed = 0
    for i in range(stacked.n):
        scores = _candidate_scores(i, stacked, selected, graph, cfg)
        new_z = int(np.argmax(scores))  # first max wins ties
        old_z = int(z[i])
        # argmax can only improve the conditional score; guards NaN creep
        assert scores[new_z] >= scores[old_z]
        if on_update is not None:
            on_update(i, old_z, new_z, float(scores[old_z]), float(scores[new_z]))
        if new_z != old_z:
            z[i] = new_z
            selected[i] = stacked.rot[i, new_z]
            changed += 1
    return Assignment(z=z), changed


def run_induction(
    hypothesis_sets: Sequence[Sequence[PoseHypothesis]],
    graph: NeighborGraph,
    cfg: InferenceConfig = InferenceConfig(),
    instance_ids: Sequence[str] | None = None,
    on_update: Callable[[int, int, int, float, float], None] | None = None,
) -> InductionResult:
    """Initialize every instance at its unary argmax, sweep until a full
    pass changes nothing or max_sweeps is reached, then attach per-instance
    confidences (converged conditional score, or raw beta when
    cfg.unary_confidence is set)."""
    n = len(hypothesis_sets)
    if n == 0:
        raise ValueError("dataset is empty")
    if graph.n_instances != n:
        raise ValueError("neighbor graph size does not match hypothesis sets")
    if instance_ids is None:
        instance_ids = [str(i) for i in range(n)]
    elif len(instance_ids) != n:
        raise ValueError("instance_ids length does not match hypothesis sets")

    stacked = _Stacked(hypothesis_sets)
    z = np.array([argmax_init(h) for h in hypothesis_sets], dtype=int)
    assignment = Assignment(z=z)

    sweeps = 0
    converged = False
    while sweeps < cfg.max_sweeps:
        assignment, changed = _sweep_impl(assignment, graph, stacked, cfg, on_update)
        sweeps += 1
        if changed == 0:
            converged = True
            break

    selected = stacked.selected_rotations(assignment.z)
    confidence = np.empty(n)
    for i in range(n):
        if cfg.unary_confidence:
            confidence[i] = stacked.beta[i, assignment.z[i]]
        else:
            scores = _candidate_scores(i, stacked, selected, graph, cfg)
            confidence[i] = scores[assignment.z[i]]
    assignment = replace(assignment, confidence=confidence)

    poses = []
    for i in range(n):
        rot = stacked.rot[i, assignment.z[i]]
        poses.append(
            InducedPose(
                instance_id=str(instance_ids[i]),
                rotation=rot,
                euler=rotation_to_euler(rot),
                confidence=float(confidence[i]),
                z_index=int(assignment.z[i]),
            )
        )
    return InductionResult(poses=poses, sweeps=sweeps, converged=converged, assignment=assignment)


def select_confident(poses: Sequence[InducedPose], fraction: float) -> list[InducedPose]:
    """Top ceil(fraction * n) poses by confidence, ties to the lower
    instance position in the input list."""
    if not poses:
        raise ValueError("pose list is empty")
    if not 0 < fraction <= 1:
        raise ValueError("fraction must lie in (0, 1]")
    count = math.ceil(fraction * len(poses))
    order = sorted(range(len(poses)), key=lambda i: (-poses[i].confidence, i))
    return [poses[i] for i in order[:count]]
