"""Relation operators: block Givens stages and hyperbolic rotations.

A relation acts on ambient points through three O(d) stages,

    f(x) = U_theta( H_mu( V_phi(x) ) ),

where ``U`` and ``V`` are block-diagonal 2x2 Givens transforms over
consecutive coordinate pairs (rotations preserve orientation, reflections
flip it and are involutions) and ``H`` couples space coordinate ``i`` with
time coordinate ``p + i`` through a cosh/sinh shear.  All three stages
preserve the signature scalar product, so they map the pseudo-hyperboloid to
itself.  The operator family comes in three flavours: the default uses a
rotation stage for ``U`` and a reflection stage for ``V``; the ablation
variants use rotations or reflections for both stages.

Dense d x d realisations are only materialised for verification
(:func:`as_dense`, :func:`j_orth_defect`, :func:`lorentz_boost`); the apply
path touches O(d) elements per point, which :func:`count_operations` can
measure.
"""

from __future__ import annotations

import threading
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import value_of
from .errors import ConfigurationError, DimensionError
from .geometry import Signature

ROTATION = "rotation"
REFLECTION = "reflection"

#: operator flavour -> (U-stage mode, V-stage mode)
OPERATOR_MODES = {
    "rotref": (ROTATION, REFLECTION),
    "rot": (ROTATION, ROTATION),
    "ref": (REFLECTION, REFLECTION),
}


# --- element-operation accounting -------------------------------------------

_counting = threading.local()


class OperationCounter:
    """Tally of array elements written by the apply-path primitives."""

    def __init__(self):
        self.elements = 0


@contextmanager
def count_operations():
    """Context manager measuring elements touched by apply-path calls."""
    counter = OperationCounter()
    _counting.counter = counter
    try:
        yield counter
    finally:
        _counting.counter = None


def _count(n: int) -> None:
    counter = getattr(_counting, "counter", None)
    if counter is not None:
        counter.elements += int(n)


# --- parameters ---------------------------------------------------------------


@dataclass
class RelationParams:
    """Angles and boosts of one relation operator.

    ``theta`` and ``phi`` each hold (p+q)/2 Givens angles (for the U and V
    stages respectively); ``mu`` holds the q hyperbolic rotation magnitudes.
    Total parameter count is therefore d + q.
    """

    theta: np.ndarray
    phi: np.ndarray
    mu: np.ndarray

    def __post_init__(self):
        self.theta = np.asarray(self.theta, dtype=np.float64)
        self.phi = np.asarray(self.phi, dtype=np.float64)
        self.mu = np.asarray(self.mu, dtype=np.float64)
        for name, arr in (("theta", self.theta), ("phi", self.phi), ("mu", self.mu)):
            if arr.ndim != 1:
                raise DimensionError(f"RelationParams.{name} must be 1-d")
            if not np.all(np.isfinite(arr)):
                raise ConfigurationError(f"RelationParams.{name} must be finite")

    @property
    def n_params(self) -> int:
        return self.theta.size + self.phi.size + self.mu.size

    def validate(self, sig: Signature) -> None:
        half = sig.d // 2
        if self.theta.size != half or self.phi.size != half:
            raise DimensionError(
                f"expected {half} Givens angles per stage for signature "
                f"({sig.p},{sig.q}), got {self.theta.size}/{self.phi.size}"
            )
        if self.mu.size != sig.q:
            raise DimensionError(
                f"expected {sig.q} boost magnitudes, got {self.mu.size}"
            )

    @classmethod
    def random(cls, sig: Signature, rng: np.random.Generator, mu_scale: float = 1.0):
        """Angles uniform on (-pi, pi), boosts normal with scale ``mu_scale``."""
        half = sig.d // 2
        return cls(
            theta=rng.uniform(-np.pi, np.pi, half),
            phi=rng.uniform(-np.pi, np.pi, half),
            mu=rng.normal(0.0, mu_scale, sig.q),
        )


def relation_param_count(sig: Signature) -> int:
    """Parameters per relation: (p+q)/2 + (p+q)/2 + q = d + q."""
    return sig.d + sig.q


# --- the three stages ----------------------------------------------------------


def givens_apply(angles, v, mode: str):
    """Apply 2x2 Givens blocks over consecutive pairs of ``v``.

    Rotation blocks map a pair (a, b) to
    ``(a cos t - b sin t, a sin t + b cos t)``; reflection blocks to
    ``(a cos t + b sin t, a sin t - b cos t)``.  ``angles`` may carry batch
    axes matching ``v``'s.
    """
    if mode not in (ROTATION, REFLECTION):
        raise ConfigurationError(f"unknown Givens mode {mode!r}")
    vshape = value_of(v).shape
    if vshape[-1] % 2:
        raise DimensionError("givens_apply: vector length must be even")
    m = vshape[-1] // 2
    ashape = value_of(angles).shape
    if ashape[-1] != m:
        raise DimensionError(
            f"givens_apply: expected {m} angles for length {vshape[-1]}, got {ashape[-1]}"
        )
    pairs = ad.reshape(v, vshape[:-1] + (m, 2))
    a = pairs[..., 0]
    b = pairs[..., 1]
    c = ad.cos(angles)
    s = ad.sin(angles)
    if mode == ROTATION:
        a2 = c * a - s * b
        b2 = s * a + c * b
    else:
        a2 = c * a + s * b
        b2 = s * a - c * b
    _count(2 * value_of(c).size + 2 * value_of(a2).size + value_of(v).size)
    return ad.reshape(ad.stack_last(a2, b2), vshape)


def block_orthogonal_apply(angles, x, sig: Signature, mode: str):
    """Apply the block Givens stage to full ambient points.

    Requires ``p`` and ``q`` even; because pairing is consecutive and ``p`` is
    even, the space and time blocks are handled in one pass — the first p/2
    angles act on space pairs and the remaining q/2 on time pairs.
    """
    if sig.p % 2 or sig.q % 2:
        raise ConfigurationError(
            f"Givens stages need even p and q, got ({sig.p},{sig.q})"
        )
    if value_of(x).shape[-1] != sig.d:
        raise DimensionError(
            f"block_orthogonal_apply: expected points of dimension {sig.d}"
        )
    return givens_apply(angles, x, mode)


def hyper_rot_apply(mu, x, sig: Signature):
    """Hyperbolic rotation: shear space dim ``i`` with time dim ``p + i``.

    Each coupled pair transforms by ``[[cosh m, sinh m], [sinh m, cosh m]]``;
    space dims beyond ``q`` pass through unchanged.
    """
    if value_of(x).shape[-1] != sig.d:
        raise DimensionError(f"hyper_rot_apply: expected points of dimension {sig.d}")
    if value_of(mu).shape[-1] != sig.q:
        raise DimensionError(f"hyper_rot_apply: expected {sig.q} boost magnitudes")
    a = x[..., : sig.q]
    mid = x[..., sig.q : sig.p]
    t = x[..., sig.p :]
    ch = ad.cosh(mu)
    sh = ad.sinh(mu)
    a2 = ch * a + sh * t
    t2 = sh * a + ch * t
    _count(2 * value_of(ch).size + 2 * value_of(a2).size + value_of(x).size)
    return ad.concat([a2, mid, t2], axis=-1)


def relation_transform(theta, phi, mu, x, sig: Signature, operator: str = "rotref"):
    """Apply ``U_theta . H_mu . V_phi`` to points, in O(d) per point.

    ``theta``, ``phi`` and ``mu`` are raw parameter arrays (possibly batched
    per point row); ``operator`` selects the stage modes.
    """
    if operator not in OPERATOR_MODES:
        raise ConfigurationError(f"unknown operator flavour {operator!r}")
    u_mode, v_mode = OPERATOR_MODES[operator]
    y = block_orthogonal_apply(phi, x, sig, v_mode)
    y = hyper_rot_apply(mu, y, sig)
    return block_orthogonal_apply(theta, y, sig, u_mode)


def relation_apply(r: RelationParams, x, sig: Signature, operator: str = "rotref"):
    """Apply one relation's operator to points (see :func:`relation_transform`)."""
    r.validate(sig)
    return relation_transform(r.theta, r.phi, r.mu, x, sig, operator)


# --- dense verification helpers -------------------------------------------------


def as_dense(r: RelationParams, sig: Signature, operator: str = "rotref") -> np.ndarray:
    """Materialise the d x d matrix of a relation operator.

    Column ``i`` is the image of basis vector ``e_i``; this is O(d^2) and
    intended for verification only.
    """
    basis = np.eye(sig.d)
    return np.asarray(relation_apply(r, basis, sig, operator)).T


def signature_matrix(sig: Signature) -> np.ndarray:
    """Diagonal metric matrix J = diag(I_p, -I_q)."""
    return np.diag(np.concatenate([np.ones(sig.p), -np.ones(sig.q)]))


def j_orth_defect(matrix: np.ndarray, sig: Signature) -> float:
    """Max-norm deviation of ``M^T J M`` from ``J``."""
    m = np.asarray(matrix, dtype=np.float64)
    if m.shape != (sig.d, sig.d):
        raise DimensionError(f"j_orth_defect: expected a {sig.d}x{sig.d} matrix")
    j = signature_matrix(sig)
    return float(np.max(np.abs(m.T @ j @ m - j)))


def lorentz_boost(b: np.ndarray, sig: Signature | None = None) -> np.ndarray:
    """Dense boost matrix for the one-time-dimension (q = 1) case.

    Returns ``[[sqrt(I + b b^T), b], [b^T, sqrt(1 + |b|^2)]]`` where the
    matrix square root has the closed form ``I + c b b^T`` with
    ``c = (sqrt(1 + |b|^2) - 1) / |b|^2``.
    """
    b = np.asarray(b, dtype=np.float64)
    if b.ndim != 1 or b.size == 0:
        raise DimensionError("lorentz_boost: b must be a nonempty vector")
    if sig is not None:
        if sig.q != 1:
            raise ConfigurationError("lorentz_boost requires signature with q = 1")
        if sig.p != b.size:
            raise DimensionError(
                f"lorentz_boost: expected b of length {sig.p}, got {b.size}"
            )
    p = b.size
    nsq = float(b @ b)
    gamma = np.sqrt(1.0 + nsq)
    if nsq == 0.0:
        top = np.eye(p)
    else:
        top = np.eye(p) + ((gamma - 1.0) / nsq) * np.outer(b, b)
    out = np.empty((p + 1, p + 1))
    out[:p, :p] = top
    out[:p, p] = b
    out[p, :p] = b
    out[p, p] = gamma
    return out
