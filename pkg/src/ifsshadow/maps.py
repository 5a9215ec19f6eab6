"""Evaluable smooth maps with optional inverses and Jacobians.

A SmoothMap bundles a raw forward formula with the space it acts on.  The
forward/inverse/Jacobian callables all take arrays of shape ``(..., d)`` and
are vectorized over leading axes; outputs of ``__call__`` and ``invert`` are
normalized into the fundamental domain.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np

from .space import Space, _as_points


class InversionError(RuntimeError):
    """Newton inversion failed to converge; carries the best iterate found."""

    def __init__(self, msg, best=None, residual=None):
        super().__init__(msg)
        self.best = best
        self.residual = residual


@dataclass(frozen=True)
class SmoothMap:
    label: str
    space: Space
    fwd: Callable[[np.ndarray], np.ndarray]
    inv: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None
    # integer matrix when the map is a linear toral automorphism x -> A x
    matrix: Optional[np.ndarray] = None

    def __call__(self, x) -> np.ndarray:
        x = _as_points(self.space, x)
        return self.space.normalize(np.asarray(self.fwd(x), dtype=float))

    def invert(self, p, tol: float = 1e-12, max_iter: int = 50) -> np.ndarray:
        """Point q with f(q) = p, via the closed form or Newton's method."""
        p = _as_points(self.space, p)
        if self.inv is not None:
            return self.space.normalize(np.asarray(self.inv(p), dtype=float))
        if self.jac is None:
            raise InversionError(f"map {self.label!r} has no inverse and no Jacobian")
        return _newton_invert(self, p, tol, max_iter)

    def jacobian(self, x) -> np.ndarray:
        if self.jac is None:
            raise ValueError(f"map {self.label!r} carries no Jacobian")
        x = _as_points(self.space, x)
        return np.asarray(self.jac(x), dtype=float)

    @property
    def invertible(self) -> bool:
        return self.inv is not None or self.jac is not None


def _newton_invert(m: SmoothMap, p: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    space = m.space
    q = space.normalize(np.array(p, dtype=float))
    best = q
    best_res = np.inf
    for _ in range(max_iter):
        r = space.displacement(m(q), p)
        res = float(np.max(np.sqrt(np.sum(r * r, axis=-1))))
        if res < best_res:
            best, best_res = q, res
        step = np.linalg.solve(m.jacobian(q), r[..., None])[..., 0]
        q = space.normalize(q + step)
        if np.max(np.abs(step)) <= tol:
            return q
    r = space.displacement(m(q), p)
    res = float(np.max(np.sqrt(np.sum(r * r, axis=-1))))
    if res < best_res:
        best, best_res = q, res
    raise InversionError(
        f"Newton inversion of {m.label!r} did not converge "
        f"(best residual {best_res:.3e})",
        best=best,
        residual=best_res,
    )


def fd_jacobian(m: SmoothMap, x, h: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian, wrap-safe via shortest displacements."""
    x = _as_points(m.space, x)
    d = m.space.dim
    cols = []
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        df = m.space.displacement(m(x - e), m(x + e)) / (2.0 * h)
        cols.append(df)
    return np.stack(cols, axis=-1)


def compose(outer: SmoothMap, inner: SmoothMap, label: str | None = None) -> SmoothMap:
    """The composition outer о inner, with chain-rule Jacobian and composed inverse."""
    if outer.space != inner.space:
        raise ValueError("composition requires a common space")
    space = inner.space

    def fwd(x):
        return outer.fwd(space.normalize(np.asarray(inner.fwd(x), dtype=float)))

    inv = None
    if outer.invertible and inner.invertible:
        def inv(p):  # noqa: E731 - closure, not lambda, for picklability
            return inner.invert(outer.invert(p))

    jac = None
    if outer.jac is not None and inner.jac is not None:
        def jac(x):
            y = space.normalize(np.asarray(inner.fwd(np.asarray(x, dtype=float)), dtype=float))
            return outer.jacobian(y) @ inner.jacobian(x)

    return SmoothMap(
        label=label or f"{outer.label}o{inner.label}",
        space=space,
        fwd=fwd,
        inv=inv,
        jac=jac,
    )


def identity_map(space: Space) -> SmoothMap:
    eye = np.eye(space.dim)
    return SmoothMap(
        label="id",
        space=space,
        fwd=lambda x: x,
        inv=lambda p: p,
        jac=lambda x: np.broadcast_to(eye, x.shape + (space.dim,)),
        matrix=np.eye(space.dim, dtype=int) if space.periodic else None,
    )


def affine_map(space: Space, A, b, label: str = "affine") -> SmoothMap:
    """x -> A x + b.  On the torus A must be an integer matrix to be well defined."""
    A = np.asarray(A, dtype=float)
    b = np.asarray(b, dtype=float)
    if A.shape != (space.dim, space.dim) or b.shape != (space.dim,):
        raise ValueError("affine parameters do not match the space dimension")
    integral = np.allclose(A, np.round(A), atol=0.0)
    if space.periodic and not integral:
        raise ValueError(
            f"matrix of {label!r} is not integral; the map does not descend to the torus"
        )
    det = np.linalg.det(A)
    inv = None
    if abs(det) > 1e-14:
        Ainv = np.linalg.inv(A)
        inv = lambda p: (p - b) @ Ainv.T
    return SmoothMap(
        label=label,
        space=space,
        fwd=lambda x: x @ A.T + b,
        inv=inv,
        jac=lambda x: np.broadcast_to(A, x.shape + (space.dim,)),
        matrix=np.round(A).astype(int) if (space.periodic and integral) else None,
    )
