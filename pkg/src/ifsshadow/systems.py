"""Built-in example systems.

Every builder returns a catalog-conformant IFS: invertible maps with analytic
Jacobians that pass a round-trip and finite-difference self-check on a small
sample at build time.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import IFS, make_ifs
from .maps import SmoothMap, affine_map, fd_jacobian, identity_map
from .space import Space

CAT_MATRIX = np.array([[2, 1], [1, 1]])


def _self_check(F: IFS, n: int = 64, seed: int = 12345) -> IFS:
    rng = np.random.default_rng(seed)
    X = F.space.uniform(rng, n)
    for m in F.maps:
        if m.invertible:
            back = m.invert(m(X))
            rt = float(np.max(F.space.dist(back, X)))
            if rt > 1e-10:
                raise AssertionError(f"round-trip failure for {m.label!r}: {rt:.3e}")
        if m.jac is not None:
            err = float(np.max(np.abs(m.jacobian(X) - fd_jacobian(m, X))))
            if err > 1e-4:
                raise AssertionError(f"Jacobian mismatch for {m.label!r}: {err:.3e}")
    return F


def build_cat_ifs() -> IFS:
    """The hyperbolic automorphism (u, v) -> (2u+v, u+v) of the 2-torus."""
    space = Space(2)
    return _self_check(make_ifs([affine_map(space, CAT_MATRIX, np.zeros(2), "cat")]))


def _torus_f_map(label: str, c_sign: float) -> SmoothMap:
    """Skew product over the cat map on T^4 with coupling c(u,v) = cos^2 pi(u ± v).

    (x, y, u, v) -> (2x - c(u,v) f(x) + y, x - c(u,v) f(x) + y, 2u+v, u+v)
    with f(x) = sin(2 pi x) / (2 pi).  Closed-form inverse: x = X - Y,
    (u, v) = (U - V, -U + 2V), y = Y - x + c(u,v) f(x).
    """
    space = Space(4)
    two_pi = 2.0 * np.pi

    def cval(u, v):
        return np.cos(np.pi * (u + c_sign * v)) ** 2

    def cgrad(u, v):
        s = -np.pi * np.sin(two_pi * (u + c_sign * v))
        return s, c_sign * s

    def fwd(p):
        x, y, u, v = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
        cf = cval(u, v) * np.sin(two_pi * x) / two_pi
        return np.stack([2 * x - cf + y, x - cf + y, 2 * u + v, u + v], axis=-1)

    def inv(p):
        X, Y, U, V = p[..., 0], p[..., 1], p[..., 2], p[..., 3]
        u = U - V
        v = -U + 2 * V
        x = X - Y
        y = Y - x + cval(u, v) * np.sin(two_pi * x) / two_pi
        return np.stack([x, y, u, v], axis=-1)

    def jac(p):
        x, u, v = p[..., 0], p[..., 2], p[..., 3]
        c = cval(u, v)
        cu, cv = cgrad(u, v)
        fx = np.sin(two_pi * x) / two_pi
        dfx = np.cos(two_pi * x)
        J = np.zeros(p.shape[:-1] + (4, 4))
        J[..., 0, 0] = 2 - c * dfx
        J[..., 0, 1] = 1
        J[..., 0, 2] = -cu * fx
        J[..., 0, 3] = -cv * fx
        J[..., 1, 0] = 1 - c * dfx
        J[..., 1, 1] = 1
        J[..., 1, 2] = -cu * fx
        J[..., 1, 3] = -cv * fx
        J[..., 2, 2] = 2
        J[..., 2, 3] = 1
        J[..., 3, 2] = 1
        J[..., 3, 3] = 1
        return J

    return SmoothMap(label=label, space=space, fwd=fwd, inv=inv, jac=jac)


def build_torus_f1() -> IFS:
    return _self_check(make_ifs([_torus_f_map("torus_F1", +1.0)]))


def build_torus_f2() -> IFS:
    return _self_check(make_ifs([_torus_f_map("torus_F2", -1.0)]))


def build_torus_example() -> IFS:
    """The two-map family {F1, F2} on T^4 (couplings cos^2 pi(u+v), cos^2 pi(u-v))."""
    return _self_check(make_ifs([_torus_f_map("torus_F1", +1.0),
                                 _torus_f_map("torus_F2", -1.0)]))


def build_contraction_ifs(q: float, offsets=(0.0, 0.5)) -> IFS:
    """Affine contractions x -> q x + o on the unit interval (Euclidean metric).

    A metric contraction like x/2 does not descend to the circle, so these
    families live on the non-periodic unit cube.
    """
    if not 0.0 < q < 1.0:
        raise ValueError(f"contraction factor must lie in (0, 1), got {q}")
    space = Space(1, periodic=False)
    maps = [affine_map(space, [[q]], [float(o)], f"contraction_{i}")
            for i, o in enumerate(offsets)]
    return _self_check(make_ifs(maps))


def build_rotation_ifs(angles) -> IFS:
    """Rigid torus rotations; scalars give circle rotations."""
    maps = []
    for i, a in enumerate(angles):
        b = np.atleast_1d(np.asarray(a, dtype=float))
        space = Space(b.size)
        maps.append(affine_map(space, np.eye(b.size), b, f"rotation_{i}"))
    return _self_check(make_ifs(maps))


def build_identity_ifs(dim: int) -> IFS:
    return _self_check(make_ifs([identity_map(Space(dim))]))


def build_bumped_cat_ifs(d0_target: float = 1e-3) -> IFS:
    """Cat map composed with a small bump, at matched family distance ~d0_target.

    The bump moves a fixed interior point by d0_target / lambda_u (the inverse
    stretch of the cat map caps the pullback discrepancy), so the matched
    distance to the plain cat map measures just under d0_target.
    """
    from .perturb import move_points_diffeo
    from .maps import compose

    lam_u = float(np.max(np.abs(np.linalg.eigvals(CAT_MATRIX.astype(float)))))
    disp = 0.95 * d0_target / lam_u
    p = np.array([0.37, 0.61])
    h = move_points_diffeo([(p, p + np.array([0.0, disp]))], delta=1.5 * disp,
                           label="h")
    cat = build_cat_ifs().maps[0]
    return _self_check(make_ifs([compose(h, cat, label="bumped_cat")]))


@dataclass(frozen=True)
class SystemCatalogEntry:
    name: str
    builder: Callable[..., IFS]
    doc: str


CATALOG: dict[str, SystemCatalogEntry] = {
    e.name: e
    for e in [
        SystemCatalogEntry("cat", build_cat_ifs,
                           "hyperbolic toral automorphism (2u+v, u+v) on T^2"),
        SystemCatalogEntry("torus_F1", build_torus_f1,
                           "skew product over the cat map, coupling cos^2 pi(u+v), on T^4"),
        SystemCatalogEntry("torus_F2", build_torus_f2,
                           "skew product over the cat map, coupling cos^2 pi(u-v), on T^4"),
        SystemCatalogEntry("torus_example", build_torus_example,
                           "the pair {F1, F2} on T^4"),
        SystemCatalogEntry("contraction", build_contraction_ifs,
                           "affine contractions on the unit interval, e.g. contraction:0.5"),
        SystemCatalogEntry("rotation", build_rotation_ifs,
                           "rigid rotations (isometric controls), e.g. rotation:0.1,0.3"),
        SystemCatalogEntry("identity", build_identity_ifs,
                           "identity map (isometric control), e.g. identity:2"),
        SystemCatalogEntry("cat_bumped", build_bumped_cat_ifs,
                           "cat map with a small bump, e.g. cat_bumped:1e-3"),
    ]
}


def build_system(spec: str) -> IFS:
    """Build a catalog system from a spec string like ``contraction:0.5``.

    Parameter grammar: ``cat``, ``torus_F1``, ``torus_F2``, ``torus_example``,
    ``contraction:q[,offset,...]``, ``rotation:a[,b,...]``, ``identity:dim``.
    """
    name, _, params = spec.partition(":")
    if name not in CATALOG:
        raise KeyError(f"unknown system {name!r}; known: {sorted(CATALOG)}")
    args = [p for p in params.split(",") if p] if params else []
    if name == "contraction":
        if not args:
            raise ValueError("contraction needs a factor, e.g. contraction:0.5")
        q = float(args[0])
        offsets = [float(a) for a in args[1:]] or [0.0, 1.0 - q]
        return build_contraction_ifs(q, offsets)
    if name == "rotation":
        if not args:
            raise ValueError("rotation needs at least one angle")
        return build_rotation_ifs([float(a) for a in args])
    if name == "identity":
        return build_identity_ifs(int(args[0]) if args else 2)
    if name == "cat_bumped":
        return build_bumped_cat_ifs(float(args[0]) if args else 1e-3)
    if args:
        raise ValueError(f"system {name!r} takes no parameters")
    return CATALOG[name].builder()
