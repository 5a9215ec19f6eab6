import numpy as np
import pytest

from ifsshadow import (InversionError, SmoothMap, Space, affine_map, compose,
                       fd_jacobian, identity_map)
from ifsshadow.systems import CAT_MATRIX, build_cat_ifs, build_torus_f1


def cat_map():
    return build_cat_ifs().maps[0]


def test_cat_forward_hand_value():
    # (2*0.25 + 0.5, 0.25 + 0.5) = (1.0, 0.75) -> (0.0, 0.75)
    assert cat_map()(np.array([0.25, 0.5])) == pytest.approx([0.0, 0.75])


def test_cat_inverse_hand_value():
    # integer inverse [[1,-1],[-1,2]] applied mod 1
    assert cat_map().invert(np.array([0.0, 0.75])) == pytest.approx([0.25, 0.5])


def test_identity_map_is_identity():
    idm = identity_map(Space(2))
    rng = np.random.default_rng(0)
    X = rng.random((100, 2))
    assert np.array_equal(idm(X), X)
    assert np.array_equal(idm.invert(X), X)


def test_affine_non_integer_matrix_rejected_on_torus():
    with pytest.raises(ValueError, match="integral"):
        affine_map(Space(1), [[0.5]], [0.0])
    # fine off the torus
    affine_map(Space(1, periodic=False), [[0.5]], [0.0])


def test_newton_inversion_matches_closed_form():
    f1 = build_torus_f1().maps[0]
    bare = SmoothMap("f1_bare", f1.space, f1.fwd, inv=None, jac=f1.jac)
    rng = np.random.default_rng(1)
    X = rng.random((200, 4))
    q_newton = bare.invert(f1(X))
    assert np.max(f1.space.dist(q_newton, f1.invert(f1(X)))) < 1e-9
    assert np.max(f1.space.dist(bare(q_newton), f1(X))) < 1e-10


def test_newton_inversion_failure_carries_best_iterate():
    f1 = build_torus_f1().maps[0]
    bare = SmoothMap("f1_bare", f1.space, f1.fwd, inv=None, jac=f1.jac)
    with pytest.raises(InversionError) as exc:
        bare.invert(np.array([0.3, 0.1, 0.6, 0.9]), max_iter=1)
    assert exc.value.best is not None
    assert exc.value.residual is not None and exc.value.residual >= 0.0


def test_invert_without_inverse_or_jacobian():
    m = SmoothMap("fwd_only", Space(2), lambda x: x)
    with pytest.raises(InversionError):
        m.invert(np.zeros(2))


def test_fd_jacobian_agreement_cat():
    m = cat_map()
    rng = np.random.default_rng(2)
    X = rng.random((1000, 2))
    assert np.max(np.abs(m.jacobian(X) - fd_jacobian(m, X))) <= 1e-4


def test_fd_jacobian_wrap_safe_near_boundary():
    m = cat_map()
    X = np.array([[0.9999995, 0.0000003], [0.0, 0.5]])
    assert np.max(np.abs(m.jacobian(X) - fd_jacobian(m, X))) <= 1e-4


def test_compose_chain_rule_and_inverse():
    f1 = build_torus_f1().maps[0]
    g = compose(f1, f1)
    rng = np.random.default_rng(3)
    X = rng.random((100, 4))
    assert np.max(g.space.dist(g(X), f1(f1(X)))) < 1e-12
    assert np.max(np.abs(g.jacobian(X) - fd_jacobian(g, X))) <= 1e-3
    assert np.max(g.space.dist(g.invert(g(X)), X)) < 1e-10


def test_affine_matrix_metadata():
    assert np.array_equal(cat_map().matrix, CAT_MATRIX)
    rot = affine_map(Space(2), np.eye(2), [0.1, 0.2], "rot")
    assert np.array_equal(rot.matrix, np.eye(2, dtype=int))
    contr = affine_map(Space(1, periodic=False), [[0.5]], [0.0])
    assert contr.matrix is None
