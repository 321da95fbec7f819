import pickle

import numpy as np
import pytest

from invsmooth import lie
from invsmooth.errors import MalformedAlgebraElement, NearPiRotation
from invsmooth.lie import GroupElement


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


# -----
# Tests
# -----

def test_cross_matches_numpy(rng):
    a, b = rng.normal(size=(2, 3))
    assert np.allclose(lie.cross(a) @ b, np.cross(a, b))
    assert np.array_equal(lie.uncross(lie.cross(a)), a)


def test_tangent_blocks():
    xi = lie.tangent(phi=[1, 2, 3], dbeta2=[7, 8, 9])
    assert xi.shape == (lie.DIM,)
    assert np.array_equal(xi[lie.PHI], [1, 2, 3])
    assert np.array_equal(xi[lie.RHO], [0, 0, 0])
    assert np.array_equal(xi[lie.BETA2], [7, 8, 9])


def test_group_element_is_immutable():
    X = GroupElement.identity()
    with pytest.raises(AttributeError):
        X.position = np.ones(3)
    with pytest.raises(ValueError):
        X.position[0] = 1.0


def test_group_element_shapes():
    with pytest.raises(ValueError):
        GroupElement(attitude=np.eye(2))
    with pytest.raises(ValueError):
        GroupElement(bias_vel=np.zeros(4))


def test_embedding_layout(rng):
    X = lie.random_element(rng)
    E = X.embedding()
    assert E.shape == (lie.EMBED_DIM, lie.EMBED_DIM)
    assert np.array_equal(E[0:3, 0:3], X.attitude)
    assert np.array_equal(E[0:3, 3], X.position)
    assert np.array_equal(E[4:7, 7], X.bias_gyro)
    assert np.array_equal(E[4:7, 8], X.bias_vel)
    assert GroupElement.from_embedding(E).allclose(X, atol=0)


def test_compose_matches_embedding_product(rng):
    X, Y = lie.random_element(rng), lie.random_element(rng)
    assert np.allclose((X @ Y).embedding(), X.embedding() @ Y.embedding())
    assert np.allclose(lie.inverse(X).embedding(),
                       np.linalg.inv(X.embedding()))


def test_biases_compose_additively(rng):
    X, Y = lie.random_element(rng), lie.random_element(rng)
    assert np.allclose((X @ Y).biases, X.biases + Y.biases)


def test_pickle_round_trip(rng):
    X = lie.random_element(rng)
    assert pickle.loads(pickle.dumps(X)).allclose(X, atol=0)


def test_exp_log_round_trip(rng):
    for _ in range(200):
        xi = lie.random_tangent(rng)
        assert np.allclose(lie.log_g(lie.exp_g(xi)), xi, atol=1e-9)


def test_exp_so3_small_angle():
    phi = np.array([1e-9, -2e-9, 3e-9])
    C = lie.exp_so3(phi)
    assert np.allclose(C, np.eye(3) + lie.cross(phi), atol=1e-17)
    assert np.allclose(lie.log_so3(C), phi, atol=1e-20)


def test_log_near_pi_raises():
    C = lie.exp_so3([np.pi - 1e-8, 0.0, 0.0])
    with pytest.raises(NearPiRotation):
        lie.log_so3(C)


def test_rotation_angle(rng):
    C = lie.exp_so3([0.0, 0.0, 2.5])
    assert lie.rotation_angle(C) == pytest.approx(2.5)


def test_wedge_vee(rng):
    xi = rng.normal(size=lie.DIM)
    assert np.allclose(lie.vee(lie.wedge(xi)), xi)


@pytest.mark.parametrize('row, col', [(3, 3), (7, 0), (4, 4)])
def test_vee_rejects_malformed(row, col):
    Xi = lie.wedge(np.ones(lie.DIM))
    Xi[row, col] = 1.0
    with pytest.raises(MalformedAlgebraElement):
        lie.vee(Xi)


def test_vee_rejects_symmetric_attitude_block():
    Xi = np.zeros((lie.EMBED_DIM, lie.EMBED_DIM))
    Xi[0, 1] = Xi[1, 0] = 1.0
    with pytest.raises(MalformedAlgebraElement):
        lie.vee(Xi)


def test_vee_rejects_bad_shape():
    with pytest.raises(MalformedAlgebraElement):
        lie.vee(np.zeros((4, 4)))


def test_adjoint_identity(rng):
    X = lie.random_element(rng)
    xi = lie.random_tangent(rng)
    conjugated = (X.embedding() @ lie.wedge(xi)
                  @ lie.inverse(X).embedding())
    assert np.allclose(lie.wedge(lie.adjoint(X) @ xi), conjugated)


def test_inverse_adjoint(rng):
    X = lie.random_element(rng)
    assert np.allclose(lie.inverse_adjoint(X) @ lie.adjoint(X),
                       np.eye(lie.DIM))
    assert np.allclose(lie.inverse_adjoint(X),
                       lie.adjoint(lie.inverse(X)))


def test_left_jacobian_inverse(rng):
    for angle in (1e-8, 0.3, 2.0, 3.1):
        axis = rng.normal(size=3)
        phi = axis / np.linalg.norm(axis) * angle
        assert np.allclose(lie.left_jacobian_so3(phi)
                           @ lie.inv_left_jacobian_so3(phi), np.eye(3))


def test_normalize_rotation():
    C = lie.exp_so3([0.1, 0.2, 0.3])
    assert lie.normalize_rotation(C) is C
    skewed = C + 1e-6
    fixed = lie.normalize_rotation(skewed)
    assert lie.orthogonality_defect(fixed) < 1e-12
    assert np.allclose(fixed, C, atol=1e-5)


def test_left_and_right_errors(rng):
    X, Xhat = lie.random_element(rng), lie.random_element(rng)
    assert (X @ lie.left_error(X, Xhat)).allclose(Xhat)
    assert (lie.right_error(X, Xhat) @ X).allclose(Xhat)


def test_random_tangent_angle_bound(rng):
    for _ in range(50):
        xi = lie.random_tangent(rng, max_angle=0.5)
        assert np.linalg.norm(xi[lie.PHI]) <= 0.5
