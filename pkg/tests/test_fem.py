import numpy as np
import pytest
import scipy.linalg as sla

from starkv.errors import AssemblyError, ConfigError
from starkv.fem import AssembledSystem, assemble, build_generator, build_mesh
from starkv.network import PowerLaw, StarNetwork, Tabulated, Zero


def pendant_network(profile=None):
    """N=1 star with both edges of unit length."""
    return StarNetwork(length_0=1.0, damped_edges=[(1.0, profile or Zero())])


def default_network(alpha=0.5, kappa=1.0):
    return StarNetwork(
        length_0=1.0,
        damped_edges=[(1.0, PowerLaw(alpha=alpha, kappa=kappa))] * 2,
    )


def toy_system(delta=1.0):
    """1-DOF system K = M = 1, D = delta, assembled by hand."""
    import scipy.sparse as sp

    net = pendant_network()
    mesh = build_mesh(net, 2, grading=1.0)
    one = sp.csr_matrix(np.array([[1.0]]))
    return AssembledSystem(
        network=net,
        mesh=mesh,
        n_u=1,
        K=one,
        M=one.copy(),
        D=sp.csr_matrix(np.array([[delta]])),
        dof_map=(np.array([0]),),
    )


# ---------------------------------------------------------------------------
# build_mesh
# ---------------------------------------------------------------------------

def test_mesh_uniform():
    mesh = build_mesh(pendant_network(), 2, grading=1.0)
    np.testing.assert_allclose(mesh.nodes[0], [0.0, 0.5, 1.0])


def test_mesh_graded():
    mesh = build_mesh(pendant_network(), 2, grading=2.0)
    # elastic edge stays uniform; damped edge nodes at (i/2)^2
    np.testing.assert_allclose(mesh.nodes[0], [0.0, 0.5, 1.0])
    np.testing.assert_allclose(mesh.nodes[1], [0.0, 0.25, 1.0])


def test_mesh_longer_edge():
    net = StarNetwork(length_0=2.0, damped_edges=[(1.0, Zero())])
    mesh = build_mesh(net, 4, grading=1.0)
    np.testing.assert_allclose(mesh.nodes[0], [0.0, 0.5, 1.0, 1.5, 2.0])


def test_mesh_config_error():
    with pytest.raises(ConfigError):
        build_mesh(pendant_network(), 1)
    with pytest.raises(ConfigError):
        build_mesh(pendant_network(), 4, grading=0.5)


def test_graded_smallest_element_at_vertex():
    mesh = build_mesh(default_network(), 16, grading=2.0)
    for xs in mesh.nodes[1:]:
        h = np.diff(xs)
        assert np.argmin(h) == 0


# ---------------------------------------------------------------------------
# assemble
# ---------------------------------------------------------------------------

def test_stiffness_matches_length_two_string():
    # N=1, two elements per unit edge, no damping: the network is a clamped
    # string of length 2 with h = 0.5; K must be (1/h) tridiag(-1, 2, -1)
    # on the 3 interior DOFs once ordered along the string.
    sys = assemble(pendant_network(), build_mesh(pendant_network(), 2, grading=1.0))
    assert sys.n_u == 3
    # global order: vertex, interior of edge 0, interior of edge 1
    # string order: interior of edge 0, vertex, interior of edge 1
    perm = [1, 0, 2]
    K = sys.K.toarray()[np.ix_(perm, perm)]
    h = 0.5
    expected = (1.0 / h) * np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    np.testing.assert_array_equal(K, expected)


def test_mass_matches_length_two_string():
    sys = assemble(pendant_network(), build_mesh(pendant_network(), 2, grading=1.0))
    perm = [1, 0, 2]
    M = sys.M.toarray()[np.ix_(perm, perm)]
    h = 0.5
    expected = (h / 6.0) * np.array([[4.0, 1.0, 0.0], [1.0, 4.0, 1.0], [0.0, 1.0, 4.0]])
    np.testing.assert_allclose(M, expected, rtol=1e-15)


def test_zero_profiles_give_zero_damping():
    sys = assemble(default_network(), build_mesh(default_network(), 8))
    und = StarNetwork(length_0=1.0, damped_edges=[(1.0, Zero()), (1.0, Zero())])
    sys0 = assemble(und, build_mesh(und, 8))
    assert sys0.D.nnz == 0
    assert not sys0.is_damped
    assert sys.is_damped


def test_damping_element_integral_against_antiderivative():
    # first graded element [0, h] with d = sqrt(x): the assembled entry uses
    # the 4-point Gauss value of int_0^h sqrt(x) dx / h^2; the exact
    # antiderivative gives (2/3) h^(3/2) / h^2
    net = pendant_network(PowerLaw(alpha=0.5, kappa=1.0))
    n = 4
    mesh = build_mesh(net, n, grading=1.0)
    sys = assemble(net, mesh)
    h = 1.0 / n
    # vertex-adjacent element couples DOF 0 (vertex) and the first interior DOF
    i = sys.dof_map[1][1]
    exact = (2.0 / 3.0) * h**1.5 / h**2
    got = -sys.D.toarray()[0, i]  # off-diagonal carries -int d / h^2
    assert got == pytest.approx(exact, rel=2e-3)
    # and the same entry agrees with an independent high-order quadrature
    from scipy.integrate import quad

    ref = quad(lambda x: np.sqrt(x), 0.0, h)[0] / h**2
    assert got == pytest.approx(ref, rel=2e-3)


def test_assembled_matrices_exactly_symmetric():
    sys = assemble(default_network(), build_mesh(default_network(), 16))
    for A in (sys.K, sys.M, sys.D):
        A = A.toarray()
        np.testing.assert_array_equal(A, A.T)


def test_spd_and_psd():
    sys = assemble(default_network(), build_mesh(default_network(), 12))
    for A, positive in ((sys.K, True), (sys.M, True), (sys.D, False)):
        w = np.linalg.eigvalsh(A.toarray())
        if positive:
            assert np.all(w > 0)
        else:
            assert np.all(w >= -1e-14 * w.max())


def test_assemble_rejects_mismatched_mesh():
    net = default_network()
    other = StarNetwork(length_0=2.0, damped_edges=[(1.0, Zero())])
    with pytest.raises(AssemblyError):
        assemble(net, build_mesh(other, 4))


def test_assemble_tabulated_range_error():
    # table covering only half the edge fails inside quadrature
    import scipy.sparse as sp

    tab = Tabulated(x=[0.0, 0.5], d=[0.0, 1.0])
    net = pendant_network()
    mesh = build_mesh(net, 4, grading=1.0)
    bad = StarNetwork.__new__(StarNetwork)
    object.__setattr__(bad, "length_0", 1.0)
    from starkv.network import DampedEdge

    e = DampedEdge.__new__(DampedEdge)
    object.__setattr__(e, "length", 1.0)
    object.__setattr__(e, "profile", tab)
    object.__setattr__(bad, "damped_edges", (e,))
    with pytest.raises(AssemblyError):
        assemble(bad, mesh)


# ---------------------------------------------------------------------------
# build_generator
# ---------------------------------------------------------------------------

def gram_dot(sys, x, y):
    G = sla.block_diag(sys.K.toarray(), sys.M.toarray())
    return np.vdot(y, G @ x)


def test_generator_blocks():
    sys = build_generator(assemble(default_network(), build_mesh(default_network(), 6)))
    n = sys.n_u
    S = sys.generator
    np.testing.assert_array_equal(S[:n, :n], 0.0)
    np.testing.assert_array_equal(S[:n, n:], np.eye(n))
    np.testing.assert_allclose(S[n:, :n], -np.linalg.solve(sys.M.toarray(), sys.K.toarray()), atol=1e-12)


def test_generator_dissipative_random_states():
    sys = build_generator(assemble(default_network(), build_mesh(default_network(), 8)))
    rng = np.random.default_rng(7)
    for _ in range(1000):
        x = rng.standard_normal(sys.n_state) + 1j * rng.standard_normal(sys.n_state)
        num = np.real(gram_dot(sys, sys.generator @ x, x))
        assert num <= 1e-12 * np.real(gram_dot(sys, x, x))


def test_generator_skew_when_undamped():
    und = StarNetwork(length_0=1.0, damped_edges=[(1.0, Zero()), (1.0, Zero())])
    sys = build_generator(assemble(und, build_mesh(und, 8)))
    rng = np.random.default_rng(11)
    for _ in range(200):
        x = rng.standard_normal(sys.n_state) + 1j * rng.standard_normal(sys.n_state)
        num = np.real(gram_dot(sys, sys.generator @ x, x))
        assert abs(num) <= 1e-12 * np.real(gram_dot(sys, x, x))


def test_dissipation_identity():
    # Re <Sx, x>_gram = -(v part)^T D (v part)
    sys = build_generator(assemble(default_network(), build_mesh(default_network(), 8)))
    rng = np.random.default_rng(3)
    x = rng.standard_normal(sys.n_state) + 1j * rng.standard_normal(sys.n_state)
    v = x[sys.n_u :]
    lhs = np.real(gram_dot(sys, sys.generator @ x, x))
    rhs = -np.real(np.vdot(v, sys.D.toarray() @ v))
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


def test_toy_generator_eigenvalues():
    # 1-DOF toy K = M = 1, D = delta: eigenvalues (-delta +- sqrt(delta^2-4))/2
    for delta in (0.5, 1.0, 3.0):
        sys = build_generator(toy_system(delta))
        got = np.sort_complex(np.linalg.eigvals(sys.generator))
        disc = np.emath.sqrt(delta**2 - 4.0)
        expected = np.sort_complex(np.array([(-delta + disc) / 2.0, (-delta - disc) / 2.0]))
        np.testing.assert_allclose(got, expected, atol=1e-14)


def test_generator_budget():
    sys = assemble(default_network(), build_mesh(default_network(), 10))
    with pytest.raises(ConfigError):
        build_generator(sys, dense_budget=4)


def test_apply_generator_matches_dense():
    sys = build_generator(assemble(default_network(), build_mesh(default_network(), 7)))
    rng = np.random.default_rng(5)
    x = rng.standard_normal(sys.n_state)
    np.testing.assert_allclose(sys.apply_generator(x), sys.generator @ x, atol=1e-12)


def test_undamped_lowest_frequency_converges_to_half_pi():
    # N=1 pendant: clamped string of length 2, fundamental frequency pi/2;
    # P1 elements converge at O(h^2), so halving the mesh shrinks the error ~4x
    errs = []
    for n in (8, 16, 32):
        net = pendant_network()
        sys = assemble(net, build_mesh(net, n, grading=1.0))
        w = sla.eigh(
            sys.K.toarray(), sys.M.toarray(), eigvals_only=True, subset_by_index=[0, 0]
        )[0]
        errs.append(abs(np.sqrt(w) - np.pi / 2.0))
    assert errs[0] / errs[1] == pytest.approx(4.0, abs=0.5)
    assert errs[1] / errs[2] == pytest.approx(4.0, abs=0.5)
