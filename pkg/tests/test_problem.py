import numpy as np
import pytest

from dmpc import (InfoGraph, augment_with_admm_terms, build_local_problems,
                  condense, double_integrator_3d, global_cost, path_graph,
                  solve_box_qp, solve_equality_qp)
from dmpc.problem import ZLayout, consistent_local_vector, copy_counts


def make_agents(n, u_max=1.0):
    return [double_integrator_3d(0.1, 1.0, u_max=u_max) for _ in range(n)]


def random_states(rng, n):
    out = []
    for _ in range(n):
        x = np.empty(6)
        x[0::2] = rng.uniform(-2, 2, size=3)
        x[1::2] = rng.uniform(-1, 1, size=3)
        out.append(x)
    return out


def test_local_dimension_two_agents():
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, maps, z_dim = build_local_problems(g, make_agents(2), 1,
                                              [np.zeros(6), np.zeros(6)])
    # two agents' states over t=0,1 plus two agents' inputs at t=0
    assert probs[0].dim == 2 * (6 * 2) + 2 * (3 * 1) == 30
    assert z_dim == 30


def test_z_dimension_stock_scenario():
    g = path_graph(5)
    _, _, z_dim = build_local_problems(g, make_agents(5), 10,
                                       [np.zeros(6)] * 5)
    assert z_dim == 5 * (6 * 11 + 3 * 10) == 480


def test_consensus_assignment_has_zero_cost():
    g = path_graph(3)
    agents = make_agents(3)
    probs, maps, z_dim = build_local_problems(g, agents, 4, [np.zeros(6)] * 3)
    layout = ZLayout(agents, 4)
    z = np.zeros(z_dim)
    common = np.array([1.0, 0.0, -2.0, 0.0, 0.5, 0.0])
    for j in range(1, 4):
        s0 = layout.state_offset(j, 0)
        z[s0:s0 + 5 * 6] = np.tile(common, 5)
    total = sum(p.cost(consistent_local_vector(m, z)) for p, m in zip(probs, maps))
    assert abs(total) <= 1e-12


def test_build_rejects_bad_inputs():
    g = path_graph(2)
    with pytest.raises(ValueError):
        build_local_problems(g, make_agents(2), 0, [np.zeros(6)] * 2)
    with pytest.raises(ValueError):
        build_local_problems(g, make_agents(3), 1, [np.zeros(6)] * 2)
    with pytest.raises(ValueError):
        build_local_problems(g, make_agents(2), 1, [np.zeros(5), np.zeros(6)])


def test_local_hessians_are_psd():
    rng = np.random.default_rng(0)
    g = path_graph(4)
    probs, _, _ = build_local_problems(g, make_agents(4), 3, random_states(rng, 4))
    for p in probs:
        assert np.max(np.abs(p.H - p.H.T)) <= 1e-12
        assert np.linalg.eigvalsh(p.H).min() >= -1e-9


def test_map_copy_counts():
    g = path_graph(5)
    agents = make_agents(5)
    _, maps, z_dim = build_local_problems(g, agents, 2, [np.zeros(6)] * 5)
    counts = copy_counts(maps, z_dim)
    layout = ZLayout(agents, 2)
    for j in range(1, 6):
        expected = len(g.neighbors(j)) + 1
        s0 = layout.state_offset(j, 0)
        assert np.all(counts[s0:s0 + 6] == expected)
        u0 = layout.input_offset(j, 0)
        assert np.all(counts[u0:u0 + 3] == expected)


def test_cost_decomposition_identity_random():
    rng = np.random.default_rng(7)
    g = InfoGraph(4, {(1, 2): 0.7, (2, 3): 1.4, (3, 4): 0.3, (1, 4): 2.0})
    agents = make_agents(4)
    probs, maps, z_dim = build_local_problems(g, agents, 5, random_states(rng, 4))
    layout = ZLayout(agents, 5)
    for _ in range(25):
        z = rng.standard_normal(z_dim)
        local = sum(p.cost(consistent_local_vector(m, z)) for p, m in zip(probs, maps))
        states, inputs = layout.decode(z)
        ref = global_cost(g, states, inputs)
        assert abs(local - ref) <= 1e-9 * max(1.0, abs(ref))


def test_global_cost_examples():
    g = InfoGraph(2, {(1, 2): 1.0})
    same = np.tile(np.arange(6.0), (4, 1))
    zero_u = np.zeros((3, 3))
    assert global_cost(g, [same, same.copy()], [zero_u, zero_u.copy()]) == 0.0

    other = same.copy()
    other[2, 0] += 1.0  # differ by e_1 at one step
    assert global_cost(g, [same, other], [zero_u, zero_u.copy()]) == pytest.approx(1.0)


def test_global_cost_matches_dense_laplacian_form():
    rng = np.random.default_rng(9)
    g = InfoGraph(3, {(1, 2): 1.3, (2, 3): 0.6})
    lap = g.laplacian()
    S = 4
    states = [rng.standard_normal((S, 6)) for _ in range(3)]
    inputs = [rng.standard_normal((S - 1, 3)) for _ in range(3)]
    # oracle: assemble the quadratic form from the Laplacian directly
    ref = 0.0
    for t in range(S):
        X = np.stack([states[j][t] for j in range(3)])  # (N, 6)
        for c in range(6):
            ref += X[:, c] @ lap @ X[:, c]
    ref += sum(float(np.sum(u ** 2)) for u in inputs)
    assert global_cost(g, states, inputs) == pytest.approx(ref, rel=1e-12)


def test_global_cost_dimension_mismatch():
    g = InfoGraph(2, {(1, 2): 1.0})
    with pytest.raises(ValueError):
        global_cost(g, [np.zeros((3, 6))], [np.zeros((2, 3))])
    with pytest.raises(ValueError):
        global_cost(g, [np.zeros((3, 6)), np.zeros((2, 6))],
                    [np.zeros((2, 3)), np.zeros((2, 3))])


def test_condense_single_agent_one_step():
    g = InfoGraph(1)
    a = double_integrator_3d(0.1, 1.0)
    probs, _, _ = build_local_problems(g, [a], 1, [np.zeros(6)])
    qp, exp = condense(probs[0])
    assert qp.dim == 3
    # no coupling: only the input energy survives, P = 2 I
    assert np.allclose(qp.P, 2.0 * np.eye(3))
    assert np.allclose(qp.q, 0.0)


def test_condense_consensus_start_needs_no_input():
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, _, _ = build_local_problems(g, make_agents(2), 3,
                                       [np.zeros(6), np.zeros(6)])
    qp, exp = condense(probs[0])
    sol = solve_box_qp(qp, tol=1e-10, max_iter=10000)
    assert sol.status == "optimal"
    assert np.max(np.abs(sol.x_star)) <= 1e-8


def test_condense_matches_equality_qp_oracle():
    rng = np.random.default_rng(11)
    g = InfoGraph(2, {(1, 2): 1.3})
    agents = make_agents(2, u_max=np.inf)
    probs, _, _ = build_local_problems(g, agents, 2, random_states(rng, 2))
    for p in probs:
        qp, exp = condense(p)
        sol = solve_box_qp(qp, tol=1e-10, max_iter=20000)
        assert sol.status == "optimal"
        x_cond = exp.expand(sol.x_star)
        A_eq, b_eq = p.dynamics_equalities()
        x_ref = solve_equality_qp(p.H, p.g, A_eq, b_eq)
        assert np.max(np.abs(x_cond - x_ref)) <= 1e-6
        assert np.max(np.abs(A_eq @ x_cond - b_eq)) <= 1e-10


def test_augment_identity_when_disabled():
    rng = np.random.default_rng(2)
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, maps, z_dim = build_local_problems(g, make_agents(2), 2, random_states(rng, 2))
    p = probs[0]
    aug = augment_with_admm_terms(p, np.zeros(z_dim), np.zeros(p.dim), 0.0, maps[0])
    x = rng.standard_normal(p.dim)
    assert aug.cost(x) == pytest.approx(p.cost(x))


def test_augment_value_matches_term_by_term():
    rng = np.random.default_rng(3)
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, maps, z_dim = build_local_problems(g, make_agents(2), 2, random_states(rng, 2))
    p, m = probs[0], maps[0]
    z = rng.standard_normal(z_dim)
    lam = rng.standard_normal(p.dim)
    rho = 1.7
    aug = augment_with_admm_terms(p, z, lam, rho, m)
    for _ in range(5):
        x = rng.standard_normal(p.dim)
        d = x - z[m.global_idx]
        expected = p.cost(x) + lam @ d + 0.5 * rho * (d @ d)
        # constant terms -lam' Ez + (rho/2)||Ez||^2 are dropped from the
        # stored quadratic; compare differences against a reference point
        x_ref = np.zeros(p.dim)
        d_ref = x_ref - z[m.global_idx]
        expected_ref = p.cost(x_ref) + lam @ d_ref + 0.5 * rho * (d_ref @ d_ref)
        assert (aug.cost(x) - aug.cost(x_ref)) == pytest.approx(
            expected - expected_ref, rel=1e-9, abs=1e-9)


def test_augment_pure_proximal_minimizer():
    # f == 0: minimizer of the augmented cost is E z - lam / rho
    rng = np.random.default_rng(4)
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, maps, z_dim = build_local_problems(g, make_agents(2), 2,
                                              [np.zeros(6), np.zeros(6)])
    from dataclasses import replace
    p = replace(probs[0], H=np.zeros((probs[0].dim,) * 2), g=np.zeros(probs[0].dim))
    m = maps[0]
    z = rng.standard_normal(z_dim)
    lam = rng.standard_normal(p.dim)
    rho = 2.5
    aug = augment_with_admm_terms(p, z, lam, rho, m)
    x_star = solve_equality_qp(aug.H, aug.g)
    assert np.max(np.abs(x_star - (z[m.global_idx] - lam / rho))) <= 1e-10


def test_augment_dimension_mismatch():
    g = InfoGraph(2, {(1, 2): 1.0})
    probs, maps, z_dim = build_local_problems(g, make_agents(2), 2,
                                              [np.zeros(6), np.zeros(6)])
    with pytest.raises(ValueError):
        augment_with_admm_terms(probs[0], np.zeros(z_dim), np.zeros(3), 1.0, maps[0])


def test_index_map_entries_expose_tags():
    g = InfoGraph(2, {(1, 2): 1.0})
    _, maps, _ = build_local_problems(g, make_agents(2), 1,
                                      [np.zeros(6), np.zeros(6)])
    entries = maps[0].entries
    assert len(entries) == 30
    local_offsets = [e[0] for e in entries]
    assert local_offsets == sorted(set(local_offsets))
    first_tag = entries[0][2]
    assert first_tag.agent == 1 and first_tag.kind == "state" and first_tag.t == 0
