import numpy as np
import pytest

from sourceloc import diffusion
from sourceloc.diffusion import (
    SimConfig,
    build_dataset,
    estimate_mc_observation,
    load_cascades,
    load_dataset,
    sample_monotone_subsets,
    sample_sources,
    save_dataset,
    si_step_history,
    simulate_si,
    simulate_sir,
)
from sourceloc.graphs import from_edges


def path_graph(n):
    return from_edges([(i, i + 1) for i in range(n - 1)])


def two_node_graph():
    return from_edges([(0, 1)])


def seeds_at(g, nodes):
    x = np.zeros(g.num_nodes, dtype=np.int8)
    x[list(nodes)] = 1
    return x


# source sampling ------------------------------------------------------------


def test_sample_sources_karate_count(karate, rng):
    seeds = sample_sources(karate, 0.10, rng)
    assert seeds.sum() == 3  # round(3.4)


def test_sample_sources_full_fraction(karate, rng):
    assert sample_sources(karate, 1.0, rng).sum() == 34


def test_sample_sources_jazz_count(jazz, rng):
    assert sample_sources(jazz, 0.10, rng).sum() == 20  # round(19.8)


def test_sample_sources_clamps_to_one(rng):
    g = two_node_graph()
    seeds = sample_sources(g, 0.01, rng)
    assert seeds.sum() == 1


def test_sample_sources_bad_fraction(karate, rng):
    with pytest.raises(ValueError):
        sample_sources(karate, 0.0, rng)


# SI -------------------------------------------------------------------------


def test_si_beta_zero_returns_seeds(karate, rng):
    seeds = seeds_at(karate, [0, 5])
    cfg = SimConfig(beta=0.0, max_steps=50)
    assert np.array_equal(simulate_si(karate, seeds, cfg, rng), seeds)


def test_si_beta_one_fills_component(rng):
    g = from_edges([(0, 1), (1, 2), (3, 4)], num_nodes=5)
    cfg = SimConfig(beta=1.0, max_steps=50)
    out = simulate_si(g, seeds_at(g, [0]), cfg, rng)
    assert out.tolist() == [1, 1, 1, 0, 0]


def test_si_single_step_infection_probability():
    # seed at one end of a path; its neighbor turns with probability beta in one step
    g = path_graph(5)
    cfg = SimConfig(beta=0.5, max_steps=1)
    hits = 0
    runs = 10000
    rng = np.random.default_rng(41)
    infected, _, _ = diffusion._simulate_batch(g, seeds_at(g, [0]), diffusion.SI, cfg.beta, 0.0, 1, runs, rng)
    hits = infected[:, 1].sum()
    assert abs(hits / runs - 0.5) < 0.02


def test_si_monotone_growth(karate, rng):
    cfg = SimConfig(beta=0.3, max_steps=10)
    history = si_step_history(karate, seeds_at(karate, [4, 10]), cfg, rng)
    for before, after in zip(history, history[1:]):
        assert np.all(before <= after)


def test_si_empty_seeds_error(karate, rng):
    with pytest.raises(ValueError):
        simulate_si(karate, np.zeros(34, dtype=np.int8), SimConfig(), rng)


# SIR ------------------------------------------------------------------------


def test_sir_gamma_zero_matches_si_bitwise(karate):
    seeds = seeds_at(karate, [0, 7])
    cfg_si = SimConfig(pattern="SI", beta=0.2, max_steps=30)
    cfg_sir = SimConfig(pattern="SIR", beta=0.2, gamma=0.0, max_steps=30)
    for seed in range(5):
        si_out = simulate_si(karate, seeds, cfg_si, np.random.default_rng(seed))
        _, sir_obs = simulate_sir(karate, seeds, cfg_sir, np.random.default_rng(seed))
        assert np.array_equal(si_out, sir_obs)


def test_sir_gamma_one_recovers_initial_seeds(karate, rng):
    seeds = seeds_at(karate, [0, 7])
    cfg = SimConfig(pattern="SIR", beta=0.3, gamma=1.0, max_steps=1)
    status, obs = simulate_sir(karate, seeds, cfg, rng)
    assert np.all(status[seeds == 1] == 2)
    assert np.all(obs[seeds == 1] == 0)


def test_sir_partition(karate):
    cfg = SimConfig(pattern="SIR", beta=0.3, gamma=0.2, max_steps=20)
    seeds = seeds_at(karate, [1, 2, 3])
    for seed in range(20):
        status, obs = simulate_sir(karate, seeds, cfg, np.random.default_rng(seed))
        assert set(np.unique(status)).issubset({0, 1, 2})
        assert np.array_equal(obs, (status == 1).astype(np.int8))


# Monte-Carlo observation -----------------------------------------------------


def test_mc_seed_probability_one(karate, rng):
    seeds = seeds_at(karate, [3])
    obs = estimate_mc_observation(karate, seeds, SimConfig(beta=0.2, max_steps=5), 50, rng)
    assert obs[3] == 1.0


def test_mc_beta_zero_equals_seeds(karate, rng):
    seeds = seeds_at(karate, [3, 9])
    obs = estimate_mc_observation(karate, seeds, SimConfig(beta=0.0, max_steps=5), 50, rng)
    assert np.array_equal(obs, seeds.astype(np.float64))


def test_mc_two_node_analytic(rng):
    g = two_node_graph()
    cfg = SimConfig(beta=0.3, max_steps=1)
    obs = estimate_mc_observation(g, seeds_at(g, [0]), cfg, 100000, rng)
    assert abs(obs[1] - 0.3) < 0.01


def test_mc_convergence_between_run_counts():
    g = two_node_graph()
    cfg = SimConfig(beta=0.3, max_steps=1)
    obs_a = estimate_mc_observation(g, seeds_at(g, [0]), cfg, 50000, np.random.default_rng(1))
    obs_b = estimate_mc_observation(g, seeds_at(g, [0]), cfg, 100000, np.random.default_rng(2))
    se = np.sqrt(0.3 * 0.7 / 50000)
    assert abs(obs_a[1] - obs_b[1]) < 3 * se + np.sqrt(0.3 * 0.7 / 100000) * 3


def test_mc_runs_validation(karate, rng):
    with pytest.raises(ValueError):
        estimate_mc_observation(karate, seeds_at(karate, [0]), SimConfig(), 0, rng)


# monotone subsets ------------------------------------------------------------


def test_single_seed_subsets_degenerate(rng):
    x = np.zeros(6, dtype=np.int8)
    x[2] = 1
    subs, degenerate = sample_monotone_subsets(x, 4, rng)
    assert degenerate
    assert all(np.array_equal(s, x) for s in subs)


def test_subset_support_containment(rng):
    x = np.zeros(20, dtype=np.int8)
    x[[1, 4, 9, 15]] = 1
    subs, degenerate = sample_monotone_subsets(x, 30, rng)
    assert not degenerate
    for s in subs:
        assert np.all(s <= x)
        assert 1 <= s.sum() < x.sum()


def test_subset_drop_counts_cover_range(rng):
    x = np.zeros(10, dtype=np.int8)
    x[[0, 1, 2]] = 1
    subs, _ = sample_monotone_subsets(x, 50, rng)
    dropped = {int(3 - s.sum()) for s in subs}
    assert dropped == {1, 2}


# dataset ---------------------------------------------------------------------


def test_build_dataset_zero_episodes(karate, rng):
    with pytest.raises(ValueError):
        build_dataset(karate, SimConfig(), 0, 2, rng)


def test_build_dataset_invariants(karate, rng):
    cfg = SimConfig(beta=0.3, max_steps=2, mc_runs=20)
    eps = build_dataset(karate, cfg, 5, 3, rng)
    assert len(eps) == 5
    for ep in eps:
        ep.check()
        assert len(ep.subsets) == 3
        assert np.all((ep.observation >= 0) & (ep.observation <= 1))


def test_deterministic_closure_subsets_are_dominated(karate, rng):
    # beta=1 single-run SI is deterministic: subset observations never exceed the full one
    cfg = SimConfig(beta=1.0, max_steps=2, mc_runs=1)
    eps = build_dataset(karate, cfg, 5, 3, rng)
    for ep in eps:
        for _, sub_obs in ep.subsets:
            assert np.all(sub_obs <= ep.observation + 1e-12)


def test_dataset_roundtrip(tmp_path, karate, rng):
    cfg = SimConfig(beta=0.3, max_steps=2, mc_runs=10)
    eps = build_dataset(karate, cfg, 4, 2, rng)
    path = tmp_path / "ds.bin"
    digest = save_dataset(path, eps, karate.num_nodes, manifest_extra={"note": "test"})
    loaded, n, digest2 = load_dataset(path)
    assert n == karate.num_nodes
    assert digest == digest2
    assert len(loaded) == 4
    for a, b in zip(eps, loaded):
        assert np.array_equal(a.source, b.source)
        assert np.array_equal(a.observation, b.observation)
        assert a.degenerate == b.degenerate
        for (sa, oa), (sb, ob) in zip(a.subsets, b.subsets):
            assert np.array_equal(sa, sb)
            assert np.array_equal(oa, ob)


# cascades ---------------------------------------------------------------------


def write_cascade(path, records):
    with open(path, "w", encoding="utf-8") as fh:
        for cid, node, t in records:
            fh.write(f"{cid} {node} {t}\n")


def test_cascade_twenty_nodes_one_source(tmp_path, karate):
    path = tmp_path / "c.txt"
    write_cascade(path, [("c1", i, float(i)) for i in range(20)])
    eps = load_cascades(karate, path)
    assert len(eps) == 1
    assert eps[0].source.sum() == 1  # ceil(0.05 * 20)
    assert eps[0].source[0] == 1


def test_cascade_tie_break_by_node_id(tmp_path, karate):
    path = tmp_path / "c.txt"
    write_cascade(path, [("c1", n, 1.0) for n in (7, 3, 5, 1, 9, 2, 8, 6, 4, 0)])
    eps = load_cascades(karate, path)
    assert eps[0].source[0] == 1
    assert eps[0].source.sum() == 1


def test_cascade_hundred_nodes_counts(tmp_path, jazz):
    path = tmp_path / "c.txt"
    write_cascade(path, [("c1", i, float(i)) for i in range(100)])
    eps = load_cascades(jazz, path, observed="bottom-only")
    assert eps[0].source.sum() == 5
    assert eps[0].observation.sum() == 30
    late = [i for i in range(70, 100)]
    assert np.all(eps[0].observation[late] == 1.0)


def test_cascade_all_participants_infected_by_default(tmp_path, karate):
    path = tmp_path / "c.txt"
    write_cascade(path, [("c1", i, float(i)) for i in range(10)])
    eps = load_cascades(karate, path)
    assert eps[0].observation.sum() == 10


def test_cascade_unknown_node(tmp_path, karate):
    path = tmp_path / "c.txt"
    write_cascade(path, [("c1", 99, 0.0)])
    with pytest.raises(ValueError, match="outside graph"):
        load_cascades(karate, path)


def test_cascade_empty_file(tmp_path, karate):
    path = tmp_path / "c.txt"
    path.write_text("# nothing\n")
    with pytest.raises(ValueError, match="no cascade"):
        load_cascades(karate, path)
