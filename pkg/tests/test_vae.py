import numpy as np
import pytest

from sourceloc import autodiff as ad
from sourceloc import nn
from sourceloc.autodiff import Tensor
from sourceloc.diffusion import EpisodePair, sample_monotone_subsets
from sourceloc.forward_model import DeterministicDiffusionOracle, init_forward
from sourceloc.vae import (
    TrainConfig,
    VaeParams,
    decode,
    elbo_loss,
    encode,
    init_vae,
    kl_normal,
    monotonicity_penalty,
    posterior_mean_spread,
    reparameterize,
    train_vae,
)


def zero_vae(num_nodes=6, k=2, hidden=4):
    enc = nn.MlpParams(
        weights=[ad.parameter(np.zeros((num_nodes, hidden))), ad.parameter(np.zeros((hidden, 2 * k)))],
        biases=[ad.parameter(np.zeros(hidden)), ad.parameter(np.zeros(2 * k))],
        activations=["relu", "identity"],
    )
    dec = nn.MlpParams(
        weights=[ad.parameter(np.zeros((k, hidden))), ad.parameter(np.zeros((hidden, num_nodes)))],
        biases=[ad.parameter(np.zeros(hidden)), ad.parameter(np.zeros(num_nodes))],
        activations=["relu", "sigmoid"],
    )
    return VaeParams(encoder=enc, decoder=dec, latent_dim=k)


class LookupForward:
    """Test double returning the stored observation for any input."""

    def __init__(self, y):
        self.y = np.asarray(y, dtype=np.float64)

    def predict(self, g, x):
        val = self.y if (not isinstance(x, Tensor) or x.value.ndim == 1) else np.tile(self.y, (x.value.shape[0], 1))
        return ad.constant(val) + (x if isinstance(x, Tensor) else ad.constant(x)) * 0.0


# encode / reparameterize / decode -------------------------------------------


def test_zero_encoder_gives_standard_posterior():
    vae = zero_vae()
    mu, sigma = encode(vae, np.zeros(6))
    assert np.allclose(mu.value, 0.0)
    assert np.allclose(sigma.value, 1.0)


def test_sigma_always_positive(rng):
    vae = init_vae(12, 3, 8, rng)
    for _ in range(10):
        _, sigma = encode(vae, rng.uniform(0, 1, 12))
        assert np.all(sigma.value > 0)


def test_distinct_inputs_distinct_means(rng):
    vae = init_vae(12, 3, 8, rng)
    mu_a, _ = encode(vae, rng.integers(0, 2, 12).astype(float))
    mu_b, _ = encode(vae, 1.0 - mu_a.value[0] * 0 + rng.integers(0, 2, 12).astype(float))
    assert not np.allclose(mu_a.value, mu_b.value)


def test_reparameterize_eps_zero_gives_mu():
    mu = ad.constant(np.array([1.0, -2.0]))
    sigma = ad.constant(np.array([3.0, 4.0]))
    z = reparameterize(mu, sigma, np.zeros(2))
    assert np.allclose(z.value, [1.0, -2.0])


def test_reparameterize_sigma_zero_ignores_eps(rng):
    mu = ad.constant(np.array([0.5, 0.5]))
    z = reparameterize(mu, ad.constant(np.zeros(2)), rng.normal(size=2))
    assert np.allclose(z.value, 0.5)


def test_reparameterize_sample_mean(rng):
    mu = np.array([1.0, -1.0, 0.25])
    sigma = np.array([0.5, 2.0, 1.0])
    draws = np.array([reparameterize(ad.constant(mu), ad.constant(sigma), rng.standard_normal(3)).value for _ in range(10000)])
    se = sigma / np.sqrt(10000)
    assert np.all(np.abs(draws.mean(axis=0) - mu) < 4 * se)


def test_zero_decoder_gives_half():
    vae = zero_vae()
    out = decode(vae, np.zeros(2))
    assert out.value.shape == (6,)
    assert np.allclose(out.value, 0.5)


def test_always_seeded_node_gets_high_decoder_probability(karate):
    rng = np.random.default_rng(55)
    episodes = []
    for _ in range(40):
        x = np.zeros(34, dtype=np.int8)
        x[7] = 1
        x[rng.choice([i for i in range(34) if i != 7], size=2, replace=False)] = 1
        subs, degenerate = sample_monotone_subsets(x, 2, rng)
        episodes.append(
            EpisodePair(x, x.astype(float), [(s, s.astype(float)) for s in subs], degenerate)
        )
    fwd = init_forward(rng=np.random.default_rng(56))
    cfg = TrainConfig(latent_dim=4, hidden=32, epochs=250, batch_size=16, penalty_weight=0.0)
    vae, _ = train_vae(karate, episodes, fwd, cfg, np.random.default_rng(57))
    mu, _ = encode(vae, np.array([ep.source.astype(float) for ep in episodes]))
    mean_latent = mu.value.mean(axis=0)
    assert decode(vae, mean_latent).value[7] > 0.9


# kl_normal -------------------------------------------------------------------


def test_kl_standard_normal_is_zero():
    assert kl_normal(np.zeros(3), np.ones(3)) == pytest.approx(0.0, abs=1e-12)


def test_kl_unit_mean_example():
    assert kl_normal(np.array([1.0]), np.array([1.0])) == pytest.approx(0.5)


def test_kl_nonpositive_sigma_errors():
    with pytest.raises(ValueError):
        kl_normal(np.zeros(2), np.array([1.0, 0.0]))


def test_kl_nonnegative_random(rng):
    for _ in range(50):
        mu = rng.normal(size=4)
        sigma = rng.uniform(0.1, 3.0, 4)
        assert kl_normal(mu, sigma) >= 0.0


def test_kl_matches_monte_carlo(rng):
    # oracle: E_q[log q(z) - log p(z)] by direct sampling
    for _ in range(5):
        mu = rng.normal(size=3)
        sigma = rng.uniform(0.3, 2.0, 3)
        z = mu + sigma * rng.standard_normal((200000, 3))
        log_q = -0.5 * np.sum(((z - mu) / sigma) ** 2 + np.log(2 * np.pi * sigma**2), axis=1)
        log_p = -0.5 * np.sum(z**2 + np.log(2 * np.pi), axis=1)
        mc = float(np.mean(log_q - log_p))
        closed = kl_normal(mu, sigma)
        assert abs(closed - mc) <= 0.02 * max(abs(closed), 1e-3) + 3 * np.std(log_q - log_p) / np.sqrt(len(z))


# monotonicity penalty ----------------------------------------------------------


def test_penalty_zero_when_dominated():
    y_i = np.array([0.5, 0.8, 0.9])
    assert monotonicity_penalty(y_i, y_i - 0.1) == 0.0


def test_penalty_uniform_excess():
    y_i = np.full(4, 0.5)
    assert monotonicity_penalty(y_i, y_i + 0.1) == pytest.approx(0.04)


def test_penalty_matches_loop_oracle(rng):
    for _ in range(20):
        a = rng.uniform(0, 1, 15)
        b = rng.uniform(0, 1, 15)
        total = 0.0
        for x, y in zip(a, b):
            d = y - x
            if d > 0:
                total += d * d
        assert monotonicity_penalty(a, b) == pytest.approx(total, rel=1e-12)


def test_penalty_length_mismatch():
    with pytest.raises(ValueError):
        monotonicity_penalty(np.zeros(3), np.zeros(4))


def test_penalty_zero_under_exact_monotone_oracle(karate, rng):
    oracle = DeterministicDiffusionOracle(karate, steps=2)
    for _ in range(10):
        x = np.zeros(34)
        x[rng.choice(34, size=4, replace=False)] = 1.0
        subs, _ = sample_monotone_subsets(x.astype(np.int8), 3, rng)
        y_full = oracle.predict(karate, x).value
        for s in subs:
            y_sub = oracle.predict(karate, s.astype(float)).value
            assert monotonicity_penalty(y_full, y_sub) == pytest.approx(0.0, abs=1e-18)


# elbo ---------------------------------------------------------------------------


def _mini_batch(rng, num_nodes=10, size=4, subsets=2):
    eps = []
    for _ in range(size):
        x = np.zeros(num_nodes, dtype=np.int8)
        x[rng.choice(num_nodes, size=3, replace=False)] = 1
        subs, degenerate = sample_monotone_subsets(x, subsets, rng)
        eps.append(EpisodePair(x, rng.uniform(0, 1, num_nodes), [(s, s * 0.5) for s in subs], degenerate))
    return eps


def test_elbo_empty_batch(karate, rng):
    fwd = init_forward(rng=rng)
    vae = init_vae(34, 4, 8, rng)
    with pytest.raises(ValueError):
        elbo_loss(vae, fwd, karate, [], TrainConfig(latent_dim=4), rng)


def test_elbo_lambda_zero_reduces_to_three_terms(karate, rng):
    from sourceloc.graphs import from_edges

    g = from_edges([(i, i + 1) for i in range(9)])
    batch = _mini_batch(rng)
    fwd = init_forward(rng=np.random.default_rng(1))
    vae = init_vae(10, 3, 8, np.random.default_rng(2))
    eps = np.random.default_rng(3).standard_normal((len(batch), 3))
    cfg0 = TrainConfig(latent_dim=3, penalty_weight=0.0)
    loss0, terms0, _ = elbo_loss(vae, fwd, g, batch, cfg0, rng, eps=eps)
    assert terms0["penalty"] == 0.0
    assert loss0 == pytest.approx(terms0["forward"] + terms0["recon"] + terms0["kl"], rel=1e-12)
    # independent recomputation of each term with plain numpy
    xs = np.array([ep.source.astype(float) for ep in batch])
    ys = np.array([ep.observation for ep in batch])
    mu, sigma = encode(vae, xs)
    z = mu.value + sigma.value * eps
    x_hat = np.clip(decode(vae, z).value, 1e-7, 1 - 1e-7)
    recon = -np.mean(np.sum(xs * np.log(x_hat) + (1 - xs) * np.log(1 - x_hat), axis=1))
    kl = np.mean([kl_normal(mu.value[i], sigma.value[i]) for i in range(len(batch))])
    from sourceloc.forward_model import forward_predict

    fit = np.mean((forward_predict(fwd, g, xs).value - ys) ** 2)
    assert loss0 == pytest.approx(fit + recon + kl, rel=1e-9)


def test_elbo_additivity_and_nonnegative_kl(karate, rng):
    from sourceloc.graphs import from_edges

    g = from_edges([(i, i + 1) for i in range(9)])
    batch = _mini_batch(rng)
    fwd = init_forward(rng=np.random.default_rng(4))
    vae = init_vae(10, 3, 8, np.random.default_rng(5))
    cfg = TrainConfig(latent_dim=3, penalty_weight=2.5)
    eps = np.random.default_rng(6).standard_normal((len(batch), 3))
    loss, terms, _ = elbo_loss(vae, fwd, g, batch, cfg, rng, eps=eps)
    assert terms["kl"] >= 0.0
    assert loss == pytest.approx(
        terms["forward"] + terms["recon"] + terms["kl"] + 2.5 * terms["penalty"], rel=1e-12
    )


def test_elbo_exact_forward_model_zeroes_fit_term(rng):
    from sourceloc.graphs import from_edges

    g = from_edges([(i, i + 1) for i in range(9)])
    batch = _mini_batch(rng)
    y = batch[0].observation
    for ep in batch:
        ep.observation = y.copy()
    vae = init_vae(10, 3, 8, np.random.default_rng(7))
    cfg = TrainConfig(latent_dim=3, penalty_weight=0.0)
    loss, terms, _ = elbo_loss(vae, LookupForward(y), g, batch, cfg, rng)
    assert terms["forward"] == pytest.approx(0.0, abs=1e-18)
    assert loss == pytest.approx(terms["recon"] + terms["kl"], rel=1e-12)


def test_elbo_invariant_to_subset_shuffle_when_lambda_zero(rng):
    from sourceloc.graphs import from_edges

    g = from_edges([(i, i + 1) for i in range(9)])
    batch = _mini_batch(rng, subsets=3)
    fwd = LookupForward(batch[0].observation)
    vae = init_vae(10, 3, 8, np.random.default_rng(8))
    cfg = TrainConfig(latent_dim=3, penalty_weight=0.0)
    eps = np.random.default_rng(9).standard_normal((len(batch), 3))
    loss_a, _, _ = elbo_loss(vae, fwd, g, batch, cfg, rng, eps=eps)
    for ep in batch:
        ep.subsets = ep.subsets[::-1]
    loss_b, _, _ = elbo_loss(vae, fwd, g, batch, cfg, rng, eps=eps)
    assert loss_a == loss_b


def test_elbo_gradients_match_finite_differences(rng):
    from sourceloc.graphs import from_edges
    from sourceloc.vae import _batch_arrays, _elbo_graph

    g = from_edges([(i, i + 1) for i in range(9)])
    batch = _mini_batch(rng, size=3, subsets=2)
    fwd = init_forward(depth=2, hidden=6, rng=np.random.default_rng(10))
    vae = init_vae(10, 3, 6, np.random.default_rng(11))
    xs, ys, sub_xs, _ = _batch_arrays(batch)
    eps = np.random.default_rng(12).standard_normal((len(batch), 3))
    x_leaf = ad.parameter(xs * 0.6 + 0.2)

    def loss_fn():
        return _elbo_graph(vae, fwd, g, x_leaf, ys, sub_xs, eps, 1.5)[0]

    assert ad.finite_diff_check(loss_fn, x_leaf, 1e-6) < 1e-3
    for leaf in vae.tensors()[:4] + fwd.mlp.tensors()[:2]:
        assert ad.finite_diff_check(loss_fn, leaf, 1e-6) < 1e-3


def test_bce_minimized_at_target_probability():
    # single-node grid search: cross-entropy against binary target dips at f = x
    for target in (0.0, 1.0):
        grid = np.linspace(0.01, 0.99, 99)
        bce = -(target * np.log(grid) + (1 - target) * np.log(1 - grid))
        best = grid[np.argmin(bce)]
        assert abs(best - target) <= 0.011


# training ------------------------------------------------------------------------


def test_train_vae_loss_decreases(mini_models):
    trace = mini_models["trace"]
    assert trace[99] < trace[0]


def test_train_vae_trace_length(karate, karate_dataset):
    fwd = init_forward(rng=np.random.default_rng(13))
    cfg = TrainConfig(latent_dim=4, hidden=16, epochs=7, batch_size=16)
    _, trace = train_vae(karate, karate_dataset, fwd, cfg, np.random.default_rng(14))
    assert len(trace) == 7


def test_train_vae_bitwise_deterministic(karate, karate_dataset):
    fwd = init_forward(rng=np.random.default_rng(15))
    cfg = TrainConfig(latent_dim=4, hidden=16, epochs=5, batch_size=16)
    vae_a, trace_a = train_vae(karate, karate_dataset[:20], fwd, cfg, np.random.default_rng(16))
    vae_b, trace_b = train_vae(karate, karate_dataset[:20], fwd, cfg, np.random.default_rng(16))
    assert trace_a == trace_b
    for a, b in zip(vae_a.tensors(), vae_b.tensors()):
        assert np.array_equal(a.value, b.value)


def test_posterior_not_collapsed(mini_models):
    sources = [ep.source for ep in mini_models["dataset"]]
    assert posterior_mean_spread(mini_models["vae"], sources) > 1e-4


def test_latent_dim_must_be_small(rng):
    with pytest.raises(ValueError):
        init_vae(8, 8, 16, rng)
