import numpy as np
import pytest

from textmotion import autodiff as ad
from textmotion import nn
from textmotion.motiondata import Normalizer, Vocabulary
from textmotion.seeding import stream


def test_duplicate_parameter_rejected():
    store = nn.ParamStore()
    store.add("w", np.zeros(3))
    with pytest.raises(ValueError):
        store.add("w", np.zeros(3))


def test_mlp_zero_weights_outputs_zero():
    store = nn.ParamStore()
    store.add("net.w0", np.zeros((4, 3)))
    store.add("net.b0", np.zeros(3))
    tape = ad.Tape()
    out = nn.mlp_forward(store.bind(tape), "net", tape.leaf(np.ones((2, 4))), 1)
    np.testing.assert_array_equal(out.data, 0.0)


def test_mlp_identity_configuration():
    store = nn.ParamStore()
    store.add("net.w0", np.eye(4))
    store.add("net.b0", np.zeros(4))
    x = np.arange(8.0).reshape(2, 4)
    tape = ad.Tape()
    out = nn.mlp_forward(store.bind(tape), "net", tape.leaf(x), 1)
    np.testing.assert_array_equal(out.data, x)


def test_mlp_gradient_matches_finite_differences():
    store = nn.ParamStore()
    nn.init_mlp(store, "net", [3, 8, 2], seed=5)
    x = stream(5, "x").uniform(-1, 1, size=(4, 3))

    def loss_for(w0):
        saved = store.params["net.w0"]
        store.params["net.w0"] = w0
        tape = ad.Tape()
        out = nn.mlp_forward(store.bind(tape), "net", x, 2)
        val = float(ad.sum_(ad.mul(out, out)).data)
        store.params["net.w0"] = saved
        return val

    tape = ad.Tape()
    bound = store.bind(tape)
    out = nn.mlp_forward(bound, "net", x, 2)
    grads = tape.backward(ad.sum_(ad.mul(out, out)))
    analytic = bound.gradients(grads)["net.w0"]

    w0 = store.params["net.w0"]
    numeric = np.zeros_like(w0)
    h = 1e-6
    for idx in np.ndindex(*w0.shape):
        hi = w0.copy(); hi[idx] += h
        lo = w0.copy(); lo[idx] -= h
        numeric[idx] = (loss_for(hi) - loss_for(lo)) / (2 * h)
    scale = max(np.abs(analytic).max(), np.abs(numeric).max())
    assert np.abs(analytic - numeric).max() / scale < 1e-6


# ---------------------------------------------------------------------------
# instruction encoder


@pytest.fixture(scope="module")
def text_setup():
    vocab = Vocabulary()
    store = nn.ParamStore()
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size), seed=9)
    return vocab, store


def test_all_padding_pools_to_zero(text_setup):
    vocab, store = text_setup
    tape = ad.Tape()
    bound = store.bind(tape)
    out_pad = nn.encode_instruction(bound, vocab.tokenize(""))
    # zero pooled vector -> MLP of zero input: tanh(0 @ w + b) @ w1 + b1
    zero_in = nn.mlp_forward(bound, "textenc.mlp", np.zeros((1, 64)), 2)
    np.testing.assert_allclose(out_pad.data, ad._data(zero_in), atol=1e-12)


def test_bag_of_words_order_invariance(text_setup):
    vocab, store = text_setup
    tape = ad.Tape()
    bound = store.bind(tape)
    a = nn.encode_instruction(bound, vocab.tokenize("a person walks forward"))
    b = nn.encode_instruction(bound, vocab.tokenize("forward walks person a"))
    np.testing.assert_allclose(a.data, b.data, atol=1e-12)


def test_distinct_instructions_embed_differently(text_setup):
    vocab, store = text_setup
    tape = ad.Tape()
    bound = store.bind(tape)
    a = nn.encode_instruction(bound, vocab.tokenize("a person walks forward"))
    b = nn.encode_instruction(bound, vocab.tokenize("someone jumps"))
    assert np.linalg.norm(a.data - b.data) > 1e-3


def test_encoder_output_dim(text_setup):
    vocab, store = text_setup
    tape = ad.Tape()
    out = nn.encode_instruction(store.bind(tape), vocab.tokenize("a person runs"))
    assert out.data.shape == (1, 64)


# ---------------------------------------------------------------------------
# denoiser


@pytest.fixture(scope="module")
def denoiser_setup():
    cfg = nn.DenoiserConfig(frame_dim=18, cond_dim=64, width=64, heads=4, blocks=2)
    store = nn.ParamStore()
    nn.init_denoiser(store, cfg, seed=21)
    return cfg, store


def test_denoiser_preserves_shape(denoiser_setup):
    cfg, store = denoiser_setup
    rng = stream(0, "x")
    for L in (10, 90):
        x = rng.normal(size=(L, cfg.frame_dim))
        tape = ad.Tape()
        out = nn.denoiser_forward(store.bind(tape), cfg, tape.leaf(x), t=3,
                                  cond=np.zeros((1, 64)))
        assert out.data.shape == (L, cfg.frame_dim)


def test_denoiser_depends_on_timestep(denoiser_setup):
    cfg, store = denoiser_setup
    x = stream(1, "x").normal(size=(12, cfg.frame_dim))
    tape = ad.Tape()
    bound = store.bind(tape)
    cond = np.zeros((1, 64))
    a = nn.denoiser_forward(bound, cfg, x, t=1, cond=cond)
    b = nn.denoiser_forward(bound, cfg, x, t=500, cond=cond)
    assert np.abs(ad._data(a) - ad._data(b)).max() > 1e-6


def test_denoiser_condition_gradient_nonzero(denoiser_setup):
    cfg, store = denoiser_setup
    x = stream(2, "x").normal(size=(8, cfg.frame_dim))
    tape = ad.Tape()
    cond = tape.leaf(stream(3, "c").normal(size=(1, 64)))
    out = nn.denoiser_forward(store.bind(tape), cfg, x, t=10, cond=cond)
    grads = tape.backward(ad.sum_(ad.mul(out, out)))
    assert np.abs(grads.wrt(cond)).max() > 0


def test_denoiser_batched_matches_single(denoiser_setup):
    cfg, store = denoiser_setup
    rng = stream(4, "batch")
    x = rng.normal(size=(2, 7, cfg.frame_dim))
    cond = rng.normal(size=(2, 64))
    tape = ad.Tape()
    bound = store.bind(tape)
    both = nn.denoiser_forward(bound, cfg, x, t=np.array([5, 9]), cond=cond)
    one = nn.denoiser_forward(bound, cfg, x[0], t=5, cond=cond[0:1])
    np.testing.assert_allclose(ad._data(both)[0], ad._data(one), atol=1e-10)


# ---------------------------------------------------------------------------
# gaussian heads


def test_sample_gaussian_zero_noise_returns_mean():
    params = nn.GaussianParams(mean=np.array([1.0, -2.0]), logvar=np.array([0.3, 0.3]))
    np.testing.assert_array_equal(nn.sample_gaussian(params, np.zeros(2)), [1.0, -2.0])


def test_sample_gaussian_unit_logvar_offsets_by_noise():
    params = nn.GaussianParams(mean=np.array([0.5]), logvar=np.array([0.0]))
    np.testing.assert_allclose(nn.sample_gaussian(params, np.ones(1)), [1.5])


def test_sample_gaussian_monte_carlo_mean():
    mu = np.array([0.7, -1.2])
    sigma = np.array([0.5, 2.0])
    params = nn.GaussianParams(mean=mu, logvar=2 * np.log(sigma))
    n = 10**5
    eps = stream(8, "mc").normal(size=(n, 2))
    draws = nn.sample_gaussian(params, eps)
    tol = 3 * sigma / np.sqrt(n)
    assert np.all(np.abs(draws.mean(axis=0) - mu) < tol)


def test_logvar_clamped():
    params = nn.GaussianParams(mean=np.zeros(2), logvar=np.array([-50.0, 50.0]))
    np.testing.assert_array_equal(ad._data(params.logvar), [-10.0, 4.0])


# ---------------------------------------------------------------------------
# adam


def test_adam_zero_gradient_keeps_parameters():
    store = nn.ParamStore()
    store.add("w", np.array([1.0, 2.0]))
    nn.adam_step(store, {"w": np.zeros(2)}, lr=0.1)
    np.testing.assert_array_equal(store.params["w"], [1.0, 2.0])


def test_adam_descends_quadratic():
    store = nn.ParamStore()
    store.add("w", np.array([1.0]))
    nn.adam_step(store, {"w": np.array([2.0])}, lr=0.1)  # grad of w^2 at 1
    assert store.params["w"][0] < 1.0


def test_adam_matches_hand_computed_first_step():
    # g=1, defaults: m_hat=1, v_hat=1 -> w -= lr * 1/(1+eps)
    store = nn.ParamStore()
    store.add("w", np.array([0.0]))
    nn.adam_step(store, {"w": np.array([1.0])}, lr=0.1)
    expected = -0.1 * 1.0 / (1.0 + 1e-8)
    np.testing.assert_allclose(store.params["w"], [expected], rtol=1e-12)


def test_adam_missing_key_errors():
    store = nn.ParamStore()
    store.add("w", np.zeros(1))
    with pytest.raises(KeyError):
        nn.adam_step(store, {"nope": np.zeros(1)}, lr=0.1)


# ---------------------------------------------------------------------------
# checkpoints


def test_checkpoint_roundtrip(tmp_path):
    vocab = Vocabulary()
    store = nn.ParamStore()
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size), seed=1)
    norm = Normalizer(np.arange(4.0), np.ones(4) * 2)
    path = tmp_path / "model.ckpt"
    nn.save_checkpoint(path, {"textenc": store}, normalizer=norm)

    records = nn.load_checkpoint(path)
    loaded = nn.store_from_records(records, "textenc")
    assert set(loaded.params) == set(store.params)
    for name in store.params:
        np.testing.assert_array_equal(loaded.params[name], store.params[name])
    np.testing.assert_array_equal(records["normalizer/mean"], norm.mean)
    np.testing.assert_array_equal(records["normalizer/std"], norm.std)


def test_checkpoint_magic_enforced(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError):
        nn.load_checkpoint(path)


def test_default_configuration_parameter_budget():
    vocab = Vocabulary()
    stores = {}
    stores["denoiser"] = nn.ParamStore()
    nn.init_denoiser(stores["denoiser"], nn.DenoiserConfig(frame_dim=18), seed=0)
    stores["textenc"] = nn.ParamStore()
    nn.init_text_encoder(stores["textenc"], nn.TextEncoderConfig(vocab_size=vocab.size), seed=0)
    stores["skills"] = nn.ParamStore()
    nn.init_mlp(stores["skills"], "enc", [36, 256, 256, 256], seed=0)
    nn.init_mlp(stores["skills"], "dec", [82, 256, 256, 256, 6], seed=0)
    total = sum(s.n_parameters() for s in stores.values())
    assert total < 2_000_000
