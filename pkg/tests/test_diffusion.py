import numpy as np
import pytest

from textmotion import autodiff as ad
from textmotion import diffusion as df
from textmotion import motiondata as md
from textmotion import nn, physics
from textmotion.seeding import stream


SCHED = df.DiffusionSchedule(steps=1000, beta_start=1e-4, beta_end=0.02)
MODEL = physics.default_character()


def test_schedule_tables_and_identities():
    assert SCHED.betas[0] == 1e-4 and SCHED.betas[-1] == 0.02
    assert len(SCHED.alpha_bars) == 1000
    np.testing.assert_allclose(SCHED.alpha_bars,
                               SCHED.alpha_bars_prev * SCHED.alphas, rtol=1e-15)
    assert np.all(np.diff(SCHED.alpha_bars) < 0)
    assert np.all(SCHED.posterior_var[1:] > 0)
    assert np.all(SCHED.posterior_var[1:] <= SCHED.betas[1:] + 1e-15)


def test_q_sample_zero_noise_scales_input():
    tau0 = stream(1, "q").normal(size=(5, 3))
    for t in (0, 17, 999):
        out = df.q_sample(SCHED, tau0, t, np.zeros_like(tau0))
        np.testing.assert_allclose(out, np.sqrt(SCHED.alpha_bars[t]) * tau0, rtol=1e-15)


def test_q_sample_identity_when_alpha_bar_is_one():
    # a hypothetical zero-beta prefix keeps the signal untouched
    sched = df.DiffusionSchedule(steps=10, beta_start=1e-12, beta_end=1e-3)
    tau0 = np.ones((2, 2))
    eps = stream(2, "q").normal(size=(2, 2))
    out = df.q_sample(sched, tau0, 0, eps)
    np.testing.assert_allclose(out, tau0, atol=1e-5)


def test_q_sample_rejects_bad_timestep():
    with pytest.raises(ValueError):
        df.q_sample(SCHED, np.zeros((2, 2)), 1000, np.zeros((2, 2)))


def test_single_step_composition_matches_closed_form():
    # iterating tau_t = sqrt(1-beta_t) tau_{t-1} + sqrt(beta_t) eps gives a
    # Gaussian whose mean/variance must match the closed-form marginal
    mean_coef = 1.0
    var = 0.0
    for t in range(200):
        mean_coef *= np.sqrt(1.0 - SCHED.betas[t])
        var = (1.0 - SCHED.betas[t]) * var + SCHED.betas[t]
        assert abs(mean_coef - np.sqrt(SCHED.alpha_bars[t])) < 1e-10
        assert abs(var - (1.0 - SCHED.alpha_bars[t])) < 1e-10


def test_posterior_step_zero_noise_returns_mean():
    rng = stream(3, "post")
    tau_t = rng.normal(size=(4, 2))
    pred = rng.normal(size=(4, 2))
    t = 500
    beta = SCHED.betas[t]
    ab, abp, alpha = SCHED.alpha_bars[t], SCHED.alpha_bars_prev[t], SCHED.alphas[t]
    expected = (np.sqrt(abp) * beta / (1 - ab)) * pred \
        + (np.sqrt(alpha) * (1 - abp) / (1 - ab)) * tau_t
    out = df.posterior_step(SCHED, tau_t, t, pred, np.zeros_like(tau_t))
    np.testing.assert_allclose(out, expected, rtol=1e-12)


def test_posterior_step_constant_trajectory_hand_evaluated():
    v = np.full((3, 2), 1.7)
    t = 250
    beta = SCHED.betas[t]
    ab, abp, alpha = SCHED.alpha_bars[t], SCHED.alpha_bars_prev[t], SCHED.alphas[t]
    coef = np.sqrt(abp) * beta / (1 - ab) + np.sqrt(alpha) * (1 - abp) / (1 - ab)
    out = df.posterior_step(SCHED, v, t, v, np.zeros_like(v))
    np.testing.assert_allclose(out, coef * v, rtol=1e-12)


def test_posterior_step_final_transition_ignores_noise():
    v = np.ones((2, 2))
    a = df.posterior_step(SCHED, v, 1, v, np.full((2, 2), 100.0))
    b = df.posterior_step(SCHED, v, 1, v, np.zeros((2, 2)))
    np.testing.assert_array_equal(a, b)


def test_posterior_step_rejects_t_zero():
    with pytest.raises(ValueError):
        df.posterior_step(SCHED, np.zeros((2, 2)), 0, np.zeros((2, 2)), np.zeros((2, 2)))


# ---------------------------------------------------------------------------
# training


def _toy_dataset(n, L=8, D=3, seed=0):
    rng = stream(seed, "toyset")
    vocab = md.Vocabulary()
    data = []
    for i in range(n):
        frames = rng.normal(size=(L, D))
        frames /= frames.std()
        data.append((frames, vocab.tokenize("a person walks forward")))
    return data


def test_train_epoch_oracle_denoiser_gives_zero_loss():
    # every sample shares the same clean trajectory, so a stub that returns it
    # is an exact denoiser regardless of batch shuffling
    vocab = md.Vocabulary()
    clean = stream(4, "clean").normal(size=(8, 3))
    data = [(clean.copy(), vocab.tokenize("a person walks forward")) for _ in range(8)]
    store = nn.ParamStore()
    cfg = nn.DenoiserConfig(frame_dim=3, width=16, heads=2, blocks=1)
    nn.init_denoiser(store, cfg, seed=1)
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size), seed=2)

    def forward_fn(bound, cfg_, noisy, t, cond):
        return np.broadcast_to(clean, ad._data(noisy).shape)

    loss = df.train_epoch(data, store, cfg, SCHED, batch_size=4, seed=3,
                          cond_dropout=0.0, forward_fn=forward_fn)
    assert loss < 1e-20


def test_train_epoch_zero_denoiser_unit_variance_loss_near_one():
    data = _toy_dataset(16, seed=5)
    store = nn.ParamStore()
    cfg = nn.DenoiserConfig(frame_dim=3, width=16, heads=2, blocks=1)
    nn.init_denoiser(store, cfg, seed=1)
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=md.Vocabulary().size), seed=2)

    def zero_fn(bound, cfg_, noisy, t, cond):
        return np.zeros_like(ad._data(noisy))

    loss = df.train_epoch(data, store, cfg, SCHED, batch_size=8, seed=3,
                          cond_dropout=0.0, forward_fn=zero_fn)
    assert abs(loss - 1.0) < 0.15


def test_train_epoch_rejects_empty_dataset():
    store = nn.ParamStore()
    cfg = nn.DenoiserConfig(frame_dim=3)
    with pytest.raises(ValueError):
        df.train_epoch([], store, cfg, SCHED, batch_size=4, seed=0)


# ---------------------------------------------------------------------------
# guidance


def _normalizer():
    return md.Normalizer(np.zeros(MODEL.state_dim), np.ones(MODEL.state_dim))


def test_waypoint_guidance_masks_first_and_last_quarter():
    norm = _normalizer()
    start = physics.standing_state(MODEL)
    g = df.make_waypoint_guidance(MODEL, norm, start, (2.0, 0.0), 90)
    frames_masked = np.where(g.mask.any(axis=1))[0]
    assert frames_masked.min() == 0 and frames_masked.max() == 89
    np.testing.assert_array_equal(np.sort(frames_masked),
                                  np.concatenate([np.arange(22), np.arange(68, 90)]))
    assert g.values[0, 0] == start[0]
    assert g.values[89, 0] == 2.0


def test_waypoint_guidance_same_target_repeats_frames():
    norm = _normalizer()
    start = physics.standing_state(MODEL)
    g = df.make_waypoint_guidance(MODEL, norm, start, (start[0], 0.0), 90)
    masked = g.values[g.mask.any(axis=1)]
    assert np.all(masked == masked[0])


def test_history_guidance_copies_exact_tail():
    norm = _normalizer()
    rng = stream(9, "hist")
    history = rng.normal(size=(22, MODEL.state_dim))
    g = df.make_history_guidance(norm, history, 90)
    np.testing.assert_array_equal(g.values[:22], history)
    assert g.mask[:22].all() and not g.mask[22:].any()


def test_history_guidance_pads_single_state():
    norm = _normalizer()
    state = stream(10, "hist").normal(size=(1, MODEL.state_dim))
    g = df.make_history_guidance(norm, state, 90)
    np.testing.assert_array_equal(g.values[:22], np.repeat(state, 22, axis=0))


def test_merge_guidance_history_wins_overlap():
    norm = _normalizer()
    start = physics.standing_state(MODEL)
    hist = df.make_history_guidance(norm, np.full((5, MODEL.state_dim), 7.0), 90)
    wp = df.make_waypoint_guidance(MODEL, norm, start, (1.0, 0.0), 90)
    merged = df.merge_guidance(hist, wp)
    np.testing.assert_array_equal(merged.values[:22], hist.values[:22])
    np.testing.assert_array_equal(merged.values[68:], wp.values[68:])
    assert merged.mask[:22].all() and merged.mask[68:].all()


# ---------------------------------------------------------------------------
# sampling


@pytest.fixture(scope="module")
def tiny_planner():
    store = nn.ParamStore()
    cfg = nn.DenoiserConfig(frame_dim=4, width=16, heads=2, blocks=1)
    nn.init_denoiser(store, cfg, seed=4)
    sched = df.DiffusionSchedule(steps=50)
    return store, cfg, sched


def test_sample_deterministic_under_seed(tiny_planner):
    store, cfg, sched = tiny_planner
    cond = np.zeros((1, 64))
    a = df.sample(store, cfg, sched, cond, 12, 4, sampler="ancestral", seed=9)
    b = df.sample(store, cfg, sched, cond, 12, 4, sampler="ancestral", seed=9)
    np.testing.assert_array_equal(a, b)
    c = df.sample(store, cfg, sched, cond, 12, 4, sampler="ancestral", seed=10)
    assert np.abs(a - c).max() > 1e-8


def test_sample_full_mask_returns_guidance_exactly(tiny_planner):
    store, cfg, sched = tiny_planner
    values = stream(11, "g").normal(size=(12, 4))
    g = df.GuidanceCondition(mask=np.ones((12, 4), dtype=bool), values=values)
    for sampler in ("ancestral", "ddim"):
        out = df.sample(store, cfg, sched, np.zeros((1, 64)), 12, 4,
                        guidance=g, sampler=sampler, seed=1)
        np.testing.assert_array_equal(out, values)


def test_sample_partial_mask_bitwise_on_masked_frames(tiny_planner):
    store, cfg, sched = tiny_planner
    values = np.zeros((12, 4))
    mask = np.zeros((12, 4), dtype=bool)
    mask[:3] = True
    values[:3] = 0.5
    g = df.GuidanceCondition(mask=mask, values=values)
    out = df.sample(store, cfg, sched, np.zeros((1, 64)), 12, 4, guidance=g,
                    sampler="ddim", ddim_steps=10, seed=2)
    assert np.array_equal(out[:3], values[:3])
    assert np.abs(out[3:]).max() > 0


def test_sample_rejects_oversized_ddim(tiny_planner):
    store, cfg, sched = tiny_planner
    with pytest.raises(ValueError):
        df.sample(store, cfg, sched, np.zeros((1, 64)), 12, 4,
                  sampler="ddim", ddim_steps=51)


def test_sample_rejects_unknown_sampler(tiny_planner):
    store, cfg, sched = tiny_planner
    with pytest.raises(ValueError):
        df.sample(store, cfg, sched, np.zeros((1, 64)), 12, 4, sampler="euler")
