import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textmotion import motiondata as md
from textmotion import physics


TPL = md.standard_templates()
MODEL = physics.default_character()


def test_idle_root_displacement_tiny():
    clip = md.generate_clip(TPL["idle"], {"sway": 0.03}, seed=11)
    disp = np.linalg.norm(clip.frames[-1, :2] - clip.frames[0, :2])
    assert disp < 0.01


def test_walk_displacement_is_speed_times_duration():
    clip = md.generate_clip(TPL["walk"], {"speed": 1.0, "freq": 1.4, "knee": 0.5, "ramp": 0.0},
                            seed=3, length=91)
    dx = clip.frames[-1, 0] - clip.frames[0, 0]
    assert abs(dx - 1.0 * 3.0) < 1e-9


def test_generate_clip_deterministic():
    kwargs = dict(template=TPL["run"], params={"speed": 2.0, "freq": 2.1, "knee": 0.9, "ramp": 1.0},
                  seed=42)
    a = md.generate_clip(**kwargs)
    b = md.generate_clip(**kwargs)
    assert a.text == b.text
    np.testing.assert_array_equal(a.frames, b.frames)


def test_params_out_of_range_rejected():
    with pytest.raises(ValueError):
        md.generate_clip(TPL["walk"], {"speed": 9.0, "freq": 1.4, "knee": 0.5, "ramp": 0.0}, seed=1)


def test_ramped_clip_starts_and_ends_standing():
    clip = md.generate_clip(TPL["walk"], {"speed": 1.0, "freq": 1.4, "knee": 0.5, "ramp": 1.0}, seed=5)
    np.testing.assert_allclose(clip.frames[0, 3:9], 0.0, atol=1e-9)
    np.testing.assert_allclose(clip.frames[-1, 3:9], 0.0, atol=1e-9)


def test_retarget_grounded_clip_changes_only_velocities():
    clip = md.generate_clip(TPL["walk"], {"speed": 0.8, "freq": 1.3, "knee": 0.5, "ramp": 0.0}, seed=7)
    rt = md.retarget(clip, MODEL)
    # generator already grounds per frame, so the constant offset is ~0
    np.testing.assert_allclose(rt.frames[:, :9], clip.frames[:, :9], atol=1e-9)


def test_retarget_removes_float_offset():
    clip = md.generate_clip(TPL["walk"], {"speed": 0.8, "freq": 1.3, "knee": 0.5, "ramp": 0.0}, seed=7)
    floated = md.MotionClip(clip.id, clip.text, clip.fps, clip.frames.copy())
    floated.frames[:, 1] += 0.3
    rt = md.retarget(floated, MODEL)
    np.testing.assert_allclose(rt.frames[:, 1], clip.frames[:, 1], atol=1e-9)


def test_retarget_clamps_joint_overshoot():
    clip = md.generate_clip(TPL["walk"], {"speed": 0.8, "freq": 1.3, "knee": 0.5, "ramp": 0.0}, seed=7)
    hot = md.MotionClip(clip.id, clip.text, clip.fps, clip.frames.copy())
    hot.frames[10, 3] = 3.0
    rt = md.retarget(hot, MODEL)
    assert rt.frames[10, 3] == MODEL.joints[0].limits[1]


def test_retarget_dimension_mismatch():
    clip = md.generate_clip(TPL["idle"], {"sway": 0.02}, seed=2)
    bad = md.MotionClip(clip.id, clip.text, clip.fps, clip.frames[:, :10])
    with pytest.raises(ValueError):
        md.retarget(bad, MODEL)


# ---------------------------------------------------------------------------
# dataset


@pytest.fixture(scope="module")
def small_dataset():
    return md.build_dataset(n_clips=40, split_ratio=0.9, seed=123)


def test_split_counts(small_dataset):
    train, test, _ = small_dataset
    assert len(train) == 36 and len(test) == 4


def test_split_ids_disjoint(small_dataset):
    train, test, _ = small_dataset
    assert not ({c.id for c in train} & {c.id for c in test})


def test_normalizer_centers_train_set(small_dataset):
    train, _, norm = small_dataset
    data = np.concatenate([norm.normalize(c.frames) for c in train], axis=0)
    np.testing.assert_allclose(data.mean(axis=0), 0.0, atol=1e-9)


def test_jsonl_roundtrip_bitwise(tmp_path, small_dataset):
    train, _, _ = small_dataset
    path = tmp_path / "clips.jsonl"
    md.save_dataset(train[:5], path)
    loaded = md.load_dataset(path)
    assert [c.id for c in loaded] == [c.id for c in train[:5]]
    for a, b in zip(loaded, train[:5]):
        assert a.text == b.text and a.fps == b.fps
        np.testing.assert_array_equal(a.frames, b.frames)


def test_grammar_has_at_least_forty_strings():
    strings = md.grammar_strings()
    assert len(strings) >= 40
    assert len(strings) == len(set(strings))


def test_dataset_instruction_variety(small_dataset):
    train, _, _ = small_dataset
    assert len({c.text for c in train}) >= 15  # 36 clips draw from a larger grammar


def test_build_dataset_rejects_tiny_corpus():
    with pytest.raises(ValueError):
        md.build_dataset(n_clips=5, split_ratio=0.9, seed=1)


# ---------------------------------------------------------------------------
# tokenizer


def test_tokenize_known_sentence():
    vocab = md.Vocabulary()
    ids = vocab.tokenize("A person walks.")
    assert ids.shape == (md.MAX_TOKENS,)
    assert ids[0] == vocab.index["a"]
    assert ids[1] == vocab.index["person"]
    assert ids[2] == vocab.index["walks"]
    assert np.all(ids[3:] == md.PAD_ID)


def test_tokenize_empty_is_all_padding():
    vocab = md.Vocabulary()
    assert np.all(vocab.tokenize("") == md.PAD_ID)


def test_tokenize_unseen_word_maps_to_oov():
    vocab = md.Vocabulary()
    ids = vocab.tokenize("a person pirouettes")
    assert ids[2] == md.OOV_ID


@settings(max_examples=25, deadline=None)
@given(st.floats(min_value=-4.0, max_value=4.0, allow_nan=False),
       st.floats(min_value=0.1, max_value=3.0, allow_nan=False))
def test_normalizer_roundtrip_property(shift, scale):
    rng = np.random.default_rng(7)
    data = rng.normal(shift, scale, size=(50, 6))
    norm = md.Normalizer.fit([data])
    np.testing.assert_allclose(norm.denormalize(norm.normalize(data)), data, atol=1e-12)


def test_normalizer_pins_degenerate_dims():
    data = np.zeros((30, 3))
    data[:, 0] = np.linspace(0, 1, 30)
    norm = md.Normalizer.fit([data])
    assert norm.std[1] == 1.0 and norm.std[2] == 1.0
