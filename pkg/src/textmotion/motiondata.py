"""Procedural reference motions paired with templated instructions.

Ten gait families are synthesized as joint-space sinusoids with per-frame foot
grounding, so every clip is kinematically consistent with the simulated
character: stance feet sweep at the root speed, swing knees flex for ground
clearance, and the pelvis height follows the leg geometry.  Locomotion clips
optionally ramp in and out of the canonical stance, which is also the pattern
waypoint guidance pins at the ends of a plan.

Instructions come from a synonym grammar whose modifiers (speed, stride
style, height) reflect the sampled parameters.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field

import numpy as np

from . import physics
from .seeding import stream

FPS = 30
CLIP_FRAMES = 90
MAX_TOKENS = 16
PAD_ID = 0
OOV_ID = 1


@dataclass
class MotionClip:
    id: str
    text: str
    fps: int
    frames: np.ndarray  # (L, D) flat states, velocities by finite differences

    def __post_init__(self):
        self.frames = np.asarray(self.frames, dtype=np.float64)
        if self.frames.ndim != 2 or len(self.frames) < 2:
            raise ValueError("a clip needs at least two frames")
        if self.fps <= 0:
            raise ValueError("fps must be positive")

    @property
    def duration(self):
        return (len(self.frames) - 1) / self.fps


@dataclass(frozen=True)
class GaitTemplate:
    name: str
    ranges: dict
    in_place: bool = False
    rampable: bool = True

    def validate(self, params):
        for key, (lo, hi) in self.ranges.items():
            v = params.get(key)
            if v is None or not (lo - 1e-12 <= v <= hi + 1e-12):
                raise ValueError(f"parameter {key}={v} outside [{lo}, {hi}] for {self.name}")


def standard_templates():
    loco = {"ramp": (0.0, 1.0)}  # >0.5 ramps in/out of stance
    t = [
        GaitTemplate("walk", {"speed": (0.5, 1.4), "freq": (1.1, 1.7), "knee": (0.35, 0.65), **loco}),
        GaitTemplate("run", {"speed": (1.6, 3.0), "freq": (1.9, 2.6), "knee": (0.7, 1.1), **loco}),
        GaitTemplate("backward-walk", {"speed": (-1.4, -0.5), "freq": (1.1, 1.7), "knee": (0.35, 0.6), **loco}),
        GaitTemplate("march", {"speed": (0.4, 0.9), "freq": (1.0, 1.4), "knee": (1.1, 1.5), **loco}),
        GaitTemplate("crouch-walk", {"speed": (0.3, 0.8), "freq": (1.1, 1.5), "knee": (0.3, 0.5), **loco}),
        GaitTemplate("zombie-walk", {"speed": (0.35, 0.8), "freq": (0.9, 1.3), "knee": (0.05, 0.2), **loco}),
        GaitTemplate("hop", {"speed": (0.2, 0.7), "freq": (1.6, 2.2), "knee": (0.5, 0.9), **loco}),
        GaitTemplate("jump", {"height": (0.1, 0.3)}, in_place=True, rampable=False),
        GaitTemplate("kick", {"height": (1.0, 1.6)}, in_place=True, rampable=False),
        GaitTemplate("idle", {"sway": (0.01, 0.04)}, in_place=True, rampable=False),
    ]
    return {g.name: g for g in t}


def sample_params(template, rng):
    return {k: float(rng.uniform(lo, hi)) for k, (lo, hi) in template.ranges.items()}


# ---------------------------------------------------------------------------
# instruction grammar

SUBJECTS = ["a person", "someone", "a man", "a woman", "the character"]

_VERBS = {
    "walk": ["walks forward", "strolls ahead", "paces forward", "strides ahead"],
    "run": ["runs forward", "jogs ahead", "dashes forward", "runs straight ahead"],
    "backward-walk": ["walks backward", "walks backwards", "steps backward", "moves backward"],
    "march": ["marches forward", "marches like a soldier", "parades ahead with high knees"],
    "crouch-walk": ["walks in a crouch", "sneaks forward hunched low", "moves ahead while crouching"],
    "zombie-walk": ["walks like a zombie", "shambles like a zombie", "lurches forward stiffly",
                    "staggers ahead like the undead"],
    "hop": ["hops forward", "bounces ahead on both feet", "hops along"],
    "jump": ["jumps", "jumps in place", "does a single jump", "leaps straight up"],
    "kick": ["kicks", "kicks with one leg", "throws a kick", "performs a kick"],
    "idle": ["stands still", "stands in place", "idles calmly", "stays put"],
}


def speed_bin(name, speed):
    """slow / mid / fast third of the template's speed range."""
    lo, hi = standard_templates()[name].ranges["speed"]
    lo, hi = sorted((abs(lo), abs(hi)))
    x = (abs(speed) - lo) / (hi - lo + 1e-12)
    return 0 if x < 1 / 3 else (2 if x > 2 / 3 else 1)


_SPEED_WORDS = {
    0: ["slowly", "at an easy pace", "unhurriedly"],
    1: ["", "at a steady pace"],
    2: ["quickly", "briskly", "at a fast pace"],
}


def stride_bin(name, freq):
    lo, hi = standard_templates()[name].ranges["freq"]
    return 0 if freq < (lo + hi) / 2 else 1


_STRIDE_WORDS = {0: ["with long strides", "taking long steps"],
                 1: ["with quick short steps", "taking short rapid steps"]}


def grammar_strings():
    """Every sentence the grammar can emit (used to size the vocabulary)."""
    out = set()
    for name, verbs in _VERBS.items():
        has_speed = "speed" in standard_templates()[name].ranges
        for subject in SUBJECTS:
            for verb in verbs:
                base = f"{subject} {verb}"
                if not has_speed:
                    out.add(base)
                    if name == "jump":
                        out.add(base + " high")
                    continue
                for words in _SPEED_WORDS.values():
                    for adverb in words:
                        stem = f"{base} {adverb}".strip()
                        out.add(stem)
                        for bank in _STRIDE_WORDS.values():
                            for style in bank:
                                out.add(f"{stem} {style}")
    return sorted(out)


def instruction_for(name, params, rng):
    subject = SUBJECTS[rng.integers(len(SUBJECTS))]
    verb = _VERBS[name][rng.integers(len(_VERBS[name]))]
    parts = [subject, verb]
    if "speed" in params:
        words = _SPEED_WORDS[speed_bin(name, params["speed"])]
        adverb = words[rng.integers(len(words))]
        if adverb:
            parts.append(adverb)
        if "freq" in params and rng.uniform() < 0.5:
            style = _STRIDE_WORDS[stride_bin(name, params["freq"])]
            parts.append(style[rng.integers(len(style))])
    if name == "jump" and params.get("height", 0) > 0.22:
        parts.append("high")
    return " ".join(parts)


# ---------------------------------------------------------------------------
# tokenizer over the grammar vocabulary

_TOKEN_RE = re.compile(r"[a-z0-9']+")


def _grammar_words():
    words = set()
    for s in SUBJECTS:
        words.update(_TOKEN_RE.findall(s.lower()))
    for verbs in _VERBS.values():
        for v in verbs:
            words.update(_TOKEN_RE.findall(v.lower()))
    for bank in list(_SPEED_WORDS.values()) + list(_STRIDE_WORDS.values()):
        for phrase in bank:
            words.update(_TOKEN_RE.findall(phrase.lower()))
    words.add("high")
    return sorted(words)


class Vocabulary:
    """Fixed word-id table: 0 is padding, 1 is out-of-vocabulary."""

    def __init__(self, words=None):
        if words is None:
            words = _grammar_words()
        self.words = list(words)
        self.index = {w: i + 2 for i, w in enumerate(self.words)}

    @property
    def size(self):
        return len(self.words) + 2

    def tokenize(self, text, max_tokens=MAX_TOKENS):
        ids = [self.index.get(w, OOV_ID) for w in _TOKEN_RE.findall(text.lower())]
        ids = ids[:max_tokens]
        return np.array(ids + [PAD_ID] * (max_tokens - len(ids)), dtype=np.intp)


# ---------------------------------------------------------------------------
# clip synthesis

def _smoothstep(x):
    x = np.clip(x, 0.0, 1.0)
    return x * x * (3 - 2 * x)


def _envelope(t, duration, ramp_frac=0.25):
    """0 -> 1 -> 0 motion envelope used by ramped locomotion clips."""
    up = _smoothstep(t / (ramp_frac * duration))
    down = _smoothstep((duration - t) / (ramp_frac * duration))
    return np.minimum(up, down)


def _bump(phase, power=2.0):
    """Smooth positive bump peaked at phase 0 (mod 2 pi), in [0, 1]."""
    return (0.5 + 0.5 * np.cos(phase)) ** power


def _cycle_joints(name, params, t, env):
    """Joint angle tracks (6, T) for the cyclic locomotion families."""
    speed, f = params["speed"], params["freq"]
    omega = 2 * np.pi * f
    leg = 0.84
    amp = np.clip(speed / (omega * leg), -0.6, 0.6)  # stance sweep matches speed
    kb = params["knee"]
    ph = omega * t

    hip_l = amp * np.sin(ph)
    hip_r = amp * np.sin(ph + np.pi)
    # swing-phase knee flexion peaks mid-swing (hip crossing zero upward),
    # which is when the opposite stance leg is straight
    knee_l = -kb * _bump(ph)
    knee_r = -kb * _bump(ph - np.pi)
    arm = 0.55 * amp
    sh_l = -arm * np.sin(ph)
    sh_r = arm * np.sin(ph)

    hip_off = knee_off = sh_off = lean = 0.0
    if name == "crouch-walk":
        hip_off, knee_off, lean = 0.75, -1.15, 0.25
    elif name == "zombie-walk":
        sh_off, lean = 1.45, 0.15
        sh_l = 0.08 * np.sin(ph)
        sh_r = 0.08 * np.sin(ph + 0.7)
    elif name == "march":
        hip_l = amp * np.sin(ph) + 0.35 * _bump(ph)
        hip_r = amp * np.sin(ph + np.pi) + 0.35 * _bump(ph - np.pi)
        sh_l, sh_r = 1.6 * sh_l, 1.6 * sh_r
    elif name == "run":
        lean = 0.12
    elif name == "walk":
        lean = 0.05
    elif name == "hop":
        hop = amp * np.sin(ph)
        hip_l = hip_r = 0.25 + 0.5 * hop
        knee_l = knee_r = -kb * (0.5 - 0.5 * np.cos(ph))
        sh_l = sh_r = -0.3 * np.sin(ph)

    joints = np.stack([
        hip_off * env + hip_l * env,
        hip_off * env + hip_r * env,
        knee_off * env + knee_l * env,
        knee_off * env + knee_r * env,
        sh_off * env + sh_l * env,
        sh_off * env + sh_r * env,
    ])
    return joints, lean * env


def _event_joints(name, params, t, duration):
    """Joint tracks for the one-shot families (jump, kick, idle)."""
    T = len(t)
    joints = np.zeros((6, T))
    lean = np.zeros(T)
    flight = np.zeros(T)
    if name == "idle":
        sway = params["sway"]
        joints[0] = sway * np.sin(2 * np.pi * 0.3 * t)
        joints[1] = -sway * np.sin(2 * np.pi * 0.3 * t)
        joints[4] = 0.6 * sway * np.sin(2 * np.pi * 0.3 * t + 0.5)
        joints[5] = 0.6 * sway * np.sin(2 * np.pi * 0.3 * t + 1.1)
    elif name == "jump":
        h = params["height"]
        t_flight = np.sqrt(8 * h / 9.81)
        crouch = _smoothstep((t - 0.25) / 0.55) - _smoothstep((t - 0.85) / 0.2)
        t0, t1 = 1.05, 1.05 + t_flight
        tau = np.clip((t - t0) / (t1 - t0), 0.0, 1.0)
        flight = 4 * h * tau * (1 - tau)
        land = _smoothstep((t - t1) / 0.15) - _smoothstep((t - t1 - 0.35) / 0.45)
        joints[0] = joints[1] = 0.75 * crouch + 0.55 * land
        joints[2] = joints[3] = -1.2 * crouch - 0.9 * land
        joints[4] = joints[5] = -0.7 * crouch + 0.9 * land
    elif name == "kick":
        h = params["height"]
        wind = _smoothstep((t - 0.8) / 0.25) - _smoothstep((t - 1.05) / 0.15)
        strike = _smoothstep((t - 1.05) / 0.18) - _smoothstep((t - 1.55) / 0.5)
        joints[1] = -0.25 * wind + h * strike
        joints[3] = -0.9 * wind - 0.25 * strike
        joints[0] = 0.15 * strike
        joints[2] = -0.2 * strike
        joints[4] = 0.5 * strike
        joints[5] = -0.4 * strike
        lean = -0.12 * strike
    return joints, lean, flight


def generate_clip(template, params, seed, length=CLIP_FRAMES, fps=FPS,
                  model=None, clip_id=None):
    """Deterministic kinematic clip for (template, params, seed)."""
    template.validate(params)
    if model is None:
        model = physics.default_character()
    engine = physics.Engine(model)
    rng = stream(seed, "clip-text")

    t = np.arange(length) / fps
    duration = (length - 1) / fps
    name = template.name

    flight = np.zeros(length)
    if template.in_place:
        joints, lean, flight = _event_joints(name, params, t, duration)
        x = np.zeros(length)
    else:
        ramped = params.get("ramp", 0.0) > 0.5
        env = _envelope(t, duration) if ramped else np.ones(length)
        joints, lean = _cycle_joints(name, params, t, env)
        x = np.cumsum(params["speed"] * env) / fps
        x -= x[0]

    D = model.state_dim
    frames = np.zeros((length, D))
    frames[:, 0] = x
    frames[:, 2] = lean
    frames[:, 3:9] = joints.T

    # per-frame grounding: pelvis height puts the lowest contact point at y=0
    for i in range(length):
        pts = engine.contact_positions(frames[i])
        frames[i, 1] = -pts[:, 1].min() + flight[i]

    _finite_difference_velocities(frames, fps, model)
    text = instruction_for(name, params, rng)
    if clip_id is None:
        clip_id = f"{name}-{seed}"
    return MotionClip(id=clip_id, text=text, fps=fps, frames=frames)


def _finite_difference_velocities(frames, fps, model):
    n = 3 + model.actuated
    pos = frames[:, :n]
    vel = np.empty_like(pos)
    vel[1:-1] = (pos[2:] - pos[:-2]) * (fps / 2.0)
    vel[0] = (pos[1] - pos[0]) * fps
    vel[-1] = (pos[-1] - pos[-2]) * fps
    frames[:, n:] = vel


def retarget(clip, model):
    """Clamp joints to the model's limits and ground the clip vertically.

    A single constant vertical offset is applied so the lowest contact point
    across the whole clip touches y = 0; velocities are then recomputed by
    central differences.
    """
    engine = physics.Engine(model)
    n = 3 + model.actuated
    if clip.frames.shape[1] != model.state_dim:
        raise ValueError("clip dimension does not match the character model")
    frames = clip.frames.copy()
    lo = np.array([j.limits[0] for j in model.joints])
    hi = np.array([j.limits[1] for j in model.joints])
    frames[:, 3:n] = np.clip(frames[:, 3:n], lo, hi)
    lowest = min(engine.contact_positions(f)[:, 1].min() for f in frames)
    frames[:, 1] -= lowest
    _finite_difference_velocities(frames, clip.fps, model)
    return MotionClip(id=clip.id, text=clip.text, fps=clip.fps, frames=frames)


# ---------------------------------------------------------------------------
# normalization

class Normalizer:
    """Per-dimension affine whitening fitted on the training split."""

    def __init__(self, mean, std):
        self.mean = np.asarray(mean, dtype=np.float64)
        std = np.asarray(std, dtype=np.float64).copy()
        std[std < 1e-6] = 1.0
        self.std = std

    @classmethod
    def fit(cls, frame_arrays):
        data = np.concatenate(frame_arrays, axis=0)
        return cls(data.mean(axis=0), data.std(axis=0))

    def normalize(self, x):
        return (x - self.mean) / self.std

    def denormalize(self, x):
        return x * self.std + self.mean

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, doc):
        return cls(doc["mean"], doc["std"])


# ---------------------------------------------------------------------------
# dataset assembly and JSONL serialization

TEMPLATE_WEIGHTS = {
    "walk": 0.18, "run": 0.14, "backward-walk": 0.12, "march": 0.08,
    "crouch-walk": 0.08, "zombie-walk": 0.10, "hop": 0.08,
    "jump": 0.08, "kick": 0.07, "idle": 0.07,
}

RAMP_PROBABILITY = 0.65


def sample_clip(seed, index, model=None):
    """One dataset clip: template, parameters and instruction drawn by seed."""
    rng = stream(seed, "clip", index)
    names = list(TEMPLATE_WEIGHTS)
    weights = np.array([TEMPLATE_WEIGHTS[n] for n in names])
    name = names[rng.choice(len(names), p=weights / weights.sum())]
    template = standard_templates()[name]
    params = sample_params(template, rng)
    if template.rampable:
        params["ramp"] = 1.0 if rng.uniform() < RAMP_PROBABILITY else 0.0
    clip_seed = int(rng.integers(2**31))
    return generate_clip(template, params, clip_seed, model=model,
                         clip_id=f"{name}-{index:05d}")


def build_dataset(n_clips, split_ratio, seed, model=None):
    """(train clips, test clips, Normalizer) with retargeting applied."""
    if n_clips < 10:
        raise ValueError("need at least 10 clips")
    if model is None:
        model = physics.default_character()
    if len(grammar_strings()) < 40:
        raise ValueError("instruction grammar is too small")
    clips = [retarget(sample_clip(seed, i, model=model), model) for i in range(n_clips)]
    n_train = int(round(n_clips * split_ratio))
    train, test = clips[:n_train], clips[n_train:]
    norm = Normalizer.fit([c.frames for c in train])
    return train, test, norm


def _format_float(x):
    return format(x, ".17g")


def save_dataset(clips, path):
    """UTF-8 JSONL, one clip per line; floats carry 17 significant digits."""
    with open(path, "w", encoding="utf-8") as fh:
        for clip in clips:
            frames = ",".join(
                "[" + ",".join(_format_float(v) for v in row) + "]" for row in clip.frames
            )
            head = json.dumps({"id": clip.id, "text": clip.text, "fps": clip.fps})[:-1]
            fh.write(f'{head}, "frames": [{frames}]}}\n')


def load_dataset(path):
    clips = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            doc = json.loads(line)
            clips.append(MotionClip(id=doc["id"], text=doc["text"], fps=doc["fps"],
                                    frames=np.array(doc["frames"], dtype=np.float64)))
    return clips
