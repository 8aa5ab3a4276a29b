"""Latent skill discovery: a conditional VAE over state transitions trained
end-to-end through the differentiable simulator.

The encoder maps (current state, next reference state) to a diagonal Gaussian
over a compact latent; the decoder maps (current state, latent) to PD target
angles squashed into the joint limits.  Training rolls the decoder through
physics for a window of control steps from a reference start, penalizing the
normalized state error against the reference plus a KL pull toward the unit
Gaussian.  Execution is closed loop: each step encodes the *simulated* state
with the plan's next frame, so the controller acts as a feedback tracker.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .physics import SimulationError
from .seeding import stream


@dataclass(frozen=True)
class SkillConfig:
    state_dim: int
    action_dim: int
    latent_dim: int = 64
    hidden: int = 256
    action_sigma: float = 0.05  # rad, fixed decoder head spread during training
    window: int = 16
    control_hz: int = 30
    physics_hz: int = 480


def init_skill_model(store, cfg, seed):
    D, H, Z = cfg.state_dim, cfg.hidden, cfg.latent_dim
    nn.init_mlp(store, "enc.trunk", [2 * D, H, H, H], seed)
    nn.init_mlp(store, "enc.mu", [H, Z], seed + 1)
    nn.init_mlp(store, "enc.logvar", [H, Z], seed + 2)
    nn.init_mlp(store, "dec.trunk", [D + Z, H, H, H], seed + 3)
    nn.init_mlp(store, "dec.head", [H, cfg.action_dim], seed + 4)


REL_X_SCALE = 0.05  # m; one control step of brisk locomotion
REL_X_LIMIT = 4.0   # scaled units; keeps a lagging tracker in distribution


def policy_inputs(normalizer, state, next_state):
    """Normalized, translation-invariant inputs for the encoder/decoder.

    The horizontal root position is expressed relative to the current state
    (current x becomes 0, the target keeps only its offset), so the policy
    generalizes over how far the character has traveled.  The offset channel
    is scaled by the per-step displacement magnitude rather than the dataset
    std of absolute x (which would shrink the commanded speed to noise) and
    clamped: when execution falls behind a plan the raw offset grows without
    bound, and an unclamped feature would leave the training distribution
    entirely instead of reading "as fast as you can".
    """
    mask = np.ones(len(normalizer.mean))
    mask[0] = 0.0
    s_rel = ad.mul(state, mask)
    sx = state[..., 0:1]
    dx = ad.clamp(ad.mul(ad.sub(next_state[..., 0:1], sx), 1.0 / REL_X_SCALE),
                  -REL_X_LIMIT, REL_X_LIMIT)
    n_rest = ad._data(next_state)[..., 1:]
    inv = 1.0 / normalizer.std[1:]
    n_in = ad.concat([dx, (n_rest - normalizer.mean[1:]) * inv], axis=-1)
    inv_s = 1.0 / normalizer.std.copy()
    inv_s[0] = 1.0 / REL_X_SCALE
    s_in = ad.mul(ad.sub(s_rel, normalizer.mean * mask), inv_s)
    return s_in, n_in


def encode(bound, cfg, state_norm, next_norm):
    """Gaussian over the latent skill for one normalized transition.

    ReLU hidden layers: saturating activations make the loss landscape
    through multi-step physics rollouts nearly untrainable.
    """
    x = ad.concat([state_norm, next_norm], axis=-1)
    h = ad.relu(nn.mlp_forward(bound, "enc.trunk", x, 3, activation="relu"))
    return nn.GaussianParams(mean=nn.mlp_forward(bound, "enc.mu", h, 1),
                             logvar=nn.mlp_forward(bound, "enc.logvar", h, 1))


RESIDUAL_SWING = 1.2  # rad, reach of the action head around the current pose


def decode(bound, cfg, engine, state_norm, z, current_joints):
    """PD target angles: a bounded residual around the current pose.

    The head moves the target at most RESIDUAL_SWING radians away from the
    current joint angles, then clamps into the joint limits, so a fresh
    network starts near "hold the current pose" instead of a random extreme.
    """
    x = ad.concat([state_norm, z], axis=-1)
    h = ad.relu(nn.mlp_forward(bound, "dec.trunk", x, 3, activation="relu"))
    raw = nn.mlp_forward(bound, "dec.head", h, 1)
    return ad.clamp(ad.add(current_joints, ad.mul(ad.tanh(raw), RESIDUAL_SWING)),
                    engine.limits_lo, engine.limits_hi)


def kl_to_standard_normal(params):
    """Nats of D_KL(N(mu, sigma^2) || N(0, I)), summed over latent dims."""
    mu2 = ad.mul(params.mean, params.mean)
    var = ad.exp(params.logvar)
    inner = ad.sub(ad.add(mu2, var), ad.add(params.logvar, 1.0))
    return ad.mul(ad.sum_(inner, axis=-1), 0.5)


# ---------------------------------------------------------------------------
# training through differentiable rollouts

def _window_batch(clips, window, batch, rng, lag_augment=0.0):
    """Reference windows plus start states; some starts lag their targets.

    With probability ``lag_augment`` the start state sits a few frames behind
    the target stream, so the policy learns to close a real phase gap: closed
    loop, any tracking deficit puts the plan ahead of the character, which a
    teacher-reset-only policy has never conditioned on.
    """
    refs = np.empty((batch, window + 1, clips[0].frames.shape[1]))
    start_states = np.empty((batch, clips[0].frames.shape[1]))
    starts = np.empty((batch, 2), dtype=np.intp)  # (clip index, target frame index)
    for b in range(batch):
        i = int(rng.integers(len(clips)))
        frames = clips[i].frames
        lag = 0
        if lag_augment and rng.uniform() < lag_augment:
            lag = int(rng.integers(1, 5))
        start = int(rng.integers(lag, len(frames) - window))
        refs[b] = frames[start:start + window + 1]
        start_states[b] = frames[start - lag]
        starts[b] = (i, start)
    return refs, start_states, starts


def tracking_weights(normalizer, model=None):
    """Loss weights that whiten the error by physical tolerances.

    The reconstruction error is computed on normalized states, so multiplying
    by (dataset std / tolerance)^2 makes each squared term count 1 when the
    physical error equals its tolerance: 10 cm of root drift, 5 cm of height,
    0.1 rad of pitch or joint angle, and looser bounds on velocities.
    """
    D = len(normalizer.std)
    J = (D - 6) // 2
    scales = np.concatenate([
        [0.05, 0.05, 0.10], np.full(J, 0.10),        # positions
        [0.50, 0.50, 1.00], np.full(J, 2.00),        # velocities
    ])
    return (normalizer.std / scales) ** 2


def train_skills(clips, store, cfg, engine, normalizer, weight, steps, batch,
                 seed, lr=3e-4, start_noise=0.01, grad_clip=1.0, log=None,
                 loss_weights=None, step_loss_cap=20.0, detach_every=0,
                 drift_replay=0.0, lag_augment=0.0):
    """Window-rollout training; returns per-step (reconstruction, KL) curves.

    Every window starts from the reference state (teacher reset) plus a small
    perturbation so the policy sees drifted inputs.  With ``drift_replay`` a
    fraction of windows instead starts from a state the *policy itself*
    reached in an earlier batch, teaching recovery from realistic drift.
    Per-step losses are capped: once a rollout has catastrophically diverged
    its tail would otherwise swamp the gradient of every healthy window.
    ``detach_every`` optionally truncates backprop inside long windows.
    Batches whose rollout goes non-finite are skipped and counted.
    """
    curves = {"rec": [], "kl": [], "skipped": 0}
    dims = cfg.state_dim
    if loss_weights is None:
        loss_weights = np.ones(dims)
    replay = []
    for step in range(steps):
        rng = stream(seed, "skill-step", step)
        refs, start_states, starts = _window_batch(clips, cfg.window, batch, rng,
                                                   lag_augment=lag_augment)
        start_states = start_states + start_noise * rng.normal(size=(batch, dims))
        if drift_replay and replay:
            for b in range(batch):
                if rng.uniform() < drift_replay:
                    clip_i, frame_i, saved = replay[int(rng.integers(len(replay)))]
                    frames = clips[clip_i].frames
                    if frame_i + cfg.window + 1 <= len(frames):
                        refs[b] = frames[frame_i:frame_i + cfg.window + 1]
                        starts[b] = (clip_i, frame_i)
                        start_states[b] = saved
        try:
            tape = ad.Tape(check_finite=False)
            bound = store.bind(tape)
            state = tape.leaf(start_states)
            rec_terms = []
            kl_terms = []
            for l in range(cfg.window):
                if detach_every and l and l % detach_every == 0:
                    state = tape.leaf(ad._data(state))
                s_in, target_in = policy_inputs(normalizer, state, refs[:, l + 1])
                g = encode(bound, cfg, s_in, target_in)
                z = nn.sample_gaussian(g, rng.normal(size=(batch, cfg.latent_dim)))
                action = decode(bound, cfg, engine, s_in, z, state[:, 3:3 + cfg.action_dim])
                action = ad.add(action, cfg.action_sigma * rng.normal(size=(batch, cfg.action_dim)))
                state = engine.control_step(state, action, cfg.control_hz, cfg.physics_hz)
                err = ad.sub(ad.mul(ad.sub(state, normalizer.mean), 1.0 / normalizer.std),
                             normalizer.normalize(refs[:, l + 1]))
                per_item = ad.mean(ad.mul(ad.mul(err, err), loss_weights), axis=1)
                if step_loss_cap:
                    capped = ad._data(per_item) > step_loss_cap
                    per_item = ad.where(capped, np.full(batch, step_loss_cap), per_item)
                rec_terms.append(ad.mean(per_item))
                kl_terms.append(ad.mean(kl_to_standard_normal(g)))
            rec = ad.mul(_accumulate(rec_terms), 1.0 / cfg.window)
            kl = ad.mul(_accumulate(kl_terms), 1.0 / cfg.window)
            loss = ad.add(rec, ad.mul(kl, weight))
            if not np.isfinite(ad._data(loss)):
                raise SimulationError("non-finite loss")
            grads = tape.backward(loss)
            named = bound.gradients(grads)
            if not all(np.all(np.isfinite(g)) for g in named.values()):
                raise SimulationError("non-finite gradients")
            _clip_gradients(named, grad_clip)
            nn.adam_step(store, named, lr=lr)
            curves["rec"].append(float(ad._data(rec)))
            curves["kl"].append(float(ad._data(kl)))
            if drift_replay:
                # bank end-of-window states still close to their reference
                final = ad._data(state)
                healthy = ad._data(per_item) < 0.5 * (step_loss_cap or np.inf)
                for b in np.nonzero(healthy)[0][:8]:
                    end = int(starts[b, 1]) + cfg.window
                    if end + cfg.window + 1 <= len(clips[starts[b, 0]].frames):
                        replay.append((int(starts[b, 0]), end, final[b].copy()))
                if len(replay) > 2048:
                    del replay[: len(replay) - 2048]
        except (SimulationError, ad.NonFiniteError):
            curves["skipped"] += 1
            continue
        if log and (step % log == 0 or step == steps - 1):
            print(f"[skills] step {step}: rec {curves['rec'][-1]:.4f} "
                  f"kl {curves['kl'][-1]:.2f} skipped {curves['skipped']}")
    return curves


def _accumulate(terms):
    total = terms[0]
    for t in terms[1:]:
        total = ad.add(total, t)
    return total


def _clip_gradients(named, max_norm):
    if not max_norm:
        return
    total = np.sqrt(sum(float((g * g).sum()) for g in named.values()))
    if total > max_norm:
        scale = max_norm / total
        for g in named.values():
            g *= scale


# ---------------------------------------------------------------------------
# closed-loop execution

@dataclass
class ExecutionResult:
    states: np.ndarray          # (<= plan length, D), starts with the start state
    actions: np.ndarray         # (len(states) - 1, J)
    completed: bool
    error: str = ""


def execute_plan(store, cfg, engine, normalizer, start, plan, sample_skills=False,
                 seed=0, perturbation=None):
    """Run the plan closed loop from ``start``; returns the simulated states.

    ``plan`` is a denormalized (L, D) trajectory.  By default the encoder mean
    is used for the latent and the decoder mean for the action; pass
    ``sample_skills=True`` to draw both.  ``perturbation`` optionally applies
    an impulse of the given magnitude at a random link every ``period``
    seconds of simulated time.
    """
    plan = np.asarray(plan, dtype=np.float64)
    if plan.ndim != 2 or len(plan) < 2:
        raise ValueError("plan must hold at least two frames")
    bound = store.bind(None)
    rng = stream(seed, "execute")
    states = [np.asarray(start, dtype=np.float64).copy()]
    actions = []
    next_hit = None
    if perturbation is not None:
        next_hit = perturbation.get("period", 1.0)
    dt_control = 1.0 / cfg.control_hz

    for i in range(len(plan) - 1):
        state = states[-1]
        s_in, target_in = policy_inputs(normalizer, state[None, :], plan[i + 1][None, :])
        g = encode(bound, cfg, s_in, target_in)
        if sample_skills:
            z = nn.sample_gaussian(g, rng.normal(size=g.mean.shape))
        else:
            z = g.mean
        action = decode(bound, cfg, engine, s_in, z,
                        state[None, 3:3 + cfg.action_dim])[0]
        try:
            nxt = engine.control_step(state, action, cfg.control_hz, cfg.physics_hz)
        except (SimulationError, ad.NonFiniteError) as err:
            return ExecutionResult(np.array(states), np.array(actions), False, str(err))
        nxt = np.asarray(nxt)
        sim_time = (i + 1) * dt_control
        if next_hit is not None and sim_time >= next_hit - 1e-9:
            link = int(rng.integers(len(engine.model.links)))
            angle = rng.uniform(0.0, 2 * np.pi)
            imp = perturbation["magnitude"] * np.array([np.cos(angle), np.sin(angle)])
            nxt = np.asarray(engine.apply_impulse(nxt, link, imp))
            next_hit += perturbation.get("period", 1.0)
        if not np.all(np.isfinite(nxt)):
            return ExecutionResult(np.array(states), np.array(actions), False, "non-finite state")
        states.append(nxt)
        actions.append(np.asarray(ad._data(action)))
    return ExecutionResult(np.array(states), np.array(actions), True)
