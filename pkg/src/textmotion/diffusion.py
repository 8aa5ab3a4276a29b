"""Trajectory diffusion: forward corruption, clean-sample prediction training,
ancestral and strided deterministic sampling, and mask-based inpainting.

Trajectories are normalized (L, D) arrays.  The denoiser predicts the clean
trajectory directly; the reverse step re-derives the posterior mean from that
prediction with the fixed posterior variance.  Conditioning on known frames is
an inpainting overwrite: at every denoising step the conditioned entries are
replaced with a fresh forward-noised copy of the target values, and the final
output carries the clean values bitwise.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .seeding import stream


class DiffusionSchedule:
    """Variance tables: beta linearly spaced, cumulative alpha products."""

    def __init__(self, steps=1000, beta_start=1e-4, beta_end=0.02):
        if steps < 2:
            raise ValueError("need at least two diffusion steps")
        self.steps = steps
        self.betas = np.linspace(beta_start, beta_end, steps)
        self.alphas = 1.0 - self.betas
        self.alpha_bars = np.cumprod(self.alphas)
        prev = np.concatenate([[1.0], self.alpha_bars[:-1]])
        self.alpha_bars_prev = prev
        self.posterior_var = self.betas * (1.0 - prev) / (1.0 - self.alpha_bars)
        if not np.all(np.diff(self.alpha_bars) < 0):
            raise ValueError("alpha-bar table must be strictly decreasing")

    def _check_t(self, t):
        if not (0 <= t < self.steps):
            raise ValueError(f"timestep {t} outside [0, {self.steps})")


def q_sample(schedule, tau0, t, eps):
    """Forward marginal: sqrt(abar_t) tau0 + sqrt(1 - abar_t) eps."""
    schedule._check_t(t)
    ab = schedule.alpha_bars[t]
    return ad.add(ad.mul(tau0, np.sqrt(ab)), ad.mul(eps, np.sqrt(1.0 - ab)))


def q_sample_batch(schedule, tau0, t, eps):
    """Vectorized q_sample for per-sample integer steps t of shape (B,)."""
    ab = schedule.alpha_bars[np.asarray(t)][:, None, None]
    return ad.add(ad.mul(tau0, np.sqrt(ab)), ad.mul(eps, np.sqrt(1.0 - ab)))


def posterior_step(schedule, tau_t, t, pred_tau0, noise):
    """One reverse transition given the predicted clean trajectory.

    The added noise is forced to zero on the final transition (t == 1).
    """
    if t < 1:
        raise ValueError("posterior_step requires t >= 1")
    schedule._check_t(t)
    beta = schedule.betas[t]
    ab = schedule.alpha_bars[t]
    ab_prev = schedule.alpha_bars_prev[t]
    alpha = schedule.alphas[t]
    coef0 = np.sqrt(ab_prev) * beta / (1.0 - ab)
    coef_t = np.sqrt(alpha) * (1.0 - ab_prev) / (1.0 - ab)
    mean = ad.add(ad.mul(pred_tau0, coef0), ad.mul(tau_t, coef_t))
    if t == 1:
        return mean
    return ad.add(mean, ad.mul(noise, np.sqrt(schedule.posterior_var[t])))


# ---------------------------------------------------------------------------
# inpainting guidance

@dataclass
class GuidanceCondition:
    """Per-frame-per-dim mask with normalized target values where true."""

    mask: np.ndarray    # (L, D) bool
    values: np.ndarray  # (L, D), meaningful where mask is true

    def __post_init__(self):
        self.mask = np.asarray(self.mask, dtype=bool)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.mask.shape != self.values.shape:
            raise ValueError("guidance mask and values must share a shape")
        if not np.all(np.isfinite(self.values[self.mask])):
            raise ValueError("guidance values must be finite where masked")


def make_waypoint_guidance(model, normalizer, start_state, target_xy, length):
    """Pin the first and last quarter of the plan to standing poses.

    The opening frames stand at the start position, the closing frames at the
    target.  Only the horizontal target coordinate is kinematically meaningful
    for the planar character; the vertical one is accepted and ignored.
    """
    from . import physics

    if length < 8:
        raise ValueError("waypoint guidance needs a plan of at least 8 frames")
    quarter = length // 4
    stand = physics.standing_state(model)
    start_stand = stand.copy()
    start_stand[0] = float(np.asarray(start_state)[0])
    target_stand = stand.copy()
    target_stand[0] = float(np.asarray(target_xy).reshape(-1)[0])

    mask = np.zeros((length, model.state_dim), dtype=bool)
    values = np.zeros((length, model.state_dim))
    mask[:quarter] = True
    values[:quarter] = normalizer.normalize(start_stand)
    mask[length - quarter:] = True
    values[length - quarter:] = normalizer.normalize(target_stand)
    return GuidanceCondition(mask=mask, values=values)


def make_history_guidance(normalizer, history_states, length):
    """Fill the first quarter with the most recent history states.

    Shorter histories are left-padded by repeating their oldest state.
    """
    history = np.asarray(history_states, dtype=np.float64)
    if history.ndim != 2 or len(history) < 1:
        raise ValueError("history must hold at least one state")
    quarter = length // 4
    tail = history[-quarter:]
    if len(tail) < quarter:
        pad = np.repeat(tail[0:1], quarter - len(tail), axis=0)
        tail = np.concatenate([pad, tail], axis=0)
    mask = np.zeros((length, history.shape[1]), dtype=bool)
    values = np.zeros((length, history.shape[1]))
    mask[:quarter] = True
    values[:quarter] = normalizer.normalize(tail)
    return GuidanceCondition(mask=mask, values=values)


def merge_guidance(primary, secondary):
    """Union of two conditions; ``primary`` wins where masks overlap."""
    if primary is None:
        return secondary
    if secondary is None:
        return primary
    mask = primary.mask | secondary.mask
    values = np.where(primary.mask, primary.values, secondary.values)
    return GuidanceCondition(mask=mask, values=values)


# ---------------------------------------------------------------------------
# training

def train_epoch(dataset, store, denoiser_cfg, schedule, batch_size, seed,
                lr=2e-4, epoch=0, cond_dropout=0.1, forward_fn=None):
    """One pass over (frames, token_ids) pairs; returns the mean batch loss.

    ``dataset`` holds normalized (L, D) trajectories.  Each sample draws its
    own timestep and noise; the instruction embedding is trained jointly
    through the trajectory loss.  A small fraction of conditions is zeroed so
    the model also learns unconditioned completion (helps inpainting).
    """
    if not dataset:
        raise ValueError("empty dataset")
    if forward_fn is None:
        forward_fn = nn.denoiser_forward
    rng = stream(seed, "diffusion-epoch", epoch)
    order = rng.permutation(len(dataset))
    losses = []
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        tau0 = np.stack([dataset[i][0] for i in idx])              # (B, L, D)
        tokens = np.stack([dataset[i][1] for i in idx])
        B = len(idx)
        t = rng.integers(0, schedule.steps, size=B)
        eps = rng.normal(size=tau0.shape)
        tau_t = q_sample_batch(schedule, tau0, t, eps)

        tape = ad.Tape(check_finite=False)
        bound = store.bind(tape)
        cond = nn.encode_instruction(bound, tokens)
        if cond_dropout > 0:
            keep = (rng.uniform(size=(B, 1)) >= cond_dropout).astype(np.float64)
            cond = ad.mul(cond, keep)
        pred = forward_fn(bound, denoiser_cfg, tau_t, t, cond)
        err = ad.sub(pred, tau0)
        loss = ad.mean(ad.mul(err, err))
        if isinstance(loss, ad.Tensor):  # stub denoisers may sidestep the tape
            grads = tape.backward(loss)
            nn.adam_step(store, bound.gradients(grads), lr=lr)
        losses.append(float(ad._data(loss)))
    return float(np.mean(losses))


# ---------------------------------------------------------------------------
# sampling

def _inpaint(schedule, tau, guidance, t, rng):
    if guidance is None:
        return tau
    noised = q_sample(schedule, guidance.values, t, rng.normal(size=tau.shape))
    out = tau.copy()
    out[guidance.mask] = noised[guidance.mask]
    return out


def sample(store, denoiser_cfg, schedule, cond, length, frame_dim,
           guidance=None, sampler="ddim", ddim_steps=50, seed=0):
    """Draw one normalized trajectory (length, frame_dim).

    Wherever ``guidance.mask`` is true the working trajectory is overwritten
    with a forward-noised copy of ``guidance.values`` before every denoiser
    call, and the returned trajectory carries the clean values exactly.
    """
    if sampler not in ("ancestral", "ddim"):
        raise ValueError(f"unknown sampler {sampler!r}")
    if sampler == "ddim" and ddim_steps > schedule.steps:
        raise ValueError("ddim_steps cannot exceed the schedule length")
    bound = store.bind(None)
    rng = stream(seed, "plan-sample")
    tau = rng.normal(size=(length, frame_dim))

    if sampler == "ancestral":
        for t in range(schedule.steps - 1, 0, -1):
            tau = _inpaint(schedule, tau, guidance, t, rng)
            pred = nn.denoiser_forward(bound, denoiser_cfg, tau, t, cond)
            tau = posterior_step(schedule, tau, t, pred, rng.normal(size=tau.shape))
    else:
        ts = np.unique(np.linspace(0, schedule.steps - 1, ddim_steps).astype(int))[::-1]
        for i, t in enumerate(ts):
            tau = _inpaint(schedule, tau, guidance, int(t), rng)
            pred = nn.denoiser_forward(bound, denoiser_cfg, tau, int(t), cond)
            ab_t = schedule.alpha_bars[t]
            eps_hat = (tau - np.sqrt(ab_t) * pred) / np.sqrt(1.0 - ab_t)
            ab_next = schedule.alpha_bars[ts[i + 1]] if i + 1 < len(ts) else 1.0
            tau = np.sqrt(ab_next) * pred + np.sqrt(1.0 - ab_next) * eps_hat

    if guidance is not None:
        tau[guidance.mask] = guidance.values[guidance.mask]
    return tau
