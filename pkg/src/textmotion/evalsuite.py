"""Episode-level evaluation protocol: run the pipeline over the test split
under a chosen setting and aggregate every metric, with repetitions.

Waypoints are sampled uniformly on the 6 x 6 arena; the perturbed setting
applies an impulse at a random link every period of simulated time.  The
whole protocol is repeated (three times by default) and the report carries
the mean and the spread (half-width of a normal 95% interval over runs).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import evaluation, pipeline
from .motiondata import Vocabulary
from .seeding import stream


@dataclass
class EvalSettings:
    episodes: int = 100
    waypoints: bool = True
    perturbation: bool = False
    perturb_magnitude: float = 10.0
    perturb_period: float = 1.0
    repetitions: int = 3
    sampler: str = "ddim"
    ddim_steps: int = 50


def run_episode_set(bundle, test_clips, settings, seed):
    """Episodes over the test split; returns (results, matched clip indices)."""
    rng = stream(seed, "episode-set")
    results = []
    clip_idx = []
    perturbation = None
    if settings.perturbation:
        perturbation = {"magnitude": settings.perturb_magnitude,
                        "period": settings.perturb_period}
    for ep in range(settings.episodes):
        i = int(rng.integers(len(test_clips)))
        clip_idx.append(i)
        waypoint = None
        if settings.waypoints:
            waypoint = (float(rng.uniform(-pipeline.ARENA_HALF, pipeline.ARENA_HALF)),
                        float(rng.uniform(-pipeline.ARENA_HALF, pipeline.ARENA_HALF)))
        request = pipeline.EpisodeRequest(
            instruction=test_clips[i].text, waypoint=waypoint,
            seed=int(rng.integers(2**31)), sampler=settings.sampler,
            ddim_steps=settings.ddim_steps, perturbation=perturbation,
            length=bundle.plan_length)
        results.append(pipeline.run_episode(bundle, request))
    return results, clip_idx


def _metrics_once(bundle, ev_store, ev_cfg, test_clips, settings, seed):
    vocab = Vocabulary()
    results, clip_idx = run_episode_set(bundle, test_clips, settings, seed)

    norm = bundle.normalizer
    gen_pairs = [(norm.normalize(r.executed), vocab.tokenize(test_clips[i].text))
                 for r, i in zip(results, clip_idx)]
    texts_pool = [vocab.tokenize(c.text) for c in test_clips]
    rp = evaluation.r_precision(ev_store, ev_cfg, gen_pairs, texts_pool, seed=seed)

    bound = ev_store.bind(None)
    gen_feats = np.stack([evaluation.embed_motion(bound, ev_cfg, p[0])[0] for p in gen_pairs])
    ref_feats = np.stack([evaluation.embed_motion(bound, ev_cfg, norm.normalize(c.frames))[0]
                          for c in test_clips])
    fid_value = evaluation.fid(ref_feats, gen_feats)
    mm = evaluation.multimodal_distance(ev_store, ev_cfg, gen_pairs)
    div = evaluation.diversity([r.executed for r in results],
                               n_pairs=min(100, settings.episodes * 2), seed=seed)
    out = {
        "top1": rp[1], "top2": rp[2], "top3": rp[3],
        "multimodal": mm, "fid": fid_value, "diversity": div,
        "success": None, "diverged": sum(r.diverged for r in results),
        "nonfinite": sum(not np.all(np.isfinite(r.executed)) for r in results),
    }
    if settings.waypoints:
        succ = [r.success for r in results]
        out["success"] = float(np.mean(succ))
    return out


def evaluate_suite(bundle, ev_store, ev_cfg, test_clips, settings, seed):
    """Repeated metric runs aggregated into a MetricReport."""
    runs = [_metrics_once(bundle, ev_store, ev_cfg, test_clips, settings, seed + 1000 * rep)
            for rep in range(settings.repetitions)]

    def agg(key):
        vals = [r[key] for r in runs if r[key] is not None]
        if not vals:
            return None, None
        half = 1.96 * np.std(vals) / np.sqrt(len(vals)) if len(vals) > 1 else 0.0
        return float(np.mean(vals)), float(half)

    spread = {}
    means = {}
    for key in ("top1", "top2", "top3", "multimodal", "fid", "diversity", "success"):
        means[key], spread[key] = agg(key)
    return evaluation.MetricReport(
        r_precision_top1=means["top1"], r_precision_top2=means["top2"],
        r_precision_top3=means["top3"], multimodal=means["multimodal"],
        fid=means["fid"], diversity=means["diversity"],
        success_rate=means["success"],
        n_episodes=settings.episodes * settings.repetitions,
        seed=seed, spread=spread)
