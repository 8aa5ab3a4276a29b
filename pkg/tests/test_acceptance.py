"""Acceptance criteria, one test per numbered item.

The trained-model criteria share one artifact stack (dataset, skill policy,
diffusion planner, contrastive evaluator) built at desk scale through the CLI
code paths and cached under .acceptance_cache/ keyed by the training config,
so reruns are fast while a fresh clone reproduces everything from scratch.
Each criterion prints a PASS/FAIL line with its measured value.
"""

import json
import hashlib
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from textmotion import autodiff as ad
from textmotion import cli, diffusion, evaluation, evalsuite, nn, physics, pipeline, skills
from textmotion import motiondata as md
from textmotion.config import load_config
from textmotion.seeding import stream

ROOT = Path(__file__).resolve().parent.parent
CACHE = ROOT / ".acceptance_cache"

# desk-scale training budget shared by criteria 5-10
STACK_CONFIG = {
    "data.n_clips": 260,
    "data.split_ratio": 0.85,
    "skills.curriculum": [[2, 100], [4, 150], [8, 300], [16, 900]],
    "skills.batch": 32,
    "diffusion.epochs": 260,
    "diffusion.batch": 24,
    "evaluator.steps": 3000,
    "plan.ddim_steps": 50,
}


def _report(criterion, passed, detail):
    print(f"\n[ACCEPTANCE {criterion}] {'PASS' if passed else 'FAIL'} — {detail}")


def _stack_cfg():
    overrides = [f"{k}={json.dumps(v)}" for k, v in STACK_CONFIG.items()]
    tag = hashlib.sha256(json.dumps(STACK_CONFIG, sort_keys=True).encode()).hexdigest()[:12]
    root = CACHE / f"stack-{tag}"
    overrides += [f"paths.output={root}",
                  f"paths.dataset={root}/dataset",
                  f"paths.planner={root}/planner.ckpt",
                  f"paths.skills={root}/skills.ckpt",
                  f"paths.model={root}/model.ckpt",
                  f"paths.evaluator={root}/evaluator.ckpt"]
    return load_config(None, overrides), root


@pytest.fixture(scope="session")
def stack():
    """Dataset + trained models, built once and cached on disk."""
    cfg, root = _stack_cfg()
    root.mkdir(parents=True, exist_ok=True)
    t0 = time.time()
    if not (root / "dataset" / "train.jsonl").exists():
        cli.cmd_gen_data(cfg)
    if not Path(cfg["paths"]["skills"]).exists():
        print("\n[stack] training skill policy ...", flush=True)
        cli.cmd_train_skills(cfg, log_every=100)
    if not Path(cfg["paths"]["planner"]).exists():
        print("\n[stack] training diffusion planner ...", flush=True)
        cli.cmd_train_diffusion(cfg, log_every=20)
    if not Path(cfg["paths"]["evaluator"]).exists():
        print("\n[stack] training contrastive evaluator ...", flush=True)
        cli.cmd_train_eval(cfg)
    if time.time() - t0 > 1:
        print(f"[stack] ready in {time.time() - t0:.0f}s", flush=True)
    bundle = pipeline.ActorBundle.load(cfg["paths"]["model"])
    ev_store, ev_cfg = cli.load_evaluator(cfg["paths"]["evaluator"])
    train = md.load_dataset(Path(cfg["paths"]["dataset"]) / "train.jsonl")
    test = md.load_dataset(Path(cfg["paths"]["dataset"]) / "test.jsonl")
    return {"cfg": cfg, "bundle": bundle, "ev_store": ev_store, "ev_cfg": ev_cfg,
            "train": train, "test": test}


# ---------------------------------------------------------------------------
# 1. autodiff correctness


def test_acceptance_1_autodiff_gradients():
    from test_autodiff import _random_composite_graph, check_gradient

    t0 = time.time()
    verified = 0
    trial = 0
    while verified < 200:
        rng = stream(4200, "acceptance-graph", trial)
        trial += 1
        build = _random_composite_graph(rng)
        x0 = rng.uniform(-2, 2, size=(4, 2))
        # central differences carry an absolute noise floor around 1e-10, so
        # graphs whose whole gradient saturates below 1e-4 cannot be certified
        # at 1e-6 relative precision; redraw those (rare) and verify 200 real ones
        tape = ad.Tape()
        x = tape.leaf(x0)
        g = tape.backward(build(tape, x)).wrt(x)
        if np.abs(g).max() < 1e-4:
            continue
        check_gradient(build, x0, tol=1e-6)
        verified += 1
    elapsed = time.time() - t0
    _report(1, elapsed < 60,
            f"200 composite graphs < 1e-6 rel err in {elapsed:.1f}s ({trial} drawn)")
    assert elapsed < 60


# ---------------------------------------------------------------------------
# 2. physics: energy, rollout gradient, determinism


def test_acceptance_2_physics():
    from test_physics import pendulum

    eng = physics.Engine(pendulum())
    m, length = 2.0, 1.0
    d = length / 2
    inertia_pivot = m * length**2 / 12 + m * d**2
    state = np.zeros(8)
    state[3] = 1.2
    energy = lambda s: 0.5 * inertia_pivot * s[7] ** 2 - m * 9.81 * d * np.cos(s[3])
    e0 = energy(state)
    scale = e0 + m * 9.81 * d
    drift = 0.0
    for _ in range(960):
        state = np.asarray(eng.step(state, np.zeros(1), 1.0 / 480))
        drift = max(drift, abs(energy(state) - e0))
    energy_ok = drift / scale < 0.01

    biped = physics.Engine(physics.default_character())
    state0 = physics.standing_state(biped.model)
    base = physics.standing_joints(biped.model)
    tape = ad.Tape(check_finite=False)
    first = tape.leaf(base)
    s = state0
    for i in range(30):
        s = biped.control_step(s, first if i == 0 else base)
    analytic = tape.backward(s[0]).wrt(first)

    def final_x(a0):
        s = state0
        for i in range(30):
            s = biped.control_step(s, a0 if i == 0 else base)
        return float(np.asarray(ad._data(s))[0])

    h = 1e-6
    numeric = np.zeros_like(base)
    for j in range(base.size):
        hi = base.copy(); hi[j] += h
        lo = base.copy(); lo[j] -= h
        numeric[j] = (final_x(hi) - final_x(lo)) / (2 * h)
    scale_g = max(np.abs(analytic).max(), np.abs(numeric).max(), 1e-8)
    grad_err = np.abs(analytic - numeric).max() / scale_g
    grad_ok = grad_err < 1e-3

    a = np.asarray(biped.step(state0, base + 0.1, 1 / 480))
    b = np.asarray(biped.step(state0, base + 0.1, 1 / 480))
    det_ok = np.array_equal(a, b)

    _report(2, energy_ok and grad_ok and det_ok,
            f"pendulum drift {drift / scale:.4%}; rollout grad rel err {grad_err:.2e}; "
            f"bitwise replay {det_ok}")
    assert energy_ok and grad_ok and det_ok


# ---------------------------------------------------------------------------
# 3. diffusion identities + toy conditional model


def test_acceptance_3_diffusion_identities_and_toy():
    sched = diffusion.DiffusionSchedule(steps=1000)
    mean_coef, var = 1.0, 0.0
    worst = 0.0
    for t in range(1000):
        mean_coef *= np.sqrt(1.0 - sched.betas[t])
        var = (1.0 - sched.betas[t]) * var + sched.betas[t]
        worst = max(worst, abs(mean_coef - np.sqrt(sched.alpha_bars[t])),
                    abs(var - (1.0 - sched.alpha_bars[t])))
    marginal_ok = worst < 1e-10
    schedule_ok = np.all(np.diff(sched.alpha_bars) < 0) and np.allclose(
        sched.alpha_bars, sched.alpha_bars_prev * sched.alphas, rtol=1e-15)

    # inpainting hard constraint on a random tiny model
    store = nn.ParamStore()
    dcfg = nn.DenoiserConfig(frame_dim=2, width=16, heads=2, blocks=1)
    nn.init_denoiser(store, dcfg, seed=0)
    values = stream(1, "acc3").normal(size=(12, 2))
    mask = np.zeros((12, 2), dtype=bool)
    mask[:3] = True
    g = diffusion.GuidanceCondition(mask=mask, values=values)
    out = diffusion.sample(store, dcfg, sched, np.zeros((1, 64)), 12, 2,
                           guidance=g, sampler="ddim", ddim_steps=25, seed=2)
    inpaint_ok = np.array_equal(out[mask], values[mask])

    t0 = time.time()
    acc = _toy_conditional_accuracy()
    toy_elapsed = time.time() - t0
    toy_ok = acc > 0.9 and toy_elapsed < 30 * 60

    _report(3, marginal_ok and schedule_ok and inpaint_ok and toy_ok,
            f"marginal err {worst:.1e}; inpaint bitwise {inpaint_ok}; "
            f"toy accuracy {acc:.2f} in {toy_elapsed / 60:.1f} min")
    assert marginal_ok and schedule_ok and inpaint_ok and toy_ok


def _toy_conditional_accuracy():
    cache = CACHE / "toy-diffusion.ckpt"
    L, D = 32, 1
    vocab = md.Vocabulary(words=["slow", "fast", "wave"])
    freqs = {"a slow wave": 2, "a fast wave": 5}
    rng = stream(0, "toy-data")
    data = []
    for i in range(512):
        text = "a slow wave" if i % 2 == 0 else "a fast wave"
        phase = rng.uniform(0, 2 * np.pi)
        x = np.sin(2 * np.pi * freqs[text] * np.arange(L) / L + phase)[:, None]
        data.append((x, vocab.tokenize(text)))

    store = nn.ParamStore()
    cfg = nn.DenoiserConfig(frame_dim=D, cond_dim=64, width=48, heads=4, blocks=2, ff_mult=2)
    nn.init_denoiser(store, cfg, seed=1)
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size), seed=2)
    sched = diffusion.DiffusionSchedule(steps=1000)
    if cache.exists():
        records = nn.load_checkpoint(cache)
        store = nn.store_from_records(records, "toy")
    else:
        CACHE.mkdir(exist_ok=True)
        for epoch in range(110):
            diffusion.train_epoch(data, store, cfg, sched, batch_size=32, seed=3,
                                  lr=5e-4, epoch=epoch, cond_dropout=0.0)
        nn.save_checkpoint(cache, {"toy": store})

    bound = store.bind(None)
    hits = 0
    for i in range(100):
        text = "a slow wave" if i % 2 == 0 else "a fast wave"
        cond = nn.encode_instruction(bound, vocab.tokenize(text))
        tau = diffusion.sample(store, cfg, sched, cond, L, D,
                               sampler="ddim", ddim_steps=50, seed=9000 + i)
        mag = np.abs(np.fft.rfft(tau[:, 0]))
        k = min(freqs.values(), key=lambda kk: -mag[kk])
        hits += int(k == freqs[text])
    return hits / 100


# ---------------------------------------------------------------------------
# 4. KL closed form


def test_acceptance_4_kl():
    g0 = nn.GaussianParams(mean=np.zeros((1, 8)), logvar=np.zeros((1, 8)))
    exact_zero = float(skills.kl_to_standard_normal(g0)[0]) == 0.0

    mu = np.array([0.6, -0.4, 1.1])
    logvar = np.array([0.4, -0.8, 0.1])
    g = nn.GaussianParams(mean=mu[None], logvar=logvar[None])
    closed = float(skills.kl_to_standard_normal(g)[0])
    n = 10**6
    eps = stream(5, "acc4").normal(size=(n, 3))
    sigma = np.exp(logvar / 2)
    z = mu + sigma * eps
    log_q = -0.5 * (((z - mu) / sigma) ** 2 + np.log(2 * np.pi) + logvar).sum(axis=1)
    log_p = -0.5 * (z**2 + np.log(2 * np.pi)).sum(axis=1)
    mc = float((log_q - log_p).mean())
    mc_ok = abs(closed - mc) / closed < 0.01

    _report(4, exact_zero and mc_ok,
            f"KL(N(0,I)||N(0,I)) = 0 exact {exact_zero}; closed {closed:.5f} vs MC {mc:.5f}")
    assert exact_zero and mc_ok


# ---------------------------------------------------------------------------
# 5. skill tracking on held-out clips


def test_acceptance_5_skill_tracking(stack):
    bundle = stack["bundle"]
    js, rs = [], []
    for clip in stack["test"]:
        res = skills.execute_plan(bundle.skill_store, bundle.skill_cfg, bundle.engine,
                                  bundle.normalizer, clip.frames[0], clip.frames, seed=11)
        n = len(res.states)
        ref = clip.frames[:n]
        js.append(np.abs(res.states[:, 3:9] - ref[:, 3:9]).mean())
        rs.append(np.linalg.norm(res.states[:, :2] - ref[:, :2], axis=1).mean())
    joint_err = float(np.mean(js))
    root_err = float(np.mean(rs))
    ok = joint_err < 0.1 and root_err < 0.05
    _report(5, ok, f"held-out tracking: joint {joint_err:.3f} rad (<0.1), "
                   f"root {root_err:.3f} m (<0.05) over {len(js)} clips")
    assert ok


# ---------------------------------------------------------------------------
# 6. waypoint heading success


def test_acceptance_6_waypoint_success(stack):
    bundle = stack["bundle"]
    test = stack["test"]
    settings = evalsuite.EvalSettings(episodes=100, waypoints=True, repetitions=1)
    results, _ = evalsuite.run_episode_set(bundle, test, settings, seed=600)
    success = float(np.mean([r.success for r in results]))

    lang_only = evalsuite.EvalSettings(episodes=100, waypoints=False, repetitions=1)
    results_l, _ = evalsuite.run_episode_set(bundle, test, lang_only, seed=601)
    rng = stream(601, "virtual-waypoints")
    chance_hits = []
    for r in results_l:
        wx = rng.uniform(-pipeline.ARENA_HALF, pipeline.ARENA_HALF)
        chance_hits.append(abs(r.executed[-1, 0] - wx) < pipeline.SUCCESS_RADIUS)
    chance = float(np.mean(chance_hits))
    ok = success >= 0.80 and chance < 0.3
    _report(6, ok, f"waypoint success {success:.2f} (>=0.80); "
                   f"language-only chance rate {chance:.2f} (<0.3)")
    assert ok


# ---------------------------------------------------------------------------
# 7. hierarchy ablation direction


def test_acceptance_7_hierarchy_beats_direct_tracking(stack):
    bundle = stack["bundle"]
    test = stack["test"]
    vocab = bundle.vocab
    rng = stream(700, "acc7")
    full, direct, instr_tokens = [], [], []
    for ep in range(60):
        clip = test[int(rng.integers(len(test)))]
        waypoint = (float(rng.uniform(-3, 3)), 0.0)
        request = pipeline.EpisodeRequest(instruction=clip.text, waypoint=waypoint,
                                          seed=int(rng.integers(2**31)))
        plan, start = pipeline.plan_trajectory(bundle, request)
        execution = skills.execute_plan(bundle.skill_store, bundle.skill_cfg,
                                        bundle.engine, bundle.normalizer, start, plan,
                                        seed=request.seed)
        full.append(pipeline._finish(bundle, request, plan, execution))
        direct.append(pipeline.track_plan_direct(bundle, plan, start=start,
                                                 waypoint=waypoint, seed=request.seed))
        instr_tokens.append(vocab.tokenize(clip.text))

    div_full = sum(r.diverged for r in full)
    div_direct = sum(r.diverged for r in direct)
    stability_ok = div_full < div_direct

    norm = bundle.normalizer
    pool = [vocab.tokenize(c.text) for c in test]

    def top1(results):
        pairs = [(norm.normalize(r.executed), tok) for r, tok in zip(results, instr_tokens)]
        return evaluation.r_precision(stack["ev_store"], stack["ev_cfg"], pairs, pool,
                                      k=(1,), seed=701)[1]

    r_full = top1(full)
    r_direct = top1(direct)
    quality_ok = r_full > r_direct
    _report(7, stability_ok and quality_ok,
            f"divergences {div_full} vs {div_direct} (direct); "
            f"executed R-prec top-1 {r_full:.3f} vs {r_direct:.3f}")
    assert stability_ok and quality_ok


# ---------------------------------------------------------------------------
# 8. lambda ablation direction


def test_acceptance_8_weight_factor_monotonic(stack):
    train = stack["train"][:40]
    bundle = stack["bundle"]
    norm = bundle.normalizer
    engine = bundle.engine
    weights = skills.tracking_weights(norm)
    measured = []
    for lam in (0.001, 0.01, 0.1):
        cache = CACHE / f"lambda-{lam}.ckpt"
        cfg = skills.SkillConfig(state_dim=18, action_dim=6, hidden=64, latent_dim=16,
                                 window=4)
        store = nn.ParamStore()
        if cache.exists():
            store = nn.store_from_records(nn.load_checkpoint(cache), "skills")
        else:
            skills.init_skill_model(store, cfg, seed=80)
            skills.train_skills(train, store, cfg, engine, norm, weight=lam,
                                steps=220, batch=16, seed=81, lr=5e-4,
                                loss_weights=weights)
            nn.save_checkpoint(cache, {"skills": store})
        bound = store.bind(None)
        kls = []
        rng = stream(82, "acc8")
        for _ in range(300):
            clip = train[int(rng.integers(len(train)))]
            i = int(rng.integers(len(clip.frames) - 1))
            s_in, t_in = skills.policy_inputs(norm, clip.frames[i][None], clip.frames[i + 1][None])
            g = skills.encode(bound, cfg, s_in, t_in)
            kls.append(float(skills.kl_to_standard_normal(g)[0]))
        measured.append(float(np.mean(kls)))
    ok = measured[0] >= measured[1] >= measured[2]
    _report(8, ok, f"mean encoder KL at lambda 0.001/0.01/0.1 = "
                   f"{measured[0]:.2f}/{measured[1]:.2f}/{measured[2]:.2f} (non-increasing)")
    assert ok


# ---------------------------------------------------------------------------
# 9. perturbation robustness


def test_acceptance_9_perturbation_robustness(stack):
    bundle = stack["bundle"]
    test = stack["test"]
    clean = evalsuite.EvalSettings(episodes=100, waypoints=True, repetitions=1)
    perturbed = evalsuite.EvalSettings(episodes=100, waypoints=True, repetitions=1,
                                       perturbation=True, perturb_magnitude=10.0,
                                       perturb_period=1.0)
    res_c, _ = evalsuite.run_episode_set(bundle, test, clean, seed=900)
    res_p, _ = evalsuite.run_episode_set(bundle, test, perturbed, seed=900)
    s_clean = float(np.mean([r.success for r in res_c]))
    s_pert = float(np.mean([r.success for r in res_p]))
    finite_ok = all(np.all(np.isfinite(r.executed)) for r in res_p)
    degradation = (s_clean - s_pert) / max(s_clean, 1e-9)
    ok = degradation < 0.20 and finite_ok
    _report(9, ok, f"success clean {s_clean:.2f} vs perturbed {s_pert:.2f} "
                   f"(degradation {degradation:.1%} < 20%); all finite {finite_ok}")
    assert ok


# ---------------------------------------------------------------------------
# 10. evaluator sanity gate


def test_acceptance_10_evaluator_gate(stack):
    bundle = stack["bundle"]
    vocab = bundle.vocab
    norm = bundle.normalizer
    test = stack["test"]
    pairs = [(norm.normalize(c.frames), vocab.tokenize(c.text)) for c in test]
    pool = [vocab.tokenize(c.text) for c in test]
    rp = evaluation.r_precision(stack["ev_store"], stack["ev_cfg"], pairs, pool, seed=100)
    top1 = rp[1]
    shuffled = [(pairs[i][0], pairs[(i + 7) % len(pairs)][1]) for i in range(len(pairs))]
    rp_shuffled = evaluation.r_precision(stack["ev_store"], stack["ev_cfg"], shuffled,
                                         pool, seed=100)
    feats = _self_feats(stack)
    fid_self = evaluation.fid(feats, feats)
    ok = top1 >= 16 / 32 and top1 > rp_shuffled[1] and fid_self < 1e-6
    _report(10, ok, f"ground-truth top-1 {top1:.3f} (>=0.5, chance 0.031), "
                    f"shuffled {rp_shuffled[1]:.3f}; FID(X,X) {fid_self:.2e}")
    assert ok


def _self_feats(stack):
    bundle = stack["bundle"]
    bound = stack["ev_store"].bind(None)
    feats = [evaluation.embed_motion(bound, stack["ev_cfg"],
                                     bundle.normalizer.normalize(c.frames))[0]
             for c in stack["test"]]
    return np.stack(feats)
