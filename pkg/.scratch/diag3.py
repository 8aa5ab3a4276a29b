import numpy as np
from dataclasses import replace
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills
from textmotion.seeding import stream

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
_,_,norm = md.build_dataset(12, 0.9, 5)
Wt = skills.tracking_weights(norm)

def train(tag, residual, warmup, steps=120, W=4):
    store = nn.ParamStore()
    cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480, window=W)
    skills.init_skill_model(store, cfg, seed=1)
    for step in range(steps):
        rng = stream(7, "s", step)
        refs = np.stack([clip.frames[i:i+W+1] for i in rng.integers(0, 89-W, size=16)])
        lam = 0.01 * min(1.0, step / (warmup if warmup else 1))
        tape = ad.Tape(check_finite=False)
        bound = store.bind(tape)
        state = tape.leaf(refs[:,0] + 0.01*rng.normal(size=refs[:,0].shape))
        rec_t, kl_t = [], []
        for l in range(W):
            s_in, t_in = skills.policy_inputs(norm, state, refs[:, l+1])
            g = skills.encode(bound, cfg, s_in, t_in)
            z = nn.sample_gaussian(g, rng.normal(size=(16, cfg.latent_dim)))
            x = ad.concat([s_in, z], axis=-1)
            h = ad.tanh(nn.mlp_forward(bound, "dec.trunk", x, 3))
            raw = nn.mlp_forward(bound, "dec.head", h, 1)
            if residual:
                action = ad.clamp(ad.add(state[:, 3:9], ad.mul(ad.tanh(raw), 1.2)), ENGINE.limits_lo, ENGINE.limits_hi)
            else:
                mid = (ENGINE.limits_lo+ENGINE.limits_hi)/2; half=(ENGINE.limits_hi-ENGINE.limits_lo)/2
                action = ad.add(ad.mul(ad.tanh(raw), half), mid)
            action = ad.add(action, 0.05*rng.normal(size=(16,6)))
            state = ENGINE.control_step(state, action, 30, 480)
            err = ad.sub(ad.mul(ad.sub(state, norm.mean), 1/norm.std), norm.normalize(refs[:, l+1]))
            rec_t.append(ad.mean(ad.mul(ad.mul(err, err), Wt)))
            kl_t.append(ad.mean(skills.kl_to_standard_normal(g)))
        rec = rec_t[0]
        for t in rec_t[1:]: rec = ad.add(rec, t)
        rec = ad.mul(rec, 1.0/W)
        kl = kl_t[0]
        for t in kl_t[1:]: kl = ad.add(kl, t)
        kl = ad.mul(kl, 1.0/W)
        loss = ad.add(rec, ad.mul(kl, lam))
        grads = tape.backward(loss)
        named = bound.gradients(grads)
        skills._clip_gradients(named, 1.0)
        nn.adam_step(store, named, lr=3e-4)
        if step % 40 == 0 or step == steps-1:
            print(f"[{tag}] step {step} rec={float(ad._data(rec)):.3f} kl={float(ad._data(kl)):.1f}", flush=True)
    return store

train("plain", False, 0)
train("warmup", False, 60)
train("residual", True, 0)
train("res+warm", True, 60)
