import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills
from textmotion.seeding import stream

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
_,_,norm = md.build_dataset(12, 0.9, 5)
Wt = skills.tracking_weights(norm)
W = 8
refs = np.repeat(clip.frames[20:20+W+1][None], 4, axis=0)  # one window, batch 4

store = nn.ParamStore()
cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480, window=W)
skills.init_skill_model(store, cfg, seed=1)
for step in range(250):
    tape = ad.Tape(check_finite=False)
    bound = store.bind(tape)
    state = tape.leaf(refs[:,0])
    rec_t = []
    for l in range(W):
        s_in, t_in = skills.policy_inputs(norm, state, refs[:, l+1])
        g = skills.encode(bound, cfg, s_in, t_in)
        action = skills.decode(bound, cfg, ENGINE, s_in, g.mean, state[:, 3:9])
        state = ENGINE.control_step(state, action, 30, 480)
        err = ad.sub(ad.mul(ad.sub(state, norm.mean), 1/norm.std), norm.normalize(refs[:, l+1]))
        rec_t.append(ad.mean(ad.mul(ad.mul(err, err), Wt)))
    rec = rec_t[0]
    for t in rec_t[1:]: rec = ad.add(rec, t)
    rec = ad.mul(rec, 1.0/W)
    grads = tape.backward(rec)
    named = bound.gradients(grads)
    gnorm = np.sqrt(sum(float((g*g).sum()) for g in named.values()))
    skills._clip_gradients(named, 1.0)
    nn.adam_step(store, named, lr=1e-3)
    if step % 50 == 0 or step == 249:
        print(f"step {step} rec={float(ad._data(rec)):.4f} gnorm={gnorm:.2f}", flush=True)
