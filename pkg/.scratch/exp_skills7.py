import time, numpy as np
from dataclasses import replace
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
Wt = skills.tracking_weights(norm)
base = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480)

def closed(store, clips):
    js, rs = [], []
    for clip in clips:
        res = skills.execute_plan(store, base, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
        n = len(res.states); ref = clip.frames[:n]
        js.append(np.abs(res.states[:,3:9]-ref[:,3:9]).mean())
        rs.append(min(np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean(), 9.9))
    return np.mean(js), np.mean(rs)

def stage(store, w, steps, lr, seed, **kw):
    cfg = replace(base, window=w)
    return skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01, steps=steps,
                               batch=32, seed=seed, lr=lr, grad_clip=1.0,
                               start_noise=0.01, loss_weights=Wt, **kw)

# shared warmstart through W=8
store = nn.ParamStore(); skills.init_skill_model(store, base, seed=1)
t0=time.time()
for (w, s, lr) in [(2,100,5e-4),(4,150,5e-4),(8,250,5e-4)]:
    cur = stage(store, w, s, lr, 500+w)
    j, r = closed(store, train[1:4])
    print(f"warm W={w} rec={np.mean(cur['rec'][-15:]):.3f} closed j={j:.3f} r={r:.3f} ({time.time()-t0:.0f}s)", flush=True)
import pickle, copy
snap = {k: v.copy() for k, v in store.params.items()}

for tag, kw in [("A lr1e-4", dict(lr=1e-4)),
                ("B cap lr3e-4", dict(lr=3e-4)),
                ("C detach8 lr3e-4", dict(lr=3e-4, detach_every=8))]:
    for k in store.params: store.params[k][:] = snap[k]
    for k in store.m: store.m[k][:] = 0; store.v[k][:] = 0
    store.step = 0
    cfg = replace(base, window=16)
    cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01, steps=150,
                              batch=32, seed=999, grad_clip=1.0, start_noise=0.01,
                              loss_weights=Wt, **kw)
    j, r = closed(store, train[1:4])
    j2, r2 = closed(store, test[:3])
    print(f"[{tag}] rec={np.mean(cur['rec'][-15:]):.3f} train j={j:.3f} r={r:.3f} | test j={j2:.3f} r={r2:.3f} ({time.time()-t0:.0f}s)", flush=True)
