import time, numpy as np
from dataclasses import replace
from textmotion import motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
Wt = skills.tracking_weights(norm)
base = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480)
clip = train[1]  # "someone walks forward slowly"
print("clip:", clip.id, clip.text, "speed:", (clip.frames[-1,0]-clip.frames[0,0])/3, flush=True)

store = nn.ParamStore(); skills.init_skill_model(store, base, seed=1)
t0=time.time()
for (w, s, lr, la) in [(2,60,5e-4,0.0),(4,80,5e-4,0.3),(8,150,3e-4,0.3),(16,250,1.5e-4,0.3)]:
    cfg = replace(base, window=w)
    cur = skills.train_skills([clip], store, cfg, ENGINE, norm, weight=0.01, steps=s,
                              batch=16, seed=42+w, lr=lr, grad_clip=1.0,
                              start_noise=0.02, loss_weights=Wt, drift_replay=0.3,
                              lag_augment=la)
    res = skills.execute_plan(store, base, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
    n = len(res.states); ref = clip.frames[:n]
    j = np.abs(res.states[:,3:9]-ref[:,3:9]).mean()
    r = np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean()
    xe = res.states[min(60,n-1),0]-ref[min(60,n-1),0]
    print(f"W={w} ({time.time()-t0:.0f}s) rec={np.mean(cur['rec'][-10:]):.3f} closed j={j:.3f} r={r:.3f} xerr60={xe:+.3f}", flush=True)
