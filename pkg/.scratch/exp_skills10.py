import time, numpy as np
from dataclasses import replace
from textmotion import motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
Wt = skills.tracking_weights(norm)
base = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480)

def closed(store, clips):
    js, rs, lag30 = [], [], []
    for clip in clips:
        res = skills.execute_plan(store, base, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
        n = len(res.states); ref = clip.frames[:n]
        js.append(np.abs(res.states[:,3:9]-ref[:,3:9]).mean())
        rs.append(min(np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean(), 9.9))
        if n > 30: lag30.append(res.states[30,0]-ref[30,0])
    return np.mean(js), np.mean(rs), np.mean(lag30)

store = nn.ParamStore(); skills.init_skill_model(store, base, seed=1)
t0=time.time(); tot=0
plan = [(2,100,5e-4,0.0,0.0),(4,150,5e-4,0.2,0.3),(8,300,3e-4,0.3,0.3),(16,700,1.5e-4,0.3,0.3)]
for (w, s, lr, dr, la) in plan:
    cfg = replace(base, window=w)
    cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01, steps=s,
                              batch=32, seed=900+w, lr=lr, grad_clip=1.0,
                              start_noise=0.02, loss_weights=Wt, drift_replay=dr,
                              lag_augment=la)
    tot += s
    j, r, lag = closed(store, train[1:5])
    j2, r2, lag2 = closed(store, test[:4])
    print(f"W={w} steps={tot} ({time.time()-t0:.0f}s) rec={np.mean(cur['rec'][-15:]):.3f} "
          f"skip={cur['skipped']} train(j={j:.3f} r={r:.3f} lag30={lag:+.3f}) "
          f"test(j={j2:.3f} r={r2:.3f} lag30={lag2:+.3f})", flush=True)
nn.save_checkpoint("/root/pkg/.scratch/skills_exp10.ckpt", {"skills": store}, normalizer=norm,
                   extra={"skills": [18,6,64,256,0.05,16,30,480]})
print("saved")
