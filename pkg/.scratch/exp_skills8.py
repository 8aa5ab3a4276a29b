import time, numpy as np
from dataclasses import replace
from textmotion import motiondata as md, nn, physics, skills

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

store = nn.ParamStore(); skills.init_skill_model(store, base, seed=1)
t0=time.time()
plan = [(2,100,5e-4,0.0),(4,150,5e-4,0.2),(8,250,3e-4,0.3),(16,300,1e-4,0.3),(16,300,1e-4,0.3)]
tot=0
for (w, s, lr, dr) in plan:
    cfg = replace(base, window=w)
    cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01, steps=s,
                              batch=32, seed=700+w+tot, lr=lr, grad_clip=1.0,
                              start_noise=0.02, loss_weights=Wt, drift_replay=dr)
    tot += s
    j, r = closed(store, train[1:5])
    j2, r2 = closed(store, test[:4])
    print(f"W={w} steps={tot} ({time.time()-t0:.0f}s) rec={np.mean(cur['rec'][-15:]):.3f} "
          f"skip={cur['skipped']} train(j={j:.3f} r={r:.3f}) test(j={j2:.3f} r={r2:.3f})", flush=True)
nn.save_checkpoint("/root/pkg/.scratch/skills_exp8.ckpt", {"skills": store}, normalizer=norm,
                   extra={"skills": [18,6,64,256,0.05,16,30,480]})
print("saved")
