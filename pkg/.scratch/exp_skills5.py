import time, numpy as np
from dataclasses import replace
from textmotion import motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
W = skills.tracking_weights(norm)

def tracked(store, cfg, clip):
    res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
    n = len(res.states); ref = clip.frames[:n]
    j = np.abs(res.states[:,3:9]-ref[:,3:9]).mean()
    r = np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean()
    return (res.completed and n==90), j, min(r, 99.0)

store = nn.ParamStore()
base = skills.SkillConfig(state_dim=MODEL.state_dim, action_dim=MODEL.actuated, physics_hz=480)
skills.init_skill_model(store, base, seed=1)
t0=time.time(); tot=0
for (w, steps) in [(2,100),(4,150),(8,200),(16,250)]:
    cfg = replace(base, window=w)
    cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01,
                              steps=steps, batch=32, seed=500+w, lr=3e-4,
                              grad_clip=1.0, start_noise=0.01, loss_weights=W)
    tot += steps
    okt, j, r = tracked(store, base, train[1])
    oke, j2, r2 = tracked(store, base, test[0])
    print(f"W={w} steps={tot} ({time.time()-t0:.0f}s) rec={np.mean(cur['rec'][-15:]):.4f} "
          f"skip={cur['skipped']} train(j={j:.3f} r={r:.3f} {okt}) test(j={j2:.3f} r={r2:.3f} {oke})", flush=True)
nn.save_checkpoint("/root/pkg/.scratch/skills_exp5.ckpt", {"skills": store}, normalizer=norm,
                   extra={"skills": [base.state_dim, base.action_dim, base.latent_dim, base.hidden,
                          base.action_sigma, base.window, base.control_hz, base.physics_hz]})
print("saved")
