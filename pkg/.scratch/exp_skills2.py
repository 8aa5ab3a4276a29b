import time, numpy as np
from dataclasses import replace
from textmotion import motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
W = skills.tracking_weights(norm)
print("weights:", W.round(2), flush=True)

def tracked(store, cfg, clip):
    res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
    n = len(res.states); ref = clip.frames[:n]
    return res.completed, np.abs(res.states[:,3:9]-ref[:,3:9]).mean(), np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean()

def curriculum(tag, windows, weights, lr=3e-4, clip_g=5.0, noise=0.01):
    store = nn.ParamStore()
    base = skills.SkillConfig(state_dim=MODEL.state_dim, action_dim=MODEL.actuated, physics_hz=240)
    skills.init_skill_model(store, base, seed=1)
    t0 = time.time(); tot = 0
    for (w, steps) in windows:
        cfg = replace(base, window=w)
        cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01,
                                  steps=steps, batch=32, seed=1000+w, lr=lr,
                                  grad_clip=clip_g, start_noise=noise, loss_weights=weights)
        tot += steps
        ok, j, r = tracked(store, replace(base, window=16), train[1])
        ok2, j2, r2 = tracked(store, replace(base, window=16), test[0])
        print(f"[{tag}] W={w} steps={tot} ({time.time()-t0:.0f}s) rec={np.mean(cur['rec'][-15:]):.4f} "
              f"skip={cur['skipped']} train(j={j:.3f} r={r:.3f} ok={ok}) test(j={j2:.3f} r={r2:.3f} ok={ok2})", flush=True)
    return store

curriculum("B-weights-W16", [(16, 150)], W)
curriculum("C-curric", [(2, 40), (4, 40), (8, 40), (16, 60)], W)
curriculum("A-plain-W16", [(16, 150)], None)
