import time, numpy as np
from textmotion import motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
print("dataset ready:", len(train), "train", len(test), "test", flush=True)
print("std head:", norm.std.round(3), flush=True)

def tracked_errors(store, cfg, clip):
    res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
    n = len(res.states)
    ref = clip.frames[:n]
    jerr = np.abs(res.states[:,3:9]-ref[:,3:9]).mean()
    rerr = np.linalg.norm(res.states[:,:2]-ref[:,:2], axis=1).mean()
    return res.completed, n, jerr, rerr

for hz in (240, 480):
    store = nn.ParamStore()
    cfg = skills.SkillConfig(state_dim=MODEL.state_dim, action_dim=MODEL.actuated,
                             window=16, physics_hz=hz)
    skills.init_skill_model(store, cfg, seed=1)
    t0 = time.time()
    for phase in range(4):
        curves = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01,
                                     steps=75, batch=32, seed=100+phase, lr=3e-4)
        rec = np.mean(curves["rec"][-20:])
        ok, n, jerr, rerr = tracked_errors(store, cfg, train[1])
        ok2, n2, jerr2, rerr2 = tracked_errors(store, cfg, test[0])
        print(f"hz={hz} phase={phase} ({time.time()-t0:.0f}s) rec={rec:.4f} skip={curves['skipped']} "
              f"| train clip: ok={ok} n={n} jerr={jerr:.3f} rerr={rerr:.3f} "
              f"| test clip: ok={ok2} n={n2} jerr={jerr2:.3f} rerr={rerr2:.3f}", flush=True)
