import numpy as np
from dataclasses import replace
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
train = [clip]
_,_,norm = md.build_dataset(12, 0.9, 5)
W = skills.tracking_weights(norm)
store = nn.ParamStore()
cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=240, window=2)
skills.init_skill_model(store, cfg, seed=1)

def action_gap(store):
    bound = store.bind(None)
    gaps=[]
    for i in range(0, 80, 7):
        s_in, t_in = skills.policy_inputs(norm, clip.frames[i][None,:], clip.frames[i+1][None,:])
        g = skills.encode(bound, cfg, s_in, t_in)
        a = skills.decode(bound, cfg, ENGINE, s_in, g.mean)[0]
        gaps.append(np.abs(a - clip.frames[i+1][3:9]).mean())
    return np.mean(gaps)

print("initial action gap:", action_gap(store), flush=True)
for phase in range(6):
    cur = skills.train_skills(train, store, cfg, ENGINE, norm, weight=0.01, steps=50,
                              batch=16, seed=phase, lr=3e-4, loss_weights=W)
    res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
    n=len(res.states); ref=clip.frames[:n]
    print(f"phase {phase}: rec={np.mean(cur['rec'][-10:]):.3f} gap={action_gap(store):.3f} "
          f"jerr={np.abs(res.states[:,3:9]-ref[:,3:9]).mean():.3f} "
          f"rerr={np.linalg.norm(res.states[:,:2]-ref[:,:2],axis=1).mean():.3f} n={n}", flush=True)
