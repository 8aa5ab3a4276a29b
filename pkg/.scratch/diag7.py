import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
records = nn.load_checkpoint("/root/pkg/.scratch/skills_exp6.ckpt")
store = nn.store_from_records(records, "skills")
cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480)

clip = train[1]
print("clip:", clip.id, clip.text)
res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
ref = clip.frames
for i in range(0, len(res.states), 10):
    s = res.states[i]
    je = np.abs(s[3:9]-ref[i][3:9]).mean()
    re_ = np.linalg.norm(s[:2]-ref[i][:2])
    print(f"frame {i:2d}: jerr={je:.3f} rerr={re_:.3f} th={s[2]:+.2f} y={s[1]:.2f} x={s[0]:+.2f}/{ref[i][0]:+.2f}")
# also: windowed tracking from reference starts (training-like), W=16, no noise
from textmotion.seeding import stream
errs=[]
for start in (0, 20, 40, 60):
    state = ref[start][None,:]
    mx=0
    for l in range(16):
        s_in, t_in = skills.policy_inputs(norm, state, ref[start+l+1][None,:])
        g = skills.encode(store.bind(None), cfg, s_in, t_in)
        a = skills.decode(store.bind(None), cfg, ENGINE, s_in, g.mean, state[:, 3:9])
        state = ENGINE.control_step(state, a[0], 30, 480)
        state = ad._data(state).reshape(1,-1)
        mx = max(mx, np.abs(state[0,3:9]-ref[start+l+1][3:9]).mean())
    print(f"teacher window @{start}: max jerr over 16 steps = {mx:.3f}")
