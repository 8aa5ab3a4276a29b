import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
train, test, norm = md.build_dataset(n_clips=48, split_ratio=0.9, seed=77)
records = nn.load_checkpoint("/root/pkg/.scratch/skills_exp8.ckpt")
store = nn.store_from_records(records, "skills")
cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480)
bound = store.bind(None)

# window-level: teacher starts, 16 steps, measure max joint err
werrs = []
for ci in (1, 2, 3):
    clip = train[ci].frames
    for start in (0, 18, 36, 54, 70):
        state = clip[start][None,:]
        m = 0
        for l in range(16):
            s_in, t_in = skills.policy_inputs(norm, state, clip[start+l+1][None,:])
            g = skills.encode(bound, cfg, s_in, t_in)
            a = skills.decode(bound, cfg, ENGINE, s_in, g.mean, state[:, 3:9])
            state = ad._data(ENGINE.control_step(state, a[0], 30, 480)).reshape(1,-1)
            m = max(m, np.abs(state[0,3:9]-clip[start+l+1][3:9]).mean())
        werrs.append(m)
print("teacher-window max jerr: mean %.3f max %.3f min %.3f" % (np.mean(werrs), np.max(werrs), np.min(werrs)))

# closed-loop trace on train[1]
clip = train[1]
print("clip:", clip.id, clip.text)
res = skills.execute_plan(store, cfg, ENGINE, norm, clip.frames[0], clip.frames, seed=5)
ref = clip.frames
for i in range(0, 90, 10):
    s = res.states[i]
    print(f"f{i:2d}: jerr={np.abs(s[3:9]-ref[i][3:9]).mean():.3f} xerr={s[0]-ref[i][0]:+.3f} yerr={s[1]-ref[i][1]:+.3f} th={s[2]:+.2f}")
