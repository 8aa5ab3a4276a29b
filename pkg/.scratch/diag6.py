import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills
from textmotion.seeding import stream

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
_,_,norm = md.build_dataset(12, 0.9, 5)
Wt = skills.tracking_weights(norm)
W = 8
refs = np.repeat(clip.frames[20:20+W+1][None], 4, axis=0)

def act_fn(x, kind):
    return ad.relu(x) if kind=="relu" else ad.tanh(x)

def trunk(bound, prefix, x, kind):
    for i in range(3):
        x = act_fn(ad.add(ad.matmul(x, bound[f"{prefix}.w{i}"]), bound[f"{prefix}.b{i}"]), kind)
    return x

def run(tag, lr, clipv, kind):
    store = nn.ParamStore()
    cfg = skills.SkillConfig(state_dim=18, action_dim=6, physics_hz=480, window=W)
    skills.init_skill_model(store, cfg, seed=1)
    for step in range(180):
        tape = ad.Tape(check_finite=False)
        bound = store.bind(tape)
        state = tape.leaf(refs[:,0])
        rec_t = []
        for l in range(W):
            s_in, t_in = skills.policy_inputs(norm, state, refs[:, l+1])
            h = trunk(bound, "enc.trunk", ad.concat([s_in, t_in], axis=-1), kind)
            z = nn.mlp_forward(bound, "enc.mu", h, 1)
            hd = trunk(bound, "dec.trunk", ad.concat([s_in, z], axis=-1), kind)
            raw = nn.mlp_forward(bound, "dec.head", hd, 1)
            action = ad.clamp(ad.add(state[:, 3:9], ad.mul(ad.tanh(raw), 1.2)), ENGINE.limits_lo, ENGINE.limits_hi)
            state = ENGINE.control_step(state, action, 30, 480)
            err = ad.sub(ad.mul(ad.sub(state, norm.mean), 1/norm.std), norm.normalize(refs[:, l+1]))
            rec_t.append(ad.mean(ad.mul(ad.mul(err, err), Wt)))
        rec = rec_t[0]
        for t in rec_t[1:]: rec = ad.add(rec, t)
        rec = ad.mul(rec, 1.0/W)
        grads = tape.backward(rec)
        named = bound.gradients(grads)
        skills._clip_gradients(named, clipv)
        nn.adam_step(store, named, lr=lr)
        if step in (0, 60, 120, 179):
            print(f"[{tag}] step {step} rec={float(ad._data(rec)):.4f}", flush=True)

run("tanh lr1e-3 clip1", 1e-3, 1.0, "tanh")
run("tanh lr3e-3 noclip", 3e-3, 0, "tanh")
run("relu lr1e-3 clip1", 1e-3, 1.0, "relu")
run("relu lr3e-3 clip10", 3e-3, 10.0, "relu")
