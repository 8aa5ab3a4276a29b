import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
_,_,norm = md.build_dataset(12, 0.9, 5)

Wt = skills.tracking_weights(norm)
start_idx = 20; W = 8
refs = clip.frames[start_idx:start_idx+W+1]
actions0 = refs[1:, 3:9].copy()  # init with reference targets

store = nn.ParamStore()
store.add("acts", actions0)
for hz in (240, 480):
    store.params["acts"] = actions0.copy()
    store.m["acts"][:]=0; store.v["acts"][:]=0; store.step=0
    for it in range(60):
        tape = ad.Tape(check_finite=False)
        acts = tape.leaf(store.params["acts"])
        state = refs[0][None, :]
        loss_terms = []
        for l in range(W):
            state = ENGINE.control_step(state, ad.reshape(acts[l], (1,6)), 30, hz)
            err = ad.mul(ad.sub(ad.mul(ad.sub(state, norm.mean), 1/norm.std), norm.normalize(refs[l+1])[None,:]), 1.0)
            loss_terms.append(ad.mean(ad.mul(ad.mul(err, err), Wt)))
        loss = loss_terms[0]
        for t in loss_terms[1:]: loss = ad.add(loss, t)
        loss = ad.mul(loss, 1.0/W)
        g = tape.backward(loss).wrt(acts)
        nn.adam_step(store, {"acts": g}, lr=0.02)
        if it % 15 == 0 or it == 59:
            print(f"hz={hz} it={it} loss={float(ad._data(loss)):.4f} |g|={np.abs(g).max():.3f}", flush=True)
