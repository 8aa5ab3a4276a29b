import numpy as np
from textmotion import autodiff as ad, motiondata as md, nn, physics, skills
from textmotion.seeding import stream

MODEL = physics.default_character(); ENGINE = physics.Engine(MODEL)
tpl = md.standard_templates()
clip = md.retarget(md.generate_clip(tpl["walk"], {"speed":1.0,"freq":1.4,"knee":0.5,"ramp":0.0}, seed=3), MODEL)
_,_,norm = md.build_dataset(12, 0.9, 5)
Wt = skills.tracking_weights(norm)
W = 8
refs = clip.frames[20:20+W+1][None]

# 1) raw action optimum for this window (as in diag2)
store0 = nn.ParamStore(); store0.add("acts", refs[0,1:,3:9].copy())
for it in range(150):
    tape = ad.Tape(check_finite=False)
    acts = tape.leaf(store0.params["acts"])
    state = refs[:,0]
    terms=[]
    for l in range(W):
        state = ENGINE.control_step(state, ad.reshape(acts[l],(1,6)), 30, 480)
        err = ad.sub(ad.mul(ad.sub(state, norm.mean), 1/norm.std), norm.normalize(refs[0,l+1])[None,:])
        terms.append(ad.mean(ad.mul(ad.mul(err,err),Wt)))
    loss=terms[0]
    for t in terms[1:]: loss=ad.add(loss,t)
    loss=ad.mul(loss,1.0/W)
    g=tape.backward(loss).wrt(acts)
    nn.adam_step(store0, {"acts":g}, lr=0.02)
raw_opt = store0.params["acts"].copy()
print("raw-opt loss:", float(ad._data(loss)))
print("raw-opt overshoot |a-qref|:", np.abs(raw_opt - refs[0,1:,3:9]).max(axis=1).round(2))

# 2) per-dim error analysis of the raw optimum rollout
state = refs[:,0]
for l in range(W):
    state = ENGINE.control_step(state, raw_opt[l], 30, 480)
state = ad._data(state)
err = (state - refs[0,W][None,:]) 
print("final-frame phys err (pos):", err[0,:9].round(3))
print("final-frame phys err (vel):", err[0,9:].round(2))
