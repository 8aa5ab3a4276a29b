import time, numpy as np
from textmotion import autodiff as ad, diffusion as df, motiondata as md, nn
from textmotion.seeding import stream

t0=time.time()
L, D = 32, 1
vocab = md.Vocabulary(words=["slow", "fast", "wave"])
FREQS = {"a slow wave": 2, "a fast wave": 5}
rng = stream(0, "toy-data")
data = []
for i in range(512):
    text = "a slow wave" if i % 2 == 0 else "a fast wave"
    k = FREQS[text]
    phase = rng.uniform(0, 2*np.pi)
    x = np.sin(2*np.pi*k*np.arange(L)/L + phase)[:, None]
    data.append((x, vocab.tokenize(text)))

store = nn.ParamStore()
cfg = nn.DenoiserConfig(frame_dim=D, cond_dim=64, width=48, heads=4, blocks=2, ff_mult=2)
nn.init_denoiser(store, cfg, seed=1)
nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size), seed=2)
sched = df.DiffusionSchedule(steps=1000)

def accuracy(sampler, n=40):
    bound = store.bind(None)
    hits = 0
    for i in range(n):
        text = "a slow wave" if i % 2 == 0 else "a fast wave"
        cond = nn.encode_instruction(bound, vocab.tokenize(text))
        tau = df.sample(store, cfg, sched, cond, L, D, sampler=sampler, ddim_steps=50, seed=5000+i)
        mag = np.abs(np.fft.rfft(tau[:, 0]))
        k = min(FREQS.values(), key=lambda kk: -mag[kk])
        hits += int(k == FREQS[text])
    return hits / n

for phase_i in range(10):
    for e in range(30):
        loss = df.train_epoch(data, store, cfg, sched, batch_size=32, seed=3,
                              lr=5e-4, epoch=phase_i*30+e, cond_dropout=0.0)
    acc_d = accuracy("ddim")
    print(f"epochs {(phase_i+1)*30}: loss {loss:.4f} ddim acc {acc_d:.2f} ({time.time()-t0:.0f}s)", flush=True)
    if acc_d > 0.95:
        break
print("ancestral acc:", accuracy("ancestral", n=20), f"({time.time()-t0:.0f}s)")
