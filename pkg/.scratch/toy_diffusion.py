import time, numpy as np
from textmotion import autodiff as ad, diffusion as df, motiondata as md, nn
from textmotion.seeding import stream

t0 = time.time()
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

for epoch in range(30):
    loss = df.train_epoch(data, store, cfg, sched, batch_size=32, seed=3, lr=2e-4,
                          epoch=epoch, cond_dropout=0.0)
    if epoch % 5 == 0 or epoch == 29:
        print(f"epoch {epoch}: loss {loss:.4f} ({time.time()-t0:.0f}s)", flush=True)

def classify(x):
    mag = np.abs(np.fft.rfft(x[:, 0]))
    return min(FREQS.values(), key=lambda k: -mag[k])

bound = store.bind(None)
hits = 0
for i in range(100):
    text = "a slow wave" if i % 2 == 0 else "a fast wave"
    cond = nn.encode_instruction(bound, vocab.tokenize(text))
    tau = df.sample(store, cfg, sched, cond, L, D, sampler="ddim", ddim_steps=50, seed=1000+i)
    k = classify(tau)
    hits += int(k == FREQS[text])
print(f"class-consistent: {hits}/100 ({time.time()-t0:.0f}s total)")
