import numpy as np
from textmotion import autodiff as ad, diffusion as df, motiondata as md, nn
from textmotion.seeding import stream

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
    df.train_epoch(data, store, cfg, sched, batch_size=32, seed=3, lr=2e-4, epoch=epoch, cond_dropout=0.0)

bound = store.bind(None)
c1 = ad._data(nn.encode_instruction(bound, vocab.tokenize("a slow wave")))
c2 = ad._data(nn.encode_instruction(bound, vocab.tokenize("a fast wave")))
print("cond embeddings differ by:", np.abs(c1-c2).max(), "norms:", np.linalg.norm(c1), np.linalg.norm(c2))

x = data[0][0]
for t in (100, 500, 900):
    eps = stream(1,"e",t).normal(size=x.shape)
    xt = df.q_sample(sched, x, t, eps)
    p1 = ad._data(nn.denoiser_forward(bound, cfg, xt, t, c1))
    p2 = ad._data(nn.denoiser_forward(bound, cfg, xt, t, c2))
    mag1 = np.abs(np.fft.rfft(p1[:,0])); mag2 = np.abs(np.fft.rfft(p2[:,0]))
    print(f"t={t}: |p1-p2|max={np.abs(p1-p2).max():.4f} p1 peak bin {np.argmax(mag1[1:])+1} p2 peak bin {np.argmax(mag2[1:])+1} amp {p1.std():.3f}")
# what do samples look like?
tau = df.sample(store, cfg, sched, c2, L, D, sampler="ddim", ddim_steps=50, seed=7)
mag = np.abs(np.fft.rfft(tau[:,0]))
print("sample std:", tau.std(), "fft mags:", mag.round(2))
