"""Text-to-motion evaluation: a from-scratch contrastive text/motion encoder
pair plus the retrieval, distribution and task metrics computed with it.

The evaluator must clear a retrieval gate on held-out data before any metric
is reported; a model below the gate is rejected rather than silently used.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from . import nn
from .seeding import stream


class EvaluatorRejected(RuntimeError):
    """The contrastive model failed its held-out retrieval gate."""


@dataclass(frozen=True)
class ContrastiveConfig:
    frame_dim: int
    vocab_size: int
    hidden: int = 128
    embed_dim: int = 32
    temperature: float = 0.07


def init_contrastive(store, cfg, seed):
    nn.init_mlp(store, "motion.frame", [cfg.frame_dim, cfg.hidden, cfg.hidden], seed)
    nn.init_mlp(store, "motion.head", [cfg.hidden, cfg.hidden, cfg.embed_dim], seed + 1)
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=cfg.vocab_size,
                                                     embed_dim=64, hidden=cfg.hidden,
                                                     out_dim=cfg.embed_dim), seed + 2)


def _l2_normalize(x):
    norm = ad.sqrt(ad.add(ad.sum_(ad.mul(x, x), axis=-1, keepdims=True), 1e-12))
    return ad.div(x, norm)


def embed_motion(bound, cfg, frames):
    """L2-normalized embedding of (B, L, D) normalized motions."""
    data = ad._data(frames)
    if data.ndim == 2:
        frames = ad.reshape(frames, (1,) + data.shape)
    h = ad.tanh(nn.mlp_forward(bound, "motion.frame", frames, 2))
    pooled = ad.mean(h, axis=1)
    return _l2_normalize(nn.mlp_forward(bound, "motion.head", pooled, 2))


def embed_text(bound, cfg, token_ids):
    return _l2_normalize(nn.encode_instruction(bound, token_ids))


def info_nce(motion_emb, text_emb, temperature):
    """Symmetric InfoNCE over in-batch pairs; zero for a single pair."""
    logits = ad.mul(ad.matmul(motion_emb, ad.swapaxes(text_emb, -1, -2)),
                    1.0 / temperature)
    B = ad._data(logits).shape[0]
    labels = np.eye(B)
    log_m = ad.log(ad.add(ad.softmax(logits, axis=1), 1e-12))
    log_t = ad.log(ad.add(ad.softmax(logits, axis=0), 1e-12))
    loss_m = ad.neg(ad.div(ad.sum_(ad.mul(log_m, labels)), float(B)))
    loss_t = ad.neg(ad.div(ad.sum_(ad.mul(log_t, labels)), float(B)))
    return ad.mul(ad.add(loss_m, loss_t), 0.5)


def train_contrastive(pairs, store, cfg, steps, batch, seed, lr=1e-3,
                      holdout=None, gate=0.5, log=None):
    """Train on (frames, token_ids) pairs; verify the retrieval gate.

    Raises :class:`EvaluatorRejected` if held-out 32-way top-1 retrieval does
    not beat ``gate`` after training.
    """
    for step in range(steps):
        rng = stream(seed, "contrastive", step)
        idx = rng.choice(len(pairs), size=min(batch, len(pairs)), replace=False)
        frames = np.stack([pairs[i][0] for i in idx])
        tokens = np.stack([pairs[i][1] for i in idx])
        tape = ad.Tape(check_finite=False)
        bound = store.bind(tape)
        loss = info_nce(embed_motion(bound, cfg, frames), embed_text(bound, cfg, tokens),
                        cfg.temperature)
        grads = tape.backward(loss)
        nn.adam_step(store, bound.gradients(grads), lr=lr)
        if log and step % log == 0:
            print(f"[contrastive] step {step}: loss {float(ad._data(loss)):.4f}")
    if holdout is not None:
        acc = retrieval_accuracy(store, cfg, holdout, way=32, seed=seed + 1)
        if acc <= gate:
            raise EvaluatorRejected(
                f"held-out 32-way retrieval top-1 {acc:.3f} <= gate {gate}")
    return store


def retrieval_accuracy(store, cfg, pairs, way=32, seed=0, rounds=None):
    """Mean top-1 accuracy of picking the true text among ``way`` candidates."""
    bound = store.bind(None)
    motions = np.stack([p[0] for p in pairs])
    tokens = np.stack([p[1] for p in pairs])
    m_emb = embed_motion(bound, cfg, motions)
    t_emb = embed_text(bound, cfg, tokens)
    rng = stream(seed, "retrieval")
    rounds = rounds or max(64, len(pairs))
    hits = 0
    for _ in range(rounds):
        i = int(rng.integers(len(pairs)))
        distract = rng.choice(len(pairs), size=way - 1, replace=len(pairs) < way)
        cands = np.concatenate([[i], distract])
        sims = t_emb[cands] @ m_emb[i]
        hits += int(np.argmax(sims) == 0)
    return hits / rounds


# ---------------------------------------------------------------------------
# metrics

def r_precision(store, cfg, pairs, texts_pool, k=(1, 2, 3), seed=0):
    """Rank the true instruction among 31 sampled distractors by cosine.

    ``pairs`` holds (normalized motion frames, token ids); ``texts_pool`` the
    token id pool distractors are drawn from.
    """
    if len(texts_pool) < 32:
        raise ValueError("need at least 32 candidate instructions")
    bound = store.bind(None) if store is not None else None
    rng = stream(seed, "rprec")
    pool = np.stack(texts_pool)
    hits = {kk: 0 for kk in k}
    for frames, tokens in pairs:
        m_emb = embed_motion(bound, cfg, frames)[0]
        cand_tokens = [tokens]
        others = np.where(~np.all(pool == tokens, axis=1))[0]
        if len(others) == 0:
            raise ValueError("distractor pool holds only the true instruction")
        picks = rng.choice(others, size=31, replace=len(others) < 31)
        cand_tokens.extend(pool[i] for i in picks)
        t_emb = embed_text(bound, cfg, np.stack(cand_tokens))
        order = np.argsort(-(t_emb @ m_emb))
        rank = int(np.where(order == 0)[0][0])
        for kk in k:
            hits[kk] += int(rank < kk)
    return {kk: hits[kk] / len(pairs) for kk in k}


def fid(features_a, features_b):
    """Frechet distance between Gaussian fits of two feature sets.

    The matrix square root uses a symmetric eigendecomposition with
    eigenvalues clamped at zero; eigenvalues below -1e-6 signal broken inputs.
    """
    a = np.asarray(features_a, dtype=np.float64)
    b = np.asarray(features_b, dtype=np.float64)
    if len(a) < 2 * a.shape[1] or len(b) < 2 * b.shape[1]:
        raise ValueError("need at least 2 x dim samples per side")
    mu_a, mu_b = a.mean(axis=0), b.mean(axis=0)
    ca = np.atleast_2d(np.cov(a, rowvar=False))
    cb = np.atleast_2d(np.cov(b, rowvar=False))

    vals_a, vecs_a = np.linalg.eigh(ca)
    if np.min(vals_a) < -1e-6:
        raise ValueError("covariance is not PSD")
    root_a = (vecs_a * np.sqrt(np.clip(vals_a, 0, None))) @ vecs_a.T
    inner = root_a @ cb @ root_a
    vals, _ = np.linalg.eigh(inner)
    if np.min(vals) < -1e-6:
        raise ValueError("product covariance is not PSD")
    tr_sqrt = np.sqrt(np.clip(vals, 0, None)).sum()
    value = float(np.sum((mu_a - mu_b) ** 2) + np.trace(ca) + np.trace(cb) - 2 * tr_sqrt)
    return max(value, 0.0)


def multimodal_distance(store, cfg, pairs):
    """Mean Euclidean distance between matched text and motion embeddings."""
    bound = store.bind(None)
    motions = np.stack([p[0] for p in pairs])
    tokens = np.stack([p[1] for p in pairs])
    m_emb = embed_motion(bound, cfg, motions)
    t_emb = embed_text(bound, cfg, tokens)
    return float(np.linalg.norm(m_emb - t_emb, axis=1).mean())


def diversity(motions, n_pairs, seed=0):
    """Mean per-frame L2 distance of joint angles over random disjoint pairs."""
    if len(motions) < 2:
        raise ValueError("need at least two motions")
    rng = stream(seed, "diversity")
    total = 0.0
    for _ in range(n_pairs):
        i, j = rng.choice(len(motions), size=2, replace=False)
        qa = motions[i][:, 3:9]
        qb = motions[j][:, 3:9]
        n = min(len(qa), len(qb))
        total += float(np.linalg.norm(qa[:n] - qb[:n], axis=1).mean())
    return total / n_pairs


@dataclass
class MetricReport:
    r_precision_top1: float
    r_precision_top2: float
    r_precision_top3: float
    multimodal: float
    fid: float
    diversity: float
    success_rate: float | None
    n_episodes: int
    seed: int
    spread: dict | None = None

    def to_dict(self):
        out = {
            "r_precision": {"top1": self.r_precision_top1, "top2": self.r_precision_top2,
                            "top3": self.r_precision_top3},
            "multimodal_distance": self.multimodal,
            "fid": self.fid,
            "diversity": self.diversity,
            "n_episodes": self.n_episodes,
            "seed": self.seed,
        }
        if self.success_rate is not None:
            out["success_rate"] = self.success_rate
        if self.spread is not None:
            out["spread"] = self.spread
        return out

    def table(self):
        rows = [("R-precision top-1", self.r_precision_top1),
                ("R-precision top-2", self.r_precision_top2),
                ("R-precision top-3", self.r_precision_top3),
                ("Multimodal dist", self.multimodal),
                ("FID", self.fid),
                ("Diversity", self.diversity)]
        if self.success_rate is not None:
            rows.append(("Success rate", self.success_rate))
        width = max(len(r[0]) for r in rows)
        return "\n".join(f"{name:<{width}}  {value:8.4f}" for name, value in rows)
