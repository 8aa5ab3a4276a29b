"""Operator command line: data generation, training, evaluation, inference,
and the HTTP service.

Every command is idempotent for a fixed config and seed, writes its artifacts
under the configured output directory, and drops a manifest recording the
config snapshot, package version and wall time.  Exit codes: 2 for config
errors, 3 for missing artifacts, 4 for training divergence.
"""

from __future__ import annotations

import argparse
import json
import subprocess
import sys
import time
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__, config as configmod
from . import diffusion, evaluation, nn, physics, pipeline, skills
from . import motiondata as md

EXIT_CONFIG = 2
EXIT_MISSING = 3
EXIT_DIVERGED = 4


class MissingArtifact(FileNotFoundError):
    pass


class TrainingDiverged(RuntimeError):
    pass


def _version_string():
    try:
        described = subprocess.run(["git", "describe", "--always", "--dirty"],
                                   capture_output=True, text=True, timeout=5)
        if described.returncode == 0:
            return f"{__version__}+{described.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def _write_manifest(cfg, command, started):
    out = Path(cfg["paths"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "command": command,
        "config": cfg,
        "version": _version_string(),
        "wall_time_s": round(time.time() - started, 3),
    }
    with open(out / f"manifest-{command}.json", "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2)


def _character(cfg):
    path = cfg["paths"]["character"]
    if path:
        return physics.load_character(path)
    return physics.default_character()


def _load_dataset(cfg, model):
    root = Path(cfg["paths"]["dataset"])
    train_path, test_path = root / "train.jsonl", root / "test.jsonl"
    norm_path = root / "normalizer.json"
    if not (train_path.exists() and test_path.exists() and norm_path.exists()):
        raise MissingArtifact(f"dataset not found under {root}; run gen-data first")
    with open(norm_path, encoding="utf-8") as fh:
        norm = md.Normalizer.from_dict(json.load(fh))
    return md.load_dataset(train_path), md.load_dataset(test_path), norm


# ---------------------------------------------------------------------------
# commands

def cmd_gen_data(cfg):
    model = _character(cfg)
    train, test, norm = md.build_dataset(cfg["data"]["n_clips"], cfg["data"]["split_ratio"],
                                         cfg["data"]["seed"], model=model)
    root = Path(cfg["paths"]["dataset"])
    root.mkdir(parents=True, exist_ok=True)
    md.save_dataset(train, root / "train.jsonl")
    md.save_dataset(test, root / "test.jsonl")
    with open(root / "normalizer.json", "w", encoding="utf-8") as fh:
        json.dump(norm.to_dict(), fh)
    physics.save_character(model, root / "character.json")
    print(f"wrote {len(train)} train / {len(test)} test clips to {root}")


def _skill_config(cfg, model):
    s = cfg["skills"]
    return skills.SkillConfig(state_dim=model.state_dim, action_dim=model.actuated,
                              latent_dim=s["latent_dim"], hidden=s["hidden"],
                              action_sigma=s["sigma"], window=s["window"],
                              control_hz=s["control_hz"], physics_hz=s["physics_hz"])


def cmd_train_skills(cfg, log_every=25):
    model = _character(cfg)
    engine = physics.Engine(model)
    train, _, norm = _load_dataset(cfg, model)
    s = cfg["skills"]
    store = nn.ParamStore()
    base = _skill_config(cfg, model)
    skills.init_skill_model(store, base, seed=s["seed"])
    weights = skills.tracking_weights(norm)
    for stage_idx, (window, steps) in enumerate(s["curriculum"]):
        stage = replace(base, window=int(window))
        lr = s["lr"] if window < 8 else (s["mid_lr"] if window < 16 else s["long_lr"])
        warmup = stage_idx == 0
        curves = skills.train_skills(train, store, stage, engine, norm, weight=s["weight"],
                                     steps=int(steps), batch=s["batch"],
                                     seed=s["seed"] + int(window), lr=lr,
                                     start_noise=s["start_noise"], loss_weights=weights,
                                     drift_replay=0.0 if warmup else s["drift_replay"],
                                     lag_augment=0.0 if warmup else s["lag_augment"],
                                     log=log_every)
        if not curves["rec"] or not np.isfinite(curves["rec"][-1]):
            raise TrainingDiverged(f"skill training diverged at window {window}")
        print(f"[skills] window {window} done: rec {np.mean(curves['rec'][-15:]):.4f} "
              f"skipped {curves['skipped']}", flush=True)
    extra = {"skills": [base.state_dim, base.action_dim, base.latent_dim, base.hidden,
                        base.action_sigma, base.window, base.control_hz, base.physics_hz]}
    nn.save_checkpoint(cfg["paths"]["skills"], {"skills": store}, normalizer=norm, extra=extra)
    _maybe_combine(cfg)
    print(f"skills checkpoint written to {cfg['paths']['skills']}")


def cmd_train_diffusion(cfg, log_every=1):
    model = _character(cfg)
    train, _, norm = _load_dataset(cfg, model)
    d = cfg["diffusion"]
    vocab = md.Vocabulary()
    dcfg = nn.DenoiserConfig(frame_dim=model.state_dim, cond_dim=d["cond_dim"],
                             width=d["width"], heads=d["heads"], blocks=d["blocks"],
                             ff_mult=d["ff_mult"])
    store = nn.ParamStore()
    nn.init_denoiser(store, dcfg, seed=d["seed"])
    nn.init_text_encoder(store, nn.TextEncoderConfig(vocab_size=vocab.size,
                                                     out_dim=d["cond_dim"]), seed=d["seed"] + 1)
    schedule = diffusion.DiffusionSchedule(d["steps"], d["beta_start"], d["beta_end"])
    dataset = [(norm.normalize(c.frames), vocab.tokenize(c.text)) for c in train]
    for epoch in range(d["epochs"]):
        loss = diffusion.train_epoch(dataset, store, dcfg, schedule, d["batch"],
                                     seed=d["seed"], lr=d["lr"], epoch=epoch,
                                     cond_dropout=d["cond_dropout"])
        if not np.isfinite(loss):
            raise TrainingDiverged(f"diffusion loss became non-finite at epoch {epoch}")
        if epoch % log_every == 0 or epoch == d["epochs"] - 1:
            print(f"[diffusion] epoch {epoch}: loss {loss:.5f}", flush=True)
    extra = {
        "denoiser": [dcfg.frame_dim, dcfg.cond_dim, dcfg.width, dcfg.heads,
                     dcfg.blocks, dcfg.ff_mult, dcfg.max_len],
        "schedule": [schedule.steps, schedule.betas[0], schedule.betas[-1]],
        "plan_length": [cfg["plan"]["length"]],
        "vocab_size": [vocab.size],
    }
    nn.save_checkpoint(cfg["paths"]["planner"], {"planner": store}, normalizer=norm, extra=extra)
    _maybe_combine(cfg)
    print(f"planner checkpoint written to {cfg['paths']['planner']}")


def _maybe_combine(cfg):
    """Merge the planner and skills checkpoints into one bundle file."""
    planner, skills_path = Path(cfg["paths"]["planner"]), Path(cfg["paths"]["skills"])
    if planner.exists() and skills_path.exists():
        bundle = pipeline.ActorBundle.load_parts(planner, skills_path, model=_character(cfg))
        bundle.save(cfg["paths"]["model"])


def _load_bundle(cfg):
    model_path = Path(cfg["paths"]["model"])
    if model_path.exists():
        return pipeline.ActorBundle.load(model_path, model=_character(cfg))
    planner, skills_path = Path(cfg["paths"]["planner"]), Path(cfg["paths"]["skills"])
    if planner.exists() and skills_path.exists():
        return pipeline.ActorBundle.load_parts(planner, skills_path, model=_character(cfg))
    raise MissingArtifact("no trained model found; run train-skills and train-diffusion")


def cmd_train_eval(cfg):
    model = _character(cfg)
    train, test, norm = _load_dataset(cfg, model)
    e = cfg["evaluator"]
    vocab = md.Vocabulary()
    ccfg = evaluation.ContrastiveConfig(frame_dim=model.state_dim, vocab_size=vocab.size,
                                        hidden=e["hidden"], embed_dim=e["embed_dim"],
                                        temperature=e["temperature"])
    store = nn.ParamStore()
    evaluation.init_contrastive(store, ccfg, seed=e["seed"])
    pairs = [(norm.normalize(c.frames), vocab.tokenize(c.text)) for c in train]
    holdout = [(norm.normalize(c.frames), vocab.tokenize(c.text)) for c in test]
    evaluation.train_contrastive(pairs, store, ccfg, steps=e["steps"], batch=e["batch"],
                                 seed=e["seed"], lr=e["lr"], holdout=holdout,
                                 gate=e["gate"], log=200)
    extra = {"contrastive": [ccfg.frame_dim, ccfg.vocab_size, ccfg.hidden,
                             ccfg.embed_dim, ccfg.temperature]}
    nn.save_checkpoint(cfg["paths"]["evaluator"], {"contrastive": store},
                       normalizer=norm, extra=extra)
    print(f"evaluator checkpoint written to {cfg['paths']['evaluator']}")


def load_evaluator(path):
    path = Path(path)
    if not path.exists():
        raise MissingArtifact(f"evaluator checkpoint not found: {path}")
    records = nn.load_checkpoint(path)
    c = records["extra/contrastive"]
    ccfg = evaluation.ContrastiveConfig(frame_dim=int(c[0]), vocab_size=int(c[1]),
                                        hidden=int(c[2]), embed_dim=int(c[3]),
                                        temperature=float(c[4]))
    return nn.store_from_records(records, "contrastive"), ccfg


def cmd_evaluate(cfg):
    from . import evalsuite

    bundle = _load_bundle(cfg)
    ev_store, ev_cfg = load_evaluator(cfg["paths"]["evaluator"])
    model = bundle.model
    _, test, _ = _load_dataset(cfg, model)
    e = cfg["eval"]
    settings = evalsuite.EvalSettings(
        episodes=e["episodes"], waypoints=e["waypoints"], perturbation=e["perturbation"],
        perturb_magnitude=e["perturb_magnitude"], perturb_period=e["perturb_period"],
        repetitions=e["repetitions"], sampler=cfg["plan"]["sampler"],
        ddim_steps=cfg["plan"]["ddim_steps"],
    )
    report = evalsuite.evaluate_suite(bundle, ev_store, ev_cfg, test, settings, seed=e["seed"])
    out = Path(cfg["paths"]["output"])
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "metrics.json", "w", encoding="utf-8") as fh:
        json.dump(report.to_dict(), fh, indent=2)
    print(report.table())


def cmd_infer(cfg, text, waypoint=None, seed=0, out_path=None):
    bundle = _load_bundle(cfg)
    request = pipeline.EpisodeRequest(
        instruction=text, waypoint=waypoint, seed=seed,
        length=cfg["plan"]["length"], sampler=cfg["plan"]["sampler"],
        ddim_steps=cfg["plan"]["ddim_steps"])
    result = pipeline.run_episode(bundle, request)
    doc = result.to_dict()
    if out_path:
        with open(out_path, "w", encoding="utf-8") as fh:
            json.dump(doc, fh)
    summary = {"completed": result.completed, "frames": len(result.executed)}
    if result.success is not None:
        summary |= {"success": result.success, "distance": round(result.distance, 3)}
    print(json.dumps(summary))
    return result


def cmd_serve(cfg):
    import uvicorn

    from .service import create_app

    bundle = _load_bundle(cfg)
    app = create_app(bundle, plan_cfg=cfg["plan"])
    uvicorn.run(app, host=cfg["service"]["host"], port=cfg["service"]["port"])


# ---------------------------------------------------------------------------

def build_parser():
    parser = argparse.ArgumentParser(prog="textmotion",
                                     description="instruction-driven planar character animation")
    parser.add_argument("--config", help="JSON config file", default=None)
    parser.add_argument("--set", action="append", default=[], metavar="KEY.PATH=VALUE",
                        help="override a config key by dotted path")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("gen-data", "train-skills", "train-diffusion", "train-eval",
                 "evaluate", "serve"):
        sub.add_parser(name)
    infer = sub.add_parser("infer")
    infer.add_argument("--text", required=True)
    infer.add_argument("--waypoint", default=None, help="x,y in meters")
    infer.add_argument("--seed", type=int, default=0)
    infer.add_argument("--out", default=None, help="write the full episode JSON here")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    started = time.time()
    try:
        cfg = configmod.load_config(args.config, args.set)
    except configmod.ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        if args.command == "gen-data":
            cmd_gen_data(cfg)
        elif args.command == "train-skills":
            cmd_train_skills(cfg)
        elif args.command == "train-diffusion":
            cmd_train_diffusion(cfg)
        elif args.command == "train-eval":
            cmd_train_eval(cfg)
        elif args.command == "evaluate":
            cmd_evaluate(cfg)
        elif args.command == "infer":
            waypoint = None
            if args.waypoint:
                try:
                    x, y = (float(v) for v in args.waypoint.split(","))
                except ValueError:
                    print("waypoint must look like x,y", file=sys.stderr)
                    return EXIT_CONFIG
                waypoint = (x, y)
            cmd_infer(cfg, args.text, waypoint=waypoint, seed=args.seed, out_path=args.out)
        elif args.command == "serve":
            cmd_serve(cfg)
    except MissingArtifact as err:
        print(f"missing artifact: {err}", file=sys.stderr)
        return EXIT_MISSING
    except evaluation.EvaluatorRejected as err:
        print(f"evaluator rejected: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except TrainingDiverged as err:
        print(f"training diverged: {err}", file=sys.stderr)
        return EXIT_DIVERGED
    except ValueError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    _write_manifest(cfg, args.command, started)
    return 0


if __name__ == "__main__":
    sys.exit(main())
