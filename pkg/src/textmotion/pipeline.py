"""End-to-end inference: instruction (plus optional waypoint and history) to a
diffusion plan, then closed-loop skill execution on the simulated character.

Plans are sampled in a segment-local frame: the horizontal origin is the start
state's root position, so autoregressive sessions stay inside the coordinate
range the planner was trained on regardless of how far the character has
traveled.  The direct-tracking baseline feeds planned joint angles straight to
the PD controller with no skill mapping.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffusion, nn, physics, skills
from .motiondata import Normalizer, Vocabulary

ARENA_HALF = 3.0          # the waypoint arena is a 6 x 6 square
SUCCESS_RADIUS = 0.5      # m, horizontal distance for waypoint success
PLAN_LENGTH = 90


@dataclass
class EpisodeRequest:
    instruction: str
    waypoint: tuple | None = None
    history: np.ndarray | None = None     # recent executed states, oldest first
    start_state: np.ndarray | None = None
    length: int | None = None              # defaults to the bundle's plan length
    seed: int = 0
    sampler: str = "ddim"
    ddim_steps: int = 50
    sample_skills: bool = False
    perturbation: dict | None = None

    def __post_init__(self):
        if self.waypoint is not None:
            x, y = float(self.waypoint[0]), float(self.waypoint[1])
            if abs(x) > ARENA_HALF or abs(y) > ARENA_HALF:
                raise ValueError(f"waypoint ({x}, {y}) outside the {2*ARENA_HALF:.0f} m arena")
            self.waypoint = (x, y)


@dataclass
class EpisodeResult:
    plan: np.ndarray                      # (L, D) denormalized kinematic plan
    executed: np.ndarray                  # (<= L, D) simulated trajectory
    actions: np.ndarray
    success: bool | None
    distance: float | None
    divergence: np.ndarray                # per-frame root distance plan vs executed
    completed: bool
    error: str = ""

    @property
    def diverged(self):
        return (not self.completed) or bool(np.max(self.divergence) > 0.75) \
            or bool(np.max(np.abs(self.executed[:, 2])) > 1.4)

    def to_dict(self):
        return {
            "plan": self.plan.tolist(),
            "executed": self.executed.tolist(),
            "actions": self.actions.tolist(),
            "success": self.success,
            "distance": self.distance,
            "divergence": self.divergence.tolist(),
            "completed": self.completed,
            "error": self.error,
        }


@dataclass
class ActorBundle:
    """Everything inference needs, loaded from one checkpoint file."""

    model: physics.CharacterModel
    engine: physics.Engine
    vocab: Vocabulary
    normalizer: Normalizer
    planner: nn.ParamStore
    denoiser_cfg: nn.DenoiserConfig
    schedule: diffusion.DiffusionSchedule
    skill_store: nn.ParamStore
    skill_cfg: skills.SkillConfig
    plan_length: int = PLAN_LENGTH

    def save(self, path):
        extra = {
            "denoiser": [self.denoiser_cfg.frame_dim, self.denoiser_cfg.cond_dim,
                         self.denoiser_cfg.width, self.denoiser_cfg.heads,
                         self.denoiser_cfg.blocks, self.denoiser_cfg.ff_mult,
                         self.denoiser_cfg.max_len],
            "skills": [self.skill_cfg.state_dim, self.skill_cfg.action_dim,
                       self.skill_cfg.latent_dim, self.skill_cfg.hidden,
                       self.skill_cfg.action_sigma, self.skill_cfg.window,
                       self.skill_cfg.control_hz, self.skill_cfg.physics_hz],
            "schedule": [self.schedule.steps, self.schedule.betas[0], self.schedule.betas[-1]],
            "plan_length": [self.plan_length],
            "vocab_size": [self.vocab.size],
        }
        nn.save_checkpoint(path, {"planner": self.planner, "skills": self.skill_store},
                           normalizer=self.normalizer, extra=extra)

    @classmethod
    def load_parts(cls, planner_path, skills_path, model=None):
        """Assemble a bundle from separate planner and skills checkpoints."""
        records = nn.load_checkpoint(planner_path)
        skill_records = nn.load_checkpoint(skills_path)
        for key, value in skill_records.items():
            if key.startswith(("skills/", "extra/skills")):
                records[key] = value
        return cls._from_records(records, model)

    @classmethod
    def load(cls, path, model=None):
        return cls._from_records(nn.load_checkpoint(path), model)

    @classmethod
    def _from_records(cls, records, model=None):
        model = model or physics.default_character()
        vocab = Vocabulary()
        if int(records["extra/vocab_size"][0]) != vocab.size:
            raise ValueError("checkpoint vocabulary does not match the grammar")
        den = records["extra/denoiser"]
        skl = records["extra/skills"]
        sch = records["extra/schedule"]
        return cls(
            model=model,
            engine=physics.Engine(model),
            vocab=vocab,
            normalizer=Normalizer(records["normalizer/mean"], records["normalizer/std"]),
            planner=nn.store_from_records(records, "planner"),
            denoiser_cfg=nn.DenoiserConfig(frame_dim=int(den[0]), cond_dim=int(den[1]),
                                           width=int(den[2]), heads=int(den[3]),
                                           blocks=int(den[4]), ff_mult=int(den[5]),
                                           max_len=int(den[6])),
            schedule=diffusion.DiffusionSchedule(int(sch[0]), sch[1], sch[2]),
            skill_store=nn.store_from_records(records, "skills"),
            skill_cfg=skills.SkillConfig(state_dim=int(skl[0]), action_dim=int(skl[1]),
                                         latent_dim=int(skl[2]), hidden=int(skl[3]),
                                         action_sigma=float(skl[4]), window=int(skl[5]),
                                         control_hz=int(skl[6]), physics_hz=int(skl[7])),
            plan_length=int(records["extra/plan_length"][0]),
        )


def _root_divergence(plan, executed):
    n = len(executed)
    return np.linalg.norm(plan[:n, :2] - executed[:, :2], axis=1)


def plan_trajectory(bundle, request):
    """Sample the denormalized kinematic plan for a request (no execution)."""
    length = request.length or bundle.plan_length
    start = _start_state(bundle, request)
    origin = float(start[0])
    local_start = start.copy()
    local_start[0] -= origin

    guidance = None
    if request.history is not None and len(request.history) > 0:
        hist = np.asarray(request.history, dtype=np.float64).copy()
        hist[:, 0] -= origin
        guidance = diffusion.make_history_guidance(bundle.normalizer, hist, length)
    if request.waypoint is not None:
        wp = (request.waypoint[0] - origin, request.waypoint[1])
        wp_guidance = diffusion.make_waypoint_guidance(bundle.model, bundle.normalizer,
                                                       local_start, wp, length)
        guidance = diffusion.merge_guidance(guidance, wp_guidance)

    bound = bundle.planner.bind(None)
    cond = nn.encode_instruction(bound, bundle.vocab.tokenize(request.instruction))
    normed = diffusion.sample(bundle.planner, bundle.denoiser_cfg, bundle.schedule,
                              cond, length, bundle.denoiser_cfg.frame_dim,
                              guidance=guidance, sampler=request.sampler,
                              ddim_steps=request.ddim_steps, seed=request.seed)
    plan = bundle.normalizer.denormalize(normed)
    plan[:, 0] += origin
    return plan, start


def _start_state(bundle, request):
    if request.start_state is not None:
        return np.asarray(request.start_state, dtype=np.float64).copy()
    if request.history is not None and len(request.history) > 0:
        return np.asarray(request.history[-1], dtype=np.float64).copy()
    return physics.standing_state(bundle.model)


def _finish(bundle, request, plan, execution):
    executed = execution.states
    divergence = _root_divergence(plan, executed)
    success = distance = None
    if request.waypoint is not None:
        distance = float(abs(executed[-1, 0] - request.waypoint[0]))
        success = bool(distance < SUCCESS_RADIUS and execution.completed)
    return EpisodeResult(plan=plan, executed=executed,
                         actions=execution.actions, success=success,
                         distance=distance, divergence=divergence,
                         completed=execution.completed, error=execution.error)


def run_episode(bundle, request):
    """Plan from the instruction and conditions, then execute closed loop."""
    plan, start = plan_trajectory(bundle, request)
    execution = skills.execute_plan(bundle.skill_store, bundle.skill_cfg, bundle.engine,
                                    bundle.normalizer, start, plan,
                                    sample_skills=request.sample_skills,
                                    seed=request.seed, perturbation=request.perturbation)
    return _finish(bundle, request, plan, execution)


def track_plan_direct(bundle, plan, start=None, perturbation=None, seed=0,
                      waypoint=None):
    """Baseline: planned joint angles straight to the PD controller."""
    plan = np.asarray(plan, dtype=np.float64)
    if len(plan) < 2:
        raise ValueError("plan must hold at least two frames")
    start = physics.standing_state(bundle.model) if start is None else np.asarray(start).copy()
    eng = bundle.engine
    states = [start]
    actions = []
    completed = True
    error = ""
    from .seeding import stream
    rng = stream(seed, "direct")
    next_hit = perturbation.get("period", 1.0) if perturbation else None
    for i in range(len(plan) - 1):
        action = plan[i + 1, 3:3 + bundle.model.actuated]
        try:
            nxt = np.asarray(eng.control_step(states[-1], action,
                                              bundle.skill_cfg.control_hz,
                                              bundle.skill_cfg.physics_hz))
        except physics.SimulationError as err:
            completed, error = False, str(err)
            break
        sim_time = (i + 1) / bundle.skill_cfg.control_hz
        if next_hit is not None and sim_time >= next_hit - 1e-9:
            link = int(rng.integers(len(eng.model.links)))
            angle = rng.uniform(0.0, 2 * np.pi)
            imp = perturbation["magnitude"] * np.array([np.cos(angle), np.sin(angle)])
            nxt = np.asarray(eng.apply_impulse(nxt, link, imp))
            next_hit += perturbation.get("period", 1.0)
        if not np.all(np.isfinite(nxt)):
            completed, error = False, "non-finite state"
            break
        states.append(nxt)
        actions.append(action)
    execution = skills.ExecutionResult(np.array(states), np.array(actions), completed, error)
    request = EpisodeRequest(instruction="", waypoint=waypoint, start_state=start)
    return _finish(bundle, request, plan, execution)


@dataclass
class Session:
    """Autoregressive multi-segment episode state."""

    bundle: ActorBundle
    history_limit: int = 4 * PLAN_LENGTH
    current_state: np.ndarray = None
    history: np.ndarray = None
    results: list = field(default_factory=list)

    def __post_init__(self):
        if self.current_state is None:
            self.current_state = physics.standing_state(self.bundle.model)

    def run_segment(self, instruction, waypoint=None, seed=0, **kwargs):
        quarter = self.bundle.plan_length // 4
        history = None
        if self.history is not None and len(self.history) > 0:
            history = self.history[-quarter:]
        request = EpisodeRequest(instruction=instruction, waypoint=waypoint,
                                 history=history, start_state=self.current_state,
                                 seed=seed, **kwargs)
        result = run_episode(self.bundle, request)
        self.current_state = result.executed[-1].copy()
        frames = result.executed if self.history is None \
            else np.concatenate([self.history, result.executed[1:]], axis=0)
        self.history = frames[-self.history_limit:]
        self.results.append(result)
        return result


def run_session(bundle, requests):
    """Sequential segments; each conditions on the previous executed tail."""
    session = Session(bundle)
    out = []
    for req in requests:
        out.append(session.run_segment(req.instruction, waypoint=req.waypoint,
                                       seed=req.seed, sampler=req.sampler,
                                       ddim_steps=req.ddim_steps,
                                       sample_skills=req.sample_skills,
                                       perturbation=req.perturbation))
    return out
