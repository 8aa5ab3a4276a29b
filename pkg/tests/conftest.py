import numpy as np
import pytest

from textmotion import diffusion, nn, physics, pipeline, skills
from textmotion.motiondata import Normalizer, Vocabulary


@pytest.fixture(scope="session")
def tiny_bundle():
    """Randomly initialized, miniature model bundle for contract tests."""
    model = physics.default_character()
    vocab = Vocabulary()
    D = model.state_dim

    planner = nn.ParamStore()
    dcfg = nn.DenoiserConfig(frame_dim=D, cond_dim=64, width=32, heads=2, blocks=1)
    nn.init_denoiser(planner, dcfg, seed=70)
    nn.init_text_encoder(planner, nn.TextEncoderConfig(vocab_size=vocab.size), seed=71)

    skill_store = nn.ParamStore()
    scfg = skills.SkillConfig(state_dim=D, action_dim=model.actuated,
                              latent_dim=8, hidden=32, window=4)
    skills.init_skill_model(skill_store, scfg, seed=72)

    mean = np.zeros(D)
    std = np.ones(D)
    mean[1] = physics.standing_state(model)[1]
    return pipeline.ActorBundle(
        model=model, engine=physics.Engine(model), vocab=vocab,
        normalizer=Normalizer(mean, std), planner=planner, denoiser_cfg=dcfg,
        schedule=diffusion.DiffusionSchedule(steps=30), skill_store=skill_store,
        skill_cfg=scfg, plan_length=24)
