"""Instruction-driven planar character animation.

Text instructions are turned into state-trajectory plans by a diffusion model
and executed on a differentiable planar rigid-body character through a latent
skill controller.
"""

__version__ = "0.1.0"
