"""Order-connector instruction following in a small GridWorld.

Subpackages are plain modules: ``language`` (instruction grammar),
``env`` (simulator and shaping), ``replay`` (uniform and prioritized
buffers), ``qnet`` (numpy Q-network, TD loss, Adam, checkpoints),
``agent`` (training loop), ``experiment`` (evaluation protocol) and
``cli``.
"""

from .env import GridLayout, GridWorld, RewardConfig, Status, default_layout
from .language import (Instruction, LanguageSubset, enumerate_instructions, parse,
                       resolve_plan, validate)

__version__ = "0.1.0"

__all__ = [
    "GridLayout", "GridWorld", "RewardConfig", "Status", "default_layout",
    "Instruction", "LanguageSubset", "enumerate_instructions", "parse", "resolve_plan",
    "validate", "__version__",
]
