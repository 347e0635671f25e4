"""Multi-robot socially-aware navigation: simulator, encoder and MAPPO trainer."""

from .core import (
    AgentKind,
    AgentState,
    ConfigError,
    KinematicLimits,
    PrivateState,
    PublicState,
    ScenarioConfig,
    ScenarioGenerationError,
    generate_scenario,
    wrap_angle,
)

__version__ = "0.1.0"
