"""Open-pit haulage simulation and learned truck dispatching."""

from .config import MineConfig, load_config, parse_config
from .engine import ConfigError
from .kernels import BACKEND
from .mine import Mine
from .runner import run_episode

__version__ = "0.1.0"

__all__ = ["BACKEND", "ConfigError", "Mine", "MineConfig", "__version__", "load_config", "parse_config", "run_episode"]
