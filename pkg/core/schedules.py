# core/schedules.py
import math
from typing import Callable, Dict, Tuple

from core.errors import ConfigurationError
from data.models import IdpsoConfig

# (config, t, particle distance to gbest, swarm mean distance) -> (w, c1, c2)
ScheduleFn = Callable[[IdpsoConfig, int, float, float], Tuple[float, float, float]]


class ScheduleRegistry:
    """
    Registry of swarm parameter schedules.
    A new schedule is added by registering a function under a name usable in IdpsoConfig.schedule.
    """

    _schedules: Dict[str, ScheduleFn] = {}

    @classmethod
    def register_schedule(cls, name: str):
        """Decorator to register a schedule function"""
        def decorator(func: ScheduleFn) -> ScheduleFn:
            cls._schedules[name] = func
            return func
        return decorator

    @classmethod
    def get(cls, name: str) -> ScheduleFn:
        try:
            return cls._schedules[name]
        except KeyError:
            raise ConfigurationError(f"Unknown parameter schedule '{name}'. Known: {', '.join(cls.names())}")

    @classmethod
    def names(cls):
        return sorted(cls._schedules)


def _logistic(x: float) -> float:
    return 0.5 * (1.0 + math.tanh(0.5 * x))


def _decay(config: IdpsoConfig, t: int, exponent: float) -> float:
    progress = max(0.0, 1.0 - t / config.max_iterations)
    return config.w_final + (config.w_initial - config.w_final) * progress ** exponent


@ScheduleRegistry.register_schedule("idpso_logistic")
def idpso_logistic(config: IdpsoConfig, t: int, distance: float, mean_distance: float) -> Tuple[float, float, float]:
    """
    Per-particle inertia decay. Particles farther from gbest than the swarm average get an
    exponent below 1 (inertia stays high, keep exploring); particles near gbest get an exponent
    above 1 (inertia drops faster, exploit). The exponent lies in (0.5, 1.5).
    """
    exponent = 1.5 - _logistic(config.mu * (distance - mean_distance))
    return _decay(config, t, exponent), config.c1, config.c2


@ScheduleRegistry.register_schedule("linear")
def linear(config: IdpsoConfig, t: int, distance: float, mean_distance: float) -> Tuple[float, float, float]:
    """Classic linearly decreasing inertia, identical for every particle."""
    return _decay(config, t, 1.0), config.c1, config.c2
