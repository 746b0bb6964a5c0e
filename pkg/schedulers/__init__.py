from .alpha_sweep_scheduler import AlphaSweepScheduler

__all__ = ["AlphaSweepScheduler"]
