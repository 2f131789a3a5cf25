"""Three-phase training schedule."""
from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class Curriculum:
    """Phase 1 learns foreground only (beta = 0); phase 2 blends the background
    in linearly and enables slot recruiting; phase 3 enables the percept gate."""

    phase2_start: int = 1000
    phase3_start: int = 2000

    def phase(self, update: int) -> int:
        if update < self.phase2_start:
            return 1
        return 2 if update < self.phase3_start else 3

    def beta(self, update: int) -> float:
        p = self.phase(update)
        if p == 1:
            return 0.0
        if p == 3:
            return 1.0
        span = self.phase3_start - self.phase2_start
        return min(1.0, (update - self.phase2_start) / span)

    def recruiting(self, update: int) -> bool:
        return self.phase(update) >= 2

    def update_module(self, update: int) -> bool:
        return self.phase(update) == 3


def learning_rate(update: int, lr: float, lr_decayed: float, decay_step: int) -> float:
    """Step schedule: ``lr`` until ``decay_step`` (0 disables the decay), ``lr_decayed`` afterwards."""
    return lr_decayed if decay_step > 0 and update >= decay_step else lr
