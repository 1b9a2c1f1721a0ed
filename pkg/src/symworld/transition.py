from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Hashable

from .features import SymbolicState


class Provenance(str, enum.Enum):
    REAL = "real"
    IMAGINED = "imagined"


@dataclass(frozen=True, slots=True)
class Transition:
    """One ``(s, a, s', r, done)`` sample and where it came from."""

    state: SymbolicState
    action: Hashable
    next_state: SymbolicState
    reward: float = 0.0
    terminal: bool = False
    provenance: Provenance = Provenance.REAL
