"""Run-level counters and samples."""

from __future__ import annotations

from dataclasses import dataclass, field


@dataclass
class SimMetrics:
    scheme: str = ""
    topology: str = ""
    load: float = 0.0
    seed: int = 0
    bursts_generated: int = 0
    bursts_delivered: int = 0
    bursts_lost: int = 0
    bursts_in_flight: int = 0
    deflections: int = 0
    retransmissions: int = 0
    contentions: int = 0
    offset_nacks: int = 0
    delay_samples: list = field(default_factory=list)  # (burst_id, seconds)
    offset_samples: list = field(default_factory=list)  # seconds, one per ingress emission

    def conserved(self):
        return self.bursts_generated == self.bursts_delivered + self.bursts_lost + self.bursts_in_flight
