"""Deterministic discrete-event message transport.

Latency is drawn from a moment-matched lognormal whose mean and standard
deviation grow linearly with the number of active offloading sessions beyond
the first, reproducing congestion-dependent delay. Each (src, dst) link owns
its own RNG stream seeded from the scenario seed, so adding a station never
perturbs the draws of existing links.
"""

from __future__ import annotations

import hashlib
import heapq
import math
import random
from dataclasses import dataclass

from .errors import ValidationError
from .messages import Envelope

# Samples are truncated below at this floor (ms); no latency is ever zero.
MIN_LATENCY_MS = 0.1


@dataclass(frozen=True)
class LatencyModel:
    base_mean: float = 10.54          # ms at one active session
    base_std: float = 9.83
    per_session_mean: float = 2.0     # ms added per session beyond the first (non-normative)
    per_session_std: float = 3.0      # ditto
    drop_prob: float = 0.0

    def __post_init__(self):
        if self.base_mean <= 0:
            raise ValidationError(f"base_mean must be positive, got {self.base_mean}")
        if self.base_std < 0 or self.per_session_std < 0:
            raise ValidationError("standard deviations must be non-negative")
        if not 0.0 <= self.drop_prob <= 1.0:
            raise ValidationError(f"drop_prob must be in [0, 1], got {self.drop_prob}")


def lognormal_params(mean: float, std: float) -> tuple[float, float]:
    """(mu, sigma) of the lognormal with the given first two moments."""
    sigma2 = math.log(1.0 + (std * std) / (mean * mean))
    mu = math.log(mean) - sigma2 / 2.0
    return mu, math.sqrt(sigma2)


def sample_latency(model: LatencyModel, n_active_sessions: int, rng: random.Random) -> float:
    """One latency draw in ms for the given congestion level."""
    extra = max(0, n_active_sessions - 1)
    mean = model.base_mean + model.per_session_mean * extra
    std = model.base_std + model.per_session_std * extra
    if std == 0.0:
        return max(MIN_LATENCY_MS, mean)
    mu, sigma = lognormal_params(mean, std)
    return max(MIN_LATENCY_MS, rng.lognormvariate(mu, sigma))


def _link_seed(seed: int, src, dst) -> int:
    digest = hashlib.sha256(f"{seed}:{src}:{dst}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class Network:
    """Priority-queue transport; deliveries come out in (deliver_at, seq) order."""

    def __init__(self, model: LatencyModel, seed: int, fifo: bool = False):
        self.model = model
        self._seed = seed
        self._fifo = fifo
        self._heap: list[tuple[int, int, Envelope]] = []
        self._seq = 0
        self._rngs: dict[tuple, random.Random] = {}
        self._last_delivery: dict[tuple, int] = {}
        self.dropped = 0

    def _rng(self, src, dst) -> random.Random:
        key = (src, dst)
        rng = self._rngs.get(key)
        if rng is None:
            rng = self._rngs[key] = random.Random(_link_seed(self._seed, src, dst))
        return rng

    def submit(self, now: int, env: Envelope, n_active_sessions: int) -> int | None:
        """Schedule env for delivery; returns the delivery time, or None if dropped.

        Sub-millisecond latency is rounded half-up.
        """
        rng = self._rng(env.src, env.dst)
        if self.model.drop_prob > 0.0:
            if rng.random() < self.model.drop_prob:
                self.dropped += 1
                return None
        latency = sample_latency(self.model, n_active_sessions, rng)
        deliver_at = now + int(latency + 0.5)
        if self._fifo:
            key = (env.src, env.dst, env.kind)
            deliver_at = max(deliver_at, self._last_delivery.get(key, 0))
            self._last_delivery[key] = deliver_at
        heapq.heappush(self._heap, (deliver_at, self._seq, env))
        self._seq += 1
        return deliver_at

    def step(self, until: int) -> list[tuple[int, Envelope]]:
        """Pop every delivery due at or before `until`, in queue order."""
        out = []
        while self._heap and self._heap[0][0] <= until:
            deliver_at, _, env = heapq.heappop(self._heap)
            out.append((deliver_at, env))
        return out

    def pending(self) -> int:
        return len(self._heap)
