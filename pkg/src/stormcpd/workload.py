"""Load generation: timed read/write file requests from clients.

Arrivals are either a fixed schedule or a Poisson process; file sizes come
from a constant, uniform, or lognormal distribution.  Reads re-read files
written earlier in the run (the generator falls back to a write while no
file exists yet), so every read targets a known file.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConfigError
from .resources import FileSpec

POLICIES = ("round_robin", "least_queue", "free_space_weighted")


@dataclass
class RequestSpec:
    op: str  # "read" | "write"
    file: FileSpec
    issue_at: float
    client: str

    def __post_init__(self):
        if self.op not in ("read", "write"):
            raise ConfigError(f"request op must be read or write, got {self.op!r}")
        if self.issue_at < 0:
            raise ConfigError("issue_at must be >= 0")


@dataclass
class LoadScenario:
    duration: float
    arrival: str = "poisson"  # "poisson" | "schedule"
    rate: Optional[float] = None  # requests/s, poisson only
    schedule: Optional[Sequence[float]] = None  # fixed issue times
    file_size: dict = field(default_factory=lambda: {"dist": "constant", "mb": 10.0})
    block_size: float = 4.0  # MB
    read_fraction: float = 0.0
    flops_per_request: float | dict = 1e8
    policy: str = "round_robin"
    rng_seed: Optional[int] = None

    def __post_init__(self):
        if self.duration <= 0:
            raise ConfigError("duration must be > 0", "workload.duration")
        if self.arrival not in ("poisson", "schedule"):
            raise ConfigError(
                f"arrival must be poisson or schedule, got {self.arrival!r}",
                "workload.arrival",
            )
        if self.arrival == "poisson" and (self.rate is None or self.rate <= 0):
            raise ConfigError("poisson arrival needs rate > 0", "workload.rate")
        if self.arrival == "schedule" and self.schedule is None:
            raise ConfigError("schedule arrival needs a schedule list", "workload.schedule")
        if not 0 <= self.read_fraction <= 1:
            raise ConfigError("read_fraction must be in [0, 1]", "workload.read_fraction")
        if self.block_size <= 0:
            raise ConfigError("block_size must be > 0", "workload.block_size")
        # flops may be one constant or a per-kind table {read = .., write = ..}
        flops = self.flops_per_request
        if isinstance(flops, dict):
            if set(flops) != {"read", "write"} or any(v < 0 for v in flops.values()):
                raise ConfigError(
                    "per-kind flops needs non-negative read and write entries",
                    "workload.flops_per_request",
                )
        elif flops < 0:
            raise ConfigError("flops_per_request must be >= 0", "workload.flops_per_request")
        if self.policy not in POLICIES:
            raise ConfigError(
                f"policy must be one of {POLICIES}, got {self.policy!r}",
                "workload.policy",
            )
        dist = self.file_size.get("dist")
        if dist == "constant":
            if self.file_size.get("mb", 0) <= 0:
                raise ConfigError("constant file size needs mb > 0", "workload.file_size.mb")
        elif dist == "uniform":
            lo, hi = self.file_size.get("lo", 0), self.file_size.get("hi", 0)
            if not 0 < lo <= hi:
                raise ConfigError("uniform file size needs 0 < lo <= hi", "workload.file_size")
        elif dist == "lognormal":
            if self.file_size.get("sigma", -1) < 0:
                raise ConfigError("lognormal file size needs sigma >= 0", "workload.file_size")
        else:
            raise ConfigError(
                f"file_size dist must be constant, uniform or lognormal, got {dist!r}",
                "workload.file_size.dist",
            )


@dataclass
class BalancerPolicy:
    policy: str = "round_robin"

    def __post_init__(self):
        if self.policy not in POLICIES:
            raise ConfigError(f"unknown balancer policy {self.policy!r}", "policy")


def _draw_size(scenario: LoadScenario, rng: np.random.Generator) -> float:
    fs = scenario.file_size
    if fs["dist"] == "constant":
        return float(fs["mb"])
    if fs["dist"] == "uniform":
        return float(rng.uniform(fs["lo"], fs["hi"]))
    return float(rng.lognormal(fs.get("mu", 0.0), fs["sigma"]))


def generate(
    scenario: LoadScenario,
    clients: Sequence[str] = ("client",),
    rng: Optional[np.random.Generator] = None,
) -> list[RequestSpec]:
    """Produce the request stream, sorted by issue time.

    Poisson inter-arrivals and size/op draws all come from one seeded
    generator, so the stream is reproducible.  Writes name files
    sequentially; reads pick a previously written file uniformly.
    """
    if rng is None:
        rng = np.random.default_rng(scenario.rng_seed)
    if scenario.arrival == "schedule":
        times = sorted(float(t) for t in scenario.schedule if t <= scenario.duration)
        if any(t < 0 for t in times):
            raise ConfigError("schedule times must be >= 0", "workload.schedule")
    else:
        times = []
        t = 0.0
        while True:
            t += rng.exponential(1.0 / scenario.rate)
            if t > scenario.duration:
                break
            times.append(t)

    requests: list[RequestSpec] = []
    written: list[FileSpec] = []
    n_files = 0
    for i, t in enumerate(times):
        client = clients[i % len(clients)]
        want_read = scenario.read_fraction > 0 and rng.random() < scenario.read_fraction
        if want_read and written:
            idx = int(rng.integers(0, len(written)))
            requests.append(RequestSpec("read", written[idx], t, client))
        else:
            size = max(_draw_size(scenario, rng), 1e-6)
            block = min(scenario.block_size, size)
            file = FileSpec(name=f"f{n_files:06d}", block_size=block, total_size=size)
            n_files += 1
            written.append(file)
            requests.append(RequestSpec("write", file, t, client))
    return requests
