"""Parameterized resource blocks and topology assembly.

Three basic resource kinds (CPU/controller, link, storage device) with the
parameters from the resource table, plus clients and IO balancers as plain
nodes.  Anomalies target a single component and either degrade its rated
speed by a multiplicative severity or break it entirely for a window.

Units are fixed: transfer and file sizes in MB, storage capacity in GB
(1 GB = 1024 MB), bandwidth and disk speeds in MB/s, CPU work in flops.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .errors import CapacityExceeded, ConfigError, UnknownComponent

MB_PER_GB = 1024.0

# node kinds and the directed connections allowed between them
KINDS = ("client", "balancer", "controller", "link", "storage")
COMPATIBLE_EDGES = {
    ("client", "balancer"),
    ("balancer", "controller"),
    ("controller", "link"),
    ("link", "storage"),
}


@dataclass
class CpuSpec:
    cores: int
    core_speed: float  # flops/s

    def __post_init__(self):
        if self.cores < 1:
            raise ConfigError("cores must be >= 1", "cpu.cores")
        if self.core_speed <= 0:
            raise ConfigError("core_speed must be > 0", "cpu.core_speed")


@dataclass
class LinkSpec:
    bandwidth: float  # MB/s
    latency: float = 0.0  # s

    def __post_init__(self):
        if self.bandwidth <= 0:
            raise ConfigError("bandwidth must be > 0", "link.bandwidth")
        if self.latency < 0:
            raise ConfigError("latency must be >= 0", "link.latency")


@dataclass
class StorageSpec:
    size: float  # GB
    write_speed: float  # MB/s
    read_speed: float  # MB/s
    used: float = 0.0  # GB

    def __post_init__(self):
        if self.size <= 0:
            raise ConfigError("size must be > 0", "storage.size")
        if self.write_speed <= 0 or self.read_speed <= 0:
            raise ConfigError("speeds must be > 0", "storage.write_speed/read_speed")
        if not 0 <= self.used <= self.size:
            raise ConfigError("used must be within [0, size]", "storage.used")


@dataclass
class FileSpec:
    name: str
    block_size: float  # MB
    total_size: float  # MB

    def __post_init__(self):
        if not 0 < self.block_size <= self.total_size:
            raise ConfigError(
                "block_size must satisfy 0 < block_size <= total_size",
                f"file.{self.name}",
            )

    def block_sizes(self) -> list[float]:
        """Split the file into full blocks plus one remainder block."""
        n_full, rem = divmod(self.total_size, self.block_size)
        blocks = [self.block_size] * int(n_full)
        if rem > 1e-12:
            blocks.append(rem)
        return blocks


@dataclass
class Node:
    """A topology component plus its mutable health state."""

    id: str
    kind: str
    cpu: Optional[CpuSpec] = None
    link: Optional[LinkSpec] = None
    storage: Optional[StorageSpec] = None
    online: bool = True
    degradation: float = 1.0  # severity multiplier on rated speed, 1.0 = healthy

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ConfigError(f"unknown node kind {self.kind!r}", f"node.{self.id}")
        if self.kind == "controller" and self.cpu is None:
            raise ConfigError("controller requires a cpu spec", f"node.{self.id}")
        if self.kind == "link" and self.link is None:
            raise ConfigError("link requires a link spec", f"node.{self.id}")
        if self.kind == "storage" and self.storage is None:
            raise ConfigError("storage requires a storage spec", f"node.{self.id}")


@dataclass
class AnomalyEvent:
    """Scheduled degradation or breakup of one component.

    ``start`` is the ground-truth change point; ``end`` of None means the
    anomaly persists to the end of the run.  ``severity`` scales the
    component's effective speed for degradations and is ignored by breakups.
    """

    component: str
    kind: str  # "degradation" | "breakup"
    start: float
    end: Optional[float] = None
    severity: float = 1.0

    def __post_init__(self):
        if self.kind not in ("degradation", "breakup"):
            raise ConfigError(
                f"anomaly kind must be degradation or breakup, got {self.kind!r}",
                f"anomaly.{self.component}",
            )
        if self.end is not None and not self.start < self.end:
            raise ConfigError("anomaly start must precede end", f"anomaly.{self.component}")
        if self.kind == "degradation" and not 0 < self.severity <= 1:
            raise ConfigError(
                "degradation severity must be in (0, 1]", f"anomaly.{self.component}"
            )
        if self.start < 0:
            raise ConfigError("anomaly start must be >= 0", f"anomaly.{self.component}")


class Topology:
    """Directed component graph: clients -> balancer -> controllers ->
    links -> storage devices."""

    def __init__(self, nodes: list[Node], edges: list[tuple[str, str]]):
        self.nodes: dict[str, Node] = {}
        for node in nodes:
            if node.id in self.nodes:
                raise ConfigError(f"duplicate node id {node.id!r}", f"node.{node.id}")
            self.nodes[node.id] = node
        self.out_edges: dict[str, list[str]] = {nid: [] for nid in self.nodes}
        for src, dst in edges:
            for end in (src, dst):
                if end not in self.nodes:
                    raise ConfigError(f"edge references unknown node {end!r}", "edges")
            pair = (self.nodes[src].kind, self.nodes[dst].kind)
            if pair not in COMPATIBLE_EDGES:
                raise ConfigError(
                    f"edge {src}->{dst} connects incompatible kinds {pair[0]}->{pair[1]}",
                    "edges",
                )
            self.out_edges[src].append(dst)
        self._check_connectivity()

    def _check_connectivity(self):
        clients = self.by_kind("client")
        if not clients:
            raise ConfigError("topology has no clients", "nodes")
        if not self.by_kind("storage"):
            raise ConfigError("topology has no storage devices", "nodes")
        for client in clients:
            if not any(True for _ in self.paths_from(client.id)):
                raise ConfigError(
                    f"client {client.id!r} cannot reach any storage device", "edges"
                )

    def by_kind(self, kind: str) -> list[Node]:
        return [n for n in self.nodes.values() if n.kind == kind]

    def node(self, nid: str) -> Node:
        try:
            return self.nodes[nid]
        except KeyError:
            raise UnknownComponent(f"no component {nid!r} in topology") from None

    def paths_from(self, client_id: str, online_only: bool = False):
        """Yield (balancer, controller, link, device) id tuples reachable
        from a client, in deterministic edge order."""

        def alive(nid):
            return not online_only or self.nodes[nid].online

        for b in self.out_edges.get(client_id, []):
            if self.nodes[b].kind != "balancer" or not alive(b):
                continue
            for c in self.out_edges[b]:
                if not alive(c):
                    continue
                for l in self.out_edges[c]:
                    if not alive(l):
                        continue
                    for d in self.out_edges[l]:
                        if not alive(d):
                            continue
                        yield (b, c, l, d)

    # -- anomaly state flips (event scheduling lives in the simulation) --

    def apply_anomaly_start(self, anomaly: AnomalyEvent) -> Node:
        node = self.node(anomaly.component)
        if anomaly.kind == "breakup":
            node.online = False
        else:
            node.degradation = anomaly.severity
        return node

    def apply_anomaly_end(self, anomaly: AnomalyEvent) -> Node:
        node = self.node(anomaly.component)
        if anomaly.kind == "breakup":
            node.online = True
        else:
            node.degradation = 1.0
        return node


# -- service-time formulas ------------------------------------------------
# The resource table gives parameters; these are the simplest formulas
# consistent with its units.  Degradation scales speed/bandwidth only,
# never latency.


def service_time_storage(
    file: FileSpec, spec: StorageSpec, op: str, degradation: float = 1.0
) -> float:
    """Total disk time for one file: total_size / (rated speed x degradation).

    Raises CapacityExceeded when a write would not fit.  The simulation
    spreads this over ceil(total/block) block events so concurrent
    requests interleave; the sum over blocks equals this value.
    """
    if op not in ("read", "write"):
        raise ValueError(f"op must be read or write, got {op!r}")
    if op == "write" and spec.used + file.total_size / MB_PER_GB > spec.size + 1e-12:
        raise CapacityExceeded(
            f"write of {file.total_size} MB exceeds capacity "
            f"({spec.used:.3f}/{spec.size:.3f} GB used)"
        )
    speed = spec.write_speed if op == "write" else spec.read_speed
    return file.total_size / (speed * degradation)


def service_time_link(mbytes: float, spec: LinkSpec, degradation: float = 1.0) -> float:
    """Wire time for a transfer: latency + bytes / (bandwidth x degradation)."""
    if mbytes < 0:
        raise ValueError("transfer size must be >= 0")
    return spec.latency + mbytes / (spec.bandwidth * degradation)


def cpu_cost(
    request_flops: float, spec: CpuSpec, active_jobs: int, degradation: float = 1.0
) -> float:
    """Controller time under processor sharing.

    Each job gets at most one core; with more jobs than cores every job
    sees a cores/jobs share.
    """
    if request_flops < 0:
        raise ValueError("request_flops must be >= 0")
    if active_jobs < 1:
        raise ValueError("active_jobs must be >= 1")
    share = min(1.0, spec.cores / active_jobs)
    return request_flops / (spec.core_speed * degradation * share)
