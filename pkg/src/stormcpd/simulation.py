"""Storage simulation: routing, request lifecycle, anomaly injection.

Each request flows through sequential stages on its routed path:
controller CPU, then link transfer (latency + shared bandwidth), then
block-by-block device IO.  A component breakup aborts the work in flight
on it; the balancer retries each aborted request once on a surviving
path, after which the request fails.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .components import CpuServer, Disk, LinkServer
from .engine import Engine
from .errors import NoPathAvailable
from .resources import MB_PER_GB, AnomalyEvent, Topology
from .telemetry import GroundTruth, MetricSeries, StatsRecorder, sample
from .workload import LoadScenario, RequestSpec, generate


@dataclass
class Path:
    balancer: str
    controller: str
    link: str
    device: str


@dataclass
class CompletionRecord:
    spec: RequestSpec
    finish_at: float
    outcome: str  # "ok" | "failed"
    latency: float
    path: Optional[Path] = None
    retried: bool = False
    reason: Optional[str] = None


class Balancer:
    """Routes requests onto online (balancer, controller, link, device)
    paths, remembering where each file was written so reads follow it."""

    def __init__(self, topo: Topology, policy: str, rng: np.random.Generator):
        self.topo = topo
        self.policy = policy
        self.rng = rng
        self.placement: dict[str, str] = {}  # file name -> device id
        self.outstanding: dict[str, int] = {}
        self.disks: dict = {}  # device id -> Disk, for reservation-aware free space
        self._rr_ctrl = 0
        self._rr_dev = 0

    def route(self, req: RequestSpec) -> Path:
        cands = sorted(self.topo.paths_from(req.client, online_only=True))
        if req.op == "read":
            target = self.placement.get(req.file.name)
            if target is None:
                raise NoPathAvailable(f"file {req.file.name!r} is not placed on any device")
            cands = [p for p in cands if p[3] == target]
        if not cands:
            raise NoPathAvailable(f"no online path for {req.op} from {req.client}")

        controllers = sorted({c for _, c, _, _ in cands})
        if self.policy == "least_queue":
            ctrl = min(controllers, key=lambda c: (self.outstanding.get(c, 0), c))
        else:
            ctrl = controllers[self._rr_ctrl % len(controllers)]
            self._rr_ctrl += 1

        via = [p for p in cands if p[1] == ctrl]
        devices = sorted({d for _, _, _, d in via})
        if req.op == "read":
            dev = devices[0]
        elif self.policy == "least_queue":
            dev = min(devices, key=lambda d: (self.outstanding.get(d, 0), d))
        elif self.policy == "free_space_weighted":
            weights = np.array([self._free_gb(d) for d in devices])
            if weights.sum() <= 0:
                weights = np.ones(len(devices))
            dev = devices[int(self.rng.choice(len(devices), p=weights / weights.sum()))]
        else:
            dev = devices[self._rr_dev % len(devices)]
            self._rr_dev += 1

        balancer, _, link, _ = next(p for p in via if p[1] == ctrl and p[3] == dev)
        if req.op == "write":
            self.placement[req.file.name] = dev
        self.outstanding[ctrl] = self.outstanding.get(ctrl, 0) + 1
        self.outstanding[dev] = self.outstanding.get(dev, 0) + 1
        return Path(balancer, ctrl, link, dev)

    def release(self, path: Path) -> None:
        self.outstanding[path.controller] -= 1
        self.outstanding[path.device] -= 1

    def _free_gb(self, dev_id: str) -> float:
        node = self.topo.node(dev_id)
        disk = self.disks.get(dev_id)
        reserved = disk.reserved_gb if disk is not None else 0.0
        return max(0.0, node.storage.size - node.storage.used - reserved)


class _Request:
    """State machine for one request's passage through its path."""

    def __init__(self, sim: "Simulation", spec: RequestSpec):
        self.sim = sim
        self.spec = spec
        self.path: Optional[Path] = None
        self.retried = False
        self.done = False
        self.reserved = 0.0

    # -- lifecycle --

    def start(self) -> None:
        try:
            self.path = self.sim.balancer.route(self.spec)
        except NoPathAvailable as exc:
            self._complete("failed", reason=str(exc))
            return
        self._cpu_stage()

    def _cpu_stage(self) -> None:
        node = self.sim.topo.node(self.path.controller)
        if not node.online:
            self._abort()
            return
        server = self.sim.cpu_servers[node.id]
        server.add_job(self.sim.flops_for(self.spec.op), self._enter_link, self._abort)

    def _enter_link(self) -> None:
        node = self.sim.topo.node(self.path.link)
        if not node.online:
            self._abort()
            return
        # latency is a fixed pre-transfer delay, unaffected by degradation
        self.sim.engine.schedule_in(node.link.latency, "_timer", self._link_flow)

    def _link_flow(self) -> None:
        node = self.sim.topo.node(self.path.link)
        if not node.online:
            self._abort()
            return
        server = self.sim.link_servers[node.id]
        server.add_job(self.spec.file.total_size, self._enter_storage, self._abort)

    def _enter_storage(self) -> None:
        node = self.sim.topo.node(self.path.device)
        if not node.online:
            self._abort()
            return
        disk = self.sim.disks[node.id]
        if self.spec.op == "write":
            incoming = self.spec.file.total_size / MB_PER_GB
            spec = node.storage
            if spec.used + disk.reserved_gb + incoming > spec.size + 1e-12:
                self._complete("failed", reason="capacity exceeded")
                return
            disk.reserved_gb += incoming
            self.reserved = incoming
        disk.submit(self.spec.file.block_sizes(), self.spec.op, self._finish_ok, self._abort)

    def _finish_ok(self) -> None:
        if self.spec.op == "write":
            node = self.sim.topo.node(self.path.device)
            disk = self.sim.disks[node.id]
            disk.reserved_gb -= self.reserved
            node.storage.used += self.reserved
            self.reserved = 0.0
            self.sim.recorder.record_used(
                self.sim.engine.now(), node.id, node.storage.used
            )
        self._complete("ok")

    def _abort(self) -> None:
        """In-flight work was aborted by a breakup; retry once."""
        self._release_reservation()
        self.sim.balancer.release(self.path)
        if self.retried:
            self._complete("failed", reason="aborted after retry", released=True)
            return
        self.retried = True
        try:
            self.path = self.sim.balancer.route(self.spec)
        except NoPathAvailable as exc:
            self._complete("failed", reason=str(exc), released=True)
            return
        self._cpu_stage()

    def _release_reservation(self) -> None:
        if self.reserved:
            self.sim.disks[self.path.device].reserved_gb -= self.reserved
            self.reserved = 0.0

    def _complete(self, outcome: str, reason: Optional[str] = None, released: bool = False) -> None:
        assert not self.done, "request completed twice"
        self.done = True
        if self.path is not None and not released:
            self.sim.balancer.release(self.path)
        now = self.sim.engine.now()
        rec = CompletionRecord(
            spec=self.spec,
            finish_at=now,
            outcome=outcome,
            latency=now - self.spec.issue_at,
            path=self.path,
            retried=self.retried,
            reason=reason,
        )
        self.sim.recorder.record_completion(rec)
        self.sim.completions.append(rec)


class Simulation:
    """Owns the engine, servers, balancer, and telemetry recorder."""

    def __init__(
        self,
        topo: Topology,
        scenario: LoadScenario,
        anomalies: list[AnomalyEvent],
        seed: int = 0,
    ):
        self.topo = topo
        self.scenario = scenario
        self.anomalies = anomalies
        self.seed = seed
        self.engine = Engine()
        self.rng = np.random.default_rng(seed)
        self.recorder = StatsRecorder(horizon=scenario.duration)
        self.completions: list[CompletionRecord] = []

        self.cpu_servers: dict[str, CpuServer] = {}
        self.link_servers: dict[str, LinkServer] = {}
        self.disks: dict[str, Disk] = {}
        for node in topo.nodes.values():
            if node.kind == "controller":
                self.cpu_servers[node.id] = CpuServer(self.engine, node, self.recorder)
            elif node.kind == "link":
                self.link_servers[node.id] = LinkServer(self.engine, node)
            elif node.kind == "storage":
                self.disks[node.id] = Disk(self.engine, node, self.recorder)
                self.recorder.set_initial_used(node.id, node.storage.used)

        self.balancer = Balancer(topo, scenario.policy, self.rng)
        self.balancer.disks = self.disks

        self.engine.register("_timer", lambda eng, ev: ev.payload())
        self.engine.register("_dispatch", self._on_dispatch)
        self.engine.register("_anomaly", self._on_anomaly)

        for anomaly in anomalies:
            self.topo.node(anomaly.component)  # raises UnknownComponent early
            self.engine.schedule(anomaly.start, "_anomaly", ("start", anomaly))
            if anomaly.end is not None:
                self.engine.schedule(anomaly.end, "_anomaly", ("end", anomaly))

    def flops_for(self, op: str) -> float:
        per_kind = self.scenario.flops_per_request
        if isinstance(per_kind, dict):
            return float(per_kind[op])
        return float(per_kind)

    def _on_dispatch(self, engine: Engine, ev) -> None:
        _Request(self, ev.payload).start()

    def _server_for(self, component: str):
        return (
            self.cpu_servers.get(component)
            or self.link_servers.get(component)
            or self.disks.get(component)
        )

    def _on_anomaly(self, engine: Engine, ev) -> None:
        phase, anomaly = ev.payload
        if phase == "start":
            self.topo.apply_anomaly_start(anomaly)
            server = self._server_for(anomaly.component)
            if server is not None:
                if anomaly.kind == "breakup":
                    server.abort_all()
                else:
                    server.rate_changed()
        else:
            self.topo.apply_anomaly_end(anomaly)
            server = self._server_for(anomaly.component)
            if server is not None and anomaly.kind == "degradation":
                server.rate_changed()

    def run(self) -> "SimResult":
        clients = sorted(n.id for n in self.topo.by_kind("client"))
        requests = generate(self.scenario, clients, self.rng)
        for spec in requests:
            self.engine.schedule(spec.issue_at, "_dispatch", spec)

        self.engine.run_until(self.scenario.duration)
        self.engine.run()  # drain in-flight work; no new arrivals appear

        ground_truth = GroundTruth(
            entries=[(a.start, a.component, a.kind) for a in self.anomalies]
        )
        return SimResult(
            simulation=self,
            requests=requests,
            completions=self.completions,
            ground_truth=ground_truth,
        )


@dataclass
class SimResult:
    simulation: Simulation
    requests: list[RequestSpec]
    completions: list[CompletionRecord]
    ground_truth: GroundTruth

    def metrics(self, period: float = 1.0) -> MetricSeries:
        sim = self.simulation
        controllers = sorted(n.id for n in sim.topo.by_kind("controller"))
        devices = sorted(n.id for n in sim.topo.by_kind("storage"))
        return sample(
            sim.recorder,
            controllers,
            devices,
            period,
            start=0.0,
            end=sim.scenario.duration,
        )


def run_simulation(
    topo: Topology,
    scenario: LoadScenario,
    anomalies: Optional[list[AnomalyEvent]] = None,
    seed: int = 0,
) -> SimResult:
    """Build and run one simulation; the topology is consumed (mutated)."""
    return Simulation(topo, scenario, anomalies or [], seed).run()
