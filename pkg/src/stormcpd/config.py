"""Scenario configuration files.

Scenarios are TOML documents with four sections: the component topology
(node array + edge list), the workload, the anomaly schedule, and the
telemetry period, plus a top-level seed.  Parsing is strict: unknown keys
are rejected so typos fail loudly, and every value is validated against
the type invariants before a run starts.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .errors import ConfigError
from .resources import AnomalyEvent, CpuSpec, LinkSpec, Node, StorageSpec, Topology
from .workload import LoadScenario

_TOP_KEYS = {"seed", "telemetry", "workload", "node", "edges", "anomaly"}
_TELEMETRY_KEYS = {"period"}
_WORKLOAD_KEYS = {
    "duration",
    "arrival",
    "rate",
    "schedule",
    "file_size",
    "block_size",
    "read_fraction",
    "flops_per_request",
    "policy",
}
_NODE_KEYS = {
    "client": {"id", "kind"},
    "balancer": {"id", "kind"},
    "controller": {"id", "kind", "cores", "core_speed"},
    "link": {"id", "kind", "bandwidth", "latency"},
    "storage": {"id", "kind", "size", "write_speed", "read_speed", "used"},
}
_ANOMALY_KEYS = {"component", "kind", "start", "end", "severity"}


def _reject_unknown(table: dict, allowed: set, where: str) -> None:
    unknown = set(table) - allowed
    if unknown:
        raise ConfigError(f"unknown key(s) {sorted(unknown)}", where)


def _num(table: dict, key: str, where: str, default=None):
    if key not in table:
        if default is not None:
            return default
        raise ConfigError(f"missing required key {key!r}", where)
    value = table[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{key} must be a number", where)
    return float(value)


@dataclass
class ScenarioConfig:
    seed: int
    period: float
    raw: dict
    text: str
    sha256: str
    path: Optional[str] = None

    def build_topology(self) -> Topology:
        """Construct a fresh topology; safe to call once per run."""
        nodes = []
        for entry in self.raw.get("node", []):
            nid = entry.get("id")
            kind = entry.get("kind")
            where = f"node {nid!r}" if nid else "node"
            if not nid or not isinstance(nid, str):
                raise ConfigError("node needs a string id", where)
            if kind not in _NODE_KEYS:
                raise ConfigError(
                    f"kind must be one of {sorted(_NODE_KEYS)}, got {kind!r}", where
                )
            _reject_unknown(entry, _NODE_KEYS[kind], where)
            try:
                if kind == "controller":
                    cores = _num(entry, "cores", where)
                    if cores != int(cores):
                        raise ConfigError("cores must be an integer", where)
                    spec = CpuSpec(cores=int(cores), core_speed=_num(entry, "core_speed", where))
                    nodes.append(Node(id=nid, kind=kind, cpu=spec))
                elif kind == "link":
                    spec = LinkSpec(
                        bandwidth=_num(entry, "bandwidth", where),
                        latency=_num(entry, "latency", where, default=0.0),
                    )
                    nodes.append(Node(id=nid, kind=kind, link=spec))
                elif kind == "storage":
                    spec = StorageSpec(
                        size=_num(entry, "size", where),
                        write_speed=_num(entry, "write_speed", where),
                        read_speed=_num(entry, "read_speed", where),
                        used=_num(entry, "used", where, default=0.0),
                    )
                    nodes.append(Node(id=nid, kind=kind, storage=spec))
                else:
                    nodes.append(Node(id=nid, kind=kind))
            except ConfigError as exc:
                if exc.location and exc.location.startswith("node"):
                    raise
                raise ConfigError(str(exc), where) from None

        edges = []
        for pair in self.raw.get("edges", []):
            if not isinstance(pair, list) or len(pair) != 2:
                raise ConfigError("each edge must be a [src, dst] pair", "edges")
            edges.append((pair[0], pair[1]))
        return Topology(nodes, edges)

    def build_scenario(self) -> LoadScenario:
        w = self.raw.get("workload")
        if not isinstance(w, dict):
            raise ConfigError("missing [workload] section", "workload")
        _reject_unknown(w, _WORKLOAD_KEYS, "workload")
        flops = w.get("flops_per_request", 1e8)
        if isinstance(flops, dict):
            flops = {k: float(v) for k, v in flops.items()}
        return LoadScenario(
            duration=_num(w, "duration", "workload"),
            arrival=w.get("arrival", "poisson"),
            rate=_num(w, "rate", "workload") if "rate" in w else None,
            schedule=w.get("schedule"),
            file_size=w.get("file_size", {"dist": "constant", "mb": 10.0}),
            block_size=_num(w, "block_size", "workload", default=4.0),
            read_fraction=_num(w, "read_fraction", "workload", default=0.0),
            flops_per_request=flops,
            policy=w.get("policy", "round_robin"),
        )

    def build_anomalies(self) -> list[AnomalyEvent]:
        anomalies = []
        for entry in self.raw.get("anomaly", []):
            where = f"anomaly for {entry.get('component')!r}"
            _reject_unknown(entry, _ANOMALY_KEYS, where)
            anomalies.append(
                AnomalyEvent(
                    component=entry.get("component", ""),
                    kind=entry.get("kind", ""),
                    start=_num(entry, "start", where),
                    end=_num(entry, "end", where) if "end" in entry else None,
                    severity=_num(entry, "severity", where, default=1.0),
                )
            )
        return anomalies

    def validate(self) -> None:
        """Build everything once so invalid configs fail before any run."""
        topo = self.build_topology()
        self.build_scenario()
        for anomaly in self.build_anomalies():
            if anomaly.component not in topo.nodes:
                raise ConfigError(
                    f"anomaly targets unknown component {anomaly.component!r}",
                    "anomaly",
                )


def parse_config(text: str, path: Optional[str] = None) -> ScenarioConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"TOML parse error: {exc}", path or "config") from None

    _reject_unknown(raw, _TOP_KEYS, "config")
    seed = raw.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError("seed must be an integer", "seed")
    telemetry = raw.get("telemetry", {})
    _reject_unknown(telemetry, _TELEMETRY_KEYS, "telemetry")
    period = _num(telemetry, "period", "telemetry", default=1.0)
    if period <= 0:
        raise ConfigError("period must be > 0", "telemetry.period")

    cfg = ScenarioConfig(
        seed=seed,
        period=period,
        raw=raw,
        text=text,
        sha256=hashlib.sha256(text.encode()).hexdigest(),
        path=path,
    )
    cfg.validate()
    return cfg


def load_config(path: str) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config(fh.read(), path=path)
