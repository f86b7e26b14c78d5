"""Deterministic multi-client simulation harness.

Simulated clients talk to an in-process RoomEngine through a virtual network
driven by a single event heap and a virtual millisecond clock, so every run
is a pure function of its seeds. The operation channel is reliable and FIFO
per connection; awareness messages ride a parallel lossy channel whose drops
can never affect graph state. Convergence is verified by comparing every
client replica's state hash against the server's after the event queue
drains.
"""

from __future__ import annotations

import hashlib
import heapq
import json
import random
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Optional

from .corpora import CORPUS_NAMES, load_corpus
from .metrics import MetricsReport, report_from_engine
from .model import Platform
from .protocol import Replica
from .rooms import RoomConfig, RoomEngine

DEFAULT_OP_MIX = {
    "AddNode": 5.0,
    "MoveNode": 3.0,
    "RenameNode": 1.0,
    "MergeNodes": 0.5,
    "DeleteNode": 1.0,
    "AddLink": 4.0,
    "RelabelLink": 1.0,
    "DeleteLink": 0.5,
    "SelectNode": 2.0,
    "DeselectNode": 0.5,
    "SetCurrentDocument": 2.0,
}

LABEL_WORDS = (
    "barge", "manifest", "warehouse", "inspector", "stencil", "cold-room",
    "voucher", "snare", "ledger", "terrapin", "clutch", "generator",
    "marina", "auction", "courier", "permit", "heron", "pintail",
)

QUIESCENCE_WINDOW_MS = 2000
AWARENESS_SLACK_MS = 60  # one flush interval past the last event


class NonConvergenceError(Exception):
    def __init__(self, message: str, first_divergent_seq: Optional[int]):
        super().__init__(message)
        self.first_divergent_seq = first_divergent_seq


class ScriptError(ValueError):
    pass


def _derive_seed(master: int, name: str) -> int:
    digest = hashlib.sha256(f"{master}:{name}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


class VirtualClock:
    def __init__(self):
        self._now = 0

    def now_ms(self) -> int:
        return self._now

    def advance_to(self, t: int) -> None:
        if t > self._now:
            self._now = t


@dataclass(frozen=True)
class NetworkModel:
    latency_min_ms: int = 0
    latency_max_ms: int = 0
    jitter_ms: int = 0
    drop_awareness_prob: float = 0.0

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "NetworkModel":
        latency = d.get("latencyMs", {})
        return cls(
            latency_min_ms=int(latency.get("min", 0)),
            latency_max_ms=int(latency.get("max", 0)),
            jitter_ms=int(d.get("jitterMs", 0)),
            drop_awareness_prob=float(d.get("dropAwarenessProb", 0.0)),
        )


@dataclass(frozen=True)
class ClientSpec:
    name: str
    platform: Platform
    scripted_ops: Optional[list[dict[str, Any]]] = None
    random_count: int = 0
    op_mix: dict[str, float] = field(default_factory=dict)
    think_min_ms: int = 50
    think_max_ms: int = 400
    cursor_every_n_ops: int = 2

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ClientSpec":
        behavior = d.get("behavior", {})
        platform = Platform(d.get("platform", "flat2d"))
        if "script" in behavior:
            return cls(name=d["name"], platform=platform, scripted_ops=list(behavior["script"]))
        rnd = behavior.get("random")
        if rnd is None:
            raise ScriptError(f"client {d.get('name')!r} needs behavior.script or behavior.random")
        mix = dict(rnd.get("opMix", DEFAULT_OP_MIX))
        if any(w < 0 for w in mix.values()) or sum(mix.values()) <= 0:
            raise ScriptError("opMix weights must be nonnegative and sum > 0")
        think = rnd.get("thinkMs", {})
        return cls(
            name=d["name"],
            platform=platform,
            random_count=int(rnd.get("count", 0)),
            op_mix=mix,
            think_min_ms=int(think.get("min", 50)),
            think_max_ms=int(think.get("max", 400)),
            cursor_every_n_ops=int(rnd.get("cursorEveryNOps", 2)),
        )


@dataclass(frozen=True)
class ScenarioScript:
    clients: tuple[ClientSpec, ...]
    network: NetworkModel
    corpus: str
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "ScenarioScript":
        if not d.get("clients"):
            raise ScriptError("script needs at least one client")
        return cls(
            clients=tuple(ClientSpec.from_dict(c) for c in d["clients"]),
            network=NetworkModel.from_dict(d.get("network", {})),
            corpus=d.get("corpus", "rivergate-6"),
            seed=int(d.get("seed", 0)),
        )

    @classmethod
    def from_file(cls, path: str | Path) -> "ScenarioScript":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


class _EventQueue:
    def __init__(self, clock: VirtualClock, realtime: bool = False):
        self._heap: list[tuple[int, int, Callable[[], None]]] = []
        self._counter = 0
        self._clock = clock
        self._realtime = realtime

    def schedule(self, at_ms: int, action: Callable[[], None]) -> None:
        self._counter += 1
        heapq.heappush(self._heap, (max(at_ms, self._clock.now_ms()), self._counter, action))

    def run_to_exhaustion(self) -> int:
        last = self._clock.now_ms()
        while self._heap:
            at, _, action = heapq.heappop(self._heap)
            if self._realtime and at > self._clock.now_ms():
                time.sleep((at - self._clock.now_ms()) / 1000.0)
            self._clock.advance_to(at)
            last = at
            action()
        return last


class _VirtualNetwork:
    """Latency + loss model between the server and each client.

    The op channel is FIFO and lossless; the awareness channel samples an
    independent RNG for both latency and drops so that dropping awareness
    can never perturb the op channel's randomness.
    """

    def __init__(self, model: NetworkModel, queue: _EventQueue, clock: VirtualClock, seed: int):
        self.model = model
        self.queue = queue
        self.clock = clock
        self._op_rng = random.Random(_derive_seed(seed, "net-op"))
        self._aw_rng = random.Random(_derive_seed(seed, "net-awareness"))
        self._last_arrival: dict[tuple[str, str], int] = {}

    def _latency(self, rng: random.Random) -> int:
        base = rng.uniform(self.model.latency_min_ms, self.model.latency_max_ms)
        jitter = rng.uniform(-self.model.jitter_ms, self.model.jitter_ms) if self.model.jitter_ms else 0.0
        return max(0, int(base + jitter))

    def send(self, connection: str, channel: str, deliver: Callable[[], None]) -> None:
        if channel == "awareness":
            dropped = self._aw_rng.random() < self.model.drop_awareness_prob
            latency = self._latency(self._aw_rng)
            if dropped:
                return
        else:
            latency = self._latency(self._op_rng)
        key = (connection, channel)
        arrival = max(self.clock.now_ms() + latency, self._last_arrival.get(key, 0))
        self._last_arrival[key] = arrival
        self.queue.schedule(arrival, deliver)


class SimClient:
    def __init__(
        self,
        spec: ClientSpec,
        engine: RoomEngine,
        network: _VirtualNetwork,
        queue: _EventQueue,
        clock: VirtualClock,
        seed: int,
        route_outgoing: Callable[[list], None],
        register: Callable[[str, "SimClient"], None],
    ):
        self.spec = spec
        self.engine = engine
        self.network = network
        self.queue = queue
        self.clock = clock
        self.rng = random.Random(_derive_seed(seed, f"client:{spec.name}"))
        self.replica = Replica()
        self.route_outgoing = route_outgoing
        self.register = register
        self.ops_submitted = 0
        self.done = False
        self.last_submit_ms = 0

    # -- inbound ------------------------------------------------------------

    def receive(self, message: dict[str, Any]) -> None:
        self.replica.handle(message)

    # -- behavior -----------------------------------------------------------

    def start(self, at_ms: int) -> None:
        self.queue.schedule(at_ms, self._join)

    def _join(self) -> None:
        def deliver():
            session, outgoing = self.engine.join(self.spec.name, self.spec.platform)
            self.register(session.id, self)
            self.route_outgoing(outgoing)
            self._schedule_next(initial=True)

        self.network.send(f"c->s:{self.spec.name}", "op", deliver)

    def _schedule_next(self, initial: bool = False) -> None:
        if self.spec.scripted_ops is not None:
            if self.ops_submitted >= len(self.spec.scripted_ops):
                self.done = True
                return
        elif self.ops_submitted >= self.spec.random_count:
            self.done = True
            return
        think = self.rng.randint(self.spec.think_min_ms, self.spec.think_max_ms)
        self.queue.schedule(self.clock.now_ms() + think, self._act)

    def _act(self) -> None:
        if self.replica.user_id is None:
            # JoinAck still in flight; try again shortly.
            self.queue.schedule(self.clock.now_ms() + 10, self._act)
            return
        if self.spec.scripted_ops is not None:
            entry = self.spec.scripted_ops[self.ops_submitted]
            kind, payload = entry["kind"], dict(entry.get("payload", {}))
        else:
            kind, payload = self._random_op()
        self.ops_submitted += 1
        self.last_submit_ms = self.clock.now_ms()
        user = self.replica.user_id

        def deliver():
            self.route_outgoing(self.engine.submit_op(user, kind, payload))

        self.network.send(f"c->s:{self.spec.name}", "op", deliver)

        if (
            self.spec.cursor_every_n_ops
            and self.ops_submitted % self.spec.cursor_every_n_ops == 0
        ):
            self._publish_cursor(user)
        self._schedule_next()

    def _publish_cursor(self, user: str) -> None:
        nodes = sorted(self.replica.graph.nodes)
        if not nodes:
            return
        node = self.rng.choice(nodes)
        hint = {
            "entries": [{"node": node, "w": 1.0}],
            "sourcePlatform": self.spec.platform.value,
            "ts": self.clock.now_ms(),
        }

        def deliver():
            self.route_outgoing(self.engine.publish_awareness(user, {"cursor": hint}))

        self.network.send(f"c->s:{self.spec.name}", "awareness", deliver)

    def _random_op(self) -> tuple[str, dict[str, Any]]:
        mix = self.spec.op_mix or DEFAULT_OP_MIX
        kinds = sorted(mix)
        weights = [mix[k] for k in kinds]
        kind = self.rng.choices(kinds, weights=weights, k=1)[0]
        g = self.replica.graph
        nodes = sorted(g.nodes)
        links = sorted(g.links)
        docs = [d["id"] for d in self.replica.documents]
        rng = self.rng

        def label() -> str:
            return f"{rng.choice(LABEL_WORDS)} {rng.randint(1, 99)}"

        def position() -> list[float]:
            return [rng.uniform(-150, 150), rng.uniform(-150, 150), rng.uniform(-150, 150)]

        if kind in ("MoveNode", "RenameNode", "DeleteNode", "SelectNode") and not nodes:
            kind = "AddNode"
        if kind == "MergeNodes" and len(nodes) < 2:
            kind = "AddNode"
        if kind == "AddLink" and len(nodes) < 2:
            kind = "AddNode"
        if kind in ("RelabelLink", "DeleteLink") and not links:
            kind = "AddNode"

        if kind == "AddNode":
            return kind, {"label": label(), "position": position()}
        if kind == "MoveNode":
            return kind, {"nodeId": rng.choice(nodes), "position": position()}
        if kind == "RenameNode":
            return kind, {"nodeId": rng.choice(nodes), "label": label()}
        if kind == "DeleteNode":
            return kind, {"nodeId": rng.choice(nodes)}
        if kind == "MergeNodes":
            return kind, {"srcId": rng.choice(nodes), "dstId": rng.choice(nodes)}
        if kind == "AddLink":
            return kind, {"a": rng.choice(nodes), "b": rng.choice(nodes), "label": label()}
        if kind == "RelabelLink":
            return kind, {"linkId": rng.choice(links), "label": label()}
        if kind == "DeleteLink":
            return kind, {"linkId": rng.choice(links)}
        if kind == "SelectNode":
            return kind, {"nodeId": rng.choice(nodes)}
        if kind == "DeselectNode":
            return kind, {}
        if kind == "SetCurrentDocument":
            choice = rng.choice(docs + [None]) if docs else None
            return kind, {"documentId": choice}
        raise ScriptError(f"unsupported op kind in mix: {kind}")


@dataclass
class ScenarioResult:
    report: MetricsReport
    state_hash: str
    engine: RoomEngine
    final_time_ms: int
    replicas: list[Replica] = field(default_factory=list)


def _resolve_corpus(corpus: str) -> RoomConfig:
    if corpus in CORPUS_NAMES:
        return RoomConfig.from_dict(load_corpus(corpus))
    path = Path(corpus)
    if path.exists():
        return RoomConfig.from_file(path)
    raise ScriptError(f"corpus {corpus!r} is neither a bundled corpus nor a file")


def run_scenario(
    script: ScenarioScript,
    seed: Optional[int] = None,
    log_dir: Optional[str | Path] = None,
    realtime: bool = False,
) -> ScenarioResult:
    """Run one scenario to quiescence and verify convergence.

    Deterministic given (script, seed): all latencies, drops, think times,
    and op payloads derive from the master seed. Raises NonConvergenceError
    if any client replica disagrees with the server after the queue drains.
    """
    master = script.seed if seed is None else seed
    clock = VirtualClock()
    queue = _EventQueue(clock, realtime=realtime)
    config = _resolve_corpus(script.corpus)
    engine = RoomEngine(config, clock=clock, log_dir=log_dir)
    network = _VirtualNetwork(script.network, queue, clock, master)

    clients: list[SimClient] = []
    clients_by_user: dict[str, SimClient] = {}

    scheduled: dict[str, Optional[int]] = {"awareness": None, "layout": None}

    def route_outgoing(outgoing: list) -> None:
        for recipient, message in outgoing:
            targets = list(clients_by_user) if recipient == "*" else [recipient]
            for user_id in targets:
                client = clients_by_user.get(user_id)
                if client is None:
                    continue
                channel = "awareness" if message["type"] == "Awareness" else "op"
                network.send(
                    f"s->c:{user_id}",
                    channel,
                    lambda c=client, m=message: c.receive(m),
                )
        _service_engine()

    def _fire(service: str, action) -> None:
        scheduled[service] = None
        route_outgoing(action())

    def _service_engine() -> None:
        """(Re)arm the room's awareness-flush and layout-debounce timers,
        one outstanding event per service."""
        due = engine.awareness_due_at()
        if due is not None and scheduled["awareness"] != due:
            scheduled["awareness"] = due
            queue.schedule(
                due, lambda: _fire("awareness", lambda: engine.maybe_flush_awareness(clock.now_ms()))
            )
        due = engine.layout_due_at()
        if due is not None and scheduled["layout"] != due:
            scheduled["layout"] = due
            queue.schedule(
                due, lambda: _fire("layout", lambda: engine.run_layout_refresh(clock.now_ms()))
            )

    def register(user_id: str, client: SimClient) -> None:
        clients_by_user[user_id] = client

    for i, spec in enumerate(script.clients):
        client = SimClient(
            spec, engine, network, queue, clock, master, route_outgoing, register
        )
        clients.append(client)
        client.start(at_ms=i * 10)

    final_time = queue.run_to_exhaustion()
    # Everything is delivered; any residual awareness or layout work is done.
    route_outgoing(engine.maybe_flush_awareness(clock.now_ms() + AWARENESS_SLACK_MS))
    route_outgoing(engine.run_layout_refresh())
    final_time = queue.run_to_exhaustion() or final_time

    server_hash = engine.state_hash()
    divergent = [c for c in clients if c.replica.state_hash() != server_hash]
    last_submit = max((c.last_submit_ms for c in clients), default=0)
    quiescence_ms = max(0, final_time - last_submit)
    converged = not divergent and quiescence_ms <= QUIESCENCE_WINDOW_MS

    if divergent:
        first_seq = _first_divergent_seq(engine, divergent)
        raise NonConvergenceError(
            f"{len(divergent)} replica(s) diverged from the server "
            f"(first divergent seq: {first_seq})",
            first_seq,
        )

    report = report_from_engine(
        engine,
        converged=converged,
        time_to_quiescence_ms=quiescence_ms,
        names={uid: c.spec.name for uid, c in clients_by_user.items()},
    )
    return ScenarioResult(
        report=report,
        state_hash=server_hash,
        engine=engine,
        final_time_ms=final_time,
        replicas=[c.replica for c in clients],
    )


def _first_divergent_seq(engine: RoomEngine, divergent: list[SimClient]) -> Optional[int]:
    server_ops = [op.to_dict() for op in engine.op_log]
    first: Optional[int] = None
    for client in divergent:
        got = client.replica.applied_ops
        for i, expected in enumerate(server_ops):
            if i >= len(got) or got[i] != expected:
                seq = expected["seq"]
                first = seq if first is None else min(first, seq)
                break
    return first
