"""Distributed simulation: NI-APM over a message bus, the outer cutting-plane loop, privacy audit."""

from __future__ import annotations

import json
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .cuts import HoffmanCut, LambdaCut, cut_time_set
from .master import FeasibleRegion, MasterResult
from .model import TransportInstance, aggregate_box, stream
from .projections import AgentBlock
from .smc import decode, split, sum_mod

OPERATOR = "operator"
AGENT_KINDS = {"share", "sigma"}
OPERATOR_KINDS = {"aggregate", "control"}
MAX_HALVINGS = 40
MAX_SWEEPS = 200_000
_AGENT_STREAM = 7


class ProtocolError(RuntimeError):
    pass


def agent_name(n: int) -> str:
    return f"agent{n}"


def _float_words(v) -> np.ndarray:
    return np.ascontiguousarray(np.atleast_1d(np.asarray(v, dtype=np.float64))).view(np.uint64)


def _control(tag: int, words) -> np.ndarray:
    """Tag word followed by payload words, kept in uint64 throughout."""
    return np.concatenate([np.array([tag], dtype=np.uint64), np.asarray(words, dtype=np.uint64)])


def _words_float(w) -> np.ndarray:
    return np.ascontiguousarray(np.asarray(w, dtype=np.uint64)).view(np.float64)


@dataclass
class Message:
    round: int
    kind: str
    sender: str
    receiver: str
    payload: np.ndarray

    def to_dict(self) -> dict:
        return {"round": self.round, "kind": self.kind, "from": self.sender, "to": self.receiver,
                "payload": [int(w) for w in self.payload]}


class BusLog(list):
    """Bus hook that keeps every message."""

    def __call__(self, msg: Message) -> None:
        self.append(msg)

    def write_ndjson(self, path) -> None:
        with open(path, "w") as f:
            for m in self:
                f.write(json.dumps(m.to_dict()) + "\n")


class Bus:
    """Round-synchronous in-process message bus with pluggable hooks."""

    def __init__(self, hooks=()):
        self.round = 0
        self.hooks = list(hooks)
        self._inbox: dict[str, list[Message]] = defaultdict(list)

    def new_round(self) -> None:
        self.round += 1

    def send(self, kind: str, sender: str, receiver: str, payload) -> None:
        msg = Message(self.round, kind, sender, receiver, np.asarray(payload, dtype=np.uint64))
        for hook in self.hooks:
            hook(msg)
        self._inbox[receiver].append(msg)

    def receive(self, who: str, kind: str) -> list[Message]:
        box = self._inbox[who]
        got = [m for m in box if m.kind == kind]
        self._inbox[who] = [m for m in box if m.kind != kind]
        return got

    def drain(self, who: str) -> list[Message]:
        return self._inbox.pop(who, [])


class Agent:
    """Holds a private block and profile; talks only through shares and sigmas."""

    def __init__(self, ident: int, block, rng: np.random.Generator, leak: bool = False):
        self.id = ident
        self.name = agent_name(ident)
        self.block = block
        self.rng = rng
        self.leak = leak
        self.p = None
        self.eps = None
        self.x = self.y = self.x_prev = None

    # control messages from the operator
    def read_control(self, bus: Bus) -> None:
        for m in bus.receive(self.name, "control"):
            tag, words = int(m.payload[0]), m.payload[1:]
            if tag == 0:
                self.p = _words_float(words)
            elif tag == 1:
                self.eps = float(_words_float(words)[0])
            elif tag == 2:
                self.time_set = [int(w) for w in words]

    def reset(self) -> None:
        self.y = self.block.initial()
        self.x = None

    def project(self, bus: Bus) -> None:
        self.x_prev = self.x
        self.x = self.block.project(self.y)
        if self.leak:
            bus.send("profile", self.name, OPERATOR, _float_words(self.x))

    def settled(self, norm: str, n_agents: int) -> float:
        """1 when this agent's block moved less than its share of the tolerance."""
        if self.x_prev is None:
            return 0.0
        d = self.x - self.x_prev
        if norm == "op":
            return float(np.abs(d).sum() < self.eps)
        return float(np.sqrt(d @ d) < self.eps / np.sqrt(n_agents))

    def send_shares(self, bus: Bus, values, n_agents: int) -> None:
        for b in split(values, n_agents, self.rng, sender=self.id):
            bus.send("share", self.name, agent_name(b.receiver), b.shares)

    def send_sigma(self, bus: Bus) -> None:
        msgs = bus.receive(self.name, "share")
        bus.send("sigma", self.name, OPERATOR, sum_mod([m.payload for m in msgs]))

    def update(self, bus: Bus, n_agents: int) -> np.ndarray:
        (msg,) = bus.receive(self.name, "aggregate")
        S = decode(msg.payload[:len(self.x)])
        nu = (self.p - S) / n_agents
        self.y = self.x + nu
        return nu


@dataclass
class OuterRecord:
    aggregates: list = field(default_factory=list)
    stop_counts: list = field(default_factory=list)
    time_sets: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    support: list = field(default_factory=list)

    def to_dict(self, with_support: bool) -> dict:
        d = {"aggregates": [list(map(int, a)) for a in self.aggregates],
             "stop_counts": [int(c) for c in self.stop_counts],
             "time_sets": [list(ts) for ts in self.time_sets],
             "rhs": [int(r) for r in self.rhs]}
        if with_support:
            d["support"] = [int(r) for r in self.support]
        return d


@dataclass
class OperatorTranscript:
    """Everything the operator observes: fixed-point aggregates, time sets, cut right-hand sides."""

    rounds: list[OuterRecord] = field(default_factory=list)
    status: str = "running"
    polyhedral: bool = False

    def to_dict(self) -> dict:
        return {"rounds": [r.to_dict(self.polyhedral) for r in self.rounds], "status": self.status}


class Operator:
    def __init__(self, n_agents: int):
        self.n_agents = n_agents

    def collect(self, bus: Bus) -> np.ndarray:
        msgs = bus.receive(OPERATOR, "sigma")
        bus.drain(OPERATOR)  # anything else is not part of the protocol and is ignored
        owners = sorted(m.sender for m in msgs)
        if owners != sorted(agent_name(n) for n in range(self.n_agents)):
            raise ProtocolError("sigma set incomplete or duplicated")
        return sum_mod([m.payload for m in msgs])

    def broadcast(self, bus: Bus, agents, kind: str, payload) -> None:
        for a in agents:
            bus.send(kind, OPERATOR, a.name, payload)


def secure_sum(agents: list[Agent], values: Callable[[Agent], np.ndarray], bus: Bus, op: Operator) -> np.ndarray:
    bus.new_round()
    N = len(agents)
    for a in agents:
        a.send_shares(bus, values(a), N)
    for a in agents:
        a.send_sigma(bus)
    return op.collect(bus)


@dataclass
class NiApmOutcome:
    disaggregated: bool
    cut: HoffmanCut | LambdaCut | None
    sweeps: int
    gap: float
    eps: float
    multiplier: np.ndarray
    steps: list = field(default_factory=list)  # simulation-side Euclidean step lengths, never sent


def ni_apm(agents: list[Agent], op: Operator, bus: Bus, p, eps_cvg0: float = 0.1, eps_dis: float = 0.01,
           threshold_b: float = 10.0, norm: str = "op", mode: str = "hoffman", record: OuterRecord | None = None,
           include_ties: bool = True, max_halvings: int = MAX_HALVINGS, max_sweeps: int = MAX_SWEEPS) -> NiApmOutcome:
    """One call of the non-intrusive APM: returns a disaggregation or a violated cut."""
    if norm not in ("op", "l2"):
        raise ValueError(f"unknown norm {norm!r}")
    p = np.asarray(p, dtype=float)
    N, T = len(agents), p.size
    record = OuterRecord() if record is None else record
    eps = eps_cvg0
    bus.new_round()
    op.broadcast(bus, agents, "control", _control(0, _float_words(p)))
    op.broadcast(bus, agents, "control", _control(1, _float_words(eps)))
    for a in agents:
        a.read_control(bus)
        a.reset()
    halvings = 0
    steps = []
    for sweep in range(1, max_sweeps + 1):
        for a in agents:
            a.project(bus)
        if sweep > 1:
            steps.append(float(np.sqrt(sum(np.sum((a.x - a.x_prev) ** 2) for a in agents))))
        raw = secure_sum(agents, lambda a: np.append(a.x, a.settled(norm, N)), bus, op)
        S_raw, count = raw[:T], int(round(decode(raw[T:])[0]))
        record.aggregates.append(S_raw)
        record.stop_counts.append(count)
        op.broadcast(bus, agents, "aggregate", raw)
        nu = (p - decode(S_raw)) / N
        for a in agents:
            a.update(bus, N)
        if count < N:
            continue
        gap = float(np.abs(nu).sum()) if norm == "op" else float(np.sqrt(N) * np.linalg.norm(nu))
        if gap <= eps_dis:
            return NiApmOutcome(True, None, sweep, gap, eps, nu, steps)
        if mode == "hoffman":
            ts = cut_time_set(nu, threshold_b * eps, include_ties)
            if 0 < len(ts) < T:
                bus.new_round()
                op.broadcast(bus, agents, "control", _control(2, ts))
                for a in agents:
                    a.read_control(bus)
                rhs_raw = secure_sum(agents, lambda a: [a.x[a.time_set].sum()], bus, op)
                record.time_sets.append(ts)
                record.rhs.append(rhs_raw[0])
                rhs = float(decode(rhs_raw)[0])
                if rhs - p[list(ts)].sum() < 0:
                    return NiApmOutcome(False, HoffmanCut(ts, rhs), sweep, gap, eps, nu, steps)
        else:
            m_raw = secure_sum(agents, lambda a: [a.block.support(a.y - a.x)], bus, op)
            record.support.append(m_raw[0])
            M = float(decode(m_raw)[0])
            if -nu @ p + M < 0:
                return NiApmOutcome(False, LambdaCut(-nu, M).normalized(), sweep, gap, eps, nu, steps)
        halvings += 1
        if halvings > max_halvings:
            raise ProtocolError(f"no violated cut after {max_halvings} halvings (eps={eps:.3g}, gap={gap:.3g})")
        eps /= 2
        bus.new_round()
        op.broadcast(bus, agents, "control", _control(1, _float_words(eps)))
        for a in agents:
            a.read_control(bus)
    raise ProtocolError("sweep budget exhausted")


@dataclass
class RunReport:
    status: str
    outer_iterations: int = 0
    total_sweeps: int = 0
    cuts: list = field(default_factory=list)
    p: np.ndarray | None = None
    gap: float | None = None
    objective: float | None = None
    objectives: list = field(default_factory=list)
    iterates: list = field(default_factory=list)
    generated_cuts: list = field(default_factory=list)
    eps_history: list = field(default_factory=list)
    step_norms: list = field(default_factory=list)  # per outer iteration, simulation-side diagnostics
    profiles: np.ndarray | None = None  # simulation-side view of the agents' final x_n
    transcript: OperatorTranscript | None = None
    schedule: tuple | None = None

    @property
    def residual(self) -> float:
        """||sum_n x_n - p||_1 at the final disaggregation."""
        return float(np.abs(self.profiles.sum(axis=0) - self.p).sum())

    def to_dict(self) -> dict:
        return {
            "status": self.status,
            "outer_iterations": self.outer_iterations,
            "total_sweeps": self.total_sweeps,
            "cuts": [c.to_dict() for c in self.cuts],
            "generated_cuts": [c.to_dict() for c in self.generated_cuts],
            "p": None if self.p is None else self.p.tolist(),
            "iterates": [q.tolist() for q in self.iterates],
            "gap": self.gap,
            "objective": self.objective,
            "objectives": self.objectives,
            "eps_history": self.eps_history,
            "schedule": None if self.schedule is None else list(self.schedule),
        }


def make_agents(blocks, seed: int, leak_ids=()) -> list[Agent]:
    return [Agent(n, b, stream(seed, _AGENT_STREAM, n), leak=n in leak_ids) for n, b in enumerate(blocks)]


def run_outer(blocks, master_solver, region: FeasibleRegion, mode: str = "hoffman", eps_dis: float = 0.01,
              eps_cvg0: float = 0.1, threshold_b: float = 10.0, norm: str = "op", seed: int = 0, hooks=(),
              max_outer: int = 1000, include_ties: bool = True, leak_ids=()) -> RunReport:
    """Master solve, NI-APM, add cut; repeat until a disaggregation is found or the region empties."""
    T = region.horizon
    agents = make_agents(blocks, seed, leak_ids)
    bus, op = Bus(hooks), Operator(len(agents))
    transcript = OperatorTranscript(polyhedral=mode != "hoffman")
    rep = RunReport("running", transcript=transcript)
    for s in range(1, max_outer + 1):
        res: MasterResult = master_solver(region)
        rep.outer_iterations = s
        if res.status != "optimal":
            rep.status = transcript.status = "no-solution"
            return rep
        if rep.objectives and res.objective < rep.objectives[-1] - 1e-7 * max(1.0, abs(res.objective)):
            raise ProtocolError("master objective decreased after adding a cut")
        rep.objectives.append(res.objective)
        rep.iterates.append(res.p)
        record = OuterRecord()
        transcript.rounds.append(record)
        out = ni_apm(agents, op, bus, res.p, eps_cvg0, eps_dis, threshold_b, norm, mode, record, include_ties)
        rep.total_sweeps += out.sweeps
        rep.eps_history.append(out.eps)
        rep.step_norms.append(out.steps)
        if out.disaggregated:
            rep.status = transcript.status = "optimal"
            rep.p, rep.gap, rep.objective, rep.schedule = res.p, out.gap, res.objective, res.schedule
            rep.profiles = np.array([a.x for a in agents])
            return rep
        cut = out.cut
        if not cut.violation(res.p) > 0:
            raise ProtocolError("accepted cut is not violated by the generating allocation")
        rep.generated_cuts.append(cut)
        if mode == "hoffman":
            region.add_cut(cut)
            if len(region.cuts) > 2**T - 2:
                raise ProtocolError("more distinct Hoffman cuts than proper time subsets")
            rep.cuts = list(region.cuts)
        else:
            region.add_lambda_cut(cut)
            rep.cuts = list(region.lambda_cuts)
    rep.status = transcript.status = "iteration-limit"
    return rep


def instance_blocks(instance: TransportInstance) -> list[AgentBlock]:
    return [AgentBlock(lo, up, E) for lo, up, E in zip(instance.lower, instance.upper, instance.demand)]


def optimal_disaggregation(instance: TransportInstance, master_solver, eps_dis: float = 0.01, eps_cvg0: float = 0.1,
                           threshold_b: float = 10.0, **kw) -> RunReport:
    region = FeasibleRegion(aggregate_box(instance))
    return run_outer(instance_blocks(instance), master_solver, region, "hoffman", eps_dis, eps_cvg0, threshold_b, **kw)


@dataclass
class AuditReport:
    offending: list = field(default_factory=list)

    @property
    def clean(self) -> bool:
        return not self.offending


def privacy_audit(transcript: OperatorTranscript, bus_log, allow_support: bool | None = None) -> AuditReport:
    """Whitelist check of the bus traffic and of the transcript fields."""
    if allow_support is None:
        allow_support = transcript.polyhedral
    rep = AuditReport()
    for m in bus_log:
        if m.sender.startswith("agent"):
            ok = (m.receiver == OPERATOR and m.kind == "sigma") or (m.receiver.startswith("agent") and m.kind == "share")
        elif m.sender == OPERATOR:
            ok = m.kind in OPERATOR_KINDS and m.receiver.startswith("agent")
        else:
            ok = False
        if not ok:
            rep.offending.append(m.to_dict())
    d = transcript.to_dict()
    if set(d) != {"rounds", "status"}:
        rep.offending.append({"transcript_fields": sorted(d)})
    allowed = {"aggregates", "stop_counts", "time_sets", "rhs"} | ({"support"} if allow_support else set())
    for r in d["rounds"]:
        if not set(r) <= allowed:
            rep.offending.append({"round_fields": sorted(set(r) - allowed)})
    return rep


def permutation_invariance_check(instance: TransportInstance, perm, master_factory, seed: int = 0, **kw) -> bool:
    """Run on the instance and on its agent permutation; transcripts must be bit-identical."""
    a = optimal_disaggregation(instance, master_factory(), seed=seed, **kw)
    b = optimal_disaggregation(instance.permuted(perm), master_factory(), seed=seed, **kw)
    same_cuts = [c.to_dict() for c in a.generated_cuts] == [c.to_dict() for c in b.generated_cuts]
    return a.transcript.to_dict() == b.transcript.to_dict() and same_cuts
