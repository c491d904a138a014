"""Horizontal federated SVM: round-based parameter averaging via explicit messages.

Each round every client trains from the latest global model and uploads its
parameters; the server averages them (damped with the previous global model
from round 2 onward) and broadcasts the result. Only model parameters ever
cross the wire.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np

from .dataio import Dataset, HorizontalPartition
from .errors import ContractError, ProtocolError
from .svm import LinearModel, SvmConfig, svm_train

SERVER = "server"


class MsgKind(str, Enum):
    START = "Start"
    LOCAL_PARAMS = "LocalParams"
    GLOBAL_PARAMS = "GlobalParams"
    STOP = "Stop"


@dataclass(frozen=True)
class ProtocolMessage:
    round: int
    sender: str  # "server" or "client:<i>"
    kind: MsgKind
    payload: LinearModel | None = None
    recipient: str | None = None


@dataclass(frozen=True)
class FedSvmClientState:
    client_id: int
    local_data: Dataset
    current_model: LinearModel
    round: int = 0
    stopped: bool = False


@dataclass(frozen=True)
class FedSvmServerState:
    k: int
    global_model: LinearModel | None
    round: int
    max_rounds: int
    param_delta_tol: float | None = None


def client_init_model(dim: int, cfg: SvmConfig, client_id: int) -> LinearModel:
    """Seeded small random init; uniform in [-0.01, 0.01] for weights and intercept."""
    rng = np.random.default_rng([cfg.seed, client_id])
    vals = rng.uniform(-0.01, 0.01, dim + 1)
    return LinearModel(vals[:dim], vals[dim])


def client_step(state: FedSvmClientState, incoming: ProtocolMessage,
                cfg: SvmConfig) -> tuple[FedSvmClientState, ProtocolMessage | None]:
    """Process one server message; local data never appears in outgoing payloads."""
    me = f"client:{state.client_id}"
    if incoming.kind == MsgKind.START:
        if state.round != 0 or incoming.round != 0:
            raise ProtocolError(f"{me}: Start received at round {state.round}")
        trained = svm_train(state.current_model, state.local_data, cfg)
    elif incoming.kind == MsgKind.GLOBAL_PARAMS:
        if incoming.round != state.round:
            raise ProtocolError(f"{me}: GlobalParams for round {incoming.round}, expected {state.round}")
        trained = svm_train(incoming.payload, state.local_data, cfg)
    elif incoming.kind == MsgKind.STOP:
        new_state = replace(state, current_model=incoming.payload, stopped=True)
        return new_state, None
    else:
        raise ProtocolError(f"{me}: unexpected message kind {incoming.kind}")
    new_state = replace(state, current_model=trained, round=state.round + 1)
    out = ProtocolMessage(round=state.round + 1, sender=me,
                          kind=MsgKind.LOCAL_PARAMS, payload=trained, recipient=SERVER)
    return new_state, out


def server_aggregate(received: list[LinearModel],
                     previous_global: LinearModel | None = None) -> LinearModel:
    """Round-1 plain mean; later rounds half-damped mean with the previous global."""
    if not received:
        raise ContractError("no models to aggregate")
    dim = received[0].dim
    if any(m.dim != dim for m in received):
        raise ContractError("all client models must share one dimension")
    k = len(received)
    w = np.zeros(dim)
    b = 0.0
    for m in received:  # ascending client order fixed by the caller
        w = w + m.weights
        b = b + m.intercept
    w /= k
    b /= k
    if previous_global is not None:
        if previous_global.dim != dim:
            raise ContractError("previous global model dimension mismatch")
        w = 0.5 * (previous_global.weights + w)
        b = 0.5 * (previous_global.intercept + b)
    return LinearModel(w, b)


def run_fedsvm(partition: HorizontalPartition, cfg: SvmConfig, n_rounds: int,
               param_delta_tol: float | None = None,
               ) -> tuple[LinearModel, list[ProtocolMessage]]:
    """Drive the full protocol for n_rounds (or until the parameter delta is small).

    Messages are delivered in (round, client_id) order so the transcript is
    canonical regardless of how client work would be scheduled.
    """
    if n_rounds < 1:
        raise ContractError("n_rounds must be >= 1")
    k = partition.k
    dim = partition.clients[0].n_features
    transcript: list[ProtocolMessage] = []
    clients = [FedSvmClientState(i, partition.clients[i], client_init_model(dim, cfg, i))
               for i in range(k)]
    global_model: LinearModel | None = None
    for t in range(1, n_rounds + 1):
        uploads: list[LinearModel] = []
        for i in range(k):
            if t == 1:
                msg = ProtocolMessage(round=0, sender=SERVER, kind=MsgKind.START,
                                      recipient=f"client:{i}")
            else:
                msg = ProtocolMessage(round=t - 1, sender=SERVER, kind=MsgKind.GLOBAL_PARAMS,
                                      payload=global_model, recipient=f"client:{i}")
            transcript.append(msg)
            clients[i], out = client_step(clients[i], msg, cfg)
            transcript.append(out)
            uploads.append(out.payload)
        previous = global_model
        global_model = server_aggregate(uploads, previous_global=previous)
        if param_delta_tol is not None and previous is not None:
            delta = max(float(np.max(np.abs(global_model.weights - previous.weights))),
                        abs(global_model.intercept - previous.intercept))
            if delta < param_delta_tol:
                break
    final_round = transcript[-1].round
    for i in range(k):
        msg = ProtocolMessage(round=final_round, sender=SERVER, kind=MsgKind.STOP,
                              payload=global_model, recipient=f"client:{i}")
        transcript.append(msg)
        clients[i], _ = client_step(clients[i], msg, cfg)
    return global_model, transcript


def _payload_record(payload) -> dict | list | None:
    if payload is None:
        return None
    if isinstance(payload, LinearModel):
        return {"weights": [float(v) for v in payload.weights], "intercept": payload.intercept}
    return payload


def message_record(msg: ProtocolMessage, run_id: str, log_payload: bool = False) -> dict:
    """Transcript line: {run_id, round, sender, kind, payload_digest, payload?}."""
    payload = _payload_record(msg.payload)
    digest = hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]
    rec = {"run_id": run_id, "round": msg.round, "sender": msg.sender,
           "kind": msg.kind.value, "payload_digest": digest}
    if log_payload:
        rec["payload"] = payload
    return rec


def write_transcript(messages: list[ProtocolMessage], run_id: str, path,
                     log_payloads: bool = False) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for msg in messages:
            fh.write(json.dumps(message_record(msg, run_id, log_payloads), sort_keys=True) + "\n")


def audit_transcript(messages: list[ProtocolMessage]) -> None:
    """Raise if any payload could carry raw data; only LinearModel params may travel."""
    for msg in messages:
        if msg.payload is not None and not isinstance(msg.payload, LinearModel):
            raise ProtocolError(f"non-model payload of type {type(msg.payload).__name__} in transcript")
        if msg.kind == MsgKind.LOCAL_PARAMS and msg.sender == SERVER:
            raise ProtocolError("LocalParams sent by server")
        if msg.kind in (MsgKind.START, MsgKind.GLOBAL_PARAMS, MsgKind.STOP) and msg.sender != SERVER:
            raise ProtocolError(f"{msg.kind.value} sent by {msg.sender}")
