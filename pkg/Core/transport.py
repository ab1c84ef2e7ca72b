"""Three-party message fabric with exact bit accounting and round counting."""

import json
import time
import logging
import threading
from collections import defaultdict, deque
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Any, Deque, Dict, List, Optional, Tuple

import numpy as np

from Core.crypto import CiphertextBatch
from Core.exceptions import TransportError
from Core.utils.constants import HopClass, PartyKind
from Core.utils.helpers import bits_for

logger = logging.getLogger(__name__)

@dataclass(frozen=True)
class Party:
    """A protocol participant; users carry a 1-based index."""
    kind: PartyKind
    index: Optional[int] = None

    @property
    def name(self) -> str:
        if self.kind is PartyKind.USER:
            return "users" if self.index is None else f"user:{self.index}"
        return self.kind.name.lower()

SHUFFLER = Party(PartyKind.SHUFFLER)
COLLECTOR = Party(PartyKind.COLLECTOR)
USERS = Party(PartyKind.USER)

@dataclass
class ItemSetMessage:
    """Plaintext set of item ids with fixed-width encoding."""
    items: np.ndarray
    domain: int
    tau1: int = 0

    @property
    def bits_each(self) -> int:
        return bits_for(self.domain + 1)

    def total_bits(self) -> int:
        return int(self.items.size) * self.bits_each

    def __len__(self) -> int:
        return int(self.items.size)

@dataclass
class Bundle:
    """Several aligned batches sent together, one element per message (e.g. ⟨E[h], E[E[E[x]]]⟩)."""
    parts: Tuple[CiphertextBatch, ...]

    def __len__(self) -> int:
        return len(self.parts[0])

    def total_bits(self) -> int:
        return sum(part.total_bits() for part in self.parts)

    def take(self, indices: np.ndarray) -> "Bundle":
        return Bundle(tuple(part.take(indices) for part in self.parts))

    def concat(self, other: "Bundle") -> "Bundle":
        return Bundle(tuple(a.concat(b) for a, b in zip(self.parts, other.parts)))

@dataclass
class HopRecord:
    sender: str
    receiver: str
    bits: int
    count: int
    stage: str

@dataclass
class Transcript:
    """Everything measured during one run."""
    hops: List[HopRecord]
    c_us: int
    c_sd: int
    rounds: Dict[str, int]
    user_sent: np.ndarray
    user_received: np.ndarray
    stage_seconds: Dict[str, float]
    lambda_bits: int = 0
    lambda_bits_tau1: int = 0

    @property
    def c_tot(self) -> int:
        return self.c_us + self.c_sd

    def measure(self) -> Tuple[int, int, int, Dict[str, int]]:
        """(C_US, C_SD, C_tot, rounds)."""
        return self.c_us, self.c_sd, self.c_tot, dict(self.rounds)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'hops': [{'from': h.sender, 'to': h.receiver, 'bits': h.bits, 'count': h.count, 'stage': h.stage}
                     for h in self.hops],
            'rounds': dict(self.rounds),
            'user_messages': {'sent_max': int(self.user_sent.max()) if self.user_sent.size else 0,
                              'received_max': int(self.user_received.max()) if self.user_received.size else 0},
            'c_us': self.c_us,
            'c_sd': self.c_sd,
            'c_tot': self.c_tot,
            'lambda_bits': self.lambda_bits,
            'lambda_bits_tau1': self.lambda_bits_tau1,
            'stage_seconds': self.stage_seconds,
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

def measure(transcript: Transcript) -> Tuple[int, int, int, Dict[str, int]]:
    """(C_US, C_SD, C_tot, rounds) of a transcript."""
    return transcript.measure()

def assert_one_round(transcript: Transcript) -> bool:
    """True iff every user sent exactly one message and received none."""
    return bool(np.all(transcript.user_sent == 1) and np.all(transcript.user_received == 0))

class Network:
    """In-process fabric connecting a user group, the shuffler and the data collector."""

    def __init__(self, n_users: int, keep_hop_log: bool = True):
        self.n_users = n_users
        self.keep_hop_log = keep_hop_log
        self._lock = threading.Lock()
        self._inboxes: Dict[str, Deque[Tuple[str, Any]]] = defaultdict(deque)
        self._hops: List[HopRecord] = []
        self._bits = {HopClass.USER_SHUFFLER: 0, HopClass.SHUFFLER_COLLECTOR: 0}
        self._rounds: Dict[str, int] = defaultdict(int)
        self._last_action: Dict[str, str] = {}
        self._user_sent = np.zeros(n_users, dtype=np.int64)
        self._user_received = np.zeros(n_users, dtype=np.int64)
        self._user_rounds = np.zeros(n_users, dtype=np.int64)
        self._user_waiting = np.zeros(n_users, dtype=bool)
        self._stage_seconds: Dict[str, float] = defaultdict(float)
        self._lambda_bits = 0
        self._lambda_bits_tau1 = 0
        self._stage = "setup"
        self._closed = False

    @contextmanager
    def stage(self, name: str):
        """Label and time a protocol stage."""
        previous = self._stage
        self._stage = name
        start = time.perf_counter()
        try:
            yield
        finally:
            self._stage_seconds[name] += time.perf_counter() - start
            self._stage = previous

    def _check_open(self):
        if self._closed:
            raise TransportError("Message sent after protocol close")

    def _record(self, sender: Party, receiver: Party, payload: Any) -> int:
        bits = int(payload.total_bits())
        count = len(payload)
        touches_user = PartyKind.USER in (sender.kind, receiver.kind)
        self._bits[HopClass.USER_SHUFFLER if touches_user else HopClass.SHUFFLER_COLLECTOR] += bits
        if isinstance(payload, ItemSetMessage):
            self._lambda_bits += bits
            self._lambda_bits_tau1 += count * payload.tau1
        if self.keep_hop_log:
            self._hops.append(HopRecord(sender.name, receiver.name, bits, count, self._stage))
        return bits

    def _mark_send(self, party: str):
        if self._last_action.get(party) != 'send':
            self._rounds[party] += 1
        self._last_action[party] = 'send'

    def send(self, sender: Party, receiver: Party, payload: Any):
        """Deliver a payload between servers (or to users, for test oracles)."""
        with self._lock:
            self._check_open()
            if sender.kind is PartyKind.USER:
                raise TransportError("Users send through send_from_users()")
            self._record(sender, receiver, payload)
            self._mark_send(sender.name)
            if receiver.kind is PartyKind.USER:
                # Broadcast to the addressed users
                targets = np.arange(self.n_users) if receiver.index is None else [receiver.index - 1]
                self._user_received[targets] += 1
                self._user_waiting[targets] = True
            else:
                self._inboxes[receiver.name].append((sender.name, payload))

    def send_from_users(self, receiver: Party, payload: Any, senders: Optional[np.ndarray] = None):
        """Each listed user (0-based) sends its element of `payload`; defaults to all users in order."""
        with self._lock:
            self._check_open()
            senders = np.arange(self.n_users) if senders is None else np.asarray(senders)
            if senders.size != len(payload):
                raise TransportError(f"{senders.size} senders for {len(payload)} messages")
            self._record(USERS, receiver, payload)
            # A user starts a new round on its first send or after receiving
            fresh = (self._user_sent[senders] == 0) | self._user_waiting[senders]
            self._user_rounds[senders] += fresh
            self._user_waiting[senders] = False
            np.add.at(self._user_sent, senders, 1)
            self._inboxes[receiver.name].append((USERS.name, payload))

    def receive(self, receiver: Party) -> Any:
        """Pop the oldest message waiting for a server."""
        with self._lock:
            inbox = self._inboxes[receiver.name]
            if not inbox:
                raise TransportError(f"No message waiting for {receiver.name}")
            _, payload = inbox.popleft()
            self._last_action[receiver.name] = 'receive'
            return payload

    def close(self) -> Transcript:
        """Seal the run and return its transcript."""
        with self._lock:
            self._closed = True
            rounds = dict(self._rounds)
            rounds['users'] = int(self._user_rounds.max()) if self.n_users else 0
            return Transcript(
                hops=list(self._hops),
                c_us=self._bits[HopClass.USER_SHUFFLER],
                c_sd=self._bits[HopClass.SHUFFLER_COLLECTOR],
                rounds=rounds,
                user_sent=self._user_sent.copy(),
                user_received=self._user_received.copy(),
                stage_seconds=dict(self._stage_seconds),
                lambda_bits=self._lambda_bits,
                lambda_bits_tau1=self._lambda_bits_tau1,
            )
