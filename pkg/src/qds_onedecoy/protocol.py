"""Three-party signature protocol: distribution, messaging and attacks.

Alice signs; Bob authenticates; Charlie arbitrates.  During distribution
each recipient runs a key-generation link toward Alice (quantum states
travel recipient to signer) and the two recipients symmetrise their keys
by exchanging random halves, so neither knows which positions the other
kept.  During messaging Alice declares her measured keys for one message
bit, Bob checks the declaration against his symmetrised key at the
tighter threshold and forwards it, and Charlie checks at the looser one.

Key material is handled at the bit level when the pulse budget is small
enough to materialise strings ("desk scale"); larger configurations run
the messaging stage on synthetic keys drawn at the model error rate.
All randomness is derived from named substreams of one seed, so runs
are reproducible end to end, transcript included.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import IO, Mapping

import numpy as np

from .channel import (
    DESK_SCALE_MAX_PULSES,
    ChannelParams,
    ObservedCounts,
    PulseConfig,
    expected_statistics,
    sample_statistics,
)
from .security import Thresholds

__all__ = [
    "LINKS",
    "Role",
    "Phase",
    "ProtocolError",
    "ProtocolAbort",
    "PoolExhausted",
    "ClassicalMessage",
    "HalfKey",
    "SymmetrizedKey",
    "SignatureBundle",
    "KgpResult",
    "MessagingResult",
    "rng_stream",
    "run_kgp",
    "symmetrize",
    "count_mismatches",
    "verify",
    "ProtocolSession",
    "attack_repudiation",
    "attack_forge",
    "exact_forge_success",
]

#: Quantum links, named recipient-to-signer.
LINKS = ("bob_alice", "charlie_alice")


class Role(str, Enum):
    ALICE = "alice"
    BOB = "bob"
    CHARLIE = "charlie"


class Phase(Enum):
    IDLE = "idle"
    DISTRIBUTION = "distribution"
    POOL_READY = "pool_ready"
    SIGNED = "signed"
    VERIFIED = "verified"
    ABORTED = "aborted"


class ProtocolError(Exception):
    """A party was driven outside the allowed protocol flow."""


class ProtocolAbort(ProtocolError):
    """The distribution stage could not produce enough key material."""


class PoolExhausted(ProtocolError):
    """No fresh key block remains for the requested signature."""


@dataclass(frozen=True)
class ClassicalMessage:
    """One authenticated classical transmission, stored as a payload digest."""

    seq: int
    kind: str
    sender: str
    receiver: str
    digest: str


@dataclass(frozen=True)
class HalfKey:
    """Half of a symmetrised key: positions within one link's block."""

    link: str
    positions: np.ndarray
    bits: np.ndarray


@dataclass(frozen=True)
class SymmetrizedKey:
    """What one recipient holds after the exchange of halves."""

    own: HalfKey
    received: HalfKey


@dataclass(frozen=True)
class SignatureBundle:
    """Alice's declaration for one message bit: her measured key per link."""

    message_bit: int
    keys: Mapping[str, np.ndarray]

    @property
    def block_length(self) -> int:
        return len(next(iter(self.keys.values())))


@dataclass(frozen=True)
class KgpResult:
    """Outcome of one key-generation link run at desk scale.

    ``tx_pool`` holds the recipient's prepared bits, ``rx_pool`` Alice's
    measured bits, both after removal of the disclosed test sample.
    """

    counts: ObservedCounts
    tx_pool: np.ndarray
    rx_pool: np.ndarray
    test_size: int
    test_errors: int


@dataclass(frozen=True)
class MessagingResult:
    message_bit: int
    bob_accept: bool
    charlie_accept: bool | None
    aborted: bool
    bob_mismatches: tuple[int, int]
    charlie_mismatches: tuple[int, int] | None


def rng_stream(seed: int, *labels: str) -> np.random.Generator:
    """Independent, reproducible generator for one (seed, purpose) pair."""
    words = [int(seed)] + [
        int.from_bytes(hashlib.sha256(label.encode()).digest()[:4], "big")
        for label in labels
    ]
    return np.random.default_rng(words)


def _digest(payload: object) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def run_kgp(
    link: str,
    pc: PulseConfig,
    ch: ChannelParams,
    seed: int,
    k_test: int,
    min_pool: int = 0,
) -> KgpResult:
    """Run one key-generation link at the bit level.

    Samples the sifted statistics, lays the Z-basis detections out as a
    bit string on each side with errors placed uniformly, discloses a
    random k-bit test sample and removes it from the pool.  Aborts when
    the remaining pool would fall short of ``min_pool`` bits.
    """
    if pc.n_pulses > DESK_SCALE_MAX_PULSES:
        raise ValueError(
            f"bit-level key generation supports at most {DESK_SCALE_MAX_PULSES:.0e} "
            f"pulses, got {pc.n_pulses:.3g}; use the synthetic messaging path"
        )
    if k_test < 1:
        raise ValueError(f"test sample size must be at least 1, got {k_test}")
    rng = rng_stream(seed, link, "kgp")
    counts = sample_statistics(pc, ch, rng)
    n_pool = int(counts.n_total("Z"))
    m_pool = int(counts.m_total("Z"))
    if n_pool < k_test + min_pool:
        raise ProtocolAbort(
            f"link {link!r}: sifted pool of {n_pool} bits cannot supply a "
            f"{k_test}-bit test sample and {min_pool} key bits"
        )
    tx = rng.integers(0, 2, size=n_pool, dtype=np.uint8)
    mask = np.zeros(n_pool, dtype=np.uint8)
    mask[rng.choice(n_pool, size=m_pool, replace=False)] = 1
    rx = tx ^ mask
    test_idx = rng.choice(n_pool, size=k_test, replace=False)
    test_errors = int(mask[test_idx].sum())
    keep = np.ones(n_pool, dtype=bool)
    keep[test_idx] = False
    return KgpResult(
        counts=counts,
        tx_pool=tx[keep],
        rx_pool=rx[keep],
        test_size=k_test,
        test_errors=test_errors,
    )


def symmetrize(
    bob_bits: np.ndarray,
    charlie_bits: np.ndarray,
    rng_bob: np.random.Generator,
    rng_charlie: np.random.Generator,
) -> tuple[SymmetrizedKey, SymmetrizedKey]:
    """Exchange random halves between the two recipients' blocks.

    Each recipient independently chooses half of his positions to
    forward and keeps the complement, so Alice cannot know which copy of
    a given position will be checked where.
    """
    L = len(bob_bits)
    if len(charlie_bits) != L:
        raise ProtocolError(
            f"blocks must have equal length, got {L} and {len(charlie_bits)}"
        )
    if L < 2 or L % 2 != 0:
        raise ProtocolError(f"block length must be an even integer >= 2, got {L}")
    half = L // 2

    def split(bits: np.ndarray, rng: np.random.Generator) -> tuple[HalfKey, HalfKey]:
        forward = np.sort(rng.choice(L, size=half, replace=False))
        keep = np.setdiff1d(np.arange(L), forward, assume_unique=True)
        return keep, forward

    bob_keep, bob_forward = split(bob_bits, rng_bob)
    charlie_keep, charlie_forward = split(charlie_bits, rng_charlie)
    bob_sym = SymmetrizedKey(
        own=HalfKey("bob_alice", bob_keep, bob_bits[bob_keep]),
        received=HalfKey("charlie_alice", charlie_forward, charlie_bits[charlie_forward]),
    )
    charlie_sym = SymmetrizedKey(
        own=HalfKey("charlie_alice", charlie_keep, charlie_bits[charlie_keep]),
        received=HalfKey("bob_alice", bob_forward, bob_bits[bob_forward]),
    )
    return bob_sym, charlie_sym


def count_mismatches(bundle: SignatureBundle, half: HalfKey) -> int:
    """Mismatches between a held half-key and the declared key it came from."""
    if half.link not in bundle.keys:
        raise ProtocolError(f"declaration carries no key for link {half.link!r}")
    key = bundle.keys[half.link]
    pos = half.positions
    if len(pos) != len(half.bits):
        raise ProtocolError("positions and bits disagree in length")
    if len(pos) and (pos.min() < 0 or pos.max() >= len(key)):
        raise ProtocolError(
            f"positions fall outside the declared block of length {len(key)}"
        )
    if len(np.unique(pos)) != len(pos):
        raise ProtocolError("positions must be distinct")
    return int(np.count_nonzero(key[pos] != half.bits))


def verify(
    bundle: SignatureBundle, sym: SymmetrizedKey, threshold: float
) -> tuple[bool, int, int]:
    """Check a declaration against a symmetrised key at one threshold.

    Both halves must show strictly fewer than threshold * L/2 mismatches.
    Returns (accepted, own-half mismatches, received-half mismatches).
    """
    own = count_mismatches(bundle, sym.own)
    received = count_mismatches(bundle, sym.received)
    limit = threshold * bundle.block_length / 2.0
    return (own < limit) and (received < limit), own, received


class ProtocolSession:
    """One full protocol run among the three parties.

    Distribution fills the key blocks for both message values; messaging
    signs one value and runs both verifications.  At desk scale
    (``n_pulses`` small enough) key bits come from sampled link runs;
    otherwise synthetic blocks are drawn at the model error rate, which
    exercises the identical messaging path.
    """

    def __init__(
        self,
        pc: PulseConfig,
        ch: ChannelParams,
        L: int,
        *,
        seed: int = 0,
        k_test: int | None = None,
        qber: float | None = None,
        synthetic: bool | None = None,
    ) -> None:
        if L < 2 or L % 2 != 0:
            raise ValueError(f"block length must be an even integer >= 2, got {L}")
        self.pc = pc
        self.ch = ch
        self.L = int(L)
        self.seed = int(seed)
        self.k_test = k_test if k_test is not None else max(1, round(0.05 * L))
        self.qber_override = qber
        if synthetic is None:
            self.bit_mode = pc.n_pulses <= DESK_SCALE_MAX_PULSES
        else:
            self.bit_mode = not synthetic
        self.phases: dict[Role, Phase] = {r: Phase.IDLE for r in Role}
        self.transcript: list[ClassicalMessage] = []
        self.kgp_results: dict[str, KgpResult] = {}
        self._signing_keys: dict[tuple[int, str], np.ndarray] = {}
        self._blocks: dict[tuple[int, str], np.ndarray] = {}
        self._symmetrized: dict[tuple[int, Role], SymmetrizedKey] = {}
        self._consumed: set[int] = set()
        self._seq = 0

    # -- classical channel -------------------------------------------------

    def _send(self, kind: str, sender: str, receiver: str, payload: object) -> None:
        self.transcript.append(
            ClassicalMessage(self._seq, kind, sender, receiver, _digest(payload))
        )
        self._seq += 1

    def export_transcript(self, fp: IO[str]) -> None:
        """Write the transcript as one JSON object per line."""
        for msg in self.transcript:
            fp.write(
                json.dumps(
                    {
                        "seq": msg.seq,
                        "kind": msg.kind,
                        "sender": msg.sender,
                        "receiver": msg.receiver,
                        "digest": msg.digest,
                    },
                    sort_keys=True,
                )
                + "\n"
            )

    # -- distribution stage ------------------------------------------------

    def _model_qber(self) -> float:
        counts = expected_statistics(self.pc, self.ch)
        n = counts.n_total("Z")
        return counts.m_total("Z") / n if n > 0 else 0.0

    def _link_blocks(self, link: str, recipient: str) -> None:
        """Fill both message-value blocks for one link."""
        need = 2 * self.L
        if self.bit_mode:
            kgp = run_kgp(link, self.pc, self.ch, self.seed, self.k_test, min_pool=need)
            self.kgp_results[link] = kgp
            self._send("basis_announce", recipient, "alice", {"link": link, "n": len(kgp.tx_pool)})
            self._send("sift_result", "alice", recipient, {"link": link})
            self._send(
                "test_reveal",
                recipient,
                "alice",
                {"link": link, "k": kgp.test_size, "errors": kgp.test_errors},
            )
            tx, rx = kgp.tx_pool, kgp.rx_pool
        else:
            qber = self.qber_override if self.qber_override is not None else self._model_qber()
            rng = rng_stream(self.seed, link, "synthetic")
            tx = rng.integers(0, 2, size=need, dtype=np.uint8)
            rx = tx ^ (rng.random(need) < qber).astype(np.uint8)
            self._send("basis_announce", recipient, "alice", {"link": link, "synthetic": True})
        for m in (0, 1):
            sl = slice(m * self.L, (m + 1) * self.L)
            self._blocks[(m, link)] = tx[sl]
            self._signing_keys[(m, link)] = rx[sl]

    def run_distribution(self) -> None:
        for role in Role:
            if self.phases[role] is not Phase.IDLE:
                raise ProtocolError(f"{role.value} is not idle; distribution already ran")
            self.phases[role] = Phase.DISTRIBUTION
        self._link_blocks("bob_alice", "bob")
        self._link_blocks("charlie_alice", "charlie")
        for m in (0, 1):
            bob_sym, charlie_sym = symmetrize(
                self._blocks[(m, "bob_alice")],
                self._blocks[(m, "charlie_alice")],
                rng_stream(self.seed, "bob", "symmetrize", str(m)),
                rng_stream(self.seed, "charlie", "symmetrize", str(m)),
            )
            self._symmetrized[(m, Role.BOB)] = bob_sym
            self._symmetrized[(m, Role.CHARLIE)] = charlie_sym
            self._send(
                "symmetrization_forward", "bob", "charlie",
                {"m": m, "positions": charlie_sym.received.positions.tolist()},
            )
            self._send(
                "symmetrization_forward", "charlie", "bob",
                {"m": m, "positions": bob_sym.received.positions.tolist()},
            )
        for role in Role:
            self.phases[role] = Phase.POOL_READY

    # -- messaging stage ---------------------------------------------------

    def sign(self, message_bit: int) -> SignatureBundle:
        """Alice declares her measured keys for one message value."""
        if message_bit not in (0, 1):
            raise ValueError(f"message bit must be 0 or 1, got {message_bit}")
        if self.phases[Role.ALICE] not in (Phase.POOL_READY, Phase.SIGNED):
            raise ProtocolError(
                f"cannot sign in phase {self.phases[Role.ALICE].value}; run distribution first"
            )
        if message_bit in self._consumed:
            raise PoolExhausted(
                f"the key block for message bit {message_bit} was already consumed"
            )
        self._consumed.add(message_bit)
        bundle = SignatureBundle(
            message_bit=message_bit,
            keys={link: self._signing_keys[(message_bit, link)] for link in LINKS},
        )
        self.phases[Role.ALICE] = Phase.SIGNED
        self._send(
            "signature", "alice", "bob",
            {"m": message_bit, "keys": {k: v.tolist() for k, v in bundle.keys.items()}},
        )
        return bundle

    def run_messaging(self, message_bit: int, th: Thresholds) -> MessagingResult:
        """Sign one message bit and run both verifications.

        Bob rejecting broadcasts an abort and Charlie never rules; Bob
        accepting forwards the declaration for Charlie's verdict.
        """
        bundle = self.sign(message_bit)
        bob_ok, b_own, b_recv = verify(
            bundle, self._symmetrized[(message_bit, Role.BOB)], th.s_alpha
        )
        if not bob_ok:
            self._send("reject", "bob", "alice", {"m": message_bit})
            self._send("abort", "bob", "charlie", {"m": message_bit})
            self.phases[Role.BOB] = Phase.ABORTED
            self.phases[Role.CHARLIE] = Phase.ABORTED
            return MessagingResult(
                message_bit=message_bit,
                bob_accept=False,
                charlie_accept=None,
                aborted=True,
                bob_mismatches=(b_own, b_recv),
                charlie_mismatches=None,
            )
        self._send("accept", "bob", "alice", {"m": message_bit})
        self._send(
            "forwarded_signature", "bob", "charlie",
            {"m": message_bit, "keys": {k: v.tolist() for k, v in bundle.keys.items()}},
        )
        charlie_ok, c_own, c_recv = verify(
            bundle, self._symmetrized[(message_bit, Role.CHARLIE)], th.s_upsilon
        )
        verdict = "accept" if charlie_ok else "reject"
        self._send(verdict, "charlie", "alice", {"m": message_bit})
        self._send(verdict, "charlie", "bob", {"m": message_bit})
        self.phases[Role.BOB] = Phase.VERIFIED
        self.phases[Role.CHARLIE] = Phase.VERIFIED
        return MessagingResult(
            message_bit=message_bit,
            bob_accept=True,
            charlie_accept=charlie_ok,
            aborted=False,
            bob_mismatches=(b_own, b_recv),
            charlie_mismatches=(c_own, c_recv),
        )


# -- adversarial strategies ------------------------------------------------


def attack_repudiation(
    trials: int, L: int, th: Thresholds, corruption_rate: float, seed: int = 0
) -> float:
    """Empirical success rate of a repudiating signer.

    Alice corrupts each position of the key she shares with Bob's link
    independently at ``corruption_rate``, hoping the random halving sends
    few corrupted bits to Bob's kept half (he accepts at s_alpha) and
    many to the half forwarded to Charlie (he rejects at s_upsilon).
    Success means Bob accepts while Charlie rejects.
    """
    if L < 2 or L % 2 != 0:
        raise ValueError(f"block length must be an even integer >= 2, got {L}")
    if not 0.0 <= corruption_rate <= 1.0:
        raise ValueError(f"corruption rate must lie in [0, 1], got {corruption_rate}")
    rng = rng_stream(seed, "attack", "repudiation")
    half = L // 2
    corrupted = rng.binomial(L, corruption_rate, size=trials)
    in_bob_half = rng.hypergeometric(corrupted, L - corrupted, half)
    bob_accepts = in_bob_half < th.s_alpha * half
    charlie_rejects = (corrupted - in_bob_half) >= th.s_upsilon * half
    return float(np.mean(bob_accepts & charlie_rejects))


def attack_forge(trials: int, L: int, th: Thresholds, seed: int = 0) -> float:
    """Empirical success rate of a forging recipient with no key knowledge.

    Bob fabricates a declaration: the half he forwarded to Charlie he can
    match exactly, Charlie's kept half he must guess bit by bit.  Success
    means Charlie accepts at s_upsilon.
    """
    if L < 2 or L % 2 != 0:
        raise ValueError(f"block length must be an even integer >= 2, got {L}")
    rng = rng_stream(seed, "attack", "forge")
    half = L // 2
    guess_mismatches = rng.binomial(half, 0.5, size=trials)
    return float(np.mean(guess_mismatches < th.s_upsilon * half))


def _strictly_below(limit: float) -> int:
    """Largest integer strictly below ``limit`` (limit itself excluded)."""
    nearest = round(limit)
    if math.isclose(limit, nearest, rel_tol=0.0, abs_tol=1e-9):
        return int(nearest) - 1
    return math.floor(limit)


def exact_forge_success(L: int, s_upsilon: float) -> float:
    """Exact success probability of the guessing forger.

    The guessed half accumulates Binomial(L/2, 1/2) mismatches; success
    is the strict tail below s_upsilon * L/2, enumerated exactly in
    integer arithmetic.
    """
    if L < 2 or L % 2 != 0:
        raise ValueError(f"block length must be an even integer >= 2, got {L}")
    half = L // 2
    j_max = _strictly_below(s_upsilon * half)
    if j_max < 0:
        return 0.0
    j_max = min(j_max, half)
    total = sum(math.comb(half, j) for j in range(j_max + 1))
    return total / 2**half
