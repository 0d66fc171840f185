"""Protocol tests: key generation, symmetrisation, messaging, attacks.

The forging check is cross-validated by exhaustive enumeration of all
guess patterns, which is tractable at the block lengths used here.
"""

import io
import itertools
import math

import numpy as np
import pytest

from qds_onedecoy.channel import ChannelParams, PulseConfig
from qds_onedecoy.protocol import (
    HalfKey,
    PoolExhausted,
    ProtocolAbort,
    ProtocolError,
    ProtocolSession,
    SignatureBundle,
    SymmetrizedKey,
    attack_forge,
    attack_repudiation,
    count_mismatches,
    exact_forge_success,
    rng_stream,
    run_kgp,
    symmetrize,
    verify,
)
from qds_onedecoy.security import Thresholds

DESK_PC = PulseConfig(mu=0.6, nu=0.2, p_mu=0.6, p_z_tx=0.8, p_z_rx=0.8, n_pulses=2e6)
DESK_CH = ChannelParams(distance_km=2.0)
QUIET_CH = ChannelParams(distance_km=2.0, dark_count_rate_hz=0.0, misalignment=0.0)


class TestRngStream:
    def test_reproducible(self):
        a = rng_stream(7, "bob_alice", "kgp").integers(0, 1000, 8)
        b = rng_stream(7, "bob_alice", "kgp").integers(0, 1000, 8)
        assert (a == b).all()

    def test_streams_are_distinct(self):
        a = rng_stream(7, "bob_alice", "kgp").integers(0, 1000, 8)
        b = rng_stream(7, "charlie_alice", "kgp").integers(0, 1000, 8)
        c = rng_stream(8, "bob_alice", "kgp").integers(0, 1000, 8)
        assert not (a == b).all()
        assert not (a == c).all()


class TestRunKgp:
    def test_deterministic(self):
        r1 = run_kgp("bob_alice", DESK_PC, DESK_CH, seed=3, k_test=500)
        r2 = run_kgp("bob_alice", DESK_PC, DESK_CH, seed=3, k_test=500)
        assert (r1.tx_pool == r2.tx_pool).all()
        assert r1.test_errors == r2.test_errors
        assert r1.counts == r2.counts

    def test_noise_free_pools_agree(self):
        result = run_kgp("bob_alice", DESK_PC, QUIET_CH, seed=5, k_test=200)
        assert (result.tx_pool == result.rx_pool).all()
        assert result.test_errors == 0

    def test_pool_excludes_test_sample(self):
        result = run_kgp("bob_alice", DESK_PC, DESK_CH, seed=5, k_test=700)
        assert len(result.tx_pool) == int(result.counts.n_total("Z")) - 700

    def test_test_sample_tracks_model_error_rate(self):
        from qds_onedecoy.channel import expected_statistics

        expected = expected_statistics(DESK_PC, DESK_CH)
        model = expected.m_total("Z") / expected.n_total("Z")
        k = 2000
        rates = np.array(
            [
                run_kgp("bob_alice", DESK_PC, DESK_CH, seed=s, k_test=k).test_errors / k
                for s in range(120)
            ]
        )
        se = rates.std(ddof=1) / math.sqrt(len(rates))
        assert abs(rates.mean() - model) < 5 * se

    def test_aborts_when_pool_too_small(self):
        with pytest.raises(ProtocolAbort):
            run_kgp("bob_alice", DESK_PC, DESK_CH, seed=1, k_test=100, min_pool=10**9)

    def test_rejects_aggregate_scale(self):
        big = PulseConfig(mu=0.6, nu=0.2, p_mu=0.6, p_z_tx=0.8, p_z_rx=0.8,
                          n_pulses=2e12)
        with pytest.raises(ValueError):
            run_kgp("bob_alice", big, DESK_CH, seed=1, k_test=100)


class TestSymmetrize:
    def test_halves_partition_each_block(self):
        L = 64
        bob_bits = rng_stream(1, "b").integers(0, 2, L, dtype=np.uint8)
        charlie_bits = rng_stream(1, "c").integers(0, 2, L, dtype=np.uint8)
        bob_sym, charlie_sym = symmetrize(
            bob_bits, charlie_bits, rng_stream(1, "rb"), rng_stream(1, "rc")
        )
        # Bob's kept positions and the ones he forwarded partition his block
        merged = np.sort(
            np.concatenate([bob_sym.own.positions, charlie_sym.received.positions])
        )
        assert (merged == np.arange(L)).all()
        merged_c = np.sort(
            np.concatenate([charlie_sym.own.positions, bob_sym.received.positions])
        )
        assert (merged_c == np.arange(L)).all()
        assert len(bob_sym.own.positions) == L // 2

    def test_bits_travel_with_positions(self):
        L = 32
        bob_bits = np.arange(L, dtype=np.uint8) % 2
        charlie_bits = (np.arange(L, dtype=np.uint8) + 1) % 2
        bob_sym, charlie_sym = symmetrize(
            bob_bits, charlie_bits, rng_stream(2, "rb"), rng_stream(2, "rc")
        )
        assert (bob_sym.received.bits == charlie_bits[bob_sym.received.positions]).all()
        assert (charlie_sym.received.bits == bob_bits[charlie_sym.received.positions]).all()

    def test_rejects_mismatched_or_odd_lengths(self):
        with pytest.raises(ProtocolError):
            symmetrize(np.zeros(4, np.uint8), np.zeros(6, np.uint8),
                       rng_stream(0, "a"), rng_stream(0, "b"))
        with pytest.raises(ProtocolError):
            symmetrize(np.zeros(5, np.uint8), np.zeros(5, np.uint8),
                       rng_stream(0, "a"), rng_stream(0, "b"))


def crafted_bundle(L=100):
    return SignatureBundle(
        message_bit=0,
        keys={
            "bob_alice": np.zeros(L, dtype=np.uint8),
            "charlie_alice": np.zeros(L, dtype=np.uint8),
        },
    )


def crafted_sym(L=100, own_mismatches=0):
    half = L // 2
    own_bits = np.zeros(half, dtype=np.uint8)
    own_bits[:own_mismatches] = 1
    return SymmetrizedKey(
        own=HalfKey("bob_alice", np.arange(half), own_bits),
        received=HalfKey(
            "charlie_alice", np.arange(half, L), np.zeros(half, dtype=np.uint8)
        ),
    )


class TestVerify:
    def test_strict_threshold_boundary_integer(self):
        # threshold * L/2 = 15: exactly 15 mismatches must reject
        bundle = crafted_bundle(100)
        accepted, own, recv = verify(bundle, crafted_sym(100, 15), threshold=0.3)
        assert (own, recv) == (15, 0)
        assert not accepted
        accepted, own, _ = verify(bundle, crafted_sym(100, 14), threshold=0.3)
        assert accepted and own == 14

    def test_strict_threshold_boundary_fractional(self):
        # threshold * L/2 = 15.5: 16 rejects, 15 accepts
        bundle = crafted_bundle(100)
        assert not verify(bundle, crafted_sym(100, 16), threshold=0.31)[0]
        assert verify(bundle, crafted_sym(100, 15), threshold=0.31)[0]

    def test_zero_threshold_rejects_even_perfect_keys(self):
        bundle = crafted_bundle(100)
        assert not verify(bundle, crafted_sym(100, 0), threshold=0.0)[0]

    def test_count_mismatches_validates_positions(self):
        bundle = crafted_bundle(10)
        with pytest.raises(ProtocolError):
            count_mismatches(
                bundle, HalfKey("bob_alice", np.array([0, 0]), np.zeros(2, np.uint8))
            )
        with pytest.raises(ProtocolError):
            count_mismatches(
                bundle, HalfKey("bob_alice", np.array([3, 12]), np.zeros(2, np.uint8))
            )
        with pytest.raises(ProtocolError):
            count_mismatches(
                bundle, HalfKey("elsewhere", np.array([0]), np.zeros(1, np.uint8))
            )


class TestSession:
    def relaxed_thresholds(self):
        return Thresholds(s_alpha=0.05, s_upsilon=0.15)

    def test_honest_run_accepts_at_both_hops(self):
        session = ProtocolSession(DESK_PC, DESK_CH, L=2000, seed=11)
        session.run_distribution()
        result = session.run_messaging(1, self.relaxed_thresholds())
        assert result.bob_accept and result.charlie_accept
        assert not result.aborted
        # observed mismatches sit near QBER * L/2, far below the limits
        assert max(result.bob_mismatches) < 0.05 * 1000

    def test_noise_free_run_has_zero_mismatches(self):
        session = ProtocolSession(DESK_PC, QUIET_CH, L=1000, seed=3)
        session.run_distribution()
        result = session.run_messaging(0, self.relaxed_thresholds())
        assert result.bob_mismatches == (0, 0)
        assert result.charlie_mismatches == (0, 0)

    def test_corrupted_channel_aborts_at_bob(self):
        # synthetic keys well above both thresholds
        session = ProtocolSession(
            DESK_PC, DESK_CH, L=2000, seed=4, synthetic=True, qber=0.30
        )
        session.run_distribution()
        result = session.run_messaging(1, self.relaxed_thresholds())
        assert not result.bob_accept
        assert result.aborted
        assert result.charlie_accept is None
        assert result.charlie_mismatches is None
        assert any(m.kind == "abort" for m in session.transcript)

    def test_each_message_value_has_its_own_block(self):
        session = ProtocolSession(DESK_PC, QUIET_CH, L=500, seed=9)
        session.run_distribution()
        b0 = session.sign(0)
        b1 = session.sign(1)
        assert not np.array_equal(b0.keys["bob_alice"], b1.keys["bob_alice"])

    def test_error_rate_above_verification_threshold_rejects(self):
        # mismatch rate sitting just above s_upsilon (and hence well above
        # s_alpha) must be caught at the first hop in almost every run
        th = self.relaxed_thresholds()
        rejects = 0
        for seed in range(100):
            session = ProtocolSession(
                DESK_PC, DESK_CH, L=2000, seed=seed, synthetic=True,
                qber=th.s_upsilon + 0.01,
            )
            session.run_distribution()
            result = session.run_messaging(1, th)
            rejects += not result.bob_accept
        assert rejects >= 99

    def test_block_reuse_is_refused(self):
        session = ProtocolSession(DESK_PC, QUIET_CH, L=500, seed=9)
        session.run_distribution()
        session.sign(0)
        with pytest.raises(PoolExhausted):
            session.sign(0)

    def test_sign_requires_distribution(self):
        session = ProtocolSession(DESK_PC, QUIET_CH, L=500, seed=9)
        with pytest.raises(ProtocolError):
            session.sign(0)

    def test_distribution_runs_once(self):
        session = ProtocolSession(DESK_PC, QUIET_CH, L=500, seed=9)
        session.run_distribution()
        with pytest.raises(ProtocolError):
            session.run_distribution()

    def test_synthetic_mode_is_forced_above_desk_scale(self):
        big = PulseConfig(mu=0.6, nu=0.2, p_mu=0.6, p_z_tx=0.8, p_z_rx=0.8,
                          n_pulses=1e12)
        session = ProtocolSession(big, DESK_CH, L=2000, seed=1)
        assert not session.bit_mode
        session.run_distribution()
        result = session.run_messaging(1, self.relaxed_thresholds())
        assert result.bob_accept

    def test_transcript_replays_identically(self):
        def transcript_text(seed):
            session = ProtocolSession(DESK_PC, DESK_CH, L=1000, seed=seed)
            session.run_distribution()
            session.run_messaging(1, self.relaxed_thresholds())
            buf = io.StringIO()
            session.export_transcript(buf)
            return buf.getvalue()

        assert transcript_text(21) == transcript_text(21)
        assert transcript_text(21) != transcript_text(22)

    def test_transcript_sequence_is_strictly_increasing(self):
        session = ProtocolSession(DESK_PC, DESK_CH, L=1000, seed=2)
        session.run_distribution()
        session.run_messaging(0, self.relaxed_thresholds())
        seqs = [m.seq for m in session.transcript]
        assert seqs == sorted(seqs)
        assert len(set(seqs)) == len(seqs)
        kinds = {m.kind for m in session.transcript}
        assert {"signature", "accept"} <= kinds


def enumerate_forge_success(L, s_upsilon):
    """Exhaustive ground truth: fraction of guess patterns Charlie accepts."""
    half = L // 2
    limit = s_upsilon * half
    wins = sum(
        1
        for pattern in itertools.product((0, 1), repeat=half)
        if sum(pattern) < limit
    )
    return wins / 2**half


class TestAttacks:
    def test_exact_forge_matches_exhaustive_enumeration(self):
        for L, s_u in [(20, 0.3), (20, 0.2), (16, 0.45), (2, 0.3)]:
            assert exact_forge_success(L, s_u) == pytest.approx(
                enumerate_forge_success(L, s_u), abs=1e-12
            )

    def test_exact_forge_degenerate_threshold(self):
        assert exact_forge_success(20, 0.0) == 0.0
        assert exact_forge_success(2, 0.3) == 0.5

    def test_forge_simulation_matches_exact_law(self):
        L, trials = 20, 20000
        th = Thresholds(s_alpha=0.1, s_upsilon=0.3)
        exact = exact_forge_success(L, th.s_upsilon)
        empirical = attack_forge(trials, L, th, seed=5)
        sigma = math.sqrt(exact * (1 - exact) / trials)
        assert abs(empirical - exact) < 3 * sigma

    def test_repudiation_stays_below_analytic_bound(self):
        L, trials = 2000, 20000
        th = Thresholds(s_alpha=0.05, s_upsilon=0.15)
        bound = 2.0 * math.exp(-((th.s_upsilon - th.s_alpha) ** 2) * L / 4.0)
        for rate in (0.075, 0.1, 0.125):
            empirical = attack_repudiation(trials, L, th, rate, seed=8)
            sigma = math.sqrt(max(empirical, 1.0 / trials) / trials)
            assert empirical <= bound + 3 * sigma

    def test_repudiation_without_corruption_never_succeeds(self):
        th = Thresholds(s_alpha=0.05, s_upsilon=0.15)
        assert attack_repudiation(5000, 1000, th, 0.0, seed=1) == 0.0

    def test_attack_input_validation(self):
        th = Thresholds(s_alpha=0.05, s_upsilon=0.15)
        with pytest.raises(ValueError):
            attack_forge(100, 21, th)
        with pytest.raises(ValueError):
            attack_repudiation(100, 2000, th, 1.5)
