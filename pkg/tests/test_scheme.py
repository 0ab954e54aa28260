import numpy as np
import pytest
from scipy import stats

from chirrup.channel import draw_messages, per_user_error, q_for_ebn0, transmit
from chirrup.codebook import Mode
from chirrup.reconstruct import DecoderParams
from chirrup.scheme import (
    CodeConfig,
    Energy,
    bits_key,
    chirrup_decode,
    chirrup_encode,
    decode_subblock,
    parity_encode,
    parity_matrices,
    patch_codewords,
    retention_test,
    split_message,
    tree_stitch,
)

import oracles

TIGHT = DecoderParams(S=12, residual_tol=1e-6)


def random_message(config, seed):
    return np.random.default_rng(seed).integers(0, 2, config.B, dtype=np.uint8)


class TestConfig:
    def test_b_for_two_patches(self):
        assert CodeConfig(m=8, p=6, r=1, l=(0, 15)).B == 83
        assert CodeConfig(m=8, p=6, r=1).B == 83

    def test_b_accounting(self):
        for m, p, r in [(6, 4, 0), (8, 6, 2), (7, 3, 1)]:
            for mode in Mode:
                cfg = CodeConfig(m=m, p=p, r=r, mode=mode)
                assert cfg.B == (1 << r) * cfg.layout.length - sum(cfg.l)
                assert sum(cfg.payload_lengths) == cfg.B

    def test_invalid(self):
        with pytest.raises(ValueError, match="l\\[0\\]"):
            CodeConfig(m=6, p=4, r=1, l=(3, 3))
        with pytest.raises(ValueError):
            CodeConfig(m=6, p=4, r=1, l=(0,))
        with pytest.raises(ValueError):
            CodeConfig(m=6, p=4, r=3)
        with pytest.raises(ValueError):
            CodeConfig(m=2, p=5)
        with pytest.raises(ValueError):
            CodeConfig(m=6, p=4, Q=0)

    def test_iteration_cap_from_expected_load(self):
        assert CodeConfig(m=8, p=6, K_expected=50).decoder_params.S == 3 * 2
        assert CodeConfig(m=6, p=4, K_expected=20).decoder_params.S == 9

    def test_decoder_mode_follows_config(self):
        cfg = CodeConfig(m=6, p=2, mode=Mode.REAL, decoder=DecoderParams())
        assert cfg.decoder_params.mode is Mode.REAL


class TestParity:
    def test_r0_identity(self):
        cfg = CodeConfig(m=6, p=2)
        x = random_message(cfg, 0)
        (patch,) = parity_encode(split_message(x, cfg), cfg)
        np.testing.assert_array_equal(patch, x)

    def test_zero_payloads(self):
        cfg = CodeConfig(m=8, p=6, r=2)
        patches = parity_encode(split_message(np.zeros(cfg.B, np.uint8), cfg), cfg)
        assert all(p.sum() == 0 for p in patches)

    def test_matches_gf2_oracle(self):
        cfg = CodeConfig(m=8, p=6, r=2)
        payloads = split_message(random_message(cfg, 1), cfg)
        patches = parity_encode(payloads, cfg)
        for i, G in enumerate(parity_matrices(cfg)):
            prior = np.concatenate(payloads[:i]) if i else np.zeros(0)
            assert patches[i][cfg.payload_lengths[i]:].tolist() == oracles.gf2_matvec(G, prior)

    def test_single_flip_follows_column(self):
        cfg = CodeConfig(m=8, p=6, r=1, l=(0, 15))
        G2 = parity_matrices(cfg)[1]
        payloads = split_message(random_message(cfg, 2), cfg)
        base = parity_encode(payloads, cfg)[1][-15:]
        for j in (0, 17, 48):
            flipped = [payloads[0].copy(), payloads[1]]
            flipped[0][j] ^= 1
            diff = parity_encode(flipped, cfg)[1][-15:] ^ base
            assert diff.tolist() == oracles.gf2_matvec(G2, np.eye(49, dtype=int)[j])

    def test_matrices_reproducible(self):
        a = parity_matrices(CodeConfig(m=8, p=6, r=2, parity_seed=3))
        b = parity_matrices(CodeConfig(m=7, p=6, r=2, parity_seed=3, l=(0, 10, 10, 15)))
        assert all(x.shape == (li, sum(CodeConfig(m=8, p=6, r=2).payload_lengths[:i])) for i, (x, li) in enumerate(zip(a, (0, 10, 10, 15))))
        assert [x.shape[0] for x in b] == [0, 10, 10, 15]
        c = parity_matrices(CodeConfig(m=8, p=6, r=2, parity_seed=4))
        assert not np.array_equal(a[3], c[3])

    def test_length_errors(self):
        cfg = CodeConfig(m=6, p=2, r=1)
        with pytest.raises(ValueError):
            parity_encode([np.zeros(3)], cfg)
        with pytest.raises(ValueError):
            split_message(np.zeros(cfg.B + 1), cfg)


class TestEncode:
    def test_two_copies_differ_in_check_digit(self):
        cfg = CodeConfig(m=6, p=1)
        (s0, a), (s1, b) = patch_codewords(random_message(cfg, 3), cfg)
        assert a.check_digit == 0 and b.check_digit == 1
        assert a.with_check_digit(1) == b

    def test_check_digit_involution(self):
        cfg = CodeConfig(m=7, p=5)
        layout = cfg.layout
        for seed in range(30):
            (s0, a), (s1, b) = patch_codewords(random_message(cfg, seed), cfg)
            assert s1 == s0 ^ layout.translate(a)
            assert s0 == s1 ^ layout.translate(b)

    @pytest.mark.parametrize("r", [0, 1, 2])
    def test_energy_per_entry(self, r):
        cfg = CodeConfig(m=6, p=3, r=r, Q=1.5, energy=Energy.PER_ENTRY)
        y = chirrup_encode(random_message(cfg, r), cfg)
        energy = np.vdot(y, y).real
        # two codewords land in one slot when the translate is zero
        assert energy >= (1 << r) * 2 * 64 * 1.5 - 1e-9

    @pytest.mark.parametrize("r", [0, 1, 2])
    def test_energy_per_message(self, r):
        cfg = CodeConfig(m=6, p=3, r=r, Q=1.5)
        assert cfg.chirp_power * (1 << r) * 2 * 64 == pytest.approx(cfg.n * 1.5)

    def test_energy_with_distinct_slots(self):
        for energy, want in ((Energy.PER_ENTRY, 2 * 256 * 2.0), (Energy.PER_MESSAGE, 2.0 * 2**14)):
            cfg = CodeConfig(m=8, p=6, Q=2.0, energy=energy)
            for seed in range(20):
                x = random_message(cfg, seed)
                (s0, _), (s1, _) = patch_codewords(parity_encode(split_message(x, cfg), cfg)[0], cfg)
                if s0 != s1:
                    y = chirrup_encode(x, cfg)
                    assert np.vdot(y, y).real == pytest.approx(want)

    def test_real_mode_signal_is_real(self):
        cfg = CodeConfig(m=6, p=2, mode=Mode.REAL)
        assert chirrup_encode(random_message(cfg, 0), cfg).dtype == np.float64

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            chirrup_encode(np.zeros(3), CodeConfig(m=6, p=2))


class TestRetention:
    def test_examples(self):
        cx = CodeConfig(m=6, p=2)
        re = CodeConfig(m=6, p=2, mode=Mode.REAL)
        assert retention_test(1.0, cx) and retention_test(1.0, re)
        assert retention_test(0.75, cx)
        assert not retention_test(0.65, cx)
        assert not retention_test(0.95 + 0.2j, re)
        assert retention_test(0.95 + 0.05j, re)


def stitch_patches(msgs, cfg):
    return [list(x) for x in zip(*(parity_encode(split_message(m, cfg), cfg) for m in msgs))]


class TestTreeStitch:
    def test_r0_verbatim(self):
        cfg = CodeConfig(m=6, p=2)
        msgs = [random_message(cfg, s) for s in range(4)]
        out = tree_stitch([msgs], cfg)
        assert [bits_key(x) for x in out] == [bits_key(x) for x in msgs]

    def test_single_message(self):
        cfg = CodeConfig(m=8, p=6, r=1)
        x = random_message(cfg, 0)
        (out,) = tree_stitch(stitch_patches([x], cfg), cfg)
        np.testing.assert_array_equal(out, x)

    def test_r2_many(self):
        cfg = CodeConfig(m=8, p=6, r=2)
        msgs = [random_message(cfg, s) for s in range(20)]
        out = tree_stitch(stitch_patches(msgs, cfg), cfg)
        assert {bits_key(x) for x in out} == {bits_key(x) for x in msgs}

    def test_missing_patch_drops_message(self):
        cfg = CodeConfig(m=8, p=6, r=1)
        msgs = [random_message(cfg, s) for s in range(3)]
        lists = stitch_patches(msgs, cfg)
        lists[1] = lists[1][1:]
        out = {bits_key(x) for x in tree_stitch(lists, cfg)}
        assert out == {bits_key(x) for x in msgs[1:]}

    def test_ambiguous_root_dropped(self):
        cfg = CodeConfig(m=6, p=2, r=1, l=(0, 0))
        msgs = [random_message(cfg, s) for s in range(2)]
        # without parity every root extends with both second patches
        assert tree_stitch(stitch_patches(msgs, cfg), cfg) == []

    def test_collision_rate_matches_pair_model(self):
        cfg = CodeConfig(m=8, p=6, r=1, l=(0, 15))
        K, runs = 30, 1000
        ambiguous = 0
        for seed in range(runs):
            rng = np.random.default_rng(seed)
            msgs = list(draw_messages(K, cfg.B, rng))
            ambiguous += K - len(tree_stitch(stitch_patches(msgs, cfg), cfg))
        # each colliding pair leaves both of its roots ambiguous
        pairs = runs * K * (K - 1) // 2
        q = 2.0**-15
        mean, sd = 2 * pairs * q, 2 * np.sqrt(pairs * q * (1 - q))
        assert abs(ambiguous - mean) <= 3 * sd


class TestDecode:
    @pytest.mark.parametrize(
        "cfg",
        [
            CodeConfig(m=6, p=2, decoder=TIGHT),
            CodeConfig(m=7, p=3, r=1, decoder=TIGHT),
            CodeConfig(m=8, p=6, r=2, decoder=TIGHT),
            CodeConfig(m=6, p=3, mode=Mode.REAL, decoder=TIGHT),
            CodeConfig(m=7, p=4, r=1, mode=Mode.REAL, decoder=TIGHT),
            CodeConfig(m=6, p=2, decoder=TIGHT, energy=Energy.PER_ENTRY),
        ],
    )
    def test_single_message_noiseless(self, cfg):
        for seed in range(3):
            x = random_message(cfg, seed)
            out = chirrup_decode(chirrup_encode(x, cfg), cfg, np.random.default_rng(seed))
            assert len(out) == 1
            np.testing.assert_array_equal(out[0], x)

    def test_empty_input(self):
        cfg = CodeConfig(m=6, p=3)
        assert chirrup_decode(np.zeros(cfg.n, complex), cfg, np.random.default_rng(0)) == []

    def test_wrong_length(self):
        with pytest.raises(ValueError):
            chirrup_decode(np.zeros(10), CodeConfig(m=6, p=3))

    @pytest.mark.parametrize("cfg,K", [(CodeConfig(m=8, p=6, decoder=TIGHT), 30), (CodeConfig(m=8, p=4, r=1, decoder=TIGHT), 20)])
    def test_noiseless_round_trip(self, cfg, K):
        rng = np.random.default_rng(K)
        msgs = draw_messages(K, cfg.B, rng)
        out = chirrup_decode(transmit(msgs, cfg, add_noise=False), cfg, rng)
        assert per_user_error(msgs, out) <= 0.05

    def test_max_messages_truncates(self):
        cfg = CodeConfig(m=8, p=6, decoder=TIGHT)
        rng = np.random.default_rng(0)
        msgs = draw_messages(10, cfg.B, rng)
        y = transmit(msgs, cfg, add_noise=False)
        assert len(chirrup_decode(y, cfg, np.random.default_rng(1), max_messages=4)) == 4

    def test_peel_lists_and_history(self):
        cfg = CodeConfig(m=6, p=4, K_expected=20, Q=q_for_ebn0(12.0, CodeConfig(m=6, p=4)))
        rng = np.random.default_rng(5)
        msgs = draw_messages(20, cfg.B, rng)
        y = transmit(msgs, cfg, rng)
        res = decode_subblock(y, cfg, np.random.default_rng(6))
        assert len(res.history) == cfg.d
        assert all(a <= b for a, b in zip(res.history, res.history[1:]))
        for lst in res.peel_lists:
            assert len(set(lst)) == len(lst)

    def test_deterministic_given_rng(self):
        cfg = CodeConfig(m=6, p=4, K_expected=10, Q=q_for_ebn0(10.0, CodeConfig(m=6, p=4)))
        rng = np.random.default_rng(0)
        y = transmit(draw_messages(10, cfg.B, rng), cfg, rng)
        a = chirrup_decode(y, cfg, np.random.default_rng(9))
        b = chirrup_decode(y, cfg, np.random.default_rng(9))
        assert [bits_key(x) for x in a] == [bits_key(x) for x in b]

    @pytest.mark.slow
    def test_peeling_helps(self):
        base = CodeConfig(m=6, p=4, K_expected=20)
        base = base.with_(Q=q_for_ebn0(10.0, base))
        errs = {1: [], 5: []}
        for seed in range(100):
            rng = np.random.default_rng(seed)
            msgs = draw_messages(20, base.B, rng)
            y = transmit(msgs, base, rng)
            for d in errs:
                out = chirrup_decode(y, base.with_(d=d), np.random.default_rng([seed, 1]))
                errs[d].append(per_user_error(msgs, out))
        assert np.mean(errs[5]) < np.mean(errs[1])
        # paired comparison, not just a lucky mean
        assert stats.wilcoxon(errs[1], errs[5], alternative="greater").pvalue < 0.01
