import numpy as np
import pytest

from looptf import autodiff as ad
from looptf.model import LoopedModel, ModelConfig, decode_greedy, stacked, unrolled
from looptf.vocab import VOCAB_SIZE
from gradcheck import rel_error


def small(dtype=np.float64, seed=0, **kw):
    cfg = ModelConfig(vocab_size=12, embed_dim=8, heads=2, **kw)
    return LoopedModel(cfg, seed=seed, dtype=dtype)


def tokens(seed=0, B=2, L=7, V=12):
    return np.random.default_rng(seed).integers(0, V, (B, L))


class TestEmbedding:
    def test_repeated_token_rows_equal(self):
        e = small().embed_tokens(np.array([[3, 5, 3]])).data
        assert np.array_equal(e[0, 0], e[0, 2])

    def test_shape(self):
        assert small().embed_tokens(tokens()).shape == (2, 7, 8)

    def test_row_permutation(self):
        m, x = small(), tokens(B=3)
        perm = [2, 0, 1]
        a = m.loop_forward(x, 2).logits.data
        b = m.loop_forward(x[perm], 2).logits.data
        assert np.allclose(a[perm], b, atol=1e-12)


class TestBlock:
    def test_causal(self):
        m = small()
        x = tokens(L=9)
        base = m.loop_forward(x, 3).logits.data
        for j in range(1, 9):
            y = x.copy()
            y[:, j] = (y[:, j] + 1) % 12
            out = m.loop_forward(y, 3).logits.data
            assert np.array_equal(out[:, :j], base[:, :j])

    def test_shape_and_determinism(self):
        m = small()
        h = m.embed_tokens(tokens())
        a, b = m.block_forward(h).data, m.block_forward(h).data
        assert a.shape == h.shape and np.array_equal(a, b)

    def test_too_long(self):
        m = small(max_seq_len=4)
        with pytest.raises(ValueError):
            m(tokens(L=5))


class TestLoop:
    def test_single_step_is_plain_forward(self):
        m, x = small(), tokens()
        direct = m.head(m.block_forward(m.embed_tokens(x))).data
        assert np.array_equal(m.loop_forward(x, 1).logits.data, direct)

    def test_logit_shape(self):
        assert small().loop_forward(tokens(), 3).logits.shape == (2, 7, 12)

    def test_prefix_consistency(self):
        m, x = small(seed=4), tokens(3)
        out = m.loop_forward(x, 5, step_outputs=True)
        assert len(out.step_logits) == 5
        for t in range(1, 6):
            assert np.allclose(out.step_logits[t - 1].data, m.loop_forward(x, t).logits.data, atol=1e-12)

    def test_bad_step_count(self):
        with pytest.raises(ValueError):
            small().loop_forward(tokens(), 0)

    def test_injection_matters(self):
        x = tokens(5)
        on = small(seed=1)
        off = LoopedModel(ModelConfig(vocab_size=12, embed_dim=8, heads=2, input_injection=False), seed=1,
                          dtype=np.float64)
        assert np.array_equal(on.loop_forward(x, 1).logits.data, off.loop_forward(x, 1).logits.data)
        assert not np.allclose(on.loop_forward(x, 3).logits.data, off.loop_forward(x, 3).logits.data)

    @pytest.mark.parametrize("inject", [True, False])
    def test_forward_steps_matches_per_row(self, inject):
        m = small(seed=2, input_injection=inject)
        x = tokens(6, B=5)
        steps = np.array([3, 1, 4, 3, 2])
        out = m.forward_steps(x, steps).data
        for b, t in enumerate(steps):
            assert np.allclose(out[b], m.loop_forward(x[b:b + 1], int(t)).logits.data[0], atol=1e-12)

    def test_forward_steps_gradients_match_grouped(self):
        x = tokens(7, B=4)
        steps = np.array([2, 1, 2, 3])
        tgt = tokens(8, B=4)
        mask = np.ones_like(tgt)
        a = small(seed=3)
        ad.cross_entropy_masked(a.forward_steps(x, steps), tgt, mask).backward()
        b = small(seed=3)
        rows = [ad.cross_entropy_masked(b.loop_forward(x[i:i + 1], int(t)).logits, tgt[i:i + 1], mask[i:i + 1])
                for i, t in enumerate(steps)]
        loss = rows[0]
        for r in rows[1:]:
            loss = loss + r
        (loss * 0.25).backward()
        for (n, p), q in zip(a.named_parameters(), b.parameters()):
            assert rel_error(p.grad, q.grad) < 1e-10, n


class TestWeightTying:
    def test_parameter_count_independent_of_T(self):
        m = small()
        n = m.num_parameters()
        m.loop_forward(tokens(), 4)
        assert m.num_parameters() == n

    def test_tied_grads_equal_sum_of_unrolled(self):
        T = 3
        m = small(seed=5)
        x, tgt = tokens(9), tokens(10)
        mask = np.ones_like(tgt)
        ad.cross_entropy_masked(m.loop_forward(x, T).logits, tgt, mask).backward()
        u = unrolled(m, T)
        ul = u.loop_forward(x, T).logits
        assert np.allclose(ul.data, m.loop_forward(x, T).logits.data, atol=1e-12)
        ad.cross_entropy_masked(ul, tgt, mask).backward()
        for name, p in m.named_parameters():
            if name.startswith("block0."):
                rest = name[len("block0."):]
                summed = sum(u.params[f"block{k}.{rest}"].grad for k in range(T))
            else:
                summed = u.params[name].grad
            assert rel_error(p.grad, summed) < 1e-5, name

    def test_per_iteration_grads_differ(self):
        m = small(seed=6)
        u = unrolled(m, 2)
        x, tgt = tokens(11), tokens(12)
        ad.cross_entropy_masked(u.loop_forward(x, 2).logits, tgt, np.ones_like(tgt)).backward()
        g0 = u.params["block0.layer0.mlp.w_fc"].grad
        g1 = u.params["block1.layer0.mlp.w_fc"].grad
        assert not np.allclose(g0, g1)

    def test_stacked_equals_noinjection_loop(self):
        m = small(seed=7, input_injection=False, block_depth=2)
        s = stacked(m, 3)
        x = tokens(13)
        assert s.config.block_depth == 6
        assert np.allclose(s(x).data, m.loop_forward(x, 3).logits.data, atol=1e-12)

    def test_untied_too_many_steps(self):
        with pytest.raises(ValueError):
            unrolled(small(), 2).loop_forward(tokens(), 3)


class TestGradients:
    def test_full_model_finite_difference(self):
        m = small(seed=8)
        x, tgt = tokens(14, B=2, L=5), tokens(15, B=2, L=5)
        mask = np.ones_like(tgt)
        mask[:, :2] = 0

        def loss():
            return ad.cross_entropy_masked(m.loop_forward(x, 2).logits, tgt, mask)

        loss().backward()
        rng = np.random.default_rng(0)
        eps = 1e-6
        worst = 0.0
        for name, p in m.named_parameters():
            idx = [tuple(rng.integers(0, s) for s in p.shape) for _ in range(3)]
            for i in idx:
                old = p.data[i]
                p.data[i] = old + eps
                with ad.no_grad():
                    up = float(loss().data)
                p.data[i] = old - eps
                with ad.no_grad():
                    down = float(loss().data)
                p.data[i] = old
                num = (up - down) / (2 * eps)
                an = p.grad[i]
                if abs(an) + abs(num) > 1e-9:
                    worst = max(worst, abs(an - num) / (abs(an) + abs(num)))
        assert worst < 1e-3

    def test_T1_and_T2_gradients_differ(self):
        x, tgt = tokens(16), tokens(17)
        grads = []
        for T in (1, 2):
            m = small(seed=9)
            ad.cross_entropy_masked(m.loop_forward(x, T).logits, tgt, np.ones_like(tgt)).backward()
            grads.append(m.params["block0.layer0.attn.w_qkv"].grad)
        assert not np.allclose(*grads)


class TestDecode:
    def test_one_hot(self):
        assert decode_greedy(np.eye(4)[[2, 0, 3]]).tolist() == [2, 0, 3]

    def test_ties_go_low(self):
        assert decode_greedy(np.zeros((2, 5))).tolist() == [0, 0]

    def test_shift_invariant(self):
        z = np.random.default_rng(0).standard_normal((3, 4, 6))
        assert np.array_equal(decode_greedy(z), decode_greedy(z + 7.5))


class TestManifest:
    def test_no_positional_parameters(self):
        m = LoopedModel(ModelConfig(), seed=0)
        names = [n for n, _, _ in m.manifest()]
        assert not any("pos" in n or "wpe" in n for n in names)
        L = m.config.max_seq_len
        assert all(L not in s for _, s, _ in m.manifest())
        assert names[0] == "embed" and names[-1] == "head.w"

    def test_head_untied(self):
        m = LoopedModel(ModelConfig(), seed=0)
        assert m.params["head.w"].shape == (64, VOCAB_SIZE)
        assert not np.allclose(m.params["head.w"].data, m.params["embed"].data.T)

    def test_seeded_init(self):
        a = LoopedModel(ModelConfig(), seed=3).manifest_text()
        assert a == LoopedModel(ModelConfig(), seed=3).manifest_text()
        assert a != LoopedModel(ModelConfig(), seed=4).manifest_text()

    def test_config_validation(self):
        with pytest.raises(ValueError):
            ModelConfig(embed_dim=10, heads=3)
