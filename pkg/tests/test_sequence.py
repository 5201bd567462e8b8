import copy
import time

import numpy as np
import pytest

from ptmfuse import tensor as tn
from ptmfuse.errors import ConfigError
from ptmfuse.nn import Init
from ptmfuse.sequence import BiLstmParams, SsmParams, bilstm_forward, bilstm_hidden, selective_scan, ssm_forward
from ptmfuse.tensor import Tensor


class TestBiLstm:
    def test_shapes(self, rng):
        p = BiLstmParams.init(Init(rng), 8)
        assert bilstm_forward(Tensor(rng.normal(size=(3, 7, 8))), p).shape == (3, 7, 8)
        hf, hb = bilstm_hidden(Tensor(rng.normal(size=(3, 7, 8))), p)
        assert hf.shape == hb.shape == (3, 7, 4)

    def test_single_step(self, rng):
        p = BiLstmParams.init(Init(rng), 6)
        assert bilstm_forward(Tensor(rng.normal(size=(2, 1, 6))), p).shape == (2, 1, 6)

    def test_zero_weights_give_bias(self, rng):
        p = BiLstmParams.init(Init(rng), 6)
        for t in p.parameters():
            t.data[...] = 0.0
        p.b_o.data[...] = rng.normal(size=6)
        out = bilstm_forward(Tensor(rng.normal(size=(2, 5, 6))), p).data
        np.testing.assert_array_equal(out, np.broadcast_to(p.b_o.data, out.shape))

    def test_forget_bias(self, rng):
        p = BiLstmParams.init(Init(rng), 6)
        np.testing.assert_array_equal(p.fwd.b.data[3:6], 1.0)
        np.testing.assert_array_equal(p.fwd.b.data[:3], 0.0)

    def test_reversal_symmetry(self, rng):
        p = BiLstmParams.init(Init(rng), 6)
        p.bwd = copy.deepcopy(p.fwd)
        x = Tensor(rng.normal(size=(2, 5, 6)))
        hf, hb = bilstm_hidden(x, p)
        hf_r, hb_r = bilstm_hidden(tn.reverse(x), p)
        np.testing.assert_allclose(hb_r.data, hf.data[:, ::-1], rtol=1e-13)
        np.testing.assert_allclose(hf_r.data, hb.data[:, ::-1], rtol=1e-13)

    def test_odd_width(self, rng):
        with pytest.raises(ConfigError):
            BiLstmParams.init(Init(rng), 7)


class TestLinearScan:
    def test_prefix_sum(self):
        a = Tensor(np.ones((1, 3, 1)))
        x = Tensor(np.array([1.0, 2.0, 3.0]).reshape(1, 3, 1))
        np.testing.assert_array_equal(tn.linear_scan(a, x).data.ravel(), [1.0, 3.0, 6.0])

    def test_memoryless(self, rng):
        x = Tensor(rng.normal(size=(2, 6, 3)))
        np.testing.assert_array_equal(tn.linear_scan(Tensor(np.zeros((2, 6, 3))), x).data, x.data)

    def test_linear_time(self, rng):
        def run(length):
            a = Tensor(rng.uniform(0, 1, size=(1, length, 8)))
            x = Tensor(rng.normal(size=(1, length, 8)))
            best = np.inf
            for _ in range(3):
                t0 = time.perf_counter()
                tn.linear_scan(a, x)
                best = min(best, time.perf_counter() - t0)
            return best

        ratio = run(16000) / run(2000)
        # 8x longer input; quadratic cost would give ~64x
        assert ratio < 20


class TestSsm:
    def test_shape_and_residual(self, rng):
        p = SsmParams.init(Init(rng), 8, 4)
        x = Tensor(rng.normal(size=(2, 7, 8)))
        assert ssm_forward(x, p).shape == (2, 7, 8)
        p.w_out.data[...] = 0.0
        np.testing.assert_array_equal(ssm_forward(x, p).data, x.data)

    def test_decay_in_unit_interval(self, rng):
        p = SsmParams.init(Init(rng), 8, 4)
        tr = {}
        selective_scan(Tensor(rng.normal(scale=5, size=(2, 9, 8))), p, tr)
        a = tr["decay"].data
        assert a.min() > 0.0 and a.max() < 1.0

    def test_memoryless_limit(self, rng):
        p = SsmParams.init(Init(rng), 4, 3)
        p.decay_base.data[...] = -1e4
        u = rng.normal(size=(1, 6, 4))
        base = selective_scan(Tensor(u), p).data
        u2 = u.copy()
        u2[0, 0] += 5.0
        moved = selective_scan(Tensor(u2), p).data
        np.testing.assert_array_equal(moved[:, 1:], base[:, 1:])
        assert not np.array_equal(moved[:, 0], base[:, 0])

    def test_bounded_long_sequence(self, rng):
        p = SsmParams.init(Init(rng), 8, 4)
        tr = {}
        out = ssm_forward(Tensor(rng.normal(size=(1, 1000, 8))), p, tr)
        assert np.all(np.isfinite(out.data))
        a, h = tr["decay"].data, tr["state"].data
        assert np.abs(h).max() < 1e6 and a.max() < 1.0

    def test_causal(self, rng):
        p = SsmParams.init(Init(rng), 4, 3)
        u = rng.normal(size=(1, 8, 4))
        base = selective_scan(Tensor(u), p).data
        u2 = u.copy()
        u2[0, 5] += 1.0
        np.testing.assert_array_equal(selective_scan(Tensor(u2), p).data[:, :5], base[:, :5])

    def test_wrong_width(self, rng):
        p = SsmParams.init(Init(rng), 8, 4)
        with pytest.raises(ConfigError):
            ssm_forward(Tensor(np.zeros((1, 3, 6))), p)
