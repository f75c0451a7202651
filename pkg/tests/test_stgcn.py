import numpy as np
import pytest

from signfusion.autodiff import Parameter, ShapeError, Tensor, grad_check, tensor_sum
from signfusion.params import ParameterStore
from signfusion.skeleton import build_hops, pose_topology
from signfusion.stgcn import (
    GATES,
    StgcnBlockConfig,
    block_layer_parameter_counts,
    block_parameter_count,
    build_block,
    build_lstm_cell,
    keypoint_encode,
    lstm_forward,
    stack_blocks,
    stgcn_block_forward,
    window_pool_matrix,
)

HOPS = build_hops(pose_topology(), 1)


def make_block(seed=0, **overrides):
    store = ParameterStore(np.random.default_rng(seed))
    cfg = StgcnBlockConfig(**overrides)
    return build_block(store, "block", cfg), store


def lstm_oracle(cell, seq):
    """Plain-numpy evaluation of the gate equations, step by step."""
    steps = seq.shape[0]
    hidden = cell.hidden
    h = np.zeros(hidden)
    c = np.zeros(hidden)
    outs = np.zeros((steps, hidden))

    def sig(v):
        return 1.0 / (1.0 + np.exp(-v))

    for t in range(steps):
        f = sig(cell.w["f"].data @ seq[t] + cell.u["f"].data @ h + cell.b["f"].data)
        i = sig(cell.w["i"].data @ seq[t] + cell.u["i"].data @ h + cell.b["i"].data)
        o = sig(cell.w["o"].data @ seq[t] + cell.u["o"].data @ h + cell.b["o"].data)
        cand = np.tanh(cell.w["c"].data @ seq[t] + cell.u["c"].data @ h
                       + cell.b["c"].data)
        c = f * c + i * cand
        h = o * np.tanh(c)
        outs[t] = h
    return outs


class TestParameterCounts:
    def test_shipped_block_total(self):
        assert block_parameter_count(StgcnBlockConfig()) == 37680

    def test_shipped_per_layer_breakdown(self):
        counts = block_layer_parameter_counts(StgcnBlockConfig())
        assert counts == [1792, 4352, 4352, 18448, 3856, 4880]

    def test_counts_match_built_parameters(self):
        block, store = make_block()
        assert store.total_size() == 37680

    def test_deeper_block_counts_follow_shapes(self):
        cfg = StgcnBlockConfig(in_channels=48)
        block, store = make_block(in_channels=48)
        assert store.total_size() == block_parameter_count(cfg)


class TestBlockForward:
    def test_shape_contract(self):
        block, _ = make_block()
        x = Tensor(np.random.default_rng(0).standard_normal((3, 33, 60)))
        out = stgcn_block_forward(block, x, HOPS)
        assert out.shape == (48, 33, 60)

    def test_zero_parameters_give_zero_output(self):
        block, store = make_block()
        for p in store.parameters():
            p.data[...] = 0.0
        x = Tensor(np.random.default_rng(1).standard_normal((3, 33, 10)))
        out = stgcn_block_forward(block, x, HOPS)
        assert np.array_equal(out.data, np.zeros((48, 33, 10)))

    def test_joint_count_mismatch_rejected(self):
        block, _ = make_block()
        x = Tensor(np.zeros((3, 20, 10)))
        with pytest.raises(ShapeError):
            stgcn_block_forward(block, x, HOPS)

    def test_even_width_rejected_in_config(self):
        with pytest.raises(ValueError):
            StgcnBlockConfig(tcn_widths=(8, 15, 19))

    def test_gradients_shipped_block(self):
        block, store = make_block(seed=3)
        x = Parameter(
            0.6 * np.random.default_rng(4).standard_normal((3, 33, 8)), "x")

        def f():
            return tensor_sum(stgcn_block_forward(block, x, HOPS))

        assert grad_check(f, [x] + store.parameters(), probes=60) <= 1e-4

    def test_dropout_only_in_training(self):
        block, _ = make_block(seed=5)
        x = Tensor(np.random.default_rng(6).standard_normal((3, 33, 10)))
        inference = stgcn_block_forward(block, x, HOPS).data
        again = stgcn_block_forward(block, x, HOPS).data
        assert np.array_equal(inference, again)
        rng = np.random.default_rng(7)
        trained = stgcn_block_forward(block, x, HOPS, training=True, rng=rng).data
        assert not np.array_equal(inference, trained)


class TestStack:
    def test_single_block_stack_equals_block(self):
        block, _ = make_block(seed=8)
        x = Tensor(np.random.default_rng(9).standard_normal((3, 33, 12)))
        alone = stgcn_block_forward(block, x, HOPS).data
        stacked = stack_blocks([block], x, HOPS).data
        np.testing.assert_array_equal(alone, stacked)

    def test_three_block_shapes(self):
        store = ParameterStore(np.random.default_rng(10))
        blocks = [
            build_block(store, f"b{i}",
                        StgcnBlockConfig(in_channels=3 if i == 0 else 48))
            for i in range(3)
        ]
        x = Tensor(np.random.default_rng(11).standard_normal((3, 33, 60)))
        assert stack_blocks(blocks, x, HOPS).shape == (48, 33, 60)

    def test_empty_stack_rejected(self):
        with pytest.raises(ShapeError):
            stack_blocks([], Tensor(np.zeros((3, 33, 4))), HOPS)

    def test_channel_mismatch_rejected(self):
        store = ParameterStore(np.random.default_rng(12))
        blocks = [
            build_block(store, "b0", StgcnBlockConfig()),
            build_block(store, "b1", StgcnBlockConfig(in_channels=3)),
        ]
        with pytest.raises(ShapeError):
            stack_blocks(blocks, Tensor(np.zeros((3, 33, 4))), HOPS)


class TestLstm:
    def test_zero_parameters_zero_hidden(self):
        store = ParameterStore(np.random.default_rng(0))
        cell = build_lstm_cell(store, "cell", 4, 3)
        for p in store.parameters():
            p.data[...] = 0.0
        seq = Tensor(np.random.default_rng(1).standard_normal((5, 4)))
        out = lstm_forward(cell, seq)
        assert np.array_equal(out.data, np.zeros((5, 3)))

    def test_single_step_matches_hand_computation(self):
        store = ParameterStore(np.random.default_rng(2))
        cell = build_lstm_cell(store, "cell", 2, 2)
        for g in GATES:
            cell.w[g].data[...] = 0.1 * (1 + "fioc".index(g))
            cell.u[g].data[...] = 0.05
            cell.b[g].data[...] = 0.2
        x = np.array([[1.0, -0.5]])
        got = lstm_forward(cell, Tensor(x)).data
        expected = lstm_oracle(cell, x)
        np.testing.assert_allclose(got, expected, atol=1e-12)

    def test_sequence_matches_oracle(self):
        store = ParameterStore(np.random.default_rng(3))
        cell = build_lstm_cell(store, "cell", 5, 4)
        seq = np.random.default_rng(4).standard_normal((7, 5))
        got = lstm_forward(cell, Tensor(seq)).data
        np.testing.assert_allclose(got, lstm_oracle(cell, seq), atol=1e-12)

    def test_hidden_states_strictly_inside_unit_box(self):
        store = ParameterStore(np.random.default_rng(5))
        cell = build_lstm_cell(store, "cell", 3, 6)
        seq = Tensor(10.0 * np.random.default_rng(6).standard_normal((9, 3)))
        out = lstm_forward(cell, seq).data
        assert np.all(np.abs(out) < 1.0)

    def test_gradients(self):
        store = ParameterStore(np.random.default_rng(7))
        cell = build_lstm_cell(store, "cell", 3, 4)
        seq = Parameter(np.random.default_rng(8).standard_normal((5, 3)), "seq")
        weights = Tensor(np.random.default_rng(9).standard_normal((5, 4)))
        from signfusion.autodiff import mul

        def f():
            return tensor_sum(mul(lstm_forward(cell, seq), weights))

        assert grad_check(f, [seq] + store.parameters(), probes=80) <= 1e-4

    def test_wrong_input_width_rejected(self):
        store = ParameterStore(np.random.default_rng(10))
        cell = build_lstm_cell(store, "cell", 3, 4)
        with pytest.raises(ShapeError):
            lstm_forward(cell, Tensor(np.zeros((5, 7))))


class TestKeypointEncode:
    def _encoder(self, seed=0, hidden=16):
        store = ParameterStore(np.random.default_rng(seed))
        blocks = [build_block(store, "b0", StgcnBlockConfig())]
        cell = build_lstm_cell(store, "lstm", 33 * 48, hidden)
        return blocks, [cell], store

    def test_window_count(self):
        pool = window_pool_matrix(60, 16, 8)
        assert pool.shape == (6, 60)
        np.testing.assert_allclose(pool.sum(axis=1), np.ones(6))

    def test_sixty_frames_to_six_windows(self):
        blocks, cells, _ = self._encoder()
        pose = np.random.default_rng(1).standard_normal((60, 33, 3))
        out = keypoint_encode(blocks, cells, pose, HOPS)
        assert out.shape == (6, 16)

    def test_zero_everything_gives_zero_encoding(self):
        blocks, cells, store = self._encoder()
        for p in store.parameters():
            p.data[...] = 0.0
        out = keypoint_encode(blocks, cells, np.zeros((24, 33, 3)), HOPS)
        assert np.array_equal(out.data, np.zeros((2, 16)))

    def test_too_short_sequence_rejected(self):
        blocks, cells, _ = self._encoder()
        with pytest.raises(ShapeError):
            keypoint_encode(blocks, cells, np.zeros((10, 33, 3)), HOPS)

    def test_non_finite_rejected(self):
        blocks, cells, _ = self._encoder()
        pose = np.zeros((16, 33, 3))
        pose[3, 5, 1] = np.nan
        with pytest.raises(ValueError):
            keypoint_encode(blocks, cells, pose, HOPS)

    def test_full_encoder_gradients_small_window(self):
        store = ParameterStore(np.random.default_rng(2))
        blocks = [build_block(store, "b0", StgcnBlockConfig())]
        cell = build_lstm_cell(store, "lstm", 33 * 48, 6)
        pose = 0.5 * np.random.default_rng(3).standard_normal((8, 33, 3))

        def f():
            return tensor_sum(
                keypoint_encode(blocks, [cell], pose, HOPS, window=4, stride=2))

        assert grad_check(f, store.parameters(), probes=60) <= 1e-4
