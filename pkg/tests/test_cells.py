"""Recurrent cells, attention and the stacked cloud forecaster"""

import numpy as np
import pytest

from src.cloud.attention import CBAM, SelfAttentionMemory, attend
from src.cloud.cells import CBAMConvLSTMCell, CellState, ConvLSTMCell, SAConvLSTMCell, build_cell
from src.cloud.model import CloudForecaster, PersistenceCloudModel, load_cloud_model, rollout, teacher_forced
from src.core.exceptions import ConfigurationError, MissingArtifactError, ShapeError
from src.core.models import CloudNetSpec
from src.tensor.autodiff import Tensor


# ============================================================================
# CELLS
# ============================================================================

@pytest.mark.parametrize("kind", ["convlstm", "cbam", "sa"])
def test_cell_step_shapes(kind, rng):
    cell = build_cell(kind, 1, 4, 3, rng, cbam_reduction=2, cbam_kernel=3)
    state = cell.initial_state((6, 5))
    out = cell(Tensor(rng.uniform(size=(1, 6, 5))), state)
    assert out.h.shape == (4, 6, 5) and out.c.shape == (4, 6, 5)
    assert (out.m is not None) == (kind == "sa")


@pytest.mark.parametrize("kind", ["convlstm", "cbam", "sa"])
def test_cell_batch_matches_single(kind, rng):
    cell = build_cell(kind, 1, 2, 3, rng, cbam_reduction=1, cbam_kernel=3)
    frames = rng.uniform(size=(3, 1, 4, 4))
    batched = cell(Tensor(frames), cell.initial_state((4, 4), batch=3))
    for b in range(3):
        single = cell(Tensor(frames[b]), cell.initial_state((4, 4)))
        np.testing.assert_allclose(batched.h.data[b], single.h.data, atol=1e-12)
        np.testing.assert_allclose(batched.c.data[b], single.c.data, atol=1e-12)


def test_zero_input_zero_state_is_bias_driven(rng):
    cell = ConvLSTMCell(1, 3, 3, rng)
    out = cell(Tensor(np.zeros((1, 4, 4))), cell.initial_state((4, 4)))
    for ch in range(3):
        assert np.allclose(out.h.data[ch], out.h.data[ch, 0, 0])
    sig = lambda v: 1.0 / (1.0 + np.exp(-v))  # noqa: E731
    b = {g: cell.p(f"b_{g}").data for g in "ifoc"}
    expected_c = sig(b["i"]) * np.tanh(b["c"])
    np.testing.assert_allclose(out.c.data[:, 0, 0], expected_c, atol=1e-12)
    np.testing.assert_allclose(out.h.data[:, 0, 0], sig(b["o"]) * np.tanh(expected_c), atol=1e-12)


def test_cell_rejects_wrong_channels(rng):
    cell = ConvLSTMCell(2, 3, 3, rng)
    with pytest.raises(ShapeError):
        cell(Tensor(np.zeros((1, 4, 4))), cell.initial_state((4, 4)))
    with pytest.raises(ShapeError):
        ConvLSTMCell(1, 3, 4, rng)


def test_sa_cell_needs_memory(rng):
    cell = SAConvLSTMCell(1, 2, 3, rng)
    with pytest.raises(ShapeError):
        cell(Tensor(np.zeros((1, 4, 4))), CellState.zeros((2, 4, 4)))


def test_cbam_identity_matches_convlstm():
    frames = np.random.default_rng(5).uniform(size=(3, 1, 5, 5))
    plain = ConvLSTMCell(1, 4, 3, np.random.default_rng(7))
    attended = CBAMConvLSTMCell(1, 4, 3, np.random.default_rng(7), reduction=2, spatial_kernel=3,
                                identity_attention=True)
    s_plain, s_att = plain.initial_state((5, 5)), attended.initial_state((5, 5))
    for frame in frames:
        s_plain = plain(Tensor(frame), s_plain)
        s_att = attended(Tensor(frame), s_att)
    np.testing.assert_array_equal(s_plain.h.data, s_att.h.data)
    np.testing.assert_array_equal(s_plain.c.data, s_att.c.data)


def test_cbam_output_shape_and_identity(rng):
    cbam = CBAM(4, rng, reduction=2, spatial_kernel=3)
    x = Tensor(rng.normal(size=(4, 5, 5)))
    assert cbam(x).shape == (4, 5, 5)
    cbam.identity_attention = True
    np.testing.assert_array_equal(cbam(x).data, x.data)


# ============================================================================
# ATTENTION
# ============================================================================

def attend_oracle(q, k, v):
    d, h, w = q.shape
    n = h * w
    qf, kf, vf = q.reshape(d, n), k.reshape(d, n), v.reshape(v.shape[0], n)
    out = np.zeros((v.shape[0], n))
    weights = np.zeros((n, n))
    for i in range(n):
        scores = np.array([qf[:, i] @ kf[:, j] for j in range(n)]) / np.sqrt(d)
        e = np.exp(scores - scores.max())
        a = e / e.sum()
        weights[:, i] = a
        out[:, i] = sum(a[j] * vf[:, j] for j in range(n))
    return out.reshape(v.shape), weights


def test_attend_matches_loop_oracle(rng):
    q, k, v = rng.normal(size=(2, 3, 3)), rng.normal(size=(2, 3, 3)), rng.normal(size=(4, 3, 3))
    out, weights = attend(Tensor(q), Tensor(k), Tensor(v))
    expected_out, expected_weights = attend_oracle(q, k, v)
    np.testing.assert_allclose(weights.data.sum(axis=0), 1.0, atol=1e-12)
    np.testing.assert_allclose(weights.data, expected_weights, atol=1e-12)
    np.testing.assert_allclose(out.data, expected_out, atol=1e-12)


def test_attend_uniform_keys_average_values(rng):
    v = rng.normal(size=(3, 2, 2))
    out, weights = attend(Tensor(rng.normal(size=(2, 2, 2))), Tensor(np.zeros((2, 2, 2))), Tensor(v))
    np.testing.assert_allclose(weights.data, 0.25)
    np.testing.assert_allclose(out.data, np.broadcast_to(v.mean(axis=(1, 2))[:, None, None], v.shape), atol=1e-12)


def test_self_attention_memory_shapes(rng):
    sam = SelfAttentionMemory(4, 3, rng)
    h, m = Tensor(rng.normal(size=(4, 3, 3))), Tensor(rng.normal(size=(4, 3, 3)))
    z, weights = sam.aggregate(h, m)
    assert z.shape == (4, 3, 3)
    assert weights.hidden.shape == (9, 9) and weights.memory.shape == (9, 9)
    np.testing.assert_allclose(weights.memory.sum(axis=0), 1.0, atol=1e-12)
    h_hat, new_m = sam(h, m)
    assert h_hat.shape == new_m.shape == (4, 3, 3)
    assert np.all(np.abs(h_hat.data) < 1.0)


# ============================================================================
# FORECASTER
# ============================================================================

@pytest.mark.parametrize("cell", ["convlstm", "cbam", "sa"])
def test_rollout_shape_and_range(cell, rng):
    model = CloudForecaster(CloudNetSpec(cell=cell, num_layers=2, hidden_channels=2, cbam_reduction=1, cbam_kernel=3))
    out = rollout(model, rng.uniform(size=(6, 6, 6)), horizon=6)
    assert out.shape == (6, 6, 6)
    assert out.min() >= 0.0 and out.max() <= 1.0
    batched = rollout(model, rng.uniform(size=(2, 6, 6, 6)), horizon=3)
    assert batched.shape == (2, 3, 6, 6)


def test_rollout_rejects_bad_horizon(rng):
    with pytest.raises(ConfigurationError):
        rollout(PersistenceCloudModel(), rng.uniform(size=(6, 4, 4)), horizon=0)


def test_persistence_rollout_repeats_last_frame(rng):
    frames = rng.uniform(size=(6, 5, 5))
    out = rollout(PersistenceCloudModel(), frames, horizon=6)
    for k in range(6):
        np.testing.assert_array_equal(out[k], frames[-1])


def test_rollout_is_deterministic(rng):
    spec = CloudNetSpec(cell="sa", hidden_channels=2, seed=11)
    frames = rng.uniform(size=(6, 4, 4))
    np.testing.assert_array_equal(rollout(CloudForecaster(spec), frames), rollout(CloudForecaster(spec), frames))


def test_teacher_forced_returns_horizon_predictions(rng):
    model = CloudForecaster(CloudNetSpec(hidden_channels=2))
    preds = teacher_forced(model, rng.uniform(size=(2, 12, 4, 4)), n_inputs=6)
    assert len(preds) == 6
    assert all(p.shape == (2, 1, 4, 4) and p.requires_grad for p in preds)


def test_forecaster_save_load(tmp_path, rng):
    model = CloudForecaster(CloudNetSpec(cell="cbam", hidden_channels=2, cbam_reduction=1, cbam_kernel=3, seed=4))
    frames = rng.uniform(size=(6, 5, 5))
    model.save(tmp_path / "cloud_m1.ckpt")
    loaded = load_cloud_model("m1", tmp_path)
    np.testing.assert_array_equal(rollout(model, frames), rollout(loaded, frames))


def test_load_cloud_model_resolution(tmp_path):
    assert isinstance(load_cloud_model("persistence"), PersistenceCloudModel)
    with pytest.raises(MissingArtifactError):
        load_cloud_model("absent", tmp_path)


# ============================================================================
# LOOP ORACLES
# ============================================================================

def sig(v):
    return 1.0 / (1.0 + np.exp(-v))


def conv_oracle(x, w, b=None):
    """Same-padded cross-correlation written out element by element"""
    out_ch, in_ch, kh, kw = w.shape
    _, height, width = x.shape
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    out = np.zeros((out_ch, height, width))
    for o in range(out_ch):
        for r in range(height):
            for c in range(width):
                total = 0.0 if b is None else b[o]
                for ci in range(in_ch):
                    for i in range(kh):
                        for j in range(kw):
                            rr, cc = r + i - ph, c + j - pw
                            if 0 <= rr < height and 0 <= cc < width:
                                total += x[ci, rr, cc] * w[o, ci, i, j]
                out[o, r, c] = total
    return out


def numpy_params(module):
    return {name: p.data for name, p in module.parameters().items()}


def cbam_oracle(feature, prm):
    channels, height, width = feature.shape

    def mlp(v):
        hidden = np.maximum(prm["mlp_w1"] @ v + prm["mlp_b1"], 0.0)
        return prm["mlp_w2"] @ hidden + prm["mlp_b2"]

    avg = np.array([feature[c].mean() for c in range(channels)])
    mx = np.array([feature[c].max() for c in range(channels)])
    channel = sig(mlp(avg) + mlp(mx))
    refined = np.stack([channel[c] * feature[c] for c in range(channels)])

    descriptor = np.zeros((2, height, width))
    for r in range(height):
        for c in range(width):
            descriptor[0, r, c] = refined[:, r, c].mean()
            descriptor[1, r, c] = refined[:, r, c].max()
    spatial = sig(conv_oracle(descriptor, prm["spatial_w"]))[0]
    return np.stack([spatial * refined[c] for c in range(channels)])


def lstm_oracle(x, h, c, prm, transform=lambda key, term: term):
    pre = {}
    for gate in "ifoc":
        hh = transform(f"{gate}h", conv_oracle(h, prm[f"w_{gate}h"]))
        xx = transform(f"{gate}x", conv_oracle(x, prm[f"w_{gate}x"]))
        pre[gate] = hh + xx + prm[f"b_{gate}"][:, None, None]
    i, f, o = sig(pre["i"]), sig(pre["f"]), sig(pre["o"])
    c_next = i * np.tanh(pre["c"]) + f * c
    return o * np.tanh(c_next), c_next


def memory_oracle(h, m, prm):
    def proj(name, v):
        return conv_oracle(v, prm[f"{name}_w"], prm[f"{name}_b"])

    query = proj("query_h", h)
    z_h, _ = attend_oracle(query, proj("key_h", h), proj("value_h", h))
    z_m, _ = attend_oracle(query, proj("key_m", m), proj("value_m", m))
    z = proj("mix", np.concatenate([z_h, z_m], axis=0))

    def gate(name):
        return conv_oracle(h, prm[f"w_{name}h"]) + conv_oracle(z, prm[f"w_{name}z"]) + prm[f"b_{name}"][:, None, None]

    i_gate, o_gate = sig(gate("i")), sig(gate("o"))
    m_next = i_gate * np.tanh(gate("m")) + (1.0 - i_gate) * m
    return o_gate * np.tanh(m_next), m_next


def run_cell(cell, frames, state):
    for frame in frames:
        state = cell(Tensor(frame), state)
    return state


def random_state(rng, shape, with_memory=False):
    return CellState(
        h=Tensor(rng.uniform(-0.5, 0.5, size=shape)),
        c=Tensor(rng.uniform(-1.0, 1.0, size=shape)),
        m=Tensor(rng.uniform(-1.0, 1.0, size=shape)) if with_memory else None,
    )


def test_convlstm_matches_loop_oracle(rng):
    cell = ConvLSTMCell(2, 3, 3, rng)
    frames = rng.uniform(size=(3, 2, 4, 5))
    prm = numpy_params(cell)
    h, c = np.zeros((3, 4, 5)), np.zeros((3, 4, 5))
    for frame in frames:
        h, c = lstm_oracle(frame, h, c, prm)
    out = run_cell(cell, frames, cell.initial_state((4, 5)))
    np.testing.assert_allclose(out.h.data, h, atol=1e-12)
    np.testing.assert_allclose(out.c.data, c, atol=1e-12)


def test_cbam_convlstm_matches_loop_oracle(rng):
    cell = CBAMConvLSTMCell(1, 4, 3, rng, reduction=2, spatial_kernel=3)
    frames = rng.uniform(size=(2, 1, 4, 4))
    prm = numpy_params(cell)
    cbam_prm = {key: numpy_params(cbam) for key, cbam in cell.cbams.items()}
    h, c = np.zeros((4, 4, 4)), np.zeros((4, 4, 4))
    for frame in frames:
        h, c = lstm_oracle(frame, h, c, prm, transform=lambda key, term: cbam_oracle(term, cbam_prm[key]))
    out = run_cell(cell, frames, cell.initial_state((4, 4)))
    np.testing.assert_allclose(out.h.data, h, atol=1e-12)
    np.testing.assert_allclose(out.c.data, c, atol=1e-12)


def test_sa_convlstm_matches_loop_oracle(rng):
    cell = SAConvLSTMCell(1, 2, 3, rng)
    frames = rng.uniform(size=(2, 1, 3, 3))
    prm = numpy_params(cell)
    sam_prm = numpy_params(cell.memory)
    h, c, m = np.zeros((2, 3, 3)), np.zeros((2, 3, 3)), np.zeros((2, 3, 3))
    for frame in frames:
        h_lstm, c = lstm_oracle(frame, h, c, prm)
        h, m = memory_oracle(h_lstm, m, sam_prm)
    out = run_cell(cell, frames, cell.initial_state((3, 3)))
    np.testing.assert_allclose(out.h.data, h, atol=1e-12)
    np.testing.assert_allclose(out.c.data, c, atol=1e-12)
    np.testing.assert_allclose(out.m.data, m, atol=1e-12)


def test_cbam_matches_loop_oracle(rng):
    cbam = CBAM(4, rng, reduction=2, spatial_kernel=3)
    feature = rng.normal(size=(4, 5, 4))
    np.testing.assert_allclose(cbam(Tensor(feature)).data, cbam_oracle(feature, numpy_params(cbam)), atol=1e-12)


# ============================================================================
# WORKED EXAMPLES
# ============================================================================

def zero_parameters(module):
    module.load_state_dict({name: np.zeros(p.shape) for name, p in module.parameters().items()})


def test_zero_parameter_convlstm_halves_the_cell_state(rng):
    cell = ConvLSTMCell(1, 3, 3, rng)
    zero_parameters(cell)
    state = random_state(rng, (3, 4, 4))
    gates = cell.gates(Tensor(rng.uniform(size=(1, 4, 4))), state)
    for name in "ifo":
        np.testing.assert_array_equal(gates[name].data, 0.5)
    np.testing.assert_array_equal(gates["c"].data, 0.0)
    out = cell(Tensor(rng.uniform(size=(1, 4, 4))), state)
    np.testing.assert_allclose(out.c.data, 0.5 * state.c.data, atol=1e-15)
    np.testing.assert_allclose(out.h.data, 0.5 * np.tanh(0.5 * state.c.data), atol=1e-15)


def test_zero_memory_parameters_halve_the_memory(rng):
    cell = SAConvLSTMCell(1, 2, 3, rng)
    zero_parameters(cell.memory)
    state = random_state(rng, (2, 3, 3), with_memory=True)
    out = cell(Tensor(rng.uniform(size=(1, 3, 3))), state)
    np.testing.assert_allclose(out.m.data, 0.5 * state.m.data, atol=1e-15)
    np.testing.assert_allclose(out.h.data, 0.5 * np.tanh(0.5 * state.m.data), atol=1e-15)


def test_cbam_on_constant_input(rng):
    cbam = CBAM(4, rng, reduction=2, spatial_kernel=3)
    prm = numpy_params(cbam)
    value = 0.7
    feature = np.full((4, 5, 5), value)
    channel = cbam.channel_attention(Tensor(feature)).data
    descriptor = np.full(4, value)
    mlp = prm["mlp_w2"] @ np.maximum(prm["mlp_w1"] @ descriptor + prm["mlp_b1"], 0.0) + prm["mlp_b2"]
    np.testing.assert_allclose(channel, np.broadcast_to(sig(2.0 * mlp)[:, None, None], feature.shape), atol=1e-12)

    out = cbam(Tensor(feature)).data
    assert np.all(out > 0.0) and np.all(out < value)
    # away from the zero padding the spatial map is constant too
    interior = out[:, 1:-1, 1:-1]
    np.testing.assert_allclose(interior, np.broadcast_to(interior[:, :1, :1], interior.shape), atol=1e-12)


def test_cbam_spatial_map_on_duplicated_channels(rng):
    cbam = CBAM(3, rng, reduction=1, spatial_kernel=3)
    base = rng.normal(size=(4, 4))
    feature = np.stack([base, base, base])
    spatial = cbam.spatial_attention(Tensor(feature)).data
    expected = sig(conv_oracle(np.stack([base, base]), cbam.w_spatial.data))[0]
    for c in range(3):
        np.testing.assert_allclose(spatial[c], expected, atol=1e-12)

    # copies stay copies when the channel MLP treats both channels alike
    cbam.w2.data[1] = cbam.w2.data[0]
    cbam.b2.data[1] = cbam.b2.data[0]
    feature[2] = rng.normal(size=(4, 4))
    out = cbam(Tensor(feature)).data
    np.testing.assert_allclose(out[0], out[1], atol=1e-14)
    assert not np.allclose(out[0], out[2])


# ============================================================================
# GATES AND GRADIENTS
# ============================================================================

@pytest.mark.parametrize("kind", ["convlstm", "cbam", "sa"])
def test_gates_stay_in_range(kind, rng):
    cell = build_cell(kind, 1, 3, 3, rng, cbam_reduction=1, cbam_kernel=3)
    state = random_state(rng, (3, 4, 4), with_memory=cell.with_memory)
    gates = cell.gates(Tensor(rng.normal(scale=5.0, size=(1, 4, 4))), state)
    for name in "ifo":
        assert np.all((gates[name].data >= 0.0) & (gates[name].data <= 1.0))
    assert np.all(np.abs(gates["c"].data) <= 1.0)
    out = cell(Tensor(rng.normal(scale=5.0, size=(1, 4, 4))), state)
    assert np.all(np.abs(out.h.data) <= 1.0)
    if kind == "sa":
        h_lstm, _ = cell.lstm_update(Tensor(rng.normal(size=(1, 4, 4))), state)
        z, _ = cell.memory.aggregate(h_lstm, state.m)
        for name in "io":
            gate = cell.memory._gate(name, h_lstm, z).sigmoid().data
            assert np.all((gate >= 0.0) & (gate <= 1.0))


@pytest.mark.parametrize("kind", ["convlstm", "cbam", "sa"])
def test_every_parameter_receives_gradient(kind, rng):
    cell = build_cell(kind, 1, 4, 3, rng, cbam_reduction=1, cbam_kernel=3)
    frames = rng.uniform(size=(2, 2, 1, 4, 4))
    out = run_cell(cell, frames, cell.initial_state((4, 4), batch=2))
    w_h, w_c = rng.normal(size=out.h.shape), rng.normal(size=out.c.shape)
    ((out.h * Tensor(w_h)).sum() + (out.c * Tensor(w_c)).sum()).backward()
    # a key bias shifts every score of a query equally, which the softmax ignores
    shift_invariant = {"sam.key_h_b", "sam.key_m_b"}
    for name, param in cell.parameters().items():
        if name in shift_invariant:
            np.testing.assert_allclose(param.grad, 0.0, atol=1e-10)
            continue
        assert param.grad is not None, name
        assert np.any(param.grad != 0.0), name
