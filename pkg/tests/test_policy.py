"""MLP policies: parameter layout, forward pass, stream adapter."""

import numpy as np
import pytest

from strata.errors import LengthMismatch
from strata.kernel import Context, LayeredModel, StreamSpec, rng_substream, run_tick
from strata.policy import (
    MlpSpec,
    flatten,
    forward,
    load_policy,
    param_count,
    policy_stream,
    save_policy,
    unflatten,
    weight_schema,
)


class TestParamCount:
    @pytest.mark.parametrize("sizes,expected", [
        ((2, 2), 6),
        ((6, 8, 2), 74),
        ((1, 1), 2),
        ((3, 5, 4, 2), 3 * 5 + 5 + 5 * 4 + 4 + 4 * 2 + 2),
    ])
    def test_counts(self, sizes, expected):
        assert param_count(MlpSpec(sizes)) == expected

    def test_invalid_specs(self):
        with pytest.raises(ValueError):
            MlpSpec((3,))
        with pytest.raises(ValueError):
            MlpSpec((3, 0, 2))
        with pytest.raises(ValueError):
            MlpSpec((2, 2), output="relu")


class TestLayout:
    def test_declared_layout(self):
        # per layer: weight matrix row-major, then bias
        spec = MlpSpec((2, 2))
        layers = unflatten(spec, np.array([1.0, 2, 3, 4, 5, 6]))
        (w, b), = layers
        assert np.array_equal(w, [[1.0, 2.0], [3.0, 4.0]])
        assert np.array_equal(b, [5.0, 6.0])
        assert np.array_equal(flatten(layers), [1, 2, 3, 4, 5, 6])

    def test_zero_vector(self):
        spec = MlpSpec((3, 2))
        for w, b in unflatten(spec, np.zeros(param_count(spec))):
            assert not w.any() and not b.any()

    def test_round_trip_random(self):
        rng = rng_substream(17, "roundtrip")
        for _ in range(1000):
            n_layers = int(rng.integers(2, 5))
            sizes = tuple(int(rng.integers(1, 7)) for _ in range(n_layers))
            spec = MlpSpec(sizes)
            flat = rng.normal(size=param_count(spec))
            again = flatten(unflatten(spec, flat))
            assert again.tobytes() == flat.tobytes()  # bit-exact

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            unflatten(MlpSpec((2, 2)), np.zeros(5))


class TestForward:
    def test_zero_params_sigmoid_half(self):
        spec = MlpSpec((4, 3, 2))
        out = forward(spec, np.zeros(param_count(spec)), np.array([0.3, -1.0, 2.0, 0.0]))
        assert np.allclose(out, 0.5)

    def test_identity_affine(self):
        spec = MlpSpec((1, 1), output="identity")
        out = forward(spec, np.array([2.0, 1.0]), np.array([3.0]))
        assert out[0] == 7.0

    def test_matches_handrolled_oracle(self):
        rng = rng_substream(5, "oracle")
        spec = MlpSpec((2, 2, 1))
        flat = rng.normal(size=param_count(spec))
        x = rng.normal(size=2)

        # independent reconstruction: scalar arithmetic, no reshape helpers
        w1_11, w1_12, w1_21, w1_22, b1_1, b1_2, w2_1, w2_2, b2 = flat
        h1 = np.tanh(w1_11 * x[0] + w1_12 * x[1] + b1_1)
        h2 = np.tanh(w1_21 * x[0] + w1_22 * x[1] + b1_2)
        z = w2_1 * h1 + w2_2 * h2 + b2
        expected = 1.0 / (1.0 + np.exp(-z))

        out = forward(spec, flat, x)
        assert abs(out[0] - expected) < 1e-12

    def test_sigmoid_open_interval(self):
        rng = rng_substream(6, "interval")
        spec = MlpSpec((3, 4, 2))
        for _ in range(50):
            out = forward(spec, rng.normal(size=param_count(spec)), rng.normal(size=3))
            assert np.all((out > 0.0) & (out < 1.0))

    def test_deterministic(self):
        spec = MlpSpec((3, 4, 2))
        flat = rng_substream(7, "det").normal(size=param_count(spec))
        x = np.array([0.1, 0.2, 0.3])
        assert np.array_equal(forward(spec, flat, x), forward(spec, flat, x))

    def test_input_errors(self):
        spec = MlpSpec((2, 1))
        with pytest.raises(LengthMismatch):
            forward(spec, np.zeros(param_count(spec)), np.zeros(3))
        with pytest.raises(ValueError):
            forward(spec, np.zeros(param_count(spec)), np.array([np.nan, 0.0]))

    def test_parameter_perturbation_bounded(self):
        # finite-difference sensitivity stays well under 1e3 per unit step
        rng = rng_substream(8, "lipschitz")
        spec = MlpSpec((3, 5, 2))
        flat = rng.normal(size=param_count(spec))
        x = rng.normal(size=3)
        base = forward(spec, flat, x)
        eps = 1e-6
        for idx in range(0, param_count(spec), 7):
            bumped = flat.copy()
            bumped[idx] += eps
            delta = np.max(np.abs(forward(spec, bumped, x) - base))
            assert delta < 1e3 * eps


class TestPolicyFile:
    def test_round_trip(self, tmp_path):
        spec = MlpSpec((6, 8, 2))
        flat = rng_substream(9, "file").normal(size=param_count(spec))
        path = tmp_path / "policy.json"
        save_policy(path, spec, flat)
        spec2, flat2 = load_policy(path)
        assert spec2 == spec
        assert np.array_equal(flat, flat2)

    def test_corrupt_length_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"layer_sizes": [2, 2], "output": "sigmoid", "params": [0, 0]}')
        with pytest.raises(LengthMismatch):
            load_policy(path)


class TestWeightSchema:
    def test_shape_and_range(self):
        schema = weight_schema(74)
        assert len(schema) == 74
        assert schema.genes[0].lo == -3.0 and schema.genes[0].hi == 3.0
        assert len({g.name for g in schema.genes}) == 74


class TestPolicyStream:
    def test_reads_inputs_in_order_and_writes_outputs(self):
        spec = MlpSpec((2, 2), output="identity")
        # W = [[1, 0], [0, 1]], b = [0, 0]: output mirrors input order
        flat = np.array([1.0, 0, 0, 1, 0, 0])
        stream = policy_stream("pol", 2, spec, flat, ["IN.a", "IN.b"], ["OUT.a", "OUT.b"])
        assert stream.layer == 2
        feeder = StreamSpec(id="feed", layer=1, writes=frozenset({"IN.a", "IN.b"}),
                            step=lambda v, r: {"IN.a": 3.0, "IN.b": -2.0})
        model = LayeredModel([feeder, stream])
        rngs = {s.id: rng_substream(0, s.id) for s in model.streams}
        out, _ = run_tick(model, Context.from_dict({}), rngs)
        assert out.entries["OUT.a"] == 3.0
        assert out.entries["OUT.b"] == -2.0

    def test_key_count_must_match(self):
        spec = MlpSpec((2, 2))
        flat = np.zeros(param_count(spec))
        with pytest.raises(LengthMismatch):
            policy_stream("p", 1, spec, flat, ["IN.a"], ["OUT.a", "OUT.b"])
        with pytest.raises(LengthMismatch):
            policy_stream("p", 1, spec, flat, ["IN.a", "IN.b"], ["OUT.a"])
