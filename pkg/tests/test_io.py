import json
from pathlib import Path

import numpy as np
import pytest

from jlssabs import case_study as cs
from jlssabs import io
from jlssabs.composition import compose
from jlssabs.errors import ConfigInvalid


def test_expressions():
    p = {"d": 0.5}
    assert io.eval_expr("5*d", p) == 2.5
    assert io.eval_expr("-d", p) == -0.5
    assert io.eval_expr("sqrt(4*d) + 2**3", p) == pytest.approx(np.sqrt(2) + 8)
    for bad in ("__import__('os')", "d.real", "e", "[1]", "1 +"):
        with pytest.raises(ConfigInvalid):
            io.eval_expr(bad, p)


def test_empty_matrices_keep_shape():
    assert io.mat([[], [], []]).shape == (3, 0)
    assert io.mat([], rows=2).shape == (2, 0)
    assert io.to_list(np.zeros((3, 0))) == [[], [], []]


def test_network_doc_roundtrip():
    net = cs.build_network(0.25)
    doc = json.loads(json.dumps(io.network_to_doc(net)))
    back = io.network_from_doc(doc)
    for a, b in zip(net.subsystems, back.subsystems):
        for f in "ABCDE":
            assert np.array_equal(getattr(a.sys, f), getattr(b.sys, f))
        assert a.inputs == b.inputs and a.outputs == b.outputs
        assert a.sys.jumps[0][0] == b.sys.jumps[0][0]


def test_parameter_override(tmp_path):
    doc = io.load_json(Path(__file__).parents[1] / "demos" / "data" / "benchmark_network.json")
    net = io.network_from_doc(doc, {"d": 1.0})
    np.testing.assert_array_equal(net["3"].sys.D.ravel(), [0.0, -1.0, 5.0])


def test_abstraction_doc_roundtrip_is_exact(benchmark, tmp_path):
    net, abstractions = benchmark
    for sid, res in abstractions.items():
        path = tmp_path / f"{sid}.json"
        io.dump_json(io.abstraction_to_doc(res, net[sid].sys, sid), path)
        back, sys = io.abstraction_from_doc(io.load_json(path))
        for f in ("M", "K", "P", "Q", "S", "R_tilde"):
            assert np.array_equal(getattr(back.ssf, f), getattr(res.ssf, f)), f
        for f in "ABCDE":
            assert np.array_equal(getattr(back.abs_sys, f), getattr(res.abs_sys, f)), f
            assert np.array_equal(getattr(sys, f), getattr(net[sid].sys, f)), f
        assert back.gains == res.gains
        # a second write is byte-identical
        io.dump_json(io.abstraction_to_doc(back, sys, sid), tmp_path / "again.json")
        assert path.read_bytes() == (tmp_path / "again.json").read_bytes()


def test_certificate_doc_roundtrip(benchmark, tmp_path):
    net, abstractions = benchmark
    cert = compose(net, abstractions, zero_input=("3", "4"))
    io.dump_json(io.certificate_to_doc(cert, abstractions, net), tmp_path / "c.json")
    back, abs_back = io.certificate_from_doc(io.load_json(tmp_path / "c.json"))
    assert np.array_equal(back.mu, cert.mu) and back.radius == cert.radius
    assert back.literal == cert.literal and back.example_mode == cert.example_mode
    assert back.zero_input == ("3", "4") and set(abs_back) == set(cert.ids)


def test_malformed_json(tmp_path):
    p = tmp_path / "x.json"
    p.write_text("{nope")
    with pytest.raises(ConfigInvalid):
        io.load_json(p)
