import json
import math

import numpy as np
import pytest

import beamtomo as bt


def test_kinds_and_examples():
    kinds = bt.kinds()
    assert "forward" in kinds and "recover-b" in kinds
    for k in kinds:
        cfg = json.loads(bt.example_config(k))
        assert cfg["kind"] == k
        assert bt.resolve_config(json.dumps(cfg)) == bt.resolve_config(bt.resolve_config(json.dumps(cfg)))


def test_config_error_names_key():
    with pytest.raises(bt.ConfigError, match="grid"):
        bt.resolve_config('{"kind": "forward", "grdi": {}}')


def test_selftest():
    rc, text = bt.selftest()
    assert rc == 0
    assert "FAIL" not in text


def test_gaussian_fourier():
    P = np.array([[2.0, 0.3], [0.3, 1.0]])
    xi = np.array([0.7, -0.4])
    exact = 2 * math.pi / math.sqrt(np.linalg.det(P)) * math.exp(-0.5 * xi @ np.linalg.solve(P, xi))
    assert bt.gaussian_fourier(P, xi) == pytest.approx(exact, rel=1e-12)
    assert abs(bt.gaussian_fourier_quadrature(P, xi, 10.0) - exact) < 1e-8


def test_extrapolate():
    s = [16.0, 32.0, 64.0, 128.0, 256.0]
    v = [1.5 + 0.3 / math.sqrt(x) - 2.0 / x for x in s]
    e = bt.extrapolate(s, v)
    assert e.limit == pytest.approx(1.5, abs=1e-10)


def test_cone_quadruple():
    q = bt.cone_quadruple(1.0, np.array([0.5, 0.5]), 0.0, 0.6)
    assert np.allclose(q.k, [-0.2, -1.8, 1.0, 1.0])
    assert q.null_defect() < 1e-12 and q.balance_defect() < 1e-12


def test_weight_and_cutoff():
    w = bt.build_weight(bt.Domain.interval(0.0, 1.0), np.array([-0.5, 0.0]), 0.7, 0.0, 0.5, 2.0, 201)
    assert w.T_star == pytest.approx(1.5, rel=1e-6)
    assert w.property1() and w.property2()
    with pytest.raises(bt.CriticalPointError):
        bt.build_weight(bt.Domain.interval(0.0, 1.0), np.array([0.5, 0.0]), 0.7, 0.0, 0.5, 2.0)
    chi = bt.cutoff_chi(2.0, 0.3)
    assert chi(0.0) == 1.0 and chi(1.7) == 0.0


def test_forward_run(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"kind": "forward"}')
    rc, _ = bt.run(str(cfg), str(tmp_path / "out"))
    assert rc == 0
    rep = json.loads((tmp_path / "out" / "report.json").read_text())
    assert rep["kind"] == "forward"
