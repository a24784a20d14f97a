import os

import numpy as np
import pytest

import opf3

FIXTURES = os.environ.get("OPF3_FIXTURE_DIR", os.path.join(os.path.dirname(__file__), "..", "..", "fixtures"))


def fixture(name):
    return os.path.join(FIXTURES, name)


def test_load_and_counts():
    f = opf3.load_feeder(fixture("feeder25.json"))
    assert f.bus_count == 25
    assert f.line_count == 24
    assert f.node_count == 55
    assert f.validate_clustering() == []


def test_bad_clustering_reported():
    f = opf3.load_feeder(fixture("fig2bad.json"))
    assert any("passes through" in v for v in f.validate_clustering())


def test_power_flow_residuals():
    f = opf3.load_feeder(fixture("feeder25.json"))
    res = opf3.solve_power_flow(f, "nonlinear")
    rep = opf3.pf_residual_report(f, res)
    assert rep["max_voltage_eq"] < 1e-8
    assert rep["max_power_balance"] < 1e-8
    assert res.min_vmag < 0.949  # the bundled case is under-voltage


def test_voltage_error_identity():
    f = opf3.load_feeder(fixture("feeder25.json"))
    rep = opf3.voltage_error_decomposition(f)
    assert rep["max_identity_gap"] < 1e-10
    assert min(rep["diag_error"]) >= -1e-12  # lossless model is optimistic


def test_gradients_shape_and_ordering():
    f = opf3.load_feeder(fixture("twobus.json"))
    tabs = opf3.gradient_tables(f)
    fd = opf3.finite_difference_tables(f)
    assert tabs["linear_dv_dp"].shape == (1, 1)
    assert tabs["linear_dv_dp"][0, 0] == pytest.approx(0.02)
    err_imp = abs(tabs["improved_dv_dp"][0, 0] - fd["dv_dp"][0, 0])
    err_lin = abs(tabs["linear_dv_dp"][0, 0] - fd["dv_dp"][0, 0])
    assert err_imp < err_lin


def test_solve_modes_agree():
    f = opf3.load_feeder(fixture("ninebus.json"))
    cen = opf3.solve_opf(f, "improved", "centralized", max_iters=40)
    hier = opf3.solve_opf(f, "improved", "hierarchical", max_iters=40)
    assert cen["iterations"] == hier["iterations"]
    assert cen["min_vmag"] == pytest.approx(hier["min_vmag"], abs=1e-9)
    assert cen["message_scalars"] == 0
    assert hier["message_scalars"] > 0
    du = np.asarray(cen["du_trace"])
    assert du.shape[0] == cen["iterations"]
