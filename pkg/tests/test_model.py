import math

import numpy as np
import pytest

from spheromc.model import (
    FirstOrderSink,
    MediumModel,
    SphericalCoord,
    SpheroidGeometry,
    boundary_jump,
    effective_diffusion,
    porosity,
    tortuosity,
)

R_S = 275e-6
V_C = 3.14e-15
N_C = 24000
TX = SphericalCoord(500e-6, math.pi / 2, 0.0)


def test_porosity_reference_configuration():
    eps = porosity(N_C, V_C, R_S)
    assert eps == pytest.approx(0.135, abs=5e-4)
    assert round(eps, 2) == 0.13


def test_porosity_trivial_cases():
    assert porosity(0, 1e-15, R_S) == 1.0
    v_s = 4 / 3 * math.pi * R_S**3
    assert porosity(1, v_s, R_S) == pytest.approx(0.0, abs=1e-15)


def test_porosity_rejects_bad_inputs():
    with pytest.raises(ValueError):
        porosity(100, 1e-15, 0.0)
    with pytest.raises(ValueError):
        porosity(100, 1e-15, -1e-6)
    v_s = 4 / 3 * math.pi * R_S**3
    with pytest.raises(ValueError):
        porosity(2, v_s, R_S)


def test_tortuosity_values():
    assert tortuosity(1.0) == 1.0
    assert tortuosity(0.25) == 2.0
    assert tortuosity(0.135) == pytest.approx(0.135**-0.5, rel=1e-14)
    with pytest.raises(ValueError):
        tortuosity(0.0)


def test_effective_diffusion():
    assert effective_diffusion(1e-9, 1.0) == 1e-9
    assert effective_diffusion(1e-9, 0.25) == pytest.approx(0.125e-9, rel=1e-14)
    assert effective_diffusion(1e-9, 0.135) == pytest.approx(4.96e-11, rel=1e-2)
    with pytest.raises(ValueError):
        effective_diffusion(-1e-9, 0.5)
    with pytest.raises(ValueError):
        effective_diffusion(1e-9, 0.0)


def test_boundary_jump_reference_value():
    eps = porosity(N_C, V_C, R_S)
    k = boundary_jump(1e-9, effective_diffusion(1e-9, eps))
    assert k == pytest.approx(4.49, abs=0.01)


def test_boundary_jump_trivial_and_errors():
    assert boundary_jump(1e-9, 1e-9) == 1.0
    assert boundary_jump(1.0, effective_diffusion(1.0, 0.0625)) == pytest.approx(8.0, rel=1e-12)
    with pytest.raises(ValueError):
        boundary_jump(1e-9, 2e-9)
    with pytest.raises(ValueError):
        boundary_jump(1e-9, 0.0)


def test_composition_identity_over_porosity_range():
    # boundary_jump(d, effective_diffusion(d, eps)) == eps**-0.75
    for eps in np.linspace(0.01, 1.0, 50):
        k = boundary_jump(1e-9, effective_diffusion(1e-9, eps))
        assert k == pytest.approx(eps**-0.75, rel=1e-12)


def test_monotonicity():
    eps_values = [porosity(n, V_C, R_S) for n in range(15000, 25001, 500)]
    assert all(a > b for a, b in zip(eps_values, eps_values[1:]))
    k_values = [eps**-0.75 for eps in eps_values]
    assert all(a < b for a, b in zip(k_values, k_values[1:]))


def test_figure_sweep_endpoint_values():
    # spot regression over the 15000..25000 cell sweep
    eps_lo = porosity(15000, V_C, R_S)
    eps_hi = porosity(25000, V_C, R_S)
    assert eps_lo > eps_hi
    assert eps_hi < 0.13491 < eps_lo


def test_geometry_validation():
    geom = SpheroidGeometry(R_S, N_C, V_C, TX)
    assert geom.porosity == pytest.approx(0.13492, abs=1e-4)
    assert geom.cell_volume_fraction == pytest.approx(1 - geom.porosity)
    with pytest.raises(ValueError):
        SpheroidGeometry(-R_S, N_C, V_C, TX)
    with pytest.raises(ValueError):
        SpheroidGeometry(R_S, N_C, V_C, SphericalCoord(200e-6, 0.0, 0.0))
    v_s = 4 / 3 * math.pi * R_S**3
    with pytest.raises(ValueError):
        SpheroidGeometry(R_S, 1, v_s, TX)


def test_medium_model_construction():
    m = MediumModel.from_porosity(1e-9, 0.25, k_f=0.02)
    assert m.tortuosity == 2.0
    assert m.d_eff == pytest.approx(0.125e-9)
    assert m.jump_k == pytest.approx(0.25**-0.75)
    assert m.k_f == 0.02
    free = MediumModel.from_porosity(1e-9, 1.0)
    assert free.d_eff == free.d_free and free.jump_k == 1.0
    with pytest.raises(ValueError):
        MediumModel.from_porosity(1e-9, 0.25, k_f=-1.0)


def test_from_geometry_matches_pipeline():
    geom = SpheroidGeometry(R_S, N_C, V_C, TX)
    m = MediumModel.from_geometry(1e-9, geom)
    assert m.porosity == geom.porosity
    assert m.jump_k == pytest.approx(4.492, abs=1e-3)


def test_first_order_sink_is_constant_in_frequency():
    sink = FirstOrderSink(0.01)
    assert sink(0.0) == 0.01
    assert sink(3.0 + 2.0j) == 0.01
    with pytest.raises(ValueError):
        FirstOrderSink(-0.5)


def test_spherical_coord_cartesian():
    c = SphericalCoord(2.0, math.pi / 2, 0.0)
    assert np.allclose(c.to_cartesian(), (2.0, 0.0, 0.0), atol=1e-15)
    c = SphericalCoord(1.0, 0.0, 0.3)
    assert np.allclose(c.to_cartesian(), (0.0, 0.0, 1.0), atol=1e-15)
