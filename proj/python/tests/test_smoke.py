import csv
import io
import json
import math

import numpy as np
import pytest

import chernbraid as cb


def test_hamiltonian_is_hermitian():
    spec = cb.LatticeSpec(5, 4, 0.2, 0.05)
    h = cb.build_hamiltonian(spec, [(2.0, 1.5, -1.0, 1.0)])
    assert h.shape == (20, 20)
    assert np.allclose(h, h.conj().T)


def test_plaquette_flux():
    spec = cb.LatticeSpec(6, 6, 0.2, 0.08)
    assert cb.plaquette_flux(spec, 0, 0) == pytest.approx(0.2, abs=1e-12)
    assert cb.plaquette_flux(spec, 2, 2) == pytest.approx(0.22, abs=1e-12)


def test_ground_state_and_density():
    spec = cb.LatticeSpec(2, 2, 0.0)
    s = cb.ground_state(spec, [], 1)
    assert s.total_energy() == pytest.approx(-2.0)
    assert np.allclose(s.density(), 0.25)


def test_projector_and_errors():
    p = cb.lowest_band_projector(cb.LatticeSpec(15, 15, 0.2))
    assert p.dimension() == 44
    with pytest.raises(cb.NoBandGap):
        cb.lowest_band_projector(cb.LatticeSpec(10, 10, 0.0))
    with pytest.raises(cb.InvalidArgument):
        cb.build_hamiltonian(cb.LatticeSpec(1, 4, 0.0))


def test_single_loop_orientation():
    spec = cb.LatticeSpec(9, 9, 0.1, 0.05)
    a = cb.single_loop(spec, -2.0, 1.0, 2.0, n_steps=24)
    b = cb.single_loop(spec, -2.0, 1.0, 2.0, n_steps=24, orientation=-1)
    assert abs(cb.wrap_phase(a.phi_mod + b.phi_mod)) < 1e-10
    assert len(a.step_mags) == 25


def test_fit_charge():
    dphi = [0.0, 0.02, 0.04]
    fit = cb.fit_charge(dphi, [2 * math.pi * 0.7 * d + 1.0 for d in dphi])
    assert fit.q_star == pytest.approx(0.7)


def test_interferometry():
    assert cb.single_impurity_probability(0.3, 0.3) == pytest.approx(1.0)
    phi = 1.1
    p = cb.two_impurity_probability(exchange=complex(math.cos(phi), math.sin(phi)))
    assert p == pytest.approx(math.cos(phi / 2) ** 2 / 4)
    assert cb.nonabelian_probability(1.0, phi) == pytest.approx(p)


def test_run_config():
    config = {
        "experiments": [
            {"id": "ab", "kind": "single_loop_ab", "lattice": {"Lx": 7, "Ly": 7, "alpha": 0.1},
             "pin": {"strength": -2.0, "width": 1.0}, "radii": [1.5], "delta_phi": [0.0, 0.04],
             "n_steps": 16}
        ]
    }
    out = cb.run(json.dumps(config), jobs=1)
    rows = list(csv.DictReader(io.StringIO(out["results_csv"])))
    assert len(rows) == 2
    assert rows[0]["experiment"] == "ab"
    summary = json.loads(out["summary_json"])
    assert summary["provenance"]["config_hash"]
    with pytest.raises(cb.InvalidArgument):
        cb.run(json.dumps({"preset": "fgi2"}))


def test_list_presets():
    names = [n for n, _ in cb.list_presets()]
    assert "fig3" in names
