import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rotatorlab.equilibria import EqClass, find_equilibria
from rotatorlab.integrate import integrate
from rotatorlab.model import TWO_PI, case_i, case_ii, sinusoidal, torus_distance
from rotatorlab.portrait import (DISSIPATIVE, LIBRATION, ROTATION, UNDETERMINED, ClassifyConfig,
                                 ConnectionTemplate, NoSignChange, NotClosed, RegionLabel,
                                 RegionMap, classify_cell, compute_separatrices, connection_miss,
                                 find_connection, region_map, reversal_image_label,
                                 reversal_index, saddle_directions, scan_miss, shoelace_area,
                                 sign_changes, thread_count, winding_numbers)

UNIFORM = sinusoidal(1.0, 1.0, 0.0, 0.0, 0.0, 0.0)
SINK = np.array([2 * math.pi / 3, 2 * math.pi / 3])


def fix_r_saddles(system):
    return sorted((e for e in find_equilibria(system)
                   if e.kind is EqClass.SADDLE and e.membership.in_fix_r),
                  key=lambda e: e.position[0])


# --- winding numbers ------------------------------------------------------------------

def test_winding_of_uniform_rotation():
    tr = integrate(UNIFORM, (0.3, 1.0), TWO_PI)
    assert winding_numbers(tr) == (1, 1)


def test_winding_of_libration_loop():
    t = np.linspace(0.0, TWO_PI, 200)
    loop = np.column_stack([2.0 + 0.3 * np.cos(t), 1.0 + 0.3 * np.sin(t)])
    assert winding_numbers(loop) == (0, 0)
    assert shoelace_area(loop[:-1]) > 0


def test_winding_rejects_open_paths():
    with pytest.raises(NotClosed):
        winding_numbers(np.array([[0.0, 0.0], [1.0, 0.5]]))


# --- separatrices ---------------------------------------------------------------------

def test_unstable_branches_reach_the_sink():
    sys = case_i(0.5, 1.0, 0.2)
    eqs = find_equilibria(sys)
    sink_idx = next(i for i, e in enumerate(eqs) if e.kind is EqClass.SINK)
    for saddle in fix_r_saddles(sys):
        seps = compute_separatrices(sys, saddle, 200.0, eqs)
        assert [s.branch for s in seps] == ["unstable+", "unstable-", "stable+", "stable-"]
        for s in seps[:2]:
            assert s.termination == "reachesEquilibrium" and s.target == sink_idx
        d = float(torus_distance(seps[0].path.y[0], saddle.position))
        assert abs(d - 1e-6) < 1e-9


def test_structurally_stable_homoclinic():
    sys = case_i(1.5, 1.0, 1.2)
    eqs = find_equilibria(sys)
    found = False
    for saddle in fix_r_saddles(sys):
        for s in compute_separatrices(sys, saddle, 200.0, eqs):
            if s.termination == "closesHomoclinic":
                found = True
                assert abs(((s.crossing[0] + s.crossing[1]) + math.pi) % TWO_PI - math.pi) < 1e-9
    assert found


def test_separatrices_need_a_saddle():
    sys = case_i(0.5, 1.0, 0.2)
    sink = next(e for e in find_equilibria(sys) if e.kind is EqClass.SINK)
    with pytest.raises(ValueError):
        compute_separatrices(sys, sink)


def test_saddle_direction_convention():
    sys = case_i(0.5, 1.0, 0.2)
    for saddle in fix_r_saddles(sys):
        u, s = saddle_directions(saddle)
        assert u[0] >= 0 and s[0] >= 0
        ju = saddle.jacobian @ u
        assert np.allclose(ju / np.linalg.norm(ju), u, atol=1e-10)


# --- cell classification ----------------------------------------------------------------

def test_cell_near_sink_is_dissipative():
    lab = classify_cell(case_i(0.5, 1.0, 0.2), SINK + 0.05)
    assert lab.kind == DISSIPATIVE and lab.sink == 0


def test_cell_in_oscillatory_regime_rotates():
    lab = classify_cell(case_i(1.5, 1.0, 0.3), (0.7, 4.0))
    assert lab.kind == ROTATION and (lab.p, lab.q) == (1, 1)
    assert lab.closure < 1e-6


def test_cell_inside_libration_pocket():
    sys = case_i(1.5, 1.0, 1.2)
    center = next(e for e in find_equilibria(sys) if e.kind is EqClass.CENTER).position
    lab = classify_cell(sys, center + np.array([0.05, -0.02]))
    assert lab.kind == LIBRATION and lab.orientation in ("CW", "CCW")


def test_cell_in_non_reversible_field():
    sys = sinusoidal(1.07, 1.13, 1.0, 1.0, 1.0, -1.0)
    lab = classify_cell(sys, (0.1, 0.2), ClassifyConfig(t_max=600.0, transient=300.0))
    assert lab.kind == ROTATION and lab.p != lab.q and lab.p > 0


def test_region_label_invariants():
    with pytest.raises(ValueError):
        RegionLabel(ROTATION)
    with pytest.raises(ValueError):
        RegionLabel(LIBRATION, p=1, q=0, orientation="CW")
    assert RegionLabel(LIBRATION, orientation="CW").code == "libration_cw"
    assert RegionLabel(ROTATION, p=1, q=1, closure=1e-9) == RegionLabel(ROTATION, p=1, q=1)


# --- region maps -------------------------------------------------------------------------

def test_purely_dissipative_map():
    rm = region_map(case_i(0.5, 1.0, 0.2), 16)
    assert rm.fraction(DISSIPATIVE) == 1.0


def test_fully_conservative_map():
    rm = region_map(case_i(1.5, 1.0, 0.3), 16)
    assert rm.count(DISSIPATIVE) == 0 and rm.count(UNDETERMINED) == 0


def test_counter_rotating_regions():
    rm = region_map(case_ii(0.5, 1.0, 2.0), 16)
    windings = {(lab.p, lab.q) for lab in rm.labels if lab.kind == ROTATION}
    assert (1, 1) in windings and (-1, -1) in windings


@pytest.mark.parametrize("params", [(0.5, 1.0, 2.0), (1.5, 1.0, 1.2)])
def test_map_respects_the_reversal(params):
    n = 24
    rm = region_map(case_i(*params), n)
    for i in range(n):
        for j in range(n):
            img = rm.label_at(*reversal_index(i, j, n))
            assert reversal_image_label(rm.label_at(i, j)).key() == img.key()


@given(i=st.integers(0, 63), j=st.integers(0, 63))
def test_reversal_index_is_an_involution(i, j):
    assert reversal_index(*reversal_index(i, j, 64), 64) == (i, j)


def test_map_validation_and_threads(monkeypatch):
    with pytest.raises(ValueError):
        region_map(UNIFORM, 8)
    monkeypatch.setenv("ROTATORLAB_THREADS", "3")
    assert thread_count() == 3
    a = region_map(case_i(0.5, 1.0, 2.0), 16, threads=1)
    b = region_map(case_i(0.5, 1.0, 2.0), 16, threads=2)
    assert [x.key() for x in a.labels] == [y.key() for y in b.labels]


def synthetic_map(rows):
    n = len(rows)
    table = {"d": RegionLabel(DISSIPATIVE, sink=0),
             "L": RegionLabel(LIBRATION, orientation="CW"),
             "R": RegionLabel(ROTATION, p=1, q=1)}
    labels = [table[rows[n - 1 - j][i]] for i in range(n) for j in range(n)]
    return RegionMap((n, n), (0.0, TWO_PI, 0.0, TWO_PI), {}, labels, np.zeros((0, 2)))


def test_components_grid_and_torus():
    rm = synthetic_map(["Ldddddd",
                        "ddddddd",
                        "dddRddd",
                        "dddRddd",
                        "ddddddd",
                        "ddddddd",
                        "Ldddddd"])
    assert len(rm.components(LIBRATION)) == 2
    assert len(rm.components(LIBRATION, periodic=True)) == 1
    assert len(rm.components(ROTATION)) == 1
    assert sum(len(c) for c in rm.components()) == 49


def test_region_csv(tmp_path):
    rm = region_map(case_i(1.5, 1.0, 0.3), 16)
    path = tmp_path / "r.csv"
    rm.to_csv(path)
    lines = path.read_text().splitlines()
    assert lines[0] == "i,j,phi1,phi2,label,p,q,closure_dist"
    assert len(lines) == 257
    assert lines[1].split(",")[4] == "rotation"


# --- saddle connections ---------------------------------------------------------------------

def orange_template():
    sys = case_i(0.556, 1.0, 1.0)
    src, tgt = fix_r_saddles(sys)[::-1]
    return ConnectionTemplate(lambda w: case_i(w, 1.0, 1.0), src.position, tgt.position,
                              "unstable+")


def test_connection_found_and_miss_changes_sign():
    tpl = orange_template()
    res = find_connection(tpl, (0.52, 0.60))
    assert abs(res.miss) < 1e-8
    assert not res.degenerate_family
    lo, hi = tpl.miss(res.value - 1e-2), tpl.miss(res.value + 1e-2)
    assert lo * hi < 0
    assert abs(tpl.miss(res.value)) < 1e-6


def test_same_sign_bracket():
    with pytest.raises(NoSignChange):
        find_connection(orange_template(), (0.57, 0.60))


def test_scan_and_sign_changes():
    tpl = orange_template()
    vals = [0.50, 0.53, 0.56, 0.59]
    misses = scan_miss(tpl, vals)
    assert sign_changes(vals, misses) == [(0.53, 0.56)]


def test_symmetry_protected_family_at_zero_frequency():
    sys = case_i(0.0, 1.0, 1.0)
    first, second = fix_r_saddles(sys)[:2]
    tpl = ConnectionTemplate(lambda k: case_i(0.0, 1.0, k), first.position, second.position,
                             "unstable-")
    res = find_connection(tpl, (1.0, 1.5))
    assert res.degenerate_family


def test_fix_r_orthogonality_measure():
    rev = case_i(1.5, 1.0, 1.2)
    saddle = fix_r_saddles(rev)[0]
    assert abs(connection_miss(rev, saddle, "fixR", "unstable+")) < 1e-9
    broken = sinusoidal(1.45, 1.55, 1.0, 1.0, 1.2, -1.2)
    eqs = [e for e in find_equilibria(broken) if e.kind is EqClass.SADDLE]
    values = []
    for e in eqs:
        for branch in ("unstable+", "unstable-"):
            try:
                values.append(abs(connection_miss(broken, e, "fixR", branch)))
            except Exception:
                pass
    assert values and max(values) > 1e-4
    with pytest.raises(ValueError):
        connection_miss(rev, saddle, "elsewhere")
