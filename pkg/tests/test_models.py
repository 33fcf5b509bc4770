import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from masertur import EngineParams, InvalidParams, ModelKind, build_tilted_liouvillian, steady_state
from masertur.errors import DegenerateKernel
from masertur.models import (
    basis_labels,
    cold_current_from_state,
    cold_current_stack,
    generator_stack,
    occupation,
    population_mask,
)
from masertur.sweep import SweepSpec, iter_params

I, II, NIC = ModelKind.THREE_LEVEL_I, ModelKind.THREE_LEVEL_II, ModelKind.FOUR_LEVEL_NIC
FIG2 = EngineParams(gamma_h=0.1, gamma_c=2.0, lam=0.2, n_h=5.0, n_c=0.027)
FIG4 = EngineParams(gamma_h=0.3, gamma_c=0.03, lam=0.2, n_h=6.0, n_c=3.0)


# --- rate equations transcribed by hand, used as independent oracles --------

def rhs_model1(r, q):
    gh, gc, lam, nh, nc = q.gamma_h, q.gamma_c, q.lam, q.n_h, q.n_c
    d = {}
    d["gg"] = gh * (nh + 1) * r["11"] + gc * (nc + 1) * r["00"] - (gh * nh + gc * nc) * r["gg"]
    d["11"] = 1j * lam * (r["10"] - r["01"]) - gh * ((nh + 1) * r["11"] - nh * r["gg"])
    d["00"] = -1j * lam * (r["10"] - r["01"]) - gc * ((nc + 1) * r["00"] - nc * r["gg"])
    d["10"] = 1j * lam * (r["11"] - r["00"]) - 0.5 * (gh * (nh + 1) + gc * (nc + 1)) * r["10"]
    d["01"] = -1j * lam * (r["11"] - r["00"]) - 0.5 * (gh * (nh + 1) + gc * (nc + 1)) * r["01"]
    return d


def rhs_model2(r, q):
    # drive sign on rho_g0 taken from the commutator, consistent with the rho_00 row
    gh, gc, lam, nh, nc = q.gamma_h, q.gamma_c, q.lam, q.n_h, q.n_c
    d = {}
    d["11"] = gh * nh * r["gg"] + gc * nc * r["00"] - (gh * (nh + 1) + gc * (nc + 1)) * r["11"]
    d["00"] = gc * (nc + 1) * r["11"] - gc * nc * r["00"] + 1j * lam * (r["0g"] - r["g0"])
    d["gg"] = gh * (nh + 1) * r["11"] - gh * nh * r["gg"] - 1j * lam * (r["0g"] - r["g0"])
    d["g0"] = 1j * lam * (r["gg"] - r["00"]) - 0.5 * (gh * nh + gc * nc) * r["g0"]
    d["0g"] = -1j * lam * (r["gg"] - r["00"]) - 0.5 * (gh * nh + gc * nc) * r["0g"]
    return d


def rhs_nic(r, q):
    # printed four-level equations; the rho_22 cross term carries the minus sign
    gh, gc, lam, nh, nc, p = q.gamma_h, q.gamma_c, q.lam, q.n_h, q.n_c, q.p
    eh, ec = gh * (nh + 1), gc * (nc + 1)
    d = {}
    d["11"] = (1j * lam * (r["10"] - r["01"]) - gh * ((nh + 1) * r["11"] - nh * r["gg"])
               - 0.5 * p * eh * (r["12"] + r["21"]))
    d["22"] = (1j * lam * (r["20"] - r["02"]) - gh * ((nh + 1) * r["22"] - nh * r["gg"])
               - 0.5 * p * eh * (r["12"] + r["21"]))
    d["00"] = 1j * lam * (r["01"] + r["02"] - r["10"] - r["20"]) - gc * ((nc + 1) * r["00"] - nc * r["gg"])
    d["gg"] = -(d["11"] + d["22"] + d["00"])
    d["12"] = (1j * lam * (r["10"] - r["02"]) - 0.5 * (eh + eh) * r["12"]
               - 0.5 * p * gh * ((nh + 1) * r["11"] + (nh + 1) * r["22"] - (nh + nh) * r["gg"]))
    d["10"] = (1j * lam * (r["11"] - r["00"] + r["12"]) - 0.5 * (ec + eh) * r["10"]
               - 0.5 * p * eh * r["20"])
    d["20"] = (1j * lam * (r["22"] - r["00"] + r["21"]) - 0.5 * (ec + eh) * r["20"]
               - 0.5 * p * eh * r["10"])
    for a, b in (("12", "21"), ("10", "01"), ("20", "02")):
        d[b] = np.conj(d[a])
    return d


RHS = {I: rhs_model1, II: rhs_model2, NIC: rhs_nic}


def random_state(kind, rng):
    """Random Hermitian-structured vector (not necessarily positive)."""
    labels = [b[4:] for b in basis_labels(kind)]
    r = {}
    for lab in labels:
        if lab[0] == lab[1]:
            r[lab] = complex(rng.uniform(0, 1))
        elif lab[::-1] not in r:
            r[lab] = complex(rng.normal(), rng.normal())
            r[lab[::-1]] = np.conj(r[lab])
    return labels, r


def draws(kind, n, seed):
    return list(iter_params(SweepSpec(kind, n, seed, ranges={"n_h": (0.01, 10), "n_c": (0.01, 10)})))


@pytest.mark.parametrize("kind", [I, II, NIC])
def test_generator_matches_rate_equations(kind):
    rng = np.random.default_rng(1)
    for params in draws(kind, 25, 3):
        labels, r = random_state(kind, rng)
        vec = np.array([r[lab] for lab in labels])
        got = generator_stack(kind, params, 0.0) @ vec
        want = RHS[kind](r, params)
        expected = np.array([want[lab] for lab in labels])
        assert np.allclose(got, expected, rtol=0, atol=1e-14 * max(1.0, np.abs(expected).max()))


def test_printed_supermatrix_entries():
    m = build_tilted_liouvillian(I, FIG2.replace(lam=0.5), 0.0).entries
    assert m[0, 1] == pytest.approx(2.054, abs=1e-12)
    assert m[1, 0] == pytest.approx(0.054, abs=1e-12)
    lab = list(basis_labels(I))
    assert lab == ["rho_gg", "rho_00", "rho_11", "rho_10", "rho_01"]


def test_counting_field_dresses_cold_jumps():
    chi = 0.37
    m = build_tilted_liouvillian(I, FIG2, chi).entries
    m0 = build_tilted_liouvillian(I, FIG2, 0.0).entries
    assert m[0, 1] == pytest.approx(m0[0, 1] * np.exp(-1j * chi), rel=1e-15)
    assert m[1, 0] == pytest.approx(m0[1, 0] * np.exp(1j * chi), rel=1e-15)
    off = np.ones_like(m, bool)
    off[0, 1] = off[1, 0] = False
    assert np.array_equal(m[off], m0[off])


@pytest.mark.parametrize("kind", [I, II, NIC])
def test_trace_preservation(kind):
    mask = population_mask(kind)
    for params in iter_params(SweepSpec(kind, 200, 5)):
        m = generator_stack(kind, params, 0.0)
        assert np.abs(mask @ m).max() < 1e-12 * max(1.0, np.abs(m).max())


@pytest.mark.parametrize("kind", [I, II, NIC])
def test_conjugate_rows(kind):
    labels = [b[4:] for b in basis_labels(kind)]
    index = {lab: i for i, lab in enumerate(labels)}
    perm = [index[lab[::-1]] for lab in labels]
    for params in draws(kind, 20, 6):
        m = generator_stack(kind, params, 0.0)
        assert np.allclose(m[perm][:, perm], np.conj(m), atol=0)


def test_nic_p_zero_has_no_cross_terms():
    m = generator_stack(NIC, FIG4, 0.0)
    r = rhs_nic({lab: 0 for lab in ["gg", "00", "11", "22", "12", "21", "10", "01", "20", "02"]}, FIG4)
    assert all(v == 0 for v in r.values())
    labels = [b[4:] for b in basis_labels(NIC)]
    i12, i11, i20, i10 = (labels.index(x) for x in ("12", "11", "20", "10"))
    assert m[i12, i11] == 0 and m[i11, i12] == 0 and m[i10, i20] == 0
    assert generator_stack(NIC, FIG4.replace(p=0.5), 0.0)[i10, i20] != 0


def test_model2_high_temperature_reflection():
    # with spontaneous terms dropped, relabel Model II's g <-> 1 and compare to Model I
    for params in draws(I, 20, 7):
        m1 = generator_stack(I, params, 0.0, spontaneous=False)
        m2 = generator_stack(II, params, 0.0, spontaneous=False)
        lab1 = [b[4:] for b in basis_labels(I)]
        swap = str.maketrans("g1", "1g")
        lab2 = [b[4:].translate(swap) for b in basis_labels(II)]
        # Model II relabelled has states (11, 00, gg, 10, 01) in Model I naming
        perm = [lab2.index(lab) for lab in lab1]
        assert np.allclose(m2[np.ix_(perm, perm)], m1, rtol=0, atol=1e-14)


@pytest.mark.parametrize("kind", [I, II, NIC])
def test_steady_state_physical(kind):
    for params in iter_params(SweepSpec(kind, 1000, 8)):
        st = steady_state(kind, params)
        assert st.violations(1e-9) == []
        resid = generator_stack(kind, params, 0.0) @ st.components
        assert np.linalg.norm(resid) < 1e-10 * max(1.0, np.abs(generator_stack(kind, params)).max())


def test_equilibrium_state_has_no_current():
    params = EngineParams(gamma_h=1.0, gamma_c=1.0, lam=0.3, n_h=1.0, n_c=1.0)
    st = steady_state(I, params)
    assert abs(st["10"]) < 1e-14
    assert st["11"].real == pytest.approx(st["00"].real, abs=1e-14)
    assert st["00"].real / st["gg"].real == pytest.approx(0.5, abs=1e-14)
    assert abs(cold_current_from_state(I, params, st)) < 1e-12


def test_undriven_state_is_thermal():
    params = FIG2.replace(lam=0.0)
    st = steady_state(I, params)
    assert st["10"] == 0
    assert st["00"].real / st["gg"].real == pytest.approx(params.n_c / (params.n_c + 1), rel=1e-12)
    assert st["11"].real / st["gg"].real == pytest.approx(params.n_h / (params.n_h + 1), rel=1e-12)


def test_steady_state_against_time_integration():
    # classical RK4 on the hand-transcribed equations until the derivative is negligible
    labels = [b[4:] for b in basis_labels(I)]
    r = {lab: 0j for lab in labels}
    r["gg"] = 1 + 0j
    h = 0.02
    for _ in range(200_000):
        def f(s):
            return RHS[I](s, FIG2)

        k1 = f(r)
        k2 = f({k: r[k] + 0.5 * h * k1[k] for k in r})
        k3 = f({k: r[k] + 0.5 * h * k2[k] for k in r})
        k4 = f({k: r[k] + h * k3[k] for k in r})
        r = {k: r[k] + h / 6 * (k1[k] + 2 * k2[k] + 2 * k3[k] + k4[k]) for k in r}
        if max(abs(v) for v in f(r).values()) < 1e-12:
            break
    st = steady_state(I, FIG2)
    for lab in labels:
        assert st[lab] == pytest.approx(r[lab], abs=1e-10)


@pytest.mark.parametrize("kind", [I, II, NIC])
def test_stationary_current_matches_dissipator_flux(kind):
    for params in draws(kind, 50, 9):
        rho = steady_state(kind, params).components
        a = cold_current_stack(kind, params, rho)
        b = cold_current_stack(kind, params, rho, stationary=False)
        assert a == pytest.approx(b, rel=1e-6, abs=1e-12)


def test_model1_cold_current_formula():
    st = steady_state(I, FIG2)
    direct = FIG2.gamma_c * ((FIG2.n_c + 1) * st["00"].real - FIG2.n_c * st["gg"].real)
    assert cold_current_from_state(I, FIG2, st) == pytest.approx(direct, rel=1e-12)


def test_nic_dark_state_is_degenerate():
    with pytest.raises(DegenerateKernel):
        steady_state(NIC, FIG4.replace(p=1.0))


@pytest.mark.parametrize("field,value", [("gamma_h", -1.0), ("gamma_c", float("nan")), ("lam", -0.1),
                                         ("n_h", -0.5), ("n_c", float("inf")), ("p", 1.5)])
def test_invalid_params_name_field(field, value):
    with pytest.raises(InvalidParams) as info:
        FIG2.replace(**{field: value})
    assert info.value.field == ("lambda" if field == "lam" else field)


def test_chi_must_be_finite():
    with pytest.raises(InvalidParams):
        build_tilted_liouvillian(I, FIG2, float("nan"))


def test_occupation():
    assert occupation(1.0, 1.0) == pytest.approx(1 / (np.e - 1), rel=1e-14)
    assert occupation(1.0, 1e-3) < 1e-300
    assert occupation(1.0, 1e4) == pytest.approx(1e4, rel=1e-4)
    with pytest.raises(InvalidParams):
        occupation(0.0, 1.0)
    with pytest.raises(InvalidParams):
        occupation(1.0, -1.0)


@settings(max_examples=50, deadline=None)
@given(t1=st.floats(0.05, 50), t2=st.floats(0.05, 50))
def test_occupation_monotone(t1, t2):
    lo, hi = sorted((t1, t2))
    assert occupation(2.0, lo) <= occupation(2.0, hi)


def test_json_roundtrip():
    import json

    L = build_tilted_liouvillian(NIC, FIG4, 0.1)
    data = json.loads(L.to_json())
    assert len(data["basis"]) == 10 and len(data["entries"]) == 10
    back = np.array([[complex(*z) for z in row] for row in data["entries"]])
    assert np.array_equal(back, L.entries)
    st = json.loads(steady_state(I, FIG2).to_json())
    assert st["basis"][0] == "rho_gg"
