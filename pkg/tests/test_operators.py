import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from h2ion.hilbert import BasisState, Cutoffs, ElectronLevel, build_state_space, reachable_subspace
from h2ion.operators import (
    Mode,
    ModelParams,
    assemble_hamiltonian,
    bond_sigma,
    dump_operator,
    electron_detach,
    electron_lower,
    excitation_number,
    hamiltonian_terms,
    ladder_annihilate,
    ladder_create,
    load_operator,
    nuclei_sigma,
    number_operator,
    operator_hash,
    projector,
)

E = ElectronLevel
S0 = BasisState(0, 0, 0, 0, 0, 0, 0, E.Phi0, E.Phi0)


@pytest.fixture(scope="module")
def space():
    return build_state_space()


def ket(space, state):
    v = np.zeros(space.dim, dtype=complex)
    v[space.index[state]] = 1.0
    return v


def image(space, op, state):
    """Nonzero entries of ``op |state>`` as {BasisState: amplitude}."""
    v = op @ ket(space, state)
    return {space.states[i]: v[i] for i in np.flatnonzero(np.abs(v) > 0)}


def test_annihilate_examples(space):
    a = ladder_annihilate(space, Mode.OMEGA12_UP)
    assert image(space, a, S0.replace(p1=1)) == {S0: 1.0}
    out = image(space, a, S0.replace(p1=2))
    assert list(out) == [S0.replace(p1=1)] and out[S0.replace(p1=1)] == pytest.approx(np.sqrt(2), abs=1e-15)
    assert image(space, a, S0) == {}


def test_create_examples(space):
    c = ladder_create(space, "p1")
    assert image(space, c, S0) == {S0.replace(p1=1): 1.0}
    assert image(space, c, S0.replace(p1=1))[S0.replace(p1=2)] == pytest.approx(np.sqrt(2), abs=1e-15)
    assert image(space, c, S0.replace(p1=2)) == {}
    assert abs(c - ladder_annihilate(space, "p1").conj().T).max() == 0


@pytest.mark.parametrize("mode", list(Mode))
def test_commutator_truncation_defect(space, mode):
    a = ladder_annihilate(space, mode)
    comm = (a @ a.conj().T - a.conj().T @ a).tocsr()
    p = space.column(mode.value)
    cutoff = getattr(space.cutoffs, mode.value)
    expected = np.where(p < cutoff, 1.0, -float(cutoff))
    # off-diagonal part vanishes; below the cap the commutator is the identity
    # (up to the last bit of sqrt(2)**2)
    off = comm - sp.diags(comm.diagonal())
    off.eliminate_zeros()
    assert off.nnz == 0
    assert np.max(np.abs(comm.diagonal() - expected)) <= 1e-15
    # at the cap: 1 - (cutoff + 1) = -cutoff, i.e. a defect of -(cutoff + 1)|cap><cap|
    assert np.all(np.round(comm.diagonal()[p == cutoff].real) - 1 == -(cutoff + 1))


def test_distinct_registers_commute(space):
    a = ladder_annihilate(space, Mode.OMEGA12_UP)
    b = ladder_annihilate(space, Mode.PHONON)
    assert (a @ b - b @ a).count_nonzero() == 0
    assert (a @ b.conj().T - b.conj().T @ a).count_nonzero() == 0


def test_number_operator(space):
    a = ladder_annihilate(space, Mode.OMEGA01_DN)
    assert abs(a.conj().T @ a - number_operator(space, Mode.OMEGA01_DN)).max() == 0


def test_electron_lower_examples(space):
    s01 = electron_lower(space, "up", "01")
    assert image(space, s01, S0.replace(l1=E.Phi1)) == {S0: 1.0}
    assert image(space, s01, S0) == {}
    proj = (s01.conj().T @ s01)
    assert image(space, proj, S0.replace(l1=E.Phi1)) == {S0.replace(l1=E.Phi1): 1.0}
    s12 = electron_lower(space, "dn", "12")
    assert image(space, s12, S0.replace(l2=E.Phi2)) == {S0.replace(l2=E.Phi1): 1.0}
    with pytest.raises(ValueError):
        electron_lower(space, "up", "02")
    with pytest.raises(ValueError):
        electron_lower(space, "left", "01")


def test_lowering_never_leaves_the_basis(space):
    for spin in ("up", "dn"):
        for tr in ("01", "12"):
            op = electron_lower(space, spin, tr)
            reg = "l1" if spin == "up" else "l2"
            upper = E.Phi1 if tr == "01" else E.Phi2
            # every occupied source state has exactly one image
            assert op.nnz == np.count_nonzero(space.column(reg) == upper)


def test_detach_examples(space):
    up, dn = electron_detach(space, "up"), electron_detach(space, "dn")
    assert image(space, up, S0.replace(l1=E.Phi2)) == {S0.replace(l1=E.Detached): 1.0}
    assert image(space, up, S0.replace(l1=E.Phi1)) == {}
    assert (up @ dn).count_nonzero() == 0
    assert (dn @ up).count_nonzero() == 0


def test_bond_and_nuclei_sigma(space):
    sw = bond_sigma(space)
    broken = S0.replace(L=1)
    assert image(space, sw, broken) == {S0: 1.0}
    gate = sw @ sw.conj().T
    assert image(space, gate, S0) == {S0: 1.0}
    assert image(space, gate, broken) == {}
    sn = nuclei_sigma(space)
    assert image(space, sn, S0.replace(k=1)) == {S0: 1.0}
    completeness = sn.conj().T @ sn + sn @ sn.conj().T
    assert abs(completeness - sp.identity(space.dim)).max() == 0


def level_energy(level, w01, w2):
    return {E.Phi0: 0.0, E.Phi1: w01, E.Phi2: w2, E.Detached: w2}[level]


def diagonal_accountant(s, p):
    """Per-state energy, written independently of the operator builders."""
    up2 = p.omega01_up + p.omega12_up
    dn2 = (p.omega01_dn + p.omega12_dn) if p.atom_energy_spin_symmetric else up2
    e = p.omega12_up * s.p1 + p.omega12_dn * s.p2 + p.omega01_up * s.p3 + p.omega01_dn * s.p4
    e += p.omega_ph * (s.p5 + (s.L == 1))
    e += level_energy(s.l1, p.omega01_up, up2) + level_energy(s.l2, p.omega01_dn, dn2)
    return p.hbar * e


@pytest.mark.parametrize("symmetric", [False, True])
def test_uncoupled_hamiltonian_is_diagonal(space, symmetric):
    p = ModelParams(
        omega01_up=1.0, omega01_dn=1.3, omega12_up=0.7, omega12_dn=0.9, omega_ph=0.11,
        g01_up=0, g01_dn=0, g12_up=0, g12_dn=0, g_omega=0, zeta=0, hbar=1.5,
        atom_energy_spin_symmetric=symmetric,
    )
    H = assemble_hamiltonian(space, p)
    assert (H - sp.diags(H.diagonal())).count_nonzero() == 0
    expected = np.array([diagonal_accountant(s, p) for s in space.states])
    assert np.max(np.abs(H.diagonal() - expected)) <= 1e-14


def test_printed_spin_down_energy_differs_from_symmetric(space):
    kw = dict(omega01_dn=1.3, omega12_dn=0.9)
    printed = assemble_hamiltonian(space, ModelParams(**kw)).diagonal()
    sym = assemble_hamiltonian(space, ModelParams(atom_energy_spin_symmetric=True, **kw)).diagonal()
    i = space.index[S0.replace(l2=E.Phi2)]
    assert printed[i] == pytest.approx(2.0) and sym[i] == pytest.approx(2.2)
    assert np.count_nonzero(printed != sym) == np.count_nonzero(np.isin(space.column("l2"), [2, 3]))


params_strategy = st.builds(
    ModelParams,
    omega01_up=st.floats(0, 3), omega01_dn=st.floats(0, 3), omega12_up=st.floats(0, 3),
    omega12_dn=st.floats(0, 3), omega_ph=st.floats(0, 1), g01_up=st.floats(0, 0.5),
    g01_dn=st.floats(0, 0.5), g12_up=st.floats(0, 0.5), g12_dn=st.floats(0, 0.5),
    g_omega=st.floats(0, 0.5), zeta=st.floats(0, 0.5), nuclear_tunneling=st.booleans(),
)


@given(params_strategy)
def test_hamiltonian_hermitian(p):
    space = build_state_space(Cutoffs.uniform(1, 1))
    H = assemble_hamiltonian(space, p)
    D = (H - H.conj().T).tocsr()
    assert D.nnz == 0 or abs(D).max() <= 1e-14


def test_interaction_vanishes_on_broken_bond(space):
    H_int = hamiltonian_terms(space, ModelParams())["int"]
    broken = np.flatnonzero(space.column("L") == 1)
    assert H_int[:, broken].count_nonzero() == 0
    assert H_int[broken, :].count_nonzero() == 0
    assert H_int.count_nonzero() > 0


def test_excitation_number_conserved(space):
    p = ModelParams(zeta=0.0, g_omega=0.0, omega12_dn=1.4, omega01_dn=0.6)
    N = excitation_number(space)
    for tunneling in (True, False):
        H = assemble_hamiltonian(space, ModelParams(**{**p.__dict__, "nuclear_tunneling": tunneling}))
        comm = (H @ N - N @ H).tocsr()
        comm.eliminate_zeros()
        assert comm.nnz == 0


def test_printed_tunneling_is_bond_projector(space):
    p = ModelParams(zeta=0.037, nuclear_tunneling=False)
    tun = hamiltonian_terms(space, p)["tun"]
    expected = 0.037 * projector(space, space.column("L") == 1)
    assert abs(tun - expected).max() <= 1e-15


def test_hopping_tunneling_flips_nuclei_only_while_broken(space):
    tun = hamiltonian_terms(space, ModelParams(zeta=0.05))["tun"].tocoo()
    rows = [space.states[i] for i in tun.row]
    cols = [space.states[j] for j in tun.col]
    assert all(r.L == 1 and c.L == 1 and r.k != c.k for r, c in zip(rows, cols))
    assert all(r.replace(k=0) == c.replace(k=0) for r, c in zip(rows, cols))
    assert np.allclose(tun.data, 0.05)


def test_bond_forms_only_in_shared_cavity(space):
    bond = hamiltonian_terms(space, ModelParams())["bond"].tocoo()
    for i, j, v in zip(bond.row, bond.col, bond.data):
        if i != j:
            a, b = space.states[i], space.states[j]
            assert a.k == b.k == 0 and a.L != b.L and abs(v) == pytest.approx(0.02)


def test_subspace_hamiltonian_equals_restriction(space):
    """Composite terms must not lose amplitude through states the subspace omits."""
    from h2ion.model import initial_ket

    p = ModelParams()
    H = assemble_hamiltonian(space, p)
    for sid in ("Psi0", "Psi5", "Psi7"):
        seed = np.flatnonzero(initial_ket(space, sid))
        sub = reachable_subspace(space, [H], seed)
        restricted = H[sub.parent][:, sub.parent]
        assert abs(restricted - assemble_hamiltonian(sub, p)).max() == 0


def test_invalid_params():
    with pytest.raises(ValueError):
        ModelParams(g01_up=-0.1)
    with pytest.raises(ValueError):
        ModelParams(zeta=float("nan"))
    with pytest.raises(ValueError):
        ModelParams(hbar=0)


def test_swapped_params():
    p = ModelParams(g01_up=0.1, omega12_dn=2.0)
    q = p.swapped()
    assert q.g01_dn == 0.1 and q.g01_up == 0.02 and q.omega12_up == 2.0 and q.omega12_dn == 1.0
    assert q.swapped() == p


def test_dump_round_trip(tmp_path):
    space = build_state_space(Cutoffs.uniform(1, 0))
    H = assemble_hamiltonian(space, ModelParams(g12_up=0.1234567890123))
    path = tmp_path / "h.txt"
    dump_operator(path, H, space, "hamiltonian")
    back, header = load_operator(path)
    assert header["basis_hash"] == space.ordering_hash()
    assert header["label"] == "hamiltonian"
    assert abs(back - H).max() == 0
    assert operator_hash(back) == operator_hash(H)
    dump_operator(tmp_path / "again.txt", H, space, "hamiltonian")
    assert (tmp_path / "again.txt").read_bytes() == path.read_bytes()
