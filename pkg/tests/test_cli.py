import math

import numpy as np
import pytest

from h2ion import runner
from h2ion.cli import main
from h2ion.config import ConfigError, parse_config, resolved_lines
from h2ion.model import InitialStateId
from h2ion.operators import ModelParams

SMALL = """
scenario = "dissipative"
initial_state = "Psi0"
[channels]
gamma_photon = 6
[integration]
t_end = 40.0
stride = 10
"""

SWEEP = SMALL + """
[[sweep.axis]]
quantity = "gamma_photon"
values = [5, 7]
[[sweep.axis]]
quantity = "gamma_electron"
values = [5, "off"]
"""


def write(tmp_path, text, name="cfg.toml"):
    p = tmp_path / name
    p.write_text(text)
    return p


def test_minimal_document_gets_defaults():
    cfg = parse_config('scenario = "unitary"\ninitial_state = "Psi7"')
    assert cfg.scenario == "unitary" and cfg.initial_state is InitialStateId.Psi7
    assert cfg.params == ModelParams()
    assert cfg.integration.dt == 0.5 and cfg.integration.M == 20 and cfg.integration.taylor_terms == 4
    assert cfg.channels.gamma_unit == 1e-8 and cfg.channels.rate("photon") == pytest.approx(0.1)
    assert cfg.axes == ()
    lines = resolved_lines(cfg)
    assert "integration.dt = 0.5  (default)" in lines
    assert "model.zeta = 0.01  (default)" in lines
    assert "initial_state = Psi7" in lines


@pytest.mark.parametrize(
    "text,match",
    [
        ('initial_state = "Psi7"', "scenario"),
        ('scenario = "closed"', "scenario"),
        ('scenario = "influx"\n[channels]\nmu_phonon = 1.5', r"\[0, 1\)"),
        ('scenario = "influx"\n[channels]\nmu_phonon = 1.0', "dissipative"),
        ('scenario = "unitary"\ncolour = 1', "unknown"),
        ('scenario = "unitary"\n[model]\nomega = 1', "unknown"),
        ('scenario = "unitary"\n[integration]\nsteps = 1', "unknown"),
        ('scenario = "unitary"\n[model]\nzeta = -1', "non-negative"),
        ('scenario = "dissipative"\n[channels]\nmu_photon = 0.5', "influx"),
        ('scenario = "dissipative"\n[channels]\ngamma_photon = "lots"', "off"),
        ('scenario = "unitary"\ninitial_state = "Psi9"', "Psi9"),
        ('scenario = "unitary"\n[integration]\nengine = "gpu"', "engine"),
        ('scenario = "unitary"\n[integration]\nM = 0', "M"),
        ('scenario = "unitary" = 3', "malformed"),
    ],
)
def test_rejections(text, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(text)


def test_sweep_axes():
    text = 'scenario = "dissipative"\n' + "".join(
        f'[[sweep.axis]]\nquantity = "{q}"\nstart = 4\nstop = 7\nnum = 13\n' for q in ("gamma_photon", "gamma_electron")
    )
    cfg = parse_config(text)
    assert len(cfg.grid()) == 169
    assert cfg.axes[0].values[0] == 4 and cfg.axes[0].values[-1] == 7 and cfg.axes[0].values[4] == 5
    with pytest.raises(ConfigError, match="distinct"):
        parse_config('scenario = "dissipative"\n' + '[[sweep.axis]]\nquantity = "gamma_photon"\nvalues = [4]\n' * 2)
    with pytest.raises(ConfigError, match="empty"):
        parse_config('scenario = "dissipative"\n[[sweep.axis]]\nquantity = "gamma_photon"\nvalues = []\n')
    with pytest.raises(ConfigError, match="quantity"):
        parse_config('scenario = "dissipative"\n[[sweep.axis]]\nquantity = "zeta"\nvalues = [1]\n')
    with pytest.raises(ConfigError, match=r"\[0, 1\)"):
        parse_config('scenario = "influx"\n[[sweep.axis]]\nquantity = "mu_photon"\nvalues = [0.5, 1.2]\n')


def test_off_switches_channel():
    cfg = parse_config('scenario = "dissipative"\n[channels]\ngamma_phonon = "off"')
    assert cfg.channels.gamma_phonon == -math.inf
    gammas, mus = runner.scenario_rates(cfg)
    assert gammas["phonon"] == 0.0 and gammas["electron_up"] == pytest.approx(0.1) and mus == {}


def test_scenario_rates():
    anode = parse_config('scenario = "anode"')
    gammas, _ = runner.scenario_rates(anode)
    assert set(gammas) == {"electron_up", "electron_dn", "phonon"}
    influx = parse_config('scenario = "influx"\n[channels]\nmu_photon = 0.5')
    _, mus = runner.scenario_rates(influx)
    assert mus["photon12_dn"] == 0.5 and mus["phonon"] == 0.0
    assert runner.scenario_rates(parse_config('scenario = "unitary"')) == ({}, {})


def test_write_time_series_header_only(tmp_path):
    path = runner.write_time_series(tmp_path / "empty.dat", None, ["a = 1"])
    assert path.read_text() == "# a = 1\n# time  P_atoms  P_molecule  P_cation  P_other  trace\n"


def test_validate_command(tmp_path, capsys):
    assert main(["validate", "--config", str(write(tmp_path, SMALL))]) == 0
    out = capsys.readouterr().out
    assert "scenario = dissipative" in out and "channels.gamma_photon = 6.0" in out
    assert main(["validate", "--config", str(write(tmp_path, 'scenario = "x"', "bad.toml"))]) == 2
    assert main(["validate", "--config", str(tmp_path / "missing.toml")]) == 2


def test_run_writes_series(tmp_path):
    cfg = write(tmp_path, SMALL)
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == 0
    text = (tmp_path / "r_series.dat").read_text().splitlines()
    header = [l for l in text if l.startswith("#")]
    rows = np.array([[float(x) for x in l.split()] for l in text if not l.startswith("#")])
    assert any("basis_dim" in h for h in header) and any("h2ion" in h for h in header)
    assert header[-1] == "# time  P_atoms  P_molecule  P_cation  P_other  trace"
    assert rows.shape == (9, 6) and rows[-1, 0] == 40.0
    assert rows[0, 1] == 1.0
    assert np.all(np.abs(rows[:, 5] - 1) <= 1e-4)
    assert np.allclose(rows[:, 1:5].sum(axis=1), rows[:, 5], atol=1e-8)
    # the run command refuses sweep configs and vice versa
    assert main(["run", "--config", str(write(tmp_path, SWEEP, "s.toml"))]) == 2
    assert main(["sweep", "--config", str(cfg)]) == 2


def read_grid(path):
    rows = [l.split() for l in path.read_text().splitlines() if not l.startswith("#")]
    return rows


def test_sweep_thread_independence(tmp_path):
    cfg = write(tmp_path, SWEEP)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "one"), "--threads", "1"]) == 0
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "two"), "--threads", "2"]) == 0
    for obs in ("atoms", "molecule", "cation", "t_stb", "status"):
        a = (tmp_path / f"one_{obs}.dat").read_bytes()
        b = (tmp_path / f"two_{obs}.dat").read_bytes()
        assert a == b
    rows = read_grid(tmp_path / "one_cation.dat")
    assert [r[:2] for r in rows] == [["5", "5"], ["5", "off"], ["7", "5"], ["7", "off"]]
    # electron escape switched off: no cation at all
    assert float(rows[1][2]) == 0.0 and float(rows[0][2]) > 0.0


def test_failed_cell_sets_exit_status(tmp_path, monkeypatch):
    real = runner.simulate

    def flaky(state_id, gammas, mus, **kw):
        if gammas["photon12_up"] > 0.05:
            raise RuntimeError("injected")
        return real(state_id, gammas, mus, **kw)

    monkeypatch.setattr(runner, "simulate", flaky)
    cfg = write(tmp_path, SWEEP)
    assert main(["sweep", "--config", str(cfg), "--out", str(tmp_path / "f"), "--threads", "1"]) == 1
    rows = read_grid(tmp_path / "f_atoms.dat")
    assert [r[2] for r in rows][2:] == ["nan", "nan"]
    status = (tmp_path / "f_status.dat").read_text()
    assert "failed: RuntimeError at (gamma_photon=7, gamma_electron=5): injected" in status


def test_unitary_amplitude_ordering(tmp_path):
    swings = {}
    for sid in ("Psi7", "Psi5"):
        cfg = write(tmp_path, f'scenario = "unitary"\ninitial_state = "{sid}"\n[integration]\nt_end = 1500.0\nstride = 2\n', f"{sid}.toml")
        assert main(["run", "--config", str(cfg), "--out", str(tmp_path / sid)]) == 0
        rows = np.loadtxt(tmp_path / f"{sid}_series.dat")
        swings[sid] = np.ptp(rows[:, 1])
    assert swings["Psi7"] > swings["Psi5"] > 0
