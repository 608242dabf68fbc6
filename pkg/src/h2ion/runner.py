"""Scenario orchestration: single runs, sweep grids and their text output."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import __version__
from .config import CHANNEL_GROUPS, RunConfig, resolved_lines
from .hilbert import Cutoffs, build_state_space, reachable_subspace
from .lindblad import DensityMatrix, SectorEvolver, TimeSeries, evolve
from .model import (
    InitialStateId,
    SubspaceLabel,
    charge_labels,
    detect_stabilization,
    initial_ket,
    make_channels,
    subspace_masks,
)
from .operators import ModelParams, assemble_hamiltonian
from .propagator import PtsimConfig

__all__ = [
    "SERIES_COLUMNS",
    "GRID_OBSERVABLES",
    "simulate",
    "scenario_rates",
    "CellResult",
    "run_cell",
    "run_sweep",
    "run_scenario",
    "write_time_series",
    "write_grid",
]

SERIES_COLUMNS = ("time", "P_atoms", "P_molecule", "P_cation", "P_other", "trace")
GRID_OBSERVABLES = ("atoms", "molecule", "cation", "t_stb")
_LABELS = (SubspaceLabel.Atoms, SubspaceLabel.Molecule, SubspaceLabel.Cation, SubspaceLabel.Other)


def simulate(
    state_id: InitialStateId | str,
    gammas: Mapping[str, float] | None = None,
    mus: Mapping[str, float] | None = None,
    *,
    params: ModelParams = ModelParams(),
    cutoffs: Cutoffs = Cutoffs(),
    dt: float = 0.5,
    t_end: float = 6000.0,
    stride: int = 20,
    ptsim: PtsimConfig = PtsimConfig(),
    trace_tol: float = 1e-4,
    engine: str = "sector",
    substep: str = "kraus",
    prune: bool = True,
) -> TimeSeries:
    """Evolve one prepared state and record the four subspace probabilities.

    The basis is pruned to the states reachable from the initial support
    through the Hamiltonian and the active jump operators. ``engine``
    selects the block-restricted evolver or the dense reference path;
    ``substep`` the form of the dissipative update.
    """
    gammas = dict(gammas or {})
    full = build_state_space(cutoffs)
    psi_full = initial_ket(full, state_id)
    if prune:
        H_full = assemble_hamiltonian(full, params)
        jumps = [c.jump for c in make_channels(full, gammas, mus)]
        space = reachable_subspace(full, [H_full, *jumps], np.flatnonzero(psi_full))
    else:
        space = full
    H = assemble_hamiltonian(space, params)
    channels = make_channels(space, gammas, mus)
    psi = initial_ket(space, state_id)
    masks = subspace_masks(space)
    probes = {lab.value: _population_probe(masks[lab]) for lab in _LABELS}

    if engine == "sector":
        evo = SectorEvolver(H, channels, charge_labels(space), dt, ptsim, trace_tol=trace_tol, substep=substep)
        evo.load_ket(psi)
        series = evo.run(t_end, probes, stride=stride)
    elif engine == "dense":
        series = evolve(
            DensityMatrix.from_ket(psi), H, channels, dt, t_end, probes, stride, ptsim, trace_tol=trace_tol, substep=substep
        )
        series.meta.pop("final_state", None)
    else:
        raise ValueError(f"unknown engine {engine!r}")
    series.meta.update(dim=space.dim, full_dim=full.dim, basis_hash=space.ordering_hash())
    return series


def _population_probe(mask):
    return lambda state: float(state.populations()[mask].sum())


def scenario_rates(cfg: RunConfig) -> tuple[dict[str, float], dict[str, float]]:
    """Internal jump rates and influx ratios a scenario switches on."""
    ch = cfg.channels
    if cfg.scenario == "unitary":
        return {}, {}
    if cfg.scenario == "anode":
        # detachment into the anode plus bond-phonon relaxation; photons stay in the cavity
        groups = ("electron", "phonon")
        return ch.gammas(groups), {}
    groups = tuple(CHANNEL_GROUPS)
    mus = ch.mus(groups) if cfg.scenario == "influx" else {}
    return ch.gammas(groups), mus


@dataclass
class CellResult:
    index: tuple[int, ...]
    coords: dict[str, float]
    final: dict[str, float] = field(default_factory=dict)
    t_stb: float | None = None
    trace_defect: float = math.nan
    partition_defect: float = math.nan
    asymmetry: float = math.nan
    spot_eigenvalues: list = field(default_factory=list)
    error: str | None = None
    series: TimeSeries | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


def run_cell(cfg: RunConfig, index: tuple[int, ...] = (), coords: Mapping[str, float] | None = None, keep_series: bool = False) -> CellResult:
    coords = dict(coords or {})
    cell_cfg = cfg.with_rates(**coords) if coords else cfg
    gammas, mus = scenario_rates(cell_cfg)
    it = cfg.integration
    result = CellResult(index, coords)
    try:
        series = simulate(
            cfg.initial_state,
            gammas,
            mus,
            params=cfg.params,
            cutoffs=cfg.cutoffs,
            dt=it.dt,
            t_end=it.t_end,
            stride=it.stride,
            ptsim=it.ptsim,
            trace_tol=it.trace_tol,
            engine=it.engine,
            substep=it.substep,
        )
    except Exception as exc:  # recorded per cell, the sweep carries on
        coord_txt = ", ".join(f"{k}={v:g}" for k, v in coords.items()) or "single run"
        result.error = f"{type(exc).__name__} at ({coord_txt}): {exc}"
        return result
    result.final = {lab.value: float(series[lab.value][-1]) for lab in _LABELS}
    result.trace_defect = float(np.max(np.abs(series["trace"] - 1.0)))
    result.t_stb = detect_stabilization(series, it.threshold).t_stb
    total = sum(series[lab.value] for lab in _LABELS)
    result.partition_defect = float(np.max(np.abs(total - series["trace"])))
    result.asymmetry = series.meta["max_recorded_asymmetry"]
    result.spot_eigenvalues = list(series.meta["min_eigenvalues"])
    if keep_series:
        result.series = series
    return result


def _cell_job(args):
    cfg, index, coords = args
    return run_cell(cfg, index, coords)


def run_sweep(cfg: RunConfig, threads: int | None = None) -> list[CellResult]:
    """Every grid cell, computed independently; order follows ``cfg.grid()``."""
    threads = cfg.threads if threads is None else threads
    jobs = [(cfg, idx, coords) for idx, coords in cfg.grid()]
    if threads <= 1 or len(jobs) <= 1:
        return [_cell_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(_cell_job, jobs))


def _header(cfg: RunConfig, extra: Sequence[str] = ()) -> list[str]:
    gammas, mus = scenario_rates(cfg)
    active = [f"{n}:{gammas[n]:.9g}" + (f"/mu={mus[n]:g}" if mus.get(n) else "") for n in gammas if gammas[n] > 0]
    active_line = "active_channels = " + (" ".join(active) if active else "none")
    if cfg.axes:
        active_line += "  (swept quantities override per cell)"
    return [f"h2ion {__version__}", *resolved_lines(cfg), active_line, *extra]


def _num(x) -> str:
    if x is None or (isinstance(x, float) and math.isnan(x)):
        return "nan"
    return f"{x:.9g}"


def write_time_series(path, series: TimeSeries | None, header: Sequence[str]) -> Path:
    """``#`` header lines, then one whitespace-separated row per recorded sample."""
    path = Path(path)
    lines = [f"# {h}" for h in header]
    lines.append("# " + "  ".join(SERIES_COLUMNS))
    if series is not None:
        cols = [series.times] + [series[lab.value] for lab in _LABELS] + [series["trace"]]
        for row in zip(*cols):
            lines.append("  ".join(_num(float(x)) for x in row))
    path.write_text("\n".join(lines) + "\n")
    return path


def _observable(cell: CellResult, name: str):
    if not cell.ok:
        return None
    return cell.t_stb if name == "t_stb" else cell.final[name]


def write_grid(path, cfg: RunConfig, cells: Sequence[CellResult], observable: str, header: Sequence[str] = ()) -> Path:
    """Axis values followed by the observable, one line per cell; failed cells read ``nan``."""
    path = Path(path)
    lines = [f"# {h}" for h in header]
    lines.append(f"# observable: {observable}")
    if observable == "t_stb":
        lines.append("# nan marks cells that never stabilized or failed")
    lines.append("# " + "  ".join([a.quantity for a in cfg.axes] + [observable]))
    for cell in cells:
        coords = [_num(cell.coords[a.quantity]) if cell.coords[a.quantity] != -math.inf else "off" for a in cfg.axes]
        lines.append("  ".join(coords + [_num(_observable(cell, observable))]))
    path.write_text("\n".join(lines) + "\n")
    return path


def _status_lines(cells: Sequence[CellResult]) -> list[str]:
    out = []
    for c in cells:
        where = " ".join(str(i) for i in c.index)
        state = "ok" if c.ok else f"failed: {c.error}"
        out.append(f"{where}  trace_defect={_num(c.trace_defect)}  {state}")
    return out


def run_scenario(cfg: RunConfig, out_prefix: str | None = None, threads: int | None = None) -> tuple[list[Path], bool]:
    """Run the configured scenario and write its files.

    Returns the written paths and whether every cell succeeded. A config
    with sweep axes produces one grid file per observable plus a status
    file; otherwise a single time-series file is written.
    """
    prefix = out_prefix or cfg.prefix
    Path(prefix).parent.mkdir(parents=True, exist_ok=True)
    if not cfg.axes:
        cell = run_cell(cfg, keep_series=True)
        extra = []
        if cell.series is not None:
            m = cell.series.meta
            extra = [f"basis_dim = {m['dim']} of {m['full_dim']}", f"basis_hash = {m['basis_hash']}"]
            extra.append(f"t_stb = {_num(cell.t_stb)}")
        else:
            extra = [f"error = {cell.error}"]
        path = write_time_series(f"{prefix}_series.dat", cell.series, _header(cfg, extra))
        return [path], cell.ok

    cells = run_sweep(cfg, threads)
    header = _header(cfg, [f"cells = {len(cells)}", f"failed = {sum(not c.ok for c in cells)}"])
    paths = [write_grid(f"{prefix}_{obs}.dat", cfg, cells, obs, header) for obs in GRID_OBSERVABLES]
    status = Path(f"{prefix}_status.dat")
    status.write_text("\n".join([f"# {h}" for h in header] + _status_lines(cells)) + "\n")
    paths.append(status)
    return paths, all(c.ok for c in cells)
