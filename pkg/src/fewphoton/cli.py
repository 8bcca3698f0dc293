"""Command-line front end: ``fewphoton {spectrum,dynamics,twophoton,threelevel,sweep}``.

Each command reads a JSON run configuration (or a bundled preset), runs the
solver and writes CSV files with 17-significant-digit floats. Every CSV gets a
``<name>.json`` sidecar holding the resolved configuration, units and version.

Energies in a config are eV numbers or strings with a unit suffix, e.g.
``"30ueV"``, ``"-60 ueV"``, ``"0.25 eV"`` (``ueV``, ``meV`` and ``eV`` are accepted).
"""
from __future__ import annotations

import argparse
import copy
import json
import logging
import math
import re
import sys
from dataclasses import dataclass, field
from decimal import Decimal
from pathlib import Path

import numpy as np

from . import __version__
from . import dynamics, multiphoton, refmodels, spectral
from .basis import HBAR_EV_NS, SystemParams
from .krylov import KrylovError

log = logging.getLogger("fewphoton")

EXIT_OK, EXIT_CONFIG, EXIT_CAPACITY, EXIT_TOLERANCE = 0, 2, 3, 4

MAX_ACTIVE_POLES = 60_000
MAX_WELL_SIDE = 2001
UNITARITY_TOL = 1e-9
ENERGY_TOL = 1e-9
CLOSURE_TOL = 1e-10


class ConfigError(ValueError):
    pass


class ToleranceError(RuntimeError):
    pass


_UNITS = {"ueV": Decimal("1e-6"), "µeV": Decimal("1e-6"), "μeV": Decimal("1e-6"),
          "meV": Decimal("1e-3"), "eV": Decimal(1)}
_ENERGY_RE = re.compile(r"^\s*([-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)\s*([µμu]?eV|meV)?\s*$")


def parse_energy(value, name="energy") -> float:
    """eV from a number or a string with an optional ``ueV``/``meV``/``eV`` suffix."""
    if isinstance(value, bool):
        raise ConfigError(f"{name}: expected an energy, got {value!r}")
    if isinstance(value, (int, float)):
        out = float(value)
    elif isinstance(value, str):
        m = _ENERGY_RE.match(value)
        if not m:
            raise ConfigError(f"{name}: cannot parse energy {value!r}")
        # scale in decimal so "-60ueV" is the double nearest -6e-5
        out = float(Decimal(m.group(1)) * _UNITS[m.group(2) or "eV"])
    else:
        raise ConfigError(f"{name}: expected an energy, got {value!r}")
    if not math.isfinite(out):
        raise ConfigError(f"{name}: energy must be finite")
    return out


SCALED_W_100 = 0.25 * (100 / 20000) ** 2

PRESETS = {
    "fig1": {
        "geometry": "chain", "n_atoms": 20000, "hop_w": "0.25 eV",
        "collective_coupling": "30ueV", "detunings": ["-60ueV", "0ueV", "30ueV"],
        "time": {"t_max": 3.0, "n_points": 2000, "prefix_t": 0.15, "prefix_points": 500},
        "mode_window": [1, 99],
    },
    "fig1c": {
        "geometry": "chain", "n_atoms": 20000, "hop_w": "0.25 eV",
        "collective_coupling": "30ueV", "detunings": ["0ueV"],
        "time": {"t_max": 0.3, "n_points": 1501, "prefix_points": 0},
        "mode_window": [1, 99],
    },
    "fig2b": {"three_level": {"g": "30ueV", "mu": 0.01, "deltas": ["0ueV"]},
              "time": {"t_max": 20.0, "n_points": 20001, "prefix_points": 0}},
    "fig2c": {"three_level": {"g": "30ueV", "mu": 0.01, "deltas": ["-60ueV"]},
              "time": {"t_max": 20.0, "n_points": 20001, "prefix_points": 0}},
    "fig2d": {"three_level": {"g": "30ueV", "mu": 0.01, "deltas": ["30ueV"]},
              "time": {"t_max": 20.0, "n_points": 20001, "prefix_points": 0}},
    # 20000 x 20000 is out of reach; g_w N is held at the caption value
    "fig3": {
        "geometry": "well", "n_atoms": 401, "n_atoms_y": 401, "hop_w": "0.25 eV",
        "collective_coupling": "30ueV", "detunings": ["-60ueV", "0ueV", "30ueV"],
        "time": {"t_max": 3.0, "n_points": 2000, "prefix_t": 0.15, "prefix_points": 500},
        "mode_window": [1, 21],
    },
    # caption parameters with N capped at the dense even-sector size
    "fig4": {
        "geometry": "chain", "n_atoms": 100, "hop_w": "0.25 eV",
        "collective_coupling": "30ueV", "detunings": ["-60ueV", "0ueV", "30ueV"],
        "time": {"t_max": 3.0, "n_points": 601, "prefix_points": 0},
        "average_window": 3.0,
    },
    # same, with w shrunk by (N / 20000)^2 so confinement / Rabi matches N = 20000
    "fig4-scaled": {
        "geometry": "chain", "n_atoms": 100, "hop_w": SCALED_W_100,
        "collective_coupling": "30ueV", "detunings": ["-60ueV", "0ueV", "30ueV"],
        "time": {"t_max": 3.0, "n_points": 601, "prefix_points": 0},
        "average_window": 3.0,
    },
}

_TOP_KEYS = {"geometry", "n_atoms", "n_atoms_y", "hop_w", "site_energy", "coupling_g",
             "collective_coupling", "detunings", "time", "weight_cutoff", "mode_window",
             "average_window", "three_level", "sweep", "two_photon_method"}


@dataclass
class TimeGrid:
    t_max: float = 3.0
    n_points: int = 2000
    prefix_t: float = 0.15
    prefix_points: int = 500

    def times(self) -> np.ndarray:
        if self.prefix_points <= 0:
            return np.linspace(0.0, self.t_max, self.n_points)
        return dynamics.default_time_grid(self.t_max, self.n_points, self.prefix_t,
                                          self.prefix_points)


@dataclass
class RunConfig:
    geometry: str = "chain"
    n_atoms: int = 20000
    n_atoms_y: int = 0
    hop_w: float = 0.25
    site_energy: float = 1.5
    coupling_g: float | None = None
    collective_coupling: float | None = None
    detunings: list = field(default_factory=lambda: [0.0])
    time: TimeGrid = field(default_factory=TimeGrid)
    weight_cutoff: float = 0.0
    mode_window: tuple | None = None
    average_window: float = 3.0
    three_level: dict | None = None
    sweep: dict | None = None
    two_photon_method: str = "auto"

    def params(self, detuning: float) -> SystemParams:
        ny = self.n_atoms_y if self.geometry == "well" else 0
        kw = dict(n_atoms_x=self.n_atoms, n_atoms_y=ny, detuning=detuning,
                  hop_w=self.hop_w, site_energy=self.site_energy)
        if self.coupling_g is not None:
            return SystemParams.from_detuning(coupling_g=self.coupling_g, **kw)
        return SystemParams.from_detuning(collective_coupling=self.collective_coupling, **kw)

    def resolved(self) -> dict:
        """JSON-ready view of every setting, energies in eV."""
        d = {k: getattr(self, k) for k in ("geometry", "n_atoms", "n_atoms_y", "hop_w",
                                           "site_energy", "coupling_g", "collective_coupling",
                                           "detunings", "weight_cutoff", "average_window",
                                           "three_level", "sweep", "two_photon_method")}
        d["mode_window"] = list(self.mode_window) if self.mode_window else None
        d["time"] = vars(self.time).copy()
        return d


def _int(value, name, lo=None):
    if (isinstance(value, bool) or not isinstance(value, (int, float))
            or not math.isfinite(value) or int(value) != value):
        raise ConfigError(f"{name}: expected an integer, got {value!r}")
    if lo is not None and value < lo:
        raise ConfigError(f"{name}: must be >= {lo}")
    return int(value)


def _float(value, name, positive=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)) or not math.isfinite(value):
        raise ConfigError(f"{name}: expected a number, got {value!r}")
    if positive and value <= 0:
        raise ConfigError(f"{name}: must be positive")
    return float(value)


def build_config(raw: dict) -> RunConfig:
    """Validate a raw JSON document into a :class:`RunConfig`."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    unknown = set(raw) - _TOP_KEYS
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    cfg = RunConfig()
    cfg.geometry = raw.get("geometry", "chain")
    if cfg.geometry not in ("chain", "well"):
        raise ConfigError("geometry must be 'chain' or 'well'")
    cfg.n_atoms = _int(raw.get("n_atoms", cfg.n_atoms), "n_atoms", 1)
    if cfg.geometry == "well":
        cfg.n_atoms_y = _int(raw.get("n_atoms_y", cfg.n_atoms), "n_atoms_y", 1)
    cfg.hop_w = parse_energy(raw.get("hop_w", cfg.hop_w), "hop_w")
    if cfg.hop_w <= 0:
        raise ConfigError("hop_w must be positive")
    cfg.site_energy = parse_energy(raw.get("site_energy", cfg.site_energy), "site_energy")
    if ("coupling_g" in raw) == ("collective_coupling" in raw) and "three_level" not in raw:
        raise ConfigError("give exactly one of coupling_g, collective_coupling")
    if "coupling_g" in raw:
        cfg.coupling_g = parse_energy(raw["coupling_g"], "coupling_g")
    elif "collective_coupling" in raw:
        cfg.collective_coupling = parse_energy(raw["collective_coupling"], "collective_coupling")
    for name in ("coupling_g", "collective_coupling"):
        v = getattr(cfg, name)
        if v is not None and v < 0:
            raise ConfigError(f"{name} must be non-negative")
    det = raw.get("detunings", [0.0])
    if not isinstance(det, list) or not det:
        raise ConfigError("detunings must be a non-empty list")
    cfg.detunings = [parse_energy(d, "detunings") for d in det]
    t = raw.get("time", {})
    if not isinstance(t, dict):
        raise ConfigError("time must be an object")
    extra = set(t) - {"t_max", "n_points", "prefix_t", "prefix_points"}
    if extra:
        raise ConfigError(f"unknown time keys: {sorted(extra)}")
    cfg.time = TimeGrid(t_max=_float(t.get("t_max", 3.0), "time.t_max", positive=True),
                        n_points=_int(t.get("n_points", 2000), "time.n_points", 2),
                        prefix_t=_float(t.get("prefix_t", 0.15), "time.prefix_t"),
                        prefix_points=_int(t.get("prefix_points", 500), "time.prefix_points", 0))
    if cfg.time.prefix_points and not (0 < cfg.time.prefix_t < cfg.time.t_max
                                       and cfg.time.prefix_points < cfg.time.n_points):
        raise ConfigError("dense time prefix must fit inside the grid")
    cfg.weight_cutoff = _float(raw.get("weight_cutoff", 0.0), "weight_cutoff")
    if "mode_window" in raw and raw["mode_window"] is not None:
        mw = raw["mode_window"]
        if not (isinstance(mw, list) and len(mw) == 2):
            raise ConfigError("mode_window must be [lo, hi]")
        lo, hi = (_int(v, "mode_window", 1) for v in mw)
        top = max(cfg.n_atoms, cfg.n_atoms_y)
        if hi < lo or hi > top:
            raise ConfigError(f"mode_window must satisfy 1 <= lo <= hi <= {top}")
        cfg.mode_window = (lo, hi)
    cfg.average_window = _float(raw.get("average_window", 3.0), "average_window", positive=True)
    if "three_level" in raw:
        tl = raw["three_level"]
        if not isinstance(tl, dict) or "g" not in tl:
            raise ConfigError("three_level needs at least 'g'")
        g = parse_energy(tl["g"], "three_level.g")
        if g <= 0:
            raise ConfigError("three_level.g must be positive")
        mu = _float(tl.get("mu", 0.01), "three_level.mu")
        if mu < 0:
            raise ConfigError("three_level.mu must be non-negative")
        deltas = [parse_energy(d, "three_level.deltas") for d in tl.get("deltas", [0.0])]
        if not deltas:
            raise ConfigError("three_level.deltas must be non-empty")
        Delta = tl.get("Delta")
        cfg.three_level = {"g": g, "mu": mu, "deltas": deltas,
                           "Delta": None if Delta is None else parse_energy(Delta, "Delta")}
    if "sweep" in raw:
        sw = raw["sweep"]
        if not isinstance(sw, dict):
            raise ConfigError("sweep must be an object")
        cfg.sweep = {"start": parse_energy(sw.get("start", "-90ueV"), "sweep.start"),
                     "stop": parse_energy(sw.get("stop", "90ueV"), "sweep.stop"),
                     "count": _int(sw.get("count", 31), "sweep.count", 2)}
    cfg.two_photon_method = raw.get("two_photon_method", "auto")
    if cfg.two_photon_method not in ("auto", "even", "dense", "krylov"):
        raise ConfigError("two_photon_method must be auto, even, dense or krylov")
    if cfg.coupling_g is not None or cfg.collective_coupling is not None:
        try:
            cfg.params(cfg.detunings[0])
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    return cfg


def load_config(path=None, preset=None) -> tuple[RunConfig, dict]:
    """Merge a preset with an optional JSON file (file keys win)."""
    raw = {}
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"unknown preset {preset!r}; choose from {sorted(PRESETS)}")
        raw = copy.deepcopy(PRESETS[preset])
    if path is not None:
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config must be a JSON object")
        raw.update(doc)
    if not raw:
        raise ConfigError("give --config and/or --preset")
    return build_config(raw), raw


# ---------------------------------------------------------------- output

def _fmt(x) -> str:
    if isinstance(x, str):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return "%.17g" % x


class CsvWriter:
    """Deterministic CSV plus a JSON sidecar describing how it was produced."""

    def __init__(self, out_dir: Path, name: str, header, units: dict, meta: dict):
        self.path = out_dir / name
        self.header = list(header)
        self.units = units
        self.meta = meta
        self._fh = open(self.path, "w", newline="\n")
        self._fh.write(",".join(self.header) + "\n")

    def row(self, *values):
        self._fh.write(",".join(_fmt(v) for v in values) + "\n")

    def rows(self, columns):
        """Write column arrays; mixed types are allowed per column."""
        for vals in zip(*columns):
            self.row(*vals)

    def close(self):
        self._fh.close()
        sidecar = dict(self.meta)
        sidecar.update({"file": self.path.name, "columns": self.header, "units": self.units})
        Path(str(self.path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def _meta(command, cfg: RunConfig, preset):
    return {"command": command, "preset": preset, "config": cfg.resolved(),
            "version": __version__, "hbar_eV_ns": HBAR_EV_NS,
            "energy_reference": "band bottom eps_0 = site_energy - 2w (chain) or - 4w (well)"}


# ---------------------------------------------------------------- checks

def _check_capacity_one_photon(cfg: RunConfig):
    if cfg.geometry == "well" and max(cfg.n_atoms, cfg.n_atoms_y) > MAX_WELL_SIDE:
        raise multiphoton.CapacityError(f"well side above the cap {MAX_WELL_SIDE}")


def _check_spectrum(spec: spectral.QuasiEnergySpectrum):
    closure = abs(np.sum(spec.weights) - 1.0)
    if closure > CLOSURE_TOL:
        raise ToleranceError(f"weight closure defect {closure:.3g} > {CLOSURE_TOL}")
    bad = spectral.interlacing_violations(spec)
    if bad.size:
        raise ToleranceError(f"interlacing violated at roots {bad[:10].tolist()}")


def _check_series(series: dynamics.TimeSeries):
    defect = np.max(np.abs(series.checksum)) - series.dropped_weight
    if defect > UNITARITY_TOL:
        raise ToleranceError(f"unitarity defect {defect:.3g} > {UNITARITY_TOL}")
    e = series.channels["energy"]
    drift = np.max(np.abs(e - e[0])) / abs(series.reference + e[0])
    if drift > ENERGY_TOL:
        raise ToleranceError(f"relative energy drift {drift:.3g} > {ENERGY_TOL}")


# ---------------------------------------------------------------- commands

def _solve(cfg, detuning):
    p = cfg.params(detuning)
    poles = spectral.build_active_poles(p)
    if poles.size > MAX_ACTIVE_POLES:
        raise multiphoton.CapacityError(f"{poles.size} distinct active poles, above the cap "
                                        f"{MAX_ACTIVE_POLES}")
    spec = spectral.solve_quasienergies(poles)
    _check_spectrum(spec)
    return p, spec


def cmd_spectrum(cfg: RunConfig, out: Path, preset=None):
    _check_capacity_one_photon(cfg)
    meta = _meta("spectrum", cfg, preset)
    units = {"detuning": "eV", "quasienergy": "eV above eps_0", "weight": "1"}
    q = CsvWriter(out, "quasienergies.csv",
                  ["detuning_eV", "index", "quasienergy_eV", "branch",
                   "two_level_lower_eV", "two_level_upper_eV"], units, meta)
    wf = CsvWriter(out, "weights.csv",
                   ["detuning_eV", "index", "quasienergy_eV", "weight",
                    "two_level_lower_weight", "two_level_upper_weight"], units, meta)
    with q, wf:
        for d in cfg.detunings:
            p, spec = _solve(cfg, d)
            levels, tw = refmodels.two_level_polariton(d, 0.0, p.collective_coupling)
            keep = np.flatnonzero(spec.weights > cfg.weight_cutoff)
            for m in keep:
                q.row(d, m, spec.offsets[m], spec.branch[m], levels[0], levels[1])
                wf.row(d, m, spec.offsets[m], spec.weights[m], tw[0], tw[1])
            log.info("spectrum delta=%.6g eV: %d roots, %d written", d, spec.size, len(keep))


def cmd_dynamics(cfg: RunConfig, out: Path, preset=None):
    _check_capacity_one_photon(cfg)
    meta = _meta("dynamics", cfg, preset)
    times = cfg.time.times()
    pops = CsvWriter(out, "populations.csv",
                     ["detuning_eV", "t_ns", "exciton_total", "collective_pop", "residual",
                      "photon_pop", "checksum"], {"t": "ns", "populations": "1"}, meta)
    modes = None
    with pops:
        for d in cfg.detunings:
            p, spec = _solve(cfg, d)
            cutoff = cfg.weight_cutoff if cfg.weight_cutoff > 0 else 1e-14
            series = dynamics.evolve(spec, times, root_cutoff=cutoff, mode_window=cfg.mode_window)
            _check_series(series)
            ch = series.channels
            n = len(times)
            pops.rows([[d] * n, times, ch["exciton_total"], ch["collective_pop"],
                       ch["residual"], ch["photon_pop"], series.checksum])
            if cfg.mode_window is not None:
                if modes is None:
                    labels = dynamics.mode_labels_text(series.mode_labels)
                    modes = CsvWriter(out, "modes.csv", ["detuning_eV", "t_ns"] + labels,
                                      {"t": "ns", "amplitudes": "|C_j(t)|"}, meta)
                for i in range(n):
                    modes.row(d, times[i], *series.mode_amplitudes[i])
            log.info("dynamics delta=%.6g eV: max |checksum| %.3g", d, np.max(np.abs(series.checksum)))
    if modes is not None:
        modes.close()


def cmd_twophoton(cfg: RunConfig, out: Path, preset=None):
    if cfg.geometry != "chain":
        raise ConfigError("the two-photon sector is implemented for chains only")
    if cfg.n_atoms < 2:
        raise ConfigError("the two-photon sector needs n_atoms >= 2")
    if cfg.n_atoms > multiphoton.PROPAGATION_CAP:
        raise multiphoton.CapacityError(f"N={cfg.n_atoms} exceeds the two-photon cap "
                                        f"{multiphoton.PROPAGATION_CAP}")
    meta = _meta("twophoton", cfg, preset)
    times = cfg.time.times()
    N = cfg.n_atoms
    sw = CsvWriter(out, "spectrum2.csv",
                   ["detuning_eV", "index", "level_eV", "weight", "vacuum_block",
                    "one_exciton_block", "two_exciton_block", "sector"],
                   {"level": "eV relative to 2*photon energy", "weights": "1"}, meta)
    pw = CsvWriter(out, "populations2.csv",
                   ["detuning_eV", "t_ns", "vacuum", "exciton_total", "biexciton_total",
                    "exciton_residual", "biexciton_residual", "checksum"],
                   {"t": "ns", "populations": "1"}, meta)
    jw = CsvWriter(out, "projections2.csv",
                   ["detuning_eV", "kind", "k1", "k2", "energy_eV", "mean_population"],
                   {"energy": "eV above 2*eps_0 (photons excluded)",
                    "mean_population": f"population averaged over t <= {cfg.average_window} ns"},
                   meta)
    from .basis import biexciton_energy, exciton_energy_1d, site_pairs

    with sw, pw, jw:
        for d in cfg.detunings:
            p = cfg.params(d)
            H = multiphoton.build_two_sector_hamiltonian(p)
            method = cfg.two_photon_method
            fits = multiphoton.even_sector_dimension(N) <= multiphoton.DENSE_BUDGET
            if method == "even" and not fits:
                raise multiphoton.CapacityError(f"N={N} is past the dense even-sector budget")
            es = multiphoton.even_eigensystem(H) if fits and method in ("auto", "even") else None
            if es is not None:
                s2 = multiphoton.two_sector_quasienergies(H, eigensystem=es)
                run_method = "even"
            else:
                s2 = multiphoton.two_sector_spectral_measure(H, steps=min(160, H.dimension))
                run_method = "krylov" if method == "auto" else method
            keep = np.flatnonzero(s2.weights >= cfg.weight_cutoff)
            for i in keep:
                bw = s2.block_weights[i] if s2.block_weights is not None else (np.nan,) * 3
                sw.row(d, i, s2.levels[i], s2.weights[i], *bw, s2.sector)
            if abs(s2.weights.sum() - 1.0) > CLOSURE_TOL:
                raise ToleranceError("two-photon weight closure failed")

            avg_mask = times <= cfg.average_window
            acc = {"exciton": np.zeros(N), "biexciton": np.zeros(N * (N - 1) // 2)}
            state = {"i": 0}

            def observe(v):
                b = multiphoton.block_populations(v, N)
                if avg_mask[state["i"]]:
                    pr = multiphoton.project_free_states(v, N)
                    acc["exciton"] += pr["exciton"][0]
                    acc["biexciton"] += pr["biexciton"][0]
                state["i"] += 1
                return b

            obs = multiphoton.propagate_two_sector(H, times, method=run_method, eigensystem=es,
                                                   observe=observe)
            cols = {k: np.array([o[k][0] for o in obs]) for k in obs[0]}
            total = cols["vacuum"] + cols["exciton_total"] + cols["biexciton_total"]
            checksum = 1.0 - total
            if np.max(np.abs(checksum)) > UNITARITY_TOL * max(1.0, times[-1]):
                raise ToleranceError(f"two-photon unitarity defect {np.max(np.abs(checksum)):.3g}")
            n = len(times)
            pw.rows([[d] * n, times, cols["vacuum"], cols["exciton_total"],
                     cols["biexciton_total"], cols["exciton_residual"],
                     cols["biexciton_residual"], checksum])
            count = max(1, int(avg_mask.sum()))
            k = np.arange(1, N + 1)
            e1 = exciton_energy_1d(k, p) - p.band_bottom
            for kk in range(N):
                jw.row(d, "exciton", k[kk], 0, e1[kk], acc["exciton"][kk] / count)
            pairs = site_pairs(N)
            e2 = biexciton_energy(pairs[:, 0], pairs[:, 1], p) - 2 * p.band_bottom
            for j, (k1, k2) in enumerate(pairs):
                jw.row(d, "biexciton", k1, k2, e2[j], acc["biexciton"][j] / count)
            log.info("twophoton delta=%.6g eV done (%s spectrum)", d, s2.sector)


def cmd_threelevel(cfg: RunConfig, out: Path, preset=None):
    if cfg.three_level is None:
        raise ConfigError("threelevel needs a 'three_level' block")
    tl = cfg.three_level
    meta = _meta("threelevel", cfg, preset)
    times = cfg.time.times()
    with CsvWriter(out, "threelevel.csv",
                   ["delta_eV", "Delta_eV", "t_ns", "analytic_c0", "analytic_c1", "analytic_c2",
                    "numeric_c0", "numeric_c1", "numeric_c2", "deviation"],
                   {"t": "ns", "populations": "1", "deviation": "max over levels"}, meta) as w:
        for d in tl["deltas"]:
            p = refmodels.ThreeLevelParams(g=tl["g"], mu=tl["mu"], delta=d, Delta=tl["Delta"])
            num = refmodels.three_level_populations_exact(p, times)
            if abs(num.sum(axis=0) - 1.0).max() > 1e-12:
                raise ToleranceError("three-level probability closure failed")
            try:
                ana = np.array(refmodels.three_level_populations(p, times))
                dev = np.max(np.abs(ana - num), axis=0)
            except ValueError:
                ana = np.full_like(num, np.nan)
                dev = np.full(len(times), np.nan)
            n = len(times)
            w.rows([[d] * n, [p.Delta] * n, times, *ana, *num, dev])


def cmd_sweep(cfg: RunConfig, out: Path, preset=None):
    """Lower and starred-upper branches over a detuning range, with the two-level overlay."""
    _check_capacity_one_photon(cfg)
    sw = cfg.sweep or {"start": -90e-6, "stop": 90e-6, "count": 31}
    dets = np.linspace(sw["start"], sw["stop"], sw["count"])
    meta = _meta("sweep", cfg, preset)
    with CsvWriter(out, "sweep.csv",
                   ["detuning_eV", "lower_eV", "lower_weight", "upper_star_eV",
                    "upper_star_weight", "two_level_lower_eV", "two_level_upper_eV",
                    "two_level_lower_weight"],
                   {"energies": "eV above eps_0", "weights": "1"}, meta) as w:
        for d in dets:
            p, spec = _solve(cfg, float(d))
            s = spectral.branch_summary(spec)
            ref = spec.poles.reference
            w.row(float(d), s["lower"] - ref, s["lower_weight"],
                  s.get("upper_star", np.nan) - ref, s.get("upper_star_weight", np.nan),
                  s["two_level_lower"] - ref, s["two_level_upper"] - ref,
                  s["two_level_lower_weight"])


COMMANDS = {"spectrum": cmd_spectrum, "dynamics": cmd_dynamics, "twophoton": cmd_twophoton,
            "threelevel": cmd_threelevel, "sweep": cmd_sweep}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fewphoton", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).splitlines()[0])
        sp.add_argument("--config", type=Path, help="JSON run configuration")
        sp.add_argument("--preset", choices=sorted(PRESETS), help="bundled figure parameters")
        sp.add_argument("--out", type=Path, default=Path("."), help="output directory")
        sp.add_argument("--threads", type=int, default=None, help="BLAS threads")
        sp.add_argument("--weight-cutoff", type=float, default=None,
                        help="skip roots with photon weight at or below this")
        sp.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        cfg, _ = load_config(args.config, args.preset)
        if args.weight_cutoff is not None:
            if not args.weight_cutoff >= 0:
                raise ConfigError("--weight-cutoff must be non-negative")
            cfg.weight_cutoff = args.weight_cutoff
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        try:
            args.out.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            print(f"error: cannot create {args.out}: {exc}", file=sys.stderr)
            return 1
        from threadpoolctl import threadpool_limits

        with threadpool_limits(limits=args.threads):
            COMMANDS[args.command](cfg, args.out, args.preset)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except multiphoton.CapacityError as exc:
        print(f"capacity error: {exc}", file=sys.stderr)
        return EXIT_CAPACITY
    except (ToleranceError, KrylovError, spectral.BracketError) as exc:
        print(f"numerical tolerance failure: {exc}", file=sys.stderr)
        return EXIT_TOLERANCE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
