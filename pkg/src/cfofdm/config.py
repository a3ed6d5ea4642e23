"""Scenario configuration: OFDM numerology, coherence geometry, pilot plans,
and network-level parameters.

All symbol/subcarrier indices are 0-based. Derived quantities follow the exact
definitions ``bandwidth = n_subcarriers * spacing`` and
``sample_time = 1 / bandwidth`` (no rounding to nominal values).
"""

from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace

import numpy as np

BOLTZMANN = 1.380649e-23  # J/K

PATTERN_STAIRCASE = "staircase"  # one pilot per symbol, bouncing across subcarriers
PATTERN_PACKED = "packed"  # pilots packed into the leading symbols

LO_SEPARATE = "separate"
LO_SHARED = "shared"

CP_LAG_MODES = ("per-eq", "always", "never")


class ConfigError(ValueError):
    """Invalid scenario/grid/pilot configuration."""


def _require(cond, msg):
    if not cond:
        raise ConfigError(msg)


@dataclass(frozen=True)
class OfdmGrid:
    """OFDM numerology: FFT size, cyclic prefix, spacing and carrier.

    bandwidth [Hz] and sample_time [s] are exact derived values.
    """

    n_subcarriers: int
    n_cp: int
    spacing: float  # subcarrier spacing [Hz]
    carrier_freq: float  # [Hz]

    def __post_init__(self):
        _require(self.n_subcarriers >= 1, "n_subcarriers must be >= 1")
        _require(self.n_cp >= 0, "n_cp must be >= 0")
        _require(self.spacing > 0, "spacing must be > 0")
        _require(self.carrier_freq > 0, "carrier_freq must be > 0")

    @property
    def bandwidth(self) -> float:
        return self.n_subcarriers * self.spacing

    @property
    def sample_time(self) -> float:
        return 1.0 / self.bandwidth

    @property
    def samples_per_symbol(self) -> int:
        """Samples spanned by one OFDM symbol including its cyclic prefix."""
        return self.n_subcarriers + self.n_cp


@dataclass(frozen=True)
class CoherenceGeometry:
    """Time-frequency coherence block: block_subcarriers x block_symbols cells,
    n_pilots of which carry pilots."""

    block_subcarriers: int  # subcarriers per coherence block
    block_symbols: int  # OFDM symbols per coherence block
    n_pilots: int  # pilot cells per block

    def __post_init__(self):
        _require(self.block_subcarriers >= 1, "block_subcarriers must be >= 1")
        _require(self.block_symbols >= 1, "block_symbols must be >= 1")
        _require(self.n_pilots >= 1, "n_pilots must be >= 1")
        _require(
            self.n_pilots <= self.block_symbols * self.block_subcarriers,
            "n_pilots cannot exceed the number of cells in a block",
        )

    @property
    def cells_per_block(self) -> int:
        return self.block_subcarriers * self.block_symbols

    @property
    def prelog(self) -> float:
        """Fraction of block cells left for data."""
        return (self.cells_per_block - self.n_pilots) / self.cells_per_block

    def n_blocks(self, grid: OfdmGrid) -> int:
        """Coherence blocks per OFDM symbol (last one may be truncated)."""
        return math.ceil(grid.n_subcarriers / self.block_subcarriers)

    def block_range(self, r: int, grid: OfdmGrid) -> np.ndarray:
        """Global subcarrier indices of block r (0-based), clipped to the grid."""
        _require(0 <= r < self.n_blocks(grid), f"block index {r} out of range")
        lo = r * self.block_subcarriers
        hi = min(lo + self.block_subcarriers, grid.n_subcarriers)
        return np.arange(lo, hi)

    def is_full_block(self, r: int, grid: OfdmGrid) -> bool:
        return len(self.block_range(r, grid)) == self.block_subcarriers


def _staircase_cells(geom: CoherenceGeometry):
    """One pilot per symbol, walking down from the top subcarrier and bouncing
    off the block edges."""
    _require(
        geom.n_pilots <= geom.block_symbols,
        "staircase pattern needs n_pilots <= block_symbols (one pilot per symbol)",
    )
    nc = geom.block_subcarriers
    symbols = np.arange(geom.n_pilots)
    subcarriers = np.empty(geom.n_pilots, dtype=int)
    pos, step = nc - 1, -1
    for t in range(geom.n_pilots):
        subcarriers[t] = pos
        if nc == 1:
            continue
        nxt = pos + step
        if nxt < 0 or nxt >= nc:
            step = -step
            nxt = pos + step
        pos = nxt
    return symbols, subcarriers


def _packed_cells(geom: CoherenceGeometry):
    """All pilots in the first ceil(n_pilots / block_subcarriers) symbols,
    filling each symbol from the top subcarrier downward."""
    nc = geom.block_subcarriers
    n_sym = math.ceil(geom.n_pilots / nc)
    _require(
        n_sym <= geom.block_symbols,
        "packed pattern does not fit in the coherence block",
    )
    t = np.arange(geom.n_pilots)
    symbols = t // nc
    subcarriers = nc - 1 - (t % nc)
    return symbols, subcarriers


@dataclass(frozen=True)
class PilotPlan:
    """Placement of the pilot cells inside a coherence block plus the pilot
    book.

    ``symbols[t]`` / ``subcarriers[t]`` give the (OFDM symbol, block-local
    subcarrier) of pilot cell t. ``book[:, t]`` is the length-n_pilots sequence
    of pilot index t: a DFT-matrix column with unit-modulus entries,
    ||s_t||^2 = n_pilots, and book^H book = n_pilots * I.
    """

    pattern: str
    symbols: np.ndarray
    subcarriers: np.ndarray
    book: np.ndarray

    @property
    def n_pilots(self) -> int:
        return len(self.symbols)

    @property
    def pilot_symbols(self) -> np.ndarray:
        """Sorted unique OFDM symbols that carry at least one pilot."""
        return np.unique(self.symbols)

    def sequence(self, t: int) -> np.ndarray:
        return self.book[:, t]

    def ue_pilot_indices(self, n_ues: int) -> np.ndarray:
        """Round-robin pilot assignment t_k = k mod n_pilots (pilot reuse when
        n_ues > n_pilots)."""
        return np.arange(n_ues) % self.n_pilots

    def global_subcarriers(self, block: int, geom: CoherenceGeometry, grid: OfdmGrid) -> np.ndarray:
        """Pilot subcarrier indices of this plan instantiated in a given block."""
        rng = geom.block_range(block, grid)
        _require(
            len(rng) == geom.block_subcarriers,
            "pilot plan can only be instantiated in a full coherence block",
        )
        return rng[0] + self.subcarriers


def build_pilot_plan(geom: CoherenceGeometry, pattern: str) -> PilotPlan:
    """Construct the pilot plan for a coherence geometry.

    pattern 'staircase': one pilot per OFDM symbol, subcarrier walking down
    from the top of the block and reflecting at the edges.
    pattern 'packed': pilots fill the first ceil(n_pilots/block_subcarriers)
    symbols top-down.
    """
    if pattern == PATTERN_STAIRCASE:
        symbols, subcarriers = _staircase_cells(geom)
    elif pattern == PATTERN_PACKED:
        symbols, subcarriers = _packed_cells(geom)
    else:
        raise ConfigError(f"unknown pilot pattern {pattern!r}")
    tp = geom.n_pilots
    a = np.arange(tp)
    book = np.exp(-2j * np.pi * np.outer(a, a) / tp)
    return PilotPlan(pattern, symbols, subcarriers, book)


@dataclass(frozen=True)
class ScenarioConfig:
    """Complete scenario: numerology, coherence geometry, pilot pattern,
    network size, oscillator quality and layout.

    gamma_ap / gamma_ue are the oscillator quality constants [s] that set the
    Wiener phase-noise increment variance 4*pi^2*f_c^2*gamma*T_s.
    tx_power and noise_power are linear watts.
    """

    grid: OfdmGrid
    coherence: CoherenceGeometry
    pilot_pattern: str = PATTERN_STAIRCASE
    n_aps: int = 10
    n_ues: int = 3
    lo_mode: str = LO_SEPARATE
    gamma_ap: float = 1e-17
    gamma_ue: float = 1e-17
    tx_power: float = 0.1  # per-UE uplink power [W]
    noise_power: float = 2e-14  # receiver noise power over the full band [W]
    ap_layout: str = "uniform"  # 'uniform' square | 'stripe' square perimeter
    ap_area_side: float = 500.0  # [m]
    ue_area_side: float = 400.0  # [m], centered inside the AP area
    beta_model: str = "log-distance"  # 'log-distance' | 'uniform'
    beta_uniform_value: float = 1.0  # used when beta_model == 'uniform'
    shadowing_std_db: float = 4.0
    min_distance: float = 1.0  # [m] distance clamp
    n_trials: int = 100
    seed: int = 0
    cp_in_lag: str = "per-eq"

    def __post_init__(self):
        _require(self.n_aps >= 1, "n_aps must be >= 1")
        _require(self.n_ues >= 1, "n_ues must be >= 1")
        _require(self.lo_mode in (LO_SEPARATE, LO_SHARED), f"unknown lo_mode {self.lo_mode!r}")
        _require(self.gamma_ap >= 0 and self.gamma_ue >= 0, "gamma must be >= 0")
        _require(self.tx_power > 0, "tx_power must be > 0")
        _require(self.noise_power > 0, "noise_power must be > 0")
        _require(self.ap_layout in ("uniform", "stripe"), f"unknown ap_layout {self.ap_layout!r}")
        _require(self.ap_area_side > 0 and self.ue_area_side > 0, "area sides must be > 0")
        _require(self.beta_model in ("log-distance", "uniform"), f"unknown beta_model {self.beta_model!r}")
        _require(self.beta_uniform_value > 0, "beta_uniform_value must be > 0")
        _require(self.min_distance > 0, "min_distance must be > 0")
        _require(self.n_trials >= 1, "n_trials must be >= 1")
        _require(self.cp_in_lag in CP_LAG_MODES, f"cp_in_lag must be one of {CP_LAG_MODES}")
        _require(
            self.grid.n_subcarriers >= self.coherence.block_subcarriers,
            "grid must fit at least one coherence block",
        )
        # fail early if the pattern cannot be built
        build_pilot_plan(self.coherence, self.pilot_pattern)

    def pilot_plan(self) -> PilotPlan:
        return build_pilot_plan(self.coherence, self.pilot_pattern)


def scenario_hash(cfg: ScenarioConfig) -> str:
    """Stable short hash of every scenario field (used to key caches,
    trained-parameter blobs, and result sidecars)."""
    import hashlib
    import json
    from dataclasses import asdict

    payload = json.dumps(asdict(cfg), sort_keys=True, default=repr)
    return hashlib.sha256(payload.encode()).hexdigest()[:16]


def thermal_noise_power(bandwidth: float, noise_figure_db: float = 7.0, temp_k: float = 290.0) -> float:
    """Receiver noise power [W] over the given bandwidth."""
    return BOLTZMANN * temp_k * bandwidth * 10 ** (noise_figure_db / 10)


def _preset_grid(n_subcarriers=667, spacing=15e3, carrier_freq=2e9) -> OfdmGrid:
    # cyclic prefix at ~7% of the symbol (normal-CP-like ratio)
    n_cp = math.ceil(0.07 * n_subcarriers)
    return OfdmGrid(n_subcarriers, n_cp, spacing, carrier_freq)


def scenario1(**overrides) -> ScenarioConfig:
    """Large deployment, separate oscillators: 200 APs and 5 UEs dropped
    uniformly in a 1 km x 1 km area, 667 subcarriers at 15 kHz spacing,
    2 GHz carrier, 100 mW uplink power, 20x12 coherence blocks with 20 pilots."""
    grid = _preset_grid()
    cfg = ScenarioConfig(
        grid=grid,
        coherence=CoherenceGeometry(block_subcarriers=12, block_symbols=20, n_pilots=20),
        pilot_pattern=PATTERN_STAIRCASE,
        n_aps=200,
        n_ues=5,
        lo_mode=LO_SEPARATE,
        tx_power=0.1,
        noise_power=thermal_noise_power(grid.bandwidth),
        ap_layout="uniform",
        ap_area_side=1000.0,
        ue_area_side=1000.0,
        n_trials=100,
    )
    return replace(cfg, **overrides) if overrides else cfg


def scenario2(n_aps: int = 20, **overrides) -> ScenarioConfig:
    """Radio-stripe deployment, shared AP oscillator: APs equidistant on the
    perimeter of a 0.5 km square, 2 UEs uniform in a centered 0.4 km square;
    numerology as in scenario1."""
    grid = _preset_grid()
    cfg = ScenarioConfig(
        grid=grid,
        coherence=CoherenceGeometry(block_subcarriers=12, block_symbols=20, n_pilots=20),
        pilot_pattern=PATTERN_STAIRCASE,
        n_aps=n_aps,
        n_ues=2,
        lo_mode=LO_SHARED,
        tx_power=0.1,
        noise_power=thermal_noise_power(grid.bandwidth),
        ap_layout="stripe",
        ap_area_side=500.0,
        ue_area_side=400.0,
        n_trials=100,
    )
    return replace(cfg, **overrides) if overrides else cfg


def desk_scenario(**overrides) -> ScenarioConfig:
    """Small profile for fast runs and tests: 64 subcarriers, 10x12 blocks with
    10 pilots, 20 APs, 2 UEs. Same spacing/carrier as the full presets so the
    per-symbol phase-noise severity matches; the AP/UE counts keep multi-user
    interference below the oscillator-induced error floors so estimator
    orderings stay resolvable at small scale."""
    grid = _preset_grid(n_subcarriers=64)
    cfg = ScenarioConfig(
        grid=grid,
        coherence=CoherenceGeometry(block_subcarriers=12, block_symbols=10, n_pilots=10),
        pilot_pattern=PATTERN_STAIRCASE,
        n_aps=20,
        n_ues=2,
        lo_mode=LO_SEPARATE,
        tx_power=0.1,
        noise_power=thermal_noise_power(grid.bandwidth),
        ap_layout="uniform",
        ap_area_side=500.0,
        ue_area_side=400.0,
        n_trials=100,
    )
    return replace(cfg, **overrides) if overrides else cfg


PRESETS = {
    "scenario1": scenario1,
    "scenario2": scenario2,
    "desk": desk_scenario,
}


# --- config file round trip (INI-style key-value sections) ---

_GRID_FIELDS = ("n_subcarriers", "n_cp", "spacing", "carrier_freq")
_COHERENCE_FIELDS = ("block_subcarriers", "block_symbols", "n_pilots")
_SCENARIO_FIELDS = (
    ("n_aps", int),
    ("n_ues", int),
    ("lo_mode", str),
    ("gamma_ap", float),
    ("gamma_ue", float),
    ("tx_power", float),
    ("noise_power", float),
    ("ap_layout", str),
    ("ap_area_side", float),
    ("ue_area_side", float),
    ("beta_model", str),
    ("beta_uniform_value", float),
    ("shadowing_std_db", float),
    ("min_distance", float),
    ("n_trials", int),
    ("seed", int),
    ("cp_in_lag", str),
)


def write_config(cfg: ScenarioConfig, path) -> None:
    """Write a scenario to a sectioned key-value file ([grid], [coherence],
    [pilots], [scenario])."""
    parser = configparser.ConfigParser()
    parser["grid"] = {
        "n_subcarriers": str(cfg.grid.n_subcarriers),
        "n_cp": str(cfg.grid.n_cp),
        "spacing": repr(cfg.grid.spacing),
        "carrier_freq": repr(cfg.grid.carrier_freq),
    }
    parser["coherence"] = {k: str(getattr(cfg.coherence, k)) for k in _COHERENCE_FIELDS}
    parser["pilots"] = {"pattern": cfg.pilot_pattern}
    parser["scenario"] = {
        name: (repr(getattr(cfg, name)) if typ is float else str(getattr(cfg, name)))
        for name, typ in _SCENARIO_FIELDS
    }
    with open(path, "w") as fh:
        parser.write(fh)


def read_config(path) -> ScenarioConfig:
    """Read a scenario file written by write_config (raises ConfigError on any
    missing section/field or invalid value)."""
    parser = configparser.ConfigParser()
    try:
        with open(path) as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(f"malformed config file {path}: {exc}") from exc
    try:
        grid = OfdmGrid(
            n_subcarriers=parser.getint("grid", "n_subcarriers"),
            n_cp=parser.getint("grid", "n_cp"),
            spacing=parser.getfloat("grid", "spacing"),
            carrier_freq=parser.getfloat("grid", "carrier_freq"),
        )
        coherence = CoherenceGeometry(
            block_subcarriers=parser.getint("coherence", "block_subcarriers"),
            block_symbols=parser.getint("coherence", "block_symbols"),
            n_pilots=parser.getint("coherence", "n_pilots"),
        )
        kwargs = {}
        for name, typ in _SCENARIO_FIELDS:
            raw = parser.get("scenario", name)
            kwargs[name] = typ(raw)
        return ScenarioConfig(
            grid=grid,
            coherence=coherence,
            pilot_pattern=parser.get("pilots", "pattern"),
            **kwargs,
        )
    except (configparser.Error, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"invalid config file {path}: {exc}") from exc
