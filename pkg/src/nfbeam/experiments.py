"""Experiment runners producing the figure and table CSVs.

Every runner takes an :class:`ExperimentConfig`, writes its CSV(s) into
``config.output_dir`` and returns a small summary dict. CSV files start with
a ``# config_hash=...`` comment line followed by the column header; numeric
formatting is fixed, so equal configs and seeds give byte-identical files.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import jsonschema
import numpy as np

from .beamformer_freq import BeamformerConfig, block_pipeline
from .beamformer_time import (StreamingBeamformer, design_filter_bank, inverse_dft_estimate,
                              residue_filters)
from .metrics import beampattern, complexity_table, msc
from .modal_analysis import pressure_coeffs_t, velocity_coeffs_t
from .sampling import SensorArrayGeometry, nearly_uniform_sphere
from .scene_sim import (AIR_DENSITY, SAMPLE_RATE, SPEED_OF_SOUND, AcousticScene, PointSource,
                        band_noise_signal, simulate_capture, simulate_point_pressure, tone_signal)

log = logging.getLogger(__name__)

FIGURE_FILES = {
    "filters": "fig2_filters.csv",
    "pattern": "fig3_pattern.csv",
    "pattern_3d": "fig4_pattern_3d.csv",
    "radial": "fig5_radial.csv",
    "coherence": "fig6_coherence.csv",
    "complexity": "table1_complexity.csv",
}


# ------------------------------------------------------------------ configuration

@dataclass
class ArraySettings:
    num_sensors: int = 36
    radius: float = 0.08


@dataclass
class BeamformerSettings:
    order: int = 4
    sidelobe_db: float = -25.0
    focus_r: float = 0.4
    focus_theta_deg: float = 0.0
    focus_phi_deg: float = 0.0
    block_size: int = 1024
    taps: int = 240


@dataclass
class SourceSpec:
    r: float
    theta_deg: float
    phi_deg: float


def _default_sources():
    return [SourceSpec(0.4, 0, 0), SourceSpec(0.4, 90, 0), SourceSpec(0.5, 90, 90),
            SourceSpec(0.6, 90, 180), SourceSpec(0.7, 90, 270), SourceSpec(0.8, 90, 0),
            SourceSpec(2.0, 0, 0)]


@dataclass
class SceneSettings:
    """Coherence scene; the first source is the target."""

    sources: list = field(default_factory=_default_sources)
    f_l: float = 400.0
    f_h: float = 4000.0
    fir_taps: int = 64
    snr_db: float = 30.0
    duration_s: float = 10.0
    runs: int = 10
    segment: int = 4096


@dataclass
class GridSettings:
    pattern_freqs: list = field(default_factory=lambda: list(range(400, 4001, 100)))
    pattern_theta_step_deg: float = 1.0
    pattern3d_freqs: list = field(default_factory=lambda: [500, 1500, 2500, 3500])
    pattern3d_step_deg: float = 5.0
    radial_freq: float = 1000.0
    radial_r: list = field(default_factory=lambda: [0.1, 2.0, 0.02])
    radial_theta_step_deg: float = 5.0
    time_freqs: list = field(default_factory=lambda: [500, 1500, 2500, 3500])
    time_theta_step_deg: float = 15.0
    time_3d_step_deg: float = 30.0
    time_radial_r_step: float = 0.1
    time_radial_thetas_deg: list = field(default_factory=lambda: [0, 45, 90, 135, 180])
    time_capture_s: float = 0.5


@dataclass
class FilterSettings:
    orders: list = field(default_factory=lambda: [1, 2, 3])
    tau_s_ms: float = 0.23
    tau_focus_ms: float = 1.17
    t_max_ms: float = 5.0
    dft_rate_factor: int = 32
    dft_points: int = 2 ** 17


@dataclass
class ComplexitySettings:
    L_values: list = field(default_factory=lambda: [240, 360, 480, 960])
    M_values: list = field(default_factory=lambda: [256, 512, 1024, 2048])


@dataclass
class ExperimentConfig:
    scenario: str = "nearfield_focus"
    fs: float = SAMPLE_RATE
    c: float = SPEED_OF_SOUND
    rho: float = AIR_DENSITY
    seed: int = 0
    output_dir: str = "results"
    array: ArraySettings = field(default_factory=ArraySettings)
    beamformer: BeamformerSettings = field(default_factory=BeamformerSettings)
    scene: SceneSettings = field(default_factory=SceneSettings)
    grids: GridSettings = field(default_factory=GridSettings)
    filters: FilterSettings = field(default_factory=FilterSettings)
    complexity: ComplexitySettings = field(default_factory=ComplexitySettings)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """Hash of every setting except the output directory."""
        d = self.to_dict()
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()[:16]

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        jsonschema.validate(data, CONFIG_SCHEMA)
        data = dict(data)
        sections = {"array": ArraySettings, "beamformer": BeamformerSettings,
                    "grids": GridSettings, "filters": FilterSettings,
                    "complexity": ComplexitySettings}
        kw = {k: v for k, v in data.items() if k not in sections and k != "scene"}
        for name, klass in sections.items():
            if name in data:
                kw[name] = klass(**data[name])
        if "scene" in data:
            scene = dict(data["scene"])
            if "sources" in scene:
                scene["sources"] = [SourceSpec(**s) for s in scene["sources"]]
            kw["scene"] = SceneSettings(**scene)
        cfg = cls(**kw)
        cfg.validate()
        return cfg

    @classmethod
    def from_file(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def validate(self):
        if self.fs <= 2 * self.scene.f_h:
            raise ValueError("sampling rate must exceed twice the upper band edge")
        if any(s.r <= self.array.radius for s in self.scene.sources):
            raise ValueError("scene sources must lie outside the array sphere")
        if (self.beamformer.order + 1) ** 2 > self.array.num_sensors:
            raise ValueError("array has too few sensors for the beamformer order")
        if len(self.grids.radial_r) != 3:
            raise ValueError("grids.radial_r must be [start, stop, step]")

    # derived objects
    def geometry(self) -> SensorArrayGeometry:
        return nearly_uniform_sphere(self.array.num_sensors, self.array.radius, self.c)

    def beamformer_config(self) -> BeamformerConfig:
        b = self.beamformer
        return BeamformerConfig(order=b.order, focus_r=b.focus_r, focus_theta=np.radians(b.focus_theta_deg),
                                focus_phi=np.radians(b.focus_phi_deg), array_radius=self.array.radius,
                                sidelobe_db=b.sidelobe_db, block_size=b.block_size, c=self.c, rho=self.rho)


def _number(minimum=None, exclusive=False):
    s = {"type": "number"}
    if minimum is not None:
        s["exclusiveMinimum" if exclusive else "minimum"] = minimum
    return s


def _section(props: dict) -> dict:
    return {"type": "object", "properties": props, "additionalProperties": False}


_num_list = {"type": "array", "items": {"type": "number"}}
_pos_int = {"type": "integer", "minimum": 1}

CONFIG_SCHEMA = _section({
    "scenario": {"type": "string"},
    "fs": _number(0, True), "c": _number(0, True), "rho": _number(0, True),
    "seed": {"type": "integer", "minimum": 0},
    "output_dir": {"type": "string"},
    "array": _section({"num_sensors": {"type": "integer", "minimum": 4}, "radius": _number(0, True)}),
    "beamformer": _section({
        "order": _pos_int, "sidelobe_db": {"type": "number", "exclusiveMaximum": 0},
        "focus_r": _number(0, True), "focus_theta_deg": _number(), "focus_phi_deg": _number(),
        "block_size": _pos_int, "taps": _pos_int}),
    "scene": _section({
        "sources": {"type": "array", "minItems": 1, "items": {
            "type": "object", "required": ["r", "theta_deg", "phi_deg"], "additionalProperties": False,
            "properties": {"r": _number(0, True), "theta_deg": _number(), "phi_deg": _number()}}},
        "f_l": _number(0, True), "f_h": _number(0, True), "fir_taps": _pos_int, "snr_db": _number(),
        "duration_s": _number(0, True), "runs": _pos_int, "segment": _pos_int}),
    "grids": _section({
        "pattern_freqs": _num_list, "pattern_theta_step_deg": _number(0, True),
        "pattern3d_freqs": _num_list, "pattern3d_step_deg": _number(0, True),
        "radial_freq": _number(0, True), "radial_r": _num_list, "radial_theta_step_deg": _number(0, True),
        "time_freqs": _num_list, "time_theta_step_deg": _number(0, True),
        "time_3d_step_deg": _number(0, True), "time_radial_r_step": _number(0, True),
        "time_radial_thetas_deg": _num_list, "time_capture_s": _number(0, True)}),
    "filters": _section({
        "orders": {"type": "array", "items": _pos_int}, "tau_s_ms": _number(0, True),
        "tau_focus_ms": _number(0, True), "t_max_ms": _number(0, True),
        "dft_rate_factor": _pos_int, "dft_points": _pos_int}),
    "complexity": _section({
        "L_values": {"type": "array", "items": {"type": "integer", "minimum": 0}},
        "M_values": {"type": "array", "items": {"type": "integer", "minimum": 2}}}),
})


# ------------------------------------------------------------------ csv output

def _fmt(x) -> str:
    if isinstance(x, (str, np.str_)):
        return str(x)
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".10g")


def write_csv(path: Path, columns, rows, config_hash: str) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for row in rows:
            w.writerow([_fmt(x) for x in row])
    return path


def read_csv(path) -> tuple[list[str], np.ndarray]:
    """Column names and a float matrix from a CSV written by :func:`write_csv`."""
    with open(path) as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    header = next(reader)
    return header, np.array([[float(x) for x in row] for row in reader])


# ------------------------------------------------------------------ filters

def run_filters(config: ExperimentConfig) -> dict:
    """Analytic modal filters against their inverse-DFT estimate."""
    fc = config.filters
    ts, tf = fc.tau_s_ms * 1e-3, fc.tau_focus_ms * 1e-3
    t = np.arange(int(round(fc.t_max_ms * 1e-3 * config.fs)) + 1) / config.fs
    rows, summary = [], {}
    for u in fc.orders:
        for which, g in zip((1, 2), residue_filters(u, ts, tf)):
            analytic = g(t)
            estimate = inverse_dft_estimate(u, t, ts, tf, which, config.fs * fc.dft_rate_factor, fc.dft_points)
            rel = np.linalg.norm(analytic - estimate) / np.linalg.norm(analytic)
            late = np.max(np.abs(analytic[t > 4e-3]), initial=0.0) / np.max(np.abs(analytic))
            summary[f"g{which}_u{u}"] = {"rel_l2": float(rel), "late_fraction": float(late)}
            rows += [(u, f"g{which}", 1e3 * tk, a, e) for tk, a, e in zip(t, analytic, estimate)]
    write_csv(Path(config.output_dir) / FIGURE_FILES["filters"], ["u", "filter_id", "t_ms", "analytic", "dft_estimate"],
              rows, config.config_hash())
    return summary


# ------------------------------------------------------------------ beampatterns

def _signed_theta_cut(r: float, step: float) -> tuple[np.ndarray, np.ndarray]:
    """Points on the x-z half-plane cut, ``theta`` signed in [-180, 180]."""
    signed = np.arange(-180.0, 180.0 + step / 2, step)
    pts = np.column_stack([np.full(signed.size, r), np.radians(np.abs(signed)),
                           np.where(signed < 0, np.pi, 0.0)])
    return signed, pts


def _sphere_grid(r: float, step: float) -> np.ndarray:
    th = np.arange(0.0, 180.0 + step / 2, step)
    ph = np.arange(0.0, 360.0, step)
    T, P = np.meshgrid(th, ph, indexing="ij")
    return np.column_stack([np.full(T.size, r), np.radians(T.ravel()), np.radians(P.ravel())])


def _radial_grid(r_values, thetas_deg) -> tuple[np.ndarray, np.ndarray]:
    signed = np.asarray(thetas_deg, dtype=float)
    R, S = np.meshgrid(r_values, signed, indexing="ij")
    S = S.ravel()
    pts = np.column_stack([R.ravel(), np.radians(np.abs(S)), np.where(S < 0, np.pi, 0.0)])
    return S, pts


def _db(mag: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return 20 * np.log10(mag / mag.max())


def tone_responses(config: ExperimentConfig, points, freqs, capture_s: float | None = None,
                   geometry: SensorArrayGeometry | None = None):
    """Steady-state complex tone gains of both beamformer implementations.

    For every point a noiseless capture of a multi-tone point source is
    simulated and run through the streaming time-domain beamformer and the
    block-DFT pipeline. Gains are read from a DFT window that ends one block
    before the capture end and spans an integer number of tone periods when
    the tones sit on multiples of ``fs / window``.

    Returns ``(time_gain, block_gain)``, each ``(n_freq, n_points)``.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    freqs = np.atleast_1d(np.asarray(freqs, dtype=float))
    fs = config.fs
    T = int(round((capture_s or config.grids.time_capture_s) * fs))
    bcfg = config.beamformer_config()
    geometry = geometry or config.geometry()
    bank = design_filter_bank(bcfg.order, bcfg.tau_s, bcfg.tau_focus, fs, config.beamformer.taps)
    M = bcfg.block_size
    window = int(fs // 5)
    stop = T - M
    start = stop - window
    if start < 4 * M:
        raise ValueError("capture too short for a steady-state tone measurement")
    n = np.arange(start, stop)
    probe = np.exp(-2j * np.pi * freqs[:, None] * n[None, :] / fs)
    tones = sum(tone_signal(T, f, fs) for f in freqs)
    time_gain = np.empty((freqs.size, points.shape[0]), dtype=complex)
    block_gain = np.empty_like(time_gain)
    for j, (r, th, ph) in enumerate(points):
        scene = AcousticScene([PointSource(r, th, ph, tones)], config.c, config.rho, fs, snr_db=None)
        cap = simulate_capture(scene, geometry)
        streamer = StreamingBeamformer(bank, geometry, bcfg.alpha, bcfg.focus_theta, bcfg.focus_phi,
                                       config.rho, config.c)
        bt = streamer.process(cap.pressure, cap.radial_velocity)
        bf = block_pipeline(cap, bcfg, geometry)
        time_gain[:, j] = 2 * probe @ bt[n] / window
        block_gain[:, j] = 2 * probe @ bf[n] / window
    return time_gain, block_gain


def run_beampattern(config: ExperimentConfig, mode: str = "freq") -> dict:
    """Beampattern CSVs: theta cut, full sphere and radial cut.

    ``freq`` evaluates the frequency-domain beamformer analytically on fine
    grids; ``time`` simulates captures and runs both implementations on
    coarser grids, adding a ``block_db`` column for the block pipeline.
    """
    if mode not in ("freq", "time"):
        raise ValueError(f"unknown beampattern mode {mode!r} (expected 'freq' or 'time')")
    g = config.grids
    r0 = config.beamformer.focus_r
    h = config.config_hash()
    out = Path(config.output_dir)
    r_lo, r_hi, r_step = g.radial_r
    cols = ["frequency_hz", "r_m", "theta_deg", "phi_deg", "magnitude_db"]
    summary = {}

    if mode == "freq":
        bcfg = config.beamformer_config()
        signed, pts = _signed_theta_cut(r0, g.pattern_theta_step_deg)
        grid = beampattern(bcfg, pts, g.pattern_freqs)
        db = grid.magnitude_db
        rows = [(f, r0, s, 0.0, db[i, j]) for i, f in enumerate(g.pattern_freqs) for j, s in enumerate(signed)]
        write_csv(out / FIGURE_FILES["pattern"], cols, rows, h)

        pts3 = _sphere_grid(r0, g.pattern3d_step_deg)
        grid3 = beampattern(bcfg, pts3, g.pattern3d_freqs)
        db3 = grid3.magnitude_db
        rows = [(f, r0, np.degrees(p[1]), np.degrees(p[2]), db3[i, j])
                for i, f in enumerate(g.pattern3d_freqs) for j, p in enumerate(pts3)]
        write_csv(out / FIGURE_FILES["pattern_3d"], cols, rows, h)

        r_values = np.arange(r_lo, r_hi + r_step / 2, r_step)
        thetas = np.arange(-180.0, 180.0 + g.radial_theta_step_deg / 2, g.radial_theta_step_deg)
        signed_r, pts_r = _radial_grid(r_values, thetas)
        gridr = beampattern(bcfg, pts_r, [g.radial_freq])
        dbr = gridr.magnitude_db[0]
        rows = [(g.radial_freq, p[0], s, 0.0, dbr[j]) for j, (s, p) in enumerate(zip(signed_r, pts_r))]
        write_csv(out / FIGURE_FILES["radial"], cols, rows, h)
        focus_idx = np.argmin(np.hypot(pts_r[:, 0] - r0, signed_r))
        far_idx = np.argmin(np.hypot(pts_r[:, 0] - 2.0, signed_r))
        summary["radial_far_db"] = float(dbr[far_idx] - dbr[focus_idx])
        return summary

    cols_t = cols + ["block_db"]
    geometry = config.geometry()

    def emit(name, freqs, pts, signed_theta=None):
        tg, bg = tone_responses(config, pts, freqs, geometry=geometry)
        tdb, bdb = _db(np.abs(tg)), _db(np.abs(bg))
        theta_col = signed_theta if signed_theta is not None else np.degrees(pts[:, 1])
        rows = [(f, p[0], theta_col[j], np.degrees(p[2]) if signed_theta is None else 0.0, tdb[i, j], bdb[i, j])
                for i, f in enumerate(freqs) for j, p in enumerate(pts)]
        write_csv(out / FIGURE_FILES[name], cols_t, rows, h)
        finite = np.isfinite(tdb) & np.isfinite(bdb)
        summary[f"{name}_max_abs_diff_db"] = float(np.max(np.abs(tdb - bdb)[finite]))

    step = g.time_theta_step_deg
    signed = np.arange(-180.0, 180.0, step)
    pts = np.column_stack([np.full(signed.size, r0), np.radians(np.abs(signed)), np.where(signed < 0, np.pi, 0.0)])
    log.info("time-mode theta cut: %d directions", signed.size)
    emit("pattern", g.time_freqs, pts, signed)
    pts3 = _sphere_grid(r0, g.time_3d_step_deg)
    log.info("time-mode sphere grid: %d directions", pts3.shape[0])
    emit("pattern_3d", g.time_freqs, pts3)
    r_values = np.arange(r_lo, r_hi + g.time_radial_r_step / 2, g.time_radial_r_step)
    r_values = r_values[r_values > config.array.radius]
    signed_r, pts_r = _radial_grid(r_values, g.time_radial_thetas_deg)
    log.info("time-mode radial grid: %d points", pts_r.shape[0])
    emit("radial", [g.radial_freq], pts_r, signed_r)
    return summary


# ------------------------------------------------------------------ coherence

def run_seeds(master_seed: int, runs: int) -> list[np.random.SeedSequence]:
    """Independent per-run seed sequences derived from the master seed."""
    return np.random.SeedSequence(master_seed).spawn(runs)


def coherence_run(config: ExperimentConfig, seed: np.random.SeedSequence,
                  geometry: SensorArrayGeometry | None = None, bank=None):
    """One coherence trial. Returns ``(f, C_beamformer, C_omni)``.

    The reference is the target source signal; the beamformer is the
    streaming time-domain one, and the comparison is a noisy omni
    microphone at the origin.
    """
    sc = config.scene
    geometry = geometry or config.geometry()
    bcfg = config.beamformer_config()
    if bank is None:
        bank = design_filter_bank(bcfg.order, bcfg.tau_s, bcfg.tau_focus, config.fs, config.beamformer.taps)
    T = int(round(sc.duration_s * config.fs))
    src_seeds = seed.spawn(len(sc.sources) + 2)
    signals = [band_noise_signal(T, sc.f_l, sc.f_h, sc.fir_taps, s, config.fs) for s in src_seeds[:-2]]
    sources = [PointSource(s.r, np.radians(s.theta_deg), np.radians(s.phi_deg), x)
               for s, x in zip(sc.sources, signals)]
    scene = AcousticScene(sources, config.c, config.rho, config.fs, sc.snr_db)
    cap = simulate_capture(scene, geometry, noise_seed=src_seeds[-2])
    streamer = StreamingBeamformer(bank, geometry, bcfg.alpha, bcfg.focus_theta, bcfg.focus_phi,
                                   config.rho, config.c)
    b = streamer.process(cap.pressure, cap.radial_velocity)
    omni = simulate_point_pressure(scene, np.zeros(3), T, np.random.default_rng(src_seeds[-1]))
    f, c_bf = msc(signals[0], b, sc.segment, config.fs)
    _, c_omni = msc(signals[0], omni, sc.segment, config.fs)
    return f, c_bf, c_omni


def run_coherence(config: ExperimentConfig) -> dict:
    """Coherence of the target signal with the beamformer output and with an omni microphone."""
    sc = config.scene
    geometry = config.geometry()
    bcfg = config.beamformer_config()
    bank = design_filter_bank(bcfg.order, bcfg.tau_s, bcfg.tau_focus, config.fs, config.beamformer.taps)
    acc_bf, acc_omni = [], []
    for k, seed in enumerate(run_seeds(config.seed, sc.runs)):
        log.info("coherence run %d/%d", k + 1, sc.runs)
        f, c_bf, c_omni = coherence_run(config, seed, geometry, bank)
        acc_bf.append(c_bf)
        acc_omni.append(c_omni)
    c_bf, c_omni = np.mean(acc_bf, axis=0), np.mean(acc_omni, axis=0)
    band = (f >= sc.f_l) & (f <= sc.f_h)
    rows = [(fk, cb, co, int(ib)) for fk, cb, co, ib in zip(f, c_bf, c_omni, band)]
    write_csv(Path(config.output_dir) / FIGURE_FILES["coherence"],
              ["frequency_hz", "coherence_beamformer", "coherence_omni", "in_band"], rows, config.config_hash())
    return {"mean_beamformer": float(c_bf[band].mean()), "mean_omni": float(c_omni[band].mean()),
            "runs": sc.runs}


# ------------------------------------------------------------------ complexity

def run_complexity(config: ExperimentConfig) -> dict:
    cc, sc = config.complexity, config.scene
    rows = complexity_table(cc.L_values, cc.M_values, sc.f_l, sc.f_h, config.fs)
    out = [(r.method, r.parameter, r.value, r.multiplications, r.latency_samples,
            "" if r.detailed_multiplications is None else r.detailed_multiplications) for r in rows]
    write_csv(Path(config.output_dir) / FIGURE_FILES["complexity"],
              ["method", "parameter", "value", "multiplications", "latency_samples", "detailed_multiplications"],
              out, config.config_hash())
    return {f"{r.method}_{r.value}": (r.multiplications, r.latency_samples) for r in rows}


def run_all(config: ExperimentConfig, mode: str = "freq") -> dict:
    return {"filters": run_filters(config),
            "beampattern": run_beampattern(config, mode),
            "coherence": run_coherence(config),
            "complexity": run_complexity(config)}
