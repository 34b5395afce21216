"""Thermally averaged alignment observables.

Every post-pulse trace of a rigid rotor is a finite cosine series

    <cos^2 theta>(t) - 1/3 = C + sum_J |a_J| cos(omega_J (t - t0) + phi_J)

with omega_J = 2 pi c B (4J+6): the constant C comes from populations and
each component from the thermally weighted J <-> J+2 coherences.  The
decomposition here is exact bookkeeping of those coherences (no numerical
Fourier transform), and doubles as the fast trace evaluator.

All trace values follow the <cos^2 theta> - 1/3 convention (0 = isotropic).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .constants import revival_period
from .dynamics import ChannelSet, kick_ensemble, sudden_ensemble, tdse_ensemble, _axis_operator
from .field import PulseSpec, xi_per_intensity
from .rotor import (
    MoleculeSpec,
    boltzmann_ensemble,
    cos2theta_diagonal,
    cos2theta_offdiag,
    raman_frequency,
    suggest_j_max,
)

_VALUE_LO, _VALUE_HI = -1.0 / 3.0, 2.0 / 3.0


@dataclass(frozen=True)
class AlignmentTrace:
    """<cos^2 theta_axis> - 1/3 on a time grid, with run metadata."""

    times: np.ndarray
    values: np.ndarray
    axis: str
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.times) != len(self.values):
            raise ValueError("times and values must have equal length")
        lo, hi = self.values.min(initial=0.0), self.values.max(initial=0.0)
        if lo < _VALUE_LO - 1e-9 or hi > _VALUE_HI + 1e-9:
            raise ValueError(f"trace values outside [-1/3, 2/3]: [{lo}, {hi}]")

    def peak(self) -> float:
        """Largest <cos^2 theta> on the grid (adds the isotropic 1/3 back)."""
        return float(self.values.max()) + 1.0 / 3.0

    def scaled(self, factor: float, axis: str | None = None) -> "AlignmentTrace":
        return AlignmentTrace(
            self.times, factor * self.values, self.axis if axis is None else axis, dict(self.metadata)
        )


@dataclass(frozen=True)
class FourierDecomposition:
    """Exact cosine-series form of a post-pulse alignment trace.

    phases follow trace(t) = constant + sum |a| cos(omega t + phi) with t
    absolute (any kick-time reference is folded into phi).
    """

    constant: float
    js: np.ndarray
    amplitudes: np.ndarray
    phases: np.ndarray
    omegas: np.ndarray
    axis: str = "y"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = len(self.js)
        if not (len(self.amplitudes) == len(self.phases) == len(self.omegas) == n):
            raise ValueError("component arrays must share one length")
        if n and self.amplitudes.min() < 0:
            raise ValueError("amplitudes must be nonnegative")

    @property
    def components(self) -> list[tuple[int, float, float, float]]:
        """(J, amplitude, phase, omega) rows, ascending J."""
        return [
            (int(j), float(a), float(p), float(w))
            for j, a, p, w in zip(self.js, self.amplitudes, self.phases, self.omegas)
        ]

    def dominant(self, count: int = 5) -> list[tuple[int, float, float, float]]:
        """The `count` largest-amplitude components."""
        order = np.argsort(self.amplitudes)[::-1][:count]
        rows = self.components
        return [rows[i] for i in order]

    def to_dict(self) -> dict:
        return {
            "C": self.constant,
            "axis": self.axis,
            "components": [
                {"J": j, "amp": a, "phase": p, "omega": w} for j, a, p, w in self.components
            ],
        }


def _chain_terms(cs: ChannelSet):
    """Per-channel constant and J+2 coherence terms for fixed-M channel sets.

    Yields (weight, const, js_low, z) with const = sum d |c|^2 - 1/3 and
    z_J = 2 m_J conj(c_{J+2}) c_J, so that the channel trace is
    const + Re(sum z_J e^{i omega_J dt}).
    """
    for ch in cs.channels:
        d = cos2theta_diagonal(ch.js, ch.m)
        const = float(d @ np.abs(ch.amplitudes) ** 2) - 1.0 / 3.0
        if len(ch.js) > 1:
            mm = cos2theta_offdiag(ch.js[:-1], ch.m)
            z = 2.0 * mm * np.conj(ch.amplitudes[1:]) * ch.amplitudes[:-1]
            yield ch.weight, const, ch.js[:-1], z
        else:
            yield ch.weight, const, ch.js[:0], np.zeros(0, dtype=complex)


def _jm_terms(cs: ChannelSet, axis: str):
    """Same contract as _chain_terms for (J,M)-lattice channel sets.

    The Delta-J = 0 block (including Delta-M = +-2 elements, which beat at
    zero frequency) feeds the constant; Delta-J = +2 entries carry omega_J.
    """
    op_cache: dict = {}
    for ch in cs.channels:
        key = (ch.basis.j_parity, ch.basis.m_parity, ch.basis.j_max)
        if key not in op_cache:
            coo = _axis_operator(ch.basis, axis).tocoo()
            dj = ch.basis.j_of[coo.row] - ch.basis.j_of[coo.col]
            stat = (coo.row[dj == 0], coo.col[dj == 0], coo.data[dj == 0])
            up = dj == 2
            op_cache[key] = (stat, (coo.row[up], coo.col[up], coo.data[up], ch.basis.j_of[coo.col[up]]))
        (sr, sc, sv), (ur, uc, uv, uj) = op_cache[key]
        c = ch.amplitudes
        const = float(np.real(np.sum(np.conj(c[sr]) * sv * c[sc]))) - 1.0 / 3.0
        terms = 2.0 * uv * np.conj(c[ur]) * c[uc]
        # collapse to one complex amplitude per lower J
        js = np.unique(uj)
        z = np.zeros(len(js), dtype=complex)
        np.add.at(z, np.searchsorted(js, uj), terms)
        yield ch.weight, const, js, z


_CHAIN_AXIS_FACTOR = {"y": 1.0, "parallel": 1.0, "x": -0.5, "z": -0.5, "perpendicular": -0.5}


def fourier_decompose(cs: ChannelSet, axis: str = "y") -> FourierDecomposition:
    """Exact cosine-series decomposition of the ensemble alignment trace.

    For fixed-M channel sets the quantization axis is the field axis (labeled
    y); the transverse axes follow from <cos^2 theta_perp> = (1 - <cos^2
    theta>)/2 as a -1/2 scaling.  (J,M)-lattice sets evaluate the requested
    lab-axis operator directly.

    An unkicked thermal ensemble is isotropic, so its series is identically
    zero; that case returns exact zeros rather than summation roundoff.
    """
    if cs.xi == 0.0:
        valid = _CHAIN_AXIS_FACTOR if cs.kind == "chain" else ("x", "y", "z")
        if axis not in valid:
            raise ValueError(f"axis must be one of {sorted(valid)}, got {axis!r}")
        meta = {"molecule": cs.molecule.name, "temperature_K": cs.temperature,
                "xi": 0.0, "j_max": cs.j_max}
        empty = np.empty(0)
        return FourierDecomposition(0.0, np.empty(0, dtype=int), empty, empty, empty, axis, meta)
    if cs.kind == "chain":
        if axis not in _CHAIN_AXIS_FACTOR:
            raise ValueError(f"axis must be one of {sorted(_CHAIN_AXIS_FACTOR)}, got {axis!r}")
        factor = _CHAIN_AXIS_FACTOR[axis]
        # hot path (called per fit evaluation): channels sharing one chain
        # shape are stacked so each group costs a few array ops
        constant = 0.0
        acc = np.zeros(cs.j_max + 1, dtype=complex)
        groups: dict[tuple[int, int, int], list] = {}
        for ch in cs.channels:
            groups.setdefault((ch.m, int(ch.js[0]), len(ch.js)), []).append(ch)
        for (m, _, n), chans in groups.items():
            js_g = chans[0].js
            amp = np.stack([ch.amplitudes for ch in chans])
            w = np.array([ch.weight for ch in chans])
            d = cos2theta_diagonal(js_g, m)
            constant += float(w @ (np.abs(amp) ** 2 @ d)) - w.sum() / 3.0
            if n > 1:
                mm = cos2theta_offdiag(js_g[:-1], m)
                acc[js_g[:-1]] += (2.0 * mm) * (w @ (np.conj(amp[:, 1:]) * amp[:, :-1]))
        agg = {int(j): acc[j] for j in np.nonzero(acc)[0]}
    else:
        if axis not in ("x", "y", "z"):
            raise ValueError(f"axis must be x, y, or z for (J,M) channel sets, got {axis!r}")
        factor, terms = 1.0, _jm_terms(cs, axis)
        constant = 0.0
        agg = {}
        for w, const, js, z in terms:
            constant += w * const
            for j, zz in zip(js, z):
                agg[int(j)] = agg.get(int(j), 0.0) + w * zz

    js = np.array(sorted(j for j, zz in agg.items() if zz != 0.0), dtype=int)
    amps = np.empty(len(js))
    phases = np.empty(len(js))
    omegas = np.array([raman_frequency(int(j), cs.molecule) for j in js])
    for k, j in enumerate(js):
        zz = factor * agg[int(j)]
        amps[k] = abs(zz)
        # fold the kick-time reference into the phase: trace is a function of
        # absolute time
        ph = math.atan2(zz.imag, zz.real) - omegas[k] * cs.reference_time
        phases[k] = math.remainder(ph, 2.0 * math.pi)
    meta = {
        "molecule": cs.molecule.name,
        "temperature_K": cs.temperature,
        "xi": cs.xi,
        "j_max": cs.j_max,
    }
    return FourierDecomposition(factor * constant, js, amps, phases, omegas, axis, meta)


def reconstruct(dec: FourierDecomposition, times) -> AlignmentTrace:
    """Evaluate the cosine series on a time grid."""
    times = np.asarray(times, dtype=float)
    values = np.full(len(times), dec.constant)
    if len(dec.js):
        values = values + dec.amplitudes @ np.cos(
            np.outer(dec.omegas, times) + dec.phases[:, None]
        )
    return AlignmentTrace(times, values, dec.axis, dict(dec.metadata))


def alignment_trace(cs: ChannelSet, axis: str, times) -> AlignmentTrace:
    """Direct weighted-channel evaluation of <cos^2 theta_axis> - 1/3.

    Independent of fourier_decompose/reconstruct in summation order and
    trigonometric form (complex exponentials per channel group); agreement to
    1e-10 is a contract between the two paths.
    """
    times = np.asarray(times, dtype=float)
    dt = times - cs.reference_time
    if cs.kind == "chain":
        if axis not in _CHAIN_AXIS_FACTOR:
            raise ValueError(f"axis must be one of {sorted(_CHAIN_AXIS_FACTOR)}, got {axis!r}")
        factor, terms = _CHAIN_AXIS_FACTOR[axis], _chain_terms(cs)
    else:
        if axis not in ("x", "y", "z"):
            raise ValueError(f"axis must be x, y, or z for (J,M) channel sets, got {axis!r}")
        factor, terms = 1.0, _jm_terms(cs, axis)

    values = np.zeros(len(times))
    # accumulate per chain shape so each group shares one phase matrix
    groups: dict[tuple[int, int], tuple[np.ndarray, np.ndarray]] = {}
    consts = 0.0
    for w, const, js, z in terms:
        consts += w * const
        if len(js) == 0:
            continue
        key = (int(js[0]), len(js))
        if key in groups:
            groups[key][1][:] += w * z
        else:
            groups[key] = (js, w * np.array(z, dtype=complex))
    for js, z in groups.values():
        om = np.array([raman_frequency(int(j), cs.molecule) for j in js])
        values += np.real(z @ np.exp(1j * np.outer(om, dt)))
    values = factor * (values + consts)
    meta = {
        "molecule": cs.molecule.name,
        "temperature_K": cs.temperature,
        "xi": cs.xi,
        "j_max": cs.j_max,
    }
    return AlignmentTrace(times, values, axis, meta)


def revival_time_grid(
    molecule: MoleculeSpec, n: int = 4096, t_start: float = 0.0, periods: float = 1.0
) -> np.ndarray:
    """Uniform grid covering `periods` revival periods from t_start."""
    tr = revival_period(molecule.b_cm1)
    return t_start + np.linspace(0.0, periods * tr, n, endpoint=False)


# ---------------------------------------------------------------------------
# Pipelines
# ---------------------------------------------------------------------------

def thermal_channel_set(
    molecule: MoleculeSpec,
    temperature: float,
    pulse: PulseSpec,
    method: str = "sudden",
    j_max: int | None = None,
    cutoff: float = 1e-6,
) -> ChannelSet:
    """Boltzmann ensemble propagated through the pump by the chosen route."""
    ens = boltzmann_ensemble(molecule, temperature, cutoff)
    if method == "sudden":
        return sudden_ensemble(molecule, ens, pulse, j_max)
    if method == "tdse":
        return tdse_ensemble(molecule, ens, pulse, j_max)
    raise ValueError(f"method must be 'sudden' or 'tdse', got {method!r}")


def max_over_period(dec: FourierDecomposition, t_start: float, period: float,
                    n: int = 4096, refine: int = 2) -> float:
    """Maximum of the reconstructed trace over [t_start, t_start + period).

    Coarse grid argmax followed by local grid refinement; the refinement
    window of one coarse step is ample because components are bounded in
    frequency.
    """
    ts = t_start + np.linspace(0.0, period, n, endpoint=False)
    vals = reconstruct(dec, ts).values
    k = int(np.argmax(vals))
    t_best, half = ts[k], period / n
    best = vals[k]
    for _ in range(refine):
        ts = np.linspace(t_best - half, t_best + half, 65)
        vals = reconstruct(dec, ts).values
        k = int(np.argmax(vals))
        t_best, best = ts[k], vals[k]
        half = 2.0 * half / 64.0
    return float(best)


@dataclass(frozen=True)
class RegimeScanResult:
    """Permanent alignment and peak transient alignment versus intensity."""

    intensities: np.ndarray
    c_values: np.ndarray
    max_values: np.ndarray  # max of <cos^2 theta> - 1/3 over one revival
    slopes: dict
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (np.all(np.isfinite(self.c_values)) and np.all(np.isfinite(self.max_values))):
            raise ValueError("scan produced non-finite values")

    @property
    def max_minus_c(self) -> np.ndarray:
        return self.max_values - self.c_values


def _loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


def regime_scan(
    molecule: MoleculeSpec,
    temperature: float,
    intensities,
    pulse_template: PulseSpec | None = None,
    low_window: tuple[float, float] = (2.0, 20.0),
    high_window: tuple[float, float] = (40.0, 80.0),
    knee: float = 30.0,
    cutoff: float = 1e-6,
    threads: int | None = None,
) -> RegimeScanResult:
    """Scan peak intensity: permanent alignment C and max-C per intensity.

    Uses the sudden-kick ensemble (the regime laws are properties of the
    kicked-rotor model itself) with j_max pinned at the largest intensity so
    eigendecompositions are shared across the scan.  Log-log slopes of C are
    fitted in the two windows, and of max-C below the saturation knee.
    Intensity points may evaluate on a small thread pool; the reduction
    order is fixed by the sorted intensity list either way.
    """
    intensities = np.asarray(sorted(float(i) for i in intensities))
    if len(intensities) < 3 or intensities[0] <= 0:
        raise ValueError("need at least 3 positive intensities")
    if pulse_template is None:
        pulse_template = PulseSpec(1.0)
    ens = boltzmann_ensemble(molecule, temperature, cutoff)
    per_i = xi_per_intensity(molecule, pulse_template.tau_fwhm_ps)
    j_max = suggest_j_max(ens.j_thermal_max, per_i * intensities[-1])
    period = revival_period(molecule.b_cm1)
    t0 = pulse_template.t0_ps

    def scan_point(ii: float) -> tuple[float, float]:
        cs = kick_ensemble(molecule, ens, per_i * ii, j_max, reference_time=t0)
        dec = fourier_decompose(cs, "y")
        return dec.constant, max_over_period(dec, t0 + 1.0, period)

    if threads is not None and threads > 1:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(max_workers=threads) as pool:
            points = list(pool.map(scan_point, intensities))
    else:
        points = [scan_point(ii) for ii in intensities]
    c_vals = np.array([p[0] for p in points])
    max_vals = np.array([p[1] for p in points])

    def window_slope(values, lo, hi):
        sel = (intensities >= lo) & (intensities <= hi) & (values > 0)
        return _loglog_slope(intensities[sel], values[sel]) if sel.sum() >= 2 else float("nan")

    slopes = {
        "c_low": window_slope(c_vals, *low_window),
        "c_high": window_slope(c_vals, *high_window),
        "max_minus_c_below_knee": window_slope(max_vals - c_vals, intensities[0], knee),
    }
    # C above the knee is a straight line with a negative intercept rather
    # than a pure power law, so report the affine fit alongside the exponent
    sel = (intensities >= high_window[0]) & (intensities <= high_window[1])
    if sel.sum() >= 2:
        coef = np.polyfit(intensities[sel], c_vals[sel], 1)
        resid = c_vals[sel] - np.polyval(coef, intensities[sel])
        total = c_vals[sel] - c_vals[sel].mean()
        ss_tot = float(total @ total)
        slopes["c_high_affine_slope"] = float(coef[0])
        slopes["c_high_affine_intercept"] = float(coef[1])
        slopes["c_high_affine_r2"] = (
            1.0 - float(resid @ resid) / ss_tot if ss_tot > 0 else float("nan")
        )
    meta = {
        "molecule": molecule.name,
        "temperature_K": temperature,
        "tau_fwhm_ps": pulse_template.tau_fwhm_ps,
        "low_window": list(low_window),
        "high_window": list(high_window),
        "knee": knee,
        "j_max": j_max,
    }
    return RegimeScanResult(intensities, c_vals, max_vals, slopes, meta)


def elliptic_approx(linear_trace: AlignmentTrace, a2: float, b2: float) -> dict[str, AlignmentTrace]:
    """Superposition approximation for an elliptic pump with amplitudes (A^2, B^2).

    Given the linear-polarization trace L(t) at the same peak intensity, the
    three lab-axis traces are (A^2 - B^2/2) L, (B^2 - A^2/2) L, and -L/2, and
    the x-y difference is (3/2)(A^2 - B^2) L.  Valid at low and moderate kick
    strength; the z trace is independent of ellipticity.
    """
    if a2 < 0 or b2 < 0 or abs(a2 + b2 - 1.0) > 1e-12:
        raise ValueError(f"need nonnegative a2, b2 with a2 + b2 = 1, got {a2}, {b2}")
    return {
        "x": linear_trace.scaled(a2 - b2 / 2.0, "x"),
        "y": linear_trace.scaled(b2 - a2 / 2.0, "y"),
        "z": linear_trace.scaled(-0.5, "z"),
        "difference": linear_trace.scaled(1.5 * (a2 - b2), "x-y"),
    }


# ---------------------------------------------------------------------------
# Export
# ---------------------------------------------------------------------------

def write_trace_csv(
    trace: AlignmentTrace, path: str, value_header: str = "value",
    header_metadata: dict | None = None,
):
    """Two-column CSV with fixed %.12e formatting for reproducible bytes.

    header_metadata entries become '# key: value' comment lines above the
    column header, in sorted key order.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key in sorted(header_metadata or {}):
            fh.write(f"# {key}: {header_metadata[key]}\n")
        fh.write(f"t_ps,{value_header}\n")
        for t, v in zip(trace.times, trace.values):
            fh.write(f"{t:.12e},{v:.12e}\n")


def write_decomposition_json(dec: FourierDecomposition, path: str):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(dec.to_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
