"""Wavepacket propagation through the pump interaction.

Three routes with one physical model:

  * propagate_sudden: instantaneous kick exp(i xi cos^2 theta), exact
    unitaries from eigendecompositions of the fixed-M tridiagonal blocks
    (linear polarization) or sparse exponentials on the coupled (J,M)
    lattice (elliptic).
  * propagate_tdse_linear: numerical integration of the time-dependent
    Schroedinger equation for a finite linearly polarized pulse.
  * propagate_elliptic_tdse: the brute-force oracle for elliptic fields,
    interaction A^2 cos^2 theta_x + B^2 cos^2 theta_y on the (J,M) lattice.

The TDSE routes integrate in the interaction picture anchored at the pulse
center, so the stiff rotational phases never enter the integrator; outside
the pulse window free evolution is applied analytically as phase factors.

Ensemble drivers batch all thermal channels that share a (|M|, J-parity)
block into single linear-algebra calls; the reduction order is fixed, so
reruns are bit-identical.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass, replace
from typing import Union

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg
from scipy.integrate import solve_ivp

from .field import EffectiveArea, PulseSpec, effective_area, envelope_intensity, pulse_window
from .rotor import (
    BasisSpec,
    JMBasis,
    MoleculeSpec,
    ThermalEnsemble,
    cos2theta_axis_matrix,
    cos2theta_diagonal,
    cos2theta_offdiag,
    rotational_omega,
    suggest_j_max,
)
from .constants import XI_PER_A3_FLUENCE

EDGE_POPULATION_TOL = 1e-8  # max weighted population allowed in the top two J shells


class PropagationError(RuntimeError):
    """Base class for numerical propagation failures."""


class BasisTooSmallError(PropagationError):
    """Norm leaked into the top rotational shells; j_max must grow."""


class IntegrationError(PropagationError):
    """The adaptive integrator failed to meet its tolerance."""


@dataclass(frozen=True)
class PropagationGrid:
    """Time window and integrator controls for TDSE propagation."""

    t_start: float
    t_end: float
    max_step: float | None = None
    relative_tolerance: float = 1e-8

    def __post_init__(self):
        if not self.t_start < self.t_end:
            raise ValueError(f"need t_start < t_end, got [{self.t_start}, {self.t_end}]")
        if not (0.0 < self.relative_tolerance <= 1e-4):
            raise ValueError(
                f"relative tolerance must be in (0, 1e-4], got {self.relative_tolerance}"
            )


def default_grid(pulse: PulseSpec, relative_tolerance: float = 1e-8) -> PropagationGrid:
    """Grid spanning the +-3 FWHM pulse window."""
    t_lo, t_hi = pulse_window(pulse)
    return PropagationGrid(t_lo, t_hi, relative_tolerance=relative_tolerance)


@dataclass(frozen=True)
class Wavepacket:
    """Rotational state of one channel.

    Amplitudes live on basis.j_values for a fixed-M ladder (BasisSpec) or on
    basis.pairs for the coupled (J,M) lattice (JMBasis).  reference_time is
    the instant the amplitudes refer to; free evolution to any other time is
    a diagonal phase.
    """

    basis: Union[BasisSpec, JMBasis]
    origin: tuple[int, int]
    amplitudes: np.ndarray
    reference_time: float = 0.0

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def populations(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def j_labels(self) -> np.ndarray:
        if isinstance(self.basis, BasisSpec):
            return self.basis.j_values
        return self.basis.j_of

    def freely_evolved(self, t: float, molecule: MoleculeSpec) -> np.ndarray:
        """Schroedinger-picture amplitudes at time t under free rotation."""
        omega = rotational_omega(self.j_labels(), molecule)
        return self.amplitudes * np.exp(-1j * omega * (t - self.reference_time))


def basis_state(basis: Union[BasisSpec, JMBasis], j0: int, m0: int, t: float = 0.0) -> Wavepacket:
    """Unit wavepacket concentrated on |j0, m0>."""
    if isinstance(basis, BasisSpec):
        if abs(m0) != abs(basis.m):
            raise ValueError(f"basis carries M={basis.m}, requested M0={m0}")
        if not abs(m0) <= j0 <= basis.j_max:
            raise ValueError(f"(J0, M0) = ({j0}, {m0}) outside the ladder")
        idx = j0 - abs(basis.m)
        n = len(basis.j_values)
    else:
        key = (j0, m0)
        if key not in basis.index:
            raise ValueError(f"(J0, M0) = {key} not in the (J,M) basis")
        idx = basis.index[key]
        n = len(basis)
    amps = np.zeros(n, dtype=complex)
    amps[idx] = 1.0
    return Wavepacket(basis, (j0, m0), amps, t)


# ---------------------------------------------------------------------------
# Fixed-M parity chains and their kick eigendecompositions
# ---------------------------------------------------------------------------

def chain_js(j_max: int, m: int, parity: int) -> np.ndarray:
    """J values of one Delta-J = 2 chain at fixed |M|, given J parity."""
    m = abs(m)
    start = m if m % 2 == parity else m + 1
    return np.arange(start, j_max + 1, 2)


_chain_cache: dict[tuple[int, int, int], tuple[np.ndarray, np.ndarray, np.ndarray]] = {}
_chain_lock = threading.Lock()


def _chain_eig(m: int, parity: int, j_max: int):
    """Eigendecomposition of cos^2 theta restricted to one parity chain.

    Returns (js, eigenvalues, eigenvectors); cached since every thermal
    channel with the same |M| and parity shares it.
    """
    key = (abs(m), parity, j_max)
    with _chain_lock:
        hit = _chain_cache.get(key)
    if hit is not None:
        return hit
    js = chain_js(j_max, m, parity)
    if len(js) == 0:
        raise ValueError(f"empty chain for M={m}, parity={parity}, j_max={j_max}")
    diag = cos2theta_diagonal(js, abs(m))
    off = cos2theta_offdiag(js[:-1], abs(m)) if len(js) > 1 else np.zeros(0)
    evals, evecs = scipy.linalg.eigh_tridiagonal(diag, off)
    entry = (js, evals, evecs)
    with _chain_lock:
        _chain_cache[key] = entry
    return entry


def clear_caches():
    """Drop cached eigendecompositions and operator matrices (for tests)."""
    with _chain_lock:
        _chain_cache.clear()
    with _op_lock:
        _op_cache.clear()


def kick_chain(amps: np.ndarray, xi: float, m: int, js: np.ndarray, j_max: int) -> np.ndarray:
    """Apply exp(i xi cos^2 theta) to chain amplitudes (js defines the chain)."""
    _, evals, evecs = _chain_eig(m, int(js[0] % 2), j_max)
    return (evecs * np.exp(1j * xi * evals)) @ (evecs.T @ amps)


_op_cache: dict[tuple, scipy.sparse.csr_matrix] = {}
_op_lock = threading.Lock()


def _axis_operator(basis: JMBasis, axis: str) -> scipy.sparse.csr_matrix:
    key = (basis.j_max, basis.j_parity, basis.m_parity, axis)
    with _op_lock:
        hit = _op_cache.get(key)
    if hit is not None:
        return hit
    mat = cos2theta_axis_matrix(basis, axis)
    with _op_lock:
        _op_cache[key] = mat
    return mat


# ---------------------------------------------------------------------------
# Norm bookkeeping
# ---------------------------------------------------------------------------

def _require_normalized(amps: np.ndarray):
    n = np.linalg.norm(amps)
    if abs(n - 1.0) > 1e-6:
        raise ValueError(f"input wavepacket must be normalized, got norm {n!r}")


def _edge_population(amps: np.ndarray, j_of: np.ndarray, j_max: int) -> float:
    """Population in the top two J shells of the basis."""
    mask = j_of >= j_max - 1
    return float(np.sum(np.abs(amps[mask]) ** 2))


def _check_edge(amps: np.ndarray, j_of: np.ndarray, j_max: int):
    leak = _edge_population(amps, j_of, j_max)
    if leak > EDGE_POPULATION_TOL:
        raise BasisTooSmallError(
            f"population {leak:.2e} in the top two J shells exceeds "
            f"{EDGE_POPULATION_TOL:.0e}; increase j_max beyond {j_max}"
        )


# ---------------------------------------------------------------------------
# Sudden (delta-kick) propagation
# ---------------------------------------------------------------------------

def propagate_sudden(
    wp: Wavepacket, area: EffectiveArea, a2: float = 0.0, b2: float = 1.0
) -> Wavepacket:
    """Instantaneous kick exp(i xi B^2 cos^2 theta_y) exp(i xi A^2 cos^2 theta_x).

    On a fixed-M ladder (linear polarization, quantization along the field)
    this is a single kick of strength xi; the (J,M) lattice handles general
    ellipticity, applying the y factor first.  Unitary to machine precision.
    """
    _require_normalized(wp.amplitudes)
    xi = area.xi
    if isinstance(wp.basis, BasisSpec):
        if min(a2, b2) > 1e-12:
            raise ValueError("elliptic kick needs a full (J,M) basis, not a fixed-M ladder")
        out = np.array(wp.amplitudes, dtype=complex)
        js = wp.basis.j_values
        if xi * (a2 + b2) != 0.0:
            for parity in (0, 1):
                sel = np.nonzero(js % 2 == parity)[0]
                if len(sel) and np.any(out[sel] != 0.0):
                    out[sel] = kick_chain(
                        out[sel], xi * (a2 + b2), wp.basis.m, js[sel], wp.basis.j_max
                    )
        _check_edge(out, js, wp.basis.j_max)
        return replace(wp, amplitudes=out)

    basis = wp.basis
    out = np.array(wp.amplitudes, dtype=complex)
    if xi * b2 != 0.0:
        cy = _axis_operator(basis, "y")
        out = scipy.sparse.linalg.expm_multiply(1j * xi * b2 * cy, out)
    if xi * a2 != 0.0:
        cx = _axis_operator(basis, "x")
        out = scipy.sparse.linalg.expm_multiply(1j * xi * a2 * cx, out)
    _check_edge(out, basis.j_of, basis.j_max)
    return replace(wp, amplitudes=out)


# ---------------------------------------------------------------------------
# TDSE propagation (interaction picture)
# ---------------------------------------------------------------------------

def _integrate_interaction(y0, omega, apply_coupling, pulse, molecule, grid, n_cols=1):
    """Integrate da/dt = i (dxi/dt)(t) D(t) C D*(t) a over the pulse window.

    a is the interaction-picture state anchored at the pulse center (D =
    exp(i omega (t - t0))); y0 may hold n_cols stacked channel columns.
    Returns the interaction-picture state after the pulse.
    """
    t_lo, t_hi = pulse_window(pulse)
    ta, tb = max(grid.t_start, t_lo), min(grid.t_end, t_hi)
    if ta >= tb or pulse.peak_intensity == 0.0:
        return np.array(y0, dtype=complex)
    rate = XI_PER_A3_FLUENCE * molecule.delta_alpha_a3
    t0 = pulse.t0_ps

    if n_cols == 1:
        def rhs(t, y):
            ph = np.exp(1j * (omega * (t - t0)))
            g = rate * envelope_intensity(pulse, t)
            return (1j * g) * (ph * apply_coupling(np.conj(ph) * y))
    else:
        n = len(omega)

        def rhs(t, y):
            ph = np.exp(1j * (omega * (t - t0)))
            g = rate * envelope_intensity(pulse, t)
            yy = y.reshape(n, n_cols)
            coupled = apply_coupling(np.conj(ph)[:, None] * yy)
            return ((1j * g) * (ph[:, None] * coupled)).ravel()

    sol = solve_ivp(
        rhs,
        (ta, tb),
        np.asarray(y0, dtype=complex).ravel(),
        method="DOP853",
        rtol=grid.relative_tolerance,
        atol=1e-12,
        max_step=np.inf if grid.max_step is None else grid.max_step,
        dense_output=False,
    )
    if not sol.success:
        raise IntegrationError(f"TDSE integration failed: {sol.message}")
    return sol.y[:, -1].reshape(y0.shape) if n_cols > 1 else sol.y[:, -1]


def propagate_tdse_linear(
    wp: Wavepacket, pulse: PulseSpec, molecule: MoleculeSpec, grid: PropagationGrid | None = None
) -> Wavepacket:
    """Finite-pulse propagation for a linearly polarized pump on a fixed-M ladder.

    The Hamiltonian is B J(J+1) - hbar (dxi/dt)(t) cos^2 theta with the field
    axis as quantization axis.  Returns amplitudes at grid.t_end (free
    evolution applied analytically outside the pulse window).
    """
    if not isinstance(wp.basis, BasisSpec):
        raise ValueError("linear TDSE runs on a fixed-M ladder; use propagate_elliptic_tdse")
    if not pulse.is_linear():
        raise ValueError("pulse must be linearly polarized for the fixed-M path")
    _require_normalized(wp.amplitudes)
    if grid is None:
        grid = default_grid(pulse)
    js = wp.basis.j_values
    omega = rotational_omega(js, molecule)
    # interaction-picture state at the anchor t0, from the state at reference_time
    a = wp.amplitudes * np.exp(-1j * omega * (pulse.t0_ps - wp.reference_time))

    out = np.array(a, dtype=complex)
    m = abs(wp.basis.m)
    for parity in (0, 1):
        sel = np.nonzero(js % 2 == parity)[0]
        if len(sel) == 0 or not np.any(out[sel] != 0.0):
            continue
        cjs = js[sel]
        diag = cos2theta_diagonal(cjs, m)
        off = cos2theta_offdiag(cjs[:-1], m) if len(cjs) > 1 else np.zeros(0)

        def apply_coupling(v, diag=diag, off=off):
            w = diag * v
            if len(off):
                w[:-1] += off * v[1:]
                w[1:] += off * v[:-1]
            return w

        out[sel] = _integrate_interaction(out[sel], omega[sel], apply_coupling, pulse, molecule, grid)
    # back to the Schroedinger picture at t_end
    out = out * np.exp(-1j * omega * (grid.t_end - pulse.t0_ps))
    _check_edge(out, js, wp.basis.j_max)
    return replace(wp, amplitudes=out, reference_time=grid.t_end)


def propagate_elliptic_tdse(
    wp: Wavepacket, pulse: PulseSpec, molecule: MoleculeSpec, grid: PropagationGrid | None = None
) -> Wavepacket:
    """Finite-pulse propagation on the (J,M) lattice for arbitrary ellipticity.

    Interaction -(dxi/dt)(t) [A^2 cos^2 theta_x + B^2 cos^2 theta_y] with
    quantization along the propagation axis z; couples Delta-M = 0, +-2 and
    conserves both J and M parity.
    """
    if not isinstance(wp.basis, JMBasis):
        raise ValueError("elliptic TDSE needs a full (J,M) basis")
    _require_normalized(wp.amplitudes)
    if grid is None:
        grid = default_grid(pulse)
    basis = wp.basis
    omega = rotational_omega(basis.j_of, molecule)
    coupling = (pulse.a2 * _axis_operator(basis, "x") + pulse.b2 * _axis_operator(basis, "y")).tocsr()

    a = wp.amplitudes * np.exp(-1j * omega * (pulse.t0_ps - wp.reference_time))
    a = _integrate_interaction(a, omega, coupling.dot, pulse, molecule, grid)
    out = a * np.exp(-1j * omega * (grid.t_end - pulse.t0_ps))
    _check_edge(out, basis.j_of, basis.j_max)
    return replace(wp, amplitudes=out, reference_time=grid.t_end)


# ---------------------------------------------------------------------------
# Thermal-ensemble drivers
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChainChannel:
    """One propagated fixed-M channel: amplitudes over the J chain `js`."""

    j0: int
    m: int
    weight: float
    js: np.ndarray
    amplitudes: np.ndarray


@dataclass(frozen=True)
class JMChannel:
    """One propagated (J,M)-lattice channel."""

    j0: int
    m0: int
    weight: float
    basis: JMBasis
    amplitudes: np.ndarray


@dataclass(frozen=True)
class ChannelSet:
    """Thermally weighted propagated channels, ready for observables.

    Amplitudes are Schroedinger-picture at reference_time (the pulse center
    for the TDSE drivers, valid for post-pulse evaluation); free evolution to
    any later time is analytic.
    """

    molecule: MoleculeSpec
    temperature: float
    reference_time: float
    kind: str  # "chain" or "jm"
    channels: tuple
    j_max: int
    xi: float

    @property
    def total_weight(self) -> float:
        return float(sum(c.weight for c in self.channels))


def _grouped_channels(ensemble: ThermalEnsemble):
    """Group (J0, M0, w) channels by (|M0|, J0 parity), preserving order."""
    groups: dict[tuple[int, int], list[tuple[int, int, float]]] = {}
    for j0, m0, w in ensemble.channels:
        groups.setdefault((abs(m0), j0 % 2), []).append((j0, m0, w))
    return groups


def _require_origins(ensemble: ThermalEnsemble, j_max: int):
    top = max(j0 for j0, _, _ in ensemble.channels)
    if top > j_max:
        raise BasisTooSmallError(
            f"thermal origin J={top} exceeds j_max={j_max}; the basis cannot "
            "hold the initial ensemble"
        )


def _weighted_edge_leak(channels) -> float:
    leak = 0.0
    for ch in channels:
        if isinstance(ch, ChainChannel):
            j_of, j_top = ch.js, ch.js[-1]
            mask = j_of >= j_top - 1
            leak += ch.weight * float(np.sum(np.abs(ch.amplitudes[mask]) ** 2))
        else:
            leak += ch.weight * _edge_population(ch.amplitudes, ch.basis.j_of, ch.basis.j_max)
    return leak


def kick_ensemble(
    molecule: MoleculeSpec,
    ensemble: ThermalEnsemble,
    xi: float,
    j_max: int | None = None,
    reference_time: float = 0.0,
    max_regrow: int = 3,
) -> ChannelSet:
    """Sudden-kick propagation of every thermal channel (linear polarization).

    Channels sharing a (|M0|, parity) block reuse one eigendecomposition; the
    kick unitary is built once per block and its columns are the propagated
    basis states.  A norm-leak guard regrows j_max automatically.
    """
    if xi < 0:
        raise ValueError(f"kick strength must be nonnegative, got {xi}")
    if j_max is None:
        j_max = suggest_j_max(ensemble.j_thermal_max, xi)
    else:
        max_regrow = 0  # an explicit basis is a contract: fail instead of resizing
    _require_origins(ensemble, j_max)
    if xi == 0.0:
        # exact identity: no eigensolve, no GEMM roundoff on the amplitudes
        channels = []
        for j0, m0, w in ensemble.channels:
            js = chain_js(j_max, abs(m0), j0 % 2)
            amps = np.zeros(len(js), dtype=complex)
            amps[int(np.searchsorted(js, j0))] = 1.0
            channels.append(ChainChannel(j0, abs(m0), w, js, amps))
        return ChannelSet(
            molecule, ensemble.temperature, reference_time, "chain", tuple(channels), j_max, 0.0
        )
    for _ in range(max_regrow + 1):
        channels: list[ChainChannel] = []
        for (m, parity), members in _grouped_channels(ensemble).items():
            js, evals, evecs = _chain_eig(m, parity, j_max)
            pos = {j: k for k, j in enumerate(js)}
            # kick-unitary columns for the needed origins only, batched per
            # block as two real GEMMs: U E = V (e^{i xi lambda} * V^T E)
            b = evecs[[pos[j0] for j0, _, _ in members], :].T
            re = evecs @ (np.cos(xi * evals)[:, None] * b)
            im = evecs @ (np.sin(xi * evals)[:, None] * b)
            for k, (j0, m0, w) in enumerate(members):
                channels.append(
                    ChainChannel(j0, abs(m0), w, js, re[:, k] + 1j * im[:, k])
                )
        if _weighted_edge_leak(channels) <= EDGE_POPULATION_TOL:
            return ChannelSet(
                molecule, ensemble.temperature, reference_time, "chain", tuple(channels), j_max, xi
            )
        if max_regrow == 0:
            raise BasisTooSmallError(
                f"kick populates the basis edge at j_max={j_max}; enlarge j_max"
            )
        j_max = int(j_max * 1.5) + 10
    raise BasisTooSmallError(f"norm leak persists after regrowing j_max to {j_max}")


def sudden_ensemble(
    molecule: MoleculeSpec,
    ensemble: ThermalEnsemble,
    pulse: PulseSpec,
    j_max: int | None = None,
) -> ChannelSet:
    """Sudden-kick ensemble driver parameterized by a linearly polarized pulse."""
    if not pulse.is_linear():
        raise ValueError("sudden_ensemble handles linear polarization; see elliptic drivers")
    xi = effective_area(pulse, molecule).xi
    return kick_ensemble(molecule, ensemble, xi, j_max, reference_time=pulse.t0_ps)


def tdse_ensemble(
    molecule: MoleculeSpec,
    ensemble: ThermalEnsemble,
    pulse: PulseSpec,
    j_max: int | None = None,
    grid: PropagationGrid | None = None,
    max_regrow: int = 2,
) -> ChannelSet:
    """Finite-pulse TDSE propagation of the whole thermal ensemble.

    All channels are stacked into one block-diagonal interaction-picture
    system and integrated in a single adaptive solve; amplitudes come back
    referenced to the pulse center, so downstream free evolution matches the
    sudden driver's convention.
    """
    if not pulse.is_linear():
        raise ValueError("tdse_ensemble handles linear polarization; see elliptic drivers")
    xi = effective_area(pulse, molecule).xi
    if j_max is None:
        j_max = suggest_j_max(ensemble.j_thermal_max, xi)
    else:
        max_regrow = 0
    _require_origins(ensemble, j_max)
    if grid is None:
        grid = default_grid(pulse)

    for _ in range(max_regrow + 1):
        layout = []  # (j0, m, weight, js, offset)
        offset = 0
        rows, cols, vals = [], [], []
        omegas = []
        for (m, parity), members in _grouped_channels(ensemble).items():
            js = chain_js(j_max, m, parity)
            n = len(js)
            diag = cos2theta_diagonal(js, m)
            off = cos2theta_offdiag(js[:-1], m) if n > 1 else np.zeros(0)
            om = rotational_omega(js, molecule)
            for j0, m0, w in members:
                base = offset
                idx = np.arange(n)
                rows.extend((base + idx).tolist())
                cols.extend((base + idx).tolist())
                vals.extend(diag.tolist())
                if n > 1:
                    rows.extend((base + idx[:-1]).tolist() + (base + idx[1:]).tolist())
                    cols.extend((base + idx[1:]).tolist() + (base + idx[:-1]).tolist())
                    vals.extend(off.tolist() + off.tolist())
                omegas.append(om)
                layout.append((j0, abs(m0), w, js, base))
                offset += n
        total = offset
        coupling = scipy.sparse.csr_matrix((vals, (rows, cols)), shape=(total, total))
        omega = np.concatenate(omegas)
        y0 = np.zeros(total, dtype=complex)
        for j0, m, w, js, base in layout:
            y0[base + int(np.searchsorted(js, j0))] = 1.0

        a = _integrate_interaction(y0, omega, coupling.dot, pulse, molecule, grid)
        channels = tuple(
            ChainChannel(j0, m, w, js, a[base : base + len(js)])
            for j0, m, w, js, base in layout
        )
        if _weighted_edge_leak(channels) <= EDGE_POPULATION_TOL:
            return ChannelSet(
                molecule,
                ensemble.temperature,
                pulse.t0_ps,
                "chain",
                channels,
                j_max,
                xi,
            )
        if max_regrow == 0:
            raise BasisTooSmallError(
                f"kick populates the basis edge at j_max={j_max}; enlarge j_max"
            )
        j_max = int(j_max * 1.5) + 10
    raise BasisTooSmallError(f"norm leak persists after regrowing j_max to {j_max}")


def elliptic_tdse_ensemble(
    molecule: MoleculeSpec,
    ensemble: ThermalEnsemble,
    pulse: PulseSpec,
    j_max: int | None = None,
    grid: PropagationGrid | None = None,
    max_regrow: int = 2,
) -> ChannelSet:
    """TDSE propagation of a thermal ensemble under an elliptic pump.

    Channels are grouped by (J parity, M parity); each group shares one
    sparse coupling operator on its parity-filtered (J,M) lattice, and all
    its channels integrate together as stacked columns.  The +-M0 mirror
    symmetry of the coupling makes folded ensembles exact.
    """
    xi = effective_area(pulse, molecule).xi
    if j_max is None:
        j_max = suggest_j_max(ensemble.j_thermal_max, xi)
    else:
        max_regrow = 0
    _require_origins(ensemble, j_max)
    if grid is None:
        grid = default_grid(pulse)

    for _ in range(max_regrow + 1):
        groups: dict[tuple[int, int], list[tuple[int, int, float]]] = {}
        for j0, m0, w in ensemble.channels:
            groups.setdefault((j0 % 2, abs(m0) % 2), []).append((j0, m0, w))

        channels: list[JMChannel] = []
        for (jp, mp), members in groups.items():
            basis = JMBasis(j_max, j_parity=jp, m_parity=mp)
            coupling = (
                pulse.a2 * _axis_operator(basis, "x") + pulse.b2 * _axis_operator(basis, "y")
            ).tocsr()
            omega = rotational_omega(basis.j_of, molecule)
            n, k = len(basis), len(members)
            y0 = np.zeros((n, k), dtype=complex)
            for col, (j0, m0, _) in enumerate(members):
                y0[basis.index[(j0, abs(m0))], col] = 1.0
            a = _integrate_interaction(y0, omega, coupling.dot, pulse, molecule, grid, n_cols=k)
            for col, (j0, m0, w) in enumerate(members):
                channels.append(JMChannel(j0, abs(m0), w, basis, np.array(a[:, col])))
        if _weighted_edge_leak(channels) <= EDGE_POPULATION_TOL:
            return ChannelSet(
                molecule,
                ensemble.temperature,
                pulse.t0_ps,
                "jm",
                tuple(channels),
                j_max,
                xi,
            )
        if max_regrow == 0:
            raise BasisTooSmallError(
                f"kick populates the basis edge at j_max={j_max}; enlarge j_max"
            )
        j_max = int(j_max * 1.5) + 10
    raise BasisTooSmallError(f"norm leak persists after regrowing j_max to {j_max}")
