"""Deterministic geometry of the link: meta-atom layouts, diffraction couplings,
spatial correlations and path loss.

Coordinates are in meters. Both SIMs lie parallel to the x-z plane, centred on
the y axis at height ``altitude_m``; the transmit antennas sit at ``y = 0`` and
the receive antennas at ``y = link_distance``.
"""

from __future__ import annotations

import dataclasses
import math

import numpy as np

from .config import SystemConfig

LAYER_NORMAL = np.array([0.0, 1.0, 0.0])


class DegenerateGeometryError(ValueError):
    """Two points that should be distinct coincide."""


@dataclasses.dataclass(frozen=True)
class SceneLayout:
    tx_antenna_positions: np.ndarray
    rx_antenna_positions: np.ndarray
    tx_layer_positions: tuple[np.ndarray, ...]
    rx_layer_positions: tuple[np.ndarray, ...]
    layer_normal: np.ndarray
    tx_gap: float
    rx_gap: float


@dataclasses.dataclass(frozen=True)
class SceneMatrices:
    """Fixed matrices shared by every channel draw and every phase profile.

    ``w[0]`` is M x N_t (antennas to first transmit layer) and ``w[l]`` for
    l >= 1 is M x M. ``u[0]`` is N_r x N (first receive layer to antennas) and
    ``u[k]`` for k >= 1 is N x N, mapping layer k+1 onto layer k.
    """

    w: tuple[np.ndarray, ...]
    u: tuple[np.ndarray, ...]
    r_t: np.ndarray
    r_r: np.ndarray
    r_t_sqrt: np.ndarray
    r_r_sqrt: np.ndarray
    beta: float

    @property
    def n_t(self) -> int:
        return self.w[0].shape[1]

    @property
    def n_r(self) -> int:
        return self.u[0].shape[0]

    @property
    def m(self) -> int:
        return self.w[0].shape[0]

    @property
    def n(self) -> int:
        return self.u[0].shape[1]

    @property
    def layers_tx(self) -> int:
        return len(self.w)

    @property
    def layers_rx(self) -> int:
        return len(self.u)


def grid_shape(count: int) -> tuple[int, int]:
    """Most-square ``(rows, cols)`` factorisation with ``rows <= cols``."""
    if count < 1:
        raise ValueError(f"per-layer element count must be positive, got {count}")
    rows = max(r for r in range(1, math.isqrt(count) + 1) if count % r == 0)
    return rows, count // rows


def planar_grid(count: int, spacing: float, y: float, z0: float) -> np.ndarray:
    """Centred ``rows x cols`` grid in the plane ``y = const``; columns run along x."""
    rows, cols = grid_shape(count)
    xs = (np.arange(cols) - (cols - 1) / 2) * spacing
    zs = (np.arange(rows) - (rows - 1) / 2) * spacing + z0
    xx, zz = np.meshgrid(xs, zs)
    return np.column_stack([xx.ravel(), np.full(count, float(y)), zz.ravel()])


def linear_array(count: int, spacing: float, y: float, z0: float) -> np.ndarray:
    xs = (np.arange(count) - (count - 1) / 2) * spacing
    return np.column_stack([xs, np.full(count, float(y)), np.full(count, float(z0))])


def build_layout(config: SystemConfig) -> SceneLayout:
    spacing = config.spacing
    z0 = config.altitude_m
    tx_gap = config.sim_thickness_tx_m / config.layers_tx
    rx_gap = config.sim_thickness_rx_m / config.layers_rx
    d = config.link_distance

    tx_layers = tuple(
        planar_grid(config.m_tx, spacing, l * tx_gap, z0) for l in range(1, config.layers_tx + 1)
    )
    # receive layer 1 is the innermost one, next to the antennas
    rx_layers = tuple(
        planar_grid(config.n_rx, spacing, d - k * rx_gap, z0) for k in range(1, config.layers_rx + 1)
    )
    return SceneLayout(
        tx_antenna_positions=linear_array(config.n_t, spacing, 0.0, z0),
        rx_antenna_positions=linear_array(config.n_r, spacing, d, z0),
        tx_layer_positions=tx_layers,
        rx_layer_positions=rx_layers,
        layer_normal=LAYER_NORMAL.copy(),
        tx_gap=tx_gap,
        rx_gap=rx_gap,
    )


def coupling_matrix(
    src: np.ndarray,
    dst: np.ndarray,
    normal: np.ndarray,
    wavelength: float,
    element_area: float,
) -> np.ndarray:
    """Rayleigh-Sommerfeld transmission coefficients from ``src`` to ``dst``.

    Entry ``(n, m)`` is

        A cos(chi) / d * (1 / (2 pi d) - j / lambda) * exp(j 2 pi d / lambda)

    with ``d`` the distance from source m to destination n and ``chi`` the
    angle between that displacement and the layer normal.

    Returns:
        complex array of shape ``(len(dst), len(src))``.
    """
    src = np.atleast_2d(np.asarray(src, dtype=float))
    dst = np.atleast_2d(np.asarray(dst, dtype=float))
    normal = np.asarray(normal, dtype=float)
    normal = normal / np.linalg.norm(normal)

    disp = dst[:, None, :] - src[None, :, :]
    dist = np.linalg.norm(disp, axis=2)
    if np.any(dist <= 0.0):
        raise DegenerateGeometryError("degenerate geometry: coincident source and destination points")
    cos_chi = np.abs(disp @ normal) / dist
    return (
        element_area
        * cos_chi
        / dist
        * (1.0 / (2.0 * np.pi * dist) - 1j / wavelength)
        * np.exp(1j * 2.0 * np.pi * dist / wavelength)
    )


def correlation_matrix(positions: np.ndarray, wavelength: float, tol: float = 1e-10) -> np.ndarray:
    """Isotropic-scattering correlation ``sinc(2 |p_i - p_j| / lambda)``.

    Eigenvalues are clipped at zero; anything below ``-tol`` (relative to the
    largest eigenvalue) is treated as an error.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    dist = np.linalg.norm(positions[:, None, :] - positions[None, :, :], axis=2)
    r = np.sinc(2.0 * dist / wavelength)
    r = 0.5 * (r + r.T)
    w, v = np.linalg.eigh(r)
    if w[0] < -tol * max(1.0, abs(w[-1])):
        raise ValueError(f"correlation matrix is indefinite (min eigenvalue {w[0]:.3e})")
    if w[0] < 0.0:
        r = (v * np.clip(w, 0.0, None)) @ v.T
        # clipping perturbs the diagonal by O(tol); restore the exact unit diagonal
        d = np.sqrt(np.diag(r))
        r = r / np.outer(d, d)
        r = 0.5 * (r + r.T)
    return r


def matrix_sqrt_psd(r: np.ndarray, herm_tol: float = 1e-12, eig_tol: float = 1e-10) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix via its eigendecomposition."""
    r = np.asarray(r)
    if r.ndim != 2 or r.shape[0] != r.shape[1]:
        raise ValueError("matrix_sqrt_psd expects a square matrix")
    scale = max(1.0, float(np.max(np.abs(r))) if r.size else 1.0)
    if np.max(np.abs(r - r.conj().T), initial=0.0) > herm_tol * scale:
        raise ValueError("matrix is not Hermitian")
    w, v = np.linalg.eigh(0.5 * (r + r.conj().T))
    if w.size and w[0] < -eig_tol * max(1.0, abs(w[-1])):
        raise ValueError(f"matrix is not positive semidefinite (min eigenvalue {w[0]:.3e})")
    root = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.conj().T
    root = 0.5 * (root + root.conj().T)
    if np.isrealobj(r):
        root = root.real
    return root


def path_loss(distance: float, exponent: float, wavelength: float) -> float:
    """Linear gain ``(lambda / 4 pi)^2 * d^-b``: free space at 1 m, then exponent-b decay."""
    if not distance > 0:
        raise ValueError(f"distance must be positive, got {distance}")
    return float((wavelength / (4.0 * np.pi)) ** 2 * distance ** (-exponent))


def build_scene(config: SystemConfig, layout: SceneLayout | None = None) -> SceneMatrices:
    layout = build_layout(config) if layout is None else layout
    lam, area, n = config.wavelength, config.area, layout.layer_normal

    tx = (layout.tx_antenna_positions,) + layout.tx_layer_positions
    w = tuple(coupling_matrix(tx[l - 1], tx[l], n, lam, area) for l in range(1, len(tx)))

    rx_layers = layout.rx_layer_positions
    u = [coupling_matrix(rx_layers[0], layout.rx_antenna_positions, n, lam, area)]
    u += [coupling_matrix(rx_layers[k], rx_layers[k - 1], n, lam, area) for k in range(1, len(rx_layers))]

    # G links the outermost transmit layer with the outermost receive layer
    r_t = correlation_matrix(layout.tx_layer_positions[-1], lam)
    r_r = correlation_matrix(layout.rx_layer_positions[-1], lam)
    return SceneMatrices(
        w=w,
        u=tuple(u),
        r_t=r_t,
        r_r=r_r,
        r_t_sqrt=matrix_sqrt_psd(r_t),
        r_r_sqrt=matrix_sqrt_psd(r_r),
        beta=path_loss(config.link_distance, config.pathloss_exponent, lam),
    )


def identity_scene(
    n_t: int, n_r: int, layers_tx: int = 1, layers_rx: int = 1, entry_variance: float = 1.0
) -> SceneMatrices:
    """Square scene with identity couplings and correlations (M = N_t, N = N_r).

    Used for the reductions in which the SIMs and the spatial correlation are
    switched off. ``beta`` is set so that the fading entries have variance
    ``entry_variance``.
    """
    it, ir = np.eye(n_t, dtype=complex), np.eye(n_r, dtype=complex)
    return SceneMatrices(
        w=tuple(it.copy() for _ in range(layers_tx)),
        u=tuple(ir.copy() for _ in range(layers_rx)),
        r_t=np.eye(n_t),
        r_r=np.eye(n_r),
        r_t_sqrt=np.eye(n_t),
        r_r_sqrt=np.eye(n_r),
        beta=float(entry_variance) * n_t,
    )
