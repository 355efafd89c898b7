"""Phase profiles of the two SIMs and the composite responses P and D.

    P = Phi^L W^L ... Phi^1 W^1            (M x N_t)
    D = U^1 Xi^1 U^2 Xi^2 ... U^K Xi^K      (N_r x N)

Phases are stored as angles, so the unit-modulus constraint holds exactly and
weights are derived on demand. Layer indices in the public API are 1-based,
matching the superscripts above.
"""

from __future__ import annotations

import dataclasses
import json
from typing import Sequence

import numpy as np

from .scene import SceneMatrices

TWO_PI = 2.0 * np.pi


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float, copy=True)
    a.setflags(write=False)
    return a


@dataclasses.dataclass(frozen=True, eq=False)
class PhaseProfile:
    """Per-layer phase angles: ``tx`` is (L, M) and ``rx`` is (K, N), radians."""

    tx: np.ndarray
    rx: np.ndarray

    def __post_init__(self) -> None:
        tx, rx = np.atleast_2d(self.tx), np.atleast_2d(self.rx)
        if tx.ndim != 2 or rx.ndim != 2:
            raise ValueError("phase arrays must be 2-D (layers x elements)")
        if not (np.all(np.isfinite(tx)) and np.all(np.isfinite(rx))):
            raise ValueError("phase angles must be finite")
        object.__setattr__(self, "tx", _frozen(tx))
        object.__setattr__(self, "rx", _frozen(rx))

    @classmethod
    def from_weights(cls, tx_weights: np.ndarray, rx_weights: np.ndarray) -> "PhaseProfile":
        """Angles of (projected) complex weights, wrapped to [0, 2 pi)."""
        tx = np.mod(np.angle(project_unit_modulus(tx_weights)), TWO_PI)
        rx = np.mod(np.angle(project_unit_modulus(rx_weights)), TWO_PI)
        return cls(tx, rx)

    @classmethod
    def random(cls, scene: SceneMatrices, rng: np.random.Generator) -> "PhaseProfile":
        tx = rng.uniform(0.0, TWO_PI, size=(scene.layers_tx, scene.m))
        rx = rng.uniform(0.0, TWO_PI, size=(scene.layers_rx, scene.n))
        return cls(tx, rx)

    @classmethod
    def zeros(cls, scene: SceneMatrices) -> "PhaseProfile":
        return cls(np.zeros((scene.layers_tx, scene.m)), np.zeros((scene.layers_rx, scene.n)))

    @property
    def tx_weights(self) -> np.ndarray:
        return np.exp(1j * self.tx)

    @property
    def rx_weights(self) -> np.ndarray:
        return np.exp(1j * self.rx)

    def with_layer(self, side: str, layer: int, angles: np.ndarray) -> "PhaseProfile":
        """Copy with one layer's angles replaced (``layer`` is 1-based)."""
        tx, rx = np.array(self.tx), np.array(self.rx)
        target = tx if side == "tx" else rx
        target[_check_layer(layer, target.shape[0])] = angles
        return PhaseProfile(tx, rx)

    def to_dict(self) -> dict[str, list[list[float]]]:
        return {"tx": self.tx.tolist(), "rx": self.rx.tolist()}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, data: dict) -> "PhaseProfile":
        if set(data) != {"tx", "rx"}:
            raise ValueError("phase profile JSON must have exactly the keys 'tx' and 'rx'")
        return cls(np.array(data["tx"], dtype=float), np.array(data["rx"], dtype=float))

    @classmethod
    def from_json(cls, text: str) -> "PhaseProfile":
        return cls.from_dict(json.loads(text))


@dataclasses.dataclass(frozen=True, eq=False)
class CompositeResponse:
    p: np.ndarray
    d: np.ndarray
    gram_p: np.ndarray  # P^H P, N_t x N_t
    gram_d: np.ndarray  # D D^H, N_r x N_r


def project_unit_modulus(v: np.ndarray) -> np.ndarray:
    """Entrywise ``x / |x|``; zero entries map to ``1 + 0j``."""
    v = np.asarray(v, dtype=complex)
    mag = np.abs(v)
    out = np.ones_like(v)
    nz = mag > 0
    out[nz] = v[nz] / mag[nz]
    return out


def _check_layer(layer: int, count: int) -> int:
    if not 1 <= layer <= count:
        raise IndexError(f"layer index {layer} outside 1..{count}")
    return layer - 1


def _check_dims(profile: PhaseProfile, scene: SceneMatrices) -> None:
    if profile.tx.shape != (scene.layers_tx, scene.m):
        raise ValueError(
            f"transmit phases have shape {profile.tx.shape}, scene needs {(scene.layers_tx, scene.m)}"
        )
    if profile.rx.shape != (scene.layers_rx, scene.n):
        raise ValueError(
            f"receive phases have shape {profile.rx.shape}, scene needs {(scene.layers_rx, scene.n)}"
        )


def compose_transmit(profile: PhaseProfile, scene: SceneMatrices) -> np.ndarray:
    _check_dims(profile, scene)
    phi = profile.tx_weights
    p = phi[0][:, None] * scene.w[0]
    for l in range(1, scene.layers_tx):
        p = phi[l][:, None] * (scene.w[l] @ p)
    return p


def compose_receive(profile: PhaseProfile, scene: SceneMatrices) -> np.ndarray:
    _check_dims(profile, scene)
    xi = profile.rx_weights
    d = scene.u[0] * xi[0][None, :]
    for k in range(1, scene.layers_rx):
        d = d @ (scene.u[k] * xi[k][None, :])
    return d


def composite(profile: PhaseProfile, scene: SceneMatrices) -> CompositeResponse:
    p = compose_transmit(profile, scene)
    d = compose_receive(profile, scene)
    gram_p = p.conj().T @ p
    gram_d = d @ d.conj().T
    return CompositeResponse(
        p=p,
        d=d,
        gram_p=0.5 * (gram_p + gram_p.conj().T),
        gram_d=0.5 * (gram_d + gram_d.conj().T),
    )


def partial_products(
    profile: PhaseProfile, scene: SceneMatrices, side: str, layer_index: int
) -> tuple[np.ndarray, np.ndarray]:
    """Factors around one layer's diagonal phase matrix.

    For ``side="tx"`` returns ``(left, right)`` with
    ``P = left @ diag(phi^l) @ right``; for ``side="rx"`` returns ``(pre, post)``
    with ``D = pre @ diag(xi^k) @ post``.
    """
    _check_dims(profile, scene)
    if side == "tx":
        i = _check_layer(layer_index, scene.layers_tx)
        phi = profile.tx_weights
        right = scene.w[0]
        for j in range(1, i + 1):
            right = scene.w[j] @ (phi[j - 1][:, None] * right)
        left = np.eye(scene.m, dtype=complex)
        for j in range(i + 1, scene.layers_tx):
            left = (phi[j][:, None] * scene.w[j]) @ left
        return left, right
    if side == "rx":
        i = _check_layer(layer_index, scene.layers_rx)
        xi = profile.rx_weights
        pre = scene.u[0]
        for j in range(1, i + 1):
            pre = (pre * xi[j - 1][None, :]) @ scene.u[j]
        post = np.eye(scene.n, dtype=complex)
        for j in range(scene.layers_rx - 1, i, -1):
            post = (scene.u[j] * xi[j][None, :]) @ post
        return pre, post
    raise ValueError(f"side must be 'tx' or 'rx', got {side!r}")


def transmit_layer_diagonals(
    profile: PhaseProfile, scene: SceneMatrices, sandwiches: Sequence[np.ndarray]
) -> np.ndarray:
    """``diag(right_l @ T @ left_l)`` for every layer l and every N_t x M matrix T.

    Runs one forward and one backward sweep, so the cost is O(L M^2 N_t)
    instead of forming each M x M ``left_l`` explicitly.

    Returns:
        complex array of shape ``(len(sandwiches), L, M)``.
    """
    phi = profile.tx_weights
    n_layers, n_t = scene.layers_tx, scene.n_t
    stacked = np.vstack(list(sandwiches))  # (len * N_t) x M

    rights = [scene.w[0]]
    for i in range(1, n_layers):
        rights.append(scene.w[i] @ (phi[i - 1][:, None] * rights[-1]))
    backs = [stacked]
    for i in range(n_layers - 2, -1, -1):
        backs.append((backs[-1] * phi[i + 1][None, :]) @ scene.w[i + 1])
    backs.reverse()

    out = np.empty((len(sandwiches), n_layers, scene.m), dtype=complex)
    for i in range(n_layers):
        for s in range(len(sandwiches)):
            block = backs[i][s * n_t:(s + 1) * n_t]
            out[s, i] = np.einsum("mj,jm->m", rights[i], block)
    return out


def receive_layer_diagonals(
    profile: PhaseProfile, scene: SceneMatrices, sandwiches: Sequence[np.ndarray]
) -> np.ndarray:
    """``diag(post_k @ Y @ pre_k)`` for every layer k and every N x N_r matrix Y.

    Returns:
        complex array of shape ``(len(sandwiches), K, N)``.
    """
    xi = profile.rx_weights
    n_layers, n_r = scene.layers_rx, scene.n_r
    stacked = np.hstack(list(sandwiches))  # N x (len * N_r)

    pres = [scene.u[0]]
    for i in range(1, n_layers):
        pres.append((pres[-1] * xi[i - 1][None, :]) @ scene.u[i])
    fronts = [stacked]
    for i in range(n_layers - 2, -1, -1):
        fronts.append(scene.u[i + 1] @ (xi[i + 1][:, None] * fronts[-1]))
    fronts.reverse()

    out = np.empty((len(sandwiches), n_layers, scene.n), dtype=complex)
    for i in range(n_layers):
        for s in range(len(sandwiches)):
            block = fronts[i][:, s * n_r:(s + 1) * n_r]
            out[s, i] = np.einsum("nr,rn->n", block, pres[i])
    return out
