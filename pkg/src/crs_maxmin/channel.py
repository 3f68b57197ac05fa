"""System configuration and random channel generation.

Channels are drawn with numpy's ``Generator(PCG64(seed))``. PCG64 output is
specified by numpy and stable across platforms, so a (config, seed) pair
always reproduces the same realization.

Complex Gaussian convention: ``CN(0, s)`` has independent real and imaginary
parts, each ``N(0, s/2)``. Noise variance at every receiver is 1.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np


def db_to_linear(value_db: float) -> float:
    return float(10.0 ** (value_db / 10.0))


@dataclass(frozen=True)
class SystemConfig:
    """Static parameters of one K-user CRS system.

    ``relay_powers`` and ``user_variances`` default to ``bs_power`` and an
    all-ones matrix respectively, matching the simulation setup where relays
    transmit at the BS power and all user-to-user links have unit variance.
    """

    num_users: int
    num_tx_antennas: int
    bs_power: float
    bs_variances: Sequence[float] = ()
    relay_powers: Optional[Sequence[float]] = None
    user_variances: Optional[Sequence[Sequence[float]]] = None
    sca_tolerance: float = 1e-3
    grid_step: float = 0.1
    timer_constant: float = 1.0
    init_power_split: float = 0.5
    init_theta: float = 0.8
    num_relays: int = 1
    max_iterations: int = 100
    theta_min: float = 1e-3

    def __post_init__(self):
        K = self.num_users
        if K < 2:
            raise ValueError(f"num_users must be >= 2, got {K}")
        if self.num_tx_antennas < 1:
            raise ValueError("num_tx_antennas must be positive")
        if not self.bs_power > 0:
            raise ValueError("bs_power must be strictly positive")

        bs_var = tuple(float(v) for v in self.bs_variances) or (1.0,) * K
        if len(bs_var) != K or min(bs_var) < 0:
            raise ValueError("bs_variances must be K nonnegative reals")
        object.__setattr__(self, "bs_variances", bs_var)

        if self.relay_powers is None:
            relay = (float(self.bs_power),) * K
        else:
            relay = tuple(float(p) for p in self.relay_powers)
        if len(relay) != K or min(relay) <= 0:
            raise ValueError("relay_powers must be K strictly positive reals")
        object.__setattr__(self, "relay_powers", relay)

        if self.user_variances is None:
            uv = tuple(tuple(1.0 for _ in range(K)) for _ in range(K))
        else:
            uv = tuple(tuple(float(v) for v in row) for row in self.user_variances)
        if len(uv) != K or any(len(row) != K for row in uv):
            raise ValueError("user_variances must be a K x K matrix")
        if min(min(row) for row in uv) < 0:
            raise ValueError("user_variances must be nonnegative")
        object.__setattr__(self, "user_variances", uv)

        if not (self.sca_tolerance > 0 and self.timer_constant > 0):
            raise ValueError("sca_tolerance and timer_constant must be positive")
        if not 0 < self.grid_step < 1:
            raise ValueError("grid_step must lie in (0, 1)")
        if not 0 <= self.init_power_split <= 1:
            raise ValueError("init_power_split must lie in [0, 1]")
        if not 0 < self.init_theta <= 1:
            raise ValueError("init_theta must lie in (0, 1]")
        if not 1 <= self.num_relays < K:
            raise ValueError(f"num_relays must lie in [1, {K - 1}]")
        if not 0 < self.theta_min < 1:
            raise ValueError("theta_min must lie in (0, 1)")

    @classmethod
    def from_snr_db(cls, num_users: int, num_tx_antennas: int, snr_db: float, **kwargs) -> "SystemConfig":
        return cls(num_users, num_tx_antennas, db_to_linear(snr_db), **kwargs)

    @property
    def relay_power_array(self) -> np.ndarray:
        return np.asarray(self.relay_powers, dtype=float)

    @property
    def bs_variance_array(self) -> np.ndarray:
        return np.asarray(self.bs_variances, dtype=float)

    @property
    def user_variance_array(self) -> np.ndarray:
        return np.asarray(self.user_variances, dtype=float)


@dataclass(frozen=True)
class ChannelRealization:
    """One Monte Carlo draw.

    ``bs_channels`` has shape (N_t, K); column k is h_k. ``user_channels[k, j]``
    is the scalar link from transmitter j to receiver k; the diagonal is zero
    and never read.
    """

    bs_channels: np.ndarray
    user_channels: np.ndarray
    bs_variances: np.ndarray
    user_variances: np.ndarray
    seed: Optional[int] = None
    _digest: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        for name in ("bs_channels", "user_channels", "bs_variances", "user_variances"):
            arr = np.array(getattr(self, name))
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        nt, K = self.bs_channels.shape
        if self.user_channels.shape != (K, K):
            raise ValueError("user_channels must be K x K")

    @property
    def num_users(self) -> int:
        return self.bs_channels.shape[1]

    @property
    def num_tx_antennas(self) -> int:
        return self.bs_channels.shape[0]

    def h(self, k: int) -> np.ndarray:
        return self.bs_channels[:, k]

    def strengths(self) -> np.ndarray:
        return np.sum(np.abs(self.bs_channels) ** 2, axis=0)

    def digest(self) -> str:
        """Short SHA-256 of the channel coefficients, for paired-draw checks."""
        if not self._digest:
            m = hashlib.sha256()
            m.update(np.ascontiguousarray(self.bs_channels).tobytes())
            m.update(np.ascontiguousarray(self.user_channels).tobytes())
            object.__setattr__(self, "_digest", m.hexdigest()[:16])
        return self._digest

    @classmethod
    def from_arrays(cls, bs_channels, user_channels=None, seed=None) -> "ChannelRealization":
        """Wrap hand-built channels; handy for tests and closed-form cases."""
        H = np.asarray(bs_channels, dtype=complex)
        if H.ndim == 1:
            H = H[None, :]
        K = H.shape[1]
        if user_channels is None:
            G = np.zeros((K, K), dtype=complex)
        else:
            G = np.array(user_channels, dtype=complex)
            np.fill_diagonal(G, 0)
        return cls(H, G, np.ones(K), np.ones((K, K)), seed)


def _complex_normal(rng: np.random.Generator, shape, variance) -> np.ndarray:
    scale = np.sqrt(np.asarray(variance, dtype=float) / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def generate_channels(config: SystemConfig, seed: int) -> ChannelRealization:
    """Draw h_k ~ CN(0, s_k I) and h_{k,j} ~ CN(0, s_{k,j}) from PCG64(seed)."""
    rng = np.random.Generator(np.random.PCG64(seed))
    K, nt = config.num_users, config.num_tx_antennas
    bs_var = config.bs_variance_array
    user_var = config.user_variance_array
    H = _complex_normal(rng, (nt, K), bs_var[None, :])
    G = _complex_normal(rng, (K, K), user_var)
    np.fill_diagonal(G, 0)
    return ChannelRealization(H, G, bs_var, user_var, seed)


def channel_strength(h) -> float:
    """Squared Euclidean norm ||h||^2."""
    h = np.asarray(h)
    return float(np.sum(np.abs(h) ** 2))
