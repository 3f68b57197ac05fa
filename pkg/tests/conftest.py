import logging

import numpy as np
import pytest

from crs_maxmin.channel import ChannelRealization, SystemConfig, db_to_linear


@pytest.fixture(autouse=True)
def _quiet_solver_logs():
    logging.getLogger("crs_maxmin").setLevel(logging.ERROR)
    yield


def scalar_channels(*gains, user_channels=None):
    """Single-antenna channel set with h_k = gains[k]."""
    H = np.array([list(gains)], dtype=complex)
    return ChannelRealization.from_arrays(H, user_channels)


def orthogonal_k2():
    return ChannelRealization.from_arrays(np.eye(2, dtype=complex))


def skewed_config(nt=2, snr_db=20.0, **kw):
    return SystemConfig(3, nt, db_to_linear(snr_db), bs_variances=(1.0, 0.3, 0.1), **kw)
