"""Hand-wired networks with known behaviour, for demos and end-to-end checks."""

from __future__ import annotations

import numpy as np

from .nnet import Arch, RnnModel

# skewed hidden basis: the four (sum, carry) states form a parallelogram
ADDER_BASIS = np.array([[1.3, 0.4], [-0.5, 0.9]])


def ripple_adder_model(basis=ADDER_BASIS) -> RnnModel:
    """Bit-serial adder with hidden state ``basis @ (sum, carry)``.

    The transition computes ``z = carry + x1 + x2`` and three ramps
    ``relu(z - k)``, k = 0, 1, 2; the new sum is ``r0 - 2 r1 + 2 r2`` and the
    new carry ``r1 - r2``.  The readout is the sum bit.
    """
    A = np.asarray(basis, dtype=float)
    A_inv = np.linalg.inv(A)
    carry_row = A_inv[1]
    W1 = np.array([[*carry_row, 1.0, 1.0]] * 3)
    b1 = -np.arange(3.0)
    M = np.array([[1.0, -2.0, 2.0], [0.0, 1.0, -1.0]])
    f = [(W1, b1), (A @ M, np.zeros(2))]
    g = [(A_inv[:1].copy(), np.zeros(1))]
    return RnnModel(Arch(2, 3, 2, 1, 1), 2, f, g)
