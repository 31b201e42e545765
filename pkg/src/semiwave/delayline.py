"""Ring buffer of past states for fixed-delay method-of-steps integrators.

Slices are addressed by absolute step index: index 0 is t = 0 and the initial
history occupies indices -N..0 with N = h/dt. Values half a step off the grid
(needed by the middle stages of a Runge-Kutta step) are interpolated inside
one delay interval [jN, (j+1)N] at a time, because the solution of a delay
equation loses smoothness at the multiples of h.
"""

from __future__ import annotations

import numpy as np

# Lagrange weights for the midpoint of a 4-point stencil, by offset of the
# target from the first stencil node (0.5, 1.5, 2.5).
_CUBIC_MID = {
    0: np.array([5.0, 15.0, -5.0, 1.0]) / 16.0,
    1: np.array([-1.0, 9.0, 9.0, -1.0]) / 16.0,
    2: np.array([1.0, -5.0, 15.0, 5.0]) / 16.0,
}


class DelayLine:
    """Holds the last N+3 slices; enough for RK stages reading t - h."""

    def __init__(self, n_delay: int, history, interpolation: str = "cubic"):
        history = np.asarray(history)
        if history.shape[0] != n_delay + 1:
            raise ValueError(f"history needs {n_delay + 1} slices, got {history.shape[0]}")
        if interpolation not in ("cubic", "linear"):
            raise ValueError(interpolation)
        self.n_delay = n_delay
        self.interpolation = interpolation if n_delay >= 3 else "linear"
        self.capacity = n_delay + 3
        self.buf = np.zeros((self.capacity,) + history.shape[1:], dtype=history.dtype)
        self.first = -n_delay  # oldest valid absolute index
        self.last = 0
        for i in range(-n_delay, 1):
            self.buf[i % self.capacity] = history[i + n_delay]

    def __getitem__(self, i: int):
        if i < self.first or i > self.last or i < self.last - self.capacity + 1:
            raise IndexError(f"slice {i} not held (have {max(self.first, self.last - self.capacity + 1)}..{self.last})")
        return self.buf[i % self.capacity]

    @property
    def current(self):
        return self.buf[self.last % self.capacity]

    def push(self, slab) -> None:
        self.last += 1
        self.buf[self.last % self.capacity] = slab

    def midpoint(self, i: int):
        """Value at absolute index i + 1/2."""
        if self.interpolation == "linear":
            return 0.5 * (self[i] + self[i + 1])
        n = self.n_delay
        lo = (i // n) * n
        hi = lo + n
        s = max(i - 1, lo)
        if s + 3 > hi:
            s = hi - 3
        w = _CUBIC_MID[i - s]
        return w[0] * self[s] + w[1] * self[s + 1] + w[2] * self[s + 2] + w[3] * self[s + 3]

    def window(self):
        """The N+1 slices spanning [t - h, t], oldest first."""
        return np.stack([self[i] for i in range(self.last - self.n_delay, self.last + 1)])
