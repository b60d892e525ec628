"""Parameter scans built on :func:`~.linstab.critical_lambda`: phase diagrams,
the whorl-count sequence along ``a``, and sign patches of critical modes."""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import linstab, specfun
from .errors import AnnulusTuringError, EndpointEntry, NoOnset, SimultaneousEntry

STABLE = "stable"
BOUNDARY = "boundary"

# a-range and d-range that show every labelled region of the four reference panels
DEFAULT_A_RANGE = (0.2, 0.8)
DEFAULT_D_RANGE = (1.0, 200.0)


@dataclass(frozen=True)
class SweepSpec:
    a_range: tuple
    d_range: tuple
    a_count: int
    d_count: int
    R: float
    delta: float
    workers: int = 1

    def __post_init__(self):
        if self.a_count < 2 or self.d_count < 2:
            raise ValueError("grid counts must be at least 2")
        for lo, hi in (self.a_range, self.d_range):
            if not (0 < lo < hi):
                raise ValueError(f"range ({lo}, {hi}) must be positive and increasing")
        if self.R <= 0 or self.delta <= 1:
            raise ValueError("need R > 0 and delta > 1")

    @property
    def a_values(self):
        return np.linspace(*self.a_range, self.a_count)

    @property
    def d_values(self):
        return np.linspace(*self.d_range, self.d_count)


def shared_table(a_values, d_values, R, delta):
    """One mode table covering every cell of a scan."""
    top = 0.0
    for d in d_values:
        for a in a_values:
            if a > linstab.A_MIN:
                top = max(top, linstab.max_window_top(a, d, R))
    return specfun.mode_table(delta, linstab.MODE_MARGIN * max(top, 1.0))


def classify_cell(a, d, R, delta, table):
    """``n_c`` at one parameter point, or a string label."""
    try:
        crit = linstab.critical_lambda(linstab.ModelParams(a, d, R, delta), modes=table,
                                       check_pes=False)
    except NoOnset:
        return STABLE
    except (SimultaneousEntry, EndpointEntry):
        return BOUNDARY
    except (AnnulusTuringError, ValueError) as exc:
        return f"error:{type(exc).__name__}"
    return crit.n_c


def _row(args):
    d, a_values, R, delta, table = args
    return [classify_cell(float(a), float(d), R, delta, table) for a in a_values]


def sweep(spec):
    """Matrix of labels with rows indexed by ``d`` and columns by ``a``."""
    a_vals, d_vals = spec.a_values, spec.d_values
    table = shared_table(a_vals, d_vals, spec.R, spec.delta)
    jobs = [(d, a_vals, spec.R, spec.delta, table) for d in d_vals]
    if spec.workers > 1:
        with ProcessPoolExecutor(max_workers=spec.workers) as pool:
            rows = list(pool.map(_row, jobs))
    else:
        rows = [_row(j) for j in jobs]
    return rows


def region_labels(rows):
    return sorted({x for row in rows for x in row if isinstance(x, int)})


def connected_regions(rows, label):
    """Number of 4-connected components carrying ``label``."""
    mask = np.array([[x == label for x in row] for row in rows])
    _, count = ndimage.label(mask)
    return count


def collapse(seq):
    out = []
    for x in seq:
        if not out or out[-1] != x:
            out.append(x)
    return out


def whorl_sequence(R=16.0, delta=2.0, d=80.0, a_range=(0.2, 0.55), steps=1401, details=False):
    """``n_c`` along ``a`` with consecutive duplicates removed.

    Non-integer labels (``stable``, ``boundary``) are dropped from the
    collapsed sequence; ``details=True`` also returns the raw per-``a`` labels.
    """
    a_vals = np.linspace(*a_range, steps)
    table = shared_table(a_vals, [d], R, delta)
    raw = [classify_cell(float(a), d, R, delta, table) for a in a_vals]
    seq = collapse([x for x in raw if isinstance(x, int)])
    if details:
        return seq, list(zip(a_vals.tolist(), raw))
    return seq


def mode_field(n, j, delta, N_r=200, N_theta=720):
    """``cos(n theta) R_{n,j}(r)`` on an ``(N_r, N_theta)`` grid; returns ``(r, theta, values)``."""
    mode = specfun.radial_eigenvalues(n, delta, j)[j - 1]
    r = np.linspace(1.0, delta, N_r)
    theta = 2.0 * math.pi * np.arange(N_theta) / N_theta
    # half-cell offset so sampled points never sit on an angular nodal line
    theta = theta + math.pi / N_theta
    vals = np.outer(specfun.radial_eval(mode, delta, r), np.cos(n * theta))
    return r, theta, vals


def count_patches(values, sign=1):
    """Connected regions where ``sign * values > 0``, periodic along axis 1."""
    mask = sign * values > 0
    labels, count = ndimage.label(mask)
    if count == 0:
        return 0
    parent = list(range(count + 1))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in zip(labels[:, 0], labels[:, -1]):
        if a and b:
            ra, rb = find(a), find(b)
            if ra != rb:
                parent[ra] = rb
    return len({find(k) for k in range(1, count + 1)})
