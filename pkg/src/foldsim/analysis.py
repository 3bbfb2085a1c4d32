"""Post-processing probes and closed-form oracles.

The kinematic oracles (Ritz fold-angle law, rigid Miura folding) live
next to the probes that consume them; pattern construction shares the
same Miura formulas through ``patterns``.
"""

from __future__ import annotations

import numpy as np

from .errors import FitUnderdetermined
from .patterns import (           # noqa: F401  (re-exported oracles)
    miura_nu_from_dihedral,
    miura_poisson_WL,
    miura_rho_from_extent,
    miura_state,
    miura_vertices,
)
from .solver import ritz_fold_angle  # noqa: F401  (re-export)


def interior_angle(phi):
    """Panel-to-panel opening angle: pi minus the |mesh dihedral|."""
    return np.pi - np.abs(phi)


def fold_angle_means(model, q, segments=None, absolute=False):
    """(mean mesh dihedral, mean virtual angle) over a crease group.

    ``absolute`` averages magnitudes, for groups whose folds alternate
    sign (e.g. the Miura corrugation lines).
    """
    pos, ang = model.dof.split(np.asarray(q))
    phi = model.crease_dihedrals(pos)
    if segments is None:
        segments = np.arange(model.creases.n_segments)
    segments = np.asarray(segments, dtype=np.int64)
    if absolute:
        return float(np.abs(phi[segments]).mean()),             float(np.abs(ang[segments]).mean())
    return float(phi[segments].mean()), float(ang[segments].mean())


def probe_fold_angles(qs, model, segments=None):
    """Series of (mean phi, mean phi_v) over a trajectory of DOF vectors."""
    out = np.array([fold_angle_means(model, q, segments) for q in qs])
    return out[:, 0], out[:, 1]


def _line_curvature(points, axis):
    """Signed curvature of z(s) at the line center from a quadratic fit.

    ``axis`` selects the in-plane parameter coordinate (0 = x, 1 = y).
    """
    pts = np.asarray(points, dtype=np.float64)
    if pts.shape[0] < 3:
        raise FitUnderdetermined("need at least 3 stations per line")
    s = pts[:, axis]
    z = pts[:, 2]
    s0 = s.mean()
    c = np.polyfit(s - s0, z, 2)
    zp = c[1]
    zpp = 2.0 * c[0]
    return zpp / (1.0 + zp * zp) ** 1.5


def curvature_ratio(samples_L, samples_W):
    """-kappa_W / kappa_L from station points along the two center lines.

    The L line is parameterized by x, the W line by y; stations are the
    vertex-averaged coarse mid-surface points.
    """
    kL = _line_curvature(samples_L, axis=0)
    kW = _line_curvature(samples_W, axis=1)
    if kL == 0.0:
        raise FitUnderdetermined("flat along the loading direction")
    return -kW / kL


def probe_curvature_ratio(position_series, probe_lines):
    """Curvature-ratio series from per-record positions and station groups.

    ``probe_lines`` is {"L": [vertex-id arrays], "W": [...]}; each group is
    averaged into one station per record.
    """
    if len(probe_lines["L"]) < 3 or len(probe_lines["W"]) < 3:
        raise FitUnderdetermined("need >= 3 stations along each line")
    out = []
    for pos in position_series:
        p = np.asarray(pos).reshape(-1, 3)
        sL = np.array([p[g].mean(axis=0) for g in probe_lines["L"]])
        sW = np.array([p[g].mean(axis=0) for g in probe_lines["W"]])
        out.append(curvature_ratio(sL, sW))
    return np.asarray(out)


def flatness_map(positions):
    """Signed deviation of each vertex from the least-squares plane."""
    p = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    c = p.mean(axis=0)
    d = p - c
    # smallest principal direction of the point cloud = plane normal
    _, _, vt = np.linalg.svd(d, full_matrices=False)
    n = vt[2]
    return d @ n


def secant_stiffness(displacement, force, lo_frac, hi_frac):
    """Secant slope |dF/dd| over a fractional window of the travel."""
    d = np.asarray(displacement, dtype=np.float64)
    f = np.asarray(force, dtype=np.float64)
    span = d[-1] - d[0]
    lo = d[0] + lo_frac * span
    hi = d[0] + hi_frac * span
    flo = np.interp(lo, d, f)
    fhi = np.interp(hi, d, f)
    return abs((fhi - flo) / (hi - lo))
