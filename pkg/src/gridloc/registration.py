"""NMI scoring and bounded exhaustive 3-DOF registration.

The similarity between two grayscale patches is normalized mutual
information (H(A) + H(B)) / H(A, B) over the joint histogram of the
jointly-valid cells, in nats. Entropies are computed from the sorted
nonzero bin counts, which makes the score an exact function of the count
multiset: self-matches score exactly 2.0 and bijective bin relabels leave
the score bitwise unchanged.

`search` evaluates every node of a regular (x, y, theta) grid around a
center pose, where each candidate compares the local match image against
the prior sampled over the correspondingly translated and rotated window.
The batched implementation reproduces `query_patch`'s nearest-neighbor
arithmetic exactly, so a naive per-node sweep lands on the identical
argmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import Pose2D
from .grid import Patch, world_to_cell
from .localmap import LocalGridMap
from .priormap import PriorMap

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dep, but degrade anyway
    HAVE_NUMBA = False

    def njit(*args, **kwargs):
        def deco(fn):
            return fn
        return deco


class RegistrationError(Exception):
    pass


class InsufficientOverlapError(RegistrationError):
    """Too few jointly-valid cells to form a meaningful histogram."""


@dataclass
class RegistrationConfig:
    bins: int = 32
    min_overlap: int = 1000
    sharpness: float = 50.0        # weight = exp(sharpness * (score - max))
    boundary_penalty: float = 4.0  # covariance inflation for edge argmax

    def __post_init__(self):
        if not 1 <= self.bins <= 256:
            raise ValueError(f"bins must be in [1, 256], got {self.bins}")
        if self.min_overlap < 1:
            raise ValueError("min_overlap must be >= 1")


@dataclass
class SearchSpec:
    """Half-widths and steps of the search grid, all relative to the
    search center. Offsets are along the global axes."""

    x_range: float
    y_range: float
    theta_range: float
    x_step: float
    y_step: float
    theta_step: float

    def __post_init__(self):
        if min(self.x_range, self.y_range, self.theta_range) < 0:
            raise ValueError("search half-widths must be >= 0")
        if min(self.x_step, self.y_step, self.theta_step) <= 0:
            raise ValueError("search steps must be > 0")


def node_offsets(spec: SearchSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Symmetric node offsets (xs, ys, thetas) defined by a SearchSpec."""

    def axis(rng, step):
        k = int(math.floor(rng / step + 1e-9))
        return np.arange(-k, k + 1, dtype=np.float64) * step

    return (axis(spec.x_range, spec.x_step), axis(spec.y_range, spec.y_step),
            axis(spec.theta_range, spec.theta_step))


@dataclass
class JointHistogram:
    bins: np.ndarray        # (B, B) int64, rows index patch A
    marginal_a: np.ndarray  # (B,) int64
    marginal_b: np.ndarray  # (B,) int64
    total: int


@dataclass
class RegistrationResult:
    offset: Pose2D               # argmax offset relative to the search center
    score: float
    score_field: np.ndarray      # (n_theta, n_y, n_x); NaN where rejected
    xs: np.ndarray
    ys: np.ndarray
    thetas: np.ndarray
    fitted_covariance: np.ndarray  # (3, 3) for (x, y, theta)
    valid_overlap: int


def bin_values(values: np.ndarray, bins: int) -> np.ndarray:
    """Bucket 8-bit reflectivity into histogram bins (value*bins/256)."""
    return (values.astype(np.int64) * bins) // 256


def entropy(counts) -> float:
    """Entropy of a count histogram in nats.

    Computed as ln(N) - sum(c*ln(c))/N over the sorted nonzero counts, so
    the result depends only on the multiset of counts.
    """
    c = np.asarray(counts, dtype=np.float64).ravel()
    if c.size == 0 or (c < 0).any():
        raise ValueError("histogram counts must be non-negative and non-empty")
    nz = np.sort(c[c > 0])
    if nz.size == 0:
        raise ValueError("empty histogram")
    total = nz.sum()
    return float(np.log(total) - (nz * np.log(nz)).sum() / total)


def _nmi_from_joint(joint: np.ndarray) -> float:
    h_a = entropy(joint.sum(axis=1))
    h_b = entropy(joint.sum(axis=0))
    h_ab = entropy(joint)
    if h_ab == 0.0:
        return 2.0  # single occupied joint bin: perfect dependence
    return (h_a + h_b) / h_ab


def joint_histogram(a: Patch, b: Patch, bins: int = 32) -> JointHistogram:
    if a.shape != b.shape:
        raise ValueError(f"patch dimensions differ: {a.shape} vs {b.shape}")
    mask = a.valid & b.valid
    ab = bin_values(a.values[mask], bins)
    bb = bin_values(b.values[mask], bins)
    counts = np.bincount(ab * bins + bb, minlength=bins * bins).reshape(bins, bins)
    return JointHistogram(counts, counts.sum(axis=1), counts.sum(axis=0),
                          int(counts.sum()))


def nmi(a: Patch, b: Patch, *, bins: int = 32, min_overlap: int = 1) -> float:
    """Normalized mutual information between two patches, in [1, 2]."""
    hist = joint_histogram(a, b, bins)
    if hist.total < max(1, min_overlap):
        raise InsufficientOverlapError(
            f"{hist.total} jointly-valid cells < required {min_overlap}"
        )
    return _nmi_from_joint(hist.bins)


def _argmax_node(score_field: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                 thetas: np.ndarray) -> tuple[int, int, int] | None:
    """Index of the maximum score; exact ties broken by the smallest
    (|x|, |y|, |theta|) lexicographically. None if nothing is finite."""
    flat = score_field.ravel()
    finite = np.isfinite(flat)
    if not finite.any():
        return None
    smax = flat[finite].max()
    cand = np.flatnonzero(finite & (flat == smax))
    ny, nx = score_field.shape[1], score_field.shape[2]
    it = cand // (ny * nx)
    rem = cand % (ny * nx)
    iy = rem // nx
    ix = rem % nx
    order = np.lexsort((np.abs(thetas[it]), np.abs(ys[iy]), np.abs(xs[ix])))
    pick = order[0]
    return int(it[pick]), int(iy[pick]), int(ix[pick])


def fit_covariance(score_field: np.ndarray, spec: SearchSpec,
                   config: RegistrationConfig | None = None) -> np.ndarray:
    """Fit a measurement covariance to the NMI score surface.

    Scores are turned into weights exp(sharpness*(s - s_max)); the result
    is the weighted second-moment matrix of the node offsets about their
    weighted mean, floored on the diagonal at (step/2)^2 per axis. An
    argmax on the window boundary inflates the whole matrix by
    boundary_penalty. A flat field degenerates to uniform weights, i.e.
    the second moment of the full window.
    """
    config = config or RegistrationConfig()
    xs, ys, thetas = node_offsets(spec)
    if score_field.shape != (thetas.size, ys.size, xs.size):
        raise ValueError("score_field shape does not match spec")
    pick = _argmax_node(score_field, xs, ys, thetas)
    if pick is None:
        raise ValueError("score field has no finite entries")
    smax = score_field[pick]
    w = np.exp(config.sharpness * (np.nan_to_num(score_field, nan=-np.inf) - smax))
    tt, yy, xx = np.meshgrid(thetas, ys, xs, indexing="ij")
    v = np.stack([xx.ravel(), yy.ravel(), tt.ravel()])
    wf = w.ravel()
    wsum = wf.sum()
    mean = (v * wf).sum(axis=1) / wsum
    d = v - mean[:, None]
    cov = (d * wf) @ d.T / wsum
    floor = np.array([(spec.x_step / 2) ** 2, (spec.y_step / 2) ** 2,
                      (spec.theta_step / 2) ** 2])
    for i in range(3):
        cov[i, i] = max(cov[i, i], floor[i])
    it, iy, ix = pick
    on_edge = (
        (thetas.size > 1 and it in (0, thetas.size - 1))
        or (ys.size > 1 and iy in (0, ys.size - 1))
        or (xs.size > 1 and ix in (0, xs.size - 1))
    )
    if on_edge:
        cov = cov * config.boundary_penalty
    return cov


@njit(cache=True)
def _joint_counts_jit(cxs, cys, rx, ry, abins, rbins_flat, rvalid_flat,
                      res, cx0, cy0, rw, rh, bins):  # pragma: no cover - jitted
    ncand = cxs.shape[0]
    n = rx.shape[0]
    out = np.zeros((ncand, bins, bins + 1), dtype=np.int64)
    for k in range(ncand):
        cx = cxs[k]
        cy = cys[k]
        for i in range(n):
            gx = np.int64(np.floor((cx + rx[i]) / res)) - cx0
            gy = np.int64(np.floor((cy + ry[i]) / res)) - cy0
            b = bins
            if gx >= 0 and gx < rw and gy >= 0 and gy < rh:
                idx = gy * rw + gx
                if rvalid_flat[idx]:
                    b = rbins_flat[idx]
            out[k, abins[i], b] += 1
    return out


def _joint_counts_numpy(cxs, cys, rx, ry, abins, rbins_flat, rvalid_flat,
                        res, cx0, cy0, rw, rh, bins):
    """Chunked numpy equivalent of the jitted kernel (same outputs)."""
    ncand = cxs.shape[0]
    n = rx.shape[0]
    nbins_row = bins + 1
    out = np.zeros((ncand, bins, nbins_row), dtype=np.int64)
    chunk = max(1, int(4e6) // max(1, n))
    base_code = abins * nbins_row
    for start in range(0, ncand, chunk):
        stop = min(ncand, start + chunk)
        nb = stop - start
        px = cxs[start:stop, None] + rx[None, :]
        py = cys[start:stop, None] + ry[None, :]
        gx = world_to_cell(px, res) - cx0
        gy = world_to_cell(py, res) - cy0
        inb = (gx >= 0) & (gx < rw) & (gy >= 0) & (gy < rh)
        flat = np.where(inb, gy * rw + gx, 0)
        bvals = rbins_flat[flat]
        bvalid = rvalid_flat[flat] & inb
        code = base_code[None, :] + np.where(bvalid, bvals, bins)
        code += (np.arange(nb) * (bins * nbins_row))[:, None]
        counts = np.bincount(code.ravel(), minlength=nb * bins * nbins_row)
        out[start:stop] = counts.reshape(nb, bins, nbins_row)
    return out


def search(prior: PriorMap, local: LocalGridMap, center: Pose2D, spec: SearchSpec,
           config: RegistrationConfig | None = None) -> RegistrationResult | None:
    """Exhaustive NMI maximization over the search grid.

    Candidate k compares the local match image against the prior sampled
    over the local window re-centered at center+(dx, dy) and rotated by
    dtheta. Returns None ("no fix") when every candidate has fewer than
    min_overlap jointly-valid cells.
    """
    config = config or RegistrationConfig()
    res = local.cell_resolution
    if not math.isclose(res, prior.cell_resolution, rel_tol=1e-12):
        raise ValueError(
            f"local resolution {res} != prior resolution {prior.cell_resolution}"
        )
    img = local.as_match_image()
    if not img.valid.any():
        raise ValueError("local map is empty")
    xs, ys, thetas = node_offsets(spec)
    bins = config.bins

    n = local.n
    # Patch-frame cell-center offsets, identical to query_patch's grid.
    u = (np.arange(n) - (n - 1) / 2.0) * res
    uu, vv = np.meshgrid(u, u)
    av_mask = img.valid
    uval = uu[av_mask]
    vval = vv[av_mask]
    abins = bin_values(img.values[av_mask], bins)

    # One contiguous prior raster covering every candidate's sampling
    # positions (window half-diagonal + search range + margin).
    reach = (n * res / 2.0) * math.sqrt(2.0) + res
    x_lo = center.x - reach + (xs[0] if xs.size else 0.0)
    x_hi = center.x + reach + (xs[-1] if xs.size else 0.0)
    y_lo = center.y - reach + (ys[0] if ys.size else 0.0)
    y_hi = center.y + reach + (ys[-1] if ys.size else 0.0)
    cx0 = int(math.floor(x_lo / res)) - 1
    cy0 = int(math.floor(y_lo / res)) - 1
    rw = int(math.ceil(x_hi / res)) - cx0 + 2
    rh = int(math.ceil(y_hi / res)) - cy0 + 2
    rvals, rvalid = prior.region(cx0, cy0, rw, rh)
    rbins_flat = bin_values(rvals, bins).ravel()
    rvalid_flat = rvalid.ravel()

    score_field = np.full((thetas.size, ys.size, xs.size), np.nan)
    overlap_field = np.zeros((thetas.size, ys.size, xs.size), dtype=np.int64)
    kernel = _joint_counts_jit if HAVE_NUMBA else _joint_counts_numpy

    # Candidate centers for one theta slice, y-major like the score field.
    cand_cx = np.tile(center.x + xs, ys.size)
    cand_cy = np.repeat(center.y + ys, xs.size)

    for it, dtheta in enumerate(thetas):
        c, s = math.cos(dtheta), math.sin(dtheta)
        # Same expression shape as query_patch: rotation first, center added
        # per candidate, so floor indices agree bitwise with a naive sweep.
        rx = c * uval - s * vval
        ry = s * uval + c * vval
        joints = kernel(cand_cx, cand_cy, rx, ry, abins, rbins_flat,
                        rvalid_flat, res, np.int64(cx0), np.int64(cy0),
                        rw, rh, bins)
        valid_joints = joints[:, :, :bins]
        totals = valid_joints.sum(axis=(1, 2))
        overlap_field[it] = totals.reshape(ys.size, xs.size)
        for k in np.flatnonzero(totals >= config.min_overlap):
            iy, ix = divmod(int(k), xs.size)
            score_field[it, iy, ix] = _nmi_from_joint(valid_joints[k])

    pick = _argmax_node(score_field, xs, ys, thetas)
    if pick is None:
        return None
    it, iy, ix = pick
    cov = fit_covariance(score_field, spec, config)
    return RegistrationResult(
        offset=Pose2D(float(xs[ix]), float(ys[iy]), float(thetas[it])),
        score=float(score_field[pick]),
        score_field=score_field,
        xs=xs, ys=ys, thetas=thetas,
        fitted_covariance=cov,
        valid_overlap=int(overlap_field[pick]),
    )


def dump_score_field(result: RegistrationResult, path) -> None:
    """Debug dump: one text matrix per theta slice, '%.6f' cells."""
    with open(path, "w", encoding="utf-8") as f:
        for it, th in enumerate(result.thetas):
            f.write(f"theta {th:.6f}\n")
            for row in result.score_field[it]:
                f.write(" ".join(f"{v:.6f}" for v in row) + "\n")
