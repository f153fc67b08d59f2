"""Geodesic distances on the rotational surface (P^1, 2 m |dz|^2/|z|^2).

In the moment coordinate tau = v' the metric reads
dtau^2 / (2 theta) + 2 theta dalpha^2 with theta(tau) = v''(s(tau)).
Distances are shortest paths on a (tau, alpha) lattice graph with a
k-stencil; the two poles are extra vertices joined to the first and last
rings by exact meridian arcs.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import gcd

import numpy as np
from scipy import sparse
from scipy.interpolate import CubicSpline
from scipy.sparse.csgraph import dijkstra

from .radial import MetricProfile, fit_tail_exponents

_GL4 = np.polynomial.legendre.leggauss(4)
_GL_U = 0.5 * (_GL4[0] + 1.0)
_GL_W = 0.5 * _GL4[1]


class DegenerateMetricError(ValueError):
    pass


@dataclass(frozen=True)
class GraphConfig:
    n_tau: int = 256
    n_alpha: int = 256
    stencil: int = 3
    sample_rings: int = 16
    sample_angles: int = 16

    def __post_init__(self):
        if self.stencil < 1:
            raise ValueError("stencil radius must be >= 1")
        if self.n_tau < 4 or self.n_alpha < 4:
            raise ValueError("lattice too small")
        if self.n_alpha % self.sample_angles:
            raise ValueError("sample_angles must divide n_alpha")
        if self.n_tau % self.sample_rings:
            raise ValueError("sample_rings must divide n_tau")


def _check_integrable(m: MetricProfile):
    left, right = fit_tail_exponents(m.grid, m.m)
    if left <= 0.0 or right <= 0.0:
        raise DegenerateMetricError(f"non-integrable endpoint: fitted exponents {left:.3g}, {right:.3g}")


def meridian_length(m: MetricProfile) -> float:
    """Pole-to-pole length int dtau / sqrt(2 theta) = int sqrt(m / 2) ds."""
    _check_integrable(m)
    return m.grid.integrate(np.sqrt(0.5 * m.m), tails=True)


@dataclass(frozen=True, eq=False)
class RadialChart:
    """theta and meridian arc length as smooth functions of tau."""

    metric: MetricProfile
    _log_theta: CubicSpline
    _log_arc_south: CubicSpline
    _log_arc_north: CubicSpline
    sigma_range: tuple[float, float]
    total_length: float

    @classmethod
    def build(cls, m: MetricProfile) -> "RadialChart":
        _check_integrable(m)
        sigma = np.log(m.tau) - np.log(m.tau_complement)
        keep = np.concatenate([[True], np.diff(sigma) > 0])
        keep &= np.isfinite(sigma)
        sigma = sigma[keep]
        speed = np.sqrt(0.5 * m.m)
        south, north = m.grid.cumulative(speed)
        return cls(
            metric=m,
            _log_theta=CubicSpline(sigma, np.log(m.m[keep])),
            _log_arc_south=CubicSpline(sigma, np.log(south[keep])),
            _log_arc_north=CubicSpline(sigma, np.log(north[keep])),
            sigma_range=(float(sigma[0]), float(sigma[-1])),
            total_length=meridian_length(m),
        )

    @staticmethod
    def sigma_of(tau) -> np.ndarray:
        tau = np.asarray(tau, dtype=float)
        return np.log(tau) - np.log(2.0 - tau)

    def _eval(self, spline: CubicSpline, sigma: np.ndarray) -> np.ndarray:
        lo, hi = self.sigma_range
        inside = np.clip(sigma, lo, hi)
        out = spline(inside)
        # log-linear continuation beyond the sampled range
        out = np.where(sigma < lo, out + spline(lo, 1) * (sigma - lo), out)
        return np.where(sigma > hi, out + spline(hi, 1) * (sigma - hi), out)

    def theta(self, tau) -> np.ndarray:
        return np.exp(self._eval(self._log_theta, self.sigma_of(tau)))

    def arc_from_south(self, tau) -> np.ndarray:
        return np.exp(self._eval(self._log_arc_south, self.sigma_of(tau)))

    def arc_from_north(self, tau) -> np.ndarray:
        return np.exp(self._eval(self._log_arc_north, self.sigma_of(tau)))


def _segment_lengths(chart: RadialChart, ta: np.ndarray, tb: np.ndarray, dalpha: float) -> np.ndarray:
    """Lengths of straight (tau, alpha) segments.

    Integrated in w = sqrt(tau) (or sqrt(2 - tau) on the northern half),
    which removes the 1/sqrt(tau) growth of the integrand near a pole.
    """
    south = (ta + tb) < 2.0
    wa = np.where(south, np.sqrt(ta), np.sqrt(2.0 - ta))
    wb = np.where(south, np.sqrt(tb), np.sqrt(2.0 - tb))
    w = wa[:, None] + _GL_U[None, :] * (wb - wa)[:, None]
    t = np.where(south[:, None], w * w, 2.0 - w * w)
    dt_dw = np.where(south[:, None], 2.0 * w, -2.0 * w)
    da_dw = dalpha / (tb - ta)[:, None] * dt_dw
    th = chart.theta(t)
    integrand = np.sqrt(dt_dw**2 / (2.0 * th) + 2.0 * th * da_dw**2)
    return (integrand @ _GL_W) * np.abs(wb - wa)


def stencil_offsets(k: int) -> list[tuple[int, int]]:
    """Primitive lattice offsets (di, dj) with Chebyshev norm <= k."""
    return [(di, dj) for di in range(-k, k + 1) for dj in range(-k, k + 1)
            if (di, dj) != (0, 0) and gcd(abs(di), abs(dj)) == 1]


@dataclass(frozen=True, eq=False)
class GeodesicGraph:
    config: GraphConfig
    chart: RadialChart
    tau: np.ndarray
    alpha: np.ndarray
    adjacency: sparse.csr_matrix

    @property
    def south(self) -> int:
        return self.config.n_tau * self.config.n_alpha

    @property
    def north(self) -> int:
        return self.south + 1

    def node(self, i, j) -> np.ndarray:
        return np.asarray(i) * self.config.n_alpha + np.mod(j, self.config.n_alpha)

    @classmethod
    def build(cls, m: MetricProfile, config: GraphConfig = GraphConfig()) -> "GeodesicGraph":
        chart = RadialChart.build(m)
        nt, na = config.n_tau, config.n_alpha
        dtau, dalpha = 2.0 / nt, 2.0 * np.pi / na
        tau = (np.arange(nt) + 0.5) * dtau
        alpha = np.arange(na) * dalpha
        arc = chart.arc_from_south(tau)
        ii = np.arange(nt)
        rows, cols, vals = [], [], []
        for di, dj in stencil_offsets(config.stencil):
            src = ii[(ii + di >= 0) & (ii + di < nt)]
            if dj == 0:
                length = np.abs(arc[src + di] - arc[src])
            elif di == 0:
                length = abs(dj) * dalpha * np.sqrt(2.0 * chart.theta(tau[src]))
            else:
                length = _segment_lengths(chart, tau[src], tau[src] + di * dtau, dj * dalpha)
            if np.any(~np.isfinite(length)) or np.any(length <= 0.0):
                raise DegenerateMetricError("non-positive edge weight")
            jj = np.arange(na)
            r = (src[:, None] * na + jj[None, :]).ravel()
            c = ((src[:, None] + di) * na + np.mod(jj[None, :] + dj, na)).ravel()
            rows.append(r)
            cols.append(c)
            vals.append(np.repeat(length, na))
        south, north = nt * na, nt * na + 1
        first = np.arange(na)
        last = (nt - 1) * na + np.arange(na)
        s_len = np.full(na, chart.arc_from_south(tau[0]))
        n_len = np.full(na, chart.arc_from_north(tau[-1]))
        rows += [np.full(na, south), first, np.full(na, north), last]
        cols += [first, np.full(na, south), last, np.full(na, north)]
        vals += [s_len, s_len, n_len, n_len]
        adj = sparse.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                                shape=(nt * na + 2, nt * na + 2))
        return cls(config, chart, tau, alpha, adj)

    def shortest_paths(self, sources, predecessors: bool = False):
        return dijkstra(self.adjacency, directed=True, indices=sources,
                        return_predecessors=predecessors)

    def sample_rings(self) -> np.ndarray:
        step = self.config.n_tau // self.config.sample_rings
        return np.arange(step // 2, self.config.n_tau, step)

    def sample_angles(self) -> np.ndarray:
        return np.arange(0, self.config.n_alpha, self.config.n_alpha // self.config.sample_angles)


@dataclass(frozen=True)
class DistanceField:
    """Pairwise distances on the sample set: poles, then rings x angles."""

    labels: list[tuple[float, float]]
    distances: np.ndarray
    diameter_estimate: float
    diameter_lo: float
    diameter_hi: float
    through_pole: bool

    def triangle_violation(self, triples: int = 10_000, seed: int = 0) -> float:
        rng = np.random.default_rng(seed)
        n = self.distances.shape[0]
        a, b, c = rng.integers(0, n, size=(3, triples))
        d = self.distances
        return float(max(0.0, np.max(d[a, c] - d[a, b] - d[b, c])))


def _sample_matrix(graph: GeodesicGraph) -> tuple[np.ndarray, list[tuple[float, float]]]:
    """Sample-set distance matrix from one Dijkstra pass per ring (rotational symmetry)."""
    rings = graph.sample_rings()
    angles = graph.sample_angles()
    na = graph.config.n_alpha
    sources = [graph.south, graph.north] + [int(graph.node(i, 0)) for i in rings]
    dist = graph.shortest_paths(sources)
    targets = np.concatenate([[graph.south, graph.north],
                              graph.node(rings[:, None], angles[None, :]).ravel()])
    labels = [(0.0, 0.0), (2.0, 0.0)] + [(float(graph.tau[i]), float(graph.alpha[j]))
                                         for i in rings for j in angles]
    n = len(targets)
    out = np.empty((n, n))
    out[0] = dist[0, targets]
    out[1] = dist[1, targets]
    k = 2
    for r_idx, i in enumerate(rings):
        row = dist[2 + r_idx]
        for j in angles:
            # rotate the source at angle 0 to angle j
            shifted = np.concatenate([[graph.south, graph.north],
                                      graph.node(rings[:, None], (angles[None, :] - j) % na).ravel()])
            out[k] = row[shifted]
            k += 1
    return 0.5 * (out + out.T), labels


def _graph_diameter(graph: GeodesicGraph) -> tuple[float, bool]:
    """Max eccentricity over the poles and one vertex on (up to) 64 rings.

    Also reports whether the realizing shortest path crosses a pole vertex.
    """
    rings = range(0, graph.config.n_tau, max(1, graph.config.n_tau // 64))
    sources = [graph.south, graph.north] + [int(graph.node(i, 0)) for i in rings]
    dist, pred = graph.shortest_paths(sources, predecessors=True)
    row, col = np.unravel_index(np.argmax(dist), dist.shape)
    value = float(dist[row, col])
    poles = {graph.south, graph.north}
    src = sources[row]
    node, through = int(col), False
    while node != src and node >= 0:
        node = int(pred[row, node])
        if node in poles and node != src:
            through = True
    return value, through


def distance_field(m: MetricProfile, config: GraphConfig = GraphConfig()) -> DistanceField:
    matrix, labels = _sample_matrix(GeodesicGraph.build(m, config))
    d = diameter(m, config)
    return DistanceField(labels, matrix, d.estimate, d.lo, d.hi, d.through_pole)


@dataclass(frozen=True)
class DiameterBracket:
    estimate: float
    lo: float
    hi: float
    meridian: float
    through_pole: bool


def diameter(m: MetricProfile, config: GraphConfig = GraphConfig()) -> DiameterBracket:
    """Graph diameter with stencils k and k + 2, floored by the pole distance."""
    coarse = GeodesicGraph.build(m, config)
    fine = GeodesicGraph.build(m, GraphConfig(config.n_tau, config.n_alpha, config.stencil + 2,
                                              config.sample_rings, config.sample_angles))
    coarse_d, _ = _graph_diameter(coarse)
    fine_d, through = _graph_diameter(fine)
    meridian = coarse.chart.total_length
    lo = max(meridian, fine_d - abs(coarse_d - fine_d))
    return DiameterBracket(fine_d, lo, max(coarse_d, fine_d), meridian, through)


@dataclass(frozen=True)
class GHReport:
    distortion: float
    tube_profile: dict[float, float]
    worst_pair: tuple[int, int]


def sample_distances(m: MetricProfile, config: GraphConfig = GraphConfig()) -> np.ndarray:
    """Distance matrix on the sample set (poles, then rings x angles)."""
    return _sample_matrix(GeodesicGraph.build(m, config))[0]


def gh_distortion(mA: MetricProfile, mB: MetricProfile, config: GraphConfig = GraphConfig(),
                  deltas=(0.4, 0.2, 0.1, 0.05, 0.025), reference: np.ndarray | None = None) -> GHReport:
    """sup |d_A - d_B| over sample pairs matched by equal (tau, alpha).

    ``reference`` may carry a precomputed sample matrix of ``mB``.
    """
    if mA.grid.node_count != mB.grid.node_count:
        raise ValueError("metrics must live on the same grid")
    dA = sample_distances(mA, config)
    dB = sample_distances(mB, config) if reference is None else reference
    diff = np.abs(dA - dB)
    worst = np.unravel_index(np.argmax(diff), diff.shape)
    tubes = {float(d): tube_size(d, mA) for d in deltas}
    return GHReport(float(diff.max()), tubes, (int(worst[0]), int(worst[1])))


def tube_size(delta: float, m: MetricProfile) -> float:
    """eta(delta): largest m-distance to the nearest pole inside the background delta-tube.

    ``delta`` is the round-metric geodesic distance from the poles, so the
    tube edge sits at x = sin^2(delta / 2).
    """
    if not 0.0 < delta < 0.5:
        raise ValueError("delta must lie in (0, 1/2)")
    s_edge = 2.0 * np.log(np.tan(0.5 * delta))
    speed = np.sqrt(0.5 * m.m)
    south, north = m.grid.cumulative(speed)
    s = m.grid.s
    if not s[0] < s_edge:
        raise ValueError("delta below grid resolution")
    eta_s = float(np.exp(CubicSpline(s, np.log(south))(s_edge)))
    eta_n = float(np.exp(CubicSpline(s, np.log(north))(-s_edge)))
    return max(eta_s, eta_n)


def tube_decay_exponent(m: MetricProfile, deltas) -> float:
    """Least-squares slope of log eta against log delta."""
    deltas = np.asarray(deltas, dtype=float)
    eta = np.array([tube_size(d, m) for d in deltas])
    return float(np.polyfit(np.log(deltas), np.log(eta), 1)[0])
