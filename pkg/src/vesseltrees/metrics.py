"""Reconstruction quality metrics against ground-truth trees.

Point-matching metrics (centerline and bifurcation recall/fall-out) resample
both trees uniformly and match points within ``max(radius, zeta)`` where
zeta defaults to half a voxel diagonal. Bifurcation angular error matches
every ground-truth branching to the closest reconstructed branching point
with no distance cutoff and reports the median absolute angle difference.
Connectivity recall/fall-out scores a neighbor system by whether its edges
follow ancestor/descendant lines of the ground-truth tree.

Bifurcation angles are measured between the two child branch directions.
Each direction is the unit chord of the first voxel of the child branch's
node polyline starting at the child node (chord from the branching node
for leaf children). Starting at the child node makes the measure exact on
clean data even when the solver smooths a wide branching by attaching the
branch one sample upstream. The same rule is applied to ground truth and
reconstructions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .geometry import arc_points
from .graphs import NeighborSystem, as_cloud
from .synth import GroundTruthTree

DEFAULT_STEP = 0.25
DEFAULT_ZETA = math.sqrt(2.0) / 2.0
BRANCH_PROBE_LENGTH = 1.0
_SNAP_FRAC = 1e-9


@dataclass
class MatchTolerance:
    """Matching distance: ``max(radius, zeta)`` or plain ``zeta``."""

    zeta: float = DEFAULT_ZETA
    uses_radius: bool = True

    def __post_init__(self):
        if self.zeta <= 0:
            raise ValueError("zeta must be > 0")

    def for_radii(self, radii) -> np.ndarray:
        if self.uses_radius and radii is not None:
            return np.maximum(np.asarray(radii, dtype=float), self.zeta)
        size = 1 if radii is None else len(radii)
        return np.full(size, self.zeta)

    def scaled(self, factor: float) -> "MatchTolerance":
        return MatchTolerance(zeta=self.zeta * factor,
                              uses_radius=self.uses_radius)


@dataclass
class RocPoint:
    threshold: float
    recall: float
    fallout: float

    def __post_init__(self):
        for name in ("recall", "fallout"):
            v = getattr(self, name)
            if not (math.isnan(v) or 0.0 <= v <= 1.0):
                raise ValueError(f"{name} must be in [0, 1], got {v}")


def _edge_children(tree) -> np.ndarray:
    return np.flatnonzero(np.asarray(tree.parent) >= 0)


def _children_map(tree):
    children = {}
    for v in _edge_children(tree):
        children.setdefault(int(tree.parent[v]), []).append(int(v))
    return children


def _edge_curve(tree, child, fracs) -> np.ndarray:
    """Points along the edge parent -> child at the given arc fractions."""
    a = int(tree.parent[child])
    p = tree.positions[a]
    q = tree.positions[child]
    tangents = getattr(tree, "edge_start_tangent", None)
    if tangents is not None and np.all(np.isfinite(tangents[child])):
        return arc_points(p, tangents[child], q, fracs)
    fracs = np.atleast_1d(np.asarray(fracs, dtype=float))
    return p + fracs[:, None] * (q - p)


def _edge_length(tree, child) -> float:
    lengths = getattr(tree, "edge_length", None)
    if lengths is not None and math.isfinite(lengths[child]):
        return float(lengths[child])
    a = int(tree.parent[child])
    return float(np.linalg.norm(tree.positions[child] - tree.positions[a]))


def resample_tree(tree, step: float = DEFAULT_STEP):
    """Uniformly resample every edge; returns (points, radii-or-None).

    Points are spaced at most ``step`` apart in arc length with both edge
    endpoints always included; reconstructed trees are resampled along
    their arc geometry, ground truth along its polylines. Radii are
    interpolated for trees that carry them.
    """
    if step <= 0:
        raise ValueError("step must be > 0")
    radii = getattr(tree, "radii", None)
    childs = _edge_children(tree)
    if childs.size == 0:
        root = getattr(tree, "root", 0)
        pts = tree.positions[int(root)][None, :]
        return (pts, radii[[int(root)]].copy() if radii is not None else None)
    pts, rads = [], []
    for child in childs:
        child = int(child)
        a = int(tree.parent[child])
        n = max(1, int(math.ceil(_edge_length(tree, child) / step)))
        fracs = np.arange(n + 1) / n
        pts.append(_edge_curve(tree, child, fracs))
        if radii is not None:
            rads.append((1 - fracs) * radii[a] + fracs * radii[child])
    points = np.concatenate(pts, axis=0)
    return points, (np.concatenate(rads) if radii is not None else None)


def _match_stats(gt_pts, gt_radii, rec_pts, tol: MatchTolerance):
    """(recall, fallout) between two point sets with per-GT-point radii."""
    if rec_pts.shape[0] == 0:
        return 0.0, 0.0
    if gt_pts.shape[0] == 0:
        return math.nan, 1.0
    limits = tol.for_radii(gt_radii if gt_radii is not None
                           else np.zeros(gt_pts.shape[0]))
    d_gt, _ = cKDTree(rec_pts).query(gt_pts, workers=-1)
    recall = float(np.mean(d_gt <= limits))
    d_rec, nearest = cKDTree(gt_pts).query(rec_pts, workers=-1)
    fallout = float(np.mean(d_rec > limits[nearest]))
    return recall, fallout


def centerline_roc(gt: GroundTruthTree, recon, tol: MatchTolerance = None,
                   step: float = DEFAULT_STEP):
    """Centerline recall/fall-out between resampled GT and reconstruction."""
    tol = tol or MatchTolerance()
    if np.sum(np.asarray(recon.parent) >= 0) == 0:
        return 0.0, 0.0
    gt_pts, gt_radii = resample_tree(gt, step)
    rec_pts, _ = resample_tree(recon, step)
    return _match_stats(gt_pts, gt_radii, rec_pts, tol)


def bifurcation_roc(gt: GroundTruthTree, recon, tol: MatchTolerance = None,
                    step: float = DEFAULT_STEP):
    """Recall/fall-out restricted to branching points.

    Recall is NaN (not applicable) when the ground truth has no
    bifurcations.
    """
    tol = tol or MatchTolerance()
    gt_bifs = gt.bifurcations
    rec_nodes = recon.branching_nodes()
    rec_pts = recon.positions[rec_nodes] if rec_nodes.size else \
        np.empty((0, 3))
    gt_pts = gt.positions[gt_bifs] if gt_bifs.size else np.empty((0, 3))
    gt_radii = gt.radii[gt_bifs] if gt_bifs.size else None
    return _match_stats(gt_pts, gt_radii, rec_pts, tol)


def _point_along_branch(tree, node, child, distance, children):
    """Point ``distance`` along the node polyline entered through child."""
    pos = tree.positions
    cur_point = pos[int(node)]
    cur_node = int(child)
    remaining = float(distance)
    while True:
        seg = pos[cur_node] - cur_point
        seg_len = float(np.linalg.norm(seg))
        kids = children.get(cur_node, [])
        if seg_len >= remaining or not kids:
            if seg_len <= 1e-12:
                return pos[cur_node]
            return cur_point + min(1.0, remaining / seg_len) * seg
        remaining -= seg_len
        cur_point = pos[cur_node]
        cur_node = kids[0]


def _branch_direction(tree, node, child, children, probe):
    """Unit direction of the branch through ``child``, measured at ``child``.

    The chord of the first ``probe`` voxels of the child's subtree
    polyline; for leaf children the chord from the branching node itself.
    """
    pos = tree.positions
    kids = children.get(int(child), [])
    if kids:
        vec = _point_along_branch(tree, child, kids[0], probe,
                                  children) - pos[int(child)]
    else:
        vec = pos[int(child)] - pos[int(node)]
    norm = float(np.linalg.norm(vec))
    return vec / norm if norm > 1e-12 else None


def bifurcation_angle(tree, node, children=None,
                      probe: float = BRANCH_PROBE_LENGTH) -> float:
    """Angle between the two child branch directions at a branching node.

    With three or more children the widest pair is reported, which keeps
    the value deterministic for non-binary reconstructions.
    """
    children = children if children is not None else _children_map(tree)
    kids = children.get(int(node), [])
    if len(kids) < 2:
        raise ValueError(f"node {node} has fewer than two children")
    dirs = []
    for child in kids:
        d = _branch_direction(tree, node, child, children, probe)
        if d is not None:
            dirs.append(d)
    if len(dirs) < 2:
        raise ValueError(f"node {node} has degenerate child directions")
    best = 0.0
    for i in range(len(dirs)):
        for j in range(i + 1, len(dirs)):
            dot = min(1.0, max(-1.0, float(np.dot(dirs[i], dirs[j]))))
            best = max(best, math.acos(dot))
    return best


def angular_errors(gt: GroundTruthTree, recon):
    """Per-GT-bifurcation |angle difference| in radians.

    Every GT bifurcation is matched to the closest reconstructed branching
    point regardless of distance. Returns [inf] * n_bifurcations when the
    reconstruction has no branching points at all.
    """
    gt_bifs = gt.bifurcations
    if gt_bifs.size == 0:
        raise ValueError("ground truth has no bifurcations")
    rec_nodes = recon.branching_nodes()
    if rec_nodes.size == 0:
        return [math.inf] * int(gt_bifs.size)
    gt_children = _children_map(gt)
    rec_children = _children_map(recon)
    rec_pts = recon.positions[rec_nodes]
    errors = []
    for b in gt_bifs:
        d = np.linalg.norm(rec_pts - gt.positions[int(b)], axis=1)
        match = rec_nodes[int(np.argmin(d))]
        a_gt = bifurcation_angle(gt, b, gt_children)
        a_rec = bifurcation_angle(recon, match, rec_children)
        errors.append(abs(a_gt - a_rec))
    return errors


def median_angular_error(gt: GroundTruthTree, recon) -> float:
    """Median of ``angular_errors``; +inf when nothing branches."""
    return float(np.median(angular_errors(gt, recon)))


def recall_at_fallout(points, target_fallout: float) -> float:
    """Interpolate a curve's recall at a given fall-out, clamped to range."""
    pts = sorted(((p.fallout, p.recall) for p in points
                  if not math.isnan(p.recall)))
    if not pts:
        return math.nan
    xs = [p[0] for p in pts]
    ys = [p[1] for p in pts]
    if target_fallout <= xs[0]:
        return ys[0]
    if target_fallout >= xs[-1]:
        return ys[-1]
    return float(np.interp(target_fallout, xs, ys))


def roc_sweep(gt: GroundTruthTree, recon, scales, kind: str = "bifurcation",
              tol: MatchTolerance = None, step: float = DEFAULT_STEP):
    """ROC curve by sweeping the matching tolerance scale factor."""
    tol = tol or MatchTolerance()
    metric = bifurcation_roc if kind == "bifurcation" else centerline_roc
    points = []
    for scale in sorted(scales):
        recall, fallout = metric(gt, recon, tol.scaled(scale), step)
        points.append(RocPoint(threshold=float(scale), recall=recall,
                               fallout=fallout))
    return points


# ---------------------------------------------------------------------------
# Connectivity quality of neighbor systems
# ---------------------------------------------------------------------------

def project_to_tree(gt: GroundTruthTree, points, chunk: int = 4096):
    """Project points onto the tree: (edge_child, frac, distance) arrays."""
    childs = _edge_children(gt)
    a = gt.positions[gt.parent[childs]]
    b = gt.positions[childs]
    d = b - a
    len_sq = np.einsum("ij,ij->i", d, d)
    len_sq = np.where(len_sq <= 0, 1.0, len_sq)
    points = np.asarray(points, dtype=float).reshape(-1, 3)
    n = points.shape[0]
    out_edge = np.empty(n, dtype=np.int64)
    out_frac = np.empty(n)
    out_dist = np.empty(n)
    for lo in range(0, n, chunk):
        pts = points[lo:lo + chunk]
        frac = np.einsum("pj,ej->pe", pts, d) - np.einsum("ej,ej->e", a, d)
        frac = np.clip(frac / len_sq, 0.0, 1.0)
        foot = a[None, :, :] + frac[:, :, None] * d[None, :, :]
        dist = np.linalg.norm(pts[:, None, :] - foot, axis=2)
        best = np.argmin(dist, axis=1)
        rows = np.arange(pts.shape[0])
        out_edge[lo:lo + chunk] = childs[best]
        out_frac[lo:lo + chunk] = frac[rows, best]
        out_dist[lo:lo + chunk] = dist[rows, best]
    return out_edge, out_frac, out_dist


def _ancestors_plus(gt: GroundTruthTree):
    anc = {}
    for v in range(gt.n_nodes):
        chain = set()
        x = v
        while x >= 0:
            chain.add(int(x))
            x = int(gt.parent[x])
        anc[v] = chain
    return anc


def _canonical_projection(gt, edge_child, frac):
    """Snap edge projections landing on a node to that node."""
    if frac >= 1.0 - _SNAP_FRAC:
        return ("node", int(edge_child))
    if frac <= _SNAP_FRAC:
        return ("node", int(gt.parent[edge_child]))
    return ("edge", int(edge_child), float(frac))


def _relation_spans(gt, proj_u, proj_v, anc):
    """None if unrelated, else the covered (edge_child, lo, hi) spans."""

    def node_of(p):
        return p[1] if p[0] == "node" else None

    def edge_parts(p):
        return (p[1], p[2]) if p[0] == "edge" else (None, None)

    nu, nv = node_of(proj_u), node_of(proj_v)
    eu, su = edge_parts(proj_u)
    ev, sv = edge_parts(proj_v)

    if eu is not None and ev is not None and eu == ev:
        return [(eu, min(su, sv), max(su, sv))]

    def is_above(p_top, p_bot):
        """p_top strictly on the root path of p_bot?"""
        top_node = p_top[1] if p_top[0] == "node" else None
        if p_top[0] == "edge":
            b_top = p_top[1]
            anchor = b_top
        else:
            anchor = top_node
        if p_bot[0] == "node":
            below = p_bot[1]
        else:
            below = int(gt.parent[p_bot[1]])
        return anchor in anc[below]

    for top, bot in ((proj_u, proj_v), (proj_v, proj_u)):
        if not is_above(top, bot):
            continue
        spans = []
        if top[0] == "edge":
            spans.append((top[1], top[2], 1.0))
            join = top[1]
        else:
            join = top[1]
        if bot[0] == "edge":
            spans.append((bot[1], 0.0, bot[2]))
            x = int(gt.parent[bot[1]])
        else:
            x = bot[1]
        while x != join:
            spans.append((x, 0.0, 1.0))
            x = int(gt.parent[x])
        return spans
    return None


def connectivity_roc(gt: GroundTruthTree, neighbors: NeighborSystem, samples):
    """Score a neighbor system against the tree's ancestry structure.

    An edge is correct iff its endpoint projections onto the tree lie on
    one root-to-leaf line. Recall is the fraction of total tree length
    covered by correct edges' projected spans; fall-out is the fraction of
    incorrect edges.
    """
    cloud = as_cloud(samples)
    edge_idx, frac, _ = project_to_tree(gt, cloud.positions)
    anc = _ancestors_plus(gt)
    projections = [_canonical_projection(gt, e, f)
                   for e, f in zip(edge_idx, frac)]
    lengths = {int(c): _edge_length(gt, int(c)) for c in _edge_children(gt)}
    intervals = {}
    incorrect = 0
    for u, v in neighbors.pairs.tolist():
        spans = _relation_spans(gt, projections[u], projections[v], anc)
        if spans is None:
            incorrect += 1
            continue
        for child, lo, hi in spans:
            if hi > lo:
                intervals.setdefault(child, []).append((lo, hi))
    covered = 0.0
    for child, spans in intervals.items():
        spans.sort()
        cur_lo, cur_hi = spans[0]
        for lo, hi in spans[1:]:
            if lo > cur_hi:
                covered += (cur_hi - cur_lo) * lengths[child]
                cur_lo, cur_hi = lo, hi
            else:
                cur_hi = max(cur_hi, hi)
        covered += (cur_hi - cur_lo) * lengths[child]
    total = gt.total_length()
    recall = covered / total if total > 0 else 0.0
    n_pairs = neighbors.n_pairs
    fallout = incorrect / n_pairs if n_pairs else 0.0
    return float(recall), float(fallout)
