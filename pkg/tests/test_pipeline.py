"""End-to-end pipeline behavior on small synthetic data."""

import math

import numpy as np
import pytest

from vesseltrees.geometry import SampleCloud
from vesseltrees.graphs import build_confluent_graph, build_geodesic_graph, \
    knn_neighbors
from vesseltrees.metrics import MatchTolerance, centerline_roc, \
    median_angular_error
from vesseltrees.pipeline import PipelineConfig, reconstruct_cloud, \
    resolve_root
from vesseltrees.solvers import minimum_arborescence, minimum_spanning_tree
from vesseltrees.synth import SamplerConfig, generate_tree, sample_centerline


def test_resolve_root():
    cloud = SampleCloud([[0, 0, 0], [5, 0, 0], [9, 0, 0]],
                        np.tile([1.0, 0, 0], (3, 1)))
    assert resolve_root(cloud, root_index=2) == 2
    assert resolve_root(cloud, root_at=(4.4, 0, 0)) == 1
    with pytest.raises(ValueError):
        resolve_root(cloud, root_index=7)
    with pytest.raises(ValueError):
        resolve_root(cloud)


def test_pipeline_config_validation():
    with pytest.raises(ValueError):
        PipelineConfig(mode="bogus")
    with pytest.raises(ValueError):
        PipelineConfig(epsilon=0.0)
    with pytest.raises(ValueError):
        PipelineConfig(epsilon=4.0)
    with pytest.raises(ValueError):
        PipelineConfig(elastic_lambda=-1.0)


def crossing_branch_cloud(theta_deg=30.0, n_chain=4, spacing=1.0):
    """A bifurcation whose two child branches leave at an acute angle.

    The first samples of the two children are closer to each other than to
    the branching point, the classic shortcut bait for distance-weighted
    MST.
    """
    half = math.radians(theta_deg) / 2.0
    u1 = np.array([math.cos(half), math.sin(half), 0.0])
    u2 = np.array([math.cos(half), -math.sin(half), 0.0])
    x = np.array([1.0, 0.0, 0.0])
    pts = [[-spacing, 0, 0], [0, 0, 0]]
    tans = [x, x]
    for i in range(1, n_chain + 1):
        pts.append(i * spacing * u1)
        tans.append(u1)
        pts.append(i * spacing * u2)
        tans.append(u2)
    return SampleCloud(np.array(pts), np.array(tans)), 1


def test_confluent_keeps_bifurcation_where_mst_shortcuts():
    cloud, bif_index = crossing_branch_cloud()
    neighbors = knn_neighbors(cloud, k=len(cloud) - 1)

    geo = build_geodesic_graph(cloud, neighbors)
    mst = minimum_spanning_tree(geo, 0)
    c1, c2 = 2, 3  # first samples of the two child branches
    # the geodesic MST bridges the two branches instead of branching
    assert mst.parent[c2] == c1 or mst.parent[c1] == c2
    assert bif_index not in mst.branching_nodes()

    conf = build_confluent_graph(cloud, neighbors, epsilon=math.pi / 2)
    arb = minimum_arborescence(conf, 0)
    assert arb.parent[c1] == bif_index
    assert arb.parent[c2] == bif_index
    assert bif_index in arb.branching_nodes()
    # no cross-branch arcs survive the confluence gate at the bifurcation
    stored = set(zip(arb.parent[[c1, c2]].tolist(), [c1, c2]))
    assert stored == {(bif_index, c1), (bif_index, c2)}


def test_zero_noise_reconstruction_quality():
    cfg = PipelineConfig()
    tol = MatchTolerance()
    for seed in range(3):
        gt = generate_tree(n_leaves=8, domain_size=100.0, seed=seed)
        cloud = sample_centerline(gt, SamplerConfig(spacing=1.0, seed=seed))
        root = resolve_root(cloud, root_at=gt.positions[gt.root])
        tree, stats, _ = reconstruct_cloud(cloud, cfg, root)
        recall, fallout = centerline_roc(gt, tree, tol)
        assert recall >= 0.99
        assert fallout <= 0.01
        assert math.degrees(median_angular_error(gt, tree)) <= 5.0
        assert stats["n_excluded"] == 0


def test_geodesic_mode_runs_end_to_end():
    gt = generate_tree(n_leaves=6, domain_size=100.0, seed=9)
    cloud = sample_centerline(gt, SamplerConfig(spacing=1.0, seed=9))
    cfg = PipelineConfig(mode="geodesic", k=20)
    root = resolve_root(cloud, root_at=gt.positions[gt.root])
    tree, stats, _ = reconstruct_cloud(cloud, cfg, root)
    tree.validate()
    recall, _ = centerline_roc(gt, tree)
    assert recall >= 0.95
    assert stats["mode"] == "geodesic"
