"""Tests for the evaluation metrics."""

import math

import numpy as np
import pytest

from vesseltrees.graphs import NeighborSystem, knn_neighbors, build_confluent_graph
from vesseltrees.geometry import SampleCloud
from vesseltrees.metrics import (
    MatchTolerance,
    RocPoint,
    bifurcation_angle,
    bifurcation_roc,
    centerline_roc,
    connectivity_roc,
    median_angular_error,
    project_to_tree,
    resample_tree,
    roc_sweep,
)
from vesseltrees.solvers import NO_PARENT, VesselTree, minimum_arborescence
from vesseltrees.synth import GroundTruthTree, SamplerConfig, generate_tree, \
    sample_centerline


def straight_tree(gt: GroundTruthTree) -> VesselTree:
    """Ground truth rendered as a reconstruction with chord edges."""
    n = gt.n_nodes
    edge_weight = np.full(n, np.nan)
    edge_alpha = np.full(n, np.nan)
    edge_length = np.full(n, np.nan)
    childs = gt.edge_children()
    chord = np.linalg.norm(gt.positions[childs]
                           - gt.positions[gt.parent[childs]], axis=1)
    edge_weight[childs] = chord
    edge_alpha[childs] = 0.0
    edge_length[childs] = chord
    return VesselTree(root=gt.root, parent=gt.parent.copy(),
                      positions=gt.positions.copy(), edge_weight=edge_weight,
                      edge_alpha=edge_alpha, edge_length=edge_length,
                      total_weight=float(np.sum(chord)))


def single_edge_gt(length=1.0):
    return GroundTruthTree(positions=[[0, 0, 0], [length, 0, 0]],
                           radii=[1.0, 1.0], parent=[-1, 0],
                           domain_size=10.0)


def test_resample_counts():
    gt = single_edge_gt(1.0)
    pts, radii = resample_tree(gt, step=0.5)
    assert pts.shape[0] == 3
    assert radii.shape[0] == 3
    pts, _ = resample_tree(gt, step=5.0)
    assert pts.shape[0] == 2
    np.testing.assert_allclose(pts, [[0, 0, 0], [1, 0, 0]])


def test_resample_count_bookkeeping():
    gt = generate_tree(n_leaves=6, domain_size=100.0, seed=0)
    step = 0.25
    pts, _ = resample_tree(gt, step)
    expected = sum(int(math.ceil(le / step)) + 1 for le in gt.edge_lengths())
    assert pts.shape[0] == expected


def test_centerline_roc_identity():
    gt = generate_tree(n_leaves=8, domain_size=100.0, seed=1)
    recall, fallout = centerline_roc(gt, straight_tree(gt))
    assert recall == 1.0
    assert fallout == 0.0


def test_centerline_roc_shifted_copy():
    gt = single_edge_gt(10.0)
    zeta = MatchTolerance(uses_radius=False)
    shifted = straight_tree(gt)
    shifted.positions = shifted.positions + np.array([0, 10 * zeta.zeta, 0])
    recall, fallout = centerline_roc(gt, shifted, zeta)
    assert recall == 0.0
    assert fallout == 1.0


def test_centerline_roc_empty_recon():
    gt = single_edge_gt()
    empty = VesselTree(root=0, parent=np.array([NO_PARENT, -2]),
                       positions=gt.positions.copy(),
                       edge_weight=np.full(2, np.nan),
                       edge_alpha=np.full(2, np.nan),
                       edge_length=np.full(2, np.nan), total_weight=0.0)
    assert centerline_roc(gt, empty) == (0.0, 0.0)


def bif_tree():
    # root -> a -> {b, c}: one bifurcation at a with a 90 degree angle
    positions = [[0, 0, 0], [5, 0, 0], [10, 0, 0], [5, 5, 0]]
    return GroundTruthTree(positions=positions, radii=[1, 1, 1, 1],
                           parent=[-1, 0, 1, 1], domain_size=20.0)


def test_bifurcation_roc_identity_and_path():
    gt = bif_tree()
    recall, fallout = bifurcation_roc(gt, straight_tree(gt))
    assert (recall, fallout) == (1.0, 0.0)

    # single path: no branching points at all
    path = GroundTruthTree(positions=[[0, 0, 0], [5, 0, 0], [10, 0, 0]],
                           radii=[1, 1, 1], parent=[-1, 0, 1],
                           domain_size=20.0)
    recall, fallout = bifurcation_roc(gt, straight_tree(path))
    assert recall == 0.0 and fallout == 0.0


def test_bifurcation_roc_no_gt_bifurcations():
    path = GroundTruthTree(positions=[[0, 0, 0], [5, 0, 0], [10, 0, 0]],
                           radii=[1, 1, 1], parent=[-1, 0, 1],
                           domain_size=20.0)
    gt_with_bif = bif_tree()
    recall, fallout = bifurcation_roc(path, straight_tree(gt_with_bif))
    assert math.isnan(recall)
    assert fallout == 1.0


def test_bifurcation_angle_value_and_relabel_invariance():
    gt = bif_tree()
    angle = bifurcation_angle(gt, 1)
    assert angle == pytest.approx(math.pi / 2)
    # same tree with the two child rows swapped
    swapped = GroundTruthTree(
        positions=[[0, 0, 0], [5, 0, 0], [5, 5, 0], [10, 0, 0]],
        radii=[1, 1, 1, 1], parent=[-1, 0, 1, 1], domain_size=20.0)
    assert bifurcation_angle(swapped, 1) == pytest.approx(angle)


def test_median_angular_error_identity_and_offset():
    gt = bif_tree()
    assert median_angular_error(gt, straight_tree(gt)) == 0.0

    # rotate the side branch by a known angle around the bifurcation
    offset = math.radians(20.0)
    recon = straight_tree(gt)
    recon.positions = recon.positions.copy()
    # child 3 sits 5 voxels above node 1; swing it by `offset` further
    angle = math.pi / 2 + offset
    recon.positions[3] = recon.positions[1] + 5.0 * np.array(
        [math.cos(angle), math.sin(angle), 0.0])
    err = median_angular_error(gt, recon)
    assert err == pytest.approx(offset, abs=1e-9)


def test_median_angular_error_no_branching_is_inf():
    gt = bif_tree()
    path = GroundTruthTree(positions=[[0, 0, 0], [5, 0, 0], [10, 0, 0]],
                           radii=[1, 1, 1], parent=[-1, 0, 1],
                           domain_size=20.0)
    assert median_angular_error(gt, straight_tree(path)) == math.inf
    with pytest.raises(ValueError):
        median_angular_error(path, straight_tree(gt))


def test_roc_sweep_monotone_in_tolerance():
    gt = generate_tree(n_leaves=10, domain_size=100.0, seed=3)
    cloud = sample_centerline(tree=gt, cfg=SamplerConfig(
        spacing=1.0, position_noise_std=0.4, tangent_noise_std_rad=0.25,
        dropout_prob=0.1, orientation_flip_prob=0.02, seed=1))
    neighbors = knn_neighbors(cloud, k=min(500, len(cloud) - 1))
    graph = build_confluent_graph(cloud, neighbors, epsilon=math.pi / 2)
    root = int(np.argmin(np.linalg.norm(
        cloud.positions - gt.positions[gt.root], axis=1)))
    recon = minimum_arborescence(graph, root)
    scales = [0.5, 1.0, 2.0, 4.0]
    for kind in ("centerline", "bifurcation"):
        curve = roc_sweep(gt, recon, scales, kind=kind)
        assert len(curve) == len(scales)
        recalls = [p.recall for p in curve]
        fallouts = [p.fallout for p in curve]
        assert all(b >= a - 1e-12 for a, b in zip(recalls, recalls[1:]))
        assert all(b <= a + 1e-12 for a, b in zip(fallouts, fallouts[1:]))
        assert [p.threshold for p in curve] == sorted(scales)


def test_rocpoint_range_validation():
    with pytest.raises(ValueError):
        RocPoint(threshold=1.0, recall=1.5, fallout=0.0)


def test_connectivity_roc_parent_pairs():
    gt = generate_tree(n_leaves=6, domain_size=100.0, seed=4)
    cloud = SampleCloud(
        gt.positions,
        np.tile([1.0, 0.0, 0.0], (gt.n_nodes, 1)))
    childs = gt.edge_children()
    pairs = np.stack([np.minimum(gt.parent[childs], childs),
                      np.maximum(gt.parent[childs], childs)], axis=1)
    pairs = pairs[np.lexsort((pairs[:, 1], pairs[:, 0]))]
    system = NeighborSystem(k=1, pairs=pairs)
    recall, fallout = connectivity_roc(gt, system, cloud)
    assert recall == pytest.approx(1.0)
    assert fallout == 0.0


def test_connectivity_roc_sibling_bridges():
    gt = bif_tree()
    cloud = SampleCloud(gt.positions, np.tile([1.0, 0, 0], (4, 1)))
    system = NeighborSystem(k=1, pairs=np.array([[2, 3]]))
    recall, fallout = connectivity_roc(gt, system, cloud)
    assert fallout == 1.0
    assert recall == 0.0


def test_project_to_tree_basics():
    gt = single_edge_gt(10.0)
    pts = np.array([[5.0, 1.0, 0.0], [-3.0, 0.0, 0.0]])
    edge, frac, dist = project_to_tree(gt, pts)
    assert edge.tolist() == [1, 1]
    assert frac[0] == pytest.approx(0.5)
    assert dist[0] == pytest.approx(1.0)
    assert frac[1] == 0.0
    assert dist[1] == pytest.approx(3.0)
