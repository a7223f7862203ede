from __future__ import annotations

import csv
from dataclasses import replace
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from app.cantor_core import StageSet, build_middle_set
from app.geometry import PhiSpec
from app.intervals import CertifiedInterval
from app.oracle import (
    OracleRefusal,
    brute_force_intersection,
    check_dot_certificate,
    check_pin_certificate,
    check_tree_certificate,
    enumerate_points,
    grid_resolution,
    oracle_sets,
    phi_values,
    stage_points,
    write_rows_csv,
)
from app.pin_wiggle import DotPinCertificate, PinCertificate
from app.tree_mechanism import Tree, TreeCertificate

F = Fraction


def test_brute_force_intersection() -> None:
    a = StageSet.explicit([(0, 1), (2, 3)])
    assert brute_force_intersection(a, StageSet.explicit([(F(3, 2), 2)])) == 2
    assert brute_force_intersection(a, StageSet.explicit([(F(5, 4), F(7, 4))])) is None
    assert brute_force_intersection(a, StageSet.explicit([(F(1, 2), F(5, 2))])) == F(1, 2)


def test_stage_points_cover_endpoint_grid() -> None:
    stage = build_middle_set(F(1, 3), (F(0), F(1)), 1)
    points = stage_points(stage, stage)
    assert points.shape == (4, 2)
    assert np.allclose(sorted(set(points[:, 0])), [0, 2 / 3])
    assert stage_points(stage, stage, mode="endpoints").shape == (16, 2)
    mids = stage_points(stage, stage, mode="midpoints")
    assert mids.shape == (4, 2)
    assert np.allclose(sorted(set(mids[:, 0])), [1 / 6, 5 / 6])


def test_phi_values_by_family() -> None:
    points = np.array([[3.0, 4.0], [1.0, 2.0]])
    assert np.allclose(phi_values(PhiSpec("euclidean"), (0.0, 0.0), points), [5.0, np.sqrt(5.0)])
    assert np.allclose(phi_values(PhiSpec("dot"), (1.0, 2.0), points), [11.0, 5.0])
    assert np.allclose(phi_values(PhiSpec("pnorm", p=F(3)), (0.0, 0.0), points)[1], 9 ** (1 / 3))


def test_grid_resolution_scales_with_widest_interval() -> None:
    stage = build_middle_set(F(1, 3), (F(0), F(1)), 2)
    assert grid_resolution(PhiSpec("euclidean"), stage, stage, (stage.hull, stage.hull)) == pytest.approx(1 / 6)


def test_oracle_refuses_shallower_depth(dot_certificate: DotPinCertificate) -> None:
    with pytest.raises(OracleRefusal, match="below the certificate depth") as exc_info:
        check_dot_certificate(dot_certificate, depth=4)
    assert exc_info.value.code == "depth_refused"


def test_oracle_sets_can_go_deeper() -> None:
    k1, k2 = oracle_sets("middle:1/3@[0,1]#2", "explicit:{[0,1]}", depth=3)
    assert len(k1.intervals) == 8
    assert k2.intervals == ((0, 1),)


def test_oracle_refuses_over_pair_cap(dot_certificate: DotPinCertificate) -> None:
    with pytest.raises(OracleRefusal) as exc_info:
        check_dot_certificate(dot_certificate, pair_cap=10)
    assert exc_info.value.code == "pair_cap"


def test_dot_certificate_passes_oracle(dot_certificate: DotPinCertificate) -> None:
    report = check_dot_certificate(dot_certificate, pin_grid=9, t_grid=16, with_rows=True)
    assert report.passed
    assert report.checked_pins == 9
    assert report.checked_targets == 9 * 16
    assert len(report.rows) == 9 * 16
    assert report.max_residual <= report.resolution + 1e-9


def test_oracle_default_grids(dot_certificate: DotPinCertificate) -> None:
    report = check_dot_certificate(dot_certificate)
    assert report.checked_pins == 12 * 12
    assert report.checked_targets == 12 * 12 * 128
    assert report.passed


def test_oracle_flags_unreachable_targets(dot_certificate: DotPinCertificate) -> None:
    far = replace(dot_certificate, t_interval=(F(5), F(6)))
    report = check_dot_certificate(far, pin_grid=4, t_grid=4)
    assert not report.passed
    assert all(row["residual"] > report.resolution for row in report.failures)


def test_write_rows_csv(tmp_path: Path) -> None:
    target = tmp_path / "out" / "rows.csv"
    write_rows_csv([{"x1": 1.0, "x2": 1.0, "t": 1.5, "residual": 0.001}], target)
    with target.open(encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    assert rows == [{"x1": "1.0", "x2": "1.0", "t": "1.5", "residual": "0.001"}]


@pytest.mark.slow
def test_distance_certificate_passes_oracle(distance_certificate: PinCertificate) -> None:
    report = check_pin_certificate(distance_certificate, pin_grid=16, t_grid=16)
    assert report.passed, report.failures[:3]


@pytest.mark.slow
def test_tree_certificate_passes_oracle(chain_certificate: TreeCertificate) -> None:
    report = check_tree_certificate(chain_certificate, samples=4, seed=7)
    assert report.passed, report.failures[:3]
    assert report.checked_targets > 0


def test_enumerate_points_matches_stage_points() -> None:
    stage = build_middle_set(F(1, 3), (F(0), F(1)), 2)
    listed = list(enumerate_points(stage, stage))
    assert len(listed) == len(stage.intervals) ** 2 == 16
    assert listed[0] == (0.0, 0.0)
    assert np.array_equal(np.array(listed), stage_points(stage, stage))
    assert len(list(enumerate_points(stage, stage, mode="endpoints"))) == 64
    assert len(list(enumerate_points(stage, stage, mode="midpoints"))) == 16


def test_enumerate_points_on_first_stage_is_left_corners() -> None:
    stage = build_middle_set(F(1, 3), (F(0), F(1)), 1)
    assert sorted(enumerate_points(stage, stage)) == [(0.0, 0.0), (0.0, 2 / 3), (2 / 3, 0.0), (2 / 3, 2 / 3)]


def test_enumerate_points_counts_unequal_sets() -> None:
    k1 = build_middle_set(F(1, 3), (F(0), F(1)), 3)
    k2 = build_middle_set(F(1, 5), (F(0), F(1)), 1)
    assert len(list(enumerate_points(k1, k2))) == 8 * 2


def _one_edge_certificate(target: Fraction) -> TreeCertificate:
    # left corners of middle-fifth stage 1 are {0, 3/5} on each axis; the resolution is 3/2 * 2/5
    return TreeCertificate(
        mode="phi",
        phi=PhiSpec("euclidean"),
        set1="middle:1/5@[0,1]#1",
        set2="middle:1/5@[0,1]#1",
        tree=Tree.chain(1),
        skeleton=((F(0), F(0)), (F(3, 5), F(3, 5))),
        epsilon=F(3, 10),
        resolution=F(3, 5),
        edge_intervals=(CertifiedInterval.exact(target),),
        radii=(F(3, 10), F(1, 10)),
        steps=(),
        limit_valid=False,
    )


def test_tree_oracle_holds_each_edge_to_one_resolution() -> None:
    # farthest corner is (3/5, 3/5) at about 0.8485 from the root
    near = check_tree_certificate(_one_edge_certificate(F(1)), samples=2)
    assert near.passed
    assert near.resolution == pytest.approx(0.6)
    far = check_tree_certificate(_one_edge_certificate(F(7, 4)), samples=2)
    assert not far.passed
    assert far.resolution < far.failures[0]["residual"] < 2 * far.resolution
