from __future__ import annotations

import sys
from fractions import Fraction
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from app.cantor_core import StageSet, build_middle_set  # noqa: E402
from app.pin_wiggle import DotPinCertificate, PinCertificate, distance_pin_window, dot_pin_window  # noqa: E402
from app.tree_mechanism import Tree, TreeCertificate, certify_tree  # noqa: E402

UNIT = (Fraction(0), Fraction(1))


def pytest_addoption(parser: pytest.Parser) -> None:
    parser.addoption("--runslow", action="store_true", default=False, help="run stage-8 certificate searches")


def pytest_collection_modifyitems(config: pytest.Config, items: list[pytest.Item]) -> None:
    if config.getoption("--runslow"):
        return
    skip_slow = pytest.mark.skip(reason="needs --runslow")
    for item in items:
        if "slow" in item.keywords:
            item.add_marker(skip_slow)


@pytest.fixture(scope="session")
def middle_thirds() -> StageSet:
    return build_middle_set(Fraction(1, 3), UNIT, 8)


@pytest.fixture(scope="session")
def middle_fifth() -> StageSet:
    return build_middle_set(Fraction(1, 5), UNIT, 8)


@pytest.fixture(scope="session")
def dot_certificate(middle_thirds: StageSet) -> DotPinCertificate:
    return dot_pin_window(middle_thirds, middle_thirds, (Fraction(1), Fraction(1)), Fraction(1, 10))


@pytest.fixture(scope="session")
def distance_certificate(middle_fifth: StageSet) -> PinCertificate:
    return distance_pin_window(middle_fifth, middle_fifth, (Fraction(0), Fraction(0)))


@pytest.fixture(scope="session")
def chain_certificate(middle_fifth: StageSet) -> TreeCertificate:
    from app.geometry import PhiSpec

    skeleton = [(Fraction(0), Fraction(0)), (Fraction(2, 5), Fraction(1)), (Fraction(1), Fraction(3, 5))]
    return certify_tree(PhiSpec("euclidean"), middle_fifth, middle_fifth, Tree.chain(2), skeleton)


@pytest.fixture(scope="session")
def middle_thirds_chain_certificate() -> TreeCertificate:
    from app.tree_mechanism import certify_tree_middle_thirds

    return certify_tree_middle_thirds(Tree.chain(3), 8)


@pytest.fixture(scope="session")
def section_certificate(middle_thirds: StageSet) -> PinCertificate:
    from app.cantor_core import restrict
    from app.pin_wiggle import middle_thirds_pin_window

    k1 = restrict(middle_thirds, (Fraction(8, 9), Fraction(1)))
    k2 = restrict(middle_thirds, (Fraction(6, 9), Fraction(7, 9)))
    return middle_thirds_pin_window(k1, k2, (Fraction(0), Fraction(0)))
