"""Shared fixtures: scenario paths, sampled spheres, independent oracles and
random model generators."""

from __future__ import annotations

from pathlib import Path

import numpy as np
import pytest

from dismantle.dspace import EPS_ANG, EPS_CONE, DirectionSet, sample_sphere
from dismantle.geometry import Pose
from dismantle.model import (AssemblyModel, Component, FeatureGeometry,
                             GeometryKind, RelationKind, Semantic,
                             SpatialRelation, contacts_of, load_model)

SCENARIOS = Path(__file__).resolve().parent.parent / "scenarios"

FEATURE_SQUARE = np.array([
    [0.02, 0.02, 0.0],
    [-0.02, 0.02, 0.0],
    [-0.02, -0.02, 0.0],
    [0.02, -0.02, 0.01],
])

STATIONS = {
    "screwdriver": Pose(np.array([0.1, -0.45, 0.15])),
    "gripper": Pose(np.array([-0.1, -0.45, 0.15])),
}


@pytest.fixture(scope="session")
def dirs10k() -> DirectionSet:
    return sample_sphere(10_000, seed=0)


@pytest.fixture(scope="session")
def dirs2k() -> DirectionSet:
    return sample_sphere(2_000, seed=0)


@pytest.fixture(scope="session")
def single_screw_path() -> Path:
    return SCENARIOS / "single_screw.json"


@pytest.fixture(scope="session")
def valve_path() -> Path:
    return SCENARIOS / "valve.json"


@pytest.fixture(scope="session")
def single_screw_model():
    return load_model(SCENARIOS / "single_screw.json")


@pytest.fixture(scope="session")
def valve_model():
    return load_model(SCENARIOS / "valve.json")


# ------------------------------------------------------------------ oracles

def brute_force_space(model: AssemblyModel, component_id: str,
                      dirs: DirectionSet) -> np.ndarray:
    """Independent per-direction evaluation of every contact predicate.

    Plain boolean predicates ANDed together; no sorting, no searching.  This
    is the oracle the production sorted-set path must match bit for bit.
    """
    mask = dirs.mask.copy()
    for rel in contacts_of(model, component_id):
        d = rel.direction if component_id == rel.components[0] else -rel.direction
        scores = dirs.directions @ d
        if rel.kind is RelationKind.SCREWED:
            mask &= np.zeros(dirs.n, dtype=bool)
        elif rel.kind in (RelationKind.PLANE_CONTACT, RelationKind.CONGRUENT):
            mask &= scores >= -EPS_ANG
        elif rel.kind is RelationKind.CONCENTRIC:
            mask &= np.abs(scores) >= np.cos(EPS_CONE)
        else:  # pragma: no cover
            raise AssertionError(rel.kind)
    return mask


def random_unit(rng: np.random.Generator) -> np.ndarray:
    v = rng.normal(size=3)
    return v / np.linalg.norm(v)


def random_contact_model(rng: np.random.Generator,
                         max_components: int = 6,
                         max_contacts: int = 4) -> AssemblyModel:
    """Arbitrary connected model for space-computation equivalence tests.

    Geometry is unconstrained (random contact directions), so the resulting
    spaces exercise every predicate combination; the model is still valid per
    the loader invariants.
    """
    n_extra = int(rng.integers(1, max_components))
    components = [Component(id="base", semantic=Semantic.BASE)]
    ids = ["base"]
    relations = []
    kinds = [RelationKind.PLANE_CONTACT, RelationKind.CONGRUENT,
             RelationKind.CONCENTRIC, RelationKind.SCREWED]
    for i in range(n_extra):
        cid = f"c{i}"
        pose = Pose(rng.uniform(-0.3, 0.3, size=3))
        components.append(Component(id=cid, semantic=Semantic.GENERIC_GRASPABLE,
                                    pose=pose))
        n_rel = int(rng.integers(1, max_contacts + 1))
        partners = [ids[int(rng.integers(0, len(ids)))]]
        for _ in range(n_rel - 1):
            partners.append(ids[int(rng.integers(0, len(ids)))])
        for partner in partners:
            kind = kinds[int(rng.integers(0, len(kinds)))]
            geo_kind = (GeometryKind.PLANE
                        if kind in (RelationKind.PLANE_CONTACT,
                                    RelationKind.CONGRUENT)
                        else GeometryKind.CYLINDER)
            direction = random_unit(rng)
            geometry = FeatureGeometry(kind=geo_kind, direction=direction)
            relations.append(SpatialRelation(kind=kind, components=(cid, partner),
                                             geometry=geometry,
                                             direction=direction.copy()))
        ids.append(cid)
    model = AssemblyModel(components=tuple(components), relations=tuple(relations),
                          tool_stations=dict(STATIONS))
    model.validate()
    return model


def random_feasible_model(rng: np.random.Generator,
                          max_extra: int = 4) -> AssemblyModel:
    """Stacked assembly that is always fully disassemblable top-down.

    Component i sits on component i-1 through one of: a plane contact
    (graspable part), a screwed joint (screw), or a concentric fit plus seat
    plane (hose-style fitting).  The target is the bottom-most non-base part,
    so plans must clear the stack above it.
    """
    n_extra = int(rng.integers(1, max_extra + 1))
    components = [Component(id="base", semantic=Semantic.BASE)]
    relations = []
    below = "base"
    z = 0.0
    put_x = 0.45
    for i in range(n_extra):
        cid = f"p{i}"
        z += 0.04
        style = int(rng.integers(0, 3))
        pose = Pose(np.array([0.25 + rng.uniform(-0.05, 0.05),
                              rng.uniform(-0.05, 0.05), z]))
        put = Pose(np.array([put_x, -0.3, 0.02]))
        put_x += 0.08
        grasp = Pose(np.array([0.0, 0.0, 0.12]))
        if style == 0:
            semantic = Semantic.SCREW
            kind_list = [(RelationKind.SCREWED, np.array([0.0, 0.0, 1.0]))]
        elif style == 1:
            semantic = Semantic.GENERIC_GRASPABLE
            kind_list = [(RelationKind.PLANE_CONTACT, np.array([0.0, 0.0, 1.0]))]
        else:
            semantic = Semantic.HOSE
            kind_list = [(RelationKind.CONCENTRIC, np.array([0.0, 0.0, 1.0])),
                         (RelationKind.PLANE_CONTACT, np.array([0.0, 0.0, 1.0]))]
        components.append(Component(id=cid, semantic=semantic, pose=pose,
                                    grasp_offset=grasp,
                                    visual_features=FEATURE_SQUARE.copy(),
                                    put_pose=put))
        for kind, direction in kind_list:
            geo_kind = (GeometryKind.PLANE if kind is RelationKind.PLANE_CONTACT
                        else GeometryKind.CYLINDER)
            geometry = FeatureGeometry(kind=geo_kind, direction=direction)
            relations.append(SpatialRelation(kind=kind, components=(cid, below),
                                             geometry=geometry,
                                             direction=direction.copy()))
        below = cid
    target = "p0" if rng.random() < 0.5 else None
    model = AssemblyModel(components=tuple(components), relations=tuple(relations),
                          tool_stations=dict(STATIONS), target=target,
                          robot_start=Pose(np.array([0.0, -0.1, 0.35])))
    model.validate()
    return model
