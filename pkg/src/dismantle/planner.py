"""Symbolic task planning: manipulation primitives over the mobility state.

The planner removes one component at a time (linear, monotone plans).  A
screwed component is handled by a single twist primitive, whose execution
unscrews, extracts and stores it; every other extraction is a pull (grasp and
withdraw) followed by a put that releases the part at its storage pose.
Assembly plans are the exact inverse of disassembly plans with move and put
roles exchanged.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from .dspace import (DirectionSet, EPS_CONE, Mobility, MobilityLabel,
                     admissible_indices, classify_sdof, intersect_spaces,
                     oriented_direction)
from .errors import InapplicablePrimitive, PlanInfeasible, UnknownComponent
from .model import (AXIAL_KINDS, AssemblyModel, RelationKind,
                    SpatialRelation, Tool)

TOOL_CHANGE_PENALTY = 0.5  # meters of equivalent travel per tool swap


class MPKind(str, Enum):
    MOVE = "move"
    TWIST = "twist"
    PUT = "put"
    PULL = "pull"


# twist and pull carry a process phase and expand through the full grammar;
# move and put decompose to positioning / release subsets only
PROCESS_KINDS = (MPKind.TWIST, MPKind.PULL)


@dataclass(frozen=True)
class ManipulationPrimitive:
    kind: MPKind
    component: str
    tool: Tool

    def to_json(self, direction=None) -> dict:
        return {
            "kind": self.kind.value,
            "component": self.component,
            "tool": self.tool.value,
            "direction": None if direction is None else [float(x) for x in direction],
        }

    def __str__(self):
        return f"{self.kind.value}({self.tool.value}, {self.component})"


@dataclass(frozen=True)
class Plan:
    """Linear primitive sequence plus chosen extraction directions.

    ``assembly`` flags the execution direction; it decides the getObj rule
    during decomposition and the replay semantics of the transitions.
    """

    steps: tuple[ManipulationPrimitive, ...]
    direction_hints: dict[int, np.ndarray] = field(default_factory=dict)
    assembly: bool = False

    def __len__(self):
        return len(self.steps)

    def to_json(self) -> list[dict]:
        return [mp.to_json(self.direction_hints.get(i))
                for i, mp in enumerate(self.steps)]


@dataclass(frozen=True)
class LiveRelation:
    """A relation in the evolving symbolic state.

    ``unscrewed`` marks a screwed joint converted by a twist: the thread no
    longer blocks and the joint admits translation along its axis.
    """

    relation: SpatialRelation
    unscrewed: bool = False

    @property
    def effective_kind(self) -> RelationKind:
        if self.unscrewed and self.relation.kind is RelationKind.SCREWED:
            return RelationKind.CONCENTRIC
        return self.relation.kind


@dataclass(frozen=True)
class SymbolicState:
    sdof: dict[str, MobilityLabel]
    removed: frozenset[str]
    step: int
    live: tuple[LiveRelation, ...]


def _live_contacts(state: SymbolicState, component_id: str) -> list[LiveRelation]:
    out = []
    for lr in state.live:
        if component_id in lr.relation.components:
            if lr.relation.other(component_id) not in state.removed:
                out.append(lr)
    return out


def _component_space(state: SymbolicState, component_id: str,
                     dirs: DirectionSet) -> DirectionSet:
    contacts = _live_contacts(state, component_id)
    sets = [admissible_indices(lr.effective_kind,
                               oriented_direction(lr.relation, component_id), dirs)
            for lr in contacts]
    return intersect_spaces(sets, dirs)


def _component_label(state: SymbolicState, component_id: str,
                     dirs: DirectionSet) -> MobilityLabel:
    contacts = _live_contacts(state, component_id)
    space = _component_space(state, component_id, dirs)
    if len(contacts) == 1 and contacts[0].unscrewed:
        # rule-based update: an unscrewed joint is a pure sliding axis
        axis = oriented_direction(contacts[0].relation, component_id)
        return MobilityLabel(Mobility.LIN, axis=axis)
    rotation_free = any(lr.relation.kind in AXIAL_KINDS and not lr.unscrewed
                        for lr in contacts)
    return classify_sdof(space, [lr.relation for lr in contacts],
                         rotation_free=rotation_free)


def initial_state(model: AssemblyModel, dirs: DirectionSet) -> SymbolicState:
    live = tuple(LiveRelation(r) for r in model.relations)
    state = SymbolicState(sdof={}, removed=frozenset(), step=0, live=live)
    sdof = {c.id: _component_label(state, c.id, dirs) for c in model.components}
    return replace(state, sdof=sdof)


def _refresh_labels(state: SymbolicState, dirs: DirectionSet,
                    affected: set[str]) -> SymbolicState:
    sdof = dict(state.sdof)
    for cid in affected:
        if cid in state.removed:
            sdof.pop(cid, None)
        else:
            sdof[cid] = _component_label(state, cid, dirs)
    return replace(state, sdof=sdof)


NEAR_TIE_MARGIN = 1e-3  # below lattice resolution at the default sample count


def _best_direction(state: SymbolicState, component_id: str,
                    dirs: DirectionSet) -> np.ndarray | None:
    """Extraction direction maximizing the minimum clearance margin.

    Margin per contact: distance of the direction score from the admissibility
    boundary.  Candidates whose margins differ by less than the lattice
    resolution count as tied; ties prefer the direction best aligned with the
    contacts' oriented separation directions, then the lowest sample index.
    """
    space = _component_space(state, component_id, dirs)
    if space.is_empty():
        return None
    idx = np.flatnonzero(space.mask)
    contacts = _live_contacts(state, component_id)
    if not contacts:
        return dirs.directions[idx[0]].copy()
    margins = np.full(idx.size, np.inf)
    cand = dirs.directions[idx]
    outward = np.zeros(3)
    for lr in contacts:
        d = oriented_direction(lr.relation, component_id)
        outward += d
        scores = cand @ d
        kind = lr.effective_kind
        if kind in (RelationKind.PLANE_CONTACT, RelationKind.CONGRUENT):
            margins = np.minimum(margins, scores)
        elif kind is RelationKind.CONCENTRIC:
            margins = np.minimum(margins, np.abs(scores) - np.cos(EPS_CONE))
    near = margins >= margins.max() - NEAR_TIE_MARGIN
    pool = np.flatnonzero(near)
    if np.linalg.norm(outward) > 1e-12:
        align = cand[pool] @ (outward / np.linalg.norm(outward))
        best = pool[int(np.argmax(align))]  # first (lowest) index wins exact ties
    else:
        best = pool[0]
    return cand[best].copy()


def removable(state: SymbolicState, component_id: str,
              dirs: DirectionSet) -> tuple[bool, np.ndarray | None]:
    """Whether the aggregate space toward non-removed neighbors is nonempty."""
    if component_id in state.removed:
        raise InapplicablePrimitive(f"removable({component_id})",
                                    "component already removed")
    direction = _best_direction(state, component_id, dirs)
    return direction is not None, direction


def _has_screwed(state: SymbolicState, component_id: str) -> bool:
    return any(lr.relation.kind is RelationKind.SCREWED and not lr.unscrewed
               for lr in _live_contacts(state, component_id))


def _unscrew(state: SymbolicState, component_id: str) -> SymbolicState:
    live = []
    for lr in state.live:
        if (component_id in lr.relation.components
                and lr.relation.kind is RelationKind.SCREWED and not lr.unscrewed):
            live.append(replace(lr, unscrewed=True))
        else:
            live.append(lr)
    return replace(state, live=tuple(live))


def _drop_component(state: SymbolicState, component_id: str) -> SymbolicState:
    live = tuple(lr for lr in state.live
                 if component_id not in lr.relation.components)
    sdof = {k: v for k, v in state.sdof.items() if k != component_id}
    return replace(state, live=live, removed=state.removed | {component_id},
                   sdof=sdof)


def _restore_component(state: SymbolicState, model: AssemblyModel,
                       component_id: str, tightened: bool) -> SymbolicState:
    """Re-add a component: restore its relations to already-present partners."""
    present = set(state.sdof) | {component_id}
    restored = list(state.live)
    for r in model.relations:
        if component_id in r.components and r.other(component_id) in present:
            unscrewed = r.kind is RelationKind.SCREWED and not tightened
            restored.append(LiveRelation(r, unscrewed=unscrewed))
    return replace(state, live=tuple(restored),
                   removed=state.removed - {component_id})


def _neighbors(model: AssemblyModel, component_id: str) -> set[str]:
    out = set()
    for r in model.relations:
        if component_id in r.components:
            out.add(r.other(component_id))
    return out


def transition(state: SymbolicState, mp: ManipulationPrimitive,
               model: AssemblyModel, dirs: DirectionSet,
               assembly: bool = False) -> SymbolicState:
    """Apply one primitive to the symbolic state.

    Rule-based updates cover the common cases (twist converts the screwed
    joint, removal deletes the component's relations); anything else falls
    back to recomputing the affected spaces from the sampled sphere.
    """
    c = mp.component
    if not model.has_component(c):
        raise UnknownComponent(c)
    affected = _neighbors(model, c) | {c}

    if assembly:
        return _transition_assembly(state, mp, model, dirs, affected)

    if mp.kind is MPKind.TWIST:
        if c in state.removed:
            raise InapplicablePrimitive(str(mp), "component already removed")
        if not _has_screwed(state, c):
            raise InapplicablePrimitive(str(mp), "no live screwed relation")
        state = _unscrew(state, c)
        # the twist primitive's executable form extracts and stores the part;
        # symbolically that completes when the unscrewed space is nonempty
        if not _component_space(state, c, dirs).is_empty():
            state = _drop_component(state, c)
        state = replace(state, step=state.step + 1)
        return _refresh_labels(state, dirs, affected)

    if mp.kind in (MPKind.MOVE, MPKind.PULL):
        if c in state.removed:
            raise InapplicablePrimitive(str(mp), "component already removed")
        ok, _ = removable(state, c, dirs)
        if not ok:
            raise InapplicablePrimitive(str(mp), "extraction space is empty")
        state = _drop_component(state, c)
        state = replace(state, step=state.step + 1)
        return _refresh_labels(state, dirs, affected)

    if mp.kind is MPKind.PUT:
        if c not in state.removed:
            raise InapplicablePrimitive(str(mp), "component not in hand")
        return replace(state, step=state.step + 1)

    raise InapplicablePrimitive(str(mp), "unknown primitive kind")


def _transition_assembly(state, mp, model, dirs, affected):
    c = mp.component
    if mp.kind is MPKind.MOVE or mp.kind is MPKind.PUT:
        return replace(state, step=state.step + 1)
    if mp.kind is MPKind.PULL:
        if c not in state.removed:
            raise InapplicablePrimitive(str(mp), "component already installed")
        state = _restore_component(state, model, c, tightened=False)
        state = replace(state, step=state.step + 1)
        return _refresh_labels(state, dirs, affected)
    if mp.kind is MPKind.TWIST:
        if c in state.removed:
            state = _restore_component(state, model, c, tightened=True)
        else:
            live = tuple(replace(lr, unscrewed=False)
                         if c in lr.relation.components else lr
                         for lr in state.live)
            state = replace(state, live=live)
        state = replace(state, step=state.step + 1)
        return _refresh_labels(state, dirs, affected)
    raise InapplicablePrimitive(str(mp), "unknown primitive kind")


# ------------------------------------------------------------- planning

def _engage_position(model: AssemblyModel, component_id: str) -> np.ndarray:
    return model.component(component_id).grasp_pose().position


def _rest_position(model: AssemblyModel, component_id: str) -> np.ndarray:
    comp = model.component(component_id)
    if comp.put_pose is not None:
        return comp.put_pose.position
    return comp.grasp_pose().position


@dataclass
class _Candidate:
    component: str
    twist: bool
    direction: np.ndarray
    cost: float
    order: int


def _candidate_for(state: SymbolicState, model: AssemblyModel,
                   dirs: DirectionSet, cid: str, robot_pos: np.ndarray,
                   held: Tool, order: int) -> _Candidate | None:
    if _has_screwed(state, cid):
        after = _unscrew(state, cid)
        direction = _best_direction(after, cid, dirs)
        if direction is None:
            return None
        twist = True
    else:
        direction = _best_direction(state, cid, dirs)
        if direction is None:
            return None
        twist = False
    tool = model.tool_for(cid)
    cost = float(np.linalg.norm(robot_pos - _engage_position(model, cid)))
    if tool != held:
        cost += TOOL_CHANGE_PENALTY
    return _Candidate(cid, twist, direction, cost, order)


def _target_cone(model: AssemblyModel, target: str) -> set[str]:
    """Components reachable from the target without passing through the base."""
    base = model.base_id
    seen = {target}
    frontier = [target]
    while frontier:
        cur = frontier.pop()
        if cur == base:
            continue
        for nb in _neighbors(model, cur):
            if nb != base and nb not in seen:
                seen.add(nb)
                frontier.append(nb)
    seen.discard(base)
    return seen


def plan_disassembly(model: AssemblyModel, dirs: DirectionSet) -> Plan:
    """Greedy nearest-neighbor disassembly plan.

    Without a target every non-base component is removed; with a target the
    search is restricted to components that can influence it and stops as soon
    as the target is out.  Ordering is nearest-neighbor over workspace
    positions with a fixed tool-change penalty; tie-breaks follow file order.
    """
    state = initial_state(model, dirs)
    base = model.base_id
    target = model.target
    if target is not None and not model.has_component(target):
        raise UnknownComponent(target)
    if target == base:
        return Plan(steps=())

    cone = _target_cone(model, target) if target else None
    order_index = {c.id: i for i, c in enumerate(model.components)}
    robot_pos = model.robot_start.position.copy()
    held = Tool.NONE

    steps: list[ManipulationPrimitive] = []
    hints: dict[int, np.ndarray] = {}

    while True:
        if target is not None:
            if target in state.removed:
                break
        else:
            if all(c.id in state.removed or c.id == base
                   for c in model.components):
                break

        pool = [c.id for c in model.components
                if c.id != base and c.id not in state.removed
                and (cone is None or c.id in cone)]
        candidates = [cand for cid in pool
                      if (cand := _candidate_for(state, model, dirs, cid,
                                                 robot_pos, held,
                                                 order_index[cid])) is not None]
        if not candidates:
            remaining = [cid for cid in pool]
            blocking = [lr.relation for lr in state.live
                        if any(cid in lr.relation.components for cid in remaining)]
            what = f"target '{target}'" if target else "full disassembly"
            raise PlanInfeasible(f"{what} cannot be completed", blocking)

        if target is not None:
            tiers = [
                [c for c in candidates if c.component == target],
                [c for c in candidates
                 if c.component in _neighbors(model, target)],
                candidates,
            ]
            for tier in tiers:
                if tier:
                    candidates = tier
                    break
        chosen = min(candidates, key=lambda c: (c.cost, c.order))

        cid = chosen.component
        tool = model.tool_for(cid)
        if chosen.twist:
            mp = ManipulationPrimitive(MPKind.TWIST, cid, tool)
            hints[len(steps)] = chosen.direction
            steps.append(mp)
            state = transition(state, mp, model, dirs)
        else:
            mp = ManipulationPrimitive(MPKind.PULL, cid, tool)
            hints[len(steps)] = chosen.direction
            steps.append(mp)
            state = transition(state, mp, model, dirs)
            put = ManipulationPrimitive(MPKind.PUT, cid, tool)
            steps.append(put)
            state = transition(state, put, model, dirs)
        robot_pos = _rest_position(model, cid)
        held = tool

    return Plan(steps=tuple(steps), direction_hints=hints, assembly=False)


_INVERSE_KIND = {
    MPKind.MOVE: MPKind.PUT,
    MPKind.PUT: MPKind.MOVE,
    MPKind.TWIST: MPKind.TWIST,
    MPKind.PULL: MPKind.PULL,
}


def invert_plan(plan: Plan) -> Plan:
    """Reverse the step order, exchange move/put roles and flip directions."""
    n = len(plan.steps)
    steps = tuple(
        ManipulationPrimitive(_INVERSE_KIND[mp.kind], mp.component, mp.tool)
        for mp in reversed(plan.steps))
    hints = {n - 1 - i: -d for i, d in plan.direction_hints.items()}
    return Plan(steps=steps, direction_hints=hints, assembly=not plan.assembly)


def plan_task(model: AssemblyModel, dirs: DirectionSet) -> list[Plan]:
    """Disassembly plan, plus the inverse assembly plan for exchange tasks."""
    disassembly = plan_disassembly(model, dirs)
    plans = [disassembly]
    if model.reassemble:
        plans.append(invert_plan(disassembly))
    return plans


def replay(model: AssemblyModel, dirs: DirectionSet, plan: Plan) -> SymbolicState:
    """Run a plan through the transition function; raises on invalid steps."""
    state = initial_state(model, dirs)
    for mp in plan.steps:
        state = transition(state, mp, model, dirs, assembly=plan.assembly)
    return state
