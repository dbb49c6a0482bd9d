"""Exit-selection rules for the two-exit detector and trace-level statistics.

A score in the open ambiguity band (gamma1, gamma2) means the shallow head is
not trusted and escalation to the deep head is requested; whether it actually
happens depends on the energy check at that moment. Ties at 0.5 resolve to
"person" everywhere.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, List, Optional, Sequence

from .energy import EnergyBudget
from .errors import DomainError

PERSON = 1
NO_PERSON = 0


class Region(Enum):
    PERSON = "person"
    NO_PERSON = "no_person"
    AMBIGUOUS = "ambiguous"


class ExitTaken(Enum):
    EX1 = "ex1"
    EX2 = "ex2"
    EX1_FALLBACK = "ex1_fallback"
    NONE = "none"


@dataclass(frozen=True)
class InferenceInstance:
    """One input's scores at both exits plus its ground-truth label."""

    id: int
    o1: float
    o2: float
    label: int

    def __post_init__(self) -> None:
        if not 0.0 <= self.o1 <= 1.0:
            raise DomainError(f"instance {self.id}: o1={self.o1} outside [0, 1]")
        if not 0.0 <= self.o2 <= 1.0:
            raise DomainError(f"instance {self.id}: o2={self.o2} outside [0, 1]")
        if self.label not in (0, 1):
            raise DomainError(f"instance {self.id}: label must be 0 or 1")


@dataclass(frozen=True)
class Thresholds:
    """Ambiguity band (gamma1, gamma2) around the balanced threshold 0.5."""

    gamma1: float
    gamma2: float

    def __post_init__(self) -> None:
        if not 0.0 <= self.gamma1 <= 0.5 <= self.gamma2 <= 1.0:
            raise DomainError(
                f"need 0 <= gamma1 <= 0.5 <= gamma2 <= 1, got ({self.gamma1}, {self.gamma2})"
            )


@dataclass(frozen=True)
class ExitDecision:
    exit_taken: ExitTaken
    prediction: Optional[int]
    escalation_requested: bool = False
    energy_denied: bool = False
    fault: bool = False

    def __post_init__(self) -> None:
        if (self.exit_taken is ExitTaken.NONE) != (self.prediction is None):
            raise DomainError("prediction must be absent exactly when no exit was taken")


def evaluate_ex1(o1: float, th: Thresholds) -> Region:
    """Shallow-head verdict: decide outside the open band, escalate inside."""
    if o1 >= th.gamma2:
        return Region.PERSON
    if o1 <= th.gamma1:
        return Region.NO_PERSON
    return Region.AMBIGUOUS

def fallback_label(o1: float) -> int:
    """Balanced-threshold call on the shallow score when escalation is denied."""
    return PERSON if o1 >= 0.5 else NO_PERSON

def evaluate_ex2(o2: float) -> int:
    """Balanced-threshold call on the deep score."""
    return PERSON if o2 >= 0.5 else NO_PERSON


def policy_i_select(available: float, e1: float, e2: float) -> ExitTaken:
    """Deepest exit whose energy demand fits the available budget."""
    if e1 > e2:
        raise DomainError("e1 must not exceed e2")
    if available >= e2:
        return ExitTaken.EX2
    if available >= e1:
        return ExitTaken.EX1
    return ExitTaken.NONE


def decide_proposed(
    inst: InferenceInstance,
    th: Thresholds,
    budget: EnergyBudget,
    energy_oracle: Callable[[], float],
) -> ExitDecision:
    """Confidence-gated decision with up-front and escalation energy checks.

    ``energy_oracle`` is called once for admission and, only when the shallow
    score is ambiguous, a second time just before escalation. Escalation is
    denied (falling back to the balanced shallow call) when the second reading
    is short of the escalation requirement plus guard margin.
    """
    try:
        available = float(energy_oracle())
    except Exception:
        return ExitDecision(ExitTaken.NONE, None, fault=True)
    if available < budget.e_req_ex1 + budget.guard_delta:
        return ExitDecision(ExitTaken.NONE, None, energy_denied=True)
    region = evaluate_ex1(inst.o1, th)
    if region is Region.PERSON:
        return ExitDecision(ExitTaken.EX1, PERSON)
    if region is Region.NO_PERSON:
        return ExitDecision(ExitTaken.EX1, NO_PERSON)
    try:
        available = float(energy_oracle())
    except Exception:
        return ExitDecision(ExitTaken.NONE, None, escalation_requested=True, fault=True)
    if available >= budget.e_req_escalate + budget.guard_delta:
        return ExitDecision(ExitTaken.EX2, evaluate_ex2(inst.o2), escalation_requested=True)
    return ExitDecision(
        ExitTaken.EX1_FALLBACK,
        fallback_label(inst.o1),
        escalation_requested=True,
        energy_denied=True,
    )


def decide_policy_ii(inst: InferenceInstance, th: Thresholds) -> ExitDecision:
    """Confidence-only variant: the escalation check is forced feasible."""
    zero = EnergyBudget(0.0, 0.0, 0.0, 0.0, 0.0)
    return decide_proposed(inst, th, zero, lambda: float("inf"))


@dataclass(frozen=True)
class SweepCell:
    """Exit counts and accuracies of one threshold pair over a trace.

    Accuracy fields are None when no instance landed in that exit.
    """

    gamma1: float
    gamma2: float
    acc_ex1: Optional[float]
    acc_ex2: Optional[float]
    acc_total: float
    n_ex1: int
    n_ex2: int


def sweep_thresholds(
    trace: Sequence[InferenceInstance], grid: Iterable[Thresholds]
) -> List[SweepCell]:
    """Evaluate every threshold pair over the trace with unlimited energy."""
    if not trace:
        raise DomainError("trace must be non-empty")
    cells = []
    for th in grid:
        n_ex1 = n_ex2 = ok_ex1 = ok_ex2 = 0
        for inst in trace:
            region = evaluate_ex1(inst.o1, th)
            if region is Region.AMBIGUOUS:
                n_ex2 += 1
                ok_ex2 += evaluate_ex2(inst.o2) == inst.label
            else:
                n_ex1 += 1
                pred = PERSON if region is Region.PERSON else NO_PERSON
                ok_ex1 += pred == inst.label
        cells.append(
            SweepCell(
                th.gamma1,
                th.gamma2,
                ok_ex1 / n_ex1 if n_ex1 else None,
                ok_ex2 / n_ex2 if n_ex2 else None,
                (ok_ex1 + ok_ex2) / len(trace),
                n_ex1,
                n_ex2,
            )
        )
    return cells


SWEEP_HEADER = ["gamma1", "gamma2", "acc_ex1", "acc_ex2", "acc_total", "n_ex1", "n_ex2"]


def write_sweep_csv(cells: Sequence[SweepCell], path, config_hash: Optional[str] = None) -> None:
    """Write sweep cells as CSV; empty-exit accuracies become empty fields."""
    with open(path, "w", newline="") as fh:
        if config_hash:
            fh.write(f"# config_sha256={config_hash}\n")
        writer = csv.writer(fh)
        writer.writerow(SWEEP_HEADER)
        for c in cells:
            writer.writerow(
                [
                    repr(c.gamma1),
                    repr(c.gamma2),
                    "" if c.acc_ex1 is None else repr(c.acc_ex1),
                    "" if c.acc_ex2 is None else repr(c.acc_ex2),
                    repr(c.acc_total),
                    c.n_ex1,
                    c.n_ex2,
                ]
            )
