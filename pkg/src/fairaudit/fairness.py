"""Disparate mistreatment, disparate impact (p%-rule) and disparity annotations.

Undefined quantities (zero denominators, empty groups) are ``None``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Hashable, Mapping, Sequence

import numpy as np

from fairaudit.embedding_store import AnnotatedCohort
from fairaudit.errors import InputError
from fairaudit.protocol import BOTH, SubgroupSelector, VerificationPair, pair_mask
from fairaudit.verification import ConfusionCounts, ScoredPairs, best_threshold, confusion, roc, threshold_at_fpr

STANDARD = "standard"
AS_WRITTEN = "as_written"
CONVENTIONS = (STANDARD, AS_WRITTEN)

RELATIVE = "relative"
ABSOLUTE = "absolute"


@dataclass(frozen=True)
class GroupOutcomes:
    inside: ConfusionCounts
    outside: ConfusionCounts


@dataclass(frozen=True)
class Mistreatment:
    dfpr: float | None
    dfnr: float | None
    d_m: float | None


@dataclass(frozen=True)
class FairnessRecord:
    selector: SubgroupSelector
    dfpr: float | None
    dfnr: float | None
    d_m: float | None
    p_rule: float | None
    convention: str
    threshold_used: float
    n_inside: int
    n_outside: int


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


def _diff(a, b):
    return None if a is None or b is None else a - b


def error_rates(c: ConfusionCounts, convention: str = STANDARD) -> tuple[float | None, float | None]:
    """(false-positive rate, false-negative rate) under the chosen conditioning.

    ``standard`` conditions on the true label: fp/(fp+tn), fn/(fn+tp).
    ``as_written`` conditions on the prediction: P(y=0 | yhat=1) = fp/(tp+fp)
    and P(y=1 | yhat=0) = fn/(fn+tn).
    """
    if convention == STANDARD:
        return _ratio(c.fp, c.fp + c.tn), _ratio(c.fn, c.fn + c.tp)
    if convention == AS_WRITTEN:
        return _ratio(c.fp, c.tp + c.fp), _ratio(c.fn, c.fn + c.tn)
    raise InputError(f"unknown convention {convention!r}")


def disparate_mistreatment(outcomes: GroupOutcomes, convention: str = STANDARD) -> Mistreatment:
    fpr_in, fnr_in = error_rates(outcomes.inside, convention)
    fpr_out, fnr_out = error_rates(outcomes.outside, convention)
    dfpr = _diff(fpr_in, fpr_out)
    dfnr = _diff(fnr_in, fnr_out)
    d_m = None if dfpr is None or dfnr is None else abs(dfpr) + abs(dfnr)
    return Mistreatment(dfpr, dfnr, d_m)


def positive_rate(c: ConfusionCounts) -> float | None:
    return _ratio(c.tp + c.fp, c.total)


def p_rule(outcomes: GroupOutcomes) -> float | None:
    """min(r1/r0, r0/r1) over positive-prediction rates.

    Both rates zero gives 1.0; exactly one zero gives 0.0; an empty side
    gives ``None``.
    """
    r1 = positive_rate(outcomes.inside)
    r0 = positive_rate(outcomes.outside)
    if r1 is None or r0 is None:
        return None
    if r1 == 0 and r0 == 0:
        return 1.0
    if r1 == 0 or r0 == 0:
        return 0.0
    return min(r1 / r0, r0 / r1)


@dataclass(frozen=True)
class Disparity:
    value: object
    disparity: object
    baseline: Hashable
    is_baseline: bool
    mode: str


def relative_disparity(values: Mapping[Hashable, object],
                       scope: Mapping[Hashable, Hashable] | Callable[[Hashable], Hashable] | None = None,
                       mode: str = RELATIVE, strict: bool = True) -> dict[Hashable, Disparity | None]:
    """Signed gap of each value to the best (largest) value in its scope.

    relative: (v - best) / best; absolute: v - best.  Works on floats and
    ``Decimal`` alike.  ``None`` values stay ``None`` and never serve as
    baseline.  On ties the first key in iteration order is the baseline.
    A zero best value in relative mode raises, or with ``strict=False``
    leaves that scope undefined.
    """
    if mode not in (RELATIVE, ABSOLUTE):
        raise InputError(f"unknown disparity mode {mode!r}")
    if scope is None:
        scope_of = lambda key: None  # noqa: E731
    elif callable(scope):
        scope_of = scope
    else:
        scope_of = scope.__getitem__
    groups: dict[Hashable, list[Hashable]] = {}
    for key in values:
        groups.setdefault(scope_of(key), []).append(key)
    out: dict[Hashable, Disparity | None] = {}
    for members in groups.values():
        defined = [k for k in members if values[k] is not None]
        best_key = None
        for k in defined:
            if best_key is None or values[k] > values[best_key]:
                best_key = k
        if best_key is not None and mode == RELATIVE and values[best_key] == 0:
            if strict:
                raise InputError(f"best value in scope is 0 for {best_key!r}; relative disparity undefined")
            best_key = None
        for k in members:
            v = values[k]
            if v is None or best_key is None:
                out[k] = None
                continue
            best = values[best_key]
            if k == best_key:
                gap = v - v
            else:
                gap = v - best if mode == ABSOLUTE else (v - best) / best
            out[k] = Disparity(v, gap, best_key, k == best_key, mode)
    return out


def reference_gap(value, reference_values: Sequence) -> object:
    """Absolute gap of ``value`` above the maximum of a reference set."""
    refs = [v for v in reference_values if v is not None]
    if not refs:
        raise InputError("reference set is empty")
    return value - max(refs)


@dataclass(frozen=True)
class ThresholdPolicy:
    """How the single global decision threshold is chosen.

    kind: ``fpr`` (largest empirical FPR <= value on the full pair set),
    ``max_accuracy`` or ``fixed`` (value used as-is).
    """

    kind: str = "fpr"
    value: float = 0.01

    def __post_init__(self):
        if self.kind not in ("fpr", "max_accuracy", "fixed"):
            raise InputError(f"unknown threshold policy {self.kind!r}")

    def resolve(self, sp: ScoredPairs) -> float:
        if self.kind == "fixed":
            return float(self.value)
        if self.kind == "max_accuracy":
            return best_threshold(sp.scores, sp.genuine)[0]
        return threshold_at_fpr(roc(sp), self.value)

    def describe(self) -> str:
        if self.kind == "fpr":
            return f"global threshold at FPR<={self.value:g} on all pairs"
        if self.kind == "max_accuracy":
            return "global max-accuracy threshold on all pairs"
        return f"fixed threshold {self.value!r}"


def group_outcomes(sp: ScoredPairs, inside: np.ndarray, threshold: float) -> GroupOutcomes:
    return GroupOutcomes(confusion(sp.scores[inside], sp.genuine[inside], threshold),
                         confusion(sp.scores[~inside], sp.genuine[~inside], threshold))


def fairness_sweep(sp: ScoredPairs, pairs: Sequence[VerificationPair], cohort: AnnotatedCohort,
                   selectors: Sequence[SubgroupSelector], threshold_policy: ThresholdPolicy | None = None,
                   convention: str = STANDARD) -> list[FairnessRecord]:
    """One fairness record per selector, all at one global threshold.

    Pairs are split with the ``both`` policy: inside pairs have both samples
    in the subgroup, everything else is outside.
    """
    if len(sp) != len(pairs):
        raise InputError("scores and pairs are not aligned")
    if convention not in CONVENTIONS:
        raise InputError(f"unknown convention {convention!r}")
    policy = threshold_policy or ThresholdPolicy()
    threshold = policy.resolve(sp)
    records = []
    for sel in selectors:
        inside = pair_mask(pairs, cohort, sel.with_policy(BOTH)) if len(pairs) else np.zeros(0, dtype=bool)
        n_in = int(inside.sum())
        if n_in == 0:
            records.append(FairnessRecord(sel, None, None, None, None, convention, threshold, 0, len(pairs)))
            continue
        out = group_outcomes(sp, inside, threshold)
        mt = disparate_mistreatment(out, convention)
        records.append(FairnessRecord(sel, mt.dfpr, mt.dfnr, mt.d_m, p_rule(out), convention, threshold,
                                      n_in, len(pairs) - n_in))
    return records
