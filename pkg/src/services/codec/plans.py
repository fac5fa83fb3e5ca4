import logging
import math

from pydantic import ValidationError

from src.exceptions import ConfigError, PlanError
from src.schemas.flows.plan import AugmentationPlan, PlanEntry, ScalePolicy

from .presets import PRESETS

logger = logging.getLogger(__name__)

PlanPolicy = str | dict[str, int] | ScalePolicy


def _entries(class_counts: dict[str, int], targets: dict[str, int]) -> dict[str, PlanEntry]:
    unknown = sorted(set(targets) - set(class_counts))
    if unknown:
        raise PlanError(f"Plan targets name classes absent from the training counts: {unknown}")
    entries = {}
    for name, original in class_counts.items():
        target = targets.get(name, original)
        try:
            entries[name] = PlanEntry(original_count=original, target_count=target)
        except ValidationError as e:
            raise PlanError(f"Invalid plan entry for class '{name}': {e.errors()[0]['msg']}") from e
    return entries


def build_augmentation_plan(class_counts: dict[str, int], policy: PlanPolicy) -> AugmentationPlan:
    """Build the per-class augmentation plan.

    A preset name reproduces its reference targets; when the observed counts differ from the preset
    originals the preset's synthetic count per class is kept. A dict gives explicit targets, a
    ScalePolicy multiplies selected classes by a factor up to a cap.

    :param class_counts: Real training rows per class, in class order
    :param policy: Preset name, explicit targets or ScalePolicy
    :returns: Validated AugmentationPlan
    """
    negative = {name: count for name, count in class_counts.items() if count < 0}
    if negative:
        raise PlanError(f"Class counts must be >= 0, got {negative}")

    if isinstance(policy, str):
        if policy not in PRESETS:
            raise ConfigError(f"Unknown plan preset '{policy}', expected one of {sorted(PRESETS)}")
        targets = {}
        for name, (original, target) in PRESETS[policy].plan.items():
            if name not in class_counts:
                continue
            observed = class_counts[name]
            if observed != original:
                logger.warning(f"{policy}: class {name} has {observed} rows, reference count is {original}; adding {target - original}")
            targets[name] = observed + (target - original)
        return AugmentationPlan(entries=_entries(class_counts, targets), source=policy)

    if isinstance(policy, ScalePolicy):
        targets = {}
        for name in policy.classes:
            if name not in class_counts:
                raise PlanError(f"Scaled policy names class '{name}' absent from the training counts")
            scaled = math.floor(class_counts[name] * policy.factor)
            targets[name] = max(class_counts[name], min(scaled, policy.cap) if policy.cap is not None else scaled)
        return AugmentationPlan(entries=_entries(class_counts, targets), source="scaled")

    return AugmentationPlan(entries=_entries(class_counts, dict(policy)), source="explicit")
