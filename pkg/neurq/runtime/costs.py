"""Cost profiles and the batch cost formula.

This module is the single source of truth for AI operator latency: the
optimizer's estimates and the executor's simulated durations both call
``batch_cost`` / ``train_cost`` with the same profile, so an estimate over
a known batch equals the simulated cost of that batch.
"""

from dataclasses import asdict, dataclass
from typing import Sequence


@dataclass(frozen=True)
class CostProfile:
    """Latency and footprint constants of one model kind.

    All times are simulated milliseconds, sizes simulated MB.
    """

    load_cost: float = 0.0
    batch_setup: float = 0.0
    per_item: float = 0.0
    per_token: float = 0.0
    weight_size: float = 0.0
    train_setup: float = 0.0
    train_per_row: float = 0.0
    padded: bool = False  # per-token charge counts n * max_len (encoder batches)
    token_expansion: float = 1.0  # mean generative output tokens per input token
    expansion_jitter: float = 0.0  # relative spread of the per-item output length
    state_mb_per_token: float = 0.0

    def __post_init__(self) -> None:
        for name, value in asdict(self).items():
            if isinstance(value, bool):
                continue
            if value < 0:
                raise ValueError(f"CostProfile.{name} must be >= 0, got {value}")

    @classmethod
    def from_dict(cls, data: dict) -> "CostProfile":
        return cls(
            load_cost=float(data.get("load_cost_ms", 0.0)),
            batch_setup=float(data.get("batch_setup_ms", 0.0)),
            per_item=float(data.get("per_item_ms", 0.0)),
            per_token=float(data.get("per_token_ms", 0.0)),
            weight_size=float(data.get("weight_size_mb", 0.0)),
            train_setup=float(data.get("train_setup_ms", 0.0)),
            train_per_row=float(data.get("train_per_row_ms", 0.0)),
            padded=bool(data.get("padded", False)),
            token_expansion=float(data.get("token_expansion", 1.0)),
            expansion_jitter=float(data.get("expansion_jitter", 0.0)),
            state_mb_per_token=float(data.get("state_mb_per_token", 0.0)),
        )


def output_tokens(profile: CostProfile, length: int) -> int:
    """Expected generated tokens for an input of ``length`` tokens."""
    return int(round(length * profile.token_expansion))


def token_charge(profile: CostProfile, lengths: Sequence[int]) -> int:
    """Tokens billed by the per-token term for a batch.

    ``lengths`` are the billed lengths of the items: input tokens for
    encoders, generated tokens for generative models.
    """
    if not lengths or profile.per_token == 0.0:
        return 0
    if profile.padded:
        return len(lengths) * max(lengths)
    return sum(lengths)


def padding(lengths: Sequence[int]) -> int:
    """Padding tokens of a batch: sum of (max_len - len_i)."""
    if not lengths:
        return 0
    top = max(lengths)
    return sum(top - n for n in lengths)


def batch_cost(profile: CostProfile, lengths: Sequence[int]) -> float:
    """Latency of one inference batch, excluding weight loading."""
    return (
        profile.batch_setup
        + profile.per_item * len(lengths)
        + profile.per_token * token_charge(profile, lengths)
    )


def infer_cost(profile: CostProfile, lengths: Sequence[int], resident: bool) -> float:
    """Batch latency plus the load term when weights are not resident."""
    return (0.0 if resident else profile.load_cost) + batch_cost(profile, lengths)


def staged_cost(
    profile: CostProfile,
    lengths: Sequence[int],
    relation: CostProfile,
    fusion: CostProfile,
) -> float:
    """Staged pipeline: the selected base model, relation modeling, then fusion."""
    return batch_cost(profile, lengths) + batch_cost(relation, lengths) + batch_cost(fusion, lengths)


def train_cost(profile: CostProfile, rows: int) -> float:
    return profile.train_setup + profile.train_per_row * rows


def state_size(profile: CostProfile, lengths: Sequence[int]) -> float:
    """Activation / KV memory held while a batch runs."""
    if not lengths:
        return 0.0
    return profile.state_mb_per_token * len(lengths) * max(lengths)
