"""Toy benchmark: fit hand-drawn survival targets with point-wise BCE.

Six subjects with fixed target curves are fitted full batch for a small
number of Adam steps. The run is fully deterministic for a given seed
pair, which makes it usable both as a CLI demo and as a regression
benchmark comparing the model families.
"""

from dataclasses import dataclass

from monosurv.data import toy_dataset
from monosurv.losses import point_target_bce_grads, point_target_bce_loss
from monosurv.models import ModelConfig, build_model
from monosurv.training import AdamState, TrainConfig, adam_step

__all__ = ["TOY_KINDS", "ToyRun", "run_toy_experiment"]

TOY_KINDS = ("sumo", "sumo_plus", "sumo_plusplus")


@dataclass
class ToyRun:
    """One model kind fitted to the toy targets."""

    kind: str
    model: object
    losses: list
    final_loss: float


def run_toy_experiment(
    kinds=TOY_KINDS,
    steps: int = 512,
    seed: int = 0,
    model_config: ModelConfig | None = None,
    data_seed: int = 123,
) -> dict:
    """Train each kind on the toy fixture; returns {kind: ToyRun}.

    losses[k] is the full-batch loss before step k; final_loss is the
    loss after the last update.
    """
    if steps < 0:
        raise ValueError(f"steps must be non-negative, got {steps}")
    X, targets = toy_dataset(seed=data_seed)
    if model_config is None:
        model_config = ModelConfig()
    cfg = TrainConfig(seed=seed)
    runs = {}
    for kind in kinds:
        model = build_model(kind, X.shape[1], model_config, seed=seed)
        state = AdamState.for_model(model)
        losses = []
        for _ in range(steps):
            loss, grads = point_target_bce_grads(model, X, targets)
            losses.append(loss)
            adam_step(model, grads, state, cfg)
        runs[kind] = ToyRun(
            kind=kind,
            model=model,
            losses=losses,
            final_loss=point_target_bce_loss(model, X, targets),
        )
    return runs
