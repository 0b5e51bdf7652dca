"""Multilingual span-extraction reading comprehension toolkit."""

from .tensor import ComputationTape, ContractError, ShapeError, Tensor, backward

__version__ = "0.1.0"

__all__ = [
    "ComputationTape",
    "ContractError",
    "ShapeError",
    "Tensor",
    "backward",
]
