"""Shared container for blocks of complex channel symbols."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T


@dataclass
class ComplexSymbolBlock:
    """B x L x N complex symbols stored as paired real tensors.

    ``re`` and ``im`` stay in the gradient graph so channels remain
    differentiable end to end. ``degenerate`` marks a block that was all
    zeros before power normalization (normalizing would divide by zero).
    """

    re: T.Tensor
    im: T.Tensor
    degenerate: bool = False

    @property
    def shape(self) -> tuple[int, ...]:
        return self.re.shape

    @property
    def symbols_per_word(self) -> int:
        return self.re.shape[-1]

    def power(self) -> float:
        """Mean of re^2 + im^2 over all symbols."""
        return float(np.mean(self.re.data ** 2 + self.im.data ** 2))

    def to_complex(self) -> np.ndarray:
        return self.re.data.astype(np.float64) + 1j * self.im.data.astype(np.float64)

    @classmethod
    def from_complex(cls, symbols: np.ndarray, requires_grad: bool = False) -> "ComplexSymbolBlock":
        return cls(T.Tensor(symbols.real, requires_grad=requires_grad),
                   T.Tensor(symbols.imag, requires_grad=requires_grad))
