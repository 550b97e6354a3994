"""
Dense float64 tensors with reverse-mode differentiation

Every forward operation records a `Function` node on its output. Calling
`backward()` on a scalar walks the recorded graph in reverse topological
order and accumulates gradients into leaf tensors that require them.
"""

import logging
import threading
from contextlib import contextmanager
from typing import Any, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..errors import ContractError

logger = logging.getLogger(__name__)

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]

_state = threading.local()


def is_grad_enabled() -> bool:
    return getattr(_state, "grad_enabled", True)


@contextmanager
def no_grad() -> Iterator[None]:
    """Disable graph recording on the current thread"""
    previous = is_grad_enabled()
    _state.grad_enabled = False
    try:
        yield
    finally:
        _state.grad_enabled = previous


class Function:
    """
    Base class for differentiable operations.

    Subclasses implement `forward` on raw arrays and `backward`, which maps
    the gradient of the output to one gradient (or None) per parent.
    """

    def __init__(self, *parents: "Tensor"):
        self.parents = parents

    def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
        raise NotImplementedError("Forward pass not implemented for this function")

    def backward(self, grad: np.ndarray) -> Tuple[Optional[np.ndarray], ...]:
        raise NotImplementedError("Backward pass not implemented for this function")

    @classmethod
    def apply(cls, *tensors: "Tensor", **kwargs: Any) -> "Tensor":
        func = cls(*tensors)
        out_data = func.forward(*(t.data for t in tensors), **kwargs)
        requires_grad = is_grad_enabled() and any(t.requires_grad for t in tensors)
        return Tensor(out_data, requires_grad=requires_grad, _ctx=func if requires_grad else None)


class Tensor:
    """Row-major float64 array with an optional gradient slot"""

    def __init__(
        self,
        data: ArrayLike,
        requires_grad: bool = False,
        _ctx: Optional[Function] = None,
    ):
        self.data = np.array(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None
        self._ctx = _ctx

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def is_leaf(self) -> bool:
        return self._ctx is None

    @property
    def T(self) -> "Tensor":
        from . import functional as F
        return F.transpose(self)

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    def detach(self) -> "Tensor":
        return Tensor(self.data, requires_grad=False)

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    # Operators delegate to the functional module

    def __add__(self, other: "Tensor") -> "Tensor":
        from . import functional as F
        return F.add(self, other)

    def __sub__(self, other: "Tensor") -> "Tensor":
        from . import functional as F
        return F.add(self, F.scale(other, -1.0))

    def __mul__(self, other: Union["Tensor", float]) -> "Tensor":
        from . import functional as F
        if isinstance(other, Tensor):
            return F.mul(self, other)
        return F.scale(self, float(other))

    __rmul__ = __mul__

    def __neg__(self) -> "Tensor":
        from . import functional as F
        return F.scale(self, -1.0)

    def __matmul__(self, other: "Tensor") -> "Tensor":
        from . import functional as F
        return F.matmul(self, other)

    def reshape(self, *shape: int) -> "Tensor":
        from . import functional as F
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return F.reshape(self, tuple(shape))

    def sum(self) -> "Tensor":
        from . import functional as F
        return F.sum_all(self)

    def mean(self) -> "Tensor":
        from . import functional as F
        return F.mean_all(self)

    def backward(self) -> None:
        """
        Accumulate d(self)/d(leaf) into every reachable leaf that requires grad.

        Repeated calls without resetting gradients accumulate.
        """
        if self.data.size != 1:
            raise ContractError(f"backward() needs a scalar, got shape {self.shape}")
        if not self.requires_grad:
            return

        order = _topological_order(self)
        grads = {id(self): np.ones_like(self.data)}

        for node in reversed(order):
            grad = grads.pop(id(node), None)
            if grad is None:
                continue
            if node._ctx is None:
                node.grad = grad.copy() if node.grad is None else node.grad + grad
                continue
            parent_grads = node._ctx.backward(grad)
            for parent, parent_grad in zip(node._ctx.parents, parent_grads):
                if parent_grad is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + parent_grad
                else:
                    grads[key] = parent_grad


def _topological_order(root: Tensor) -> List[Tensor]:
    # Iterative DFS; graphs of a full model are deeper than the recursion limit.
    order: List[Tensor] = []
    visited = set()
    stack: List[Tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        if node._ctx is not None:
            for parent in node._ctx.parents:
                if parent.requires_grad and id(parent) not in visited:
                    stack.append((parent, False))
    return order


class Parameter(Tensor):
    """Trainable leaf tensor with a model-unique name"""

    def __init__(self, data: ArrayLike, name: str = ""):
        super().__init__(data, requires_grad=True)
        self.name = name

    def __repr__(self) -> str:
        return f"Parameter(name={self.name!r}, shape={self.shape})"


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
    if isinstance(value, Tensor):
        return value
    return Tensor(value)
