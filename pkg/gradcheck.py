# gradcheck.py

from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import torch


@dataclass
class GradientCheck:
    name: str
    index: int
    analytic: float
    numeric: float

    @property
    def relative_error(self) -> float:
        return relative_error(self.analytic, self.numeric)


def relative_error(analytic: float, numeric: float, floor: float = 1e-6) -> float:
    """|a - n| / max(|a|, |n|, floor); the floor keeps round-off on vanishing gradients from dominating."""
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def central_difference(fn: Callable[[], torch.Tensor], tensor: torch.Tensor, index: int, eps: float = 1e-6) -> float:
    """(f(x + eps) - f(x - eps)) / 2eps for one flat entry of `tensor`, restored afterwards."""
    flat = tensor.data.view(-1)
    original = flat[index].item()
    with torch.no_grad():
        flat[index] = original + eps
        plus = float(fn())
        flat[index] = original - eps
        minus = float(fn())
        flat[index] = original
    return (plus - minus) / (2.0 * eps)


def check_parameters(
    fn: Callable[[], torch.Tensor],
    named_params: Sequence[Tuple[str, torch.nn.Parameter]],
    num_checks: int = 20,
    eps: float = 1e-6,
    seed: int = 0,
) -> List[GradientCheck]:
    """
    Compare autograd gradients of the scalar fn() against central differences
    on `num_checks` entries drawn uniformly over all parameter entries.
    fn must be deterministic (run the model in eval mode).
    """
    named_params = [(n, p) for n, p in named_params if p.requires_grad]
    params = [p for _, p in named_params]
    grads = torch.autograd.grad(fn(), params, allow_unused=True)

    sizes = torch.tensor([p.numel() for p in params])
    offsets = torch.cumsum(sizes, 0) - sizes
    g = torch.Generator().manual_seed(seed)
    picks = torch.randint(int(sizes.sum()), (num_checks,), generator=g)

    checks: List[GradientCheck] = []
    for flat in picks.tolist():
        k = int(torch.searchsorted(offsets, torch.tensor(flat), right=True)) - 1
        index = flat - int(offsets[k])
        name, p = named_params[k]
        analytic = 0.0 if grads[k] is None else grads[k].reshape(-1)[index].item()
        numeric = central_difference(fn, p, index, eps)
        checks.append(GradientCheck(name, index, analytic, numeric))
    return checks


def check_input(fn: Callable[[torch.Tensor], torch.Tensor], x: torch.Tensor, num_checks: int = 10, eps: float = 1e-6, seed: int = 0) -> List[GradientCheck]:
    """Same comparison for d fn(x) / dx."""
    x = x.detach().clone().requires_grad_(True)
    (grad,) = torch.autograd.grad(fn(x), x)
    g = torch.Generator().manual_seed(seed)
    checks = []
    for index in torch.randint(x.numel(), (num_checks,), generator=g).tolist():
        numeric = central_difference(lambda: fn(x), x, index, eps)
        checks.append(GradientCheck("input", index, grad.reshape(-1)[index].item(), numeric))
    return checks
