"""Central finite-difference check of analytic gradients.

A tensor-valued function is reduced to a scalar by a fixed random projection,
``L = sum(w * f(...))``, so a single backward pass yields the analytic gradient
of every input and weight at once. Each checked element is then perturbed by
``+-step`` in place and ``(L+ - L-) / (2 step)`` is compared against it.

The relative error of a tensor is ``max|analytic - numeric| / scale`` where
``scale`` is the largest of the probed numeric entries and the tensor's full
analytic gradient (floored). Normalizing by the whole tensor keeps a sparse
probe that happens to land on a near-zero entry from reporting the
finite-difference rounding floor as a gradient error.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import torch

REL_FLOOR = 1e-10


@dataclass
class GradCheckReport:
    tolerance: float
    errors: dict = field(default_factory=dict)  # name -> max relative error
    checked: dict = field(default_factory=dict)  # name -> number of elements probed
    nonfinite: list = field(default_factory=list)  # names with non-finite analytic gradients

    @property
    def passed(self):
        return not self.nonfinite and all(e <= self.tolerance for e in self.errors.values())

    @property
    def max_error(self):
        return max(self.errors.values(), default=0.0)

    def worst(self):
        if not self.errors:
            return None, 0.0
        name = max(self.errors, key=self.errors.get)
        return name, self.errors[name]

    def format(self):
        lines = [f"{'tensor':<40} {'elements':>8} {'rel err':>10}"]
        for name, err in self.errors.items():
            flag = "" if err <= self.tolerance else "  FAIL"
            lines.append(f"{name:<40} {self.checked[name]:>8} {err:>10.2e}{flag}")
        for name in self.nonfinite:
            lines.append(f"{name:<40} non-finite analytic gradient  FAIL")
        return "\n".join(lines)


def _probe_indices(numel, max_elements, gen):
    if max_elements is None or numel <= max_elements:
        return torch.arange(numel)
    return torch.randperm(numel, generator=gen)[:max_elements].sort().values


def _global_sample(tensors, total, gen):
    """Spread ``total`` probes uniformly over all elements of all tensors."""
    sizes = torch.tensor([t.numel() for t in tensors.values()])
    picks = torch.randperm(int(sizes.sum()), generator=gen)[:total]
    bounds = torch.cumsum(sizes, 0)
    owner = torch.searchsorted(bounds, picks, right=True)
    starts = bounds - sizes
    out = {}
    for j, name in enumerate(tensors):
        local = picks[owner == j] - starts[j]
        if len(local):
            out[name] = local.sort().values
    return out


def grad_check(fn, tensors: dict, tolerance=1e-5, step=1e-6, max_elements=None, seed=0, total_elements=None):
    """Compare analytic and finite-difference gradients of ``fn``.

    Args:
        fn: callable of no arguments returning a tensor; it must read the
            tensors in ``tensors`` (inputs and/or parameters) when called.
        tensors: name -> float64 leaf tensor. They are perturbed in place and
            restored afterwards.
        tolerance: pass threshold on each tensor's relative error.
        step: finite-difference half-width.
        max_elements: probe at most this many elements per tensor (random subset).
        seed: seeds the projection weights and the element subset.
        total_elements: instead of per-tensor limits, probe this many elements
            drawn uniformly from all tensors together.
    """
    gen = torch.Generator().manual_seed(seed)
    for name, t in tensors.items():
        if t.dtype != torch.float64:
            raise TypeError(f"{name}: gradient checks need float64 tensors, got {t.dtype}")
        t.requires_grad_(True)
        t.grad = None

    out = fn()
    w = torch.randn(out.shape, generator=gen, dtype=out.dtype)

    def objective():
        return float((fn() * w).sum())

    (out * w).sum().backward()
    subset = _global_sample(tensors, total_elements, gen) if total_elements is not None else None
    report = GradCheckReport(tolerance)
    for name, t in tensors.items():
        analytic = t.grad.detach().clone() if t.grad is not None else torch.zeros_like(t)
        t.grad = None
        if not torch.isfinite(analytic).all():
            report.nonfinite.append(name)
            continue
        flat_a = analytic.reshape(-1)
        if subset is not None:
            if name not in subset:
                continue
            idx = subset[name]
        else:
            idx = _probe_indices(t.numel(), max_elements, gen)
        numeric = torch.empty(len(idx), dtype=torch.float64)
        with torch.no_grad():
            flat = t.view(-1)
            for j, i in enumerate(idx.tolist()):
                orig = flat[i].item()
                flat[i] = orig + step
                plus = objective()
                flat[i] = orig - step
                minus = objective()
                flat[i] = orig
                numeric[j] = (plus - minus) / (2 * step)
        diff = (flat_a[idx] - numeric).abs().max().item() if len(idx) else 0.0
        probed = numeric.abs().max().item() if len(idx) else 0.0
        scale = max(probed, flat_a.abs().max().item() if flat_a.numel() else 0.0, REL_FLOOR)
        report.errors[name] = diff / scale
        report.checked[name] = len(idx)
    return report


def module_grad_check(
    module, inputs: dict, tolerance=1e-5, step=1e-6, max_elements=None, seed=0, forward=None, total_elements=None
):
    """Check gradients w.r.t. every parameter of ``module`` and every entry of ``inputs``.

    The module is converted to float64 in place. ``forward`` maps the input dict
    to the output; by default the inputs are passed positionally in dict order.
    """
    module.double()
    inputs = {k: v.detach().double().clone() for k, v in inputs.items()}
    forward = forward or (lambda d: module(*d.values()))
    tensors = {f"input:{k}": v for k, v in inputs.items()}
    tensors.update(dict(module.named_parameters()))
    return grad_check(lambda: forward(inputs), tensors, tolerance, step, max_elements, seed, total_elements)
