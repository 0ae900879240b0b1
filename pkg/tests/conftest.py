import numpy as np
import pytest
import torch

from rfaction.core import N_JOINTS


def body(centre, rng=None, spread=0.0):
    """A 14-joint skeleton with every joint near ``centre`` and confidence 1."""
    j = np.zeros((N_JOINTS, 4))
    j[:, :3] = np.asarray(centre, float)
    if rng is not None and spread:
        j[:, :3] += rng.normal(0, spread, (N_JOINTS, 3))
    j[:, 3] = 1.0
    return j


@pytest.fixture(autouse=True)
def _torch_seed():
    torch.manual_seed(0)
    yield


def fd_probe(loss_fn, tensor, n_probes=20, eps=1e-6, seed=0):
    """Worst relative error between autograd and central differences at random entries of ``tensor``.

    ``loss_fn()`` must return a double-precision scalar depending on ``tensor``.
    Entries whose gradient is tiny on both sides are compared absolutely.
    """
    rng = np.random.default_rng(seed)
    tensor.grad = None
    loss_fn().backward()
    grad = tensor.grad.detach().clone()
    flat = tensor.data.view(-1)
    worst = 0.0
    for k in rng.choice(flat.numel(), size=min(n_probes, flat.numel()), replace=False):
        old = flat[k].item()
        with torch.no_grad():
            flat[k] = old + eps
            up = loss_fn().item()
            flat[k] = old - eps
            down = loss_fn().item()
            flat[k] = old
        num = (up - down) / (2 * eps)
        ana = grad.view(-1)[k].item()
        scale = max(abs(num), abs(ana))
        err = abs(num - ana) / scale if scale > 1e-7 else abs(num - ana)
        worst = max(worst, err)
    return worst


ACCEPTANCE_LINES = []


def report_criterion(name, passed, detail=""):
    """Record and print one acceptance line; returned so tests can assert on it."""
    line = f"ACCEPTANCE {name}: {'PASS' if passed else 'FAIL'}" + (f" ({detail})" if detail else "")
    ACCEPTANCE_LINES.append(line)
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
