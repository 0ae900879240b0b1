import torch


def soft_argmax_logits(logits: torch.Tensor, temperature: float = 1.0, ndim: int = 3) -> torch.Tensor:
    """Expected cell coordinate under ``softmax(logits / temperature)``.

    The last ``ndim`` axes form the volume; the result has those axes replaced
    by one axis of length ``ndim`` holding coordinates in axis order.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    vol_shape = logits.shape[-ndim:]
    lead = logits.shape[:-ndim]
    p = torch.softmax(logits.reshape(*lead, -1) / temperature, dim=-1).reshape(logits.shape)
    coords = []
    for axis in range(ndim):
        others = tuple(-ndim + k for k in range(ndim) if k != axis)
        marginal = p.sum(dim=others)
        idx = torch.arange(vol_shape[axis], dtype=p.dtype, device=p.device)
        coords.append((marginal * idx).sum(-1))
    return torch.stack(coords, dim=-1)


def soft_argmax(dist: torch.Tensor, temperature: float = 1.0, ndim: int = 3) -> torch.Tensor:
    """Differentiable argmax of a non-negative heat volume.

    ``dist`` is sharpened as ``dist ** (1 / temperature)`` (a softmax of
    ``log(dist) / temperature``), renormalised, and the expected cell
    coordinate returned. Zero cells get exactly zero weight, so a one-hot
    volume maps to its own cell for any temperature, and the output tends to
    the discrete argmax as the temperature goes to zero.
    """
    if torch.any(dist < 0):
        raise ValueError("heat volume entries must be non-negative")
    flat = dist.reshape(*dist.shape[:-ndim], -1)
    if torch.any(flat.sum(-1) <= 0):
        raise ValueError("all-zero heat volume has no defined argmax")
    pos = dist > 0
    safe = torch.where(pos, dist, torch.ones_like(dist))
    logits = torch.where(pos, torch.log(safe), torch.full_like(dist, float("-inf")))
    return soft_argmax_logits(logits, temperature, ndim)


def soft_argmax_separable(a: torch.Tensor, b: torch.Tensor, temperature: float = 1.0):
    """Soft-argmax of the volume ``L[z, x, y] = a[x, y] + b[x, z]`` without building it.

    ``a`` is ``(..., X, Y)`` and ``b`` is ``(..., X, Z)``. Returns the
    expected ``(z, x, y)`` coordinate ``(..., 3)`` and the largest
    probability of the normalised volume ``(...)``, both identical to
    :func:`soft_argmax_logits` on the full volume but in ``O(X (Y + Z))``.
    """
    if temperature <= 0:
        raise ValueError("temperature must be positive")
    a, b = a / temperature, b / temperature
    la, lb = torch.logsumexp(a, -1), torch.logsumexp(b, -1)
    log_px = torch.log_softmax(la + lb, -1)
    px = log_px.exp()
    ix = torch.arange(a.shape[-2], dtype=a.dtype, device=a.device)
    iy = torch.arange(a.shape[-1], dtype=a.dtype, device=a.device)
    iz = torch.arange(b.shape[-1], dtype=b.dtype, device=b.device)
    ey = (torch.softmax(a, -1) * iy).sum(-1)
    ez = (torch.softmax(b, -1) * iz).sum(-1)
    coords = torch.stack([(px * ez).sum(-1), (px * ix).sum(-1), (px * ey).sum(-1)], -1)
    peak = log_px + a.max(-1).values - la + b.max(-1).values - lb
    return coords, peak.max(-1).values.exp()
