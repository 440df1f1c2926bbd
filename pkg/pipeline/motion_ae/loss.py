from typing import Optional

import torch
import torch.nn.functional as F


def kl_divergence(mean: torch.Tensor, logvar: torch.Tensor) -> torch.Tensor:
    """KL(N(mean, exp(logvar)) || N(0, I)), averaged over elements."""
    return 0.5 * torch.mean(mean.pow(2) + logvar.exp() - 1.0 - logvar)


def ae_loss(
    m: torch.Tensor,
    m_hat: torch.Tensor,
    mean: Optional[torch.Tensor] = None,
    logvar: Optional[torch.Tensor] = None,
    kl_weight: float = 1e-4,
) -> torch.Tensor:
    if m.shape != m_hat.shape:
        raise ValueError(f"shape mismatch: {tuple(m.shape)} vs {tuple(m_hat.shape)}")
    loss = F.smooth_l1_loss(m_hat, m, beta=1.0)
    if mean is not None and logvar is not None:
        loss = loss + kl_weight * kl_divergence(mean, logvar)
    return loss
