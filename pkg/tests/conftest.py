import numpy as np

from rlskf.model import ModelSpec


def random_model(rng, p, q):
    """Random stable, well-conditioned model for equivalence sweeps."""

    def spd(dim, scale=1.0):
        g = rng.standard_normal((dim, dim))
        return scale * (g @ g.T + dim * np.eye(dim))

    return ModelSpec(
        p=p, q=q,
        F=0.9 * np.linalg.qr(rng.standard_normal((p, p)))[0],
        Z=rng.standard_normal((q, p)) + np.eye(q, p),
        Q=spd(p, 0.5), V=spd(q, 0.5),
        a0=rng.standard_normal(p), Q0=spd(p),
    )
