"""Small hand-built instances shared by the test modules."""

from __future__ import annotations

import numpy as np

from greentlp.instance import ChanceConfig, Dimensions, Instance, RobustConfig


def make_instance(I=1, J=1, P=1, L=1, *, c=0.0, q=1.0, h=0.0, w=10.0, b=5.0, k=5.0, cbc=0.0, D=5.0,
                  dev_plus=0.0, dev_minus=0.0, budget=0.0, mean=1.0, var=0.0, threshold=1e6, z=3.0,
                  name="hand") -> Instance:
    """Instance with every array filled from a scalar or an explicit array."""

    def arr(value, shape):
        out = np.asarray(value, dtype=float)
        return np.broadcast_to(out, shape).copy()

    return Instance(
        dims=Dimensions(I, J, P, L),
        c=arr(c, (I, J, P)),
        q=arr(q, (I, J, L, P)),
        h=arr(h, (I, L)),
        w=arr(w, (J, L)),
        b=arr(b, (L, P)),
        k=arr(k, (I, L)),
        cbc=arr(cbc, (P,)),
        D=arr(D, (J, L)),
        robust=RobustConfig(dev_plus=arr(dev_plus, (J, L)), dev_minus=arr(dev_minus, (J, L)),
                            budget=arr(budget, (J, L))),
        chance=ChanceConfig(mean=arr(mean, (P,)), var=arr(var, (P,)), threshold=arr(threshold, (I, J)), z=z),
        name=name,
    )


def fixture_1111() -> Instance:
    """Single origin, destination, truck and product; shipping everything costs 5."""
    return make_instance()


def random_small_instances(count: int, seed: int, max_dims=(2, 3, 2, 2), max_binaries: int = 20):
    """Seeded random instances with at most ``max_binaries`` link plus origin binaries."""
    from greentlp.instance import generate_family

    rng = np.random.default_rng(seed)
    out = []
    while len(out) < count:
        I, J, P, L = (int(rng.integers(1, m + 1)) for m in max_dims)
        if I * J * P + I * L > max_binaries:
            continue
        fam = generate_family(int(rng.integers(0, 2**31)), Dimensions(I, J, P, L), 1, 0.05)
        out.append(fam[0])
    return out
