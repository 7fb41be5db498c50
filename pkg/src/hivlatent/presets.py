"""Named parameter sets and initial populations."""

from __future__ import annotations

from .model import CoreParams, LatentParams, State3, State4

TABLE1 = LatentParams(
    core=CoreParams(lam=1e4, d_T=0.01, d_I=1.0, d_V=23.0, k=2.4e-8, N=2000.0),
    p=0.1,
    alpha=0.01,
    d_L=4e-3,
)

# slowest activation and fastest latent clearance quoted in the literature survey
FAST_LATENT_CLEARANCE = LatentParams(core=TABLE1.core, p=0.1, alpha=3e-3, d_L=0.24)

INIT_DEFAULT = State4(T=4e5, I=0.0, L=0.0, V=1e5)
INIT_DEFAULT_3 = State3(T=INIT_DEFAULT.T, I=INIT_DEFAULT.I, V=INIT_DEFAULT.V)

PARAM_PRESETS: dict[str, LatentParams] = {
    "table1": TABLE1,
    "fast-latent-clearance": FAST_LATENT_CLEARANCE,
}

INITIAL_PRESETS: dict[str, State4] = {
    "init-default": INIT_DEFAULT,
}


def params_as_dict(lp: LatentParams) -> dict[str, float]:
    c = lp.core
    return {
        "lam": c.lam, "d_T": c.d_T, "d_I": c.d_I, "d_V": c.d_V, "k": c.k, "N": c.N,
        "p": lp.p, "alpha": lp.alpha, "d_L": lp.d_L,
    }
