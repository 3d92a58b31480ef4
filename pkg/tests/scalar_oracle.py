"""Plain-float bound recursion for scalar, delay-free scenarios (no numpy linear algebra)."""

from pathlib import Path

FIXTURE = Path(__file__).parent / "fixtures" / "scalar_hand.yaml"


def scalar_bounds(raw, delta):
    """Return ``Xi_u[l][k]`` as nested lists; ``delta[l][k]`` is the trigger-error bound."""
    m = raw["model"]
    A1, A2 = m["A1"][0][0], m["A2"][0][0]
    B1, B2, Q = m["B1"][0][0], m["B2"][0][0], m["Q"][0][0]
    C, R = m["C"][0][0][0], m["R"][0][0][0]
    mu, cov = m["boundary"]["mean"][0], m["boundary"]["cov"][0][0]
    a1, a2 = raw["filter"]["a_check"]
    b1, b2, b3, b4, b5, b6 = raw["filter"]["b_check"]
    Z, L, rho = raw["codec"]["Z"][0], raw["codec"]["L"][0], raw["codec"]["crossover"][0]
    P = raw["grid"]

    step = 2 * Z / (2 ** L - 1)
    flip = 0.0
    for bit in range(L):
        flip += rho * (1 - rho) * (step * 2 ** bit) ** 2
    g2 = (1 - 2 * rho) ** 2
    c = 1 + b3 + b4
    noise = B1 * Q * B1 + B2 * Q * B2

    def neighbours(mix, split, left, up):
        return (1 + mix) * (1 + 1 / split) * A1 * left * A1 \
            + (1 + 1 / mix) * (1 + 1 / split) * A2 * up * A2 + noise

    X = [[cov + mu * mu] * (P + 1) for _ in range(P + 1)]
    Xi = [[cov] * (P + 1) for _ in range(P + 1)]
    for l in range(1, P + 1):
        for k in range(1, P + 1):
            X[l][k] = neighbours(a1, a2, X[l][k - 1], X[l - 1][k])
            Xp = neighbours(b1, b2, Xi[l][k - 1], Xi[l - 1][k])
            theta = ((1 + 1 / b3 + b5) * 4 * rho * rho * C * X[l][k] * C
                     + g2 * step * step / 4
                     + (1 + 1 / b4 + 1 / b5 + b6) * g2 * delta[l][k]
                     + (1 + 1 / b6) * g2 * R
                     + flip)
            F = theta + c * C * Xp * C
            K = c * Xp * C / F
            Xi[l][k] = c * Xp - K * F * K
    return Xi
