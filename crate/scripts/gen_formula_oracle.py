#!/usr/bin/env python3
"""Regenerate crates/core/tests/fixtures/formula_oracle.csv.

Evaluates the two confidence-bound formulas at 50 significant digits with
mpmath on 100 seeded random inputs each. Inputs are written with repr() so
they round-trip exactly as IEEE doubles; mpf(float) converts them exactly.
"""
import os
import random
import mpmath as mp

mp.mp.dps = 50
rng = random.Random(20240521)
out = os.path.join(os.path.dirname(__file__), "..", "crates", "core", "tests",
                   "fixtures", "formula_oracle.csv")

with open(out, "w") as f:
    f.write("kind,mu,var,count,t,nu,expected\n")
    for _ in range(100):
        mu = rng.uniform(-5.0, 5.0)
        var = rng.choice([0.0, rng.uniform(0.0, 3.0), 10 ** rng.uniform(-8, 2)])
        c = rng.randint(1, 100000)
        t = rng.randint(2, 1000000)
        nu = rng.choice([0.0, 1.0, 4.0, rng.uniform(0.0, 10.0)])
        u = mp.mpf(mu) + mp.sqrt(mp.mpf(nu) ** 2 * mp.mpf(var) * mp.log(t - 1) / c)
        f.write(f"ucb,{mu!r},{var!r},{c},{t},{nu!r},{mp.nstr(u, 30, strip_zeros=False)}\n")
    for _ in range(100):
        mu = rng.uniform(-5.0, 5.0)
        var = rng.choice([0.0, rng.uniform(0.0, 3.0), 10 ** rng.uniform(-8, 2)])
        m = rng.randint(2, 100000)
        t = rng.randint(2, 1000000)
        u = mp.mpf(mu) + mp.sqrt(16 * mp.mpf(var) * mp.log(t - 1) / m)
        f.write(f"ucb1_normal,{mu!r},{var!r},{m},{t},,{mp.nstr(u, 30, strip_zeros=False)}\n")

# Worked example used in the unit tests.
ex = mp.mpf("0.5") + mp.sqrt(mp.mpf("0.04") * mp.log(100) / 50)
print("example:", mp.nstr(ex, 25))
