#!/usr/bin/env python3
"""Emit a random order-3 perturbed manifold JSON for the CLI to consume.

Usage: python scripts/make_example_manifold.py out.json [--N 1] [--d-max 10]
       [--terms 2] [--scale 1] [--seed 0]

`--scale` multiplies every coefficient (accepts a rational string like
"1/100"), which is how the small-perturbation families for the float
audits are produced.
"""

import argparse
import random
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from fischer_nf.algebra import BiPolynomial, GaussianRational, MatrixPoly, multi_indices
from fischer_nf.manifold import ManifoldSpec, emit, enforce_reality


def random_block(rng, N, m, n, terms, scale):
    p = BiPolynomial.zero(N)
    zs = list(multi_indices(2 * N, m))
    bs = list(multi_indices(2 * N, n))
    for _ in range(terms):
        c = GaussianRational(rng.randint(-4, 4), rng.randint(-4, 4))
        if not c.is_zero():
            p = p + BiPolynomial.monomial(N, rng.choice(zs), rng.choice(bs), c)
    return p.scale(GaussianRational(scale, 0))


def build(seed, N, d_max, terms, scale):
    rng = random.Random(seed)
    E = MatrixPoly.zeros(2, 2, N)
    for (m, n) in ((2, 1), (3, 0)):
        blk = MatrixPoly(
            [[random_block(rng, N, m, n, terms, scale) for _ in range(2)] for _ in range(2)]
        )
        E = E + blk + blk.conj_transpose()
    return enforce_reality(ManifoldSpec(N=N, d_max=d_max, E=E))


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("out")
    ap.add_argument("--N", type=int, default=1)
    ap.add_argument("--d-max", type=int, default=10)
    ap.add_argument("--terms", type=int, default=2)
    ap.add_argument("--scale", default="1")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    spec = build(args.seed, args.N, args.d_max, args.terms, args.scale)
    emit(spec, args.out)
    print(f"wrote {args.out} (N={args.N}, d_max={args.d_max}, order={spec.order()})")


if __name__ == "__main__":
    main()
