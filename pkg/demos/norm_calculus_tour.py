"""A short walk through the weighted operator classes.

We build the spectrum ``E_n = sqrt(n)``, certify its gap constants, then
draw random operators from a few classes and compare the norm of their
products and commutators with the predicted bounds.  The printed ratios
``measured / bound`` must stay below one.
"""

import numpy as np

from shrinkgap import BlockOperator, ClassParams, build_power_basis, certify_gaps, class_norm
from shrinkgap.operator_classes import (class_weights, commutator_bound_check,
                                        product_bound_check, product_classes,
                                        schur_chain_checks)


def random_operator(rng, basis, params):
    # entries saturate the class weight up to a random phase and modulus
    w = class_weights(basis, params)
    u = rng.uniform(0, 1, w.shape) * np.exp(2j * np.pi * rng.uniform(size=w.shape))
    return BlockOperator(basis, u / w)


def main():
    basis = build_power_basis(0.5, 40)
    cert = certify_gaps(basis)
    print(f"gap constants on N={basis.N}: c_H = {cert.c_H:.4f}, C_H = {cert.C_H:.4f}")

    rng = np.random.default_rng(7)
    p, i, g = 4.0, 1, basis.gamma
    for kind in (1, 2, 3):
        pa, pb, pab, _ = product_classes(kind, p, i, g)
        ratios = []
        for _ in range(50):
            A, B = random_operator(rng, basis, pa), random_operator(rng, basis, pb)
            chk = product_bound_check(A, B, kind, p, i)
            ratios.append(chk.measured / chk.bound)
        print(f"product kind {kind}: ({pa.p:g},{pa.delta:g}) x ({pb.p:g},{pb.delta:g}) "
              f"-> ({pab.p:g},{pab.delta:g}), worst ratio {max(ratios):.3f}")

    A = random_operator(rng, basis, ClassParams(p, g))
    comm = commutator_bound_check(A, ClassParams(p, g), cert.C_H)
    print(f"commutator with H: {comm.measured:.4f} <= {comm.bound:.4f}")
    for chk in schur_chain_checks(A, ClassParams(p, g)):
        print(f"{chk.name}: {chk.measured:.4f} <= {chk.bound:.4f}")
    print(f"class norm of A: {class_norm(A, (p, g)):.4f}")


if __name__ == "__main__":
    main()
