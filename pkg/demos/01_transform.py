"""Immersion of the example plant: closed form versus quadrature.

The map is evaluated at a few states with both evaluators, the PDE
residual is checked, and the state is recovered from its image.
"""
import numpy as np

from pebo import (DomainBox, QuadratureTransform, example_closed_form, example_model,
                  left_inverse, make_design, pde_residual)
from pebo.flows import IntegratorConfig

model = example_model()
design = make_design(2, 1, [-1.0, -2.0, -3.0])
closed = example_closed_form()
quad = QuadratureTransform(model, design, IntegratorConfig(1e-4))

x = np.array([[0.8, -0.5], [0.3, 0.2], [-1.0, 1.5]])
t = 0.5
print("closed form:\n", closed.phi(x, t))
print("quadrature:\n", quad.phi(x, t))
print("max PDE residual:", np.max(np.abs(pde_residual(model, design, x, t, evaluator=closed))))

box = DomainBox([-2.0, -2.0], [2.0, 2.0])
for xi in x:
    print(xi, "->", left_inverse(closed, closed.phi(xi, t), t, box))
