"""Observability and injectivity checks for the example plant."""
import numpy as np

from pebo import example_closed_form, example_model, make_design
from pebo.analysis import gramian_W_phi, injectivity_sweep, rank_sweep
from pebo.example import DEFAULT_BOX

model = example_model()
design = make_design(2, 1, [-1.0, -2.0, -3.0])
ev = example_closed_form()

sweep = rank_sweep(model, [0.0, 0.5], 0, np.linspace(-2, 2, 101), 0.5)
print("rank loss flagged at x1 =", sweep.report.states[sweep.flagged, 0])
print("determinant roots:", sweep.roots)

for x in ([0.8, -0.5], [0.0, 1.0]):
    g = gramian_W_phi(model, design, x, 1.0, evaluator=ev)
    print(f"Gramian at {x}: {g.verdict}, eigenvalues {g.eigenvalues}")

inj = injectivity_sweep(ev, DEFAULT_BOX, [0.0, 0.05, 0.1, 0.5, 1.0])
for tk, r in zip(inj.t_grid, inj.failure_rate):
    print(f"t = {tk:.2f}  failure rate {r:.3f}")
print("injective from t =", inj.t_star)
