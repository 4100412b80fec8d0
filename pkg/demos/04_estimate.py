"""Batch and expanding-horizon estimates of the offset, then the
reconstructed state.  Tables go to ./demo_out."""
import numpy as np

from pebo import ExampleScenario, run_batch, run_expanding
from pebo.example import simulate_scenario

scenario = ExampleScenario()
data = simulate_scenario(scenario)
print("true offset:", data.theta)

batch = run_batch(scenario, out="demo_out/batch", data=data)
print("batch estimate:", batch.result.theta_hat, "cost", batch.result.cost)
t = data.times
err = np.abs(batch.x_hat - data.trajectory.states)[t >= 0.15].max()
print("state error after t = 0.15:", err)

exp = run_expanding(scenario, out="demo_out/expanding", data=data)
for tk, th, c in zip(*exp.result.trace_arrays()):
    print(f"t = {tk:.1f}  error = {np.max(np.abs(data.theta - th)):.2e}  cost = {c:.1e}")
