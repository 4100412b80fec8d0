"""Simulate the plant, drive the extension with its output and check that
the gap between the extension state and the transformed state stays
constant."""
import numpy as np

from pebo import ExampleScenario
from pebo.example import simulate_scenario

data = simulate_scenario(ExampleScenario())
phi = data.evaluator.phi(data.trajectory.states, data.times)
gap = phi - data.extension.zeta.values
print("offset at start:", gap[0])
print("drift over horizon:", np.max(np.abs(gap - gap[0])))
