"""Cost surface over the first two offset components.

One sampling instant leaves many zero-cost basins; pooling a second
instant leaves a single one.
"""
from pebo import ExampleScenario, run_landscape
from pebo.example import simulate_scenario

scenario = ExampleScenario()
data = simulate_scenario(scenario)
for tp in ([0.2], [0.2, 0.4]):
    res = run_landscape(scenario, t_prime=tp, data=data)
    print(f"instants {tp}: {res.n_basins} basin(s)")
