"""Strong and weak convergence estimates at a small scale.

Strong errors are measured against a Platen 1.5 reference run on the same
Brownian paths at a finer step.  Weak errors of E[X^2] for geometric Brownian
motion use the analytic second moment.  The batch counts here are small, so
the slopes are rough; the configs/ directory holds the full-size settings.
"""

from stochlawson.experiments import ExperimentConfig, strong_error, weak_error

strong = ExperimentConfig(
    problem="oscillator", params={"lam": 1.0}, schemes=("em-dsl", "platen-dsl", "platen15-dsl"),
    h=tuple(2.0**-k for k in range(5, 9)), batches=4, paths=25, seed=1, reference_factor=16,
)
for name, table in strong_error(strong).items():
    print(f"strong {name:14s} order {table.order:.2f} +- {table.order_ci():.2f}")

weak = ExperimentConfig(
    problem="gbm", params={"lam": -1.0, "mu": 0.5}, schemes=("em-dsl", "platen-dsl"),
    h=tuple(2.0**-k for k in range(2, 6)), batches=10, paths=1000, seed=1,
)
for name, table in weak_error(weak).items():
    print(f"weak   {name:14s} order {table.order:.2f} +- {table.order_ci():.2f}")
