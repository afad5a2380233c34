#!/usr/bin/env python3
"""Bayesian quadrature under Gaussian and Lebesgue measures.

Kernel embeddings of the squared-exponential kernel are available in closed
form against both measure families, so integral estimates come with exact
Gaussian error bars. Bayesian Monte Carlo simply samples its nodes from the
measure.
"""

import numpy as np

from pnkit import problems, quad

# --- a Gaussian-measure integral with a known answer ---------------------------

spec = problems.builtin("gauss_x2")  # integral of x^2 under N(0, 1), exactly 1
problem = spec.to_quad_problem()
kernel = spec.default_kernel()

nodes = np.linspace(-5.0, 5.0, 30)[:, None]
belief = quad.bq_integrate(problem, nodes, problem.evaluate(nodes), kernel)
print("fixed grid, 30 nodes:")
print(f"  estimate {belief.mean[0]:.6f} ± {belief.std[0]:.2e} (truth: 1)")

for n in (5, 10, 20, 40):
    mc, _ = quad.bayesian_monte_carlo(problem, n, kernel, np.random.default_rng(1))
    print(f"  Bayesian Monte Carlo, n = {n:2d}: {mc.mean[0]: .5f} ± {mc.std[0]:.3f}")

# --- Lebesgue box measure -------------------------------------------------------

genz = problems.builtin("genz_oscillatory_1d")
genz_problem = genz.to_quad_problem()
genz_kernel = genz.default_kernel()
exact = genz.reference_values()[0]

grid = np.linspace(0.0, 1.0, 25)[:, None]
estimate = quad.bq_integrate(genz_problem, grid, genz_problem.evaluate(grid), genz_kernel)
print("oscillatory integrand on [0, 1]:")
print(f"  estimate {estimate.mean[0]:.8f} ± {estimate.std[0]:.2e} (truth {exact:.8f})")

# --- kernel embeddings directly -------------------------------------------------

k = quad.SquaredExpKernel([1.0], 1.0)
gauss = quad.GaussianMeasure([0.0], [1.0])
box = quad.LebesgueBoxMeasure([-10.0], [10.0])
print("closed-form embeddings:")
print(f"  Gaussian kernel mean at the center: {quad.kernel_mean(k, gauss, [0.0]):.6f}"
      f" (= 1/sqrt(2) = {1 / np.sqrt(2):.6f})")
print(f"  Gaussian prior integral variance:   {quad.initial_error(k, gauss):.6f}"
      f" (= 1/sqrt(3) = {1 / np.sqrt(3):.6f})")
print(f"  wide-box kernel mean at 0:          {quad.kernel_mean(k, box, [0.0]):.6f}"
      f" (= sqrt(2 pi) = {np.sqrt(2 * np.pi):.6f})")

# --- hyperparameter fitting -----------------------------------------------------

rng = np.random.default_rng(3)
sample_nodes = np.sort(rng.uniform(-2, 2, 45))[:, None]
true_kernel = quad.SquaredExpKernel([0.5], 2.0)
gram = true_kernel.gram(sample_nodes) + 1e-12 * np.eye(45)
values = np.linalg.cholesky(gram) @ rng.standard_normal(45)
fitted = quad.optimize_lengthscale(sample_nodes, values, quad.SquaredExpKernel([1.0], 1.0))
print(f"lengthscale fit on a draw from l = 0.5: {fitted.lengthscales[0]:.3f} "
      f"(output scale {fitted.output_scale:.3f})")
