"""Gaussian CRPS: closed form, quadrature cross-check, gradients, CRPSS.

The training loss and all verification scores build on the continuous
ranked probability score of a Gaussian predictive distribution against
a scalar observation. The closed form is cheap and differentiable; a
slow quadrature of the defining integral serves as the reference.
"""

import numpy as np

from cyclone_pp import crps_gaussian, crps_gradient, crpss
from cyclone_pp.scoring import crps_quadrature_oracle

print("closed form vs quadrature:")
for mu, sigma, y in [(0.0, 1.0, 10.0), (120.0, 35.0, 80.0), (200.0, 5.0, 201.0)]:
    closed = crps_gaussian(mu, sigma, y)
    oracle = crps_quadrature_oracle(mu, sigma, y)
    print(f"  mu={mu:6.1f} sigma={sigma:5.1f} y={y:6.1f}  "
          f"closed={closed:.7f}  quad={oracle:.7f}  "
          f"rel err={abs(closed - oracle) / oracle:.2e}")

# gradients drive the network fit; check one against central differences
mu, sigma, y = 50.0, 12.0, 74.0
dmu, dsigma = crps_gradient(mu, sigma, y)
h = 1e-5
fd_mu = (crps_gaussian(mu + h, sigma, y) - crps_gaussian(mu - h, sigma, y)) / (2 * h)
fd_sd = (crps_gaussian(mu, sigma + h, y) - crps_gaussian(mu, sigma - h, y)) / (2 * h)
print(f"\ngradients at (50, 12, 74): d/dmu={dmu:+.6f} (fd {fd_mu:+.6f}), "
      f"d/dsigma={dsigma:+.6f} (fd {fd_sd:+.6f})")

# CRPS is proper: the truth's own parameters score best on average
rng = np.random.default_rng(0)
obs = rng.normal(100.0, 20.0, size=20000)
honest = crps_gaussian(100.0, 20.0, obs).mean()
overconfident = crps_gaussian(100.0, 5.0, obs).mean()
biased = crps_gaussian(130.0, 20.0, obs).mean()
print(f"\nmean CRPS on N(100, 20) draws: honest {honest:.2f}, "
      f"overconfident sigma=5 {overconfident:.2f}, biased mu=130 {biased:.2f}")

# skill scores compare a model against a reference, positive = better
print(f"\nCRPSS of honest vs biased reference: "
      f"{crpss(honest, biased):+.3f}")
