"""Near-extremal measures of a sampled field.

zeta_N puts weight exp(alpha (h_x - m_N)) / log N at depth (m_N - h_x)/sqrt(log N).
Its depth marginal should look like t exp(-t^2/(2g)), slowly.
"""
import numpy as np

from dgff.domain import discretize, unit_square
from dgff.extremes import NormingSpec, c_of_phi, extract_structured, lattice_clqg, m_of, phi_normed_measure, zeta_measure
from dgff.green import G_CONST
from dgff.sampler import RngStream, sample_field
from dgff import verify as V

N = 512
L = discretize(unit_square(), N)
h = sample_field(L, RngStream(42, 0), "spectral")
print(f"N={N}: max h = {h.values.max():.3f}, m_N = {m_of(N):.3f}")

z = zeta_measure(h)
print("zeta_N total mass", z.weights.sum(), " lattice-cLQG mass", lattice_clqg(h).weights.sum())

# mass-weighted depth histogram against the Rayleigh density on [0, 4]
edges = np.linspace(0, 4, 9)
keep = (z.depths >= 0) & (z.depths <= 4)
hist, _ = np.histogram(z.depths[keep], edges, weights=z.weights[keep], density=True)
t = 0.5 * (edges[1:] + edges[:-1])
ray = t * np.exp(-t * t / (2 * G_CONST)) / G_CONST
for a, b, c in zip(t, hist, ray):
    print(f"  t={a:.2f}  empirical {b:.3f}  rayleigh {c:.3f}")

# derivative-martingale vs plain norming; in the limit the ratio is c(id)/c(1) = 1
phi_id, phi_one = NormingSpec("identity"), NormingSpec("one")
print("c(id) =", c_of_phi(phi_id), " c(1) =", c_of_phi(phi_one))
print("mass ratio this field:", phi_normed_measure(h, phi_id).weights.sum() / phi_normed_measure(h, phi_one).weights.sum())

# local maxima with their cluster shapes
atoms = extract_structured(h, r_N=16, window=3)
top = sorted(atoms, key=lambda a: -a.height)[:3]
for a in top:
    print("local max at", a.vertex, f"height - m_N = {a.height:+.3f}", " min neighbour gap", np.nanmin(a.shape[a.shape > 0]))

# one weighted KS statistic, with its null threshold from synthetic Rayleigh depths
z = z.restrict(keep).compress(1e-9)
print(V.rayleigh_gof([z], n_calib=100).to_dict())
