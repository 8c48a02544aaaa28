# Estimating r(x., mu, tau) from short trajectories with DMD.
# Each pulse tag contributes one series of four samples of g = w1.(x - x*)
# taken every T_s after the pulse; one joint DMD over all series gives the
# dominant eigenfunction at every pulse end point at once.
#
# Run: python3 demos/dmd_pulse_function.py

import numpy as np

import pulseswitch as ps

model = ps.repressilator()
spec = ps.target_spectrum(model, "upper")
x_low = spec.others[0]

mus, taus = np.linspace(24, 50, 5), np.linspace(5, 25, 5)
tags = [(mu, tau) for mu in mus for tau in taus]
data_r = ps.r_from_data(model, x_low, tags, 12.5, [1, 2, 3, 4], spec=spec)

print("  mu    tau      r (DMD)       r (Laplace)   rel. diff")
for mu, tau, rd in data_r:
    rl = ps.r(model, spec, x_low, mu, tau)
    print("%5.1f %5.1f  %+.6e  %+.6e  %.1e" % (mu, tau, rd, rl, abs(rd / rl - 1)))

# The same machinery on plain data: DMD of x1 from the linear test system.
seeds = [[1.0, 0.5], [-0.3, 2.0]]
lin = ps.linear_test()
series = np.array([[ps.flow_at(lin, s, None, k)[0] for k in range(1, 6)] for s in seeds])
res = ps.dmd(ps.SnapshotSet(series, 1.0))
print("\nlinear test: nu =", res.nu, " lambda =", res.lam)
