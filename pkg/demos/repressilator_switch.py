# Switching the eight-gene repressilator from its lower to its upper state
# with a single temporal pulse, then replanning under parameter mismatch.
#
# Run: python3 demos/repressilator_switch.py  (about ten seconds)

import numpy as np

import pulseswitch as ps

model = ps.repressilator()
spec = ps.target_spectrum(model, "upper")
x_low = spec.others[0]

print("target x*  :", np.round(spec.x_star, 4))
print("start  x.  :", np.round(x_low, 4))
print("lambda1    : %.6f" % spec.lambda1)

# s1 at the start is an escape marker: left alone, x. stays at x.
print("s1(x.)     :", ps.s1(model, spec, x_low).value)

# The pulse control function r(x, mu, tau) is s1 at the end of the pulse.
# A pulse that is too short falls back (-inf); a long one lands near x*.
for mu, tau in [(3.53, 5.0), (3.53, 15.0), (3.53, 20.0), (5.0, 20.0)]:
    print("r(x., %.2f, %4.1f) = %+.4g" % (mu, tau, ps.r(model, spec, x_low, mu, tau)))

# Minimum-time pulse under an energy budget: the optimum sits where the
# r = -eps level set meets the energy curve mu * tau = E_max.
mus = np.linspace(2, 10, 100)
best = ps.optimize(model, spec, x_low, 1e-2, 100.0, mus, (0.0, 25.0))
print("\noptimal pulse: mu=%.3f tau=%.3f energy=%.1f T_conv=%.2f active=%s" % (
    best.mu_star, best.tau_star, best.mu_star * best.tau_star, best.T_conv,
    sorted(best.active_constraints)))

# Plan with duration fixed at 20, then apply to perturbed plants.
plan = ps.optimize(model, spec, x_low, 1e-2, 100.0, mus, tau_fixed=20.0)
pulse = ps.Pulse(plan.mu_star, 20.0)
cfg = ps.ClosedLoopConfig(t_samp=2.0, E_max=100.0, mu_grid=mus, tau0=20.0, mu0=plan.mu_star)
print("\nnominal plan: mu0=%.4f, energy %.2f" % (pulse.mu, pulse.energy))

for label in "AB":
    true = ps.repressilator_setting(label)
    true_spec = ps.target_spectrum(true, "upper")
    open_ = ps.open_loop_switch(true, pulse, x_low, true_spec, 1e-2, 100.0)
    closed = ps.closed_loop_switch(true, model, x_low, cfg, spec, true_spec, 100.0)
    print("setting %s  open loop: success=%-5s energy=%6.2f peak x1=%.2f" % (
        label, open_.success, open_.energy_spent, open_.peak()))
    print("           closed loop: success=%-5s energy=%6.2f peak x1=%.2f" % (
        closed.success, closed.energy_spent, closed.peak()))
    print("           applied mu:", " ".join("%.2f" % mu for _, _, mu in closed.applied_schedule))
