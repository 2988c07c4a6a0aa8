"""Parameter conditions of the adaptive schedule, and what breaks them."""

from pdblock import ScheduleParams, verify_conditions

for theta in (0.1, 0.5, 1.0):
    rep = verify_conditions(ScheduleParams("rpdc-adaptive", theta=theta, mu=1.0, L_m=10.0), 1000)
    tight = min(rep.results, key=lambda r: r.worst_margin)
    print(f"theta={theta}: all pass={rep.ok}; tightest {tight.name} (margin {tight.worst_margin:.2e})")

bad = ScheduleParams("rpdc-adaptive", theta=0.5, mu=1.0, L_m=10.0, k0_override=0.0)
print("k0 forced to 0 fails:", ", ".join(verify_conditions(bad, 1000).failures))
