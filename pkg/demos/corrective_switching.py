"""Corrective switching after losing the 8-5 (Olive) transformer.

The outage is applied with dispatch frozen; the post-contingency network is
re-analyzed as a new base, and the search looks for a line opening that lowers
its worst criticality rank (exposure to a further outage).
"""
from gridstress import corrective_search
from gridstress.network import builtin_case

net = builtin_case("case118")
ctg = net.find_branch("8-5")
rec = corrective_search(net, ctg, label="100%")
print(f"contingency {ctg}: status {rec.status}, trigger {rec.triggering_metric}")
for label, r in (("intact", rec.context_report), ("after outage", rec.pre_report), ("after switching", rec.post_report)):
    if r is not None:
        print(f"  {label:16s} C_rank {r.max_c_rank:7.2f}%  C_N {r.c_system:3d}  "
              f"emergency {r.emergency_violations}  contingency {r.contingency_violations}")
if rec.action is not None:
    print(f"open branch {rec.action.branch}")
