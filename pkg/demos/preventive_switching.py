"""Preventive switching on the stressed select-bus loading.

Runs the LODF-ranked search, prints the audit trail of evaluated candidates
and the before/after metrics of the chosen line opening.
"""
from gridstress import preventive_search
from gridstress.network import builtin_case
from gridstress.scenario import ieee118_scenarios

net = ieee118_scenarios()[2].apply(builtin_case("case118"))
rec = preventive_search(net, label="106% (select buses)")
m = rec.triggering_metric
print(f"status {rec.status}; trigger {m}; worst branch {rec.worst_branch}")
print("candidates (predicted relief in MW, re-analyzed metric):")
for c in rec.candidates_evaluated:
    print(f"  open {c.branch:3d}: relief {c.score:7.2f}  {m} {c.metric_value:7.2f}")
if rec.action is not None:
    pre, post = rec.pre_report.summary(), rec.post_report.summary()
    print(f"\nopen branch {rec.action.branch}:")
    for key in ("max_v_rank", "v_system", "c_system", "emergency_violations", "contingency_violations"):
        print(f"  {key:24s} {pre[key]:>8.2f} -> {post[key]:>8.2f}")
