"""How close the LODF-ranked first choice comes to the best single switch.

On the 30-branch synthetic mesh, every admissible single line opening is
re-analyzed and compared with what the ranked search picks.
"""
from gridstress import evaluate_switch, preventive_search
from gridstress.metrics import analyze
from gridstress.network import builtin_case

net = builtin_case("mesh30")
pre = analyze(net)
rec = preventive_search(net)
results = {}
for br in net.branches:
    if pre.topology.is_radial(br.id):
        continue
    post = evaluate_switch(net, br.id)
    if post.emergency_violations <= pre.report.emergency_violations:
        results[br.id] = post.max_v_rank
best = min(results, key=results.get)
print(f"base V_rank {pre.report.max_v_rank:.2f}%")
print(f"ranked search opens {rec.action.branch}: {rec.post_report.max_v_rank:.2f}% "
      f"({len(rec.candidates_evaluated)} candidates evaluated)")
print(f"best of {len(results)} admissible switches: {best} at {results[best]:.2f}%")
