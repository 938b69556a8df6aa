"""Stress metrics for the IEEE 118-bus case at four loadings.

Prints the nine-column summary table for 97%, 105%, the select-bus case
(105% everywhere, plus 16% at bus 40 and 105% at bus 41) and 110%, then
lists the branches with the highest vulnerability rank in the select-bus case.
"""
from gridstress import analyze
from gridstress.scenario import ScenarioConfig, format_table, ieee118_scenarios, run
from gridstress.network import builtin_case

report = run(ScenarioConfig("builtin:case118", ieee118_scenarios()), timestamp=False)
print(format_table(report))

select = ieee118_scenarios()[2].apply(builtin_case("case118"))
rep = analyze(select).report
print("\nmost vulnerable branches, select-bus loading:")
for bid, rank in rep.v_rank.sort_values(ascending=False).head(5).items():
    br = select.branch(bid)
    print(f"  branch {bid:3d} ({br.from_bus}-{br.to_bus}): {rank:6.2f}%, "
          f"{rep.v_degree[bid]} contingency overload(s)")
