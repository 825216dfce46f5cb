# %% [markdown]
# Deviations and where they get stopped

# %%
from daoagent import AdversaryScenario, RunConfig, execute
from daoagent.orchestrator import withholding_study

base = RunConfig(n=4, seed=0, full_check=True)
for kind in ("A1", "A2", "A3", "A4", "A5"):
    r = execute(base.with_scenario(AdversaryScenario.default(kind, 4))).report
    where = f"phase {r.abort_phase}: {r.abort_reason}" if r.abort_phase else "settled"
    print(f"{kind}  {where}")
    if kind == "A4":
        print("    collusion gain", r.detection["gain"], "bound", round(r.detection["bound"]))
    if kind == "A5":
        print("    share", r.detection["honest_share"], "->", r.detection["deviated_share"])

# %% [markdown]
# Withholding effort over 30 seeded pairs, checked with a one-sided sign test.

# %%
study = withholding_study(RunConfig(n=4), repetitions=30)
print(f"share dropped in {study['wins']}/30 pairs, p = {study['p_value']:.2e}")
