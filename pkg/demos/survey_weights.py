"""Per-school weights from a small survey, including race reweighting.

    python3 demos/survey_weights.py
"""
from rezone.weights import SURVEY_OBJECTIVES, SurveyResponse, derive_weights


def ranks(first):
    order = [first] + [o for o in SURVEY_OBJECTIVES if o != first]
    return {o: order.index(o) + 1 for o in SURVEY_OBJECTIVES}


# school 1 is half White, half Black, but three of its four respondents are White
demographics = {1: {"White": 0.5, "Black": 0.5}, 2: {"White": 0.2, "Black": 0.8},
                3: {"White": 0.6, "Black": 0.4}, 4: {"White": 0.9, "Black": 0.1},
                5: {"White": 0.5, "Black": 0.5}}
responses = [
    SurveyResponse("r1", "White", (1,), ranks("distance")),
    SurveyResponse("r2", "White", (1,), ranks("distance")),
    SurveyResponse("r3", "White", (1,), ranks("balance")),
    SurveyResponse("r4", "Black", (1,), ranks("feeder")),
    # four affiliations: each counts 3/4
    SurveyResponse("r5", "unspecified", (1, 2, 3, 4), ranks("balance")),
]
first4 = derive_weights(responses[:4], {1: demographics[1]})
print("school 1 from its own four respondents:",
      ", ".join(f"{o} {first4.exact[(1, o)]}" for o in SURVEY_OBJECTIVES))
print()
res = derive_weights(responses, demographics, schools=[1, 2, 3, 4, 5])
for s in res.schools():
    ws = ", ".join(f"{o} {res.exact[(s, o)]}" for o in SURVEY_OBJECTIVES)
    print(f"school {s}: {ws}")
print("schools without respondents (uniform):", res.uniform_schools)
print("schools missing a race among respondents:", res.renormalized_schools)
