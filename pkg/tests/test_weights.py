from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rezone.weights import (SurveyResponse, derive_weights, impute_race, read_demographics,
                            read_survey, read_weights)

RACES = ("White", "Black", "Hispanic")


def resp(rid, race, aff, first):
    ranks = {"distance": 3, "balance": 3, "feeder": 3}
    for f in ([first] if isinstance(first, str) else first):
        ranks[f] = 1
    return SurveyResponse(str(rid), race, tuple(aff), ranks)


def w3(result, s):
    return tuple(result.exact[(s, o)] for o in ("distance", "balance", "feeder"))


def test_impute_declared_and_unspecified():
    demo = {1: {"Black": 0.5, "White": 0.5}, 2: {"Black": 0.3, "White": 0.7}}
    assert impute_race(resp(1, "Black", [1], "distance"), demo) == {"Black": 1}
    v = impute_race(resp(2, "unspecified", [1, 2], "distance"), demo)
    assert v["Black"] == Fraction(2, 5)
    assert impute_race(resp(3, "", [2], "distance"), demo) == {"Black": Fraction(3, 10),
                                                                "White": Fraction(7, 10)}
    with pytest.raises(KeyError):
        impute_race(resp(4, "unspecified", [9], "distance"), demo)


def test_counting_example():
    demo = {1: {"White": 1.0}}
    rs = [resp(1, "White", [1], "distance"), resp(2, "White", [1], "distance"),
          resp(3, "White", [1], "balance"), resp(4, "White", [1], "feeder")]
    assert w3(derive_weights(rs, demo), 1) == (Fraction(1, 2), Fraction(1, 4), Fraction(1, 4))


def test_reweighting_worked_example():
    demo = {1: {"White": 0.5, "Black": 0.5}}
    rs = [resp(1, "White", [1], "distance"), resp(2, "White", [1], "distance"),
          resp(3, "White", [1], "balance"), resp(4, "Black", [1], "feeder")]
    # oracle: factors 0.5/0.75 and 0.5/0.25
    fw, fb = Fraction(1, 2) / Fraction(3, 4), Fraction(1, 2) / Fraction(1, 4)
    total = 3 * fw + fb
    assert (2 * fw / total, fw / total, fb / total) == (Fraction(1, 3), Fraction(1, 6),
                                                        Fraction(1, 2))
    assert w3(derive_weights(rs, demo), 1) == (Fraction(1, 3), Fraction(1, 6), Fraction(1, 2))


def test_school_without_respondents_uniform():
    res = derive_weights([], {5: {"White": 1.0}})
    assert w3(res, 5) == (Fraction(1, 3),) * 3 and res.uniform_schools == [5]


def test_tied_first_place_split_and_flagged():
    res = derive_weights([resp(1, "White", [1], ["distance", "feeder"])], {1: {"White": 1}})
    assert w3(res, 1) == (Fraction(1, 2), 0, Fraction(1, 2))
    assert res.tied_respondents == ["1"]


def test_absent_race_mass_renormalized():
    demo = {1: {"White": 0.6, "Black": 0.3, "Asian": 0.1}}
    rs = [resp(1, "White", [1], "distance"), resp(2, "Black", [1], "balance")]
    res = derive_weights(rs, demo)
    assert res.renormalized_schools == [1]
    # White target 0.6/0.9 over survey share 1/2, Black 0.3/0.9 over 1/2
    assert w3(res, 1) == (Fraction(2, 3), Fraction(1, 3), 0)


def test_affiliation_cap_mass():
    six = resp(1, "White", [1, 2, 3, 4, 5, 6], "distance")
    three = resp(2, "White", [1, 2, 3], "balance")
    assert six.multiplier * 6 == 3 and three.multiplier * 3 == 3
    assert six.multiplier == Fraction(1, 2)


@st.composite
def surveys(draw):
    n_schools = draw(st.integers(1, 4))
    demo = {}
    for s in range(1, n_schools + 1):
        raw = draw(st.lists(st.integers(0, 10), min_size=3, max_size=3).filter(any))
        demo[s] = {r: Fraction(x, sum(raw)) for r, x in zip(RACES, raw)}
    rs = []
    for i in range(draw(st.integers(0, 12))):
        aff = draw(st.lists(st.integers(1, n_schools), min_size=1, max_size=n_schools,
                            unique=True))
        race = draw(st.sampled_from(RACES + ("unspecified",)))
        ranks = draw(st.permutations([1, 2, 3]))
        rs.append(SurveyResponse(str(i), race, tuple(aff), dict(zip(
            ("distance", "balance", "feeder"), ranks))))
    return rs, demo


@settings(max_examples=100, deadline=None)
@given(surveys())
def test_weights_normalized_and_nonnegative(data):
    rs, demo = data
    res = derive_weights(rs, demo)
    for s in demo:
        vals = w3(res, s)
        assert all(v >= 0 for v in vals)
        assert abs(float(sum(vals)) - 1.0) <= 1e-9


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(RACES[:2]), st.sampled_from(["distance", "balance",
                                                                         "feeder"])),
                min_size=1, max_size=10))
def test_reweighting_identity_when_survey_matches_school(rows):
    # district shares set equal to the survey's race mix: all factors are 1
    counts = {r: sum(1 for x, _ in rows if x == r) for r in RACES[:2]}
    demo = {1: {r: Fraction(c, len(rows)) for r, c in counts.items()}}
    rs = [resp(i, r, [1], f) for i, (r, f) in enumerate(rows)]
    res = derive_weights(rs, demo)
    plain = {o: Fraction(sum(1 for _, f in rows if f == o), len(rows))
             for o in ("distance", "balance", "feeder")}
    assert w3(res, 1) == (plain["distance"], plain["balance"], plain["feeder"])


def test_file_round_trip(tmp_path):
    (tmp_path / "survey.csv").write_text(
        "respondent_id,race,affiliations,rank_distance,rank_balance,rank_feeder\n"
        "1,White,1,1,2,3\n2,White,1,1,3,2\n3,White,1,2,1,3\n4,Black,1;2,3,2,1\n")
    (tmp_path / "demographics.csv").write_text(
        "school_id,race,share\n1,White,0.5\n1,Black,0.5\n2,Black,1.0\n")
    res = derive_weights(read_survey(tmp_path / "survey.csv"),
                         read_demographics(tmp_path / "demographics.csv"))
    res.to_csv(tmp_path / "weights.csv")
    back = read_weights(tmp_path / "weights.csv")
    assert back[(1, "distance")] == pytest.approx(1 / 3)
    assert back[(2, "feeder")] == 1.0


def test_bad_survey_row(tmp_path):
    (tmp_path / "survey.csv").write_text(
        "respondent_id,race,affiliations,rank_distance,rank_balance,rank_feeder\n1,White,1,x,2,3\n")
    with pytest.raises(ValueError, match="row 2"):
        read_survey(tmp_path / "survey.csv")
