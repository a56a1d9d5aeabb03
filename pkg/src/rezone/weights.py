"""Per-school objective weights from a community survey.

Each respondent names the schools they are affiliated with and ranks three
factors (distance, balance, feeder).  A school's weight for a factor is the
share of its respondents who ranked that factor first, after capping the
influence of respondents with many affiliations and reweighting respondents
so the race mix matches the school's.  Arithmetic is exact (fractions).
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, Mapping

from .objectives import BALANCE, DISTANCE, FEEDER

log = logging.getLogger(__name__)

SURVEY_OBJECTIVES = (DISTANCE, BALANCE, FEEDER)
UNSPECIFIED = "unspecified"
#: total influence of a respondent is capped at that of one with this many affiliations
AFFILIATION_CAP = 3

Shares = Mapping[str, Fraction]


def _frac(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    return Fraction(str(x))


@dataclass(frozen=True)
class SurveyResponse:
    respondent_id: str
    race: str
    affiliations: tuple[int, ...]
    #: rank per factor, 1 = most important
    ranks: Mapping[str, int]

    def __post_init__(self):
        if not self.affiliations:
            raise ValueError(f"respondent {self.respondent_id} has no affiliations")
        missing = [o for o in SURVEY_OBJECTIVES if o not in self.ranks]
        if missing:
            raise ValueError(f"respondent {self.respondent_id} lacks ranks for {missing}")

    @property
    def first_choices(self) -> tuple[str, ...]:
        """Top-ranked factors (more than one on a tie)."""
        top = min(self.ranks[o] for o in SURVEY_OBJECTIVES)
        return tuple(o for o in SURVEY_OBJECTIVES if self.ranks[o] == top)

    @property
    def multiplier(self) -> Fraction:
        """Per-affiliation influence: 1, or 3/k for k > 3 affiliations."""
        return min(Fraction(1), Fraction(AFFILIATION_CAP, len(self.affiliations)))

    @property
    def race_unspecified(self) -> bool:
        return self.race.strip().lower() in ("", UNSPECIFIED)


def validate_demographics(demographics: Mapping[int, Mapping[str, float]]
                          ) -> dict[int, dict[str, Fraction]]:
    out = {}
    for s, shares in demographics.items():
        fr = {r: _frac(v) for r, v in shares.items()}
        if any(v < 0 or v > 1 for v in fr.values()):
            raise ValueError(f"school {s}: race shares must lie in [0, 1]")
        if abs(float(sum(fr.values())) - 1.0) > 1e-9:
            raise ValueError(f"school {s}: race shares sum to {float(sum(fr.values()))}")
        out[int(s)] = fr
    return out


def impute_race(response: SurveyResponse, demographics: Mapping[int, Shares]
                ) -> dict[str, Fraction]:
    """Race-share vector of a respondent: one-hot if declared, else the mean
    of the affiliated schools' vectors."""
    for s in response.affiliations:
        if s not in demographics:
            raise KeyError(f"respondent {response.respondent_id}: unknown school id {s}")
    if not response.race_unspecified:
        return {response.race: Fraction(1)}
    out: dict[str, Fraction] = {}
    k = len(response.affiliations)
    for s in response.affiliations:
        for r, v in demographics[s].items():
            out[r] = out.get(r, Fraction(0)) + _frac(v) / k
    return out


@dataclass
class SurveyWeights:
    #: (school, objective) -> exact weight
    exact: dict[tuple[int, str], Fraction]
    #: respondents whose first place was tied; their mass was split equally
    tied_respondents: list[str] = field(default_factory=list)
    #: schools where some race had no respondents; its mass went to the others
    renormalized_schools: list[int] = field(default_factory=list)
    #: schools without respondents (uniform weights)
    uniform_schools: list[int] = field(default_factory=list)

    @property
    def weights(self) -> dict[tuple[int, str], float]:
        return {k: float(v) for k, v in self.exact.items()}

    def schools(self) -> list[int]:
        return sorted({s for s, _ in self.exact})

    def to_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["school_id"] + [f"w_{o}" for o in SURVEY_OBJECTIVES])
            for s in self.schools():
                w.writerow([s] + [repr(float(self.exact[(s, o)])) for o in SURVEY_OBJECTIVES])
        return path


def derive_weights(responses: Iterable[SurveyResponse],
                   demographics: Mapping[int, Mapping[str, float]],
                   schools: Iterable[int] | None = None) -> SurveyWeights:
    """Weights for every school in ``demographics`` (and ``schools``)."""
    demo = validate_demographics(demographics)
    responses = list(responses)
    vectors = {}
    by_school: dict[int, list[SurveyResponse]] = {}
    tied = []
    for r in responses:
        vectors[r.respondent_id] = impute_race(r, demo)
        if len(r.first_choices) > 1:
            tied.append(r.respondent_id)
        for s in r.affiliations:
            by_school.setdefault(s, []).append(r)
    result = SurveyWeights({}, tied_respondents=sorted(tied))
    all_schools = sorted(set(demo) | set(schools or ()))
    third = Fraction(1, len(SURVEY_OBJECTIVES))
    for s in all_schools:
        resp = by_school.get(s, [])
        if not resp:
            result.uniform_schools.append(s)
            for o in SURVEY_OBJECTIVES:
                result.exact[(s, o)] = third
            continue
        mass = sum(r.multiplier for r in resp)
        races = sorted({race for r in resp for race in vectors[r.respondent_id]}
                       | set(demo[s]))
        sigma = {race: sum(r.multiplier * vectors[r.respondent_id].get(race, 0) for r in resp)
                 / mass for race in races}
        district = {race: demo[s].get(race, Fraction(0)) for race in races}
        present = [race for race in races if sigma[race] > 0]
        if any(district[race] > 0 for race in races if sigma[race] == 0):
            result.renormalized_schools.append(s)
        present_mass = sum(district[race] for race in present)
        totals = {o: Fraction(0) for o in SURVEY_OBJECTIVES}
        norm = Fraction(0)
        for r in resp:
            vec = vectors[r.respondent_id]
            if present_mass > 0:
                factor = sum(vec.get(race, 0) * (district[race] / present_mass) / sigma[race]
                             for race in present)
            else:
                factor = Fraction(1)
            wt = r.multiplier * factor
            firsts = r.first_choices
            for o in firsts:
                totals[o] += wt / len(firsts)
            norm += wt
        for o in SURVEY_OBJECTIVES:
            result.exact[(s, o)] = totals[o] / norm if norm > 0 else third
    if result.renormalized_schools:
        log.warning("race groups without respondents at schools %s; their share was "
                    "spread over the other groups", result.renormalized_schools)
    return result


# file formats ----------------------------------------------------------------

def read_survey(path: str | Path) -> list[SurveyResponse]:
    """survey.csv: respondent_id, race, affiliations (``;``-separated school
    ids), rank_distance, rank_balance, rank_feeder."""
    path = Path(path)
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        need = ["respondent_id", "race", "affiliations"] + [f"rank_{o}" for o in SURVEY_OBJECTIVES]
        missing = [c for c in need if c not in (reader.fieldnames or [])]
        if missing:
            raise ValueError(f"{path.name}: missing columns {missing}")
        for i, row in enumerate(reader, start=2):
            try:
                aff = tuple(int(x) for x in row["affiliations"].split(";") if x.strip())
                ranks = {o: int(row[f"rank_{o}"]) for o in SURVEY_OBJECTIVES}
                out.append(SurveyResponse(row["respondent_id"].strip(),
                                          (row["race"] or "").strip(), aff, ranks))
            except (ValueError, TypeError) as exc:
                raise ValueError(f"{path.name} row {i}: {exc}") from None
    return out


def read_demographics(path: str | Path) -> dict[int, dict[str, Fraction]]:
    """demographics.csv: school_id, race, share."""
    path = Path(path)
    out: dict[int, dict[str, Fraction]] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            try:
                out.setdefault(int(row["school_id"]), {})[row["race"].strip()] = \
                    _frac(row["share"].strip())
            except (KeyError, ValueError, TypeError, AttributeError) as exc:
                raise ValueError(f"{path.name} row {i}: {exc}") from None
    return validate_demographics(out)


def read_weights(path: str | Path) -> dict[tuple[int, str], float]:
    """weights.csv as written by :meth:`SurveyWeights.to_csv`."""
    path = Path(path)
    out = {}
    with open(path, newline="", encoding="utf-8") as fh:
        for i, row in enumerate(csv.DictReader(fh), start=2):
            try:
                s = int(row["school_id"])
                for o in SURVEY_OBJECTIVES:
                    out[(s, o)] = float(row[f"w_{o}"])
            except (KeyError, ValueError, TypeError) as exc:
                raise ValueError(f"{path.name} row {i}: {exc}") from None
    return out
