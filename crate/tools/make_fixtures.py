#!/usr/bin/env python3
"""Writes the bundled knowledge-graph fixtures.

All dose values are illustrative engineering data, not clinical guidance.

    python3 tools/make_fixtures.py
"""
import json
import pathlib

OUT = pathlib.Path(__file__).resolve().parent.parent / "crates" / "core" / "fixtures"

PERMANENT = ["central incisor", "lateral incisor", "canine", "first premolar",
             "second premolar", "first molar", "second molar", "third molar"]
PRIMARY = ["central incisor", "lateral incisor", "canine", "first molar", "second molar"]
QUADRANT = {1: ("maxillary", "right"), 2: ("maxillary", "left"),
            3: ("mandibular", "left"), 4: ("mandibular", "right")}


def node(id_, kind, name, synonyms=(), **attrs):
    return {"node": {"id": id_, "kind": kind, "name": name,
                     "synonyms": list(synonyms), "attrs": attrs}}


def edge(src, rel, dst, **attrs):
    return {"edge": {"src": src, "rel": rel, "dst": dst, "attrs": attrs}}


def dose(drug, band, lo, hi, cap, fmin, fmax, dmin, dmax):
    return edge(drug, "has_dose_rule", band, min_mg_per_kg_day=lo, max_mg_per_kg_day=hi,
                abs_max_mg_day=cap, freq_min_per_day=fmin, freq_max_per_day=fmax,
                duration_min_days=dmin, duration_max_days=dmax)


def teeth():
    out = []
    for q in range(1, 9):
        primary = q >= 5
        arch, side = QUADRANT[q - 4 if primary else q]
        names = PRIMARY if primary else PERMANENT
        for pos, tooth in enumerate(names, start=1):
            code = f"{q}{pos}"
            dentition = "primary" if primary else "permanent"
            out.append(node(f"tooth_{code}", "ToothSite", f"{dentition} {arch} {side} {tooth}",
                            [f"tooth {code}"], fdi=code, dentition=dentition))
    return out


def mini():
    recs = []
    recs += [
        node("penicillins", "DrugClass", "penicillins", ["penicillin class"]),
        node("lincosamides", "DrugClass", "lincosamides"),
        node("macrolides", "DrugClass", "macrolides", ["macrolide antibiotics"]),
        node("AMX", "Drug", "amoxicillin", ["amox", "amoxil"]),
        node("AMC", "Drug", "amoxicillin clavulanate", ["augmentin", "co-amoxiclav"]),
        node("CLI", "Drug", "clindamycin", ["cleocin"]),
        node("AZI", "Drug", "azithromycin", ["zithromax"]),
        node("penicillin_allergy", "AllergyClass", "penicillin allergy", ["allergic to penicillin"]),
        node("macrolide_allergy", "AllergyClass", "macrolide allergy"),
        node("ageband_0_5m", "AgeBand", "age 0 to 5 months", min_months=0, max_months=5),
        node("ageband_6m_2y", "AgeBand", "age 6 months to 2 years", min_months=6, max_months=23),
        node("ageband_2_12y", "AgeBand", "age 2 to 12 years", min_months=24, max_months=143),
        node("ageband_12_18y", "AgeBand", "age 12 to 18 years", min_months=144, max_months=216),
        node("acute_pulpitis", "Condition", "acute pulpitis", ["pulpitis"]),
        node("periapical_abscess", "Condition", "periapical abscess",
             ["dental abscess", "apical abscess"]),
        node("pain", "Symptom", "pain", ["toothache", "tooth pain"]),
        node("swelling", "Symptom", "swelling", ["swollen"]),
        node("spontaneous_pain", "Symptom", "spontaneous pain", ["intermittent spontaneous pain"]),
        node("lingering_cold_pain", "Symptom", "lingering pain to cold", ["cold sensitivity"]),
        node("fever", "Symptom", "fever", ["pyrexia", "febrile"]),
        node("facial_swelling", "Symptom", "facial swelling", ["swollen face"]),
        node("trismus", "Symptom", "trismus", ["limited mouth opening"]),
        node("sinus_tract", "Symptom", "sinus tract", ["fistula", "parulis"]),
        node("periapical_radiolucency", "Symptom", "periapical radiolucency",
             ["periapical lucency", "apical radiolucency"]),
        node("percussion_tenderness", "Symptom", "tenderness to percussion",
             ["tender to percussion"]),
        node("tooth_mobility", "Symptom", "tooth mobility", ["mobility"]),
        node("pdl_widening", "Symptom", "widened periodontal ligament space",
             ["periodontal ligament widening"]),
        node("furcation_involvement", "Symptom", "furcation involvement",
             ["furcation radiolucency"]),
        node("gp_abscess", "GuidelinePassage", "abscess antibiotic guidance",
             text="Periapical abscess with swelling, fever, sinus tract or periapical "
                  "radiolucency: amoxicillin is the first-line antibiotic; clindamycin "
                  "if penicillin allergic.",
             source="illustrative"),
        node("gp_pulpitis", "GuidelinePassage", "pulpitis management guidance",
             text="Acute pulpitis with spontaneous pain or lingering pain to cold: pulpal "
                  "therapy first; antibiotics only when infection spreads.",
             source="illustrative"),
        node("gp_allergy", "GuidelinePassage", "penicillin allergy alternatives",
             text="Penicillin allergy: avoid amoxicillin and other penicillins; clindamycin "
                  "or azithromycin are the alternatives.",
             source="illustrative"),
        node("gp_duration", "GuidelinePassage", "course duration guidance",
             text="Dental antibiotic courses usually run five to seven days with review.",
             source="illustrative"),
    ]
    recs += teeth()
    recs += [
        edge("AMX", "member_of", "penicillins"),
        edge("AMC", "member_of", "penicillins"),
        edge("CLI", "member_of", "lincosamides"),
        edge("AZI", "member_of", "macrolides"),
        edge("penicillins", "cross_reactive", "penicillin_allergy"),
        edge("macrolides", "cross_reactive", "macrolide_allergy"),
        dose("AMX", "ageband_2_12y", 40, 90, 3000, 2, 3, 5, 7),
        dose("AMX", "ageband_12_18y", 25, 50, 3000, 2, 3, 5, 7),
        dose("AMC", "ageband_2_12y", 25, 45, 1750, 2, 3, 5, 7),
        dose("AMC", "ageband_12_18y", 25, 45, 1750, 2, 3, 5, 7),
        dose("CLI", "ageband_6m_2y", 10, 25, 1800, 3, 4, 5, 7),
        dose("CLI", "ageband_2_12y", 10, 30, 1800, 3, 4, 5, 7),
        dose("CLI", "ageband_12_18y", 10, 25, 1800, 3, 4, 5, 7),
        dose("AZI", "ageband_6m_2y", 10, 12, 500, 1, 1, 3, 5),
        dose("AZI", "ageband_2_12y", 10, 12, 500, 1, 1, 3, 5),
        dose("AZI", "ageband_12_18y", 8, 12, 500, 1, 1, 3, 5),
        edge("CLI", "interacts_with", "AZI", severity=0.3),
        edge("AMX", "treats", "periapical_abscess", line="first"),
        edge("AMX", "treats", "acute_pulpitis", line="first"),
        edge("CLI", "treats", "periapical_abscess", line="second"),
        edge("CLI", "treats", "acute_pulpitis", line="second"),
        edge("AZI", "treats", "acute_pulpitis", line="second"),
    ]
    for sym, conds in [
        ("pain", ["acute_pulpitis", "periapical_abscess"]),
        ("swelling", ["acute_pulpitis", "periapical_abscess"]),
        ("spontaneous_pain", ["acute_pulpitis"]),
        ("lingering_cold_pain", ["acute_pulpitis"]),
        ("fever", ["periapical_abscess"]),
        ("facial_swelling", ["periapical_abscess"]),
        ("trismus", ["periapical_abscess"]),
        ("sinus_tract", ["periapical_abscess"]),
        ("periapical_radiolucency", ["periapical_abscess"]),
        ("percussion_tenderness", ["acute_pulpitis", "periapical_abscess"]),
        ("tooth_mobility", ["periapical_abscess"]),
        ("pdl_widening", ["acute_pulpitis", "periapical_abscess"]),
        ("furcation_involvement", ["periapical_abscess"]),
    ]:
        recs += [edge(sym, "indicates", c) for c in conds]
    recs += [
        edge("gp_abscess", "supports", "periapical_abscess"),
        edge("gp_abscess", "supports", "AMX"),
        edge("gp_abscess", "supports", "CLI"),
        edge("gp_pulpitis", "supports", "acute_pulpitis"),
        edge("gp_allergy", "supports", "CLI"),
        edge("gp_allergy", "supports", "AZI"),
        edge("gp_duration", "supports", "AMX"),
    ]
    return recs


def dental():
    recs = mini()
    recs += [
        node("nitroimidazoles", "DrugClass", "nitroimidazoles"),
        node("cephalosporins", "DrugClass", "cephalosporins"),
        node("tetracyclines", "DrugClass", "tetracyclines"),
        node("anticoagulants", "DrugClass", "anticoagulants"),
        node("anticonvulsants", "DrugClass", "anticonvulsants"),
        node("PEN", "Drug", "penicillin v", ["phenoxymethylpenicillin", "pen vk"]),
        node("MTZ", "Drug", "metronidazole", ["flagyl"]),
        node("CEX", "Drug", "cephalexin", ["keflex"]),
        node("DOX", "Drug", "doxycycline"),
        node("ERY", "Drug", "erythromycin"),
        node("WAR", "Drug", "warfarin"),
        node("CBZ", "Drug", "carbamazepine", ["tegretol"]),
        node("THE", "Drug", "theophylline"),
        node("MDZ", "Drug", "midazolam"),
        node("cephalosporin_allergy", "AllergyClass", "cephalosporin allergy"),
        node("ageband_8_18y", "AgeBand", "age 8 to 18 years", min_months=96, max_months=216),
        node("facial_cellulitis", "Condition", "facial cellulitis", ["odontogenic cellulitis"]),
        node("pericoronitis", "Condition", "pericoronitis"),
        node("asthma", "Condition", "asthma"),
        node("congenital_heart_defect", "Condition", "congenital heart defect"),
        node("long_qt_syndrome", "Condition", "long qt syndrome"),
        node("infectious_mononucleosis", "Condition", "infectious mononucleosis"),
        node("colitis_history", "Condition", "history of pseudomembranous colitis"),
        node("diffuse_swelling", "Symptom", "diffuse swelling", ["spreading swelling"]),
        node("lymphadenopathy", "Symptom", "lymphadenopathy", ["swollen lymph nodes"]),
        node("operculum_inflammation", "Symptom", "inflamed operculum", ["operculum swelling"]),
        node("halitosis", "Symptom", "halitosis", ["bad breath"]),
        node("gp_cellulitis", "GuidelinePassage", "cellulitis escalation guidance",
             text="Facial cellulitis with diffuse spreading swelling, trismus or "
                  "lymphadenopathy needs urgent drainage; amoxicillin clavulanate first, "
                  "clindamycin or cephalexin as alternatives.",
             source="illustrative"),
        node("gp_pericoronitis", "GuidelinePassage", "pericoronitis guidance",
             text="Pericoronitis with inflamed operculum and halitosis: irrigation and "
                  "amoxicillin; metronidazole as an adjunct.",
             source="illustrative"),
        node("gp_interactions", "GuidelinePassage", "interaction cautions",
             text="Erythromycin and metronidazole interact with warfarin, carbamazepine, "
                  "theophylline and midazolam; check current medications.",
             source="illustrative"),
        node("gp_doxycycline", "GuidelinePassage", "tetracycline age restriction",
             text="Doxycycline stains developing teeth and is avoided below eight years.",
             source="illustrative"),
    ]
    recs += [
        edge("PEN", "member_of", "penicillins"),
        edge("MTZ", "member_of", "nitroimidazoles"),
        edge("CEX", "member_of", "cephalosporins"),
        edge("DOX", "member_of", "tetracyclines"),
        edge("ERY", "member_of", "macrolides"),
        edge("WAR", "member_of", "anticoagulants"),
        edge("CBZ", "member_of", "anticonvulsants"),
        edge("cephalosporins", "cross_reactive", "cephalosporin_allergy"),
        edge("CEX", "cross_reactive", "penicillin_allergy"),
        dose("PEN", "ageband_6m_2y", 25, 50, 2000, 3, 4, 5, 7),
        dose("PEN", "ageband_2_12y", 25, 50, 2000, 3, 4, 5, 7),
        dose("PEN", "ageband_12_18y", 25, 50, 2000, 3, 4, 5, 7),
        dose("MTZ", "ageband_2_12y", 20, 30, 2000, 3, 3, 5, 7),
        dose("MTZ", "ageband_12_18y", 15, 30, 2000, 3, 3, 5, 7),
        dose("CEX", "ageband_6m_2y", 25, 50, 4000, 2, 4, 5, 7),
        dose("CEX", "ageband_2_12y", 25, 50, 4000, 2, 4, 5, 7),
        dose("CEX", "ageband_12_18y", 25, 50, 4000, 2, 4, 5, 7),
        dose("DOX", "ageband_8_18y", 2, 4, 200, 1, 2, 5, 7),
        dose("ERY", "ageband_6m_2y", 30, 50, 2000, 3, 4, 5, 7),
        dose("ERY", "ageband_2_12y", 30, 50, 2000, 3, 4, 5, 7),
        dose("ERY", "ageband_12_18y", 30, 50, 2000, 3, 4, 5, 7),
        edge("MTZ", "interacts_with", "WAR", severity=0.9),
        edge("MTZ", "interacts_with", "CBZ", severity=0.3),
        edge("ERY", "interacts_with", "CBZ", severity=0.8),
        edge("ERY", "interacts_with", "THE", severity=0.7),
        edge("ERY", "interacts_with", "MDZ", severity=0.8),
        edge("AZI", "interacts_with", "WAR", severity=0.4),
        edge("CLI", "interacts_with", "MDZ", severity=0.2),
        edge("DOX", "interacts_with", "WAR", severity=0.5),
        edge("AZI", "contraindicated_in", "long_qt_syndrome"),
        edge("ERY", "contraindicated_in", "long_qt_syndrome"),
        edge("AMX", "contraindicated_in", "infectious_mononucleosis"),
        edge("AMC", "contraindicated_in", "infectious_mononucleosis"),
        edge("CLI", "contraindicated_in", "colitis_history"),
        edge("PEN", "treats", "periapical_abscess", line="first"),
        edge("AMC", "treats", "periapical_abscess", line="second"),
        edge("CEX", "treats", "periapical_abscess", line="second"),
        edge("MTZ", "treats", "periapical_abscess", line="second"),
        edge("DOX", "treats", "periapical_abscess", line="second"),
        edge("AMC", "treats", "facial_cellulitis", line="first"),
        edge("CLI", "treats", "facial_cellulitis", line="second"),
        edge("CEX", "treats", "facial_cellulitis", line="second"),
        edge("AMX", "treats", "pericoronitis", line="first"),
        edge("MTZ", "treats", "pericoronitis", line="second"),
        edge("CLI", "treats", "pericoronitis", line="second"),
        edge("ERY", "treats", "acute_pulpitis", line="second"),
    ]
    for sym, conds in [
        ("facial_swelling", ["facial_cellulitis"]),
        ("fever", ["facial_cellulitis", "pericoronitis"]),
        ("trismus", ["facial_cellulitis", "pericoronitis"]),
        ("diffuse_swelling", ["facial_cellulitis"]),
        ("lymphadenopathy", ["facial_cellulitis", "pericoronitis"]),
        ("operculum_inflammation", ["pericoronitis"]),
        ("halitosis", ["pericoronitis"]),
        ("pain", ["pericoronitis"]),
    ]:
        recs += [edge(sym, "indicates", c) for c in conds]
    recs += [
        edge("gp_cellulitis", "supports", "facial_cellulitis"),
        edge("gp_cellulitis", "supports", "AMC"),
        edge("gp_pericoronitis", "supports", "pericoronitis"),
        edge("gp_pericoronitis", "supports", "MTZ"),
        edge("gp_interactions", "supports", "ERY"),
        edge("gp_interactions", "supports", "MTZ"),
        edge("gp_doxycycline", "supports", "DOX"),
    ]
    return recs


def write(name, recs):
    # Edges go first: the loader must accept forward references.
    ordered = [r for r in recs if "edge" in r] + [r for r in recs if "node" in r]
    path = OUT / name
    with path.open("w", encoding="utf-8") as fh:
        for r in ordered:
            fh.write(json.dumps(r, separators=(",", ":")) + "\n")
    print(f"{path}: {sum('node' in r for r in recs)} nodes, {sum('edge' in r for r in recs)} edges")


if __name__ == "__main__":
    OUT.mkdir(parents=True, exist_ok=True)
    write("kg_mini.jsonl", mini())
    write("kg_dental.jsonl", dental())
    (OUT / "abbreviations.tsv").write_text(
        "periap.\tperiapical\n"
        "ttp\ttenderness to percussion\n"
        "rl\tradiolucency\n"
        "pdl\tperiodontal ligament\n"
        "abx\tantibiotics\n"
        "hx\thistory\n"
        "sw.\tswelling\n"
        "pcn\tpenicillin\n",
        encoding="utf-8")
