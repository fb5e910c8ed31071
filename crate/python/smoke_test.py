"""Smoke test for the tagrec extension module.

Build and install it first:

    cd crates/py && maturin develop --release
    python python/smoke_test.py
"""

import math
import tempfile

import tagrec


def main():
    assert tagrec.normalize_token("Programação") == "programacao"
    assert tagrec.normalize_token("the", stopwords=["the"]) is None
    assert tagrec.normalize_token("C++") == "c++"
    assert tagrec.extract_tags("Linear Algebra and the linear models", ["and", "the"]) == [
        "algebra",
        "linear",
        "models",
    ]

    s = tagrec.cosine({"x": 0.3, "y": 0.0, "z": 0.5}, {"x": 0.5, "y": 0.4, "z": 0.3})
    assert abs(s - 0.73) <= 0.005, s

    p = tagrec.precision(547, 1016, 1326)
    r = tagrec.recall(547, 1016, 1326)
    assert math.isclose(tagrec.f_score(p, r), 0.3184, abs_tol=1e-3)
    assert len(tagrec.standard_grid()) == 25

    corpus = tagrec.Corpus.synth(users=12, items=200, seed=42)
    engine = tagrec.Engine(corpus)
    summary = engine.run_cycle()
    assert summary["lists"] == 12, summary

    rows = engine.sweep()
    best = max(rows, key=lambda row: row["report"]["f_score"])
    cfg = best["config"]
    assert (cfg["p1"], cfg["p2"], cfg["m1"], cfg["m2"], cfg["m3"]) == (70.0, 40.0, 4, 5, 5), cfg
    assert best["report"]["f_score"] == 1.0

    user = "u000"
    item = engine.list(user)[0]
    engine.rate(user, item["item_id"], item["item_kind"], 0)
    prof = engine.profile(user)
    assert set(item["matched_tags"]) <= set(prof["irrelevant"])
    assert not set(prof["relevant"]) & set(prof["irrelevant"])

    with tempfile.TemporaryDirectory() as d:
        corpus.save(d)
        assert tagrec.Corpus.load(d).n_loans == corpus.n_loans

    print("tagrec smoke test passed:", corpus)


if __name__ == "__main__":
    main()
