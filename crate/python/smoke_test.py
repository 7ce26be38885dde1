"""End-to-end smoke test of the Python bindings.

Run after `pip install --no-build-isolation -e crates/py`:

    python python/smoke_test.py
"""

import json
import math
import pathlib
import tempfile

import meo

SPEC = """
rng_seed = 5
platforms = ["tiktok", "bluesky"]
start = "2024-01-01T00:00:00Z"
end = "2024-02-01T00:00:00Z"
bad_timestamps = 1
interactions = true

[seeds_per_type]
news = 2
politician = 3

[posts_per_seed]
min = 6
max = 12
"""


def check_pipeline(tmp):
    root = pathlib.Path(tmp)
    expected = meo.build_scenario_to(SPEC, root / "sc")
    obs = meo.Observatory(str(root / "data"), fixtures=str(root / "sc" / "corpus"), now="2024-02-02")
    loaded = obs.import_seeds((root / "sc" / "seeds.csv").read_text())
    assert loaded["rejected"] == [], loaded
    assert obs.seed_count() == 5

    quarantined = 0
    for p in ["tiktok", "bluesky"]:
        report = obs.run_pipeline(p, "2024-01-01", "2024-02-01")
        c = report["counts"]
        assert c["fetched"] == c["stored"] + c["rejected_invalid"]
        assert c["stored"] == c["normalized"] + c["quarantined"]
        assert c["normalized"] == c["indexed"] == c["embedded"]
        quarantined += c["quarantined"]
        assert obs.detect_gaps(p, "news_000", "2024-01-01", "2024-02-01") == []
    assert quarantined == 2
    assert obs.post_count() == expected["total_docs"] - quarantined
    assert len(obs) == obs.post_count()

    # a missing handle has nothing recorded, so the whole window is a gap
    assert obs.detect_gaps("tiktok", "nobody", "2024-01-01", "2024-01-03") == [("2024-01-01", "2024-01-03")]

    hits = obs.search("climate", mode="lexical", k=5)
    assert 0 < len(hits) <= 5
    scores = [s for _, s in hits]
    assert scores == sorted(scores, reverse=True)
    post = obs.get_post(hits[0][0])
    assert "climate" in post["text"].lower()
    assert obs.search(mode="browse", k=3, platform_name="bluesky")
    try:
        obs.search("x", mode="fuzzy")
    except ValueError:
        pass
    else:
        raise AssertionError("bad mode accepted")

    assert "| TikTok" in obs.table2()
    assert "Total" in obs.table1()
    out = root / "dump.ndjson"
    n = obs.export_ndjson(str(out), "2024-01-01", "2024-02-01")
    lines = out.read_text().splitlines()
    assert n == len(lines) == obs.post_count()
    assert all(json.loads(line)["published_at"].endswith("Z") for line in lines)
    m = obs.metrics()
    assert m["indexed"] == m["index_docs"] == n


def check_functions():
    assert meo.tokenize("Québec, BUDGET-vote") == ["québec", "budget", "vote"]
    v = meo.embed("rail ferry")
    assert len(v) == meo.EMBED_DIM
    assert abs(math.sqrt(sum(x * x for x in v)) - 1.0) < 1e-5
    assert not any(meo.embed(""))

    fused = meo.rrf_fuse([["x", "y"], ["y"]])
    assert fused[0][0] == "y"
    assert abs(fused[0][1] - (1 / 62 + 1 / 61)) < 1e-12

    pr = meo.pagerank([("a", "b", 1.0), ("b", "a", 1.0)])
    assert abs(pr["a"] - 0.5) < 1e-12

    cliques = [("a", "b", 1.0), ("b", "c", 1.0), ("a", "c", 1.0), ("d", "e", 1.0), ("e", "f", 1.0), ("d", "f", 1.0), ("c", "d", 1.0)]
    labels = meo.detect_communities(cliques)
    assert labels["a"] == labels["c"] != labels["f"]

    a = [float((i * 37) % 11) for i in range(40)]
    b = [0.0] * 3 + [2 * x + 1 for x in a[:-3]]
    lag, r = meo.temporal_match(a, b, 6)
    assert lag == 3 and abs(r - 1.0) < 1e-9
    try:
        meo.temporal_match([1.0] * 5, [1.0] * 5, 2)
    except meo.MeoError:
        pass
    else:
        raise AssertionError("flat series accepted")

    assert meo.render_cell(7322094, 668) == "7 322 094 (10 961)"
    assert meo.render_cell(0, 0) == "–"
    assert "x_twitter" in meo.PLATFORMS


if __name__ == "__main__":
    check_functions()
    with tempfile.TemporaryDirectory() as tmp:
        check_pipeline(tmp)
    print("smoke test ok")
