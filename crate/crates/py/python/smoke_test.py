"""Smoke test for the Python bindings.

Build and install first:  pip install -e crates/py --no-build-isolation
"""

import json
import math
import pathlib

import ebn_py

TOY = pathlib.Path(__file__).resolve().parents[2] / "service" / "tests" / "fixtures" / "toy.json"


def main():
    assert ebn_py.scenarios() == ["frame", "lifecycle", "infranet"]

    net = ebn_py.compile(model=TOY.read_text(), workers=1)
    assert net.name == "toy"
    assert dict(net.nodes())["X"] == 5

    tl = net.timeline()
    assert [r["t"] for r in tl["rows"]] == [1, 2]
    assert math.isclose(tl["rows"][1]["pf"], 0.15458, abs_tol=1e-12)

    d = net.decide()
    assert d["optimal"] == "strengthen"
    assert math.isclose(d["expected_utilities"][0], -3091.6, abs_tol=1e-9)

    post = net.posterior("Q", [{"node": "M", "state": "low"}])
    assert math.isclose(post["probabilities"][0], 0.24 / 0.45, abs_tol=1e-12)

    v = net.voi()
    assert v[0]["measurements"] == ["M"] and v[0]["voi"] >= 0.0

    again = ebn_py.Network.from_json(net.to_json())
    assert again.model_hash == net.model_hash

    s = net.session("py")
    assert s.add_evidence([{"node": "E1", "state": "survive"}], expected_revision=0) == 1
    try:
        s.add_evidence([{"node": "E1", "state": "fail"}], expected_revision=1)
    except ebn_py.InconsistentEvidence as e:
        assert "`E1`" in str(e)
    else:
        raise AssertionError("contradiction accepted")
    try:
        s.add_evidence([], expected_revision=0)
    except ebn_py.RevisionConflict:
        pass
    else:
        raise AssertionError("stale revision accepted")
    assert s.revision == 1
    assert len(s.log().splitlines()) == 2
    assert json.loads(s.log().splitlines()[1])["event"] == "evidence"

    script = ebn_py.scenario_evidence("infranet", "inspections")
    assert [st["label"] for st in script["steps"]] == list("abcdefg")

    print("ok")


if __name__ == "__main__":
    main()
