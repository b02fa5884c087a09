import numpy as np
import pytest
from fastapi.testclient import TestClient

from axontrace.phantom import PhantomSpec, generate_phantom, terminal_states_for_curve
from axontrace.service import Session, create_app
from axontrace.tracer import NeuronTracer


@pytest.fixture(scope="module")
def censored_setup():
    """Tube with a censored gap wider than d_max: two disconnected halves."""
    spec = PhantomSpec(
        kind="polyline",
        dims=(120, 24, 20),
        spacing=(0.5, 0.5, 1.0),
        points_um=[[4, 6, 10], [56, 6, 10]],
        radius_um=1.0,
        censor_arcs_um=[(16.0, 20.0)],
        n_labels=300,
        seed=11,
    )
    phantom = generate_phantom(spec)
    tracer = NeuronTracer().fit(
        phantom.volume, phantom.prob_map,
        labels=(phantom.fg_labels, phantom.bg_labels),
    )
    return phantom, tracer


@pytest.fixture()
def client(censored_setup):
    _, tracer = censored_setup
    session = Session(tracer=tracer)
    return TestClient(create_app(session))


def left_right_fragments(tracer):
    frags = sorted(tracer.fragments_.fragments, key=lambda f: f.x0[0])
    return frags[0], frags[-1]


class TestInfoAndImages:
    def test_session_info(self, client, censored_setup):
        _, tracer = censored_setup
        info = client.get("/session/info").json()
        assert info["dims"] == [120, 24, 20]
        assert info["spacing"] == [0.5, 0.5, 1.0]
        assert info["n_fragments"] == len(tracer.fragments_)
        assert info["hyperparams"]["alpha_d"] == 10.0

    def test_mip_png(self, client):
        resp = client.get("/mip", params={"axis": "z"})
        assert resp.status_code == 200
        assert resp.headers["content-type"] == "image/png"
        assert resp.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_mip_bad_axis(self, client):
        assert client.get("/mip", params={"axis": "q"}).status_code == 400

    def test_fragments_png_and_json(self, client, censored_setup):
        _, tracer = censored_setup
        png = client.get("/fragments", params={"axis": "z"})
        assert png.status_code == 200
        assert png.content[:4] == b"\x89PNG"
        data = client.get("/fragments", params={"axis": "z", "as": "json"}).json()
        assert data["axis"] == "z"
        assert len(data["fragments"]) == len(tracer.fragments_)
        item = data["fragments"][0]
        assert set(item) == {"id", "x0_px", "x1_px"}
        endpoints = client.get("/fragments/endpoints", params={"axis": "z"}).json()
        assert endpoints == data


class TestTrace:
    def test_same_fragment_single_state(self, client, censored_setup):
        _, tracer = censored_setup
        fid = tracer.fragments_.fragments[0].id
        resp = client.post("/trace", json={
            "start_fragment": fid, "start_orientation": "forward",
            "end_fragment": fid, "end_orientation": "forward",
        })
        assert resp.status_code == 200
        body = resp.json()
        assert len(body["states"]) == 1
        assert body["weight"] == 0.0
        assert body["id"] >= 1

    def test_matches_direct_tracer_result(self, client, censored_setup):
        phantom, tracer = censored_setup
        start_sid, end_sid = terminal_states_for_curve(
            tracer.fragments_, phantom.ground_truth[0],
            phantom.curve[np.argmin(np.abs(np.linalg.norm(
                phantom.curve - phantom.ground_truth[0], axis=1) - 14.0))],
        )
        start = tracer.states_[start_sid]
        end = tracer.states_[end_sid]
        direct = tracer.trace(
            start.fragment_id, start.orientation, end.fragment_id, end.orientation
        )
        resp = client.post("/trace", json={
            "start_fragment": start.fragment_id,
            "start_orientation": start.orientation_name,
            "end_fragment": end.fragment_id,
            "end_orientation": end.orientation_name,
        })
        assert resp.status_code == 200
        body = resp.json()
        assert body["states"] == direct.states
        assert body["weight"] == pytest.approx(direct.total_weight)
        np.testing.assert_allclose(body["polyline_um"], direct.polyline)

    def test_unknown_fragment_404(self, client):
        resp = client.post("/trace", json={
            "start_fragment": 9999, "end_fragment": 1,
        })
        assert resp.status_code == 404

    def test_no_path_409(self, client, censored_setup):
        _, tracer = censored_setup
        left, right = left_right_fragments(tracer)
        resp = client.post("/trace", json={
            "start_fragment": left.id, "end_fragment": right.id,
        })
        assert resp.status_code == 409

    def test_malformed_body_400(self, client):
        resp = client.post("/trace", json={"start_fragment": "zzz"})
        assert resp.status_code == 400

    def test_trace_lifecycle(self, client, censored_setup):
        _, tracer = censored_setup
        fid = tracer.fragments_.fragments[0].id
        made = client.post("/trace", json={
            "start_fragment": fid, "end_fragment": fid, "name": "probe",
        }).json()
        listed = client.get("/traces").json()["traces"]
        assert any(t["id"] == made["id"] and t["name"] == "probe" for t in listed)
        swc = client.get(f"/trace/{made['id']}/swc")
        assert swc.status_code == 200
        assert swc.text.splitlines()[0].endswith("-1")
        assert client.delete(f"/trace/{made['id']}").status_code == 200
        remaining = client.get("/traces").json()["traces"]
        assert all(t["id"] != made["id"] for t in remaining)
        assert client.delete(f"/trace/{made['id']}").status_code == 404

    def test_trace_results_independent_of_history(self, client, censored_setup):
        _, tracer = censored_setup
        frags = sorted(tracer.fragments_.fragments, key=lambda f: f.x0[0])
        a, b = frags[0].id, frags[1].id
        body = {"start_fragment": a, "end_fragment": b}
        first = client.post("/trace", json=body).json()
        client.post("/trace", json={"start_fragment": b, "end_fragment": a})
        second = client.post("/trace", json=body).json()
        assert first["states"] == second["states"]
        assert first["weight"] == second["weight"]

    def test_concurrent_traces_match_serial(self, client, censored_setup):
        from concurrent.futures import ThreadPoolExecutor

        _, tracer = censored_setup
        frags = sorted(tracer.fragments_.fragments, key=lambda f: f.x0[0])
        queries = [
            {"start_fragment": frags[i].id, "end_fragment": frags[j].id}
            for i in range(2) for j in range(2)
        ]
        serial = [client.post("/trace", json=q).json() for q in queries]
        with ThreadPoolExecutor(max_workers=4) as pool:
            parallel = list(pool.map(lambda q: client.post("/trace", json=q).json(), queries))
        for s, p in zip(serial, parallel):
            assert s["states"] == p["states"]
            assert s["weight"] == p["weight"]
        # stored ids are unique even under concurrency
        listed = client.get("/traces").json()["traces"]
        ids = [t["id"] for t in listed]
        assert len(ids) == len(set(ids))


class TestPick:
    def test_pick_on_endpoint(self, client, censored_setup):
        _, tracer = censored_setup
        frag = tracer.fragments_.fragments[0]
        resp = client.post("/pick", json={
            "x_px": int(frag.e0[0]), "y_px": int(frag.e0[1]), "axis": "z",
        })
        assert resp.status_code == 200
        body = resp.json()
        assert body["fragment"] == frag.id
        assert body["distance_px"] == 0.0

    def test_pick_far_away_404(self, client):
        resp = client.post("/pick", json={"x_px": 500.0, "y_px": 500.0, "axis": "z"})
        assert resp.status_code == 404

    def test_pick_bad_axis_400(self, client):
        resp = client.post("/pick", json={"x_px": 0, "y_px": 0, "axis": "w"})
        assert resp.status_code == 400
