import json
import time

import pytest
from fastapi.testclient import TestClient

from stepgate.backends import BackendConfig
from stepgate.controller import EpisodeCaps
from stepgate.service import ServiceConfig, create_app, load_service_config


@pytest.fixture()
def app_client(demo_dir, demo_app, demo_instructions):
    config = ServiceConfig(
        instructions={i.id: i for i in demo_instructions},
        sim_app=demo_app,
        backends={
            "policy": BackendConfig(
                kind="SCRIPTED", script_path=str(demo_dir / "scripts" / "policy.txt")
            )
        },
        gamma_default=4.0,
        caps=EpisodeCaps(max_steps=10, intervention_timeout=10.0),
    )
    with TestClient(create_app(config)) as client:
        yield client


def wait_for(client, episode_id, predicate, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        snap = client.get(f"/episodes/{episode_id}").json()
        if predicate(snap):
            return snap
        time.sleep(0.01)
    raise AssertionError(f"timed out waiting for episode {episode_id}")


def start(client, gamma, instruction_id="demo-03", env="sim"):
    response = client.post(
        "/episodes",
        json={
            "instruction_id": instruction_id,
            "mode": "ADAPTIVE",
            "gamma": gamma,
            "env": env,
            "policy_backend": "policy",
        },
    )
    return response


class TestEpisodeLifecycle:
    def test_create_returns_202_with_id(self, app_client):
        response = start(app_client, gamma=0)
        assert response.status_code == 202
        assert response.json()["episode_id"]

    def test_unknown_instruction_400(self, app_client):
        response = app_client.post(
            "/episodes",
            json={"instruction_id": "nope", "policy_backend": "policy"},
        )
        assert response.status_code == 400

    def test_unknown_backend_400(self, app_client):
        response = app_client.post(
            "/episodes",
            json={"instruction_id": "demo-03", "policy_backend": "nope"},
        )
        assert response.status_code == 400

    def test_unknown_episode_404(self, app_client):
        assert app_client.get("/episodes/ep-9999").status_code == 404

    def test_device_lease_conflict_409(self, app_client):
        first = start(app_client, gamma=6, env="device")
        assert first.status_code == 202
        second = start(app_client, gamma=6, env="device")
        assert second.status_code == 409
        # release the lease: resolve pending interventions until terminal
        episode_id = first.json()["episode_id"]
        _drive_to_completion(app_client, episode_id)
        wait_for(app_client, episode_id, lambda s: s["status"].startswith("DONE"))
        third = start(app_client, gamma=0, env="device")
        assert third.status_code == 202
        _drive_to_completion(app_client, third.json()["episode_id"])

    def test_autonomous_episode_completes(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        assert snap["status"] == "DONE_COMPLETE"
        assert snap["pending_request"] is None
        assert len(snap["history"]) == 4  # goal satisfied after the filter step
        assert all(not step["intervened"] for step in snap["history"])


def _drive_to_completion(client, episode_id, timeout=5.0):
    deadline = time.time() + timeout
    while time.time() < deadline:
        snap = client.get(f"/episodes/{episode_id}").json()
        if snap["status"] not in ("RUNNING", "AWAITING_INTERVENTION"):
            return snap
        pending = snap["pending_request"]
        if pending:
            client.post(
                f"/episodes/{episode_id}/intervene",
                json={"request_id": pending["request_id"], "action": pending["proposed_action"]},
            )
        time.sleep(0.01)
    raise AssertionError("episode did not finish")


class TestIntervention:
    def test_full_interactive_loop(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        resolved = []
        while True:
            snap = app_client.get(f"/episodes/{episode_id}").json()
            if snap["status"] not in ("RUNNING", "AWAITING_INTERVENTION"):
                break
            pending = snap["pending_request"]
            if pending and pending["request_id"] not in resolved:
                response = app_client.post(
                    f"/episodes/{episode_id}/intervene",
                    json={
                        "request_id": pending["request_id"],
                        "action": pending["proposed_action"],
                    },
                )
                assert response.status_code == 204
                resolved.append(pending["request_id"])
            time.sleep(0.005)
        snap = app_client.get(f"/episodes/{episode_id}").json()
        assert snap["status"] == "DONE_COMPLETE"
        assert len(resolved) == len(snap["history"]) == 4
        assert all(step["intervened"] for step in snap["history"])

    def test_stale_request_id_409(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["pending_request"])
        response = app_client.post(
            f"/episodes/{episode_id}/intervene",
            json={"request_id": "bogus", "action": "PRESS_BACK"},
        )
        assert response.status_code == 409
        _drive_to_completion(app_client, episode_id)

    def test_duplicate_delivery_409_and_not_reexecuted(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["pending_request"])
        request_id = snap["pending_request"]["request_id"]
        action = snap["pending_request"]["proposed_action"]
        first = app_client.post(
            f"/episodes/{episode_id}/intervene",
            json={"request_id": request_id, "action": action},
        )
        assert first.status_code == 204
        second = app_client.post(
            f"/episodes/{episode_id}/intervene",
            json={"request_id": request_id, "action": action},
        )
        assert second.status_code == 409
        final = _drive_to_completion(app_client, episode_id)
        executed = [step["executed_action"] for step in final["history"]]
        assert executed.count(action) == 1

    def test_malformed_action_422(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["pending_request"])
        response = app_client.post(
            f"/episodes/{episode_id}/intervene",
            json={"request_id": snap["pending_request"]["request_id"], "action": "CLICK <x>"},
        )
        assert response.status_code == 422
        _drive_to_completion(app_client, episode_id)

    def test_intervene_unknown_episode_404(self, app_client):
        response = app_client.post(
            "/episodes/ep-404/intervene", json={"request_id": "r", "action": "PRESS_BACK"}
        )
        assert response.status_code == 404


class TestEventStream:
    def test_gamma_zero_has_no_intervention_events(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        with app_client.websocket_connect(f"/episodes/{episode_id}/events") as ws:
            events = _read_all(ws)
        kinds = [e["type"] for e in events]
        assert "intervention_requested" not in kinds
        assert kinds[-1] == "episode_finished"

    def test_sequence_strictly_increasing(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        with app_client.websocket_connect(f"/episodes/{episode_id}/events") as ws:
            events = _read_all(ws)
        seqs = [e["seq"] for e in events]
        assert seqs == sorted(set(seqs))
        assert seqs[0] == 1

    def test_gamma_six_one_intervention_event_per_step(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        _drive_to_completion(app_client, episode_id)
        with app_client.websocket_connect(f"/episodes/{episode_id}/events") as ws:
            events = _read_all(ws)
        kinds = [e["type"] for e in events]
        assert kinds.count("intervention_requested") == kinds.count("step_started") == 4

    def test_resume_from_cursor(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        with app_client.websocket_connect(f"/episodes/{episode_id}/events") as ws:
            all_events = _read_all(ws)
        cut = all_events[2]["seq"]
        with app_client.websocket_connect(f"/episodes/{episode_id}/events?from={cut}") as ws:
            resumed = _read_all(ws)
        assert [e["seq"] for e in resumed] == [e["seq"] for e in all_events if e["seq"] > cut]

    def test_unknown_episode_stream_closes(self, app_client):
        with pytest.raises(Exception):
            with app_client.websocket_connect("/episodes/ep-404/events") as ws:
                ws.receive_text()


def _read_all(ws):
    events = []
    while True:
        try:
            events.append(json.loads(ws.receive_text()))
        except Exception:
            return events


class TestScreenshotEndpoint:
    def test_serves_png_payload(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        shot_id = snap["history"][0]["screenshot_id"]
        response = app_client.get(f"/episodes/{episode_id}/screenshots/{shot_id}")
        assert response.status_code == 200
        assert response.headers["content-type"] == "image/png"
        assert response.content[:8] == b"\x89PNG\r\n\x1a\n"

    def test_unknown_screenshot_404(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        assert app_client.get(f"/episodes/{episode_id}/screenshots/zzz").status_code == 404


class TestConfigLoading:
    def test_load_service_config(self, demo_dir):
        config = load_service_config(demo_dir / "service.json")
        assert set(config.instructions) == {f"demo-{n:02d}" for n in range(1, 11)}
        assert "policy" in config.backends
        assert config.gamma_default == 4.0
        assert config.caps.max_steps == 10


class TestConsoleContract:
    """Pins the wire shapes the browser console consumes."""

    def test_intervention_event_and_snapshot_payload_keys(self, app_client):
        episode_id = start(app_client, gamma=6).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["pending_request"])
        pending = snap["pending_request"]
        assert set(pending) == {
            "request_id", "step_index", "screenshot_id", "dims",
            "proposed_action", "confidence", "plan_item",
        }
        assert set(pending["dims"]) == {"width", "height"}
        assert pending["dims"] == {"width": 1080, "height": 2400}

        with app_client.websocket_connect(f"/episodes/{episode_id}/events") as ws:
            frames = []
            while len(frames) < 4:
                frames.append(json.loads(ws.receive_text()))
        by_type = {f["type"]: f for f in frames}
        assert set(by_type["step_started"]["payload"]) == {"step_index", "screenshot_id"}
        assert set(by_type["action_proposed"]["payload"]) == {"action", "confidence"}
        assert set(by_type["decision"]["payload"]) == {"verdict"}
        assert set(by_type["intervention_requested"]["payload"]) == {
            "request_id", "step_index", "screenshot_id", "dims",
            "proposed_action", "confidence",
        }
        _drive_to_completion(app_client, episode_id)

    def test_history_rows_match_console_fields(self, app_client):
        episode_id = start(app_client, gamma=0).json()["episode_id"]
        snap = wait_for(app_client, episode_id, lambda s: s["status"] != "RUNNING")
        for row in snap["history"]:
            assert set(row) == {
                "index", "screenshot_id", "proposed_action", "confidence",
                "decision", "executed_action", "intervened",
            }
