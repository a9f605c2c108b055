"""Drive a live elicitation session with a scripted expert.

Starts the HTTP service in-process, creates a session, answers pairs with a
Bradley-Terry bot whose belief is the Onemoon2D density, triggers a fit, and
pulls back samples and the density/field heatmaps - exactly what the browser
UI does, but scripted.

Run:  python3 demos/04_live_session_bot.py
"""

import tempfile
import time

import numpy as np
from fastapi.testclient import TestClient

from pairbelief import RUMConfig, UNIT_VARIANCE_S, choice_prob, get_target
from pairbelief.service import create_app


def main():
    target = get_target("onemoon2d")
    rum = RUMConfig(model="bradley-terry", s=UNIT_VARIANCE_S)
    rng = np.random.default_rng(0)

    with tempfile.TemporaryDirectory() as tmp:
        client = TestClient(create_app(data_dir=tmp))
        sid = client.post("/sessions", json={
            "lower": [-3.0, -3.0], "upper": [3.0, 3.0],
            "labels": ["x1", "x2"], "seed": 0,
        }).json()["id"]
        print(f"session {sid}: answering 400 pairs with a scripted expert...")

        for _ in range(400):
            pair = client.get(f"/sessions/{sid}/pair").json()
            du = (target.log_density(np.array([pair["first"]]))
                  - target.log_density(np.array([pair["second"]])))[0]
            winner = "first" if rng.random() < choice_prob(rum, du) else "second"
            client.post(f"/sessions/{sid}/answer",
                        json={"pair_id": pair["pair_id"], "winner": winner})

        print("fitting (reduced iterations for demo speed)...")
        client.post(f"/sessions/{sid}/fit",
                    json={"iterations": 1500, "preset": "fast-2d", "n_samples": 500})
        while client.get(f"/sessions/{sid}/status").json()["fit_status"] == "fitting":
            time.sleep(1.0)
        status = client.get(f"/sessions/{sid}/status").json()
        print(f"fit status: {status['fit_status']}")

        grids = client.get(f"/sessions/{sid}/grids").json()
        dens = np.asarray(grids["log_density"])
        i, j = np.unravel_index(np.argmax(dens), dens.shape)
        print(f"density heatmap argmax at ({grids['xs'][i]:.2f}, {grids['ys'][j]:.2f})")

        pts = np.asarray(client.get(f"/sessions/{sid}/samples",
                                    params={"n": 500}).json()["points"])
        print(f"pulled {len(pts)} belief samples; mean = "
              f"({pts[:, 0].mean():.2f}, {pts[:, 1].mean():.2f})")


if __name__ == "__main__":
    main()
