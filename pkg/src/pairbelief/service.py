"""Live elicitation HTTP service.

A session owns a seeded queue of candidate pairs drawn from the sampling
density; a human (or scripted) expert answers which configuration they prefer,
answers are appended to a per-session NDJSON event log, and a fit job runs the
estimation pipeline on the recorded comparisons. Session state is a pure
function of the event log, so killing and restarting the service — or
replaying the log elsewhere — reconstructs identical datasets and samples.
"""

from __future__ import annotations

import json
import os
import threading
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from uuid import uuid4

import numpy as np
from fastapi import FastAPI, HTTPException, Query
from scipy.stats import gaussian_kde
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from .comparisons import UNIT_VARIANCE_S, ComparisonDataset, RUMConfig, write_dataset, write_points, read_points
from .density import DensityEvalConfig, model_log_density
from .sampling import default_preset, fast_2d_preset, scaled_ald_run
from .scoremodel import ScoreModelConfig, hidden_width_for_dim, iterations_for_dim, load_model, save_model, train
from .targets import BoxDomain, uniform_box
from .tempering import build_field_estimate, load_ratio, save_ratio, train_ratio_net
from .sampling import ald_run, marginal_score_fn

FORMAT = "elicit-v1"
MIN_FIT_ANSWERS = 50
_PAIR_CHUNK = 256


class SessionSpec(BaseModel):
    lower: list[float] = Field(min_length=1, max_length=16)
    upper: list[float] = Field(min_length=1, max_length=16)
    labels: list[str] | None = None
    units: list[str] | None = None
    s: float = UNIT_VARIANCE_S
    rum: str = "bradley-terry"
    seed: int = 0


class AnswerBody(BaseModel):
    pair_id: int
    winner: str  # "first" | "second"


class FitBody(BaseModel):
    iterations: int | None = None
    hidden: int | None = None
    mask_prob: float = 0.5
    preset: str = "default"  # "default" | "fast-2d"
    n_samples: int = 2000
    seed: int = 0


class Session:
    def __init__(self, sid: str, spec: SessionSpec, data_dir: Path, fresh: bool):
        if len(spec.lower) != len(spec.upper):
            raise ValueError("lower/upper length mismatch")
        self.id = sid
        self.spec = spec
        self.domain = BoxDomain(np.asarray(spec.lower, float), np.asarray(spec.upper, float))
        d = self.domain.d
        self.labels = spec.labels or [f"x{i + 1}" for i in range(d)]
        self.units = spec.units or [""] * d
        if len(self.labels) != d or len(self.units) != d:
            raise ValueError("labels/units length must match the dimension")
        self.rum = RUMConfig(model=spec.rum, s=spec.s)
        self.dist = uniform_box(self.domain)
        self.log_path = data_dir / f"{sid}.ndjson"
        self.art_dir = data_dir / sid
        self.lock = threading.Lock()
        self._pair_rng = np.random.default_rng(spec.seed)
        self._pairs: list[tuple[np.ndarray, np.ndarray]] = []
        self.winners: list[np.ndarray] = []
        self.losers: list[np.ndarray] = []
        self.fit_status = "empty"
        self.fit_error: str | None = None
        self._fit_cfg: FitBody | None = None
        self._model = None
        self._field = None
        self._grid_cache: dict[tuple[int, int], dict] = {}
        self._ensure_pairs(_PAIR_CHUNK)
        if fresh:
            self._append_event({"type": "created", "spec": spec.model_dump()})
        if (self.art_dir / "samples.csv").exists():
            self.fit_status = "ready"
        elif self.winners:
            self.fit_status = "empty"

    # -- pair stream --------------------------------------------------------

    def _ensure_pairs(self, upto: int) -> None:
        while len(self._pairs) <= upto:
            a = self.dist.sample(_PAIR_CHUNK, self._pair_rng)
            b = self.dist.sample(_PAIR_CHUNK, self._pair_rng)
            self._pairs.extend(zip(a, b))

    def current_pair(self):
        idx = len(self.winners)
        self._ensure_pairs(idx)
        return idx, self._pairs[idx]

    # -- event log ----------------------------------------------------------

    def _append_event(self, event: dict) -> None:
        record = json.dumps({"v": 1, **event}, sort_keys=True)
        with open(self.log_path, "a") as f:
            f.write(record + "\n")
            f.flush()
            os.fsync(f.fileno())

    def apply_answer(self, pair_id: int, winner: str, log: bool = True) -> int:
        if winner not in ("first", "second"):
            raise ValueError("winner must be 'first' or 'second'")
        idx, (a, b) = self.current_pair()
        if pair_id != idx:
            raise StaleAnswer(f"pair {pair_id} is not the pending pair (expected {idx})")
        if winner == "first":
            self.winners.append(a)
            self.losers.append(b)
        else:
            self.winners.append(b)
            self.losers.append(a)
        if log:
            self._append_event({"type": "answer", "pair_id": pair_id, "winner": winner})
        return len(self.winners)

    def dataset(self) -> ComparisonDataset:
        w = np.asarray(self.winners)
        l = np.asarray(self.losers)
        return ComparisonDataset(
            winners=w, losers=l,
            winners_u=self.dist.rosenblatt_forward(w),
            losers_u=self.dist.rosenblatt_forward(l),
            rum=self.rum, lambda_kind="uniform-box", seed=self.spec.seed,
        )

    # -- fitting ------------------------------------------------------------

    def run_fit(self, cfg: FitBody) -> None:
        try:
            ds = self.dataset()
            d = ds.d
            self.art_dir.mkdir(parents=True, exist_ok=True)
            write_dataset(self.art_dir / "dataset.csv", ds)
            sc = ScoreModelConfig(
                d=d,
                hidden=cfg.hidden or hidden_width_for_dim(d),
                iterations=cfg.iterations or iterations_for_dim(d),
                mask_prob=cfg.mask_prob,
                seed=cfg.seed,
            )
            model, _ = train(ds, sc)
            save_model(str(self.art_dir / "score.pbnet"), model)
            ratio = train_ratio_net(ds, s=self.rum.s, hidden=sc.hidden, seed=cfg.seed)
            save_ratio(str(self.art_dir / "ratio.pbnet"), ratio, self.rum.s)

            ald = fast_2d_preset() if cfg.preset == "fast-2d" else default_preset()
            support = ald_run(marginal_score_fn(model), ald, 2000 * d, d,
                              seed=cfg.seed + 3, reflect_box=(0.0, 1.0))
            log_pw = model_log_density(model, support, DensityEvalConfig(seed=cfg.seed + 4))
            np.savez(self.art_dir / "mwd.npz", points=support, log_pw=log_pw)
            field = build_field_estimate(ratio, support, log_pw, s=self.rum.s)

            samples_u = scaled_ald_run(model, field.interpolated(), ald,
                                       cfg.n_samples, seed=cfg.seed + 1)
            write_points(self.art_dir / "samples.csv", self.dist.rosenblatt_inverse(samples_u))
            (self.art_dir / "fitmeta.json").write_text(
                json.dumps({"format": FORMAT, "config": cfg.model_dump()}, sort_keys=True, indent=2))
            self._model, self._field = model, field
            self._grid_cache.clear()
            self.fit_status = "ready"
        except Exception as exc:  # surfaced via /status
            self.fit_error = f"{type(exc).__name__}: {exc}"
            self.fit_status = "failed"

    def _load_artifacts(self):
        if self._model is None:
            self._model = load_model(str(self.art_dir / "score.pbnet"))
            ratio, s = load_ratio(str(self.art_dir / "ratio.pbnet"))
            with np.load(self.art_dir / "mwd.npz") as z:
                self._field = build_field_estimate(ratio, z["points"], z["log_pw"], s=s)
        return self._model, self._field

    def samples(self, n: int) -> np.ndarray:
        pts = read_points(self.art_dir / "samples.csv")
        return pts[:n]

    def grids(self, ax1: int, ax2: int, res: int = 64) -> dict:
        key = (ax1, ax2)
        if key in self._grid_cache:
            return self._grid_cache[key]
        _, field = self._load_artifacts()
        xs = np.linspace(self.domain.lower[ax1], self.domain.upper[ax1], res)
        ys = np.linspace(self.domain.lower[ax2], self.domain.upper[ax2], res)
        mesh = np.meshgrid(xs, ys, indexing="ij")
        # the density panel shows the elicited belief, so it is built from the
        # de-tempered belief samples (their (ax1, ax2) marginal, Gaussian KDE);
        # the model's own density is the winner density, which is far too
        # blurred to render the belief
        proj = read_points(self.art_dir / "samples.csv")[:, [ax1, ax2]]
        kde = gaussian_kde(proj.T)
        dens = kde(np.vstack([mesh[0].ravel(), mesh[1].ravel()]))
        log_dens = np.log(np.maximum(dens, 1e-300))
        pts = np.tile((self.domain.lower + self.domain.upper) / 2, (res * res, 1))
        pts[:, ax1] = mesh[0].ravel()
        pts[:, ax2] = mesh[1].ravel()
        tau = field(self.dist.rosenblatt_forward(pts))
        grid = {
            "format": FORMAT,
            "ax1": ax1, "ax2": ax2,
            "labels": [self.labels[ax1], self.labels[ax2]],
            "xs": xs.tolist(), "ys": ys.tolist(),
            "log_density": log_dens.reshape(res, res).tolist(),
            "tau": tau.reshape(res, res).tolist(),
        }
        self._grid_cache[key] = grid
        return grid


class StaleAnswer(ValueError):
    pass


def _replay_session(log_path: Path, data_dir: Path) -> Session:
    session = None
    with open(log_path) as f:
        for line in f:
            if not line.strip():
                continue
            ev = json.loads(line)
            if ev["type"] == "created":
                session = Session(log_path.stem, SessionSpec(**ev["spec"]), data_dir, fresh=False)
            elif ev["type"] == "answer":
                if session is None:
                    raise ValueError(f"{log_path}: answer before creation")
                session.apply_answer(ev["pair_id"], ev["winner"], log=False)
    if session is None:
        raise ValueError(f"{log_path}: no creation event")
    return session


def create_app(data_dir: str | os.PathLike | None = None,
               cors_origins: list[str] | None = None,
               max_fit_workers: int = 2) -> FastAPI:
    root = Path(data_dir or os.environ.get("PAIRBELIEF_DATA_DIR", "elicit-data"))
    root.mkdir(parents=True, exist_ok=True)
    app = FastAPI(title="pairbelief elicitation service")
    app.add_middleware(
        CORSMiddleware,
        allow_origins=cors_origins or ["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )
    sessions: dict[str, Session] = {}
    registry_lock = threading.Lock()
    pool = ThreadPoolExecutor(max_workers=max_fit_workers)

    for log_path in sorted(root.glob("*.ndjson")):
        try:
            s = _replay_session(log_path, root)
            sessions[s.id] = s
        except (ValueError, json.JSONDecodeError) as exc:
            print(f"skipping unreadable session log {log_path}: {exc}")

    def _get(sid: str) -> Session:
        s = sessions.get(sid)
        if s is None:
            raise HTTPException(status_code=404, detail="unknown session")
        return s

    @app.post("/sessions")
    def create_session(spec: SessionSpec):
        try:
            sid = uuid4().hex[:12]
            session = Session(sid, spec, root, fresh=True)
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        with registry_lock:
            sessions[sid] = session
        return {"format": FORMAT, "id": sid, "dim": session.domain.d,
                "labels": session.labels, "units": session.units}

    @app.get("/sessions/{sid}/pair")
    def get_pair(sid: str):
        s = _get(sid)
        with s.lock:
            idx, (a, b) = s.current_pair()
        return {"format": FORMAT, "pair_id": idx,
                "first": a.tolist(), "second": b.tolist(),
                "labels": s.labels, "units": s.units, "answers": idx}

    @app.post("/sessions/{sid}/answer")
    def post_answer(sid: str, body: AnswerBody):
        s = _get(sid)
        try:
            with s.lock:
                n = s.apply_answer(body.pair_id, body.winner)
        except StaleAnswer as exc:
            raise HTTPException(status_code=409, detail=str(exc))
        except ValueError as exc:
            raise HTTPException(status_code=422, detail=str(exc))
        return {"format": FORMAT, "answers": n}

    @app.post("/sessions/{sid}/fit")
    def post_fit(sid: str, body: FitBody | None = None):
        s = _get(sid)
        body = body or FitBody()
        with s.lock:
            if s.fit_status == "fitting":
                raise HTTPException(status_code=409, detail="fit already running")
            if len(s.winners) < MIN_FIT_ANSWERS:
                raise HTTPException(
                    status_code=422,
                    detail=f"need at least {MIN_FIT_ANSWERS} answers, have {len(s.winners)}")
            s.fit_status = "fitting"
            s.fit_error = None
            s._fit_cfg = body
        pool.submit(s.run_fit, body)
        return {"format": FORMAT, "status": "fitting"}

    @app.get("/sessions/{sid}/status")
    def get_status(sid: str):
        s = _get(sid)
        return {"format": FORMAT, "answers": len(s.winners),
                "fit_status": s.fit_status, "fit_error": s.fit_error,
                "dim": s.domain.d, "labels": s.labels, "units": s.units,
                "lower": s.domain.lower.tolist(), "upper": s.domain.upper.tolist(),
                "min_fit_answers": MIN_FIT_ANSWERS}

    def _require_ready(s: Session):
        if s.fit_status != "ready":
            raise HTTPException(status_code=409, detail=f"fit not ready (status: {s.fit_status})")

    @app.get("/sessions/{sid}/samples")
    def get_samples(sid: str, n: int = Query(default=1000, ge=0)):
        s = _get(sid)
        _require_ready(s)
        return {"format": FORMAT, "points": s.samples(n).tolist()}

    @app.get("/sessions/{sid}/grids")
    def get_grids(sid: str, ax1: int = 0, ax2: int = 1):
        s = _get(sid)
        _require_ready(s)
        d = s.domain.d
        if d == 1:
            ax1 = ax2 = 0
        if not (0 <= ax1 < d and 0 <= ax2 < d) or (d > 1 and ax1 == ax2):
            raise HTTPException(status_code=422, detail="invalid axis pair")
        return s.grids(ax1, ax2)

    app.state.sessions = sessions
    app.state.data_dir = root
    return app
