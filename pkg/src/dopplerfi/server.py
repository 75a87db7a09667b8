"""FastAPI web service for dopplerfi experiments.

Endpoints::

    GET  /health          Health check.
    GET  /presets         List available experiment presets.
    POST /run             Run trials for a preset or uploaded INI, receive metrics JSON.
    POST /sweep           Run a parameter sweep, receive the CSV table.
    POST /legacy-impact   Measure legacy throughput loss, receive metrics JSON.

Run::

    uvicorn dopplerfi.server:app --host 0.0.0.0 --port 8000
"""

from __future__ import annotations

import math
from typing import Optional
from urllib.parse import quote

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from fastapi.responses import Response

from dopplerfi import __version__
from dopplerfi.config import parse_config
from dopplerfi.errors import DopplerFiError
from dopplerfi.harness import ExperimentRunner, Metrics
from dopplerfi.presets import ExperimentConfig, PresetManager

app = FastAPI(
    title="dopplerfi",
    description="Cross-technology Doppler side-channel simulator",
    version=__version__,
)

CSV_MEDIA_TYPE = "text/csv"


def _content_disposition(filename: str) -> str:
    """Build Content-Disposition header, RFC 5987 for non-ASCII names."""
    try:
        filename.encode("ascii")
        return f'attachment; filename="{filename}"'
    except UnicodeEncodeError:
        encoded = quote(filename)
        return f"attachment; filename*=UTF-8''{encoded}"


async def _experiment(
    preset: str,
    config: Optional[UploadFile],
    trials: Optional[int],
    seed: Optional[int],
) -> ExperimentConfig:
    try:
        if config is not None:
            raw = await config.read()
            cfg = parse_config(raw.decode("utf-8"), source=config.filename or "<upload>")
        else:
            cfg = PresetManager(preset).config
        if trials is not None:
            cfg.trials = trials
        if seed is not None:
            cfg.seed = seed
        return cfg.validate()
    except (DopplerFiError, UnicodeDecodeError) as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _metrics_json(cfg: ExperimentConfig, metrics: Metrics) -> dict[str, object]:
    row = {
        k: (None if isinstance(v, float) and math.isnan(v) else v)
        for k, v in metrics.as_row().items()
    }
    return {"name": cfg.name, "direction": cfg.direction.value, "metrics": row}


@app.get("/health")
async def health() -> dict[str, str]:
    """Health check endpoint."""
    return {"status": "ok", "version": __version__}


@app.get("/presets")
async def list_presets() -> dict[str, list[str]]:
    """List available experiment presets."""
    return {"presets": PresetManager.PRESETS}


@app.post("/run")
async def run(
    preset: str = Form("w2b"),
    config: Optional[UploadFile] = File(None),
    trials: Optional[int] = Form(None),
    seed: Optional[int] = Form(None),
) -> dict[str, object]:
    """Run Monte-Carlo trials and return pooled metrics.

    - **preset**: Preset name, ignored when **config** is uploaded
    - **config**: INI scenario file
    - **trials** / **seed**: Optional overrides
    """
    cfg = await _experiment(preset, config, trials, seed)
    metrics, _ = ExperimentRunner(cfg).run()
    return _metrics_json(cfg, metrics)


@app.post("/sweep")
async def run_sweep(
    preset: str = Form("mobility"),
    config: Optional[UploadFile] = File(None),
    trials: Optional[int] = Form(None),
    seed: Optional[int] = Form(None),
) -> Response:
    """Sweep the configured axis and return the CSV table."""
    cfg = await _experiment(preset, config, trials, seed)
    if cfg.sweep.axis is None or not cfg.sweep.values:
        raise HTTPException(status_code=400, detail="scenario has no sweep axis")
    csv_text = ExperimentRunner(cfg).sweep_csv()
    return Response(
        content=csv_text,
        media_type=CSV_MEDIA_TYPE,
        headers={"Content-Disposition": _content_disposition(f"{cfg.name}_sweep_{cfg.sweep.axis}.csv")},
    )


@app.post("/legacy-impact")
async def run_legacy_impact(
    preset: str = Form("legacy_wifi"),
    config: Optional[UploadFile] = File(None),
    trials: Optional[int] = Form(None),
    seed: Optional[int] = Form(None),
) -> dict[str, object]:
    """Legacy decode of shifted packets against an unshifted baseline."""
    cfg = await _experiment(preset, config, trials, seed)
    return _metrics_json(cfg, ExperimentRunner(cfg).legacy_impact())
