"""FCR activation, envelope and drift endpoints"""

from typing import Any, Dict

from fastapi import APIRouter

from app.models.api import ActivationRequest, DriftRequest, EnvelopeRequest, EnvelopeResponse
from app.services.fcr_physics import energy_drift, fcr_activation, intraday_duration, power_bounds, soc_envelope

router = APIRouter()


@router.post("/activation")
async def activation(request: ActivationRequest) -> Dict[str, Any]:
    power = fcr_activation(request.delta_f_hz, request.p_bid_mw)
    return {"power_mw": [float(p) for p in power]}


@router.post("/envelope", response_model=EnvelopeResponse)
async def envelope(request: EnvelopeRequest):
    lo, hi = soc_envelope(request.spec, request.fcr_bid_mw)
    p_lo, p_hi = power_bounds(request.spec, request.fcr_bid_mw)
    return EnvelopeResponse(
        soc_lo_mwh=lo,
        soc_hi_mwh=hi,
        power_lo_mw=p_lo,
        power_hi_mw=p_hi,
        duration_h=intraday_duration(request.spec, request.fcr_bid_mw),
    )


@router.post("/drift")
async def drift(request: DriftRequest) -> Dict[str, Any]:
    value = energy_drift(request.samples_hz, request.p_bid_mw, request.spec, request.duration_h)
    return {"drift_mwh": value}
