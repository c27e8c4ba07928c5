"""Request/response models for the HTTP API."""
from __future__ import annotations

from pydantic import BaseModel, Field


class OverridesModel(BaseModel):
    """Refinement controls: boundary index -> smoothing radius (frames) and
    edit token index -> closure length (frames)."""

    boundary_radius: dict[int, int] = Field(default_factory=dict)
    closures: dict[int, int] = Field(default_factory=dict)

    def as_dict(self) -> dict:
        return {"boundary_radius": self.boundary_radius, "closures": self.closures}


class CreateSessionRequest(BaseModel):
    style: str = "neutral"


class SessionResponse(BaseModel):
    session_id: str
    style: str
    styles: list[str]
    results: list[dict] = Field(default_factory=list)


class EditRequest(BaseModel):
    text: str
    style: str | None = None
    overrides: OverridesModel | None = None


class EditResponse(BaseModel):
    result_id: str


class RefineRequest(BaseModel):
    overrides: OverridesModel


class ErrorResponse(BaseModel):
    detail: str
