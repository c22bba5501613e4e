from typing import List

from pydantic import BaseModel, Field


class DemoCheck(BaseModel):
    name: str
    claim: str = Field(..., description="Formula or statement the check reproduces")
    passed: bool
    detail: str = Field("", description="Measured values behind the verdict")


class DemoReport(BaseModel):
    checks: List[DemoCheck]
    exercised: List[str] = Field(default_factory=list, description="Library operations the battery called")

    @property
    def passed(self) -> bool:
        return all(check.passed for check in self.checks)
