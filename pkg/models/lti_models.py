from typing import List

from pydantic import BaseModel, Field


class MinimalityReport(BaseModel):
    """Reachability/observability ranks of a linear triple"""
    n: int = Field(..., description="State dimension")
    reach_rank: int = Field(..., description="Numerical rank of [b, Ab, ..., A^(n-1) b]")
    obs_rank: int = Field(..., description="Numerical rank of [c; cA; ...; cA^(n-1)]")
    minimal: bool = Field(..., description="Both ranks equal n")


class SimilarityCertificate(BaseModel):
    """Change of coordinates T with (T A1 T^-1, T b1, c1 T^-1) = (A2, b2, c2)"""
    T: List[List[float]]
    residual: float = Field(..., description="Sum of the Frobenius norms of the three mismatches")
