from enum import Enum


class SolutionKind(Enum):
    LOCAL_MIN = "LocalMin"
    MOUNTAIN_PASS = "MountainPass"

    @classmethod
    def from_cli(cls, kind: str) -> "SolutionKind | None":
        """Map the --kind flag (local|mp) to a solution kind"""
        return {"local": cls.LOCAL_MIN, "mp": cls.MOUNTAIN_PASS}.get(kind.strip().lower())
