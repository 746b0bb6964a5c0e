from enum import Enum


class GridSpacing(Enum):
    UNIFORM = "uniform"
    GRADED = "graded"

    @classmethod
    def from_tag(cls, tag: str) -> "GridSpacing | None":
        for member in cls:
            if member.value == tag.strip().lower():
                return member
        return None

    @property
    def code(self) -> int:
        # byte stored in the kernel cache header
        return 0 if self is GridSpacing.UNIFORM else 1

    @classmethod
    def from_code(cls, code: int) -> "GridSpacing":
        return cls.UNIFORM if code == 0 else cls.GRADED
