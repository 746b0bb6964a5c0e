from enum import Enum


class Regime(Enum):
    """
    Exponent regimes of the (q, p) pair against A*, B* and 2*_mu
    """

    # L2-subcritical q, L2-supercritical p
    CASE_I = "CaseI"
    CASE_II = "CaseII"

    # both exponents L2-supercritical
    CASE_III = "CaseIII"
    CASE_IV = "CaseIV"

    @classmethod
    def from_tag(cls, tag: str) -> "Regime | None":
        for member in cls:
            if member.value == tag:
                return member
        return None

    @property
    def is_mixed(self) -> bool:
        return self in (Regime.CASE_I, Regime.CASE_II)

    @property
    def is_critical(self) -> bool:
        return self in (Regime.CASE_II, Regime.CASE_IV)
