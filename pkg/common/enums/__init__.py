from common.enums.cardano_variant_enum import CardanoVariant
from common.enums.grid_spacing_enum import GridSpacing
from common.enums.morse_class_enum import MorseClass
from common.enums.regime_enum import Regime
from common.enums.solution_kind_enum import SolutionKind

__all__ = ["Regime", "MorseClass", "GridSpacing", "SolutionKind", "CardanoVariant"]
