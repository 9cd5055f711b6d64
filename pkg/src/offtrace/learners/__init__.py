from .base import ALGORITHMS, GRADIENT, LEAST_SQUARES, TWO_TIMESCALE, Hyper, Learner, make_learner
from .gradient import GBRM, GTD2, TD, TDC
from .least_squares import BRM, FPKF, LSPE, LSTD

__all__ = [
    "ALGORITHMS", "GRADIENT", "LEAST_SQUARES", "TWO_TIMESCALE", "Hyper", "Learner",
    "make_learner", "LSTD", "LSPE", "FPKF", "BRM", "TD", "TDC", "GTD2", "GBRM",
]
