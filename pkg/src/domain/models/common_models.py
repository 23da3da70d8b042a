from enum import Enum


class DistributionKind(str, Enum):
    EXPONENTIAL = "exp"
    GAMMA = "gamma"
    BETA = "beta"
    UNIFORM = "uniform"
    POISSON = "poisson"
    DEGENERATE = "degenerate"
    TILTED = "tilted"

class MeasureKind(str, Enum):
    BASE_P = "base-p"
    DERIVED_Q = "derived-q"
    CONDITIONAL_P = "conditional-p"
    CONDITIONAL_Q = "conditional-q"

class EventKind(str, Enum):
    COUNT_AT_MOST = "count-at-most"
    AGGREGATE_AT_MOST = "aggregate-at-most"
    THETA_IN = "theta-in"
    WHOLE_SPACE = "whole-space"

class ProcessKind(str, Enum):
    V_CHANGE = "v-change"          # S_t - t g(theta) E_P[X e^gamma(X)]
    Y_BASE = "y-base"              # S_t - t h(theta) E_P[X]
    RAW_AGGREGATE = "raw-aggregate"
    DENSITY = "density"            # likelihood ratio M_t
    CONSTANT = "constant"

class SurplusKind(str, Enum):
    V_CHANGE = "v-change"
    Y_BASE = "y-base"

class Verdict(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"
    INFO = "info"

class PremiumMethod(str, Enum):
    CLOSED_FORM = "closed-form"
    QUADRATURE = "quadrature"

class OutputFormat(str, Enum):
    CSV = "csv"
    JSON_LINES = "jsonl"

class JobKind(str, Enum):
    SIMULATE = "simulate"
    VALIDATE = "validate"
    DERIVE_Q = "derive-q"
    VERIFY_REWEIGHTING = "verify-reweighting"
    VERIFY_MARTINGALE = "verify-martingale"
    DEGENERACY = "degeneracy"
    SINGULARITY = "singularity"
    PREMIUM = "premium"
