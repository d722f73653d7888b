"""Comparator table shared by threshold rules and mock rule predicates."""

import operator

COMPARATORS = {
    "<": operator.lt,
    ">": operator.gt,
    "<=": operator.le,
    ">=": operator.ge,
    "=": operator.eq,
}


def compare(op: str, lhs: float, rhs: float) -> bool:
    try:
        fn = COMPARATORS[op]
    except KeyError:
        raise ValueError(f"unknown comparator {op!r}; expected one of {sorted(COMPARATORS)}")
    return fn(lhs, rhs)
