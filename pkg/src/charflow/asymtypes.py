"""Truncated discrete asymptotic types and the trace-cascade ordering.

An asymptotic type collects the admissible (exponent, log-power) pairs
(p, k) of a conormal expansion sum x^{-p} log^k x * u_pk(t, y).  Only the
finite window 1/2 - delta - theta < Re p < 1/2 - delta is stored; the
window bound theta is part of the type, and no exponent may sit on the
line Re p = 1/2 - delta - theta.  Within the window the type is closed
downward: p stored implies p - 1 stored (with multiplicity at least as
large) whenever p - 1 still lies inside the window.

Pairs are ordered for the cascade so that every pair comes after all the
pairs it can depend on: Re p descending, then k descending for equal p;
distinct exponents with equal real part are independent and tie-broken by
ascending imaginary part.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    ClosureViolationError,
    ExponentBelowCutoffError,
    ExponentOnCutoffLineError,
    ExponentTooLargeError,
    ValidationError,
)

#: absolute tolerance for identifying two singular exponents
EXPONENT_TOL = 1e-12


@dataclass(frozen=True)
class AsymptoticType:
    """Validated truncation of a discrete asymptotic type.

    entries maps the singular exponent p to its multiplicity m_p, meaning
    (p, k) is admissible for 0 <= k < m_p.  Use :func:`validate` to build.
    """

    delta: float
    theta: float
    entries: tuple  # ordered tuple of (complex p, int mult)

    def multiplicity(self, p: complex) -> int:
        for q, m in self.entries:
            if abs(q - p) <= EXPONENT_TOL:
                return m
        return 0

    def pairs(self):
        return [(p, k) for p, m in self.entries for k in range(m)]

    def __len__(self):
        return sum(m for _, m in self.entries)

    @property
    def exponents(self):
        return [p for p, _ in self.entries]

    @property
    def window(self):
        return (0.5 - self.delta - self.theta, 0.5 - self.delta)

    def is_conjugation_closed(self) -> bool:
        return all(self.multiplicity(np.conj(p)) == m for p, m in self.entries)

    def to_config(self) -> dict:
        return {
            "delta": self.delta,
            "theta": self.theta,
            "entries": [
                {"re": float(p.real), "im": float(p.imag), "mult": int(m)}
                for p, m in self.entries
            ],
        }


def _canonical(entries) -> tuple:
    return tuple(
        sorted(entries, key=lambda pm: (-pm[0].real, pm[0].imag))
    )


def validate(entries, delta: float, cutoff: float) -> AsymptoticType:
    """Validate a multiplicity map against the window and closure rules.

    entries: mapping p -> m_p or iterable of (p, m_p) with m_p >= 1.
    """
    if cutoff < 0:
        raise ValidationError("cutoff theta must be >= 0")
    items = entries.items() if hasattr(entries, "items") else list(entries)
    cleaned = []
    for p, m in items:
        p = complex(p)
        m = int(m)
        if m < 1:
            raise ValidationError(f"multiplicity for {p} must be >= 1")
        cleaned.append((p, m))
    # merge exponents equal within tolerance
    merged: list = []
    for p, m in cleaned:
        for i, (q, mq) in enumerate(merged):
            if abs(q - p) <= EXPONENT_TOL:
                merged[i] = (q, max(m, mq))
                break
        else:
            merged.append((p, m))

    upper = 0.5 - delta
    lower = 0.5 - delta - cutoff
    for p, m in merged:
        if p.real >= upper - EXPONENT_TOL:
            raise ExponentTooLargeError(
                f"Re {p} >= 1/2 - delta = {upper}")
        if abs(p.real - lower) <= EXPONENT_TOL:
            raise ExponentOnCutoffLineError(
                f"{p} lies on the cutoff line Re z = {lower}")
        if p.real < lower:
            raise ExponentBelowCutoffError(
                f"Re {p} < 1/2 - delta - theta = {lower}")

    atype = AsymptoticType(float(delta), float(cutoff), _canonical(merged))
    for p, m in atype.entries:
        if (p - 1).real > lower + EXPONENT_TOL:
            m_shift = atype.multiplicity(p - 1)
            if m_shift == 0:
                raise ClosureViolationError(
                    f"{p - 1} missing inside the window (needed by {p})")
            if m_shift < m:
                raise ClosureViolationError(
                    f"m_{p - 1} = {m_shift} < m_{p} = {m}")
    return atype


def empty_type(delta: float = 0.0, cutoff: float = 0.0) -> AsymptoticType:
    return AsymptoticType(float(delta), float(cutoff), ())


def taylor_type(n_terms: int, delta: float = 0.0, cutoff: float | None = None) -> AsymptoticType:
    """Truncation of the Taylor type {(-l, 0)}: exponents 0, -1, ..., -(n-1)."""
    if cutoff is None:
        cutoff = n_terms - 0.3 + 0.5 - delta  # window just past the last exponent
    return validate({complex(-l): 1 for l in range(n_terms)}, delta, cutoff)


def shift(atype: AsymptoticType, rho: float) -> AsymptoticType:
    """The shifted type T^rho P: (p, k) in T^rho P iff (p + rho, k) in P."""
    entries = tuple((p - rho, m) for p, m in atype.entries)
    return AsymptoticType(atype.delta + rho, atype.theta, _canonical(entries))


def cascade_order(atype: AsymptoticType):
    """All stored pairs (p, k), each after everything it may depend on."""
    return sorted(
        atype.pairs(),
        key=lambda pk: (-pk[0].real, pk[0].imag, -pk[1]),
    )


def dependencies(atype: AsymptoticType, pair):
    """Pairs (q, l) that gamma_{p,k} may couple to: q = p + j, l > k if q = p."""
    p, k = pair
    deps = []
    for q, m in atype.entries:
        j = (q - p).real
        if abs((q - p).imag) > EXPONENT_TOL:
            continue
        jr = round(j)
        if abs(j - jr) > 1e-9 or jr < 0:
            continue
        for l in range(m):
            if jr == 0 and l <= k:
                continue
            deps.append((q, l))
    return deps


def from_config(cfg: dict) -> AsymptoticType:
    entries = {
        complex(float(e["re"]), float(e.get("im", 0.0))): int(e["mult"])
        for e in cfg.get("entries", [])
    }
    return validate(entries, float(cfg["delta"]), float(cfg["theta"]))
