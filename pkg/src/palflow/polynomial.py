"""Sparse multivariate polynomials with analytic gradients."""
from __future__ import annotations

from typing import Iterable

import numpy as np


class Polynomial:
    """``sum_k coeff_k * prod_j x_j ** exponents_k[j]``.

    Usable anywhere an oracle is expected: it exposes ``value``, ``grad``,
    ``name`` and ``is_affine``.
    """

    def __init__(self, n: int, terms: Iterable[tuple[float, Iterable[int]]], name: str = ""):
        self.n = int(n)
        self.name = name
        terms = [(float(c), tuple(int(e) for e in exps)) for c, exps in terms]
        for _, exps in terms:
            if len(exps) != self.n:
                raise ValueError(f"exponent list has length {len(exps)}, expected {self.n}")
            if any(e < 0 for e in exps):
                raise ValueError("exponents must be nonnegative integers")
        self.terms = terms
        self._coeffs = np.array([c for c, _ in terms], dtype=float)
        self._exps = np.array([e for _, e in terms], dtype=float).reshape(len(terms), self.n)
        # derivative terms flattened across coordinates, tagged with their coordinate
        d_coeffs, d_exps, d_idx = [], [], []
        for c, exps in terms:
            for j, e in enumerate(exps):
                if e > 0:
                    de = list(exps)
                    de[j] -= 1
                    d_coeffs.append(c * e)
                    d_exps.append(de)
                    d_idx.append(j)
        self._dcoeffs = np.array(d_coeffs, dtype=float)
        self._dexps = np.array(d_exps, dtype=float).reshape(len(d_coeffs), self.n)
        self._didx = np.array(d_idx, dtype=int)
        self.degree = int(self._exps.sum(axis=1).max()) if terms else 0
        self.is_affine = self.degree <= 1

    def value(self, x) -> float:
        if not self.terms:
            return 0.0
        x = np.asarray(x, dtype=float)
        return float(self._coeffs @ np.prod(x ** self._exps, axis=1))

    def grad(self, x) -> np.ndarray:
        if self._dcoeffs.size == 0:
            return np.zeros(self.n)
        x = np.asarray(x, dtype=float)
        mono = self._dcoeffs * np.prod(x ** self._dexps, axis=1)
        return np.bincount(self._didx, weights=mono, minlength=self.n)

    def __call__(self, x) -> float:
        return self.value(x)

    def to_json(self) -> list[dict]:
        return [{"coeff": c, "exponents": list(e)} for c, e in self.terms]

    def __repr__(self) -> str:
        return f"Polynomial(n={self.n}, terms={len(self.terms)}, name={self.name!r})"


def monomial(n: int, coeff: float, **powers: int) -> tuple[float, tuple[int, ...]]:
    """Build one term; ``monomial(4, 2.0, x1=2)`` is ``2 x_1^2`` (1-based names)."""
    exps = [0] * n
    for key, p in powers.items():
        exps[int(key.lstrip("x")) - 1] = p
    return coeff, tuple(exps)


class PolySystem:
    """Evaluate many polynomials, each acting on a slice of one long vector.

    ``parts`` is a list of ``(polynomial, offset)``; polynomial ``k`` reads
    ``x[offset : offset + polynomial.n]``. :meth:`evaluate` returns all
    values and the dense Jacobian in one vectorized pass.
    """

    def __init__(self, parts: list[tuple[Polynomial, int]], dim: int):
        self.dim = int(dim)
        self.count = len(parts)
        terms = []   # (owner, coeff, [(var, exp), ...])
        dterms = []  # (owner, coord, coeff, [(var, exp), ...])
        for owner, (poly, off) in enumerate(parts):
            for c, exps in poly.terms:
                factors = [(off + j, e) for j, e in enumerate(exps) if e > 0]
                terms.append((owner, c, factors))
                for j, e in enumerate(exps):
                    if e > 0:
                        df = [(off + jj, ee - (jj == j)) for jj, ee in enumerate(exps)
                              if ee - (jj == j) > 0]
                        dterms.append((owner, off + j, c * e, df))
        self._val = self._compile([(o, c, f) for o, c, f in terms])
        self._val_owner = np.array([o for o, _, _ in terms], dtype=int)
        self._grad = self._compile([(o, c, f) for o, _, c, f in dterms])
        self._grad_slot = np.array([o * self.dim + j for o, j, _, _ in dterms], dtype=int)

    @staticmethod
    def _compile(items):
        coeffs = np.array([c for _, c, _ in items], dtype=float)
        var, exp, starts = [], [], []
        for _, _, factors in items:
            starts.append(len(var))
            # constants get a dummy factor x_0 ** 0 so every term owns a segment
            for v, e in (factors or [(0, 0)]):
                var.append(v)
                exp.append(e)
        return coeffs, np.array(var, dtype=int), np.array(exp, dtype=float), np.array(starts, dtype=int)

    @staticmethod
    def _monomials(compiled, x):
        coeffs, var, exp, starts = compiled
        if coeffs.size == 0:
            return coeffs
        return coeffs * np.multiply.reduceat(x[var] ** exp, starts)

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        x = np.asarray(x, dtype=float)
        vals = np.bincount(self._val_owner, weights=self._monomials(self._val, x),
                           minlength=self.count)
        jac = np.bincount(self._grad_slot, weights=self._monomials(self._grad, x),
                          minlength=self.count * self.dim).reshape(self.count, self.dim)
        return vals, jac
