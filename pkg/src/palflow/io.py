"""JSON problem files.

A centralized file looks like::

    {
      "name": "toy",
      "n": 2,
      "objective": [{"coeff": 1, "exponents": [2, 0]}, {"coeff": 1, "exponents": [0, 2]}],
      "inequalities": [[{"coeff": 1, "exponents": [1, 0]}, {"coeff": -1, "exponents": [0, 0]}]],
      "equalities": [],
      "T": "identity",
      "phi": {"kind": "l1"},
      "initial": {"x": [1, 1], "lambda": [1.0]},
      "eta": 1.0
    }

Polynomials are lists of ``{"coeff", "exponents"}`` terms. ``T`` is
``"identity"`` or a dense matrix; ``phi`` is one of ``zero``, ``l1``,
``indicator_zero``, ``box`` (with ``lower`` and ``upper``) or ``quadratic``
(with ``weight``).

A network file replaces ``objective``/``inequalities``/``equalities`` with
``"agents"`` (one object per agent holding those three keys) and adds
``"edges"`` as 0-based node pairs. ``T`` may then only be ``"incidence"``
and ``phi`` only ``indicator_zero``; both are implied when omitted.
Network ``initial`` entries are per agent: ``x`` and ``w`` are ``N x n``
arrays, ``lambda`` and ``nu`` are lists of per-agent lists.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np

from palflow.dynamics import PrimalDualState
from palflow.errors import ContractError, ParameterError, ProblemFileError
from palflow.network import Graph, LocalProblem, NetworkSpec, NetworkState
from palflow.polynomial import Polynomial
from palflow.problem import ProblemSpec
from palflow.prox import ProxFunction, ProxKind

CENTRAL_KEYS = {"name", "n", "objective", "inequalities", "equalities", "T", "phi",
                "initial", "eta", "known_optimum"}
NETWORK_KEYS = {"name", "n", "agents", "edges", "T", "phi", "initial", "eta", "known_optimum"}
AGENT_KEYS = {"objective", "inequalities", "equalities"}
TERM_KEYS = {"coeff", "exponents"}


@dataclass(frozen=True, eq=False)
class ProblemFile:
    """A parsed file: the problem plus any initial condition and mirror weights."""

    problem: ProblemSpec | NetworkSpec
    initial: PrimalDualState | NetworkState | None = None
    eta: float | np.ndarray | None = None
    path: str | None = None

    @property
    def is_network(self) -> bool:
        return isinstance(self.problem, NetworkSpec)


def _line_index(text: str) -> dict[tuple, int]:
    """Map every JSON path in ``text`` to the line its value starts on."""
    decoder = json.JSONDecoder()
    lines: dict[tuple, int] = {}

    def ws(i):
        while i < len(text) and text[i] in " \t\r\n":
            i += 1
        return i

    def value(i, path):
        i = ws(i)
        lines[path] = text.count("\n", 0, i) + 1
        ch = text[i]
        if ch == "{":
            i = ws(i + 1)
            if text[i] == "}":
                return i + 1
            while True:
                key, i = json.decoder.scanstring(text, ws(i) + 1)
                i = ws(i) + 1  # colon
                i = ws(value(i, path + (key,)))
                if text[i] == "}":
                    return i + 1
                i += 1  # comma
        if ch == "[":
            i = ws(i + 1)
            if text[i] == "]":
                return i + 1
            k = 0
            while True:
                i = ws(value(i, path + (k,)))
                k += 1
                if text[i] == "]":
                    return i + 1
                i += 1
        _, end = decoder.raw_decode(text, i)
        return end

    value(0, ())
    return lines


class _Reader:
    """Walks a decoded document and reports errors with field path and line."""

    def __init__(self, text: str):
        self.text = text
        self._lines: dict[tuple, int] | None = None

    def fail(self, path: tuple, message: str):
        if self._lines is None:
            self._lines = _line_index(self.text)
        # fall back to the nearest recorded ancestor, e.g. for missing keys
        p = path
        while p and p not in self._lines:
            p = p[:-1]
        line = self._lines.get(p)
        field = ".".join(str(k) for k in path) or "<root>"
        raise ProblemFileError(message, field=field, line=line)

    def obj(self, node, path, allowed: set[str]) -> dict:
        if not isinstance(node, dict):
            self.fail(path, "expected an object")
        for key in node:
            if key not in allowed:
                self.fail(path + (key,), f"unsupported key {key!r}")
        return node

    def number(self, node, path) -> float:
        if isinstance(node, bool) or not isinstance(node, (int, float)) or not math.isfinite(node):
            self.fail(path, "expected a finite number")
        return float(node)

    def integer(self, node, path, minimum: int = 0) -> int:
        if isinstance(node, bool) or not isinstance(node, int) or node < minimum:
            self.fail(path, f"expected an integer >= {minimum}")
        return node

    def array(self, node, path) -> list:
        if not isinstance(node, list):
            self.fail(path, "expected an array")
        return node

    def vector(self, node, path, size: int | None = None) -> np.ndarray:
        items = self.array(node, path)
        if size is not None and len(items) != size:
            self.fail(path, f"expected {size} entries, got {len(items)}")
        return np.array([self.number(v, path + (k,)) for k, v in enumerate(items)])

    def matrix(self, node, path, shape: tuple[int | None, int]) -> np.ndarray:
        rows = self.array(node, path)
        if shape[0] is not None and len(rows) != shape[0]:
            self.fail(path, f"expected {shape[0]} rows, got {len(rows)}")
        if not rows:
            return np.zeros((0, shape[1]))
        return np.array([self.vector(r, path + (k,), shape[1]) for k, r in enumerate(rows)])

    def polynomial(self, node, path, n: int, name: str) -> Polynomial:
        terms = []
        for k, term in enumerate(self.array(node, path)):
            tp = path + (k,)
            self.obj(term, tp, TERM_KEYS)
            if "coeff" not in term or "exponents" not in term:
                self.fail(tp, "a term needs 'coeff' and 'exponents'")
            coeff = self.number(term["coeff"], tp + ("coeff",))
            exps = self.array(term["exponents"], tp + ("exponents",))
            if len(exps) != n:
                self.fail(tp + ("exponents",), f"expected {n} exponents, got {len(exps)}")
            terms.append((coeff, [self.integer(e, tp + ("exponents", j)) for j, e in enumerate(exps)]))
        return Polynomial(n, terms, name=name)

    def polynomials(self, doc, key, path, n, prefix) -> tuple[Polynomial, ...]:
        if key not in doc:
            return ()
        return tuple(self.polynomial(p, path + (key, k), n, f"{prefix}{k + 1}")
                     for k, p in enumerate(self.array(doc[key], path + (key,))))

    def phi(self, node, path, m: int) -> ProxFunction:
        self.obj(node, path, {"kind", "lower", "upper", "weight"})
        kind_raw = node.get("kind")
        try:
            kind = ProxKind(kind_raw)
        except ValueError:
            self.fail(path + ("kind",), f"unknown prox kind {kind_raw!r}; "
                      f"expected one of {[k.value for k in ProxKind]}")
        extra = set(node) - {"kind"}
        wanted = {ProxKind.INDICATOR_BOX: {"lower", "upper"},
                  ProxKind.QUADRATIC: {"weight"}}.get(kind, set())
        for key in extra - wanted:
            self.fail(path + (key,), f"{key!r} does not apply to kind {kind.value!r}")
        for key in wanted - extra:
            self.fail(path, f"kind {kind.value!r} needs {key!r}")
        try:
            if kind is ProxKind.INDICATOR_BOX:
                return ProxFunction.box(self.vector(node["lower"], path + ("lower",), m),
                                        self.vector(node["upper"], path + ("upper",), m))
            if kind is ProxKind.QUADRATIC:
                return ProxFunction.quadratic(m, self.number(node["weight"], path + ("weight",)))
            return {ProxKind.L1_NORM: ProxFunction.l1, ProxKind.INDICATOR_ZERO:
                    ProxFunction.indicator_zero, ProxKind.ZERO: ProxFunction.zero}[kind](m)
        except (ContractError, ParameterError) as exc:
            self.fail(path, str(exc))

    def eta(self, doc, r_total: int):
        if "eta" not in doc:
            return None
        node = doc["eta"]
        if isinstance(node, list):
            eta = self.vector(node, ("eta",), r_total)
        else:
            eta = self.number(node, ("eta",))
        if np.any(np.asarray(eta) <= 0):
            self.fail(("eta",), "eta must be strictly positive")
        return eta


def loads_problem(text: str, path: str | None = None) -> ProblemFile:
    """Parse a problem document from a string."""
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProblemFileError(f"invalid JSON: {exc.msg}", line=exc.lineno) from None
    rd = _Reader(text)
    if not isinstance(doc, dict):
        rd.fail((), "the document must be a JSON object")
    if "agents" in doc or "edges" in doc:
        return _network(rd, doc, path)
    return _central(rd, doc, path)


def _dimension(rd: _Reader, doc) -> int:
    if "n" not in doc:
        rd.fail(("n",), "missing required key 'n'")
    return rd.integer(doc["n"], ("n",), minimum=1)


def _central(rd: _Reader, doc: dict, path) -> ProblemFile:
    rd.obj(doc, (), CENTRAL_KEYS)
    n = _dimension(rd, doc)
    if "objective" not in doc:
        rd.fail(("objective",), "missing required key 'objective'")
    f = rd.polynomial(doc["objective"], ("objective",), n, "f")
    g = rd.polynomials(doc, "inequalities", (), n, "g")
    h = rd.polynomials(doc, "equalities", (), n, "h")
    T_node = doc.get("T", "identity")
    if T_node == "identity":
        T = np.eye(n)
    elif isinstance(T_node, str):
        rd.fail(("T",), f"unsupported T {T_node!r}; 'incidence' needs 'agents' and 'edges'")
    else:
        T = rd.matrix(T_node, ("T",), (None, n))
        if T.shape[0] == 0:
            rd.fail(("T",), "T needs at least one row")
    m = T.shape[0]
    phi = rd.phi(doc["phi"], ("phi",), m) if "phi" in doc else ProxFunction.zero(m)
    x_opt = rd.vector(doc["known_optimum"], ("known_optimum",), n) if "known_optimum" in doc else None
    with warnings.catch_warnings():
        # nonaffine equalities are allowed in files; the caller sees the warning on demand
        warnings.simplefilter("ignore")
        try:
            spec = ProblemSpec(n=n, f=f, g=g, h=h, T=T, phi=phi, known_optimum=x_opt,
                               name=str(doc.get("name", Path(path).stem if path else "problem")))
        except (ContractError, ParameterError) as exc:
            rd.fail(("T",) if "rank" in str(exc) else (), str(exc))
    eta = rd.eta(doc, spec.r)
    initial = None
    if "initial" in doc:
        initial = _central_initial(rd, doc["initial"], spec)
    return ProblemFile(spec, initial, eta, path)


def _central_initial(rd: _Reader, node, spec: ProblemSpec) -> PrimalDualState:
    p = ("initial",)
    rd.obj(node, p, {"x", "lambda", "nu", "w"})
    x = rd.vector(node["x"], p + ("x",), spec.n) if "x" in node else np.zeros(spec.n)
    lam = rd.vector(node["lambda"], p + ("lambda",), spec.r) if "lambda" in node else np.ones(spec.r)
    nu = rd.vector(node["nu"], p + ("nu",), spec.s) if "nu" in node else np.zeros(spec.s)
    w = rd.vector(node["w"], p + ("w",), spec.m) if "w" in node else np.zeros(spec.m)
    if np.any(lam <= 0):
        rd.fail(p + ("lambda",), "initial multipliers must be strictly positive")
    return PrimalDualState(x, lam, nu, w)


def _network(rd: _Reader, doc: dict, path) -> ProblemFile:
    rd.obj(doc, (), NETWORK_KEYS)
    n = _dimension(rd, doc)
    for key in ("agents", "edges"):
        if key not in doc:
            rd.fail((key,), f"a network file needs both 'agents' and 'edges'; missing {key!r}")
    if doc.get("T", "incidence") != "incidence":
        rd.fail(("T",), "network files only support T = 'incidence'")
    if "phi" in doc:
        rd.obj(doc["phi"], ("phi",), {"kind"})
        if doc["phi"].get("kind") != ProxKind.INDICATOR_ZERO.value:
            rd.fail(("phi", "kind"), "network files only support phi kind 'indicator_zero'")
    agents = rd.array(doc["agents"], ("agents",))
    if not agents:
        rd.fail(("agents",), "at least one agent is required")
    locals_ = []
    for i, a in enumerate(agents):
        ap = ("agents", i)
        rd.obj(a, ap, AGENT_KEYS)
        if "objective" not in a:
            rd.fail(ap + ("objective",), "missing required key 'objective'")
        locals_.append(LocalProblem(
            rd.polynomial(a["objective"], ap + ("objective",), n, f"f{i + 1}"),
            rd.polynomials(a, "inequalities", ap, n, f"g{i + 1}_"),
            rd.polynomials(a, "equalities", ap, n, f"h{i + 1}_"),
        ))
    edges = []
    for k, e in enumerate(rd.array(doc["edges"], ("edges",))):
        pair = rd.array(e, ("edges", k))
        if len(pair) != 2:
            rd.fail(("edges", k), "an edge is a pair of 0-based node indices")
        edges.append(tuple(rd.integer(v, ("edges", k, j)) for j, v in enumerate(pair)))
    try:
        graph = Graph(len(agents), edges)
    except (ContractError, ParameterError) as exc:
        rd.fail(("edges",), str(exc))
    x_opt = rd.vector(doc["known_optimum"], ("known_optimum",), n) if "known_optimum" in doc else None
    net = NetworkSpec(graph, locals_, n, known_optimum=x_opt,
                      name=str(doc.get("name", Path(path).stem if path else "network")))
    eta = rd.eta(doc, sum(net.r_sizes))
    initial = _network_initial(rd, doc["initial"], net) if "initial" in doc else None
    return ProblemFile(net, initial, eta, path)


def _ragged(rd: _Reader, node, path, sizes: list[int], default: float) -> tuple[np.ndarray, ...]:
    if node is None:
        return tuple(np.full(s, default) for s in sizes)
    rows = rd.array(node, path)
    if len(rows) != len(sizes):
        rd.fail(path, f"expected one list per agent ({len(sizes)}), got {len(rows)}")
    return tuple(rd.vector(r, path + (i,), s) for i, (r, s) in enumerate(zip(rows, sizes)))


def _network_initial(rd: _Reader, node, net: NetworkSpec) -> NetworkState:
    p = ("initial",)
    rd.obj(node, p, {"x", "lambda", "nu", "w"})
    N, n = net.N, net.n
    x = rd.matrix(node["x"], p + ("x",), (N, n)) if "x" in node else np.zeros((N, n))
    w = rd.matrix(node["w"], p + ("w",), (N, n)) if "w" in node else np.zeros((N, n))
    lam = _ragged(rd, node.get("lambda"), p + ("lambda",), net.r_sizes, 1.0)
    nu = _ragged(rd, node.get("nu"), p + ("nu",), net.s_sizes, 0.0)
    for i, l in enumerate(lam):
        if np.any(l <= 0):
            rd.fail(p + ("lambda", i), "initial multipliers must be strictly positive")
    return NetworkState(x, lam, nu, w)


def load_problem_file(path: str | Path) -> ProblemFile:
    """Read and parse a problem file from disk."""
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as exc:
        raise ProblemFileError(f"cannot read {p}: {exc.strerror}") from None
    return loads_problem(text, str(p))


def parse_problem_file(path: str | Path) -> ProblemSpec | NetworkSpec:
    """Parse a problem file and return only the problem."""
    return load_problem_file(path).problem


def problem_to_json(spec: ProblemSpec) -> dict[str, Any]:
    """Serialize a centralized problem whose oracles are all polynomials."""
    parts = [spec.f, *spec.g, *spec.h]
    if not all(isinstance(o, Polynomial) for o in parts):
        raise ContractError("only problems built from polynomials can be written out")
    doc: dict[str, Any] = {
        "name": spec.name,
        "n": spec.n,
        "objective": spec.f.to_json(),
        "inequalities": [o.to_json() for o in spec.g],
        "equalities": [o.to_json() for o in spec.h],
        "T": spec.T.tolist(),
        "phi": {"kind": spec.phi.kind.value},
    }
    if spec.phi.kind is ProxKind.INDICATOR_BOX:
        doc["phi"].update(lower=spec.phi.lower.tolist(), upper=spec.phi.upper.tolist())
    elif spec.phi.kind is ProxKind.QUADRATIC:
        doc["phi"]["weight"] = spec.phi.weight
    if spec.known_optimum is not None:
        doc["known_optimum"] = spec.known_optimum.tolist()
    return doc
