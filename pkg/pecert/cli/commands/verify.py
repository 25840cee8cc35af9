"""``pecert verify``: independent re-check of a certificate file."""

import argparse
import logging
import math
from fractions import Fraction
from typing import Any, List, Optional

import numpy as np

from pecert.core.errors import ConfigError, DomainError, VerificationError
from pecert.core.io import read_json
from pecert.engine.baselines import RaParams, ra_ns_bound
from pecert.engine.behaviors import JointBehavior
from pecert.engine.pef import Pef, entropy_bound, verify_pef
from pecert.engine.polytope import (
    SVConvention,
    SVSource,
    joint_product_vertices,
    load_polytope,
    sv2_polytope,
)
from pecert.engine.scenario import OutputMap, Scenario
from pecert.schemas.certificate import CertificateFile

logger = logging.getLogger(__name__)

TOTAL_TOL = 1e-9


def register(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("verify", help="Re-verify a certificate")
    parser.add_argument("--certificate", required=True, help="Certificate file")
    parser.add_argument("--polytope", help="Polytope file the PEF was certified on")
    return parser


def load_certificate(path: str) -> CertificateFile:
    return CertificateFile.model_validate(read_json(path, "certificate"))


def _check_total(doc: CertificateFile, expected: float) -> None:
    if not math.isclose(doc.total_bits, expected, rel_tol=TOTAL_TOL, abs_tol=TOTAL_TOL):
        raise VerificationError(
            f"total_bits {doc.total_bits!r} does not recompute (expected {expected!r})"
        )
    if doc.reported_bits != max(0.0, doc.total_bits):
        raise VerificationError("reported_bits is not total_bits clamped at 0")


def _typical_rate(F: Pef, typical: List[float], scenario: Scenario) -> float:
    probs = np.asarray(typical, dtype=float)
    try:
        marginal = probs.reshape(scenario.num_inputs, scenario.num_outputs).sum(axis=1)
        p = JointBehavior(scenario, probs, marginal)
    except (DomainError, ValueError) as exc:
        raise VerificationError(f"invalid typical behavior: {exc}") from exc
    return F.rate(p)


def verify_pe(doc: CertificateFile, polytope_path: Optional[str]) -> None:
    if polytope_path is None:
        raise ConfigError("verifying a pe certificate needs --polytope")
    if doc.pef is None or doc.beta is None or doc.kappa is None:
        raise ConfigError("pe certificate lacks the PEF, beta or kappa")
    if doc.typical_behavior is None:
        raise ConfigError("pe certificate lacks the typical behavior")
    V = load_polytope(polytope_path)
    if doc.polytope_fingerprint and V.fingerprint != doc.polytope_fingerprint:
        raise VerificationError("polytope fingerprint does not match the certificate")
    scenario = Scenario.from_id(doc.scenario)
    dmap = OutputMap.from_spec(scenario, doc.output_map)
    try:
        F = Pef(np.asarray(doc.pef, dtype=float), doc.beta, dmap)
    except DomainError as exc:
        raise VerificationError(f"invalid PEF: {exc.detail}") from exc

    if doc.sv_bias is not None:
        convention = SVConvention(doc.extra.get("sv_convention", SVConvention.box.value))
        inputs = sv2_polytope(SVSource(Fraction(doc.sv_bias)), convention)
        joint = joint_product_vertices(V, inputs, scenario)
        check = verify_pef(F, joint)
        rows = joint.vertices
    else:
        if doc.input_marginal is None:
            raise ConfigError("pe certificate lacks the input distribution")
        check = verify_pef(F, V, doc.input_marginal)
        rows = V.vertices
    if not check.valid:
        witness = rows[check.worst_index]
        raise VerificationError(
            f"PEF condition fails at vertex {check.worst_index}: "
            f"E[F mu(D|Z)^beta] = {check.worst_value:.12g}",
            witness=witness,
        )
    rate = _typical_rate(F, doc.typical_behavior, scenario)
    if not math.isclose(doc.rate, rate, rel_tol=TOTAL_TOL, abs_tol=TOTAL_TOL):
        raise VerificationError(f"rate {doc.rate!r} does not recompute (expected {rate!r})")
    expected = entropy_bound(rate, doc.beta, doc.kappa, doc.epsilon, doc.n, doc.delta_t)
    _check_total(doc, expected.total)
    logger.info("PEF valid on %d vertices, worst margin %.3g", len(rows), check.margin)


def verify_azuma(doc: CertificateFile) -> None:
    gamma = doc.extra.get("gamma")
    if gamma is None or doc.kappa is None:
        raise ConfigError("azuma certificate lacks gamma or kappa")
    penalty = gamma * math.sqrt(2 * doc.n * -math.log(doc.kappa))
    _check_total(doc, doc.n * doc.rate - penalty + math.log2(doc.epsilon - doc.kappa))


def verify_ra_ns(doc: CertificateFile) -> None:
    params = doc.extra.get("params")
    if params is None:
        raise ConfigError("ra-ns certificate lacks its parameters")
    _check_total(doc, ra_ns_bound(RaParams.model_validate(params)).total)


def run(args: argparse.Namespace) -> int:
    doc = load_certificate(args.certificate)
    try:
        if doc.method == "pe":
            verify_pe(doc, args.polytope)
        elif doc.method == "azuma":
            verify_azuma(doc)
        elif doc.method == "ra-ns":
            verify_ra_ns(doc)
        else:
            raise ConfigError(f"unknown certificate method {doc.method!r}")
    except VerificationError as exc:
        print(f"FAIL {doc.method} n={doc.n}: {exc.detail}")
        if exc.witness is not None:
            print(f"witness: {exc.witness}")
        return exc.exit_code
    print(f"PASS {doc.method} n={doc.n} total={doc.total_bits:.12g}")
    return 0
