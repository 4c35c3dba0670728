"""Strictly-positive-real observer-based state feedback design.

Pipeline on a controllable port-Hamiltonian realization
``dx/dt = J H x + B u, y = B^T H x``:

1. LQR gain ``K`` with energy/power weights ``Q = beta^2 H``,
   ``N = H B / 2``, ``R = B^T H B / (4 beta^2)``;
2. ``Rc = alpha I`` shrunk geometrically until the Hamiltonian matrix
   ``[[A_K, 2 Rc], [-C_K, -A_K^T]]`` has no imaginary-axis eigenvalue and
   the Riccati solution is positive definite with a small residual;
3. ``A_K^T Qc + Qc A_K + 2 Qc Rc Qc + C_K = 0`` solved through the inverse
   form ``P A_K^T + A_K P + 2 Rc + P C_K P = 0``, ``Qc = P^-1``;
4. controller ``dx_c/dt = (Jc - Rc) Qc x_c + L u_c + B_r r``,
   ``y_c = L^T Qc x_c`` with ``L = Qc^-1 K^T``, wired as
   ``u = -y_c + r``, ``u_c = y``.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.signal

from .controllability import ControllableRealization
from .numerics import (
    NumericsError,
    StabilizabilityError,
    dichotomy_margin,
    eigenvalues,
    hamiltonian_matrix,
    solve_care,
    solve_lqr,
)

log = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    def __init__(self, stage: str, message: str, diagnostics=None):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.diagnostics = diagnostics or {}


@dataclass(frozen=True)
class SynthesisConfig:
    beta: float = 10.0
    q_reg: float = 1e-8
    r_reg: float = 1e-8
    alpha0: float = 1.0
    gamma: float = 0.5
    imag_tol: float = 1e-8
    pd_tol: float = 1e-12
    residual_tol: float = 1e-8
    max_iters: int = 60
    coordinates: str = "energy"
    reference_injection: str = "plant"

    def __post_init__(self):
        if not self.beta > 0:
            raise ValueError(f"beta must be positive, got {self.beta}")
        if self.q_reg < 0 or self.r_reg < 0:
            raise ValueError("q_reg and r_reg must be nonnegative")
        if not self.alpha0 > 0:
            raise ValueError(f"alpha0 must be positive, got {self.alpha0}")
        if not 0 < self.gamma < 1:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if int(self.max_iters) != self.max_iters or self.max_iters < 1:
            raise ValueError("max_iters must be an integer >= 1")
        if self.coordinates not in ("energy", "raw"):
            raise ValueError("coordinates must be 'energy' or 'raw'")
        if self.reference_injection not in ("plant", "controller"):
            raise ValueError("reference_injection must be 'plant' or 'controller'")


@dataclass(frozen=True)
class DesignModel:
    """Realization the controller is designed on.

    ``T`` maps plant states of the source realization to design
    coordinates (``z = T x_c``).
    """

    J: np.ndarray
    H: np.ndarray
    B: np.ndarray
    T: np.ndarray

    @property
    def A(self) -> np.ndarray:
        return self.J @ self.H

    @property
    def C(self) -> np.ndarray:
        return self.B.T @ self.H

    @property
    def n(self) -> int:
        return self.J.shape[0]


def design_model(real, coordinates: str = "energy") -> DesignModel:
    """Design realization in raw controllable or energy-normalized coordinates.

    Energy coordinates ``z = Hc^{1/2} x_c`` turn the energy weight into the
    identity; the input/output map is unchanged.
    """
    if isinstance(real, DesignModel):
        return real
    J, H, B = real.Dc, real.Hc, real.Bc
    n = J.shape[0]
    if coordinates == "raw":
        return DesignModel(J, H, B, np.eye(n))
    w, V = np.linalg.eigh(0.5 * (H + H.T))
    if np.min(w) <= 0:
        raise SynthesisError("realization", "energy weight Hc is not positive definite")
    root = (V * np.sqrt(w)) @ V.T
    Jz = root @ J @ root
    Jz = 0.5 * (Jz - Jz.T)
    return DesignModel(Jz, np.eye(n), root @ B, root)


def lqr_weights(model: DesignModel, cfg: SynthesisConfig):
    H, B = model.H, model.B
    b2 = cfg.beta**2
    Q = b2 * H
    N = H @ B / 2
    R = B.T @ H @ B / (4 * b2)
    n, m = B.shape
    qs = np.trace(Q) / n if np.trace(Q) > 0 else 1.0
    rs = np.trace(R) / m if np.trace(R) > 0 else 1.0
    Q = Q + cfg.q_reg * qs * np.eye(n)
    R = R + cfg.r_reg * rs * np.eye(m)
    return 0.5 * (Q + Q.T), N, 0.5 * (R + R.T)


def design_feedback(real, cfg: SynthesisConfig) -> np.ndarray:
    model = design_model(real, cfg.coordinates)
    if not np.any(model.B):
        raise SynthesisError("feedback", "(A, B) is not stabilizable: input map is zero")
    Q, N, R = lqr_weights(model, cfg)
    try:
        K = solve_lqr(model.A, model.B, Q, R, N, imag_tol=cfg.imag_tol)
    except (NumericsError, ValueError) as exc:
        raise SynthesisError("feedback", str(exc)) from exc
    return K


def feedback_matrices(model: DesignModel, K):
    """``(A_K, C_K)`` for a given state-feedback gain."""
    A_K = model.A - model.B @ K
    HBK = model.H @ model.B @ K
    C_K = -(HBK.T + HBK)
    return A_K, C_K


def solve_design_are(A_K, C_K, Rc, imag_tol: float = 1e-8, residual_tol: float = 1e-8):
    """Solve the controller Riccati equation in inverse form.

    Returns ``(Qc, info)``; ``info`` carries the residual of the direct form
    and the smallest eigenvalue of ``Qc``.
    """
    sol = solve_care(A_K.T, C_K, 2 * Rc, imag_tol=imag_tol)
    P = sol.X
    wP = np.linalg.eigvalsh(P)
    if wP[0] <= 0:
        raise SynthesisError(
            "riccati", f"inverse-form solution is not positive definite (min eig {wP[0]:.3e})",
            {"min_eig_P": float(wP[0])},
        )
    Qc = np.linalg.inv(P)
    Qc = 0.5 * (Qc + Qc.T)
    res = A_K.T @ Qc + Qc @ A_K + 2 * Qc @ Rc @ Qc + C_K
    nQ = np.linalg.norm(Qc)
    scale = 2 * np.linalg.norm(A_K) * nQ + 2 * nQ**2 * np.linalg.norm(Rc) + np.linalg.norm(C_K)
    info = {
        "residual": float(np.linalg.norm(res)),
        "residual_scale": float(scale),
        "inverse_residual": sol.residual_norm,
        "inverse_scale": sol.scale,
        "min_eig_Qc": float(1 / wP[-1]),
        "max_eig_Qc": float(1 / wP[0]),
        "stabilizing": sol.stabilizing,
    }
    if info["residual"] > residual_tol * scale:
        raise SynthesisError(
            "riccati",
            f"direct-form residual {info['residual']:.3e} exceeds {residual_tol:.1e} * {scale:.3e}",
            info,
        )
    return Qc, info


def tune_rc(A_K, C_K, cfg: SynthesisConfig):
    """Geometric search for ``Rc = alpha I``.

    Returns ``(alpha, Qc, history)`` where ``history`` lists one record per
    tried ``alpha``.
    """
    n = A_K.shape[0]
    alpha = cfg.alpha0
    history = []
    for it in range(int(cfg.max_iters)):
        Rc = alpha * np.eye(n)
        Hm = hamiltonian_matrix(A_K, 2 * Rc, C_K)
        margin, normH = dichotomy_margin(Hm)
        rec = {"iter": it, "alpha": alpha, "hm_min_abs_real": margin, "hm_norm": normH}
        if margin <= cfg.imag_tol * normH:
            rec["status"] = "imaginary-axis eigenvalue"
            history.append(rec)
            alpha *= cfg.gamma
            continue
        try:
            Qc, info = solve_design_are(A_K, C_K, Rc, cfg.imag_tol, cfg.residual_tol)
        except (SynthesisError, NumericsError) as exc:
            rec["status"] = str(exc)
            history.append(rec)
            alpha *= cfg.gamma
            continue
        rec.update(info)
        if info["min_eig_Qc"] <= cfg.pd_tol * info["max_eig_Qc"]:
            rec["status"] = "Qc not positive definite"
            history.append(rec)
            alpha *= cfg.gamma
            continue
        rec["status"] = "accepted"
        history.append(rec)
        return alpha, Qc, history
    raise SynthesisError(
        "rc-loop",
        f"no admissible Rc after {cfg.max_iters} iterations (last alpha {alpha / cfg.gamma:.3e}: "
        f"{history[-1]['status'] if history else 'none'})",
        {"history": history},
    )


@dataclass(frozen=True)
class LinearController:
    """``dx_c/dt = Ac x_c + L u_c + Br r``, ``y_c = Cc x_c``.

    ``K`` is the state-feedback gain in design coordinates and ``T`` maps
    states of the design plant to design coordinates, which the
    full-state-feedback baseline uses.
    """

    Ac: np.ndarray
    L: np.ndarray
    Cc: np.ndarray
    Br: np.ndarray
    K: np.ndarray
    T: np.ndarray
    kind: str
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Ac.shape[0]

    @property
    def m(self) -> int:
        return self.L.shape[1]

    def storage(self, xc) -> float:
        return 0.0


@dataclass(frozen=True)
class PassiveController(LinearController):
    Qc: np.ndarray = None
    Rc: np.ndarray = None
    Jc: np.ndarray = None
    alpha: float = float("nan")

    def storage(self, xc) -> float:
        xc = np.asarray(xc, dtype=float)
        return 0.5 * float(xc @ self.Qc @ xc)

    def certify(self, tol_skew: float = 1e-9, tol_rc: float = 1e-7, tol_gain: float = 1e-9) -> dict:
        """Numerical SPR certificate; raises :class:`SynthesisError` on failure."""
        Qc, Rc, Jc = self.Qc, self.Rc, self.Jc
        P = np.linalg.inv(Qc)
        cert = {
            "Qc_min_eig": float(np.linalg.eigvalsh(Qc)[0]),
            "Rc_min_eig": float(np.linalg.eigvalsh(Rc)[0]),
            "Jc_skew": float(np.linalg.norm(Jc + Jc.T) / max(np.linalg.norm(Jc), 1e-300)),
            "L_rel": float(
                np.linalg.norm(self.L - P @ self.K.T) / max(np.linalg.norm(self.L), 1e-300)
            ),
        }
        Ac = (Jc - Rc) @ Qc
        sym = -0.5 * (Ac @ P + P @ Ac.T)
        cert["Rc_rel"] = float(np.linalg.norm(sym - Rc) / np.linalg.norm(Rc))
        failures = []
        if cert["Qc_min_eig"] <= 0:
            failures.append("Qc not positive definite")
        if cert["Rc_min_eig"] <= 0:
            failures.append("Rc not positive definite")
        if cert["Jc_skew"] > tol_skew:
            failures.append("Jc not skew")
        if cert["Rc_rel"] > tol_rc:
            failures.append("Rc not recovered")
        if cert["L_rel"] > tol_gain:
            failures.append("L != Qc^-1 K^T")
        if failures:
            raise SynthesisError("certify", "; ".join(failures), cert)
        return cert


def build_obsf(real, K, Qc, Rc, cfg: SynthesisConfig | None = None) -> PassiveController:
    cfg = cfg or SynthesisConfig()
    model = design_model(real, cfg.coordinates)
    K = np.asarray(K, dtype=float)
    P = np.linalg.inv(Qc)
    P = 0.5 * (P + P.T)
    L = P @ K.T
    A_K = model.A - model.B @ K
    Ac = A_K - L @ model.C
    AcP = Ac @ P
    Jc = 0.5 * (AcP - AcP.T)
    Br = model.B if cfg.reference_injection == "plant" else L
    ctrl = PassiveController(
        Ac=(Jc - Rc) @ Qc,
        L=L,
        Cc=L.T @ Qc,
        Br=Br,
        K=K,
        T=model.T,
        kind="passive",
        meta={},
        Qc=Qc,
        Rc=Rc,
        Jc=Jc,
        alpha=float(Rc[0, 0]),
    )
    # Ac from the feedback design and from the PH form must agree.
    mismatch = np.linalg.norm(ctrl.Ac - Ac) / max(np.linalg.norm(Ac), 1e-300)
    cert = ctrl.certify()
    cert["Ac_mismatch"] = float(mismatch)
    if mismatch > 1e-6:
        raise SynthesisError("certify", f"PH form does not reproduce A_K - L C (rel {mismatch:.2e})", cert)
    ctrl.meta.update(cert)
    return ctrl


@dataclass
class SynthesisResult:
    controller: PassiveController
    K: np.ndarray
    A_K: np.ndarray
    C_K: np.ndarray
    alpha: float
    history: list
    report: dict


def synthesize(real: ControllableRealization, cfg: SynthesisConfig | None = None, force: bool = False) -> SynthesisResult:
    """Run the full design pipeline on a controllable realization."""
    cfg = cfg or SynthesisConfig()
    if not getattr(real, "bcbar_ok", True) and not force:
        raise SynthesisError(
            "realization",
            "inputs act on constraint coordinates (|Bcbar| above tolerance); use force to override",
        )
    model = design_model(real, cfg.coordinates)
    K = design_feedback(model, cfg)
    A_K, C_K = feedback_matrices(model, K)
    lam_K = eigenvalues(A_K)
    alpha, Qc, history = tune_rc(A_K, C_K, cfg)
    ctrl = build_obsf(model, K, Qc, alpha * np.eye(model.n), cfg)
    ctrl.meta.update({"beta": cfg.beta, "alpha": alpha, "coordinates": cfg.coordinates})
    accepted = history[-1]
    report = {
        "N": int(real.N) if hasattr(real, "N") else model.n,
        "nc": model.n,
        "n_inputs": int(model.B.shape[1]),
        "beta": cfg.beta,
        "alpha": alpha,
        "rc_iterations": len(history),
        "A_K_max_real": float(np.max(lam_K.real)),
        "A_K_min_real": float(np.min(lam_K.real)),
        "riccati_residual": accepted["residual"],
        "riccati_scale": accepted["residual_scale"],
        "hm_min_abs_real": accepted["hm_min_abs_real"],
        "certificate": {k: v for k, v in ctrl.meta.items() if k not in ("beta", "alpha", "coordinates")},
    }
    return SynthesisResult(ctrl, K, A_K, C_K, alpha, history, report)


# --- non-passive baseline ------------------------------------------------

# fast enough that spillover on a refined plant shows up within seconds
DEFAULT_OBSERVER_WEIGHT = 100.0


def observer_gain(model: DesignModel, pole_spec=None) -> np.ndarray:
    """Luenberger gain ``L`` for ``(A, C)``.

    ``pole_spec`` is either a sequence of desired observer poles (pole
    placement on the dual pair) or a mapping ``{"weight": w}`` for a dual
    LQR with ``Q_o = w I`` and ``R_o = I`` (default
    ``DEFAULT_OBSERVER_WEIGHT``).
    """
    A, C = model.A, model.C
    n = A.shape[0]
    if pole_spec is None or isinstance(pole_spec, dict):
        weight = float((pole_spec or {}).get("weight", DEFAULT_OBSERVER_WEIGHT))
        try:
            Lt = solve_lqr(A.T, C.T, weight * np.eye(n), np.eye(C.shape[0]))
        except StabilizabilityError as exc:
            raise SynthesisError("observer", f"(A, C) is not observable: {exc}") from exc
        return Lt.T
    poles = np.asarray(pole_spec, dtype=complex)
    if n == 1 and C.shape[0] == 1:
        if C[0, 0] == 0:
            raise SynthesisError("observer", "(A, C) is not observable")
        return np.array([[(A[0, 0] - poles[0].real) / C[0, 0]]])
    try:
        res = scipy.signal.place_poles(A.T, C.T, poles)
    except ValueError as exc:
        raise SynthesisError("observer", f"pole placement failed: {exc}") from exc
    return res.gain_matrix.T


def luenberger_obsf(real, K, pole_spec=None, cfg: SynthesisConfig | None = None) -> LinearController:
    cfg = cfg or SynthesisConfig()
    model = design_model(real, cfg.coordinates)
    K = np.asarray(K, dtype=float)
    L = observer_gain(model, pole_spec)
    Ac = model.A - model.B @ K - L @ model.C
    return LinearController(
        Ac=Ac, L=L, Cc=K, Br=model.B, K=K, T=model.T, kind="luenberger", meta={"pole_spec": repr(pole_spec)}
    )


# --- serialization -------------------------------------------------------


def _arr(a):
    return None if a is None else np.asarray(a).tolist()


def save_controller(ctrl: LinearController, path, provenance: dict | None = None) -> None:
    """JSON text: kind, dimensions, matrices (row-major lists) and provenance."""
    doc = {
        "format": "mindlin-ph-controller/1",
        "kind": ctrl.kind,
        "n": ctrl.n,
        "m": ctrl.m,
        "alpha": getattr(ctrl, "alpha", None),
        "matrices": {
            name: _arr(getattr(ctrl, name, None))
            for name in ("Ac", "L", "Cc", "Br", "K", "T", "Qc", "Rc", "Jc")
        },
        "provenance": provenance or {},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, sort_keys=True, indent=1, default=float)
        fh.write("\n")


def load_controller(path) -> LinearController:
    with open(path) as fh:
        doc = json.load(fh)
    mats = {k: (None if v is None else np.array(v, dtype=float)) for k, v in doc["matrices"].items()}
    common = {k: mats[k] for k in ("Ac", "L", "Cc", "Br", "K", "T")}
    if doc["kind"] == "passive":
        return PassiveController(
            **common, kind="passive", meta=dict(doc.get("provenance", {})),
            Qc=mats["Qc"], Rc=mats["Rc"], Jc=mats["Jc"], alpha=doc["alpha"],
        )
    return LinearController(**common, kind=doc["kind"], meta=dict(doc.get("provenance", {})))
