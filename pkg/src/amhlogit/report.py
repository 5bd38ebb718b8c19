"""Run reports: a JSON-serialisable document plus an aligned text rendering."""
from __future__ import annotations

import json
import math

import numpy as np

from . import __version__
from .association import latent_cross_moment, observed_odds_ratios, odds_ratio_table
from .data import Dataset
from .estimation import FitResult
from .observed import CellTable, goodness_of_fit

__all__ = [
    "provenance",
    "estimate_rows",
    "fit_report",
    "expected_counts",
    "predict_report",
    "assoc_report",
    "render",
    "dumps",
]


def provenance(data: Dataset | None, seed: int | None, command: str) -> dict:
    return {
        "command": command,
        "version": __version__,
        "seed": seed,
        "input_digest": None if data is None else data.digest,
    }


def _num(v):
    v = float(v)
    return v if math.isfinite(v) else None


def estimate_rows(fit: FitResult, level: float = 0.95) -> list[dict]:
    """One row per parameter with SE and CI, or an explicit unavailability marker.

    omega rows are reported on the omega scale (tanh of the zeta interval).
    """
    rows = []
    for r in fit.summary(level):
        ok = all(math.isfinite(r[k]) for k in ("se", "lower", "upper"))
        rows.append({
            "name": r["name"],
            "estimate": _num(r["estimate"]),
            "se": _num(r["se"]) if ok else None,
            "lower": _num(r["lower"]) if ok else None,
            "upper": _num(r["upper"]) if ok else None,
            "fixed": False,
            "note": "" if ok else "standard error unavailable (singular information)",
        })
    est = fit.estimates
    if est.shared:
        for name in ("l2", "l12"):
            rows.append({"name": name, "estimate": None, "se": None, "lower": None, "upper": None,
                         "fixed": True, "note": "tied by the shared-intercept model"})
    return rows


def _re_section(fit: FitResult) -> dict:
    from .mixed import random_effect_summary

    est = fit.estimates
    out = {"D": est.re_covariance.tolist(), "boundary": fit.boundary, "gh_order": fit.gh_order}
    comps = {}
    for name, d in random_effect_summary(fit).items():
        comps[name] = {"estimate": _num(d.estimate), "se": _num(d.se), "lower": _num(d.lower), "upper": _num(d.upper)}
    out["components"] = comps
    return out


def expected_counts(fit: FitResult, data: Dataset) -> np.ndarray:
    """Model-expected 2 x K counts summed over the design rows of ``data``.

    Mixed fits use the population (random-effect integrated) probabilities.
    """
    est = fit.estimates
    if data.k_levels != est.k_levels:
        raise ValueError(f"fit has K={est.k_levels} but data has K={data.k_levels}")
    for attr, size in (("z1", est.beta_x.size), ("z2", est.beta_y.size), ("z_omega", est.zeta.size)):
        if getattr(data, attr).shape[1] != size:
            raise ValueError(f"design column count for {attr} does not match the fit")
    design = np.column_stack([data.z1, data.z2, data.z_omega])
    uniq, inv = np.unique(design, axis=0, return_inverse=True)
    inv = inv.ravel()
    totals = np.bincount(inv, weights=data.weight, minlength=uniq.shape[0])
    p1, p2 = data.z1.shape[1], data.z2.shape[1]
    table = np.zeros((2, data.k_levels))
    for row, n in zip(uniq, totals):
        z1, z2, zw = row[:p1], row[p1 : p1 + p2], row[p1 + p2 :]
        table += n * _cell_probs(est, z1, z2, zw, fit.gh_order)
    return table


def _cell_probs(est, z1, z2, zw, order):
    if est.has_random_effects:
        from .mixed import population_cell_probabilities

        return population_cell_probabilities(est, z1, z2, zw, order=order or 20).values
    from .core import AmhParams
    from .observed import Thresholds, cell_probabilities

    p = AmhParams(float(np.tanh(zw @ est.zeta)), float(z1 @ est.beta_x), float(z2 @ est.beta_y))
    return cell_probabilities(Thresholds(est.theta, est.tau), p).values


def _omega_groups(fit: FitResult) -> list[dict]:
    rows = []
    for r in fit.summary():
        if r["name"].startswith("omega["):
            rows.append({"group": r["name"][6:-1], "omega": _num(r["estimate"]), "lower": _num(r["lower"]),
                         "upper": _num(r["upper"])})
    return rows


def fit_report(fit: FitResult, data: Dataset, seed: int | None = None) -> dict:
    doc = {
        "provenance": provenance(data, seed, "fit"),
        "converged": fit.converged,
        "message": fit.message,
        "loglik": fit.loglik,
        "n_obs": fit.n_obs,
        "gradient_norm": fit.gradient_norm,
        "estimates": estimate_rows(fit),
        "fit": fit.to_dict(),
    }
    groups = _omega_groups(fit)
    if groups:
        doc["omega_by_group"] = groups
    if fit.estimates.has_random_effects:
        doc["random_effects"] = _re_section(fit)
    return doc


def predict_report(fit: FitResult, data: Dataset, seed: int | None = None) -> dict:
    observed = data.counts()
    expected = expected_counts(fit, data)
    doc = {
        "provenance": provenance(data, seed, "predict"),
        "observed": observed.tolist(),
        "expected": expected.tolist(),
        "chi_square": goodness_of_fit(CellTable(observed, "counts"), CellTable(expected, "counts")),
    }
    return doc


def _or_rows(fit, z_omega=None):
    return [
        {"k": s.level, "psi": s.psi, "lower": s.ci[0], "upper": s.ci[1], "log_psi_se": s.log_psi_se}
        for s in odds_ratio_table(fit, z_omega=z_omega)
    ]


def assoc_report(fit: FitResult, data: Dataset | None = None, sigma_x: float = 1.0,
                 sigma_y: float = 1.0, seed: int | None = None) -> dict:
    """Predicted global odds ratios with intervals, observed ORs and the latent cross-moment."""
    est = fit.estimates
    doc = {"provenance": provenance(data, seed, "assoc")}
    if est.zeta.size == 1:
        doc["odds_ratios"] = _or_rows(fit)
    else:
        doc["odds_ratios_by_group"] = {
            name: _or_rows(fit, z_omega=np.eye(est.zeta.size)[j])
            for j, name in enumerate(fit.z_omega_names or range(est.zeta.size))
        }
    if data is not None:
        doc["observed_odds_ratios"] = observed_odds_ratios(data).tolist()
    if est.zeta.size == 1:
        cm = latent_cross_moment(fit)
        doc["latent_cross_moment"] = {"estimate": cm.estimate, "se": cm.se, "lower": cm.lower, "upper": cm.upper}
        if sigma_x != 1.0 or sigma_y != 1.0:
            sc = latent_cross_moment(fit, sigma_x=sigma_x, sigma_y=sigma_y)
            doc["latent_cross_moment_scaled"] = {
                "sigma_x": sigma_x, "sigma_y": sigma_y,
                "estimate": sc.estimate, "se": sc.se, "lower": sc.lower, "upper": sc.upper,
            }
    return doc


def dumps(doc: dict) -> str:
    """Strict JSON; non-finite numbers become null."""
    return json.dumps(_clean(doc), indent=2, allow_nan=False, default=_json_default) + "\n"


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def _json_default(obj):
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def _fmt(v, width=10, digits=4):
    if v is None:
        return "-".rjust(width)
    if isinstance(v, str):
        return v.rjust(width)
    return f"{v:{width}.{digits}f}"


def _table(header, rows, first=14):
    lines = [header[0].ljust(first) + "".join(h.rjust(10) for h in header[1:])]
    for r in rows:
        lines.append(str(r[0]).ljust(first) + "".join(_fmt(v) for v in r[1:]))
    return lines


def render(doc: dict) -> str:
    """Aligned plain-text rendering of any report document."""
    out = []
    prov = doc.get("provenance", {})
    out.append(f"amhlogit {prov.get('version')}  {prov.get('command')}  seed={prov.get('seed')}")
    if prov.get("input_digest"):
        out.append(f"input sha256 {prov['input_digest']}")
    if "estimates" in doc:
        out.append(f"loglik {doc['loglik']:.4f}  n={doc['n_obs']:g}  converged={doc['converged']}")
        out.append("")
        rows = []
        for r in doc["estimates"]:
            lo, hi = r["lower"], r["upper"]
            rows.append((r["name"], r["estimate"], r["se"] if not r["fixed"] else "fixed", lo, hi))
        out += _table(("parameter", "estimate", "se", "2.5%", "97.5%"), rows)
    if "random_effects" in doc:
        re = doc["random_effects"]
        out.append("")
        out.append(f"random effects (boundary={re['boundary']}, GH order {re['gh_order']})")
        out += _table(("component", "estimate", "se", "2.5%", "97.5%"),
                      [(k, v["estimate"], v["se"], v["lower"], v["upper"]) for k, v in re["components"].items()])
    if "omega_by_group" in doc:
        out.append("")
        out += _table(("omega group", "omega", "2.5%", "97.5%"),
                      [(g["group"], g["omega"], g["lower"], g["upper"]) for g in doc["omega_by_group"]])
    if "expected" in doc:
        obs, exp = doc["observed"], doc["expected"]
        K = len(exp[0])
        out.append("")
        hdr = ("cell",) + tuple(f"y={k + 1}" for k in range(K))
        rows = []
        for x in (0, 1):
            rows.append((f"x={x} observed",) + tuple(obs[x]))
            rows.append((f"x={x} expected",) + tuple(exp[x]))
        out += _table(hdr, rows, first=16)
        out.append(f"chi-square {doc['chi_square']:.4f}")
    if "odds_ratios" in doc:
        out.append("")
        obs = doc.get("observed_odds_ratios")
        rows = [
            (f"k={r['k']}", obs[r["k"] - 1] if obs else None, r["psi"], r["lower"], r["upper"])
            for r in doc["odds_ratios"]
        ]
        out += _table(("level", "observed", "predicted", "2.5%", "97.5%"), rows)
    if "odds_ratios_by_group" in doc:
        for g, rs in doc["odds_ratios_by_group"].items():
            out.append("")
            out.append(f"group {g}")
            out += _table(("level", "predicted", "2.5%", "97.5%"),
                          [(f"k={r['k']}", r["psi"], r["lower"], r["upper"]) for r in rs])
    for key, label in (("latent_cross_moment", "E[X*Y*]"), ("latent_cross_moment_scaled", "E[X*Y*] scaled")):
        if key in doc:
            c = doc[key]
            out.append(f"{label}: {c['estimate']:.4f} [{c['lower']:.4f}, {c['upper']:.4f}]")
    return "\n".join(out) + "\n"

