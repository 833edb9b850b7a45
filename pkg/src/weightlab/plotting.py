"""Matplotlib figures for reports, rendered off-screen to PNG."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# no Software/date metadata, so repeated runs write identical files
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata=_META)
    plt.close(fig)
    return path


def margins(verdicts, path: Path) -> Path:
    """Worst normalized margin per verdict; negative bars are violations."""
    fig, ax = plt.subplots(figsize=(7, 0.35 * max(len(verdicts), 4) + 1))
    labels = [f"{v.theorem} [{v.witness.get('weight', '')}]" for v in verdicts]
    vals = [v.worst_margin if np.isfinite(v.worst_margin) else 1.0 for v in verdicts]
    colors = ["tab:green" if v.passed else "tab:red" for v in verdicts]
    y = np.arange(len(vals))
    ax.barh(y, vals, color=colors)
    ax.set_yticks(y, labels, fontsize=7)
    ax.set_xscale("symlog", linthresh=1e-6)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("worst margin (rhs - lhs) / rhs")
    return _save(fig, path)


def refinement_traces(estimates, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 4))
    for e in estimates:
        if e.refinement_trace:
            d, v = zip(*e.refinement_trace)
            ax.plot(d, v, marker="o", ms=3, label=e.name)
    ax.set_xlabel("family depth")
    ax.set_ylabel("running sup")
    ax.set_yscale("symlog", linthresh=1e-3)
    ax.legend(fontsize=7)
    return _save(fig, path)


def power_sweep(rows, path: Path) -> Path:
    rows = sorted(rows, key=lambda r: r.eps)
    eps = [r.eps for r in rows]
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(8, 3.5))
    a1.loglog(eps, [r.cp for r in rows], "o-", label="lower end")
    a1.loglog(eps, [r.cp_upper for r in rows], "s--", label="upper end")
    a1.set_xlabel("eps")
    a1.set_ylabel("[w_eps]_Cp")
    a1.legend(fontsize=7)
    a2.semilogx(eps, [r.ratio for r in rows], "o-")
    a2.set_xlabel("eps")
    a2.set_ylabel("[w_eps]_Cp / eps")
    return _save(fig, path)


def level_set_profile(profile, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    lam = np.asarray(profile.lambdas)
    ax.semilogy(lam, np.maximum(profile.measures, 1e-300), "o", ms=3, label="|E_lambda|")
    if profile.fit.defined:
        ax.semilogy(lam, np.exp(profile.fit.intercept + profile.fit.slope * lam), "-", label=f"fit R2={profile.fit.r2:.3f}")
    ax.set_xlabel("lambda")
    ax.legend(fontsize=7)
    return _save(fig, path)


def good_lambda(gammas, fractions, fit, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    inv = 1 / np.asarray(gammas)
    fr = np.asarray(fractions, dtype=float)
    pos = fr > 0
    ax.semilogy(inv[pos], fr[pos], "o-", label="max fraction")
    for x in inv[~pos]:
        ax.axvline(x, color="tab:red", ls=":", lw=0.8)
    if fit.defined:
        ax.semilogy(inv, np.exp(fit.intercept + fit.slope * inv), "--", label=f"fit R2={fit.r2:.3f}")
    ax.set_xlabel("1/gamma (dotted: empty bad set)")
    ax.legend(fontsize=7)
    return _save(fig, path)


def cfi_rows(rows, c: float, path: Path) -> Path:
    fig, ax = plt.subplots(figsize=(6, 3.5))
    x = np.arange(len(rows))
    ax.bar(x - 0.2, [r.ratio for r in rows], 0.4, label="||T*f|| / ||Mf||")
    ax.bar(x + 0.2, [c * r.bound_value for r in rows], 0.4, label="c Phi(max([w]_Cq, 1))")
    ax.set_xticks(x, [r.weight_id for r in rows], fontsize=7, rotation=20)
    ax.legend(fontsize=7)
    return _save(fig, path)
