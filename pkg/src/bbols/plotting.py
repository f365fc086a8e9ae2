"""Matplotlib renderings of sweep curves and theory-bound tables.

Figures are written straight to files; the Agg backend is forced so this
works headless.
"""
import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

STYLE = {
    "figure.figsize": (6.0, 4.2),
    "font.size": 10,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "lines.linewidth": 1.4,
    "lines.markersize": 5,
    "legend.fontsize": 8,
    "savefig.dpi": 150,
    "savefig.bbox": "tight",
}

MARKERS = {
    "OLS-CSS": "s", "BOLS-CSS": "o", "OMP-CSS": "v",
    "BOMP-CSS": "^", "B-OMP-CSS": "x", "B-BOLS-CSS": "*",
}


def _save(fig, path):
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_sweep(points, algorithms, path, xlabel="k", title=None):
    """Recovery probability versus the swept parameter, one line per algorithm."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        xs = [p.abscissa for p in points]
        for label in algorithms:
            ys = [p.success_prob(label) for p in points]
            errs = [p.stderr(label) for p in points]
            ax.errorbar(xs, ys, yerr=errs, marker=MARKERS.get(label, "."), capsize=2, label=label)
        ax.set_xlabel(xlabel)
        ax.set_ylabel("Probability of exact recovery")
        ax.set_ylim(-0.02, 1.02)
        if title:
            ax.set_title(title)
        ax.legend(loc="best")
        return _save(fig, path)


def _column(columns, rows, name):
    i = columns.index(name)
    return [r[i] for r in rows]


def _select(columns, rows, **match):
    keep = []
    for r in rows:
        if all(r[columns.index(k)] == v for k, v in match.items()):
            keep.append(r)
    return keep


def plot_bound_curves(preset, columns, rows, path):
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots()
        if preset in ("fig1a", "fig1b"):
            x = "mu" if preset == "fig1a" else "k"
            xs = _column(columns, rows, x)
            for name, style, label in (("block_lo", "-o", "block-coherence lower"),
                                       ("block_hi", "-s", "block-coherence upper"),
                                       ("existing_lo", "--v", "coherence-only lower"),
                                       ("existing_hi", "--^", "coherence-only upper")):
                ax.plot(xs, _column(columns, rows, name), style, label=label)
            ax.set_xlabel(r"$\mu$" if x == "mu" else "k")
            ax.set_ylabel(r"bounds of $\lambda$")
        elif preset == "fig2":
            plt.close(fig)
            fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.2))
            for ax, panel, x in ((axes[0], "a", "mu"), (axes[1], "b", "k")):
                sub = _select(columns, rows, panel=panel)
                xs = _column(columns, sub, x)
                for name, style, label in (("projection_bound", "-o", "block bound"),
                                           ("existing_bound_1", ":v", "coherence-only 1"),
                                           ("existing_bound_2", "--^", "coherence-only 2")):
                    ax.plot(xs, _column(columns, sub, name), style, label=label)
                ax.set_xlabel(r"$\mu$" if x == "mu" else "k")
                ax.set_ylabel(r"lower bound of $\|P^\perp D_i\|_2$")
                ax.legend(loc="best")
            return _save(fig, path)
        elif preset == "fig3":
            for d in sorted(set(_column(columns, rows, "d"))):
                sub = _select(columns, rows, d=d)
                ys = [c if math.isfinite(c) else math.nan for c in _column(columns, sub, "C_sparsity")]
                ax.plot(_column(columns, sub, "mu"), ys, "-o", label=f"d={d}")
            ax.set_xlabel(r"$\mu$ ($\mu_B=\mu/d$)")
            ax.set_ylabel("reconstructible block sparsity")
        elif preset == "fig4":
            for m in sorted(set(_column(columns, rows, "m"))):
                sub = _select(columns, rows, m=m)
                ps = _column(columns, sub, "p_target")
                line, = ax.plot(ps, _column(columns, sub, "snr_min_radius_db"), "-o", label=f"radius form, m={m}")
                ax.plot(ps, _column(columns, sub, "snr_min_projected_db"), "--", color=line.get_color(),
                        label=f"projected form, m={m}")
            ax.set_xlabel("probability of exact recovery P")
            ax.set_ylabel(r"lower bound of SNR$_{\min}$ (dB)")
        else:
            raise ValueError(f"no plot recipe for {preset!r}")
        ax.legend(loc="best")
        return _save(fig, path)
