#!/usr/bin/env python3
"""Smoke test for the betapress Python extension.

Builds nothing itself: it expects the cdylib produced by

    cargo build -p betapress-python

and stages it into a temporary directory under the importable name
betapress.so. Run from anywhere inside the repository:

    python3 python/smoke_test.py
"""

import csv
import math
import shutil
import sys
import tempfile
from pathlib import Path


def locate_cdylib(repo_root: Path) -> Path:
    candidates = [
        repo_root / "target" / profile / name
        for profile in ("debug", "release")
        for name in ("libbetapress.so", "libbetapress.dylib", "betapress.dll")
    ]
    for path in candidates:
        if path.exists():
            return path
    sys.exit(
        "betapress cdylib not found; run `cargo build -p betapress-python` first"
    )


def stage_module(cdylib: Path, stage_dir: Path) -> None:
    suffix = ".pyd" if cdylib.suffix == ".dll" else ".so"
    shutil.copy2(cdylib, stage_dir / f"betapress{suffix}")
    sys.path.insert(0, str(stage_dir))


def check(label: str, ok: bool, detail: str = "") -> None:
    tag = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    print(f"{tag} {label}{suffix}")
    if not ok:
        sys.exit(1)


def main() -> None:
    repo_root = Path(__file__).resolve().parent.parent
    with tempfile.TemporaryDirectory() as tmp:
        stage_module(locate_cdylib(repo_root), Path(tmp))
        import betapress

        # Dataset from columns.
        n = 60
        x1 = [0.1 + 0.8 * t / (n - 1) for t in range(n)]
        z1 = [-0.4 + 0.8 * t / (n - 1) for t in range(n)]
        mu = [1 / (1 + math.exp(-(-0.8 + 1.6 * x))) for x in x1]
        y = [min(max(m + 0.02 * math.sin(7.0 * t), 0.02), 0.98) for t, m in enumerate(mu)]
        data = betapress.Dataset(y, [("x1", x1), ("z1", z1)])
        check("dataset construction", len(data) == n and data.column_names == ["x1", "z1"])

        # Fit, estimates, and the report payload.
        fitted = betapress.fit(data, "b1 + b2*x1", precision="g1 + g2*z1")
        check(
            "maximum-likelihood fit",
            fitted.converged and len(fitted.beta_hat) == 2 and len(fitted.gamma_hat) == 2,
            f"iterations={fitted.iterations}",
        )
        check(
            "fitted means in (0, 1)",
            all(0.0 < m < 1.0 for m in fitted.mu_hat) and len(fitted.mu_hat) == n,
        )
        report = fitted.report()
        check(
            "fit report payload",
            report["converged"] and report["model"]["mean"] == "b1 + b2*x1",
        )

        # Diagnostics: statistic family present, leverage sums to the
        # mean-submodel parameter count.
        diag = fitted.diagnose()
        keys = {"p2", "p2_bg", "r2_fc", "r2_lr", "press", "press_bg", "leverage", "lambda"}
        check("diagnostics keys", keys.issubset(diag.keys()))
        check(
            "leverage trace equals mean parameter count",
            abs(sum(diag["leverage"]) - 2.0) < 1e-8,
            f"trace={sum(diag['leverage']):.10f}",
        )
        check(
            "statistics bounded above by one",
            diag["p2"] <= 1.0 and diag["r2_lr"] <= 1.0,
            f"p2={diag['p2']:.4f}, r2_lr={diag['r2_lr']:.4f}",
        )

        # PRESS plot rows.
        rows = fitted.press_plot()
        check(
            "press plot rows",
            len(rows) == n
            and rows[0]["t"] == 1
            and all(r["flagged"] == (r["component"] > r["threshold"]) for r in rows),
        )

        # CSV round trip through a file.
        csv_path = Path(tmp) / "smoke.csv"
        with open(csv_path, "w", newline="") as handle:
            writer = csv.writer(handle)
            writer.writerow(["y", "x1", "z1"])
            for t in range(n):
                writer.writerow([y[t], x1[t], z1[t]])
        loaded = betapress.Dataset.read_csv(str(csv_path), "y")
        refit = betapress.fit(loaded, "b1 + b2*x1", precision="g1 + g2*z1")
        check(
            "csv round trip refits identically",
            abs(refit.log_lik - fitted.log_lik) < 1e-9,
        )

        # Config-file fit against a shipped demo config.
        gas_like = betapress.Dataset(y, [("x1", x1)])
        config_fit = betapress.fit_config(
            gas_like, str(repo_root / "configs" / "gas-logit.toml")
        )
        check("config-file fit", config_fit.converged)

        # Monte Carlo cell, small but real.
        summary = betapress.simulate("s4", 40, seed=7, phi=150, reps=10, include_rows=True)
        check(
            "monte carlo cell",
            summary["completed"] == 10 and len(summary["rows"]) == 10,
            f"p2 mean={summary['stats']['p2']['mean']:.4f}",
        )
        check(
            "scenario catalog exposed",
            "s4" in betapress.scenarios() and "nl-mean" in betapress.scenarios(),
        )

        # Errors surface as Python exceptions.
        try:
            betapress.fit(data, "b1 + b2*nope")
        except ValueError:
            check("unknown covariate raises ValueError", True)
        else:
            check("unknown covariate raises ValueError", False)

    print("all smoke checks passed")


if __name__ == "__main__":
    main()
